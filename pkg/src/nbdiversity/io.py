"""CSV ingestion and serialisation of allele-count datasets.

Two layouts are accepted:

``multiplicity_csv``  columns ``location,locus,j,m_j``  (m_j blocks of size j)
``blocksizes_csv``    columns ``location,locus,block_size`` (one row per block)
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from importlib import resources
from typing import TextIO

from .partitions import PartitionCounts, PartitionError

__all__ = ["AlleleRecord", "AlleleDataset", "DatasetError", "parse_dataset", "serialize_dataset",
           "load_quolls", "FORMATS"]

FORMATS = {
    "multiplicity_csv": ("location", "locus", "j", "m_j"),
    "blocksizes_csv": ("location", "locus", "block_size"),
}


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class AlleleRecord:
    location: str
    locus: str
    blocks: PartitionCounts


@dataclass
class AlleleDataset:
    records: list
    provenance: str = ""

    def __post_init__(self):
        seen = set()
        for rec in self.records:
            key = (rec.location, rec.locus)
            if key in seen:
                raise DatasetError(f"duplicate record for location={rec.location!r}, locus={rec.locus!r}")
            seen.add(key)

    def get(self, location: str, locus: str) -> AlleleRecord:
        for rec in self.records:
            if rec.location == location and rec.locus == locus:
                return rec
        have = ", ".join(f"{r.location}/{r.locus}" for r in self.records)
        raise KeyError(f"no record for {location}/{locus}; available: {have}")

    def __eq__(self, other):
        if not isinstance(other, AlleleDataset):
            return NotImplemented
        return [(r.location, r.locus, r.blocks) for r in self.records] == \
               [(r.location, r.locus, r.blocks) for r in other.records]


def _int_field(value, name, lineno):
    try:
        out = int(value)
    except (TypeError, ValueError):
        raise DatasetError(f"line {lineno}: {name} must be an integer, got {value!r}") from None
    if str(out) != str(value).strip():
        raise DatasetError(f"line {lineno}: {name} must be an integer, got {value!r}")
    return out


def parse_dataset(stream: TextIO | str, format: str = "multiplicity_csv", provenance: str = "") -> AlleleDataset:
    """Parse a CSV stream (or string) into a validated dataset."""
    if format not in FORMATS:
        raise DatasetError(f"unknown format {format!r}; choose from {sorted(FORMATS)}")
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or not any(h.strip() for h in header):
        raise DatasetError("line 1: empty file")
    header = [h.strip() for h in header]
    cols = FORMATS[format]
    if tuple(header) != cols:
        raise DatasetError(f"line 1: expected header {','.join(cols)}, got {','.join(header)}")
    groups: dict[tuple, dict] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != len(cols):
            raise DatasetError(f"line {lineno}: expected {len(cols)} fields, got {len(row)}")
        location, locus = row[0].strip(), row[1].strip()
        if not location or not locus:
            raise DatasetError(f"line {lineno}: location and locus must be nonempty")
        counts = groups.setdefault((location, locus), {})
        if format == "multiplicity_csv":
            j = _int_field(row[2].strip(), "j", lineno)
            m = _int_field(row[3].strip(), "m_j", lineno)
            if j < 1:
                raise DatasetError(f"line {lineno}: j must be >= 1, got {j}")
            if m < 0:
                raise DatasetError(f"line {lineno}: m_j must be >= 0, got {m}")
            if j in counts:
                raise DatasetError(f"line {lineno}: j={j} repeated for {location}/{locus}")
            counts[j] = m
        else:
            b = _int_field(row[2].strip(), "block_size", lineno)
            if b < 1:
                raise DatasetError(f"line {lineno}: block_size must be >= 1, got {b}")
            counts[b] = counts.get(b, 0) + 1
    if not groups:
        raise DatasetError("no data rows")
    records = []
    for (location, locus), counts in groups.items():
        try:
            records.append(AlleleRecord(location, locus, PartitionCounts(counts)))
        except PartitionError as exc:
            raise DatasetError(f"record {location}/{locus}: {exc}") from None
    return AlleleDataset(records, provenance)


def serialize_dataset(dataset: AlleleDataset, format: str = "multiplicity_csv") -> str:
    """Inverse of :func:`parse_dataset` (LF line endings)."""
    if format not in FORMATS:
        raise DatasetError(f"unknown format {format!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(FORMATS[format])
    for rec in dataset.records:
        if format == "multiplicity_csv":
            for j, m in rec.blocks.items():
                w.writerow([rec.location, rec.locus, j, m])
        else:
            for b in sorted(rec.blocks.block_sizes()):
                w.writerow([rec.location, rec.locus, b])
    return buf.getvalue()


def load_quolls() -> AlleleDataset:
    """Bundled quoll allele counts at loci 1.3 and 3.3.1 (Perth, Batalling)."""
    text = resources.files("nbdiversity").joinpath("data/quolls.csv").read_text(encoding="utf-8")
    return parse_dataset(text, "multiplicity_csv", provenance="bundled quolls.csv (multiplicity form)")
