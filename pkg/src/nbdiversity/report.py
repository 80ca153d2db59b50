"""JSON reports, histogram CSVs and SVG renderings of replicate estimates."""
from __future__ import annotations

import csv
import json
import math
import os
import sys

import numpy as np

SCHEMA_VERSION = 1

__all__ = ["SCHEMA_VERSION", "grid_histogram", "write_histogram_csv", "render_histograms", "dump_json"]


def grid_histogram(values, grid_values=None):
    """Histogram of estimates; bins centred on grid values when supplied.

    Returns ``(edges, counts)`` with ``counts.sum() == len(values)``.
    """
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ValueError("no values to histogram")
    if grid_values is None or len(grid_values) < 2:
        edges = np.histogram_bin_edges(x, bins="auto")
    else:
        g = np.asarray(sorted(grid_values), dtype=float)
        lo = np.searchsorted(g, x.min() - 1e-9)
        hi = np.searchsorted(g, x.max() + 1e-9)
        g = g[max(lo - 1, 0):min(hi + 1, g.size)]
        if g.size < 2:
            g = np.asarray(sorted(grid_values), dtype=float)[:2]
        mids = (g[1:] + g[:-1]) / 2
        edges = np.concatenate(([g[0] - (mids[0] - g[0])], mids, [g[-1] + (g[-1] - mids[-1])]))
    counts, edges = np.histogram(x, bins=edges)
    return edges, counts


def write_histogram_csv(path, edges, counts):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin_left", "bin_right", "count"])
        for a, b, c in zip(edges[:-1], edges[1:], counts):
            w.writerow([repr(float(a)), repr(float(b)), int(c)])


def render_histograms(panels, path, title=None):
    """Write an SVG grid of histograms; ``panels`` rows are lists of (label, edges, counts)."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    nrows = len(panels)
    ncols = max(len(row) for row in panels)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.2 * ncols, 3.2 * nrows), squeeze=False)
    for i, row in enumerate(panels):
        for j in range(ncols):
            ax = axes[i][j]
            if j >= len(row):
                ax.axis("off")
                continue
            label, edges, counts = row[j]
            ax.stairs(counts, edges, fill=True, color="0.6", edgecolor="0.2")
            ax.set_title(label, fontsize=10)
            ax.set_ylabel("count")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_json(report: dict, out=None):
    """Write ``report`` (plus schema_version) as UTF-8 JSON to ``out`` or stdout."""
    payload = {"schema_version": SCHEMA_VERSION}
    payload.update(report)
    text = json.dumps(_clean(payload), indent=2, ensure_ascii=False) + "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        d = os.path.dirname(os.path.abspath(out))
        os.makedirs(d, exist_ok=True)
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return payload
