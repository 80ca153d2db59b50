"""Command-line interface: ``nbdiversity <command> [options]``.

Exit status is 0 on success, 1 on a runtime failure and 2 on a usage error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from . import estimation as est
from .diversity import shannon_entropy
from .esf import Params, eppf, esf_distribution, esf_probability
from .io import DatasetError, load_quolls, parse_dataset
from .partitions import PartitionError, parse_partition
from .report import dump_json, grid_histogram, render_histograms, write_histogram_csv
from .sampling import (
    ConditioningError,
    LevyMeasure,
    SamplerConfig,
    draw_partition,
    nbpp_counts,
    population_probabilities,
    substream,
)


class UsageError(Exception):
    pass


def _grid_values(text, name):
    """'lo:hi:step' or a comma list."""
    if text is None:
        return None
    try:
        if ":" in text:
            lo, hi, step = (float(x) for x in text.split(":"))
            if step <= 0 or hi < lo:
                raise ValueError
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            digits = max(0, -int(math.floor(math.log10(step))) + 2)
            return [round(lo + i * step, digits) for i in range(count)]
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--{name}: expected 'lo:hi:step' or a comma list, got {text!r}") from None


def _need(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise UsageError(f"{args.command} requires " + ", ".join("--" + m for m in missing))


def _params(args):
    _need(args, "alpha", "r")
    return Params(args.alpha, args.r)


def _dataset(args):
    if args.data is None:
        return load_quolls()
    with open(args.data, encoding="utf-8", newline="") as fh:
        return parse_dataset(fh, args.format, provenance=args.data)


def _records(args, allow_all_locations=False):
    data = _dataset(args)
    if args.locus is None:
        raise UsageError(f"{args.command} requires --locus")
    if args.location is None:
        if not allow_all_locations:
            raise UsageError(f"{args.command} requires --location")
        recs = [r for r in data.records if r.locus == args.locus]
        if not recs:
            raise KeyError(f"no records for locus {args.locus}")
        return recs
    return [data.get(args.location, args.locus)]


def _grid(args):
    kw = {"replicates_L": args.L}
    a = _grid_values(args.grid_alpha, "grid-alpha")
    r = _grid_values(args.grid_r, "grid-r")
    if a is not None:
        kw["alpha_values"] = a
    if r is not None:
        kw["r_values"] = r
    return est.GridSpec(**kw)


def _cfg(args):
    return SamplerConfig(truncation_J=args.J, seed=args.seed, trim=args.trim,
                         max_attempts=args.max_attempts,
                         common_random_numbers=not args.no_crn)


def _artifact_base(args, default):
    if args.out and args.out != "-":
        root, _ = os.path.splitext(args.out)
        return root
    return os.path.join(args.artifact_dir, default)


def _emit_histograms(base, rows, title):
    """rows: list of (label, {name: (values, grid)}) -> CSV per panel + one SVG."""
    files, panels = [], []
    for label, series in rows:
        prow = []
        for name, (values, grid) in series.items():
            edges, counts = grid_histogram(values, grid)
            slug = base + "_" + f"{label}_{name}".replace(" ", "_").replace("/", "_")
            path = slug + "_hist.csv"
            write_histogram_csv(path, edges, counts)
            files.append(path)
            prow.append((f"{name}, {label}", edges, counts))
        panels.append(prow)
    svg = base + "_hist.svg"
    render_histograms(panels, svg, title)
    files.append(svg)
    return files


def cmd_esf(args):
    _need(args, "partition")
    pc = parse_partition(args.partition)
    p = _params(args)
    return {"command": "esf", "alpha": p.alpha, "r": p.r, "partition": str(pc), "n": pc.n, "k": pc.k,
            "probability": esf_probability(p, pc)}


def cmd_eppf(args):
    _need(args, "partition")
    pc = parse_partition(args.partition)
    p = _params(args)
    blocks = pc.block_sizes()
    return {"command": "eppf", "alpha": p.alpha, "r": p.r, "block_sizes": blocks,
            "eppf": eppf(p, blocks)}


def cmd_normalize_check(args):
    _need(args, "n")
    p = _params(args)
    dist = esf_distribution(p, args.n)
    total = math.fsum(q for _, q in dist)
    return {"command": "normalize-check", "alpha": p.alpha, "r": p.r, "n": args.n,
            "partitions": len(dist), "total": total, "abs_error": abs(total - 1.0)}


def cmd_entropy(args):
    if args.partition is not None:
        pc = parse_partition(args.partition)
        label = {"partition": str(pc)}
    else:
        rec = _records(args)[0]
        pc = rec.blocks
        label = {"location": rec.location, "locus": rec.locus}
    h = shannon_entropy(pc)
    return {"command": "entropy", **label, "n": pc.n, "k": pc.k, "entropy_nats": h, "display": f"{h:.2f}"}


def cmd_sample(args):
    _need(args, "alpha", "k", "n")
    cfg = _cfg(args)
    rng = substream(args.seed, 5)
    p = population_probabilities(args.alpha, args.r, args.k, rng, cfg)
    labels = rng.standard_normal(args.k)
    pc = draw_partition(p, args.n, rng)
    return {"command": "sample", "alpha": args.alpha, "r": args.r, "k": args.k, "n": args.n,
            "seed": args.seed, "trim": "none" if args.r is None else cfg.trim,
            "block_probabilities": p, "block_labels": labels,
            "partition": str(pc), "observed_k": pc.k}


def cmd_nbpp_check(args):
    p = _params(args)
    lo, hi = args.interval
    measure = LevyMeasure(p.alpha)
    lam = measure.mass(lo, hi)
    c = nbpp_counts(measure, p.r, [(lo, hi)], args.draws, substream(args.seed, 6))[:, 0].astype(float)
    mean, var = c.mean(), c.var(ddof=1)
    m4 = np.mean((c - mean) ** 4)
    se_mean = math.sqrt(var / c.size)
    se_var = math.sqrt(max(m4 - var ** 2, 0.0) / c.size)
    th_mean, th_var = p.r * lam, p.r * (lam + lam ** 2)
    z_mean, z_var = (mean - th_mean) / se_mean, (var - th_var) / se_var
    return {"command": "nbpp-check", "alpha": p.alpha, "r": p.r, "interval": [lo, hi], "draws": args.draws,
            "seed": args.seed, "lambda": lam, "mean": mean, "theory_mean": th_mean, "z_mean": z_mean,
            "variance": var, "theory_variance": th_var, "z_variance": z_var,
            "within_3se": bool(abs(z_mean) <= 3 and abs(z_var) <= 3)}


def _fit_report(fit, rec):
    d = fit.to_dict()
    d.update({"location": rec.location, "locus": rec.locus, "n": rec.blocks.n, "k": rec.blocks.k,
              "observed": str(rec.blocks)})
    alphas = [a for a, _ in fit.replicate_estimates]
    d["normality"] = {"alpha": est.normality_summary(alphas)}
    if fit.r_hat is not None:
        d["normality"]["r"] = est.normality_summary([r for _, r in fit.replicate_estimates])
    return d


def _cmd_fit(args, baseline):
    recs = _records(args, allow_all_locations=True)
    grid, cfg = _grid(args), _cfg(args)
    t0 = time.perf_counter()
    fits, rows = [], []
    for rec in recs:
        if baseline:
            fit = est.fit_pd_alpha_baseline(rec.blocks, grid, cfg=cfg, replicate_mode=args.replicate_mode)
        else:
            fit = est.fit_grid(rec.blocks, grid, cfg=cfg, replicate_mode=args.replicate_mode)
        fits.append(_fit_report(fit, rec))
        series = {"alpha_hat": ([a for a, _ in fit.replicate_estimates], grid.alpha_values)}
        if not baseline:
            series["r_hat"] = ([r for _, r in fit.replicate_estimates], grid.r_values)
        rows.append((rec.location, series))
    name = "fit-baseline" if baseline else "fit"
    base = _artifact_base(args, f"{name}_{args.locus}")
    files = _emit_histograms(base, rows, f"Resampling histograms, locus {args.locus}")
    out = {"command": name, "locus": args.locus, "fits": fits, "artifacts": files,
           "wall_clock_s": time.perf_counter() - t0}
    if len(fits) == 1:
        out.update({k: fits[0][k] for k in ("alpha_hat", "r_hat", "se_alpha", "se_r")})
    return out


def cmd_fit(args):
    return _cmd_fit(args, baseline=False)


def cmd_fit_baseline(args):
    return _cmd_fit(args, baseline=True)


def cmd_simulate(args):
    _need(args, "k", "n")
    p = _params(args)
    grid, cfg = _grid(args), _cfg(args)
    t0 = time.perf_counter()
    cell = est.simulation_study(p, args.k, args.n, L=args.L, Q=args.Q, N_pop=args.npop, grid=grid,
                                seed=args.seed, cfg=cfg)
    out = {"command": "simulate", "true_alpha": p.alpha, "true_r": p.r, "L": args.L, "Q": args.Q,
           "N_pop": args.npop, "seed": args.seed, "grid": grid.to_dict(), "cell": cell.to_dict()}
    if cell.population_means:
        means = np.asarray(cell.population_means)
        rows = [("population means", {"alpha_hat": (means[:, 0], None), "r_hat": (means[:, 1], None)})]
        out["artifacts"] = _emit_histograms(_artifact_base(args, f"simulate_k{args.k}_n{args.n}"), rows,
                                            f"alpha={p.alpha}, r={p.r}, k={args.k}, n={args.n}")
        out["normality"] = {"alpha": est.normality_summary(means[:, 0]), "r": est.normality_summary(means[:, 1])}
    out["wall_clock_s"] = time.perf_counter() - t0
    return out


COMMANDS = {
    "esf": (cmd_esf, "probability of a multiplicity vector"),
    "eppf": (cmd_eppf, "exchangeable partition probability of the block sizes"),
    "fit": (cmd_fit, "grid-search WLS fit of (alpha, r) with resampling SEs"),
    "fit-baseline": (cmd_fit_baseline, "same fit under the untrimmed PD_alpha sampler"),
    "simulate": (cmd_simulate, "two-level simulation study of the estimator"),
    "sample": (cmd_sample, "draw population weights and one partition"),
    "entropy": (cmd_entropy, "Shannon entropy (nats) of a record or partition"),
    "nbpp-check": (cmd_nbpp_check, "compare NBPP count moments with theory"),
    "normalize-check": (cmd_normalize_check, "sum the sampling formula over all partitions of n"),
}


def build_parser():
    parser = argparse.ArgumentParser(prog="nbdiversity", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--data", help="CSV dataset (default: bundled quolls data)")
        sp.add_argument("--format", default="multiplicity_csv", choices=["multiplicity_csv", "blocksizes_csv"],
                        help="layout of --data")
        sp.add_argument("--location")
        sp.add_argument("--locus")
        sp.add_argument("--alpha", type=float)
        sp.add_argument("--r", type=float)
        sp.add_argument("--partition", help="multiplicities as 'j:m_j,j:m_j,...'")
        sp.add_argument("--n", type=int)
        sp.add_argument("--k", type=int)
        sp.add_argument("--grid-alpha", help="'lo:hi:step' or comma list")
        sp.add_argument("--grid-r", help="'lo:hi:step' or comma list")
        sp.add_argument("--L", type=int, default=1000, help="resamples per grid point")
        sp.add_argument("--J", type=int, default=1000, help="truncation of the Gamma sequence")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--trim", default="gamma", choices=["gamma", "round"],
                        help="offset rule for non-integer r")
        sp.add_argument("--max-attempts", type=int, default=10_000)
        sp.add_argument("--no-crn", action="store_true", help="independent streams per grid point")
        sp.add_argument("--replicate-mode", default="shared", choices=["shared", "fresh"])
        sp.add_argument("--npop", type=int, default=100, help="population redraws (simulate)")
        sp.add_argument("--Q", type=int, default=1, help="resampling rounds per population (simulate)")
        sp.add_argument("--draws", type=int, default=100_000, help="NBPP realisations (nbpp-check)")
        sp.add_argument("--interval", type=float, nargs=2, default=(0.5, 1.0), metavar=("A", "B"))
        sp.add_argument("--artifact-dir", default=".", help="where histogram files go when --out is stdout")
        sp.add_argument("--out", help="JSON report path (default stdout)")
    return parser


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    func = COMMANDS[args.command][0]
    try:
        report = func(args)
        dump_json(report, args.out)
    except UsageError as exc:
        print(f"nbdiversity {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, OSError, ConditioningError, ArithmeticError) as exc:
        kind = "data error" if isinstance(exc, (DatasetError, PartitionError)) else "error"
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"nbdiversity {args.command}: {kind}: {msg}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
