"""``cftomo`` command line.

Subcommands: ``simulate``, ``estimate``, ``reproduce``, ``check``. Output is
data only (CSV/JSON) for external plotting. Exit codes: 0 success, 2 bad
configuration, 3 numerical failure, 4 I/O failure.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io
from .binning import UnidentifiableError, equal_bins, estimate_link_moments, sd_floor, varying_bins
from .cf_engine import sample_frequencies
from .estimators import BudgetError, ConfigError, EstimatorConfig, fit, fit_mle_discrete, fit_wcf
from .identifiability import (
    counterexample_curves,
    counterexample_joint_cf_gap,
    counterexample_marginal_gap,
    identifiability_check,
)
from .metrics import write_summary_csv
from .qp import QPError
from .sim import Scenario, builtin_scenario, generate, run, run_replication
from .topology import TopologyError, routing_matrix

log = logging.getLogger("cftomo")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

FIGURES = {
    "fig4": ("discrete4", "summary"),
    "fig6": ("exp4", "cdf"),
    "fig7": ("exp4", "summary"),
    "fig8": ("expgamma4", "summary"),
    "fig9": ("weibull8", "cdf"),
    "fig10": (None, "counterexample"),
}


def _seed(args):
    env = os.environ.get("TOMO_SEED")
    if env not in (None, ""):
        return int(env)
    return args.seed


def _out_dir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _scenario(name_or_path, **overrides):
    p = Path(name_or_path)
    if p.suffix == ".json" or p.exists():
        sc = Scenario.from_dict(json.loads(p.read_text()))
        return replace(sc, **overrides) if overrides else sc
    return builtin_scenario(name_or_path, **overrides)


def _config(args, variant="cf"):
    kw = {"variant": variant}
    if getattr(args, "k_frequencies", None):
        kw["k"] = args.k_frequencies
    if getattr(args, "t_scale", None):
        kw["t_scale"] = args.t_scale
    if getattr(args, "k_wcf", None):
        kw["k_wcf"] = args.k_wcf
    return EstimatorConfig(**kw)


def _cdf_columns(links, truth=None, n=400):
    cols = {"link": [], "x": [], "cdf_fit": []}
    if truth is not None:
        cols["cdf_true"] = []
    for j, m in enumerate(links):
        top = float(m.quantile(0.995)) if truth is None else max(float(m.quantile(0.995)), float(truth[j].quantile(0.995)))
        x = np.linspace(0.0, top, n)
        cols["link"] += [j + 1] * n
        cols["x"] += list(x)
        cols["cdf_fit"] += list(m.cdf(x))
        if truth is not None:
            cols["cdf_true"] += list(np.asarray(truth[j].cdf(x), dtype=float))
    return cols


# ---------------------------------------------------------------- commands


def cmd_simulate(args):
    overrides = {"base_seed": _seed(args)}
    if args.n:
        overrides["n_samples"] = args.n
    sc = _scenario(args.scenario, **overrides)
    out = _out_dir(args.out)
    sample = generate(sc, 0)
    io.write_measurements(sample.measurements, out / "measurements.csv")
    io.write_topology(sc.topology, out / "topology.json")
    io.write_models(sample.truth, out / "truth.json", scenario=sc.name, seed=sc.base_seed, note=sc.note)
    print(f"wrote {sample.measurements.N} x {sample.measurements.I} measurements to {out}")
    return EXIT_OK


def cmd_estimate(args):
    topo = io.read_topology(args.topology)
    ms = io.read_measurements(args.measurements, topo)
    A = routing_matrix(topo)
    report = identifiability_check(A)
    if not report.identifiable_up_to_shift:
        log.warning("product matrix rank %d < %d links: link distributions are not identifiable", report.rank, report.J)
    rng = np.random.default_rng(_seed(args))
    out = _out_dir(args.out)

    if args.estimator == "mle":
        points = tuple(range(args.grid_size))
        res = fit_mle_discrete(ms, A, points)
    else:
        cfg = _config(args)
        freqs = sample_frequencies(ms.I, cfg.k, cfg.t_scale, ms.sds, rng)
        moments = estimate_link_moments(ms, A)
        floor = sd_floor(ms)
        specs = [equal_bins(moments, j, args.n_bins, args.zero_atom, floor) for j in range(A.J)]
        res = fit(ms, A, specs, cfg, freqs=freqs)
        if args.bins == "varying":
            for _ in range(args.rounds):
                specs = [varying_bins(m, j, args.n_bins, args.zero_atom) for j, m in enumerate(res.links)]
                res = fit(ms, A, specs, cfg, freqs=freqs)
        if args.estimator == "wcf":
            res = fit_wcf(ms, A, specs, replace(cfg, variant="wcf"), res)
    io.write_result(res, out / "result.json", estimator=args.estimator, bins=args.bins, topology=topo.to_dict())
    io.write_columns(out / "cdf.csv", _cdf_columns(res.links))
    print(f"{args.estimator} fit of {A.J} links: objective {res.objective[-1]:.6g} after {res.iterations} iterations")
    return EXIT_OK


def _write_records(out, records):
    d = out / "replications"
    d.mkdir(exist_ok=True)
    for r in records:
        (d / f"rep{r.index:04d}.json").write_text(json.dumps(r.to_dict(), indent=1) + "\n")


def cmd_reproduce(args):
    fig = args.figure
    name, kind = FIGURES[fig]
    out = _out_dir(args.out)
    if kind == "counterexample":
        cf, pdf = counterexample_curves()
        io.write_columns(out / "fig10_cf.csv", cf)
        io.write_columns(out / "fig10_pdf.csv", pdf)
        stats = {"joint_cf_gap": counterexample_joint_cf_gap(), "marginal_cf_gap": counterexample_marginal_gap()}
        (out / "fig10_gap.json").write_text(json.dumps(stats, indent=2) + "\n")
        print(json.dumps(stats))
        return EXIT_OK

    overrides = {"base_seed": _seed(args)}
    if args.reps:
        overrides["replications"] = args.reps
    cfg = {}
    if args.k_frequencies:
        cfg["k"] = args.k_frequencies
    if args.t_scale:
        cfg["t_scale"] = args.t_scale
    if args.k_wcf:
        cfg["k_wcf"] = args.k_wcf
    if cfg:
        overrides["config"] = cfg
    sc = builtin_scenario(name, **overrides)

    if kind == "cdf":
        rec = run_replication(sc, 0)
        if rec.error:
            raise ArithmeticError(rec.error)
        for label, res in rec.fits.items():
            io.write_columns(out / f"{fig}_{label}_cdf.csv", _cdf_columns(res.links, rec.truth))
        means = {k: float(np.mean(v)) for k, v in rec.metrics.items()}
        (out / f"{fig}_mallows.json").write_text(json.dumps({"per_link": {k: list(map(float, v)) for k, v in rec.metrics.items()}, "average": means}, indent=2) + "\n")
        print(json.dumps({"average_normalized_mallows": means}))
        return EXIT_OK

    res = run(sc, jobs=args.jobs)
    write_summary_csv(out / f"{fig}_summary.csv", res.summaries)
    _write_records(out, res.records)
    (out / "scenario.json").write_text(json.dumps(sc.to_dict(), indent=2) + "\n")
    for label, s in res.summaries.items():
        print(f"{label:>16} median per link: " + " ".join(f"{v:.3f}" for v in s.q50))
    if res.failures:
        print(f"{res.failures} replication(s) failed; see replications/*.json")
    return EXIT_OK


def cmd_check(args):
    topo = io.read_topology(args.topology)
    report = identifiability_check(routing_matrix(topo))
    print(json.dumps(report.to_dict()))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="cftomo", description="Link delay tomography from multicast end-to-end delays.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=0, help="base seed (TOMO_SEED overrides)")
        sp.add_argument("--out", default=".", help="output directory")

    def fitting(sp):
        sp.add_argument("--k-frequencies", type=int, default=None)
        sp.add_argument("--t-scale", type=float, default=None)
        sp.add_argument("--k-wcf", type=int, default=None, help="frequencies kept for the WCF weight matrix")

    s = sub.add_parser("simulate", help="draw one measurement set from a scenario")
    s.add_argument("--scenario", required=True, help="built-in name or scenario JSON file")
    s.add_argument("--n", type=int, default=None, help="override the probe count")
    common(s)
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="fit link delay distributions")
    e.add_argument("--measurements", required=True)
    e.add_argument("--topology", required=True)
    e.add_argument("--estimator", choices=("cf", "wcf", "mle"), default="cf")
    e.add_argument("--bins", choices=("equal", "varying"), default="varying")
    e.add_argument("--n-bins", type=int, default=12)
    e.add_argument("--rounds", type=int, default=2, help="quantile re-binning rounds")
    e.add_argument("--zero-atom", action="store_true", help="add a point mass at zero delay")
    e.add_argument("--grid-size", type=int, default=6, help="lattice size for --estimator mle")
    fitting(e)
    common(e)
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("reproduce", help="rerun one of the built-in studies (figure ids fig4 to fig10)")
    r.add_argument("figure", choices=sorted(FIGURES))
    r.add_argument("--reps", type=int, default=20)
    r.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    fitting(r)
    common(r)
    r.set_defaults(func=cmd_reproduce)

    c = sub.add_parser("check", help="identifiability of a topology")
    c.add_argument("--topology", required=True)
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (QPError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, TopologyError, UnidentifiableError, BudgetError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
