"""Command line entry point: ``gglab {run, convergence-table, check-variance-formula, list-checks}``."""

from __future__ import annotations

import argparse
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from gglab import hermite, report
from gglab.checks import CHECKS

CHECK_HELP = {
    "gg_residual_f1": "GG residual with f = 1; contract |delta| <= 3 se (exchangeability)",
    "gg_residual": "GG residual for a library functional (options n, functional)",
    "self_averaging": "nu|H - nu(H)| with the triangle decomposition as contract",
    "gibbs_h_variance": "E<(H - <H>)^2>",
    "quenched_free_energy": "p_N = E psi_N",
    "psi_variance": "Var(psi_N) over disorder",
    "concentration": "Var(psi_N) N^2 / (gamma^2 |A_N|)",
    "gamma_derivative": "<H> = dpsi/dgamma by centered differences",
    "convexity": "convexity of psi_N in gamma and chord bounds on <H>",
    "covariance_derivative": "Gibbs covariance = mixed second derivative of psi_N in the gaussians",
    "averaged_identity": "trapezoid integral of |delta_N| over a gamma interval",
    "proof_bound": "E<(H - <H>)^2> against the final variance bound",
    "jensen": "|nu(H) - p_N'| <= E|<H> - nu(H)|",
    "sampler_agreement": "exact vs Glauber overlap histograms, TV < 0.05",
    "oracle_equivalence": "Gray-code engine vs brute-force enumeration",
    "product_measure": "closed forms at beta = gamma = 0",
    "self_overlap": "R_{1,1} (errors if not constant)",
}

VARIANCE_EXAMPLES = {
    "g": (1, lambda x: x[:, 0], 1.0),
    "g2": (1, lambda x: x[:, 0] ** 2, 2.0),
    "g3": (1, lambda x: x[:, 0] ** 3, 15.0),
    "g1g2": (2, lambda x: x[:, 0] * x[:, 1], 1.0),
    "sin_sum": (2, lambda x: np.sin(x[:, 0] + x[:, 1]), 0.5 * (1 - math.exp(-4))),
    "exp_half": (1, lambda x: np.exp(x[:, 0] / 2), math.exp(0.25) * (math.exp(0.25) - 1)),
}


def _run_cell(args):
    cell, seed = args
    return report.run_cell(cell, seed)


def cmd_run(ns) -> int:
    try:
        cfg = report.load_config(ns.config)
        if ns.seed is not None:
            cfg["master_seed"] = ns.seed
        cells = report.expand_cells(cfg)
    except report.ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    seed = int(cfg["master_seed"])
    jobs = [(c, seed) for c in cells]
    if ns.workers > 1:
        with ProcessPoolExecutor(ns.workers) as pool:
            rows = list(pool.map(_run_cell, jobs))
    else:
        rows = []
        for job in jobs:
            rows.append(_run_cell(job))
            if ns.verbose:
                r = rows[-1]
                print(f"{r['check']:<22} {r['model']:<5} N={r['N']:<3} estimate={r['estimate']:.6g} {r['pass']}",
                      file=sys.stderr)
    out = ns.out or cfg.get("output") or "report"
    csv_path, json_path = report.write_reports(out, cfg, seed, rows)
    failed = [r for r in rows if r["pass"] == "fail"]
    print(f"{len(rows)} rows, {len(failed)} failed contracts -> {csv_path}, {json_path}")
    for r in failed:
        print(f"FAIL {r['check']} {r['model']} N={r['N']} beta={r['beta']} gamma={r['gamma']} h={r['h']}: "
              f"{r['estimate']} ({r['contract']})")
    return 1 if failed else 0


def cmd_convergence(ns) -> int:
    try:
        table = report.convergence_table(ns.reports)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = report.convergence_to_csv(table)
    if ns.out:
        Path(ns.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_variance(ns) -> int:
    if ns.function == "psi1":
        func = hermite.psi1_functional(ns.gamma, ns.h)
        exact = hermite.quadrature_variance(func, 64)
    else:
        dim, fn, exact = VARIANCE_EXAMPLES[ns.function]
        func = hermite.GaussianFunctional(dim, fn, name=ns.function)
    total, terms = hermite.hermite_variance(func, ns.K, method=ns.method)
    mc, se = hermite.mc_variance(func, ns.samples, ns.seed)
    print(f"function={ns.function} K={ns.K} method={ns.method}")
    partial = 0.0
    for k, t in enumerate(terms, 1):
        partial += t
        print(f"  k={k:<2d} term={t:.12g} partial_sum={partial:.12g}")
    print(f"hermite_sum={total:.12g} reference={exact:.12g} mc={mc:.6g} +- {se:.2g}")
    return 0


def cmd_list(ns) -> int:
    for name in CHECKS:
        print(f"{name:<24} {CHECK_HELP.get(name, '')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gglab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run the checks of an experiment config")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (default: config 'output' or ./report)")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--seed", type=int, help="override master_seed")
    r.add_argument("-v", "--verbose", action="store_true")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("convergence-table", help="merge report directories into a long-format CSV")
    c.add_argument("reports", nargs="+", help="report directories")
    c.add_argument("--out")
    c.set_defaults(func=cmd_convergence)

    v = sub.add_parser("check-variance-formula", help="Hermite variance series for a test functional")
    v.add_argument("--function", choices=sorted(VARIANCE_EXAMPLES) + ["psi1"], default="g3")
    v.add_argument("--K", type=int, default=6)
    v.add_argument("--method", choices=["auto", "hermite", "fd", "analytic"], default="auto")
    v.add_argument("--samples", type=int, default=100_000)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--gamma", type=float, default=0.5)
    v.add_argument("--h", type=float, default=0.3)
    v.set_defaults(func=cmd_variance)

    ls = sub.add_parser("list-checks", help="list check names usable in configs")
    ls.set_defaults(func=cmd_list)
    return p


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
