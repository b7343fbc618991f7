"""Compare the numba kernels with the pure-numpy fallback.

The backend is fixed at import time by GGLAB_DISABLE_NUMBA, so each backend
runs in its own subprocess:

    python3 benchmarks/bench_enumeration.py --sizes 12 16 20 --repeat 3
"""

import argparse
import json
import os
import subprocess
import sys
import time


def measure(sizes, repeat):
    from gglab import _accel
    from gglab.gibbs import GibbsEnsemble, mcmc_sampler
    from gglab.model import build_sk

    # compile outside the timed region
    GibbsEnsemble(build_sk(4, 1.0, 0.5, 0.3, 0, 0)).h_mean
    mcmc_sampler(build_sk(4, 1.0, 0.5, 0.3, 0, 0), 20, 10, 1).samples()
    out = {"backend": _accel.backend(), "rows": []}
    for N in sizes:
        inst = build_sk(N, 1.0, 0.5, 0.3, 0, 0)
        best = {}
        for _ in range(repeat):
            ens = GibbsEnsemble(inst)
            t = time.perf_counter()
            ens.log_partition
            t1 = time.perf_counter()
            ens.h_mean
            t2 = time.perf_counter()
            ens.log_weights
            t3 = time.perf_counter()
            mcmc_sampler(inst, 1100, 100, 1).samples()
            t4 = time.perf_counter()
            for k, v in (("log_partition", t1 - t), ("moments", t2 - t1), ("table", t3 - t2), ("mcmc_1000", t4 - t3)):
                best[k] = min(best.get(k, float("inf")), v)
        out["rows"].append({"N": N, **best})
    return out


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--sizes", type=int, nargs="+", default=[12, 16, 20])
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    ns = p.parse_args()
    if ns.worker:
        print(json.dumps(measure(ns.sizes, ns.repeat)))
        return
    results = []
    for disable in ("0", "1"):
        env = dict(os.environ, GGLAB_DISABLE_NUMBA=disable)
        cmd = [sys.executable, __file__, "--worker", "--repeat", str(ns.repeat), "--sizes", *map(str, ns.sizes)]
        results.append(json.loads(subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout))
    fast, slow = results
    print(f"{'N':>3} {'step':<14} {fast['backend']:>10} {slow['backend']:>10} {'speedup':>8}")
    for a, b in zip(fast["rows"], slow["rows"]):
        for k in ("log_partition", "moments", "table", "mcmc_1000"):
            print(f"{a['N']:>3} {k:<14} {a[k]:>9.4f}s {b[k]:>9.4f}s {b[k] / a[k]:>7.1f}x")


if __name__ == "__main__":
    main()
