"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--n 20000] [--repeat 3]

Times forward kinematics, forward+Jacobian, and the full metric bundle per
call, then a stage-1 IK solve batch, for each available backend.
"""

import argparse
import json
import sys
import time

import numpy as np

from singularguard import _kernels_py, kernels
from singularguard.kinematics import KinematicModel, sample_configs
from singularguard.metrics import metrics_from_jacobian

try:
    from singularguard import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def _best(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_backend(mod, model, qs, repeat):
    dh = model.dh

    def fk():
        for q in qs:
            mod.forward(dh, q)

    def fkj():
        for q in qs:
            mod.forward_and_jacobian(dh, q)

    def metrics():
        for q in qs:
            metrics_from_jacobian(mod.forward_and_jacobian(dh, q)[1])

    n = len(qs)
    return {name: _best(f, repeat) / n * 1e6 for name, f in
            (("forward_us", fk), ("forward_jacobian_us", fkj), ("metrics_us", metrics))}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json", action="store_true", help="print one JSON record instead of a table")
    args = p.parse_args(argv)

    model = KinematicModel()
    qs = [np.ascontiguousarray(q) for q in sample_configs(model, args.n, np.random.default_rng(0))]
    backends = {"python": _kernels_py}
    if _kernels_c is not None:
        backends["cython"] = _kernels_c
    results = {name: bench_backend(mod, model, qs, args.repeat) for name, mod in backends.items()}

    if args.json:
        print(json.dumps({"n": args.n, "selected": kernels.BACKEND, "results": results}))
        return results
    print(f"{args.n} configs, best of {args.repeat}; selected backend: {kernels.BACKEND}")
    cols = ("forward_us", "forward_jacobian_us", "metrics_us")
    print(f"{'backend':<8}" + "".join(f"{c:>22}" for c in cols))
    for name, r in results.items():
        print(f"{name:<8}" + "".join(f"{r[c]:>22.2f}" for c in cols))
    if "cython" in results:
        speed = {c: results["python"][c] / results["cython"][c] for c in cols}
        print(f"{'speedup':<8}" + "".join(f"{speed[c]:>21.1f}x" for c in cols))
    else:
        print("compiled extension not built; only the numpy fallback was timed", file=sys.stderr)
    return results


if __name__ == "__main__":
    main()
