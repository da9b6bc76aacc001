"""Benchmark the compiled path kernels against the pure-NumPy fallback.

Builds synthetic portfolio and regulator path-recursion workloads, checks
that both backends produce bit-identical output, and reports throughput.

    python benchmarks/bench_kernels.py --paths 1000000 --stages 10 --repeat 3
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from popmdp import _kernels_py

try:
    from popmdp import _kernels as _compiled
except ImportError:
    _compiled = None


def _mv_workload(rng, n_paths, n_stages, d):
    atoms, cumprobs = [], []
    for _ in range(n_stages):
        pts = rng.uniform(-0.5, 1.0, size=(2, d))
        atoms.append(np.ascontiguousarray(pts))
        cumprobs.append(np.array([0.5, 1.0]))
    return dict(
        x0=rng.normal(size=n_paths),
        growths=1.0 + rng.uniform(0.0, 0.1, n_stages),
        kinds=np.zeros(n_stages, dtype=np.int64),
        kappas=rng.normal(size=n_stages),
        directions=np.ascontiguousarray(rng.normal(size=(n_stages, d))),
        atoms=atoms,
        cumprobs=cumprobs,
        uniforms=np.ascontiguousarray(rng.random((n_stages, n_paths))),
    )


def _lq_workload(rng, n_paths, n_stages):
    atoms = [np.array([1.0, -1.0]) for _ in range(n_stages)]
    cumprobs = [np.array([0.5, 1.0]) for _ in range(n_stages)]
    return dict(
        x0=rng.normal(size=n_paths),
        b=0.95, d=0.6, sigma=1.1,
        slopes=rng.normal(size=n_stages),
        intercepts=rng.normal(size=n_stages),
        atoms=atoms,
        cumprobs=cumprobs,
        uniforms=np.ascontiguousarray(rng.random((n_stages, n_paths))),
    )


def _time(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--paths", type=int, default=1_000_000)
    parser.add_argument("--stages", type=int, default=10)
    parser.add_argument("--assets", type=int, default=2)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    updates = args.paths * args.stages

    print(f"paths={args.paths}  stages={args.stages}  assets={args.assets}")
    if _compiled is None:
        print("compiled extension not built; benchmarking the fallback only")

    mv = _mv_workload(rng, args.paths, args.stages, args.assets)
    out_py = np.empty((args.stages + 1, args.paths))
    t_py = _time(lambda: _kernels_py.mv_paths(
        mv["x0"], mv["growths"], mv["kinds"], mv["kappas"], mv["directions"],
        mv["atoms"], mv["cumprobs"], mv["uniforms"], out_py), args.repeat)
    print(f"\nportfolio recursion (x' = g*(x + a.r), {args.assets} assets)")
    print(f"  python  : {t_py:8.4f} s  ({updates / t_py / 1e6:7.1f} M updates/s)")
    if _compiled is not None:
        out_c = np.empty_like(out_py)
        t_c = _time(lambda: _compiled.mv_paths(
            mv["x0"], mv["growths"], mv["kinds"], mv["kappas"], mv["directions"],
            mv["atoms"], mv["cumprobs"], mv["uniforms"], out_c), args.repeat)
        identical = np.array_equal(out_py, out_c)
        print(f"  compiled: {t_c:8.4f} s  ({updates / t_c / 1e6:7.1f} M updates/s)"
              f"  speedup x{t_py / t_c:.2f}")
        print(f"  outputs bit-identical: {identical}")
        if not identical:
            raise SystemExit("backend outputs diverged")

    lq = _lq_workload(rng, args.paths, args.stages)
    s_py = np.empty((args.stages + 1, args.paths))
    a_py = np.empty((args.stages, args.paths))
    t_py = _time(lambda: _kernels_py.lq_paths(
        lq["x0"], lq["b"], lq["d"], lq["sigma"], lq["slopes"], lq["intercepts"],
        lq["atoms"], lq["cumprobs"], lq["uniforms"], s_py, a_py), args.repeat)
    print("\nregulator recursion (x' = b*x + d*a + sigma*r)")
    print(f"  python  : {t_py:8.4f} s  ({updates / t_py / 1e6:7.1f} M updates/s)")
    if _compiled is not None:
        s_c = np.empty_like(s_py)
        a_c = np.empty_like(a_py)
        t_c = _time(lambda: _compiled.lq_paths(
            lq["x0"], lq["b"], lq["d"], lq["sigma"], lq["slopes"],
            lq["intercepts"], lq["atoms"], lq["cumprobs"], lq["uniforms"],
            s_c, a_c), args.repeat)
        identical = np.array_equal(s_py, s_c) and np.array_equal(a_py, a_c)
        print(f"  compiled: {t_c:8.4f} s  ({updates / t_c / 1e6:7.1f} M updates/s)"
              f"  speedup x{t_py / t_c:.2f}")
        print(f"  outputs bit-identical: {identical}")
        if not identical:
            raise SystemExit("backend outputs diverged")


if __name__ == "__main__":
    main()
