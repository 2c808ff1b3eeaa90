"""Compare the compiled and pure-numpy kernels.

Times the two hot kernels (skinning Jacobian, per-vertex covariance
blocks) and a full tracking step for each available backend, checks that
the backends agree, and prints a table.

    python benchmarks/bench_backends.py --sizes 600,2000,6890 --repeats 20
"""

import argparse
import time

import numpy as np
from threadpoolctl import threadpool_limits

from bodyfuse import kernels
from bodyfuse.bench import BUDGET_MS, bench_size
from bodyfuse.body_model import HumanState, boxplus, synth_model, vertices_and_jacobian
from bodyfuse import geometry as geo


def time_kernels(n, backend, repeats):
    model = synth_model(n, 0)
    rng = np.random.default_rng(0)
    s = HumanState.rest(model, geo.RigidTransform([0, 0, 3.0], geo.IDENTITY_QUAT))
    s = boxplus(s, 0.1 * rng.standard_normal(model.dim))
    var = rng.uniform(1e-6, 1e-3, model.dim)
    impl = kernels.get_backend(backend)
    _, J = vertices_and_jacobian(model, s, backend=backend)

    def med(fn):
        ts = []
        for _ in range(repeats):
            t0 = time.perf_counter()
            fn()
            ts.append(time.perf_counter() - t0)
        return 1e3 * float(np.median(ts))

    return {
        "jacobian_ms": med(lambda: vertices_and_jacobian(model, s, backend=backend)),
        "cov_blocks_ms": med(lambda: impl.cov_blocks(J, var)),
        "blocks": impl.cov_blocks(J, var),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="600,2000,6890")
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()
    backends = sorted(kernels.BACKENDS)
    print(f"{'N':>6} {'backend':>9} {'jacobian':>10} {'blocks':>9} {'track_step':>11}  agree")
    with threadpool_limits(limits=1):
        for n in (int(x) for x in args.sizes.split(",")):
            ref = None
            for b in backends:
                k = time_kernels(n, b, args.repeats)
                step = bench_size(n, b, args.repeats)["track_step_ms"]
                agree = "" if ref is None else f"{np.abs(k['blocks'] - ref).max():.1e}"
                ref = k["blocks"] if ref is None else ref
                flag = " *" if step >= BUDGET_MS else ""
                print(f"{n:>6} {b:>9} {k['jacobian_ms']:>8.2f}ms {k['cov_blocks_ms']:>7.2f}ms "
                      f"{step:>9.2f}ms{flag}  {agree}")
    print(f"(* over the {BUDGET_MS:.0f} ms budget)")


if __name__ == "__main__":
    main()
