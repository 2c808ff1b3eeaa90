"""Per-stage latency of one tracking step, for each kernel backend."""

from __future__ import annotations

import time

import numpy as np

from . import kernels, motion
from .body_model import synth_model, vertices_and_jacobian
from .fusion import fuse
from .harness.scenario import ScenarioConfig, generate
from .harness.tracker import Tracker, TrackerConfig

DEFAULT_SIZES = (600, 2000, 6890)
BUDGET_MS = 50.0  # 20 Hz


def _median_ms(fn, repeats: int) -> float:
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return 1e3 * float(np.median(times))


def bench_size(n_vertices: int, backend: str, repeats: int = 20, seed: int = 0) -> dict:
    model = synth_model(n_vertices, seed)
    frames = generate(ScenarioConfig(body="walk", camera="orbit", n_frames=8, seed=seed), model)
    impl = kernels.get_backend(backend)
    old = kernels.DEFAULT
    kernels.DEFAULT = backend
    try:
        tr = Tracker(model, TrackerConfig(propagate_vertices=True))
        for f in frames[:-1]:
            tr.step(f)
        last = frames[-1]
        entries = list(tr.buffer)
        post = tr.last.posterior

        def transport():
            h = motion.to_body_frame([(T, s) for T, s, _ in entries], [t for _, _, t in entries])
            p = motion.predict_const_velocity(h, tr.Q)
            return motion.to_camera_frame(p, last.T_WC, h.T_WH_ref)

        prior = transport().state

        def propagate():
            _, J = vertices_and_jacobian(model, post.mean, backend=backend)
            return impl.cov_blocks(J, post.var)

        def step():
            t = Tracker(model, TrackerConfig(propagate_vertices=True))
            t.buffer.extend(entries)
            t.last = tr.last
            return t.step(last)

        return {
            "n_vertices": n_vertices,
            "backend": backend,
            "motion_transport_ms": _median_ms(transport, repeats),
            "fusion_ms": _median_ms(lambda: fuse(last.observation, prior), repeats),
            "propagation_ms": _median_ms(propagate, repeats),
            "track_step_ms": _median_ms(step, repeats),
        }
    finally:
        kernels.DEFAULT = old


def run_bench(sizes=DEFAULT_SIZES, backends=None, repeats: int = 20) -> dict:
    backends = list(backends or kernels.BACKENDS)
    rows = [bench_size(n, b, repeats) for n in sizes for b in backends]
    ref = [r for r in rows if r["n_vertices"] == 6890 and r["backend"] == kernels.DEFAULT]
    return {
        "budget_ms": BUDGET_MS,
        "default_backend": kernels.DEFAULT,
        "results": rows,
        "within_budget": bool(ref and ref[0]["track_step_ms"] < BUDGET_MS) if ref else None,
    }
