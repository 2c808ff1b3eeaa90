"""Acceptance criteria, one test each.  Every test prints a single
``criterion N: PASS|FAIL`` line with the measured quantity before asserting."""

import json
import time

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from bodyfuse import geometry as geo
from bodyfuse import kernels
from bodyfuse.bench import BUDGET_MS, bench_size
from bodyfuse.body_model import HumanState, boxminus, boxplus, joint_jacobian, joints_camera, vertex_jacobian
from bodyfuse.cli import run_cli
from bodyfuse.fusion import fuse
from bodyfuse.harness import OcclusionWindow, ScenarioConfig, TrackerConfig, generate, run
from bodyfuse.harness.evaluate import evaluate
from bodyfuse.metrics import chi2_consistency, g_accel, g_mpjpe, pa_mpjpe
from bodyfuse.motion import default_process_noise, predict_const_velocity, to_body_frame, to_camera_frame
from bodyfuse.objectives import LossWeights, gaussian_kl, gaussian_targets, nll, total
from bodyfuse.prob_state import GaussianBodyState, propagate_joints, propagate_vertices
from bodyfuse.projection import CameraModel, Joint2DGaussian, project, project_jacobian
from conftest import random_quat, random_state, random_transform
from oracles import fd_jacobians, mc_covariances, rel_frobenius

pytestmark = pytest.mark.slow
TINY = list(np.full(85, 1e-20))


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def _rel(A, B):
    return np.abs(A - B).max() / max(np.abs(B).max(), 1e-300)


def _transform_fd(A, B):
    C = geo.compose(A, B)
    fa, fb = [], []
    for d in np.eye(6) * 1e-6:
        fa.append((geo.transform_error(C, geo.compose(geo.perturb(A, d), B))
                   - geo.transform_error(C, geo.compose(geo.perturb(A, -d), B))) / 2e-6)
        fb.append((geo.transform_error(C, geo.compose(A, geo.perturb(B, d)))
                   - geo.transform_error(C, geo.compose(A, geo.perturb(B, -d)))) / 2e-6)
    return np.column_stack(fa), np.column_stack(fb)


def test_criterion_1_jacobians(model, capsys):
    rng = np.random.default_rng(2024)
    cam = CameraModel(1000.0, 1000.0, 640.0, 360.0, 1280, 720)
    worst = {"vertex": 0.0, "joint": 0.0, "projection": 0.0, "transform": 0.0}
    t0 = time.perf_counter()
    for _ in range(100):
        s = random_state(model, rng)
        fd_joints, fd_verts = fd_jacobians(model, s)
        worst["vertex"] = max(worst["vertex"], _rel(vertex_jacobian(model, s), fd_verts))
        worst["joint"] = max(worst["joint"], _rel(joint_jacobian(model, s), fd_joints))
        for p in joints_camera(model, s)[::6]:
            fd = np.column_stack([(project(cam, p + e) - project(cam, p - e)) / 2e-6 for e in np.eye(3) * 1e-6])
            worst["projection"] = max(worst["projection"], _rel(project_jacobian(cam, p), fd))
        A, B = random_transform(rng), random_transform(rng)
        JA, JB = geo.transform_jacobians(A, B)
        fa, fb = _transform_fd(A, B)
        worst["transform"] = max(worst["transform"], _rel(JA, fa), _rel(JB, fb))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and elapsed < 30.0
    report(capsys, 1, ok, "max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
           + f"; {elapsed:.1f} s (< 30 s)")


def test_criterion_2_propagation_monte_carlo(model, capsys):
    s = GaussianBodyState(random_state(model, np.random.default_rng(7)), np.full(model.dim, 0.01 ** 2))
    cj, cv = mc_covariances(model, s, 100_000, seed=99, vidx=np.arange(model.n_vertices), chunk=100)
    ev = rel_frobenius(propagate_vertices(model, s).cov_blocks, cv).max()
    ej = rel_frobenius(propagate_joints(model, s).cov_blocks, cj).max()
    report(capsys, 2, max(ev, ej) < 0.05,
           f"max rel Frobenius err vertices {ev:.4f}, joints {ej:.4f} (< 0.05, 1e5 samples, sigma 0.01)")


def test_criterion_3_fusion_oracle(model, capsys):
    rng = np.random.default_rng(3)
    sl = model.slices()
    idx = np.r_[sl["beta"], sl["r"]]
    err_mean = err_var = 0.0
    for _ in range(50):
        a = random_state(model, rng)
        b = boxplus(a, 0.1 * rng.standard_normal(model.dim))
        va, vb = rng.uniform(1e-4, 1.0, (2, model.dim))
        post = fuse(GaussianBodyState(a, va), GaussianBodyState(b, vb))
        xa, xb = np.r_[a.beta, a.r], np.r_[b.beta, b.r]
        pa, pb = 1 / va[idx], 1 / vb[idx]
        var = 1 / (pa + pb)
        mu = var * (pa * xa + pb * xb)
        err_mean = max(err_mean, np.abs(np.r_[post.mean.beta, post.mean.r] - mu).max())
        err_var = max(err_var, np.abs(post.var[idx] - var).max())
    img = GaussianBodyState(a, va)
    lim = fuse(img, GaussianBodyState(b, np.full(model.dim, 1e12)))
    lim_mean = np.abs(boxminus(lim.mean, a)).max()
    lim_var = np.max(np.abs(lim.var / va - 1))
    ok = err_mean < 1e-12 and err_var < 1e-12 and lim_mean < 1e-6 and lim_var < 1e-3
    report(capsys, 3, ok, f"product oracle mean {err_mean:.1e}, var {err_var:.1e} (< 1e-12); "
                          f"uninformative limit mean {lim_mean:.1e}, var rel {lim_var:.1e} (< 1e-3)")


def test_criterion_4_disentanglement(model, capsys):
    rel_dev = 0.0
    priors = {}
    for cam in ("static", "orbit", "linear"):
        cfg = ScenarioConfig(body="static", camera=cam, n_frames=8, orbit_rate=0.8, camera_speed=1.0)
        frames = generate(cfg, model)
        hist = [(f.T_WC, GaussianBodyState(f.gt, np.full(model.dim, 1e-4))) for f in frames[:4]]
        h = to_body_frame(hist)
        for T in h.rel_poses:
            rel_dev = max(rel_dev, np.abs(T.r).max(), np.abs(geo.quat_error(geo.IDENTITY_QUAT, T.q)).max())
        p = to_camera_frame(predict_const_velocity(h, default_process_noise()), frames[4].T_WC, h.T_WH_ref)
        priors[cam] = (geo.compose(frames[4].T_WC, p.state.mean.root), p.state)
    ref_T, ref_s = priors["static"]
    prior_dev = max(max(np.abs(T.r - ref_T.r).max(), np.abs(geo.quat_error(ref_T.q, T.q)).max())
                    for T, _ in priors.values())
    posture_same = all(np.array_equal(s.mean.theta, ref_s.mean.theta) and np.array_equal(s.mean.beta, ref_s.mean.beta)
                       for _, s in priors.values())

    drift = 0.0
    for cam in ("orbit", "linear", "static"):
        cfg = ScenarioConfig(body="static", camera=cam, n_frames=40, noise=TINY, orbit_rate=0.8,
                             occlusions=[OcclusionWindow(10, 40)])
        outs = run(model, generate(cfg, model))
        ref = outs[9].T_WH
        drift = max(drift, max(np.linalg.norm(o.T_WH.r - ref.r) for o in outs[10:]))
    ok = rel_dev < 1e-9 and prior_dev < 1e-9 and posture_same and drift < 1e-6
    report(capsys, 4, ok, f"relative-transform dev {rel_dev:.1e}, prior dev {prior_dev:.1e} (< 1e-9), "
                          f"posture identical {posture_same}, occlusion drift {drift:.1e} m (< 1e-6)")


def _nees(model, scale, seeds):
    mus, covs, gts = [], [], []
    for seed in seeds:
        cfg = ScenarioConfig(body="walk", camera="orbit", n_frames=90, seed=seed, reported_noise_scale=scale)
        frames = generate(cfg, model)
        for f, o in zip(frames, run(model, frames)):
            pg = propagate_joints(model, o.posterior)
            mus.append(pg.means)
            covs.append(pg.cov_blocks)
            gts.append(joints_camera(model, f.gt))
    return chi2_consistency(np.array(mus), np.array(covs), np.array(gts))


def test_criterion_5_consistency(model, capsys):
    seeds = range(5)
    cal = _nees(model, 1.0, seeds)
    under = _nees(model, 0.25, seeds)
    ok = cal.samples.size >= 10_000 and 2.8 <= cal.mean_nees <= 3.2 and under.mean_nees > 10.0
    report(capsys, 5, ok, f"calibrated mean NEES {cal.mean_nees:.3f} over {cal.samples.size} joint-frames "
                          f"(in [2.8, 3.2]); R underestimated x4: {under.mean_nees:.2f} (> 10)")


def test_criterion_6_occlusion_benefit(model, capsys):
    occluded = list(range(30, 45))
    fused_err, frozen_err, gains = [], [], []
    for seed in range(20):
        cfg = ScenarioConfig(body="walk", camera="orbit", n_frames=60, seed=seed,
                             occlusions=[OcclusionWindow(30, 45)])
        frames = generate(cfg, model)
        f = evaluate(model, frames, run(model, frames), indices=occluded, with_vertices=False).g_mpjpe
        b = evaluate(model, frames, run(model, frames, TrackerConfig(predictor="none")),
                     indices=occluded, with_vertices=False).g_mpjpe
        fused_err.append(f)
        frozen_err.append(b)
        gains.append(1.0 - f / b)
    mf, mb, mg = np.mean(fused_err), np.mean(frozen_err), np.mean(gains)
    ok = mf < mb and mg >= 0.20
    report(capsys, 6, ok, f"occluded G-MPJPE fused {mf:.1f} mm vs image-only {mb:.1f} mm; "
                          f"mean improvement {100 * mg:.1f}% (>= 20%), 20 seeds")


def test_criterion_7_latency(capsys):
    backend = kernels.DEFAULT
    with threadpool_limits(limits=1):
        r = bench_size(6890, backend, repeats=30)
    ok = r["track_step_ms"] < BUDGET_MS
    report(capsys, 7, ok, f"N=6890 {backend} backend: track_step median {r['track_step_ms']:.1f} ms "
                          f"(< {BUDGET_MS:.0f}); transport {r['motion_transport_ms']:.2f}, "
                          f"fusion {r['fusion_ms']:.2f}, propagation {r['propagation_ms']:.1f} ms")


def test_criterion_8_losses(model, capsys):
    s = HumanState.rest(model)
    e = np.zeros(model.dim)
    e[5] = 0.2
    gt = boxplus(s, e)
    grid = np.linspace(0.001, 0.1, 9901)
    vals = []
    for v in grid:
        var = np.ones(model.dim)
        var[5] = v
        vals.append(nll(GaussianBodyState(s, var), gt))
    argmin = grid[int(np.argmin(vals))]

    mu_p, cov_p = np.array([0.3, -0.2]), np.array([[0.8, 0.2], [0.2, 0.5]])
    mu_q, cov_q = np.array([-0.1, 0.4]), np.array([[1.2, -0.3], [-0.3, 0.9]])
    from scipy import stats

    x = np.linspace(-7, 7, 1401)
    pts = np.stack(np.meshgrid(x, x, indexing="ij"), -1)
    lp = stats.multivariate_normal(mu_p, cov_p).logpdf(pts)
    lq = stats.multivariate_normal(mu_q, cov_q).logpdf(pts)
    quad = np.sum(np.exp(lp) * (lp - lq)) * (x[1] - x[0]) ** 2
    kl_err = abs(gaussian_kl(mu_p, cov_p, mu_q, cov_q) - quad)

    rng = np.random.default_rng(1)
    st = HumanState(rng.standard_normal(model.n_betas), s.theta, s.r, s.q)
    g = GaussianBodyState(st, rng.uniform(1e-3, 1e-1, model.dim))
    pred = [Joint2DGaussian(rng.uniform(0, 100, 2), np.diag(rng.uniform(1, 20, 2))) for _ in range(6)]
    tgt = gaussian_targets(rng.uniform(0, 100, (6, 2)))
    affine = True
    for name in ("kl", "rp", "beta"):
        f = [total(g, gt, pred, tgt, LossWeights(**{name: lam})) for lam in (0.0, 1.0, 2.0)]
        affine &= abs((f[2] - f[1]) - (f[1] - f[0])) <= 1e-9 * max(1.0, abs(f[2]))
    w = LossWeights()
    defaults = (w.kl, w.rp, w.beta) == (1.0, 1.0, 0.001)
    ok = abs(argmin - e[5] ** 2) < 1e-5 and kl_err < 1e-3 and affine and defaults
    report(capsys, 8, ok, f"NLL argmin {argmin:.5f} vs e^2 {e[5] ** 2:.5f}; KL quadrature err {kl_err:.1e} (< 1e-3); "
                          f"affine {affine}; default weights {(w.kl, w.rp, w.beta)}")


def test_criterion_9_metrics(capsys):
    rng = np.random.default_rng(9)
    pa_max, violations, excess = 0.0, 0, 0.0
    for _ in range(200):
        gt = rng.standard_normal((24, 3)) * 0.4
        R = geo.quat_to_matrix(random_quat(rng))
        pred = rng.uniform(0.2, 5.0) * gt @ R.T + rng.standard_normal(3)
        pa_max = max(pa_max, pa_mpjpe(pred, gt))
        noisy = gt + rng.uniform(0.001, 0.2) * rng.standard_normal(gt.shape)
        pa, g = pa_mpjpe(noisy, gt), g_mpjpe(noisy, gt)
        if pa > g + 1e-12:
            violations += 1
            excess = max(excess, pa / g - 1.0)
    t = np.arange(12) / 30.0
    a = np.array([0.5, -2.0, 1.0])
    quad = 0.5 * t[:, None, None] ** 2 * a + rng.standard_normal((1, 24, 3))
    acc = g_accel(quad, 1 / 30.0)
    acc_err = abs(acc - 1000 * np.linalg.norm(a))
    ok = pa_max < 1e-9 and violations == 0 and acc_err < 1e-6 * acc
    report(capsys, 9, ok, f"PA-MPJPE under similarity {pa_max:.1e} mm (< 1e-9); PA > G on {violations}/200 trials "
                          f"(worst +{100 * excess:.2f}%, need 0); "
                          f"G-Accel quadratic {acc:.6f} vs {1000 * np.linalg.norm(a):.6f} mm/s^2")


def test_criterion_10_determinism_causality(model, tmp_path, capsys):
    scen = tmp_path / "scenario.json"
    scen.write_text(json.dumps({"body": "walk", "camera": "orbit", "n_frames": 30,
                                "occlusions": [{"start": 12, "end": 20}]}))
    blobs = []
    for name in ("a", "b"):
        seq, post, rep = (tmp_path / f"{name}.{ext}" for ext in ("seq.jsonl", "post.jsonl", "report.json"))
        codes = [
            run_cli(["--threads", "1", "simulate", "--scenario", str(scen), "--seed", "5", "--out", str(seq)]),
            run_cli(["--threads", "1", "track", str(seq), "--out", str(post)]),
            run_cli(["--threads", "1", "evaluate", str(post), str(seq), "--out", str(rep)]),
        ]
        blobs.append((codes, seq.read_bytes(), post.read_bytes(), rep.read_bytes()))
    reproducible = blobs[0] == blobs[1] and blobs[0][0] == [0, 0, 0]

    cfg = ScenarioConfig(body="walk", camera="orbit", n_frames=30, seed=5)
    frames = generate(cfg, model)
    base = run(model, frames)
    causal = True
    for k in (10, 20, 29):
        mutated = list(frames)
        f = mutated[k]
        mutated[k] = type(f)(f.index, f.t, f.T_WC, frames[0].observation, f.gt, f.visibility)
        outs = run(model, mutated)
        for a, b in zip(base[:k], outs[:k]):
            causal &= (np.array_equal(a.posterior.var, b.posterior.var)
                       and np.array_equal(a.posterior.mean.theta, b.posterior.mean.theta)
                       and np.array_equal(a.posterior.mean.r, b.posterior.mean.r))
    report(capsys, 10, reproducible and causal,
           f"pipeline byte-reproducible at 1 thread {reproducible}; past posteriors unchanged by future edits {causal}")
