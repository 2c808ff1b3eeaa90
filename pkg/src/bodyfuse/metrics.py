"""Evaluation metrics, chi-square consistency and the posture correlation
diagnostic.  Positions go in as meters; errors come out in millimeters."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import geometry as geo
from .body_model import HumanState

M_TO_MM = 1000.0
CHI2_REG = 1e-9
DEFAULT_NEES_EDGES = np.concatenate([np.linspace(0.0, 15.0, 31), [np.inf]])


class AlignmentError(ValueError):
    pass


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")
    return pred, gt


def mpjpe(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    return float(np.mean(np.linalg.norm(pred - gt, axis=-1)) * M_TO_MM)


def g_mpjpe(pred_joints_w, gt_joints_w) -> float:
    """Un-aligned mean per-joint error in the world frame (mm)."""
    return mpjpe(pred_joints_w, gt_joints_w)


def g_pve(pred_vertices_w, gt_vertices_w) -> float:
    """Un-aligned mean per-vertex error in the world frame (mm)."""
    return mpjpe(pred_vertices_w, gt_vertices_w)


def similarity_align(pred, gt, scale: bool = True):
    """Least-squares similarity ``s R pred + t`` onto ``gt`` (Umeyama).

    Returns the aligned points and ``(s, R, t)``.
    """
    pred, gt = _pair(pred, gt)
    if pred.shape[0] < 3:
        raise AlignmentError("alignment needs at least 3 points")
    mu_p, mu_g = pred.mean(0), gt.mean(0)
    X, Y = pred - mu_p, gt - mu_g
    var_p = np.sum(X * X) / pred.shape[0]
    if var_p < 1e-18 or np.linalg.matrix_rank(X, tol=1e-9 * max(1.0, np.abs(X).max())) < 2:
        raise AlignmentError("degenerate (collinear or coincident) configuration")
    Sigma = Y.T @ X / pred.shape[0]
    U, d, Vt = np.linalg.svd(Sigma)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    s = float(np.trace(np.diag(d) @ S) / var_p) if scale else 1.0
    t = mu_g - s * R @ mu_p
    return s * pred @ R.T + t, (s, R, t)


def pa_mpjpe(pred_joints, gt_joints, scale: bool = True) -> float:
    aligned, _ = similarity_align(pred_joints, gt_joints, scale=scale)
    return mpjpe(aligned, gt_joints)


def g_accel(series, dt: float, gt_series=None) -> float:
    """Mean second-difference acceleration magnitude (mm/s^2) over interior
    frames and joints.  With ``gt_series`` the acceleration error is
    reported instead."""
    series = np.asarray(series, dtype=float)
    if series.shape[0] < 3:
        raise ValueError("acceleration needs at least 3 frames")
    acc = (series[2:] - 2.0 * series[1:-1] + series[:-2]) / (dt * dt)
    if gt_series is not None:
        gt_series = np.asarray(gt_series, dtype=float)
        acc = acc - (gt_series[2:] - 2.0 * gt_series[1:-1] + gt_series[:-2]) / (dt * dt)
    return float(np.mean(np.linalg.norm(acc, axis=-1)) * M_TO_MM)


@dataclass
class Chi2Result:
    samples: np.ndarray        # per valid joint chi-square values
    mean_nees: float
    bin_edges: np.ndarray
    counts: np.ndarray
    expected: np.ndarray       # chi2(dof) expected counts per bin
    skipped: int = 0
    dof: int = 3


def chi2_consistency(pred_means, pred_covs, gt, edges=DEFAULT_NEES_EDGES) -> Chi2Result:
    """Per-joint normalized estimation error squared with 3 DOF each.

    ``pred_means``/``gt`` are (..., 3), ``pred_covs`` (..., 3, 3); leading
    axes (frames, joints) are flattened.  Blocks are regularized by
    ``1e-9 I``; those still singular are skipped and counted.
    """
    mu = np.asarray(pred_means, dtype=float).reshape(-1, 3)
    cov = np.asarray(pred_covs, dtype=float).reshape(-1, 3, 3)
    gt = np.asarray(gt, dtype=float).reshape(-1, 3)
    if not (mu.shape == gt.shape and cov.shape[0] == mu.shape[0]):
        raise ValueError("mean, covariance and ground-truth counts differ")
    e = mu - gt
    cov = cov + CHI2_REG * np.eye(3)
    vals = np.empty(mu.shape[0])
    ok = np.ones(mu.shape[0], dtype=bool)
    for i in range(mu.shape[0]):
        try:
            L = np.linalg.cholesky(cov[i])
        except np.linalg.LinAlgError:
            ok[i] = False
            continue
        z = np.linalg.solve(L, e[i])
        vals[i] = z @ z
    vals = vals[ok]
    counts, _ = np.histogram(vals, bins=edges)
    cdf = stats.chi2.cdf(edges, df=3)
    expected = np.diff(cdf) * vals.size
    return Chi2Result(
        samples=vals,
        mean_nees=float(vals.mean()) if vals.size else float("nan"),
        bin_edges=np.asarray(edges, dtype=float),
        counts=counts,
        expected=expected,
        skipped=int((~ok).sum()),
    )


def posture_correlation(states: list[HumanState]) -> np.ndarray:
    """Absolute Pearson correlation of tangent-space posture coordinates
    about the dataset mean posture."""
    if len(states) < 2:
        raise ValueError("need at least 2 states")
    thetas = np.stack([s.theta for s in states])  # (S, P, 4)
    mean_q = _mean_quats(thetas)
    coords = geo.quat_error(mean_q[None], thetas).reshape(len(states), -1)
    return absolute_correlation(coords)


def absolute_correlation(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    Xc = X - X.mean(0)
    sd = np.sqrt(np.sum(Xc * Xc, axis=0))
    sd[sd == 0.0] = np.inf
    C = (Xc.T @ Xc) / np.outer(sd, sd)
    C = np.clip(np.abs(0.5 * (C + C.T)), 0.0, 1.0)
    np.fill_diagonal(C, 1.0)
    return C


def _mean_quats(thetas: np.ndarray, iters: int = 10) -> np.ndarray:
    """Per-joint intrinsic mean by fixed-point iteration in error coordinates."""
    mean = geo.canonical(thetas[0]).copy()
    for _ in range(iters):
        e = geo.quat_error(mean[None], thetas).mean(0)
        n = np.linalg.norm(e, axis=-1, keepdims=True)
        e = e * np.minimum(1.0, 0.99 / np.maximum(n, 1e-300))
        mean = geo.normalize(geo.retract(mean, e))
        if np.max(np.abs(e)) < 1e-14:
            break
    return mean


@dataclass
class MetricsReport:
    g_mpjpe: float
    pa_mpjpe: float
    g_pve: float
    g_accel: float
    mean_nees: float
    nees_histogram: dict = field(default_factory=dict)
    per_frame: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return _jsonable(asdict(self))

    def table_row(self) -> str:
        return " & ".join(format_mm(v) for v in (self.g_mpjpe, self.pa_mpjpe, self.g_pve, self.g_accel))


def format_mm(value: float) -> str:
    """Two-decimal table formatting, e.g. ``114.48``."""
    return f"{value:.2f}"


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if np.isfinite(v) else ("inf" if v > 0 else ("-inf" if v < 0 else None))
    if isinstance(x, np.integer):
        return int(x)
    return x
