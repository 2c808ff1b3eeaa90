"""Fusion of the image-based and motion-based priors.

Both priors are diagonal Gaussians over error coordinates.  The update is
the information-form product of Gaussians, taken in the tangent space of a
linearization point (the image mean by default), followed by an optional
residual correction of the mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .body_model import HumanState, boxminus, boxplus
from .prob_state import GaussianBodyState

Residual = Callable[[GaussianBodyState, GaussianBodyState, HumanState], np.ndarray]


class FusionError(ValueError):
    pass


@dataclass(frozen=True)
class FusionConfig:
    residual: Residual | None = None
    gate: float | None = None      # Mahalanobis threshold; None disables gating
    linearize_at: str = "image"    # or "motion"


@dataclass(frozen=True)
class GateResult:
    accept: bool
    statistic: float


def _check_finite(s: GaussianBodyState, name: str) -> None:
    m = s.mean
    for arr in (m.beta, m.theta, m.r, m.q, s.var):
        if not np.all(np.isfinite(arr)):
            raise FusionError(f"{name} prior has non-finite entries")


def mahalanobis_gate(img: GaussianBodyState, mot: GaussianBodyState, threshold: float) -> GateResult:
    """Accept when ``sum(d_i^2 / (var_I_i + var_M_i)) <= threshold``."""
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    d = boxminus(mot.mean, img.mean)
    stat = float(np.sum(d * d / (img.var + mot.var)))
    return GateResult(stat <= threshold, stat)


def fuse(img: GaussianBodyState, mot: GaussianBodyState, cfg: FusionConfig | None = None) -> GaussianBodyState:
    cfg = cfg or FusionConfig()
    _check_finite(img, "image")
    _check_finite(mot, "motion")
    if img.var.shape != mot.var.shape:
        raise FusionError(f"dimension mismatch: {img.var.shape[0]} vs {mot.var.shape[0]}")
    if cfg.gate is not None and not mahalanobis_gate(img, mot, cfg.gate).accept:
        return img

    if cfg.linearize_at == "image":
        base, other = img, mot
    elif cfg.linearize_at == "motion":
        base, other = mot, img
    else:
        raise ValueError(f"unknown linearization point {cfg.linearize_at!r}")
    d = boxminus(other.mean, base.mean)
    info = 1.0 / img.var + 1.0 / mot.var
    var = 1.0 / info
    step = var * d / other.var
    if cfg.residual is not None:
        fused_mean = boxplus(base.mean, step)
        corr = np.asarray(cfg.residual(img, mot, fused_mean), dtype=float)
        if corr.shape != step.shape:
            raise FusionError(f"residual returned shape {corr.shape}, expected {step.shape}")
        step = step + corr
    return GaussianBodyState(boxplus(base.mean, step), var)


def mlp_residual(weights) -> Residual:
    """Residual from a single affine layer stored in the GRU weights format's
    decoder fields, fed with ``[mean_I - fused, mean_M - fused, log var_I,
    log var_M]`` in error coordinates."""
    W = np.asarray(weights.decoder_W, dtype=float)
    b = np.asarray(weights.decoder_b, dtype=float)

    def residual(img, mot, fused):
        x = np.concatenate([
            boxminus(img.mean, fused), boxminus(mot.mean, fused), np.log(img.var), np.log(mot.var),
        ])
        if W.shape[1] != x.shape[0]:
            raise FusionError(f"residual weights expect {W.shape[1]} inputs, got {x.shape[0]}")
        return W @ x + b

    return residual
