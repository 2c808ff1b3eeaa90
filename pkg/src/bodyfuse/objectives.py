"""Training-objective terms as plain evaluatable functions.

Conventions: the state NLL drops the constant and the factor 1/2,
``sum(e^2 / var + log var)``; the reprojection KL is the exact closed-form
Gaussian KL (with its 1/2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .body_model import HumanState, boxminus
from .prob_state import GaussianBodyState
from .projection import Joint2DGaussian

DEFAULT_TARGET_SIGMA = 5.0  # pixels


class LossError(ValueError):
    pass


@dataclass(frozen=True)
class LossWeights:
    kl: float = 1.0
    rp: float = 1.0
    beta: float = 0.001

    def __post_init__(self):
        for name in ("kl", "rp", "beta"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"weight {name} must be finite and >= 0, got {v}")


@dataclass(frozen=True)
class Joint2DTarget:
    mean: np.ndarray  # (2,) pixels
    cov: np.ndarray   # (2, 2) pixels^2


def gaussian_targets(pixels, sigma: float = DEFAULT_TARGET_SIGMA) -> list[Joint2DTarget]:
    """Isotropic Gaussian surrogate densities around 2D keypoints."""
    cov = np.eye(2) * sigma ** 2
    return [Joint2DTarget(np.asarray(p, dtype=float), cov) for p in np.asarray(pixels, dtype=float)]


def nll(s: GaussianBodyState, gt: HumanState) -> float:
    e = boxminus(gt, s.mean)
    return float(np.sum(e * e / s.var + np.log(s.var)))


def gaussian_kl(mu_p, cov_p, mu_q, cov_q) -> float:
    """KL(N(mu_p, cov_p) || N(mu_q, cov_q))."""
    mu_p, mu_q = np.asarray(mu_p, dtype=float), np.asarray(mu_q, dtype=float)
    cov_p, cov_q = np.asarray(cov_p, dtype=float), np.asarray(cov_q, dtype=float)
    sign_q, logdet_q = np.linalg.slogdet(cov_q)
    if sign_q <= 0:
        raise LossError("target covariance is singular or not positive definite")
    sign_p, logdet_p = np.linalg.slogdet(cov_p)
    if sign_p <= 0:
        raise LossError("predicted covariance is singular or not positive definite")
    d = mu_q - mu_p
    k = mu_p.shape[0]
    tr = np.trace(np.linalg.solve(cov_q, cov_p))
    quad = d @ np.linalg.solve(cov_q, d)
    return 0.5 * float(tr + quad - k + logdet_q - logdet_p)


def kl_reprojection(pred: list[Joint2DGaussian], tgt: list[Joint2DTarget]) -> float:
    if len(pred) != len(tgt):
        raise LossError(f"{len(pred)} predicted joints vs {len(tgt)} targets")
    return float(sum(gaussian_kl(p.mean, p.cov, t.mean, t.cov) for p, t in zip(pred, tgt) if p.valid))


def rp(pred, tgt) -> float:
    """Sum of squared pixel distances between predicted and target means.

    Accepts arrays or lists of :class:`Joint2DGaussian` / :class:`Joint2DTarget`;
    invalid predicted joints are skipped."""
    total = 0.0
    for p, t in zip(pred, tgt):
        if isinstance(p, Joint2DGaussian):
            if not p.valid:
                continue
            p = p.mean
        t = t.mean if isinstance(t, Joint2DTarget) else t
        diff = np.asarray(p, dtype=float) - np.asarray(t, dtype=float)
        total += float(diff @ diff)
    return total


def beta_reg(beta) -> float:
    beta = np.asarray(beta, dtype=float)
    return float(beta @ beta)


def total(s: GaussianBodyState, gt: HumanState, pred2d: list[Joint2DGaussian],
          tgt2d: list[Joint2DTarget], w: LossWeights = LossWeights()) -> float:
    loss = nll(s, gt)
    if w.kl:
        loss += w.kl * kl_reprojection(pred2d, tgt2d)
    if w.rp:
        loss += w.rp * rp(pred2d, tgt2d)
    if w.beta:
        loss += w.beta * beta_reg(s.mean.beta)
    return loss
