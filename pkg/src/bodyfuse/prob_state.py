"""Gaussian body states and linear propagation of their uncertainty to
mesh vertices and joints."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .body_model import (
    BodyModel,
    HumanState,
    boxplus,
    check_state,
    joint_jacobian,
    joints_camera,
    vertices_and_jacobian,
)


@dataclass(frozen=True, eq=False)
class GaussianBodyState:
    """Body state with a diagonal Gaussian over its error coordinates."""

    mean: HumanState
    var: np.ndarray

    def __post_init__(self):
        var = np.array(self.var, dtype=float).reshape(-1)
        if not np.all(np.isfinite(var)) or np.any(var <= 0.0):
            raise ValueError("variances must be finite and strictly positive")
        object.__setattr__(self, "var", var)

    def to_json(self) -> dict:
        return {"mean": self.mean.to_json(), "var": self.var.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> GaussianBodyState:
        return cls(HumanState.from_json(d["mean"]), d["var"])


@dataclass(frozen=True, eq=False)
class PointCloudGaussian:
    """Independent 3D Gaussians, one per point: means (M, 3), blocks (M, 3, 3)."""

    means: np.ndarray
    cov_blocks: np.ndarray

    def __len__(self) -> int:
        return self.means.shape[0]

    def to_json(self) -> list[dict]:
        iu = np.triu_indices(3)
        return [
            {"mean": m.tolist(), "cov": c[iu].tolist()}
            for m, c in zip(self.means, self.cov_blocks)
        ]

    @classmethod
    def from_json(cls, items: list[dict]) -> PointCloudGaussian:
        iu = np.triu_indices(3)
        means = np.array([it["mean"] for it in items], dtype=float).reshape(-1, 3)
        covs = np.zeros((len(items), 3, 3))
        for c, it in zip(covs, items):
            c[iu] = it["cov"]
            c.T[iu] = it["cov"]
        return cls(means, covs)

    def rotated(self, R, t=None) -> PointCloudGaussian:
        """Same distribution expressed in another frame, ``p' = R p + t``."""
        R = np.asarray(R, dtype=float)
        means = self.means @ R.T + (0.0 if t is None else np.asarray(t, dtype=float))
        covs = np.einsum("ij,njk,lk->nil", R, self.cov_blocks, R)
        return PointCloudGaussian(means, covs)


def _check(model: BodyModel, s: GaussianBodyState) -> None:
    check_state(model, s.mean)
    if s.var.shape != (model.dim,):
        raise ValueError(f"var has length {s.var.shape[0]}, model expects {model.dim}")


def propagate_vertices(model: BodyModel, s: GaussianBodyState, *, backend: str | None = None) -> PointCloudGaussian:
    """Camera-frame vertex means and the 3x3 diagonal blocks of
    ``J_V diag(var) J_V^T``; the full vertex covariance is never formed."""
    _check(model, s)
    verts, J = vertices_and_jacobian(model, s.mean, backend=backend)
    blocks = kernels.get_backend(backend).cov_blocks(J, s.var)
    return PointCloudGaussian(verts, blocks)


def propagate_joints(model: BodyModel, s: GaussianBodyState) -> PointCloudGaussian:
    _check(model, s)
    K = model.n_joints
    J = joint_jacobian(model, s.mean).reshape(K, 3, model.dim)
    blocks = kernels.get_backend("python").cov_blocks(J, s.var)
    return PointCloudGaussian(joints_camera(model, s.mean), blocks)


def sample(s: GaussianBodyState, rng_seed, n: int) -> list[HumanState]:
    """Draw ``n`` states: Gaussian error coordinates retracted onto the mean."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    deltas = rng.standard_normal((n, s.var.shape[0])) * np.sqrt(s.var)
    return [boxplus(s.mean, d) for d in deltas]


def sample_deltas(s: GaussianBodyState, rng_seed, n: int) -> np.ndarray:
    """The error-coordinate draws behind :func:`sample` (same seed, same draws)."""
    rng = np.random.default_rng(rng_seed)
    return rng.standard_normal((n, s.var.shape[0])) * np.sqrt(s.var)
