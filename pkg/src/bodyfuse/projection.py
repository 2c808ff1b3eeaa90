"""Pinhole projection of 3D joint Gaussians into the image plane."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .prob_state import PointCloudGaussian

Z_MIN = 0.05
CANONICAL_FOCAL = 1000.0


class BehindCameraError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    fx: float
    fy: float
    cx: float = 0.0
    cy: float = 0.0
    width: int = 0
    height: int = 0

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    def to_json(self) -> dict:
        return {"fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
                "width": self.width, "height": self.height}

    @classmethod
    def from_json(cls, d: dict) -> CameraModel:
        return cls(float(d["fx"]), float(d["fy"]), float(d.get("cx", 0.0)), float(d.get("cy", 0.0)),
                   int(d.get("width", 0)), int(d.get("height", 0)))


@dataclass(frozen=True)
class Joint2DGaussian:
    mean: np.ndarray  # (2,) pixels
    cov: np.ndarray   # (2, 2) pixels^2
    valid: bool = True


def project(cam: CameraModel, p, z_min: float = Z_MIN) -> np.ndarray:
    x, y, z = np.asarray(p, dtype=float)
    if z <= z_min:
        raise BehindCameraError(f"point depth {z:.4g} m <= z_min {z_min}")
    return np.array([cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy])


def project_jacobian(cam: CameraModel, p, z_min: float = Z_MIN) -> np.ndarray:
    x, y, z = np.asarray(p, dtype=float)
    if z <= z_min:
        raise BehindCameraError(f"point depth {z:.4g} m <= z_min {z_min}")
    return np.array([
        [cam.fx / z, 0.0, -cam.fx * x / (z * z)],
        [0.0, cam.fy / z, -cam.fy * y / (z * z)],
    ])


def project_gaussian(cam: CameraModel, joints: PointCloudGaussian, z_min: float = Z_MIN) -> list[Joint2DGaussian]:
    """Project each 3D Gaussian; joints at or behind ``z_min`` come back
    flagged invalid with NaN moments."""
    out = []
    for mean, block in zip(joints.means, joints.cov_blocks):
        if mean[2] <= z_min:
            out.append(Joint2DGaussian(np.full(2, np.nan), np.full((2, 2), np.nan), valid=False))
            continue
        Jp = project_jacobian(cam, mean, z_min)
        cov = Jp @ block @ Jp.T
        out.append(Joint2DGaussian(project(cam, mean, z_min), 0.5 * (cov + cov.T)))
    return out


def canonicalize(cam: CameraModel, pixel, f0: float = CANONICAL_FOCAL) -> np.ndarray:
    """Pixel coordinates in a centered virtual camera with focal ``f0``."""
    u, v = np.asarray(pixel, dtype=float)
    return f0 * np.array([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy])


def decanonicalize(cam: CameraModel, pixel, f0: float = CANONICAL_FOCAL) -> np.ndarray:
    u, v = np.asarray(pixel, dtype=float) / f0
    return np.array([cam.fx * u + cam.cx, cam.fy * v + cam.cy])


def canonicalize_gaussian(cam: CameraModel, g: Joint2DGaussian, f0: float = CANONICAL_FOCAL) -> Joint2DGaussian:
    if not g.valid:
        return g
    A = np.diag([f0 / cam.fx, f0 / cam.fy])
    return Joint2DGaussian(canonicalize(cam, g.mean, f0), A @ g.cov @ A.T)
