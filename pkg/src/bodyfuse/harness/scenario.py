"""Synthetic sequences and the pseudo-detector that stands in for the
image network.

World frame is z-up.  Ground-truth human states are generated in the world
and expressed in each frame's camera (z forward, x right, y down).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .. import geometry as geo
from ..body_model import BodyModel, HumanState, boxminus, boxplus
from ..projection import CameraModel
from ..prob_state import GaussianBodyState

BODY_KINDS = ("static", "walk", "sinusoidal-joints")
CAMERA_KINDS = ("static", "orbit", "linear")
PELVIS_HEIGHT = 0.93
# SMPL frames are y-up facing +z; stand the body up in the z-up world,
# facing +x
Q_WORLD_BODY = geo.quat_mul(geo.axis_angle([0, 0, 1], np.pi / 2), geo.axis_angle([1, 0, 0], np.pi / 2))


class ScenarioError(ValueError):
    pass


def default_noise(n_betas: int = 10, n_joints: int = 24) -> np.ndarray:
    """Pseudo-detector noise variances: beta 1e-8, posture 1e-6, position
    1e-5 m^2, root orientation 1e-6 (error coordinates are half-angle)."""
    return np.concatenate([
        np.full(n_betas, 1e-8),
        np.full(3 * (n_joints - 1), 1e-6),
        np.full(3, 1e-5),
        np.full(3, 1e-6),
    ])


@dataclass
class OcclusionWindow:
    start: int                 # first occluded frame
    end: int                   # one past the last occluded frame
    mode: str = "full"         # "full" or "partial"
    joints: list[int] = field(default_factory=lambda: [1, 2, 4, 5, 7, 8, 10, 11])

    def covers(self, index: int) -> bool:
        return self.start <= index < self.end


@dataclass
class ScenarioConfig:
    body: str = "walk"
    camera: str = "static"
    n_frames: int = 90
    fps: float = 30.0
    seed: int = 0
    walk_speed: float = 1.4          # m/s
    gait_amplitude: float = 0.35     # rad, hip swing
    orbit_radius: float = 5.0        # m
    orbit_rate: float = 0.3          # rad/s
    camera_speed: float = 0.5        # m/s for the linear camera
    noise: list[float] | None = None  # R; default_noise() when None
    reported_noise_scale: float = 1.0  # detector reports var = scale * R
    kappa: float = 100.0              # variance inflation on partially occluded dims
    occlusions: list[OcclusionWindow] = field(default_factory=list)
    beta_scale: float = 0.5
    camera_model: dict = field(default_factory=lambda: {"fx": 1000.0, "fy": 1000.0, "cx": 640.0, "cy": 360.0,
                                                        "width": 1280, "height": 720})

    def __post_init__(self):
        self.occlusions = [w if isinstance(w, OcclusionWindow) else OcclusionWindow(**w) for w in self.occlusions]
        if self.body not in BODY_KINDS:
            raise ScenarioError(f"body must be one of {BODY_KINDS}, got {self.body!r}")
        if self.camera not in CAMERA_KINDS:
            raise ScenarioError(f"camera must be one of {CAMERA_KINDS}, got {self.camera!r}")
        if self.kappa < 1.0:
            raise ScenarioError("kappa must be >= 1")
        if self.n_frames < 1 or self.fps <= 0:
            raise ScenarioError("n_frames must be >= 1 and fps > 0")
        for w in self.occlusions:
            if not (0 <= w.start < w.end <= self.n_frames):
                raise ScenarioError(f"occlusion window [{w.start}, {w.end}) outside 0..{self.n_frames}")
            if w.mode not in ("full", "partial"):
                raise ScenarioError(f"occlusion mode must be 'full' or 'partial', got {w.mode!r}")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> ScenarioConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ScenarioError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    def noise_vector(self, model: BodyModel) -> np.ndarray:
        R = default_noise(model.n_betas, model.n_joints) if self.noise is None else np.asarray(self.noise, dtype=float)
        if R.shape != (model.dim,):
            raise ScenarioError(f"noise must have length {model.dim}, got {R.shape}")
        return R

    @property
    def camera_intrinsics(self) -> CameraModel:
        return CameraModel.from_json(self.camera_model)


@dataclass(eq=False)
class SequenceFrame:
    index: int
    t: float
    T_WC: geo.RigidTransform
    observation: GaussianBodyState | None
    gt: HumanState | None
    visibility: np.ndarray  # bool per error dim


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> geo.RigidTransform:
    eye = np.asarray(eye, dtype=float)
    f = np.asarray(target, dtype=float) - eye
    f /= np.linalg.norm(f)
    x = np.cross(f, up)
    x /= np.linalg.norm(x)
    y = np.cross(f, x)
    return geo.RigidTransform(eye, geo.matrix_to_quat(np.column_stack([x, y, f])))


def _gt_world(cfg: ScenarioConfig, model: BodyModel, beta: np.ndarray, rest_theta: np.ndarray, phases, t: float):
    """World pose and posture of the body at time ``t``."""
    K = model.n_joints
    theta = rest_theta.copy()
    if cfg.body == "walk":
        pos = np.array([cfg.walk_speed * t, 0.0, PELVIS_HEIGHT])
        w = 2.0 * np.pi * cfg.walk_speed / 1.4  # one stride per second at 1.4 m/s
        swing = cfg.gait_amplitude * np.sin(w * t)
        # hips and shoulders swing about the body x axis, knees flex
        for j, a in ((1, swing), (2, -swing), (16, -0.5 * swing), (17, 0.5 * swing)):
            if j < K:
                theta[j - 1] = geo.quat_mul(geo.axis_angle([1, 0, 0], a), rest_theta[j - 1])
        for j, a in ((4, 0.5 * max(0.0, swing)), (5, 0.5 * max(0.0, -swing))):
            if j < K:
                theta[j - 1] = geo.quat_mul(geo.axis_angle([1, 0, 0], a), rest_theta[j - 1])
    elif cfg.body == "sinusoidal-joints":
        pos = np.array([0.0, 0.0, PELVIS_HEIGHT])
        for j in range(1, K):
            axis, freq, phase = phases[j - 1]
            theta[j - 1] = geo.quat_mul(geo.axis_angle(axis, 0.2 * np.sin(freq * t + phase)), rest_theta[j - 1])
    else:
        pos = np.array([0.0, 0.0, PELVIS_HEIGHT])
    return geo.RigidTransform(pos, Q_WORLD_BODY), theta


def _scene_center(cfg: ScenarioConfig) -> np.ndarray:
    duration = (cfg.n_frames - 1) / cfg.fps
    x = 0.5 * cfg.walk_speed * duration if cfg.body == "walk" else 0.0
    return np.array([x, 0.0, PELVIS_HEIGHT])


def _camera_pose(cfg: ScenarioConfig, t: float) -> geo.RigidTransform:
    c = _scene_center(cfg)
    if cfg.camera == "static":
        return look_at(c + np.array([0.0, -cfg.orbit_radius, 0.6]), c)
    if cfg.camera == "orbit":
        a = -np.pi / 2 + cfg.orbit_rate * t
        eye = c + np.array([cfg.orbit_radius * np.cos(a), cfg.orbit_radius * np.sin(a), 0.6])
        return look_at(eye, c)
    base = look_at(c + np.array([0.0, -cfg.orbit_radius, 0.6]), c)
    return geo.RigidTransform(base.r + np.array([cfg.camera_speed * t, 0.0, 0.0]), base.q)


def pseudo_detect(gt: HumanState, cfg: ScenarioConfig, index: int, model: BodyModel,
                  last_visible: HumanState | None = None):
    """Noisy observation of ``gt`` for frame ``index``.

    Returns ``(observation or None, visibility mask)``.  Noise is drawn
    from a generator seeded by ``(seed, index)``.
    """
    D = model.dim
    R = cfg.noise_vector(model)
    visible = np.ones(D, dtype=bool)
    for w in cfg.occlusions:
        if not w.covers(index):
            continue
        if w.mode == "full":
            return None, np.zeros(D, dtype=bool)
        sl = model.slices()["theta"]
        for j in w.joints:
            if 1 <= j < model.n_joints:
                c = sl.start + 3 * (j - 1)
                visible[c:c + 3] = False
    rng = np.random.default_rng([cfg.seed, index])
    delta = rng.standard_normal(D) * np.sqrt(R)
    mean = boxplus(gt, delta)
    var = R * cfg.reported_noise_scale
    if not visible.all():
        var = np.where(visible, var, var * cfg.kappa)
        if last_visible is not None:
            back = boxminus(last_visible, mean)
            mean = boxplus(mean, np.where(visible, 0.0, back))
    return GaussianBodyState(mean, var), visible


def generate(cfg: ScenarioConfig, model: BodyModel) -> list[SequenceFrame]:
    rng = np.random.default_rng(cfg.seed)
    K = model.n_joints
    beta = cfg.beta_scale * rng.standard_normal(model.n_betas)
    # mild fixed posture offsets so the body is not in its exact rest pose
    rest_theta = geo.retract(np.tile(geo.IDENTITY_QUAT, (K - 1, 1)), 0.03 * rng.standard_normal((K - 1, 3)))
    phases = []
    for _ in range(K - 1):
        axis = rng.standard_normal(3)
        phases.append((axis / np.linalg.norm(axis), rng.uniform(1.0, 4.0), rng.uniform(0, 2 * np.pi)))

    frames = []
    last_visible = None
    for k in range(cfg.n_frames):
        t = k / cfg.fps
        T_WH, theta = _gt_world(cfg, model, beta, rest_theta, phases, t)
        T_WC = _camera_pose(cfg, t)
        T_CH = geo.compose(geo.inverse(T_WC), T_WH)
        gt = HumanState(beta, theta, T_CH.r, T_CH.q)
        obs, vis = pseudo_detect(gt, cfg, k, model, last_visible)
        if obs is not None and vis.all():
            last_visible = obs.mean
        frames.append(SequenceFrame(k, t, T_WC, obs, gt, vis))
    return frames
