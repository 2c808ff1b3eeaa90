"""End-to-end tracker: motion prior from history, fusion with the image
prior, and history update."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .. import geometry as geo
from .. import motion
from ..body_model import BodyModel
from ..fusion import FusionConfig, fuse
from ..prob_state import GaussianBodyState, PointCloudGaussian, propagate_vertices
from .scenario import SequenceFrame

PREDICTORS = ("constvel", "gru", "none")


@dataclass
class TrackerConfig:
    history: int = motion.DEFAULT_HISTORY
    predictor: str = "constvel"    # "none" = image only, frozen last estimate under occlusion
    process_noise: np.ndarray | None = None
    gru_weights: motion.GruWeights | None = None
    fusion: FusionConfig = field(default_factory=FusionConfig)
    propagate_vertices: bool = False

    def __post_init__(self):
        if self.predictor not in PREDICTORS:
            raise ValueError(f"predictor must be one of {PREDICTORS}, got {self.predictor!r}")
        if self.predictor == "gru" and self.gru_weights is None:
            raise ValueError("gru predictor needs weights")
        if self.history < 2:
            raise ValueError("history length must be >= 2")


@dataclass
class TrackOutput:
    index: int
    t: float
    source: str                    # "init", "fused", "motion", "image"
    posterior: GaussianBodyState   # camera frame
    T_WC: geo.RigidTransform
    prior: GaussianBodyState | None = None
    vertices: PointCloudGaussian | None = None

    @property
    def T_WH(self) -> geo.RigidTransform:
        return geo.compose(self.T_WC, self.posterior.mean.root)


class Tracker:
    """Single-person tracker.  Not thread-safe; drive one instance from one
    thread at a time."""

    def __init__(self, model: BodyModel, cfg: TrackerConfig | None = None):
        self.model = model
        self.cfg = cfg or TrackerConfig()
        Q = self.cfg.process_noise
        self.Q = (motion.default_process_noise(model.n_betas, model.n_joints)
                  if Q is None else np.asarray(Q, dtype=float))
        if self.Q.shape != (model.dim,):
            raise ValueError(f"process noise must have length {model.dim}")
        self.buffer: deque = deque(maxlen=self.cfg.history)
        self.last: TrackOutput | None = None

    @property
    def initialized(self) -> bool:
        return self.last is not None

    def motion_prior(self, T_WC: geo.RigidTransform, t: float) -> motion.MotionPrior:
        entries = list(self.buffer)
        if len(entries) >= 2:
            h = motion.to_body_frame([(T, s) for T, s, _ in entries], [ts for _, _, ts in entries])
        else:
            T, s, ts = entries[0]
            h = motion.history_single(T, s, ts)
        if self.cfg.predictor == "none" or len(h) < 2:
            p = motion.predict_static(h, self.Q)
        elif self.cfg.predictor == "constvel":
            p = motion.predict_const_velocity(h, self.Q, dt=t - float(h.timestamps[-1]))
        else:
            p = motion.predict_gru(h, self.cfg.gru_weights)
        return motion.to_camera_frame(p, T_WC, h.T_WH_ref)

    def step(self, frame: SequenceFrame) -> TrackOutput | None:
        """Process one frame; returns None while waiting for a first
        observation."""
        obs = frame.observation
        if not self.initialized:
            if obs is None:
                return None
            out = TrackOutput(frame.index, frame.t, "init", obs, frame.T_WC)
        else:
            prior = self.motion_prior(frame.T_WC, frame.t).state
            if obs is None:
                out = TrackOutput(frame.index, frame.t, "motion", prior, frame.T_WC, prior)
            elif self.cfg.predictor == "none":
                out = TrackOutput(frame.index, frame.t, "image", obs, frame.T_WC, prior)
            else:
                out = TrackOutput(frame.index, frame.t, "fused", fuse(obs, prior, self.cfg.fusion),
                                  frame.T_WC, prior)
        if self.cfg.propagate_vertices:
            out.vertices = propagate_vertices(self.model, out.posterior)
        self.buffer.append((frame.T_WC, out.posterior, frame.t))
        self.last = out
        return out


def track_step(tr: Tracker, frame: SequenceFrame) -> TrackOutput | None:
    return tr.step(frame)


def run(model: BodyModel, frames, cfg: TrackerConfig | None = None) -> list[TrackOutput | None]:
    tr = Tracker(model, cfg)
    return [tr.step(f) for f in frames]
