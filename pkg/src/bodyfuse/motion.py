"""Camera/body motion disentanglement and next-state motion priors.

A history of camera-frame body states is re-expressed as relative
transforms ``T_{H_{k-1} H_{k-j}}`` between human frames, which do not depend
on how the camera moved.  A predictor extrapolates the next relative pose
``T_{H_{k-1} H_k}``, and the result is mapped back into the current camera
frame ``C_k``.

Root-pose covariances are 6x6 over ``(dr, e)`` with the geometry module's
error convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry as geo
from .body_model import boxplus
from .prob_state import GaussianBodyState

DEFAULT_HISTORY = 4


class InsufficientHistoryError(ValueError):
    pass


class WeightsError(ValueError):
    pass


def default_process_noise(n_betas: int = 10, n_joints: int = 24) -> np.ndarray:
    """Per-frame process noise: beta 1e-6, posture 1e-4, position 1e-3 m^2,
    root orientation 1e-4."""
    return np.concatenate([
        np.full(n_betas, 1e-6),
        np.full(3 * (n_joints - 1), 1e-4),
        np.full(3, 1e-3),
        np.full(3, 1e-4),
    ])


def _root_var(var: np.ndarray) -> np.ndarray:
    return var[-6:]


@dataclass(frozen=True, eq=False)
class BodyFrameHistory:
    """History re-expressed in the latest human frame ``H_{k-1}``.

    Entries are ordered oldest first; the last entry (j = 1) is the
    identity transform carrying the latest root covariance.
    """

    rel_poses: list[geo.RigidTransform]
    rel_covs: np.ndarray                 # (M, 6, 6)
    postures: list[GaussianBodyState]    # camera-frame states as given
    timestamps: np.ndarray
    T_WH_ref: geo.RigidTransform         # world pose of H_{k-1}

    def __len__(self) -> int:
        return len(self.rel_poses)

    def body_state(self, j: int) -> GaussianBodyState:
        """Entry ``j`` (list index) as a state whose root is the relative pose
        in ``H_{k-1}``, with the root variances taken from the transported
        covariance diagonal."""
        s = self.postures[j]
        var = s.var.copy()
        var[-6:] = np.diag(self.rel_covs[j])
        return GaussianBodyState(s.mean.with_root(self.rel_poses[j]), var)


@dataclass(frozen=True, eq=False)
class MotionPrior:
    """Predicted body state.  ``frame`` is ``"body"`` (root relative to
    ``H_{k-1}``) or ``"camera"`` (root in ``C_k``)."""

    state: GaussianBodyState
    root_cov: np.ndarray
    frame: str = "camera"


def to_body_frame(history, timestamps=None) -> BodyFrameHistory:
    """``history``: sequence of ``(T_WC, GaussianBodyState in C)``, oldest first."""
    history = list(history)
    if len(history) < 2:
        raise InsufficientHistoryError(f"need at least 2 history entries, got {len(history)}")
    T_WH = [geo.compose(T_WC, s.mean.root) for T_WC, s in history]
    ref_inv = geo.inverse(T_WH[-1])
    rel_poses, rel_covs = [], []
    for (T_WC, s), T in zip(history, T_WH):
        rel_poses.append(geo.compose(ref_inv, T))
        # the reference frame is held at its mean; only this entry's root
        # pose uncertainty is transported
        A = geo.compose(ref_inv, T_WC)
        _, J = geo.transform_jacobians(A, s.mean.root)
        rel_covs.append(J @ np.diag(_root_var(s.var)) @ J.T)
    if timestamps is None:
        timestamps = np.arange(len(history), dtype=float)
    return BodyFrameHistory(
        rel_poses, np.array(rel_covs), [s for _, s in history],
        np.asarray(timestamps, dtype=float), T_WH[-1],
    )


def _scaled(T: geo.RigidTransform, ratio: float) -> geo.RigidTransform:
    if ratio == 1.0:
        return T
    return geo.RigidTransform(ratio * T.r, geo.quat_power(T.q, ratio))


def predict_const_velocity(h: BodyFrameHistory, Q, dt: float | None = None) -> MotionPrior:
    """Repeat the last inter-frame body motion; carry posture and shape.

    The predicted variance is the latest entry's variance plus ``Q``.  ``dt``
    rescales the repeated motion relative to the last frame interval.
    """
    if len(h) < 2:
        raise InsufficientHistoryError("constant-velocity prediction needs 2 entries")
    Q = np.asarray(Q, dtype=float)
    delta = geo.inverse(h.rel_poses[-2])
    if dt is not None:
        last_dt = float(h.timestamps[-1] - h.timestamps[-2])
        delta = _scaled(delta, dt / last_dt)
    last = h.body_state(-1)
    var = last.var + Q
    root_cov = h.rel_covs[-1] + np.diag(Q[-6:])
    return MotionPrior(GaussianBodyState(last.mean.with_root(delta), var), root_cov, frame="body")


def predict_static(h: BodyFrameHistory, Q) -> MotionPrior:
    """Zero-motion prediction, used while only one entry is available."""
    Q = np.asarray(Q, dtype=float)
    last = h.body_state(-1)
    return MotionPrior(
        GaussianBodyState(last.mean.with_root(geo.RigidTransform.identity()), last.var + Q),
        h.rel_covs[-1] + np.diag(Q[-6:]),
        frame="body",
    )


def to_camera_frame(prior: MotionPrior, T_WC_k: geo.RigidTransform, T_WH_ref: geo.RigidTransform) -> MotionPrior:
    """Map a body-frame prior into camera frame ``C_k``; posture and shape
    pass through untouched."""
    if prior.frame != "body":
        raise ValueError("prior is already in the camera frame")
    Bt = geo.compose(geo.inverse(T_WC_k), T_WH_ref)
    P = prior.state.mean.root
    _, J = geo.transform_jacobians(Bt, P)
    cov = J @ prior.root_cov @ J.T
    cov = 0.5 * (cov + cov.T)
    var = prior.state.var.copy()
    var[-6:] = np.diag(cov)
    mean = prior.state.mean.with_root(geo.compose(Bt, P))
    return MotionPrior(GaussianBodyState(mean, var), cov, frame="camera")


def history_single(T_WC: geo.RigidTransform, s: GaussianBodyState, t: float = 0.0) -> BodyFrameHistory:
    """One-entry history (tracker bootstrap)."""
    T_WH = geo.compose(T_WC, s.mean.root)
    _, J = geo.transform_jacobians(geo.compose(geo.inverse(T_WH), T_WC), s.mean.root)
    cov = J @ np.diag(_root_var(s.var)) @ J.T
    return BodyFrameHistory([geo.RigidTransform.identity()], cov[None], [s], np.array([t]), T_WH)


# ----------------------------------------------------------------- GRU

@dataclass(frozen=True, eq=False)
class GruWeights:
    """GRU + affine decoder.  Gates ``z``, ``r`` and candidate ``h``;
    recurrence ``h' = z * h + (1 - z) * tanh(W_h x + U_h (r * h) + b_h)``.

    Input features per step (``input_dim == 2 D``): the entry's error
    coordinates about the rest posture with identity root (relative pose
    in ``H_{k-1}``), followed by its log-variances.  Decoder output
    (``2 D``): error-coordinate mean offset from the latest entry, then
    log-variances.
    """

    input_dim: int
    hidden_dim: int
    W_z: np.ndarray
    W_r: np.ndarray
    W_h: np.ndarray
    U_z: np.ndarray
    U_r: np.ndarray
    U_h: np.ndarray
    b_z: np.ndarray
    b_r: np.ndarray
    b_h: np.ndarray
    decoder_W: np.ndarray
    decoder_b: np.ndarray

    def __post_init__(self):
        I, H = int(self.input_dim), int(self.hidden_dim)
        expect = {
            "W_z": (H, I), "W_r": (H, I), "W_h": (H, I),
            "U_z": (H, H), "U_r": (H, H), "U_h": (H, H),
            "b_z": (H,), "b_r": (H,), "b_h": (H,),
        }
        for name, shape in expect.items():
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != shape:
                raise WeightsError(f"{name}: expected shape {shape}, got {a.shape}")
            object.__setattr__(self, name, a)
        dW = np.asarray(self.decoder_W, dtype=float)
        db = np.asarray(self.decoder_b, dtype=float)
        if dW.ndim != 2 or dW.shape[1] != H or db.shape != (dW.shape[0],):
            raise WeightsError(f"decoder: expected (O, {H}) and (O,), got {dW.shape} and {db.shape}")
        object.__setattr__(self, "decoder_W", dW)
        object.__setattr__(self, "decoder_b", db)

    @classmethod
    def zeros(cls, input_dim: int, hidden_dim: int, output_dim: int | None = None) -> GruWeights:
        I, H = input_dim, hidden_dim
        O = input_dim if output_dim is None else output_dim
        z = np.zeros
        return cls(I, H, z((H, I)), z((H, I)), z((H, I)), z((H, H)), z((H, H)), z((H, H)),
                   z(H), z(H), z(H), z((O, H)), z(O))

    def to_json(self) -> dict:
        d = {"input_dim": self.input_dim, "hidden_dim": self.hidden_dim}
        for name in ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h", "decoder_W", "decoder_b"):
            d[name] = getattr(self, name).tolist()
        return d


def load_gru_weights(path) -> GruWeights:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise WeightsError(f"{path}: {exc}") from exc
    keys = ("input_dim", "hidden_dim", "W_z", "W_r", "W_h", "U_z", "U_r", "U_h",
            "b_z", "b_r", "b_h", "decoder_W", "decoder_b")
    missing = [k for k in keys if k not in d]
    if missing:
        raise WeightsError(f"{path}: missing field(s) {', '.join(missing)}")
    try:
        return GruWeights(**{k: d[k] for k in keys})
    except ValueError as exc:
        raise WeightsError(f"{path}: {exc}") from exc


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def gru_forward(w: GruWeights, X, h0=None) -> tuple[np.ndarray, np.ndarray]:
    """Run the GRU over rows of ``X`` (T, input_dim); return the decoder
    output after the last step and the final hidden state."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != w.input_dim:
        raise WeightsError(f"feature length {X.shape[1]} != input_dim {w.input_dim}")
    h = np.zeros(w.hidden_dim) if h0 is None else np.asarray(h0, dtype=float).copy()
    for x in X:
        z = _sigmoid(w.W_z @ x + w.U_z @ h + w.b_z)
        r = _sigmoid(w.W_r @ x + w.U_r @ h + w.b_r)
        cand = np.tanh(w.W_h @ x + w.U_h @ (r * h) + w.b_h)
        h = z * h + (1.0 - z) * cand
    return w.decoder_W @ h + w.decoder_b, h


def gru_features(h: BodyFrameHistory) -> np.ndarray:
    rows = []
    for j in range(len(h)):
        s = h.body_state(j)
        m = s.mean
        coords = np.concatenate([
            m.beta,
            geo.quat_error(geo.IDENTITY_QUAT, m.theta).reshape(-1),
            m.r,
            geo.quat_error(geo.IDENTITY_QUAT, m.q),
        ])
        rows.append(np.concatenate([coords, np.log(s.var)]))
    return np.array(rows)


def predict_gru(h: BodyFrameHistory, weights: GruWeights) -> MotionPrior:
    X = gru_features(h)
    D = X.shape[1] // 2
    if weights.input_dim != 2 * D or weights.decoder_b.shape[0] != 2 * D:
        raise WeightsError(
            f"weights expect input {weights.input_dim} / output {weights.decoder_b.shape[0]}, "
            f"history features need {2 * D}"
        )
    out, _ = gru_forward(weights, X)
    last = h.body_state(-1)
    mean = boxplus(last.mean, out[:D])
    var = np.exp(out[D:])
    return MotionPrior(GaussianBodyState(mean, var), np.diag(var[-6:]), frame="body")
