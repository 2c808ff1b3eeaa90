"""Articulated body mesh: shape blendshapes plus linear blend skinning.

The body has ``K`` joints with joint 0 as the kinematic root.  Joint 0 never
rotates inside the human frame H; the root pose ``(r_CH, q_CH)`` places H in
the camera frame.  Joints ``1..K-1`` carry one quaternion each (the
posture), relative to their parent.

Error coordinates of a state are laid out as::

    [d_beta (B), d_theta (3 * (K - 1)), d_r (3), d_q_root (3)]

which for the default SMPL-sized body (B=10, K=24) has length 85.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry as geo
from . import kernels

# SMPL kinematic tree
SMPL_PARENTS = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21]
)
SMPL_JOINT_NAMES = (
    "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
    "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
    "neck", "left_collar", "right_collar", "head", "left_shoulder",
    "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
    "left_hand", "right_hand",
)
# approximate neutral rest joints (meters, y up, facing +z)
_SMPL_REST_JOINTS = np.array([
    [0.000, 0.000, 0.000], [0.060, -0.090, 0.000], [-0.060, -0.090, 0.000],
    [0.000, 0.110, -0.020], [0.100, -0.470, 0.000], [-0.100, -0.470, 0.000],
    [0.000, 0.240, 0.010], [0.090, -0.870, -0.040], [-0.090, -0.870, -0.040],
    [0.000, 0.300, 0.020], [0.110, -0.930, 0.080], [-0.110, -0.930, 0.080],
    [0.000, 0.510, -0.010], [0.080, 0.420, -0.010], [-0.080, 0.420, -0.010],
    [0.000, 0.580, 0.040], [0.190, 0.450, -0.020], [-0.190, 0.450, -0.020],
    [0.450, 0.430, -0.040], [-0.450, 0.430, -0.040], [0.700, 0.440, -0.040],
    [-0.700, 0.440, -0.040], [0.790, 0.430, -0.050], [-0.790, 0.430, -0.050],
])
_SMPL_RADII = np.array([
    0.12, 0.08, 0.08, 0.11, 0.06, 0.06, 0.11, 0.045, 0.045, 0.12, 0.04, 0.04,
    0.05, 0.05, 0.05, 0.09, 0.05, 0.05, 0.04, 0.04, 0.035, 0.035, 0.03, 0.03,
])

MAX_INFLUENCES = 4


class ModelError(ValueError):
    """Raised for malformed or inconsistent body models and states."""


@dataclass(frozen=True, eq=False)
class BodyModel:
    template: np.ndarray        # (N, 3)
    shape_dirs: np.ndarray      # (N, 3, B)
    joint_regressor: np.ndarray  # (K, N)
    parents: np.ndarray         # (K,), parents[0] == -1
    skin_weights: np.ndarray    # (N, K)
    extra_regressor: np.ndarray | None = None  # (E, N), regresses extra joints from posed vertices
    # derived data, filled in __post_init__
    skin_idx: np.ndarray = field(init=False, repr=False)
    skin_w: np.ndarray = field(init=False, repr=False)
    levels: tuple = field(init=False, repr=False)  # non-root joints grouped by tree depth

    def __post_init__(self):
        _validate(self)
        idx = np.argsort(-self.skin_weights, axis=1, kind="stable")[:, :MAX_INFLUENCES]
        w = np.take_along_axis(self.skin_weights, idx, axis=1)
        object.__setattr__(self, "skin_idx", np.ascontiguousarray(idx, dtype=np.intp))
        object.__setattr__(self, "skin_w", np.ascontiguousarray(w))
        depth = np.zeros(self.parents.shape[0], dtype=np.intp)
        for k in range(1, depth.size):
            depth[k] = depth[self.parents[k]] + 1
        object.__setattr__(self, "levels", tuple(np.flatnonzero(depth == d) for d in range(1, depth.max() + 1)))
        for name in ("template", "shape_dirs", "joint_regressor", "parents", "skin_weights"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return self.template.shape[0]

    @property
    def n_joints(self) -> int:
        return self.parents.shape[0]

    @property
    def n_betas(self) -> int:
        return self.shape_dirs.shape[2]

    @property
    def dim(self) -> int:
        """Length of the error-coordinate vector."""
        return self.n_betas + 3 * (self.n_joints - 1) + 6

    def slices(self) -> dict[str, slice]:
        B, P = self.n_betas, 3 * (self.n_joints - 1)
        return {
            "beta": slice(0, B),
            "theta": slice(B, B + P),
            "r": slice(B + P, B + P + 3),
            "q": slice(B + P + 3, B + P + 6),
        }

    def to_json(self) -> dict:
        d = {
            "template": self.template.tolist(),
            "shape_dirs": self.shape_dirs.tolist(),
            "joint_regressor": self.joint_regressor.tolist(),
            "parents": [int(p) for p in self.parents],
            "skin_weights": self.skin_weights.tolist(),
        }
        if self.extra_regressor is not None:
            d["extra_regressor"] = self.extra_regressor.tolist()
        return d


def _validate(m: BodyModel) -> None:
    def arr(name, ndim):
        a = np.asarray(getattr(m, name), dtype=np.int64 if name == "parents" else float)
        if a.ndim != ndim:
            raise ModelError(f"{name}: expected {ndim}-d array, got shape {a.shape}")
        if a.dtype.kind == "f" and not np.all(np.isfinite(a)):
            raise ModelError(f"{name}: non-finite entries")
        object.__setattr__(m, name, np.ascontiguousarray(a))
        return a

    T = arr("template", 2)
    S = arr("shape_dirs", 3)
    Jr = arr("joint_regressor", 2)
    par = arr("parents", 1)
    W = arr("skin_weights", 2)
    N, K = T.shape[0], par.shape[0]
    if T.shape[1] != 3:
        raise ModelError(f"template: expected (N, 3), got {T.shape}")
    if S.shape[:2] != (N, 3):
        raise ModelError(f"shape_dirs: expected ({N}, 3, B), got {S.shape}")
    if Jr.shape != (K, N):
        raise ModelError(f"joint_regressor: expected ({K}, {N}), got {Jr.shape}")
    if W.shape != (N, K):
        raise ModelError(f"skin_weights: expected ({N}, {K}), got {W.shape}")
    if K < 1 or par[0] != -1:
        raise ModelError("parents: joint 0 must be the root (parent -1)")
    for k in range(1, K):
        if not 0 <= par[k] < K:
            raise ModelError(f"parents: joint {k} has invalid parent {par[k]}")
    for k in range(1, K):
        seen, j = set(), k
        while j != 0:
            if j in seen:
                raise ModelError(f"parents: cycle through joint {k}")
            seen.add(j)
            j = par[j]
    if np.any(par[1:] >= np.arange(1, K)):
        raise ModelError("parents: joints must be topologically ordered (parent index < child index)")
    bad = np.flatnonzero(np.abs(Jr.sum(axis=1) - 1.0) > 1e-9)
    if bad.size:
        raise ModelError(f"joint_regressor: row {bad[0]} sums to {Jr[bad[0]].sum():.12g}, expected 1")
    bad = np.flatnonzero(np.abs(W.sum(axis=1) - 1.0) > 1e-9)
    if bad.size:
        raise ModelError(f"skin_weights: row {bad[0]} sums to {W[bad[0]].sum():.12g}, expected 1")
    if np.any(W < 0.0):
        raise ModelError("skin_weights: negative entries")
    if np.any(np.count_nonzero(W, axis=1) > MAX_INFLUENCES):
        raise ModelError(f"skin_weights: more than {MAX_INFLUENCES} nonzero influences per vertex")
    if m.extra_regressor is not None:
        E = np.ascontiguousarray(np.asarray(m.extra_regressor, dtype=float))
        if E.ndim != 2 or E.shape[1] != N:
            raise ModelError(f"extra_regressor: expected (E, {N}), got {E.shape}")
        if np.any(np.abs(E.sum(axis=1) - 1.0) > 1e-9):
            raise ModelError("extra_regressor: rows must sum to 1")
        object.__setattr__(m, "extra_regressor", E)


@dataclass(frozen=True, eq=False)
class HumanState:
    """Body state in camera coordinates: shape, posture and root pose."""

    beta: np.ndarray   # (B,)
    theta: np.ndarray  # (K-1, 4) unit quaternions
    r: np.ndarray      # (3,) human origin in the camera frame, meters
    q: np.ndarray      # (4,) human orientation in the camera frame

    def __post_init__(self):
        object.__setattr__(self, "beta", np.array(self.beta, dtype=float).reshape(-1))
        object.__setattr__(self, "theta", geo.normalize(np.array(self.theta, dtype=float).reshape(-1, 4)))
        object.__setattr__(self, "r", np.array(self.r, dtype=float).reshape(3))
        object.__setattr__(self, "q", geo.normalize(np.array(self.q, dtype=float).reshape(4)))

    @classmethod
    def rest(cls, model: BodyModel, root: geo.RigidTransform | None = None) -> HumanState:
        root = root or geo.RigidTransform.identity()
        theta = np.tile(geo.IDENTITY_QUAT, (model.n_joints - 1, 1))
        return cls(np.zeros(model.n_betas), theta, root.r, root.q)

    @property
    def root(self) -> geo.RigidTransform:
        return geo.RigidTransform(self.r, self.q)

    def with_root(self, T: geo.RigidTransform) -> HumanState:
        return HumanState(self.beta, self.theta, T.r, T.q)

    def to_json(self) -> dict:
        return {
            "beta": self.beta.tolist(),
            "theta": self.theta.tolist(),
            "r": self.r.tolist(),
            "q": self.q.tolist(),
        }

    @classmethod
    def from_json(cls, d: dict) -> HumanState:
        return cls(d["beta"], d["theta"], d["r"], d["q"])


def boxplus(state: HumanState, delta) -> HumanState:
    """Move ``state`` by an error-coordinate vector."""
    delta = np.asarray(delta, dtype=float)
    B, P = state.beta.shape[0], 3 * state.theta.shape[0]
    if delta.shape != (B + P + 6,):
        raise ModelError(f"error vector must have length {B + P + 6}, got {delta.shape}")
    theta = geo.retract(state.theta, delta[B:B + P].reshape(-1, 3))
    return HumanState(
        state.beta + delta[:B],
        theta,
        state.r + delta[B + P:B + P + 3],
        geo.retract(state.q, delta[B + P + 3:]),
    )


def boxminus(target: HumanState, base: HumanState) -> np.ndarray:
    """Error coordinates ``d`` with ``boxplus(base, d) == target``."""
    return np.concatenate([
        target.beta - base.beta,
        geo.quat_error(base.theta, target.theta).reshape(-1),
        target.r - base.r,
        geo.quat_error(base.q, target.q),
    ])


def check_state(model: BodyModel, state: HumanState) -> None:
    if state.beta.shape[0] != model.n_betas:
        raise ModelError(f"beta has {state.beta.shape[0]} entries, model expects {model.n_betas}")
    if state.theta.shape[0] != model.n_joints - 1:
        raise ModelError(f"theta has {state.theta.shape[0]} quaternions, model expects {model.n_joints - 1}")


@dataclass(frozen=True)
class Kinematics:
    """Posed skeleton in the human frame."""

    shaped: np.ndarray     # (N, 3) shaped rest vertices
    rest_joints: np.ndarray  # (K, 3)
    Rg: np.ndarray         # (K, 3, 3) global joint rotations
    tg: np.ndarray         # (K, 3) posed joint positions
    offs: np.ndarray       # (K, 3) tg - Rg @ rest_joints, exactly zero at rest


def kinematics(model: BodyModel, state: HumanState) -> Kinematics:
    check_state(model, state)
    shaped = model.template + model.shape_dirs @ state.beta
    J = model.joint_regressor @ shaped
    K = model.n_joints
    Rloc = geo.quat_to_matrix(state.theta)
    Rg = np.empty((K, 3, 3))
    tg = np.empty((K, 3))
    offs = np.zeros((K, 3))
    Rg[0] = np.eye(3)
    tg[0] = J[0]
    par = model.parents
    # one batched update per tree level; offs stays exactly zero at rest
    for ks in model.levels:
        ps = par[ks]
        Rp = Rg[ps]
        Rl = Rloc[ks - 1]
        Rg[ks] = Rp @ Rl
        tg[ks] = tg[ps] + (Rp @ (J[ks] - J[ps])[:, :, None])[:, :, 0]
        offs[ks] = offs[ps] + (Rp @ (J[ks] - (Rl @ J[ks][:, :, None])[:, :, 0])[:, :, None])[:, :, 0]
    return Kinematics(shaped, J, Rg, tg, offs)


def _skin(model: BodyModel, kin: Kinematics) -> np.ndarray:
    # displacement form: exact at the rest pose
    idx, w = model.skin_idx, model.skin_w
    dR = kin.Rg - np.eye(3)
    x = np.einsum("nsij,nj->nsi", dR[idx], kin.shaped) + kin.offs[idx]
    return kin.shaped + np.einsum("ns,nsi->ni", w, x)


def forward(model: BodyModel, state: HumanState) -> tuple[np.ndarray, np.ndarray]:
    """Posed joints (K, 3) and vertices (N, 3) in the human frame."""
    kin = kinematics(model, state)
    return kin.tg.copy(), _skin(model, kin)


def to_camera(model: BodyModel, state: HumanState) -> np.ndarray:
    _, verts = forward(model, state)
    return geo.apply(state.root, verts)


def joints_camera(model: BodyModel, state: HumanState) -> np.ndarray:
    kin = kinematics(model, state)
    return geo.apply(state.root, kin.tg)


def _beta_joint_terms(model: BodyModel, kin: Kinematics) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of posed joints w.r.t. beta, (K, 3, B), and the per-joint
    skinning offsets' beta derivatives, (K, 3, B)."""
    dJ = np.einsum("kn,nib->kib", model.joint_regressor, model.shape_dirs)
    K = model.n_joints
    dtg = np.empty_like(dJ)
    dtg[0] = dJ[0]
    par = model.parents
    for k in range(1, K):
        p = par[k]
        dtg[k] = dtg[p] + kin.Rg[p] @ (dJ[k] - dJ[p])
    c = dtg - np.einsum("kij,kjb->kib", kin.Rg, dJ)
    return dtg, c


def vertex_jacobian(model: BodyModel, state: HumanState, *, backend: str | None = None) -> np.ndarray:
    """Jacobian of camera-frame vertices w.r.t. error coordinates, (3N, D).

    Rows are ordered vertex-major then xyz."""
    verts, J = vertices_and_jacobian(model, state, backend=backend)
    return J.reshape(3 * model.n_vertices, model.dim)


def vertices_and_jacobian(model: BodyModel, state: HumanState, *, backend: str | None = None):
    """Camera-frame vertices (N, 3) and their Jacobian as (N, 3, D)."""
    kin = kinematics(model, state)
    _, cterm = _beta_joint_terms(model, kin)
    impl = kernels.get_backend(backend)
    return impl.skin_jacobian(
        kin.shaped, model.skin_idx, model.skin_w, kin.Rg, kin.tg, kin.rest_joints,
        model.parents.astype(np.intp), np.ascontiguousarray(model.shape_dirs),
        np.ascontiguousarray(cterm), state.root.R, state.r,
    )


def joint_jacobian(model: BodyModel, state: HumanState) -> np.ndarray:
    """Jacobian of camera-frame kinematic joints, (3K, D)."""
    kin = kinematics(model, state)
    dtg, _ = _beta_joint_terms(model, kin)
    K, B, D = model.n_joints, model.n_betas, model.dim
    sl = model.slices()
    R = state.root.R
    J = np.zeros((K, 3, D))
    J[:, :, sl["beta"]] = np.einsum("ij,kjb->kib", R, dtg)
    par = model.parents
    for k in range(1, K):
        i = k
        while i > 0:
            blk = -2.0 * geo.skew(kin.tg[k] - kin.tg[i]) @ kin.Rg[par[i]]
            col = B + 3 * (i - 1)
            J[k, :, col:col + 3] = R @ blk
            i = par[i]
    J[:, :, sl["r"]] = np.eye(3)
    joints_c = geo.apply(state.root, kin.tg)
    J[:, :, sl["q"]] = -2.0 * geo.skew(joints_c - state.r)
    return J.reshape(3 * K, D)


def regressed_joints(model: BodyModel, state: HumanState) -> tuple[np.ndarray, np.ndarray]:
    """Extra joints regressed from posed camera-frame vertices and their
    Jacobian (3E, D).  Requires ``model.extra_regressor``."""
    if model.extra_regressor is None:
        raise ModelError("model has no extra_regressor")
    verts, J = vertices_and_jacobian(model, state)
    E = model.extra_regressor
    joints = E @ verts
    JE = np.einsum("en,nid->eid", E, J)
    return joints, JE.reshape(-1, model.dim)


# ---------------------------------------------------------------- I/O

def load_model(path) -> BodyModel:
    """Load a body model from the JSON schema (``pose_dirs`` is ignored)."""
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"{path}: {exc}") from exc
    return model_from_dict(d)


def model_from_dict(d: dict) -> BodyModel:
    missing = [k for k in ("template", "shape_dirs", "joint_regressor", "parents", "skin_weights") if k not in d]
    if missing:
        raise ModelError(f"missing field(s): {', '.join(missing)}")
    try:
        return BodyModel(
            template=np.asarray(d["template"], dtype=float),
            shape_dirs=np.asarray(d["shape_dirs"], dtype=float),
            joint_regressor=np.asarray(d["joint_regressor"], dtype=float),
            parents=np.asarray(d["parents"], dtype=np.int64),
            skin_weights=np.asarray(d["skin_weights"], dtype=float),
            extra_regressor=None if d.get("extra_regressor") is None else np.asarray(d["extra_regressor"], dtype=float),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(str(exc)) from exc


def save_model(model: BodyModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_json()))


def synth_model(n_vertices: int = 6890, seed: int = 0, n_betas: int = 10, n_extra: int = 0) -> BodyModel:
    """Procedural capsule-limb body with the SMPL kinematic tree.

    Each joint owns one capsule running from the joint toward its first
    child (leaves extend along the parent direction).  Vertices near the
    proximal end blend with the parent joint.  ``n_extra`` > 0 adds an
    extended regressor of that many joints sampled over the surface.
    """
    K = len(SMPL_PARENTS)
    if n_vertices < K:
        raise ModelError(f"n_vertices must be >= {K}")
    rng = np.random.default_rng(seed)
    J = _SMPL_REST_JOINTS
    ends = np.empty_like(J)
    for k in range(K):
        children = np.flatnonzero(SMPL_PARENTS == k)
        if k == 0:
            ends[k] = J[3]
        elif children.size:
            ends[k] = J[children[0]]
        else:
            d = J[k] - J[SMPL_PARENTS[k]]
            ends[k] = J[k] + 0.6 * d
    lengths = np.linalg.norm(ends - J, axis=1) + _SMPL_RADII
    counts = np.maximum(1, np.floor(lengths / lengths.sum() * n_vertices).astype(int))
    # hand the remainder to the longest segments, deterministically
    order = np.argsort(-lengths, kind="stable")
    i = 0
    while counts.sum() < n_vertices:
        counts[order[i % K]] += 1
        i += 1
    while counts.sum() > n_vertices:
        j = order[i % K]
        if counts[j] > 1:
            counts[j] -= 1
        i += 1

    golden = np.pi * (3.0 - np.sqrt(5.0))
    verts, weights, owner, tparam = [], [], [], []
    for k in range(K):
        a, b = J[k], ends[k]
        axis = b - a
        L = np.linalg.norm(axis)
        u = axis / L
        helper = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = np.cross(u, helper)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(u, e1)
        m = counts[k]
        for j in range(m):
            t = (j + 0.5) / m
            ang = golden * j
            rad = _SMPL_RADII[k] * (0.8 + 0.2 * np.sin(np.pi * t))
            verts.append(a + t * axis + rad * (np.cos(ang) * e1 + np.sin(ang) * e2))
            w = np.zeros(K)
            p = SMPL_PARENTS[k]
            if p >= 0 and t < 0.25:
                wp = 0.5 * (1.0 - t / 0.25)
                w[p] = wp
                w[k] = 1.0 - wp
            else:
                w[k] = 1.0
            weights.append(w)
            owner.append(k)
            tparam.append(t)
    template = np.array(verts)
    skin = np.array(weights)
    owner = np.array(owner)
    tparam = np.array(tparam)

    # joint regressor: Gaussian-weighted vertices nearest each rest joint
    reg = np.zeros((K, n_vertices))
    for k in range(K):
        d = np.linalg.norm(template - J[k], axis=1)
        near = np.argsort(d, kind="stable")[:8]
        w = np.exp(-((d[near] - d[near[0]]) / 0.05) ** 2)
        reg[k, near] = w / w.sum()

    # shape directions: height, girth, then smooth random fields
    shape_dirs = np.zeros((n_vertices, 3, n_betas))
    if n_betas > 0:
        shape_dirs[:, 1, 0] = 0.03 * template[:, 1]
    if n_betas > 1:
        radial = template - (J[owner] + tparam[:, None] * (ends[owner] - J[owner]))
        shape_dirs[:, :, 1] = 0.15 * radial
    for b in range(2, n_betas):
        freq = rng.normal(size=(3, 3)) * 2.0
        phase = rng.uniform(0.0, 2.0 * np.pi, size=3)
        amp = 0.005 * rng.uniform(0.5, 1.0, size=3)
        shape_dirs[:, :, b] = amp * np.sin(template @ freq.T + phase)

    extra = None
    if n_extra > 0:
        extra = np.zeros((n_extra, n_vertices))
        picks = rng.choice(n_vertices, size=(n_extra, 3), replace=True)
        for e in range(n_extra):
            extra[e, picks[e]] += 1.0 / 3.0
    return BodyModel(template, shape_dirs, reg, SMPL_PARENTS.copy(), skin, extra)
