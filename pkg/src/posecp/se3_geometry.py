"""SO(3)/SE(3) primitives and pose nonconformity distances.

Rotations are stored as 3x3 matrices. The scalar functions (``so3_log``,
``so3_exp``, ``geodesic_score``, ``euclidean_score``) operate on single
values; the ``*_batch`` variants take stacked ``(N, 3, 3)`` / ``(N, 3)``
arrays and are what the trajectory-scale code paths use.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from posecp.errors import ValidationError

ORTHO_TOL = 1e-9
QUAT_NORM_TOL = 1e-6
# log branch switches to diagonal axis extraction below this trace
NEAR_PI_TRACE = -1.0 + 1e-6
# Taylor branch for theta/sin(theta) below this angle
SMALL_ANGLE = 1e-4


def hat(omega: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix(es) of 3-vector(s), shape ``(..., 3, 3)``."""
    omega = np.asarray(omega, dtype=float)
    x, y, z = omega[..., 0], omega[..., 1], omega[..., 2]
    o = np.zeros_like(x)
    return np.stack(
        [
            np.stack([o, -z, y], axis=-1),
            np.stack([z, o, -x], axis=-1),
            np.stack([-y, x, o], axis=-1),
        ],
        axis=-2,
    )


def vee(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def check_rotation_matrix(m: np.ndarray, tol: float = ORTHO_TOL) -> None:
    """Raise ``ValidationError`` unless every matrix in ``m`` lies in SO(3)."""
    m = np.asarray(m, dtype=float)
    if m.shape[-2:] != (3, 3):
        raise ValidationError(f"rotation must have shape (..., 3, 3), got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("rotation contains non-finite entries")
    gram = np.einsum("...ji,...jk->...ik", m, m)
    ortho_err = np.max(np.abs(gram - np.eye(3)), initial=0.0)
    if ortho_err > tol:
        raise ValidationError(
            f"rotation columns are not orthonormal (max |R^T R - I| = {ortho_err:.3e} > {tol:g})"
        )
    det_err = np.max(np.abs(np.linalg.det(m) - 1.0), initial=0.0)
    if det_err > tol:
        raise ValidationError(
            f"rotation determinant is not +1 (max |det R - 1| = {det_err:.3e} > {tol:g})"
        )


def quat_to_matrix(q: np.ndarray, tol: float = QUAT_NORM_TOL) -> np.ndarray:
    """Convert scalar-first unit quaternion(s) ``(qw, qx, qy, qz)`` to matrices.

    Quaternions whose norm is within ``tol`` of 1 are renormalized; anything
    further off is rejected.
    """
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != 4:
        raise ValidationError(f"quaternion must have 4 components, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValidationError("quaternion contains non-finite entries")
    norm = np.linalg.norm(q, axis=-1)
    bad = np.abs(norm - 1.0) > tol
    if np.any(bad):
        worst = float(np.max(np.abs(norm - 1.0)))
        raise ValidationError(
            f"quaternion norm deviates from 1 by {worst:.3e} (tolerance {tol:g})"
        )
    q = q / norm[..., None]
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Scalar-first quaternion(s) with ``qw >= 0`` for rotation matrix(es)."""
    m = np.asarray(m, dtype=float)
    flat = m.reshape(-1, 3, 3)
    out = np.empty((flat.shape[0], 4))
    for n, r in enumerate(flat):
        tr = np.trace(r)
        if tr > 0:
            s = 2.0 * np.sqrt(tr + 1.0)
            q = [0.25 * s, (r[2, 1] - r[1, 2]) / s, (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = 2.0 * np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2])
            q = [(r[2, 1] - r[1, 2]) / s, 0.25 * s, (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        elif r[1, 1] > r[2, 2]:
            s = 2.0 * np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2])
            q = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s, 0.25 * s, (r[1, 2] + r[2, 1]) / s]
        else:
            s = 2.0 * np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1])
            q = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s, (r[1, 2] + r[2, 1]) / s, 0.25 * s]
        q = np.asarray(q)
        q /= np.linalg.norm(q)
        out[n] = -q if q[0] < 0 else q
    return out.reshape(m.shape[:-2] + (4,))


@dataclass(frozen=True, eq=False)
class Rotation:
    """An element of SO(3), validated on construction."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValidationError(f"rotation must be 3x3, got shape {m.shape}")
        check_rotation_matrix(m)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.eye(3))

    @classmethod
    def from_quaternion(cls, q) -> "Rotation":
        """Build from a scalar-first quaternion ``(qw, qx, qy, qz)``."""
        return cls(quat_to_matrix(q))

    @classmethod
    def from_rotvec(cls, omega) -> "Rotation":
        return so3_exp(omega)

    def as_quaternion(self) -> np.ndarray:
        return matrix_to_quat(self.matrix)

    def inverse(self) -> "Rotation":
        return Rotation(self.matrix.T)

    def __matmul__(self, other: "Rotation") -> "Rotation":
        return Rotation(self.matrix @ other.matrix)

    def __eq__(self, other):
        return isinstance(other, Rotation) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``x -> R x + t``."""

    rotation: Rotation
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if not isinstance(self.rotation, Rotation):
            object.__setattr__(self, "rotation", Rotation(self.rotation))
        t = np.array(self.translation, dtype=float).reshape(-1)
        if t.shape != (3,):
            raise ValidationError(f"translation must be a 3-vector, got shape {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ValidationError("translation components must be finite")
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(Rotation.identity(), np.zeros(3))

    @property
    def R(self) -> np.ndarray:
        return self.rotation.matrix

    @property
    def t(self) -> np.ndarray:
        return self.translation

    def inverse(self) -> "Pose":
        rt = self.R.T
        return Pose(Rotation(rt), -rt @ self.t)

    def compose(self, other: "Pose") -> "Pose":
        return Pose(Rotation(self.R @ other.R), self.R @ other.t + self.t)

    __matmul__ = compose

    def __eq__(self, other):
        return (
            isinstance(other, Pose)
            and self.rotation == other.rotation
            and np.array_equal(self.translation, other.translation)
        )

    def __hash__(self):
        return hash((self.rotation, self.translation.tobytes()))


@dataclass(frozen=True)
class ScoreWeights:
    """Weights on the squared rotation and translation error terms."""

    w_rot: float = 1.0
    w_trans: float = 1.0

    def __post_init__(self):
        for name in ("w_rot", "w_trans"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ValidationError(f"{name} must be a finite nonnegative number, got {v}")
            object.__setattr__(self, name, v)
        if self.w_rot == 0 and self.w_trans == 0:
            raise ValidationError("w_rot and w_trans cannot both be zero")

    def to_dict(self) -> dict:
        return {"w_rot": self.w_rot, "w_trans": self.w_trans}


def _as_matrix(r) -> np.ndarray:
    if isinstance(r, Rotation):
        return r.matrix
    return np.asarray(r, dtype=float)


def so3_log_batch(mats: np.ndarray) -> np.ndarray:
    """Rotation vectors for a stack of rotation matrices (no validation).

    The angle comes from ``atan2(|vee(R - R^T)| / 2, (tr R - 1) / 2)``, which
    stays accurate at both ends of ``[0, pi]``. Near ``pi`` the axis is taken
    from the dominant column of ``(R + R^T)/2 - cos(theta) I``, with its sign
    fixed from the antisymmetric part.
    """
    mats = np.asarray(mats, dtype=float)
    single = mats.ndim == 2
    m = mats.reshape(-1, 3, 3)
    tr = np.trace(m, axis1=1, axis2=2)
    skew = vee(m - np.swapaxes(m, 1, 2))  # 2 sin(theta) axis
    sin_t = 0.5 * np.linalg.norm(skew, axis=1)
    cos_t = 0.5 * (tr - 1.0)
    theta = np.arctan2(sin_t, cos_t)

    out = np.empty((m.shape[0], 3))
    small = theta < SMALL_ANGLE
    near_pi = tr < NEAR_PI_TRACE
    regular = ~(small | near_pi)

    t2 = theta[small] ** 2
    out[small] = 0.5 * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0)[:, None] * skew[small]
    out[regular] = (0.5 * theta[regular] / sin_t[regular])[:, None] * skew[regular]

    for n in np.flatnonzero(near_pi):
        b = 0.5 * (m[n] + m[n].T) - cos_t[n] * np.eye(3)  # (1 - cos) a a^T
        j = int(np.argmax(np.diag(b)))
        axis = b[:, j] / np.linalg.norm(b[:, j])
        if axis @ skew[n] < 0:
            axis = -axis
        out[n] = theta[n] * axis
    return out[0] if single else out.reshape(mats.shape[:-2] + (3,))


def so3_log(r) -> np.ndarray:
    """Axis-angle vector ``omega`` with ``|omega| = theta in [0, pi]``.

    Raises ``ValidationError`` if ``r`` is not a proper rotation.
    """
    m = _as_matrix(r)
    if not isinstance(r, Rotation):
        if m.shape != (3, 3):
            raise ValidationError(f"rotation must be 3x3, got shape {m.shape}")
        check_rotation_matrix(m)
    return so3_log_batch(m)


def rodrigues(omega: np.ndarray) -> np.ndarray:
    """Rodrigues' formula on any rotation vector(s), no angle restriction."""
    omega = np.asarray(omega, dtype=float)
    single = omega.ndim == 1
    w = omega.reshape(-1, 3)
    theta = np.linalg.norm(w, axis=1)
    t2 = theta * theta
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - t2 / 6.0 + t2 * t2 / 120.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - t2 / 24.0 + t2 * t2 / 720.0, (1.0 - np.cos(safe)) / (safe * safe))
    k = hat(w)
    out = np.eye(3) + a[:, None, None] * k + b[:, None, None] * (k @ k)
    return out[0] if single else out.reshape(omega.shape[:-1] + (3, 3))


def so3_exp(omega) -> Rotation:
    """Rotation for axis-angle ``omega`` with ``|omega| <= pi + 1e-6``."""
    omega = np.asarray(omega, dtype=float).reshape(-1)
    if omega.shape != (3,) or not np.all(np.isfinite(omega)):
        raise ValidationError(f"omega must be a finite 3-vector, got {omega!r}")
    theta = float(np.linalg.norm(omega))
    if theta > np.pi + 1e-6:
        raise ValidationError(f"rotation angle {theta:.6g} exceeds pi + 1e-6")
    return Rotation(rodrigues(omega))


def _check_weights(w: ScoreWeights | None) -> ScoreWeights:
    return ScoreWeights() if w is None else w


def geodesic_score_batch(pred_R, pred_t, true_R, true_t, w: ScoreWeights | None = None) -> np.ndarray:
    """Vectorized geodesic score, ``sqrt(w_rot |log(R^T R_hat)|^2 + w_trans |t - t_hat|^2)``."""
    w = _check_weights(w)
    rel = np.einsum("...ji,...jk->...ik", np.asarray(true_R, float), np.asarray(pred_R, float))
    rot = np.linalg.norm(so3_log_batch(rel), axis=-1)
    trans = np.linalg.norm(np.asarray(true_t, float) - np.asarray(pred_t, float), axis=-1)
    return np.sqrt(w.w_rot * rot**2 + w.w_trans * trans**2)


def euclidean_score_batch(pred_R, pred_t, true_R, true_t, w: ScoreWeights | None = None) -> np.ndarray:
    """Vectorized chordal score, ``sqrt(w_rot |R - R_hat|_F^2 + w_trans |t - t_hat|^2)``."""
    w = _check_weights(w)
    diff = np.asarray(true_R, float) - np.asarray(pred_R, float)
    rot2 = np.sum(diff * diff, axis=(-2, -1))
    d = np.asarray(true_t, float) - np.asarray(pred_t, float)
    trans2 = np.sum(d * d, axis=-1)
    return np.sqrt(w.w_rot * rot2 + w.w_trans * trans2)


def geodesic_score(pred: Pose, truth: Pose, w: ScoreWeights | None = None) -> float:
    """Geodesic SE(3) nonconformity score between a predicted and a true pose.

    Rotation error is the arc length ``|log(R^T R_hat)|`` of the relative
    rotation, translation error the Euclidean distance of the translations.
    """
    return float(geodesic_score_batch(pred.R, pred.t, truth.R, truth.t, w))


def euclidean_score(pred: Pose, truth: Pose, w: ScoreWeights | None = None) -> float:
    """Flat-space baseline: Frobenius rotation error plus translation error."""
    return float(euclidean_score_batch(pred.R, pred.t, truth.R, truth.t, w))


SCORE_FUNCTIONS = {
    "geodesic": geodesic_score_batch,
    "euclidean": euclidean_score_batch,
}


def score_batch(score_fn: str, pred_R, pred_t, true_R, true_t, w: ScoreWeights | None = None):
    try:
        fn = SCORE_FUNCTIONS[score_fn]
    except KeyError:
        raise ValidationError(
            f"unknown score function {score_fn!r}; expected one of {sorted(SCORE_FUNCTIONS)}"
        ) from None
    return fn(pred_R, pred_t, true_R, true_t, w)
