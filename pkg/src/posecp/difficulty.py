"""Image-free difficulty estimation from pose kinematics.

A small feedforward regressor (the "bridge") maps a fixed catalog of 20
kinematic features, computed from a short window of ground-truth pose
history, to a per-frame difficulty ``sigma > 0``. It is trained to
reproduce teacher difficulty scores produced offline by an image-based
model, so at test time no images are needed.

Feature catalog (window ``W`` steps, default 5, ending at frame ``i``):

====  =====================================================================
idx   feature
====  =====================================================================
0     translational speed ``|t_i - t_{i-1}|``
1-3   mean / max / std of speed over the window
4     translational acceleration magnitude at ``i`` (second difference)
5-6   mean / max acceleration magnitude over the window
7     mean jerk magnitude over the window (third difference)
8     angular speed ``|log(R_{i-1}^T R_i)|``
9-11  mean / max / std of angular speed over the window
12    angular acceleration ``|phi_i - phi_{i-1}|`` of body angular steps
13    mean angular acceleration over the window
14    net displacement ``|t_i - t_{i-W}|``
15    path length / net displacement (0 when static, capped at 1000)
16    speed at lag 2, ``|t_i - t_{i-2}| / 2``
17    speed at lag 3, ``|t_i - t_{i-3}| / 3``
18    number of window steps with speed below ``still_eps``
19    net rotation angle ``|log(R_{i-W}^T R_i)|``
====  =====================================================================
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from posecp.errors import ParseError, ValidationError
from posecp.trajectory import Trajectory, _read_text, iter_data_lines, parse_frame_id
from posecp.se3_geometry import so3_log_batch
from posecp.rng import make_rng

N_FEATURES = 20
DEFAULT_WINDOW = 5
STILL_EPS = 1e-6
RATIO_CAP = 1000.0

FEATURE_NAMES = (
    "speed",
    "speed_mean",
    "speed_max",
    "speed_std",
    "accel",
    "accel_mean",
    "accel_max",
    "jerk_mean",
    "ang_speed",
    "ang_speed_mean",
    "ang_speed_max",
    "ang_speed_std",
    "ang_accel",
    "ang_accel_mean",
    "net_displacement",
    "path_ratio",
    "speed_lag2",
    "speed_lag3",
    "still_count",
    "net_rotation",
)


@dataclass(frozen=True, eq=False)
class KinematicFeatures:
    frame_id: int
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.shape != (N_FEATURES,):
            raise ValidationError(f"expected {N_FEATURES} features, got {v.shape[0]}")
        if not np.all(np.isfinite(v)):
            raise ValidationError(f"frame {self.frame_id}: non-finite kinematic features")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class TeacherScore:
    frame_id: int
    value: float

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value > 0):
            raise ValidationError(f"frame {self.frame_id}: teacher score must be > 0, got {self.value}")


def _valid_positions(traj: Trajectory, window: int) -> np.ndarray:
    n = len(traj)
    if n <= window:
        return np.zeros(0, dtype=np.int64)
    idx = np.arange(window, n)
    return idx[traj.segments[idx - window] == traj.segments[idx]]


def feature_matrix(traj: Trajectory, window: int = DEFAULT_WINDOW, still_eps: float = STILL_EPS):
    """Features for every frame with ``window`` steps of unbroken history.

    Returns ``(frame_ids, X)`` with ``X`` of shape ``(n_valid, 20)``.
    """
    if window < 3:
        raise ValidationError("window must be at least 3 (jerk needs three differences)")
    pos = _valid_positions(traj, window)
    if not pos.size:
        return np.zeros(0, dtype=np.int64), np.zeros((0, N_FEATURES))
    t, R = traj.translations, traj.rotations
    # windows of W+1 frames: offsets -W..0
    offs = np.arange(-window, 1)
    tw = t[pos[:, None] + offs[None, :]]  # (m, W+1, 3)
    Rw = R[pos[:, None] + offs[None, :]]  # (m, W+1, 3, 3)

    vel = np.diff(tw, axis=1)  # (m, W, 3)
    speed = np.linalg.norm(vel, axis=2)
    acc = np.diff(vel, axis=1)
    acc_mag = np.linalg.norm(acc, axis=2)
    jerk_mag = np.linalg.norm(np.diff(acc, axis=1), axis=2)

    rel = np.einsum("mwji,mwjk->mwik", Rw[:, :-1], Rw[:, 1:])
    phi = so3_log_batch(rel)  # (m, W, 3)
    ang = np.linalg.norm(phi, axis=2)
    ang_acc = np.linalg.norm(np.diff(phi, axis=1), axis=2)

    net = np.linalg.norm(tw[:, -1] - tw[:, 0], axis=1)
    path = speed.sum(axis=1)
    denom = np.maximum(net, path / RATIO_CAP)
    ratio = np.where(path > 0, path / np.where(path > 0, denom, 1.0), 0.0)
    lag2 = np.linalg.norm(tw[:, -1] - tw[:, -3], axis=1) / 2.0
    lag3 = np.linalg.norm(tw[:, -1] - tw[:, -4], axis=1) / 3.0
    still = np.sum(speed < still_eps, axis=1).astype(float)
    net_rot = np.linalg.norm(
        so3_log_batch(np.einsum("mji,mjk->mik", Rw[:, 0], Rw[:, -1])), axis=1
    )

    X = np.column_stack(
        [
            speed[:, -1], speed.mean(1), speed.max(1), speed.std(1),
            acc_mag[:, -1], acc_mag.mean(1), acc_mag.max(1),
            jerk_mag.mean(1),
            ang[:, -1], ang.mean(1), ang.max(1), ang.std(1),
            ang_acc[:, -1], ang_acc.mean(1),
            net, ratio, lag2, lag3, still, net_rot,
        ]
    )
    return traj.frame_ids[pos].copy(), X


def kinematic_features(traj: Trajectory, i: int, window: int = DEFAULT_WINDOW) -> KinematicFeatures:
    """Features of list position ``i`` (needs ``window`` unbroken past frames)."""
    if not isinstance(i, (int, np.integer)) or i < window or i >= len(traj):
        raise ValidationError(
            f"kinematic features at index {i} need {window} past frames (trajectory has {len(traj)})"
        )
    if traj.segments[i - window] != traj.segments[i]:
        raise ValidationError(f"feature window for index {i} spans a break")
    sub = traj.slice(i - window, i + 1)
    ids, X = feature_matrix(sub, window)
    return KinematicFeatures(int(ids[0]), X[0])


def load_teacher_scores(source) -> list[TeacherScore]:
    """Parse ``frame_id value`` lines (``#`` comments allowed), keeping file order."""
    text, name = _read_text(source)
    out, seen = [], set()
    for lineno, fields in iter_data_lines(text):
        if fields is None:
            continue
        if len(fields) != 2:
            raise ParseError(f"expected 'frame_id value', got {len(fields)} fields", lineno, name)
        fid = parse_frame_id(fields[0], lineno, name)
        try:
            v = float(fields[1])
        except ValueError:
            raise ParseError(f"value must be numeric, got {fields[1]!r}", lineno, name) from None
        if not (np.isfinite(v) and v > 0):
            raise ParseError(f"teacher score must be positive, got {v}", lineno, name)
        if fid in seen:
            raise ParseError(f"duplicate frame_id {fid}", lineno, name)
        seen.add(fid)
        out.append(TeacherScore(fid, v))
    return out


def dump_teacher_scores(scores: Sequence[TeacherScore]) -> str:
    return "".join(f"{s.frame_id} {float(s.value)!r}\n" for s in scores)


# ---------------------------------------------------------------------------
# network


def init_params(sizes: Sequence[int], rng: np.random.Generator) -> list[tuple[np.ndarray, np.ndarray]]:
    """He-initialized weights for a ReLU MLP with layer ``sizes``."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
        params.append((W, np.zeros(fan_out)))
    return params


def forward(params, X: np.ndarray) -> np.ndarray:
    h = X
    for W, b in params[:-1]:
        h = np.maximum(h @ W + b, 0.0)
    W, b = params[-1]
    return (h @ W + b)[:, 0]


def loss_and_grad(params, X: np.ndarray, y: np.ndarray):
    """Mean squared error of the network output against ``y`` and its gradient.

    Returns ``(loss, grads)`` with ``grads`` shaped like ``params``.
    """
    acts = [X]
    pre = []
    h = X
    for W, b in params[:-1]:
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    W, b = params[-1]
    out = (h @ W + b)[:, 0]
    r = out - y
    n = X.shape[0]
    loss = float(np.mean(r * r))

    grads = [None] * len(params)
    d = (2.0 / n) * r[:, None]
    grads[-1] = (acts[-1].T @ d, d.sum(axis=0))
    d = d @ W.T
    for layer in range(len(params) - 2, -1, -1):
        d = d * (pre[layer] > 0)
        grads[layer] = (acts[layer].T @ d, d.sum(axis=0))
        if layer:
            d = d @ params[layer][0].T
    return loss, grads


@dataclass(frozen=True)
class TrainConfig:
    hidden: tuple[int, ...] = (64, 64)
    batch_size: int = 256
    learning_rate: float = 1e-3
    steps: int = 5000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    sigma_floor_factor: float = 1e-3
    window: int = DEFAULT_WINDOW

    def to_dict(self) -> dict:
        return {
            "hidden": list(self.hidden),
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "steps": self.steps,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "sigma_floor_factor": self.sigma_floor_factor,
            "window": self.window,
        }


@dataclass(frozen=True, eq=False)
class DifficultyModel:
    """Trained bridge regressor: normalized features -> log sigma."""

    sizes: tuple[int, ...]
    params: tuple[tuple[np.ndarray, np.ndarray], ...]
    feature_mean: np.ndarray
    feature_scale: np.ndarray
    sigma_floor: float
    window: int = DEFAULT_WINDOW
    final_loss: float | None = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) < 2 or sizes[0] != N_FEATURES or sizes[-1] != 1:
            raise ValidationError(f"layer sizes must run {N_FEATURES} -> ... -> 1, got {sizes}")
        params = []
        for (W, b), fi, fo in zip(self.params, sizes[:-1], sizes[1:]):
            W = np.array(W, dtype=float).reshape(fi, fo)
            b = np.array(b, dtype=float).reshape(fo)
            W.setflags(write=False)
            b.setflags(write=False)
            params.append((W, b))
        if len(params) != len(sizes) - 1:
            raise ValidationError("parameter count does not match layer sizes")
        mean = np.array(self.feature_mean, dtype=float).reshape(N_FEATURES)
        scale = np.array(self.feature_scale, dtype=float).reshape(N_FEATURES)
        if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
            raise ValidationError("feature scales must be positive and finite")
        if not (self.sigma_floor > 0):
            raise ValidationError("sigma_floor must be positive")
        mean.setflags(write=False)
        scale.setflags(write=False)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "params", tuple(params))
        object.__setattr__(self, "feature_mean", mean)
        object.__setattr__(self, "feature_scale", scale)
        object.__setattr__(self, "sigma_floor", float(self.sigma_floor))

    @classmethod
    def zeros(cls, hidden=(64, 64), sigma_floor: float = 1e-3) -> "DifficultyModel":
        sizes = (N_FEATURES, *hidden, 1)
        params = [(np.zeros((a, b)), np.zeros(b)) for a, b in zip(sizes[:-1], sizes[1:])]
        return cls(sizes, params, np.zeros(N_FEATURES), np.ones(N_FEATURES), sigma_floor)

    @property
    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(np.asarray(self.sizes, dtype="<i8").tobytes())
        h.update(np.asarray([self.window], dtype="<i8").tobytes())
        for W, b in self.params:
            h.update(np.ascontiguousarray(W, dtype="<f8").tobytes())
            h.update(np.ascontiguousarray(b, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.feature_mean, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.feature_scale, dtype="<f8").tobytes())
        h.update(np.asarray([self.sigma_floor], dtype="<f8").tobytes())
        if self.final_loss is not None:
            h.update(np.asarray([self.final_loss], dtype="<f8").tobytes())
        return h.hexdigest()

    def normalize(self, X: np.ndarray) -> np.ndarray:
        return (X - self.feature_mean) / self.feature_scale

    def log_sigma(self, X: np.ndarray) -> np.ndarray:
        return forward(self.params, self.normalize(np.atleast_2d(X)))

    def to_dict(self) -> dict:
        return {
            "sizes": list(self.sizes),
            "weights": [W.reshape(-1).tolist() for W, _ in self.params],
            "biases": [b.tolist() for _, b in self.params],
            "feature_mean": self.feature_mean.tolist(),
            "feature_scale": self.feature_scale.tolist(),
            "sigma_floor": self.sigma_floor,
            "window": self.window,
            "final_loss": self.final_loss,
            "content_hash": self.content_hash,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "DifficultyModel":
        sizes = tuple(d["sizes"])
        params = [
            (np.asarray(W, dtype=float).reshape(a, b), np.asarray(bias, dtype=float))
            for W, bias, a, b in zip(d["weights"], d["biases"], sizes[:-1], sizes[1:])
        ]
        model = cls(
            sizes,
            params,
            d["feature_mean"],
            d["feature_scale"],
            d["sigma_floor"],
            d.get("window", DEFAULT_WINDOW),
            d.get("final_loss"),
        )
        stored = d.get("content_hash")
        if stored is not None and stored != model.content_hash:
            raise ValidationError("model content hash does not match its parameters")
        return model

    @classmethod
    def from_json(cls, text: str) -> "DifficultyModel":
        return cls.from_dict(json.loads(text))


def normalization_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean and population std; constant features get scale 1."""
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale = np.where(scale > 1e-12 * np.maximum(np.abs(mean), 1.0), scale, 1.0)
    return mean, scale


def _align(features: Sequence[KinematicFeatures], targets: Sequence[TeacherScore]):
    if len(features) != len(targets):
        raise ValidationError(f"{len(features)} feature rows but {len(targets)} targets")
    for n, (f, t) in enumerate(zip(features, targets)):
        if f.frame_id != t.frame_id:
            raise ValidationError(
                f"features and targets misaligned at position {n}: frame_id {f.frame_id} vs {t.frame_id}"
            )
    X = np.array([f.values for f in features]).reshape(-1, N_FEATURES)
    y = np.array([t.value for t in targets], dtype=float)
    return X, y


def train_bridge(
    features: Sequence[KinematicFeatures],
    targets: Sequence[TeacherScore],
    config: TrainConfig | None = None,
    seed: int = 0,
) -> DifficultyModel:
    """Fit the bridge by mini-batch Adam on squared error in log(target).

    Deterministic for a given seed. Raises ``ValidationError`` on
    misaligned inputs, fewer than 100 pairs, or a non-finite loss.
    """
    X, y = _align(features, targets)
    return fit_bridge(X, y, config, seed)


def fit_bridge(X: np.ndarray, y: np.ndarray, config: TrainConfig | None = None, seed: int = 0) -> DifficultyModel:
    """Array form of :func:`train_bridge`."""
    config = config or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] != N_FEATURES or X.shape[0] != y.shape[0]:
        raise ValidationError(f"expected X of shape (n, {N_FEATURES}) aligned with y")
    if X.shape[0] < 100:
        raise ValidationError(f"need at least 100 training pairs, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("training features contain non-finite values")
    if np.any(~np.isfinite(y) | (y <= 0)):
        raise ValidationError("training targets must be positive and finite")

    rng = make_rng(seed, "bridge")
    mean, scale = normalization_stats(X)
    Xn = (X - mean) / scale
    logy = np.log(y)
    sizes = (N_FEATURES, *config.hidden, 1)
    params = [[W, b] for W, b in init_params(sizes, rng)]
    # start from the constant prediction mean(log y)
    params[-1][0] = np.zeros_like(params[-1][0])
    params[-1][1] = np.array([logy.mean()])
    m = [[np.zeros_like(W), np.zeros_like(b)] for W, b in params]
    v = [[np.zeros_like(W), np.zeros_like(b)] for W, b in params]
    n = X.shape[0]
    bs = min(config.batch_size, n)
    perm, cursor = rng.permutation(n), 0
    b1, b2 = config.beta1, config.beta2
    for step in range(1, config.steps + 1):
        if cursor + bs > n:
            perm, cursor = rng.permutation(n), 0
        batch = perm[cursor:cursor + bs]
        cursor += bs
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grads = loss_and_grad(params, Xn[batch], logy[batch])
        if not np.isfinite(loss):
            raise ValidationError(f"training loss became non-finite at step {step}")
        lr_t = config.learning_rate * np.sqrt(1 - b2**step) / (1 - b1**step)
        for p, g, mp, vp in zip(params, grads, m, v):
            for j in range(2):
                mp[j] = b1 * mp[j] + (1 - b1) * g[j]
                vp[j] = b2 * vp[j] + (1 - b2) * g[j] * g[j]
                p[j] = p[j] - lr_t * mp[j] / (np.sqrt(vp[j]) + config.eps)
    final = float(np.mean((forward(params, Xn) - logy) ** 2))
    if not np.isfinite(final):
        raise ValidationError(f"training loss became non-finite at step {config.steps}")
    floor = config.sigma_floor_factor * float(np.median(y))
    return DifficultyModel(sizes, [tuple(p) for p in params], mean, scale, floor, config.window, final)


def predict_sigmas(model: DifficultyModel, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(np.isfinite(X)):
        raise ValidationError("features must be finite")
    with np.errstate(over="ignore"):
        sig = np.exp(model.log_sigma(X))
    sig = np.maximum(sig, model.sigma_floor)
    # overflow to inf would break s / sigma
    return np.minimum(sig, np.finfo(float).max)


def predict_sigma(model: DifficultyModel, f: KinematicFeatures | np.ndarray) -> float:
    """Difficulty ``max(exp(net(normalized f)), sigma_floor)``."""
    values = f.values if isinstance(f, KinematicFeatures) else f
    return float(predict_sigmas(model, np.asarray(values).reshape(1, -1))[0])


def sigma_for_trajectory(model: DifficultyModel, traj: Trajectory) -> dict[int, float]:
    """Map frame_id -> sigma for every frame that has a full feature window."""
    ids, X = feature_matrix(traj, model.window)
    if not ids.size:
        return {}
    return dict(zip(ids.tolist(), predict_sigmas(model, X).tolist()))
