"""Trajectory data model, pose-file ingestion, displacement and evaluation splits.

File format, one frame per line, whitespace separated::

    frame_id tx ty tz qw qx qy qz

Lines starting with ``#`` are comments, except ``# break``, which marks a
discontinuity (e.g. the start of a new video). Predictors never use history
across a break.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from posecp.errors import ParseError, ValidationError
from posecp.se3_geometry import (
    QUAT_NORM_TOL,
    Pose,
    Rotation,
    check_rotation_matrix,
    matrix_to_quat,
    quat_to_matrix,
)


@dataclass(frozen=True)
class Frame:
    frame_id: int
    pose: Pose


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Ordered, timestamped poses of one participant.

    Stored column-wise: ``frame_ids`` (N,), ``rotations`` (N, 3, 3),
    ``translations`` (N, 3) and ``segments`` (N,), the index of the
    break-delimited run each frame belongs to.
    """

    participant_id: str
    frame_ids: np.ndarray
    rotations: np.ndarray
    translations: np.ndarray
    segments: np.ndarray | None = None

    def __post_init__(self):
        ids = np.asarray(self.frame_ids)
        if ids.ndim != 1:
            raise ValidationError("frame_ids must be one-dimensional")
        if ids.size and not np.issubdtype(ids.dtype, np.integer):
            if not np.all(ids == np.round(ids)):
                raise ValidationError("frame_ids must be integers")
        ids = ids.astype(np.int64)
        n = ids.shape[0]
        if np.any(ids < 0):
            raise ValidationError("frame_ids must be nonnegative")
        bad = np.flatnonzero(np.diff(ids) <= 0)
        if bad.size:
            j = int(bad[0]) + 1
            raise ValidationError(
                f"frame_id not strictly increasing at position {j}: {ids[j - 1]} then {ids[j]}"
            )
        rots = np.asarray(self.rotations, dtype=float).reshape(n, 3, 3)
        trans = np.asarray(self.translations, dtype=float).reshape(n, 3)
        if n:
            check_rotation_matrix(rots)
        if not np.all(np.isfinite(trans)):
            raise ValidationError("translations must be finite")
        seg = np.zeros(n, dtype=np.int64) if self.segments is None else np.asarray(self.segments, np.int64)
        if seg.shape != (n,) or np.any(np.diff(seg) < 0):
            raise ValidationError("segments must be a nondecreasing array aligned with frames")
        object.__setattr__(self, "frame_ids", _readonly(ids))
        object.__setattr__(self, "rotations", _readonly(rots))
        object.__setattr__(self, "translations", _readonly(trans))
        object.__setattr__(self, "segments", _readonly(seg))

    @classmethod
    def from_frames(cls, participant_id: str, frames: Sequence[Frame], segments=None) -> "Trajectory":
        return cls(
            participant_id,
            np.array([f.frame_id for f in frames], dtype=np.int64),
            np.array([f.pose.R for f in frames]).reshape(-1, 3, 3),
            np.array([f.pose.t for f in frames]).reshape(-1, 3),
            segments,
        )

    def __len__(self) -> int:
        return int(self.frame_ids.shape[0])

    def __getitem__(self, i: int) -> Frame:
        return Frame(int(self.frame_ids[i]), self.pose(i))

    def __iter__(self) -> Iterator[Frame]:
        for i in range(len(self)):
            yield self[i]

    @property
    def frames(self) -> list[Frame]:
        return list(self)

    def pose(self, i: int) -> Pose:
        return Pose(Rotation(self.rotations[i]), self.translations[i])

    def index_of(self, frame_id: int) -> int:
        j = int(np.searchsorted(self.frame_ids, frame_id))
        if j >= len(self) or self.frame_ids[j] != frame_id:
            raise KeyError(frame_id)
        return j

    def indices_of(self, frame_ids) -> np.ndarray:
        """Positions of ``frame_ids``; -1 where absent."""
        frame_ids = np.asarray(frame_ids, dtype=np.int64)
        j = np.searchsorted(self.frame_ids, frame_ids)
        jc = np.minimum(j, max(len(self) - 1, 0))
        ok = (j < len(self)) & (self.frame_ids[jc] == frame_ids) if len(self) else np.zeros(len(frame_ids), bool)
        return np.where(ok, jc, -1)

    def slice(self, start: int, stop: int) -> "Trajectory":
        return Trajectory(
            self.participant_id,
            self.frame_ids[start:stop],
            self.rotations[start:stop],
            self.translations[start:stop],
            self.segments[start:stop],
        )

    def same_segment(self, i, j) -> np.ndarray | bool:
        return self.segments[i] == self.segments[j]

    def transformed(self, g: Pose) -> "Trajectory":
        """Apply a global rigid transform ``g`` to every pose (left composition)."""
        return Trajectory(
            self.participant_id,
            self.frame_ids,
            np.einsum("ij,njk->nik", g.R, self.rotations),
            self.translations @ g.R.T + g.t,
            self.segments,
        )


def concatenate(parts: Sequence[Trajectory], participant_id: str | None = None) -> Trajectory:
    """Join trajectories in order, inserting a break between each part."""
    if not parts:
        raise ValidationError("nothing to concatenate")
    segs, offset = [], 0
    for p in parts:
        s = p.segments - (p.segments[0] if len(p) else 0) + offset
        segs.append(s)
        offset = (int(s[-1]) + 1) if len(p) else offset
    return Trajectory(
        participant_id or parts[0].participant_id,
        np.concatenate([p.frame_ids for p in parts]),
        np.concatenate([p.rotations for p in parts]),
        np.concatenate([p.translations for p in parts]),
        np.concatenate(segs),
    )


def _read_text(source) -> tuple[str, str | None]:
    """Text content and a display name for ``source``."""
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            return fh.read(), os.fspath(source)
    if isinstance(source, bytes):
        return source.decode("utf-8"), None
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data, getattr(source, "name", None)


def iter_data_lines(text: str) -> Iterator[tuple[int, list[str] | None]]:
    """Yield ``(line_number, fields)`` for data lines and ``(line_number, None)`` for breaks."""
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().lower() == "break":
                yield lineno, None
            continue
        line = line.split("#", 1)[0].strip()
        if line:
            yield lineno, line.split()


def parse_pose_fields(fields: list[str], lineno: int, name: str | None) -> tuple[int, np.ndarray]:
    """Frame id and the raw ``tx ty tz qw qx qy qz`` values of one pose line."""
    if len(fields) != 8:
        raise ParseError(
            f"expected 8 fields 'frame_id tx ty tz qw qx qy qz', got {len(fields)}", lineno, name
        )
    fid = parse_frame_id(fields[0], lineno, name)
    try:
        vals = np.array([float(x) for x in fields[1:]])
    except ValueError as exc:
        raise ParseError(f"non-numeric field ({exc})", lineno, name) from None
    if not np.all(np.isfinite(vals)):
        raise ParseError("non-finite value", lineno, name)
    return fid, vals


def rows_to_poses(rows: np.ndarray, linenos: Sequence[int], name: str | None):
    """Translations and rotation matrices for stacked pose rows.

    Quaternion norm violations are reported against the first offending line.
    """
    rows = np.asarray(rows, dtype=float).reshape(-1, 7)
    norms = np.linalg.norm(rows[:, 3:], axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > QUAT_NORM_TOL)
    if bad.size:
        j = int(bad[0])
        raise ParseError(
            f"quaternion norm {norms[j]:.9g} deviates from 1 by more than {QUAT_NORM_TOL:g}",
            linenos[j], name,
        )
    return rows[:, :3].copy(), quat_to_matrix(rows[:, 3:])


def parse_frame_id(text: str, lineno: int, name: str | None) -> int:
    try:
        fid = int(text)
    except ValueError:
        raise ParseError(f"frame_id must be an integer, got {text!r}", lineno, name) from None
    if fid < 0:
        raise ParseError(f"frame_id must be nonnegative, got {fid}", lineno, name)
    return fid


def load_trajectory(source, participant_id: str) -> Trajectory:
    """Parse a pose file (path, bytes, or file object) into a ``Trajectory``."""
    text, name = _read_text(source)
    ids, rows, linenos, segs = [], [], [], []
    seg = 0
    for lineno, fields in iter_data_lines(text):
        if fields is None:
            if ids and segs[-1] == seg:
                seg += 1
            continue
        fid, vals = parse_pose_fields(fields, lineno, name)
        if ids and fid <= ids[-1]:
            raise ParseError(
                f"frame_id {fid} does not increase (previous frame_id {ids[-1]})", lineno, name
            )
        ids.append(fid)
        rows.append(vals)
        linenos.append(lineno)
        segs.append(seg)
    trans, rots = rows_to_poses(np.array(rows), linenos, name)
    return Trajectory(participant_id, np.array(ids, dtype=np.int64), rots, trans, np.array(segs, dtype=np.int64))


def format_pose_line(frame_id: int, t: np.ndarray, q: np.ndarray) -> str:
    return " ".join([str(int(frame_id))] + [repr(float(v)) for v in t] + [repr(float(v)) for v in q])


def dump_trajectory(traj: Trajectory) -> str:
    """Serialize to the pose-file format (full float precision)."""
    quats = matrix_to_quat(traj.rotations) if len(traj) else np.zeros((0, 4))
    out = io.StringIO()
    for i in range(len(traj)):
        if i and traj.segments[i] != traj.segments[i - 1]:
            out.write("# break\n")
        out.write(format_pose_line(traj.frame_ids[i], traj.translations[i], quats[i]) + "\n")
    return out.getvalue()


def displacement(traj: Trajectory, i: int) -> float:
    """Ground-truth camera displacement ``|t_i - t_{i-1}|`` at list position ``i``."""
    if not isinstance(i, (int, np.integer)) or i < 1 or i >= len(traj):
        raise IndexError(f"displacement needs 1 <= i < {len(traj)}, got {i}")
    return float(np.linalg.norm(traj.translations[i] - traj.translations[i - 1]))


def displacements(traj: Trajectory) -> np.ndarray:
    """All consecutive displacements; entry ``i`` is for position ``i``, entry 0 is NaN."""
    d = np.full(len(traj), np.nan)
    if len(traj) > 1:
        d[1:] = np.linalg.norm(np.diff(traj.translations, axis=0), axis=1)
    return d


WITHIN = "within_participant"
CROSS = "cross_participant"


@dataclass(frozen=True)
class SplitSpec:
    """How to form calibration and test sets.

    ``within_participant`` splits each trajectory chronologically at
    ``floor(calibration_fraction * n)``; ``cross_participant`` routes whole
    trajectories by participant label.
    """

    kind: str = WITHIN
    calibration_fraction: float = 0.5
    calibration_participants: frozenset[str] = field(default_factory=frozenset)
    test_participants: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.kind not in (WITHIN, CROSS):
            raise ValidationError(f"unknown split kind {self.kind!r}")
        object.__setattr__(self, "calibration_participants", frozenset(self.calibration_participants))
        object.__setattr__(self, "test_participants", frozenset(self.test_participants))
        if self.kind == WITHIN:
            if not 0.0 < self.calibration_fraction < 1.0:
                raise ValidationError(
                    f"calibration_fraction must be in (0, 1), got {self.calibration_fraction}"
                )
        else:
            if not self.calibration_participants or not self.test_participants:
                raise ValidationError("cross-participant split needs calibration and test participants")
            overlap = self.calibration_participants & self.test_participants
            if overlap:
                raise ValidationError(
                    f"calibration and test participants overlap: {sorted(overlap)}"
                )

    @classmethod
    def within(cls, fraction: float = 0.5) -> "SplitSpec":
        return cls(WITHIN, calibration_fraction=fraction)

    @classmethod
    def cross(cls, calibration: Iterable[str], test: Iterable[str]) -> "SplitSpec":
        return cls(CROSS, calibration_participants=frozenset(calibration), test_participants=frozenset(test))

    def describe(self) -> str:
        if self.kind == WITHIN:
            return f"within:{self.calibration_fraction:g}"
        return "cross:cal={};test={}".format(
            "+".join(sorted(self.calibration_participants)), "+".join(sorted(self.test_participants))
        )


def split(trajectories: Sequence[Trajectory], spec: SplitSpec) -> tuple[list[Trajectory], list[Trajectory]]:
    """Return ``(calibration, test)`` lists of trajectories."""
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    labels = [t.participant_id for t in trajectories]
    if len(set(labels)) != len(labels):
        raise ValidationError("one trajectory per participant is required; concatenate videos first")
    if spec.kind == WITHIN:
        cal, test = [], []
        for t in trajectories:
            m = int(np.floor(spec.calibration_fraction * len(t)))
            if m == 0 or m == len(t):
                raise ValidationError(
                    f"split of {t.participant_id} ({len(t)} frames) leaves an empty side"
                )
            cal.append(t.slice(0, m))
            test.append(t.slice(m, len(t)))
        return cal, test
    by_label = dict(zip(labels, trajectories))
    missing = (spec.calibration_participants | spec.test_participants) - set(by_label)
    if missing:
        raise ValidationError(f"no trajectory for participants {sorted(missing)}")
    cal = [by_label[p] for p in sorted(spec.calibration_participants)]
    test = [by_label[p] for p in sorted(spec.test_participants)]
    return cal, test
