"""Pose-stamped point cloud frames and their on-disk formats.

Binary stream (little-endian)::

    header   : b"VXFR"  uint32 version (=1)
    record*  : uint32 n_points
               float64 timestamp
               float64[12] pose, row-major 3x4 [R | t] (sensor -> world)
               float64[n_points * 3] xyz in the sensor frame

Plain text (one frame per ``pose`` line)::

    pose r00 r01 r02 tx r10 r11 r12 ty r20 r21 r22 tz
    timestamp 0.0          # optional
    x y z
    ...
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

MAGIC = b"VXFR"
VERSION = 1
_HEADER = struct.Struct("<4sI")
_RECORD = struct.Struct("<Id12d")

ORTHONORMAL_TOL = 1e-6


class InvalidPoseError(ValueError):
    """Rotation part of a pose is not a proper rotation."""


class FrameFormatError(ValueError):
    """A frame file is truncated or malformed."""


def check_rotation(rotation, tol: float = ORTHONORMAL_TOL) -> None:
    r = np.asarray(rotation, dtype=np.float64)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        raise InvalidPoseError("rotation must be a finite 3x3 matrix")
    if np.max(np.abs(r.T @ r - np.eye(3))) > tol:
        raise InvalidPoseError("rotation is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > tol:
        raise InvalidPoseError("rotation determinant is not +1")


@dataclass
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def validate(self) -> None:
        check_rotation(self.rotation)
        if not np.all(np.isfinite(self.translation)):
            raise InvalidPoseError("translation must be finite")

    def apply(self, points: np.ndarray) -> np.ndarray:
        # non-finite points stay non-finite; callers drop them
        with np.errstate(invalid="ignore", over="ignore"):
            return points @ self.rotation.T + self.translation

    def compose(self, other: "Pose") -> "Pose":
        """Return ``self * other`` (apply ``other`` first)."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)


@dataclass
class SensorFrame:
    points: np.ndarray
    pose: Pose = field(default_factory=Pose)
    timestamp: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.size == 0:
            pts = pts.reshape(0, 3)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError("points must have shape (n, 3)")
        self.points = pts

    def __len__(self):
        return len(self.points)

    def world_points(self) -> np.ndarray:
        return self.pose.apply(self.points)


# binary ---------------------------------------------------------------------

def write_frames(path, frames: Iterable[SensorFrame]) -> int:
    n = 0
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION))
        for frame in frames:
            pose = np.hstack([frame.pose.rotation, frame.pose.translation[:, None]])
            fh.write(_RECORD.pack(len(frame.points), float(frame.timestamp), *pose.ravel()))
            fh.write(np.ascontiguousarray(frame.points, dtype="<f8").tobytes())
            n += 1
    return n


def iter_frames(path) -> Iterator[SensorFrame]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FrameFormatError(f"{path}: missing header")
        magic, version = _HEADER.unpack(head)
        if magic != MAGIC or version != VERSION:
            raise FrameFormatError(f"{path}: not a frame stream (magic={magic!r}, version={version})")
        index = 0
        while True:
            rec = fh.read(_RECORD.size)
            if not rec:
                return
            if len(rec) != _RECORD.size:
                raise FrameFormatError(f"{path}: truncated record header in frame {index}")
            n, stamp, *pose = _RECORD.unpack(rec)
            payload = fh.read(24 * n)
            if len(payload) != 24 * n:
                raise FrameFormatError(f"{path}: truncated points in frame {index}")
            m = np.asarray(pose).reshape(3, 4)
            pts = np.frombuffer(payload, dtype="<f8").reshape(n, 3).astype(np.float64)
            yield SensorFrame(pts, Pose(m[:, :3], m[:, 3]), stamp)
            index += 1


def read_frames(path) -> list[SensorFrame]:
    return list(iter_frames(path))


# text -----------------------------------------------------------------------

def write_text_frames(path, frames: Iterable[SensorFrame]) -> None:
    with open(path, "w") as fh:
        for frame in frames:
            pose = np.hstack([frame.pose.rotation, frame.pose.translation[:, None]])
            fh.write("pose " + " ".join(repr(float(v)) for v in pose.ravel()) + "\n")
            fh.write(f"timestamp {float(frame.timestamp)!r}\n")
            for x, y, z in frame.points:
                fh.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


def read_text_frames(path) -> list[SensorFrame]:
    frames = []
    pose = None
    stamp = 0.0
    pts: list[list[float]] = []

    def flush():
        if pose is not None:
            frames.append(SensorFrame(np.asarray(pts, dtype=np.float64).reshape(-1, 3), pose, stamp))

    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "pose":
                flush()
                vals = [float(v) for v in tok[1:]]
                if len(vals) != 12:
                    raise FrameFormatError(f"{path}:{lineno}: pose needs 12 values")
                m = np.asarray(vals).reshape(3, 4)
                pose, stamp, pts = Pose(m[:, :3], m[:, 3]), 0.0, []
            elif tok[0] == "timestamp":
                stamp = float(tok[1])
            else:
                if pose is None:
                    raise FrameFormatError(f"{path}:{lineno}: point before pose header")
                if len(tok) != 3:
                    raise FrameFormatError(f"{path}:{lineno}: expected 'x y z'")
                pts.append([float(v) for v in tok])
        except (ValueError, IndexError) as exc:
            if isinstance(exc, FrameFormatError):
                raise
            raise FrameFormatError(f"{path}:{lineno}: {exc}") from exc
    flush()
    return frames


def load_frames(path) -> list[SensorFrame]:
    """Read a frame file, sniffing binary vs. text by the magic bytes."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == MAGIC:
        return read_frames(path)
    return read_text_frames(path)
