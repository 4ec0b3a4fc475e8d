"""Shared domain types: skeleton topologies, pose sequences, annotation segments.

All types are immutable after construction; numpy arrays held by them are
marked read-only so instances can be shared across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FRAME_TAGS = ("camera", "global", "body")

# Canonical posture-class column names used in annotation tables, in the
# order the classes are declared by the EAWS screening sheet.
POSTURE_COLUMNS = (
    "standing_walking_s",
    "bent_forward_s",
    "strongly_bent_s",
    "elbow_above_shoulder_s",
    "hands_above_head_s",
    "trunk_rotation_s",
    "lateral_bending_s",
)


class SchemaError(ValueError):
    """Raised when an input file or constructed object violates its schema."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.asarray(a, dtype=np.float64).copy()
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SkeletonTopology:
    """A named, rooted joint tree.

    ``parent`` maps each joint name to its parent; the root maps to None.
    """

    name: str
    joints: tuple[str, ...]
    parent: dict[str, str | None]
    expected_count: int

    def __post_init__(self):
        if len(set(self.joints)) != len(self.joints):
            raise SchemaError(f"topology {self.name!r}: duplicate joint names")
        if self.expected_count != len(self.joints):
            raise SchemaError(
                f"topology {self.name!r}: expected_count {self.expected_count} "
                f"!= {len(self.joints)} joints"
            )
        roots = [j for j in self.joints if self.parent.get(j) is None]
        if set(self.parent) != set(self.joints):
            raise SchemaError(f"topology {self.name!r}: parent map keys != joints")
        if len(roots) != 1:
            raise SchemaError(f"topology {self.name!r}: need exactly one root, got {roots}")
        # Every joint must reach the root without cycles.
        root = roots[0]
        for j in self.joints:
            seen = set()
            cur: str | None = j
            while cur is not None:
                if cur in seen:
                    raise SchemaError(f"topology {self.name!r}: cycle at {cur!r}")
                seen.add(cur)
                if cur not in self.parent:
                    raise SchemaError(f"topology {self.name!r}: unknown joint {cur!r}")
                cur = self.parent[cur]
            if root not in seen:
                raise SchemaError(f"topology {self.name!r}: {j!r} not connected to root")

    @property
    def root(self) -> str:
        for j in self.joints:
            if self.parent[j] is None:
                return j
        raise AssertionError("validated topology has a root")

    def index(self, joint: str) -> int:
        return self.joints.index(joint)

    def symmetric_pairs(self) -> list[tuple[str, str]]:
        """(left, right) joint pairs inferred from the l_/r_ name convention."""
        pairs = []
        for j in self.joints:
            if j.startswith("l_") and ("r_" + j[2:]) in self.joints:
                pairs.append((j, "r_" + j[2:]))
        return pairs


@dataclass(frozen=True)
class PoseFrame:
    """One time-stamped skeletal frame: per-joint 3D positions in meters."""

    timestamp: float
    positions: np.ndarray  # (J, 3)
    confidences: np.ndarray  # (J,)
    frame: str  # camera | global | body

    def __post_init__(self):
        pos = _readonly(self.positions)
        conf = _readonly(self.confidences)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "confidences", conf)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise SchemaError(f"positions must be (J, 3), got {pos.shape}")
        if conf.shape != (pos.shape[0],):
            raise SchemaError("confidences must have one entry per joint")
        if not np.all(np.isfinite(pos)):
            raise SchemaError("non-finite joint position")
        if np.any(conf < 0.0) or np.any(conf > 1.0) or not np.all(np.isfinite(conf)):
            raise SchemaError("confidences must lie in [0, 1]")
        if not (math.isfinite(self.timestamp) and self.timestamp >= 0.0):
            raise SchemaError(f"timestamp must be >= 0, got {self.timestamp}")
        if self.frame not in FRAME_TAGS:
            raise SchemaError(f"unknown frame tag {self.frame!r}")

    @property
    def joint_count(self) -> int:
        return self.positions.shape[0]

    def mean_confidence(self) -> float:
        return float(np.mean(self.confidences))


@dataclass(frozen=True)
class PoseSequence:
    """Time-ordered pose frames sharing one topology and coordinate frame."""

    topology: SkeletonTopology
    frames: tuple[PoseFrame, ...]
    rate_hz: float

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        if not self.frames:
            raise SchemaError("pose sequence needs at least one frame")
        if not (math.isfinite(self.rate_hz) and self.rate_hz > 0):
            raise SchemaError(f"rate_hz must be positive, got {self.rate_hz}")
        tag = self.frames[0].frame
        prev = -math.inf
        for f in self.frames:
            if f.joint_count != self.topology.expected_count:
                raise SchemaError(
                    f"frame has {f.joint_count} joints, topology expects "
                    f"{self.topology.expected_count}"
                )
            if f.frame != tag:
                raise SchemaError("mixed coordinate-frame tags in one sequence")
            if f.timestamp <= prev:
                raise SchemaError("frame timestamps must be strictly increasing")
            prev = f.timestamp

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def frame_tag(self) -> str:
        return self.frames[0].frame

    @property
    def duration_s(self) -> float:
        """Nominal duration: frame count over the nominal rate."""
        return len(self.frames) / self.rate_hz

    def timestamps(self) -> np.ndarray:
        return np.array([f.timestamp for f in self.frames])

    def positions_array(self) -> np.ndarray:
        """Stacked positions, shape (N, J, 3)."""
        return np.stack([f.positions for f in self.frames])

    def confidences_array(self) -> np.ndarray:
        return np.stack([f.confidences for f in self.frames])


@dataclass(frozen=True)
class AnnotationSegment:
    """A labeled time interval: either an assembly subgoal or a posture episode."""

    label: str
    start_s: float
    end_s: float
    kind: str  # subgoal | posture

    def __post_init__(self):
        if self.kind not in ("subgoal", "posture"):
            raise SchemaError(f"unknown annotation kind {self.kind!r}")
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise SchemaError("annotation times must be finite")
        if self.start_s < 0:
            raise SchemaError("annotation start must be >= 0")
        if self.end_s <= self.start_s:
            raise SchemaError(
                f"annotation end ({self.end_s}) must exceed start ({self.start_s})"
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def _chain(entries: list[tuple[str, str | None]]) -> tuple[tuple[str, ...], dict[str, str | None]]:
    names = tuple(n for n, _ in entries)
    return names, {n: p for n, p in entries}


_POSE15_ENTRIES = [
    ("pelvis", None),
    ("neck", "pelvis"),
    ("head", "neck"),
    ("l_shoulder", "neck"),
    ("l_elbow", "l_shoulder"),
    ("l_wrist", "l_elbow"),
    ("r_shoulder", "neck"),
    ("r_elbow", "r_shoulder"),
    ("r_wrist", "r_elbow"),
    ("l_hip", "pelvis"),
    ("l_knee", "l_hip"),
    ("l_ankle", "l_knee"),
    ("r_hip", "pelvis"),
    ("r_knee", "r_hip"),
    ("r_ankle", "r_knee"),
]

_MOCAP24_ENTRIES = [
    ("hips", None),
    ("spine", "hips"),
    ("spine1", "spine"),
    ("spine2", "spine1"),
    ("spine3", "spine2"),
    ("neck", "spine3"),
    ("head", "neck"),
    ("head_top", "head"),
    ("l_collar", "spine3"),
    ("l_shoulder", "l_collar"),
    ("l_elbow", "l_shoulder"),
    ("l_wrist", "l_elbow"),
    ("r_collar", "spine3"),
    ("r_shoulder", "r_collar"),
    ("r_elbow", "r_shoulder"),
    ("r_wrist", "r_elbow"),
    ("l_hip", "hips"),
    ("l_knee", "l_hip"),
    ("l_ankle", "l_knee"),
    ("l_toe", "l_ankle"),
    ("r_hip", "hips"),
    ("r_knee", "r_hip"),
    ("r_ankle", "r_knee"),
    ("r_toe", "r_ankle"),
]

_MODEL25_ENTRIES = [
    ("nose", "neck"),
    ("neck", "mid_hip"),
    ("r_shoulder", "neck"),
    ("r_elbow", "r_shoulder"),
    ("r_wrist", "r_elbow"),
    ("l_shoulder", "neck"),
    ("l_elbow", "l_shoulder"),
    ("l_wrist", "l_elbow"),
    ("mid_hip", None),
    ("r_hip", "mid_hip"),
    ("r_knee", "r_hip"),
    ("r_ankle", "r_knee"),
    ("l_hip", "mid_hip"),
    ("l_knee", "l_hip"),
    ("l_ankle", "l_knee"),
    ("r_eye", "nose"),
    ("l_eye", "nose"),
    ("r_ear", "r_eye"),
    ("l_ear", "l_eye"),
    ("l_big_toe", "l_ankle"),
    ("l_small_toe", "l_big_toe"),
    ("l_heel", "l_ankle"),
    ("r_big_toe", "r_ankle"),
    ("r_small_toe", "r_big_toe"),
    ("r_heel", "r_ankle"),
]


def _make(name: str, entries) -> SkeletonTopology:
    joints, parent = _chain(entries)
    return SkeletonTopology(name=name, joints=joints, parent=parent,
                            expected_count=len(joints))


#: 15-joint topology produced by the monocular 3D pose estimator.
POSE15 = _make("pose15", _POSE15_ENTRIES)

#: 24-joint motion-capture suit topology.
MOCAP24 = _make("mocap24", _MOCAP24_ENTRIES)

#: 25-joint 2D keypoint topology of the upstream 2D detector.
MODEL25 = _make("model25", _MODEL25_ENTRIES)

BUILTIN_TOPOLOGIES = {t.name: t for t in (POSE15, MOCAP24, MODEL25)}

#: Default joint correspondence used when comparing motion-capture ground
#: truth against estimated poses (nearest semantic joint).  Maps
#: pose15 joint -> mocap24 joint; callers may substitute their own table.
MOCAP24_TO_POSE15 = {
    "pelvis": "hips",
    "neck": "neck",
    "head": "head",
    "l_shoulder": "l_shoulder",
    "l_elbow": "l_elbow",
    "l_wrist": "l_wrist",
    "r_shoulder": "r_shoulder",
    "r_elbow": "r_elbow",
    "r_wrist": "r_wrist",
    "l_hip": "l_hip",
    "l_knee": "l_knee",
    "l_ankle": "l_ankle",
    "r_hip": "r_hip",
    "r_knee": "r_knee",
    "r_ankle": "r_ankle",
}
