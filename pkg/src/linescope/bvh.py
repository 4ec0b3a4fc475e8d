"""BVH motion-capture ingest: parsing, forward kinematics, resampling.

Joint world positions are computed by composing, down the hierarchy,
``translation(offset + position channels) @ rotations`` with the rotations
applied in the exact channel order the file declares.  File units are
converted to meters via a caller-supplied scale (most suit exports are in
centimeters, hence the 0.01 default used by the manifest).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import PoseFrame, PoseSequence, SchemaError, SkeletonTopology

POSITION_CHANNELS = ("Xposition", "Yposition", "Zposition")
ROTATION_CHANNELS = ("Xrotation", "Yrotation", "Zrotation")

DEFAULT_FILE_TO_METERS = 0.01


class BvhParseError(SchemaError):
    """Malformed BVH file."""


@dataclass(frozen=True)
class UnitScale:
    """Multiplier taking BVH file units to meters."""

    file_to_meters: float = DEFAULT_FILE_TO_METERS

    def __post_init__(self):
        if not (self.file_to_meters > 0 and math.isfinite(self.file_to_meters)):
            raise SchemaError("file_to_meters must be positive and finite")


@dataclass(frozen=True)
class BvhJoint:
    name: str
    parent: int  # index into rig.joints, -1 for root
    offset: np.ndarray  # (3,) file units
    channels: tuple[str, ...]
    channel_offset: int  # index of this joint's first channel in a motion row
    is_end_site: bool

    def __post_init__(self):
        off = np.asarray(self.offset, dtype=np.float64).copy()
        off.setflags(write=False)
        object.__setattr__(self, "offset", off)


@dataclass(frozen=True)
class BvhRig:
    """Parsed BVH file: hierarchy plus raw per-frame channel values."""

    joints: tuple[BvhJoint, ...]
    frame_count: int
    frame_time: float
    motion: np.ndarray  # (frame_count, total_channels)

    def __post_init__(self):
        mot = np.asarray(self.motion, dtype=np.float64).copy()
        mot.setflags(write=False)
        object.__setattr__(self, "motion", mot)
        total = sum(len(j.channels) for j in self.joints)
        if mot.shape != (self.frame_count, total):
            raise BvhParseError(
                f"motion shape {mot.shape} != ({self.frame_count}, {total})"
            )
        if self.frame_time <= 0 or not math.isfinite(self.frame_time):
            raise BvhParseError(f"non-positive frame time {self.frame_time}")
        if self.frame_count < 1:
            raise BvhParseError("BVH must contain at least one frame")

    @property
    def rate_hz(self) -> float:
        return 1.0 / self.frame_time

    @property
    def channel_count(self) -> int:
        return sum(len(j.channels) for j in self.joints)

    def joint_names(self, include_end_sites: bool = False) -> list[str]:
        return [j.name for j in self.joints if include_end_sites or not j.is_end_site]


def parse_bvh(path: str | Path) -> BvhRig:
    """Parse a BVH file (HIERARCHY + MOTION sections)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    return parse_bvh_text(path.read_text())


def parse_bvh_text(text: str) -> BvhRig:
    tokens = text.split()
    pos = 0

    def peek() -> str:
        if pos >= len(tokens):
            raise BvhParseError("unexpected end of file")
        return tokens[pos]

    def take(expected: str | None = None) -> str:
        nonlocal pos
        tok = peek()
        if expected is not None and tok.upper() != expected.upper():
            raise BvhParseError(f"expected {expected!r}, got {tok!r}")
        pos += 1
        return tok

    def take_float() -> float:
        tok = take()
        try:
            return float(tok)
        except ValueError as e:
            raise BvhParseError(f"expected a number, got {tok!r}") from e

    take("HIERARCHY")
    joints: list[BvhJoint] = []
    channel_cursor = 0

    def parse_joint(parent: int) -> None:
        nonlocal pos, channel_cursor
        kw = take().upper()
        if kw == "END":
            take("Site")
            name = joints[parent].name + "_end"
            is_end = True
        elif kw in ("ROOT", "JOINT"):
            if kw == "ROOT" and parent != -1:
                raise BvhParseError("nested ROOT")
            name = take()
            is_end = False
        else:
            raise BvhParseError(f"expected ROOT/JOINT/End, got {kw!r}")
        take("{")
        take("OFFSET")
        offset = np.array([take_float(), take_float(), take_float()])
        channels: tuple[str, ...] = ()
        if not is_end:
            take("CHANNELS")
            n = int(take_float())
            chans = []
            for _ in range(n):
                ch = take()
                if ch not in POSITION_CHANNELS + ROTATION_CHANNELS:
                    raise BvhParseError(f"unknown channel {ch!r}")
                chans.append(ch)
            channels = tuple(chans)
        idx = len(joints)
        joints.append(BvhJoint(name=name, parent=parent, offset=offset,
                               channels=channels, channel_offset=channel_cursor,
                               is_end_site=is_end))
        channel_cursor += len(channels)
        while peek() != "}":
            parse_joint(idx)
        take("}")

    if peek().upper() != "ROOT":
        raise BvhParseError("hierarchy must start with ROOT")
    parse_joint(-1)

    take("MOTION")
    tok = take()
    if tok.rstrip(":").upper() != "FRAMES":
        raise BvhParseError(f"expected 'Frames:', got {tok!r}")
    if not tok.endswith(":"):
        take(":")
    frame_count = int(take_float())
    tok = take()
    if tok.upper() != "FRAME":
        raise BvhParseError(f"expected 'Frame Time:', got {tok!r}")
    tok = take()
    if tok.rstrip(":").upper() != "TIME":
        raise BvhParseError(f"expected 'Frame Time:', got {tok!r}")
    if not tok.endswith(":"):
        take(":")
    frame_time = take_float()

    values = tokens[pos:]
    total = channel_cursor
    if len(values) != frame_count * total:
        raise BvhParseError(
            f"channel/value count mismatch: {frame_count} frames x {total} "
            f"channels declared, {len(values)} values present"
        )
    try:
        motion = np.array([float(v) for v in values]).reshape(frame_count, total)
    except ValueError as e:
        raise BvhParseError(f"non-numeric motion value: {e}") from e
    return BvhRig(joints=tuple(joints), frame_count=frame_count,
                  frame_time=frame_time, motion=motion)


def _rot(axis: str, degrees: float) -> np.ndarray:
    c, s = math.cos(math.radians(degrees)), math.sin(math.radians(degrees))
    if axis == "X":
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)
    if axis == "Y":
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)


def _local_transform(joint: BvhJoint, row: np.ndarray) -> np.ndarray:
    trans = joint.offset.copy()
    R = np.eye(3)
    for k, ch in enumerate(joint.channels):
        v = row[joint.channel_offset + k]
        if ch == "Xposition":
            trans[0] += v
        elif ch == "Yposition":
            trans[1] += v
        elif ch == "Zposition":
            trans[2] += v
        else:
            R = R @ _rot(ch[0], v)
    T = np.eye(4)
    T[:3, :3] = R
    T[:3, 3] = trans
    return T


def forward_kinematics(rig: BvhRig, frame_index: int,
                       scale: UnitScale = UnitScale()) -> PoseFrame:
    """World-space joint positions for one frame, in meters.

    End sites are evaluated as part of the hierarchy but excluded from the
    returned frame, whose joints follow ``rig.joint_names()`` order.
    """
    if not 0 <= frame_index < rig.frame_count:
        raise IndexError(f"frame index {frame_index} out of range "
                         f"[0, {rig.frame_count})")
    row = rig.motion[frame_index]
    world = [np.eye(4)] * len(rig.joints)
    positions = []
    for i, joint in enumerate(rig.joints):
        local = _local_transform(joint, row)
        world[i] = local if joint.parent < 0 else world[joint.parent] @ local
        if not joint.is_end_site:
            positions.append(world[i][:3, 3] * scale.file_to_meters)
    return PoseFrame(
        timestamp=frame_index * rig.frame_time,
        positions=np.array(positions),
        confidences=np.ones(len(positions)),
        frame="global",
    )


def topology_from_rig(rig: BvhRig, name: str = "bvh") -> SkeletonTopology:
    """Topology over the rig's channelled joints (end sites dropped)."""
    names = []
    parent: dict[str, str | None] = {}
    for j in rig.joints:
        if j.is_end_site:
            continue
        names.append(j.name)
        parent[j.name] = None if j.parent < 0 else rig.joints[j.parent].name
    return SkeletonTopology(name=name, joints=tuple(names), parent=parent,
                            expected_count=len(names))


def fk_sequence(rig: BvhRig, scale: UnitScale = UnitScale(),
                topology_name: str = "bvh") -> PoseSequence:
    """Forward kinematics over all frames; exactly frame_count pose frames."""
    topology = topology_from_rig(rig, topology_name)
    frames = tuple(forward_kinematics(rig, i, scale) for i in range(rig.frame_count))
    return PoseSequence(topology=topology, frames=frames, rate_hz=rig.rate_hz)


def resample(seq: PoseSequence, target_hz: float) -> PoseSequence:
    """Linearly resample joint positions to a uniform lower rate.

    Output timestamps stay on the source clock, starting at the first source
    timestamp and never extending beyond the last one.  Confidences are
    interpolated alongside positions.
    """
    if target_hz <= 0 or not math.isfinite(target_hz):
        raise ValueError(f"target rate must be positive, got {target_hz}")
    if target_hz > seq.rate_hz:
        raise ValueError(
            f"upsampling requested: {target_hz} Hz from a {seq.rate_hz} Hz source"
        )
    if len(seq) < 2:
        raise ValueError("resampling needs at least 2 frames")
    if target_hz == seq.rate_hz:
        return seq
    ts = seq.timestamps()
    pos = seq.positions_array()
    conf = seq.confidences_array()
    t0, t_last = ts[0], ts[-1]
    n_out = int(math.floor((t_last - t0) * target_hz)) + 1
    frames = []
    for k in range(n_out):
        t = t0 + k / target_hz
        j = int(np.searchsorted(ts, t, side="right")) - 1
        if j >= len(ts) - 1:
            p, c = pos[-1], conf[-1]
        else:
            w = (t - ts[j]) / (ts[j + 1] - ts[j])
            p = (1.0 - w) * pos[j] + w * pos[j + 1]
            c = (1.0 - w) * conf[j] + w * conf[j + 1]
        frames.append(PoseFrame(timestamp=t, positions=p,
                                confidences=np.clip(c, 0.0, 1.0),
                                frame=seq.frame_tag))
    return PoseSequence(topology=seq.topology, frames=tuple(frames),
                        rate_hz=target_hz)
