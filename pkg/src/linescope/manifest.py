"""Dataset manifests and annotation tables.

A manifest is a single JSON file binding one recorded task cycle together:
workstation id, camera descriptors (intrinsics + rigid camera-to-global
extrinsics), and relative paths to the recorded streams.  Annotation tables
are comma-separated text with one row per assembly subgoal and one duration
column per posture class.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import POSTURE_COLUMNS, AnnotationSegment, SchemaError

WORKSTATIONS = ("WS10", "WS20", "WS30")

ORTHONORMAL_TOL = 1e-6


def is_rigid_transform(T: np.ndarray, tol: float = ORTHONORMAL_TOL) -> bool:
    """True if T is a 4x4 rigid transform: orthonormal rotation, [0,0,0,1] last row."""
    T = np.asarray(T, dtype=np.float64)
    if T.shape != (4, 4):
        return False
    R = T[:3, :3]
    if np.max(np.abs(R.T @ R - np.eye(3))) > tol:
        return False
    if abs(np.linalg.det(R) - 1.0) > tol:
        return False
    return bool(np.max(np.abs(T[3] - np.array([0.0, 0.0, 0.0, 1.0]))) <= tol)


@dataclass(frozen=True)
class CameraDescriptor:
    """One stationary RGB-D camera: pinhole intrinsics plus a rigid
    camera-to-global extrinsic transform."""

    camera_id: str
    side: str  # inner | outer
    fx: float
    fy: float
    cx: float
    cy: float
    extrinsic: np.ndarray  # (4, 4) camera -> global
    mount_height_m: float

    def __post_init__(self):
        ext = np.asarray(self.extrinsic, dtype=np.float64).copy()
        ext.setflags(write=False)
        object.__setattr__(self, "extrinsic", ext)
        if self.fx <= 0 or self.fy <= 0:
            raise SchemaError(f"camera {self.camera_id!r}: focal lengths must be positive")
        if not is_rigid_transform(ext):
            raise SchemaError(
                f"camera {self.camera_id!r}: extrinsic is not a rigid transform "
                f"(rotation must be orthonormal within {ORTHONORMAL_TOL:g})"
            )
        if not (math.isfinite(self.mount_height_m) and self.mount_height_m > 0):
            raise SchemaError(f"camera {self.camera_id!r}: bad mount height")

    def __eq__(self, other):
        if not isinstance(other, CameraDescriptor):
            return NotImplemented
        return (
            self.camera_id == other.camera_id
            and self.side == other.side
            and (self.fx, self.fy, self.cx, self.cy) == (other.fx, other.fy, other.cx, other.cy)
            and self.mount_height_m == other.mount_height_m
            and np.array_equal(self.extrinsic, other.extrinsic)
        )


@dataclass(frozen=True)
class DatasetManifest:
    """Binds one task-cycle recording: cameras, streams, annotations."""

    workstation: str
    cameras: tuple[CameraDescriptor, ...]
    recordings: dict[str, object]  # see RECORDING_KEYS
    cart_location: tuple[float, float, float]
    bvh_to_meters: float
    root_dir: Path

    # Recording entries and their value types.  pose_streams maps
    # camera id -> relative path; the rest are single relative paths.
    PATH_KEYS = ("gt_stream", "bvh", "annotations", "door_track",
                 "depth_dir", "mask_dir", "episodes")
    OPTIONAL_KEYS = ("gt_stream", "bvh", "door_track", "depth_dir", "mask_dir",
                     "door_camera", "episodes")

    def __post_init__(self):
        if self.workstation not in WORKSTATIONS:
            raise SchemaError(f"unknown workstation {self.workstation!r}")
        if len(self.cameras) > 2:
            raise SchemaError(
                f"camera count: at most 2 cameras per workstation, got {len(self.cameras)}"
            )
        ids = [c.camera_id for c in self.cameras]
        if len(set(ids)) != len(ids):
            raise SchemaError("duplicate camera ids")
        if not (self.bvh_to_meters > 0 and math.isfinite(self.bvh_to_meters)):
            raise SchemaError("bvh_to_meters must be positive and finite")
        streams = self.recordings.get("pose_streams", {})
        for cam_id in streams:
            if cam_id not in ids:
                raise SchemaError(f"pose stream for undeclared camera {cam_id!r}")
        if "annotations" not in self.recordings:
            raise SchemaError("manifest must reference an annotation table")

    def camera(self, camera_id: str) -> CameraDescriptor:
        for c in self.cameras:
            if c.camera_id == camera_id:
                return c
        raise KeyError(camera_id)

    def resolve(self, rel: str) -> Path:
        return (self.root_dir / rel).resolve()

    def path(self, key: str) -> Path | None:
        rel = self.recordings.get(key)
        return None if rel is None else self.resolve(str(rel))

    def pose_stream_paths(self) -> dict[str, Path]:
        return {cam: self.resolve(str(rel))
                for cam, rel in self.recordings.get("pose_streams", {}).items()}

    def __eq__(self, other):
        if not isinstance(other, DatasetManifest):
            return NotImplemented
        return (
            self.workstation == other.workstation
            and self.cameras == other.cameras
            and self.recordings == other.recordings
            and self.cart_location == other.cart_location
            and self.bvh_to_meters == other.bvh_to_meters
        )


def _check_paths(m: DatasetManifest) -> None:
    missing = []
    for cam, p in m.pose_stream_paths().items():
        if not p.exists():
            missing.append(f"pose stream {cam!r}: {p}")
    for key in DatasetManifest.PATH_KEYS:
        p = m.path(key)
        if p is not None and not p.exists():
            missing.append(f"{key}: {p}")
    if missing:
        raise SchemaError("dangling recording path(s): " + "; ".join(missing))


def load_manifest(path: str | Path, check_paths: bool = True) -> DatasetManifest:
    """Load and fully validate a manifest file.

    Relative recording paths are resolved against the manifest's directory.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise SchemaError(f"manifest is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise SchemaError("manifest root must be an object")
    try:
        cameras = []
        for cam in raw.get("cameras", []):
            intr = cam["intrinsics"]
            cameras.append(CameraDescriptor(
                camera_id=str(cam["id"]),
                side=str(cam.get("side", "inner")),
                fx=float(intr["fx"]), fy=float(intr["fy"]),
                cx=float(intr["cx"]), cy=float(intr["cy"]),
                extrinsic=np.array(cam["extrinsic"], dtype=np.float64),
                mount_height_m=float(cam.get("mount_height_m", 1.85)),
            ))
        cart = raw.get("cart_location", [0.0, 0.0, 0.0])
        manifest = DatasetManifest(
            workstation=str(raw["workstation"]),
            cameras=tuple(cameras),
            recordings=dict(raw.get("recordings", {})),
            cart_location=tuple(float(v) for v in cart),
            bvh_to_meters=float(raw.get("units", {}).get("bvh_to_meters", 0.01)),
            root_dir=path.parent.resolve(),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, SchemaError):
            raise
        raise SchemaError(f"manifest schema violation: {e}") from e
    if check_paths:
        _check_paths(manifest)
    return manifest


def save_manifest(m: DatasetManifest, path: str | Path) -> None:
    doc = {
        "workstation": m.workstation,
        "cameras": [
            {
                "id": c.camera_id,
                "side": c.side,
                "intrinsics": {"fx": c.fx, "fy": c.fy, "cx": c.cx, "cy": c.cy},
                "extrinsic": [list(row) for row in c.extrinsic],
                "mount_height_m": c.mount_height_m,
            }
            for c in m.cameras
        ],
        "cart_location": list(m.cart_location),
        "units": {"bvh_to_meters": m.bvh_to_meters},
        "recordings": m.recordings,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


# ---------------------------------------------------------------------------
# Annotation tables
# ---------------------------------------------------------------------------

_ANNOTATION_HEADER = ("subgoal", "start_s", "end_s") + POSTURE_COLUMNS


def parse_annotations(path: str | Path) -> list[AnnotationSegment]:
    """Parse an annotation table into subgoal and posture segments.

    Each row yields one subgoal segment.  Every non-empty posture duration
    cell yields one posture segment attributed to that subgoal's interval:
    it starts at the subgoal start and lasts the annotated duration, so the
    duration survives a parse/emit round trip unchanged.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    lines = [ln for ln in path.read_text().splitlines()
             if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise SchemaError(f"{path}: empty annotation table")
    header = [c.strip() for c in lines[0].split(",")]
    if header[:3] != list(_ANNOTATION_HEADER[:3]):
        raise SchemaError(f"{path}: header must start with subgoal,start_s,end_s")
    for col in header[3:]:
        if col not in POSTURE_COLUMNS:
            raise SchemaError(f"{path}: unknown posture column {col!r}")
    segments: list[AnnotationSegment] = []
    for lineno, ln in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in ln.split(",")]
        if len(cells) != len(header):
            raise SchemaError(f"{path}:{lineno}: expected {len(header)} cells, got {len(cells)}")
        label = cells[0]
        try:
            start_s, end_s = float(cells[1]), float(cells[2])
        except ValueError as e:
            raise SchemaError(f"{path}:{lineno}: non-numeric start/end") from e
        try:
            subgoal = AnnotationSegment(label=label, start_s=start_s, end_s=end_s,
                                        kind="subgoal")
        except SchemaError as e:
            raise SchemaError(f"{path}:{lineno}: {e}") from e
        segments.append(subgoal)
        for col, cell in zip(header[3:], cells[3:]):
            if not cell:
                continue
            try:
                duration = float(cell)
            except ValueError as e:
                raise SchemaError(f"{path}:{lineno}: non-numeric duration {cell!r}") from e
            if not (duration > 0 and math.isfinite(duration)):
                raise SchemaError(f"{path}:{lineno}: duration must be positive")
            segments.append(AnnotationSegment(
                label=col, start_s=start_s, end_s=start_s + duration, kind="posture"))
    return segments


def write_annotations(segments: list[AnnotationSegment], path: str | Path) -> None:
    """Emit segments back to the annotation-table layout.

    Posture durations are re-aggregated per (subgoal, class); the sums equal
    the parsed input sums exactly.
    """
    subgoals = [s for s in segments if s.kind == "subgoal"]
    postures = [s for s in segments if s.kind == "posture"]
    rows = []
    for sg in subgoals:
        durations = {col: 0.0 for col in POSTURE_COLUMNS}
        for p in postures:
            if p.label in durations and sg.start_s <= p.start_s < sg.end_s:
                durations[p.label] += p.duration_s
        cells = [sg.label, _fmt(sg.start_s), _fmt(sg.end_s)]
        cells += [_fmt(durations[c]) if durations[c] > 0 else "" for c in POSTURE_COLUMNS]
        rows.append(",".join(cells))
    text = ",".join(_ANNOTATION_HEADER) + "\n" + "\n".join(rows) + "\n"
    Path(path).write_text(text)


def _fmt(x: float) -> str:
    """Shortest exact decimal form (round-trips through float)."""
    return repr(float(x))
