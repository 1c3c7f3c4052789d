"""Ingestion of precomputed model outputs.

The benchmark never runs face models itself.  Embeddings, detector
verdicts, attribute estimates, saliency heatmaps, and landmark grids
are produced offline and ingested here from flat files with strict
validation, so every downstream number is reproducible from the files
alone.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import ParseError

#: Landmark grids follow the 468-point face-mesh convention.
NUM_LANDMARKS = 468

#: Fixed face-region vocabulary used by the focus analysis.
REGION_VOCABULARY = (
    "forehead",
    "left_eye",
    "right_eye",
    "left_eyebrow",
    "right_eyebrow",
    "nose_bridge",
    "nose_tip",
    "left_cheek",
    "right_cheek",
    "lips",
    "chin",
    "jaw",
)

EMOTIONS = ("angry", "disgust", "fear", "happy", "neutral", "sad", "surprise")
ATTRIBUTE_RACES = ("Asian", "Black", "Indian", "LatinoHispanic", "MiddleEastern", "White")


@dataclass
class EmbeddingTable:
    """Image id -> fixed-dimension float vector from one embedding model."""

    model_tag: str
    dim: int
    entries: dict[str, np.ndarray]

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("embedding dimension must be positive")
        for image_id, vec in self.entries.items():
            vec = np.asarray(vec, dtype=np.float64)
            if vec.shape != (self.dim,):
                raise ValueError(
                    f"embedding for {image_id!r} has shape {vec.shape}, expected ({self.dim},)"
                )
            if not np.all(np.isfinite(vec)):
                raise ValueError(f"embedding for {image_id!r} contains NaN or Inf")
            self.entries[image_id] = vec

    def vector(self, image_id: str) -> np.ndarray:
        try:
            return self.entries[image_id]
        except KeyError:
            raise KeyError(f"no {self.model_tag!r} embedding for image {image_id!r}") from None

    def subset(self, image_ids: Iterable[str]) -> EmbeddingTable:
        return EmbeddingTable(
            model_tag=self.model_tag,
            dim=self.dim,
            entries={i: self.entries[i] for i in image_ids},
        )

    def __contains__(self, image_id: str) -> bool:
        return image_id in self.entries

    def __len__(self) -> int:
        return len(self.entries)


def load_embeddings(path: str | Path, model_tag: str | None = None) -> EmbeddingTable:
    """Read an embeddings CSV (header image_id,v0,v1,...)."""
    path = Path(path)
    entries: dict[str, np.ndarray] = {}
    dim = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "image_id" or len(header) < 2:
            raise ParseError(path, 1, f"bad header {header!r}")
        expected = ["image_id"] + [f"v{i}" for i in range(len(header) - 1)]
        if header != expected:
            raise ParseError(path, 1, "vector columns must be v0,v1,... in order")
        dim = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if len(row) != dim + 1:
                raise ParseError(path, lineno, f"expected {dim + 1} fields, got {len(row)}")
            image_id = row[0]
            if not image_id:
                raise ParseError(path, lineno, "empty image id")
            if image_id in entries:
                raise ParseError(path, lineno, f"duplicate image id {image_id!r}")
            try:
                vec = np.array([float(x) for x in row[1:]], dtype=np.float64)
            except ValueError:
                raise ParseError(path, lineno, "non-numeric vector component") from None
            if not np.all(np.isfinite(vec)):
                raise ParseError(path, lineno, "vector contains NaN or Inf")
            entries[image_id] = vec
    return EmbeddingTable(model_tag=model_tag or path.stem, dim=dim, entries=entries)


def emit_embeddings(table: EmbeddingTable, path: str | Path) -> None:
    """Write an embeddings CSV that load_embeddings reads back to 1e-6."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id"] + [f"v{i}" for i in range(table.dim)])
        for image_id in sorted(table.entries):
            vec = table.entries[image_id]
            writer.writerow([image_id] + [format(x, ".9g") for x in vec])


@dataclass
class DetectionTable:
    """Image id -> whether a face detector still found a face."""

    detector_tag: str
    entries: dict[str, bool]


def load_detections(path: str | Path, detector_tag: str | None = None) -> DetectionTable:
    """Read a detections CSV (header image_id,detected; values 0 or 1)."""
    path = Path(path)
    entries: dict[str, bool] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "detected"]:
            raise ParseError(path, 1, f"bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(path, lineno, f"expected 2 fields, got {len(row)}")
            image_id, flag = row
            if not image_id:
                raise ParseError(path, lineno, "empty image id")
            if image_id in entries:
                raise ParseError(path, lineno, f"duplicate image id {image_id!r}")
            if flag not in ("0", "1"):
                raise ParseError(path, lineno, f"detected must be 0 or 1, got {flag!r}")
            entries[image_id] = flag == "1"
    return DetectionTable(detector_tag=detector_tag or path.stem, entries=entries)


def emit_detections(table: DetectionTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "detected"])
        for image_id in sorted(table.entries):
            writer.writerow([image_id, int(table.entries[image_id])])


def detection_rate(table: DetectionTable, image_ids: Iterable[str] | None = None) -> float:
    """Fraction of images in which a face was still detected."""
    if image_ids is None:
        flags = list(table.entries.values())
    else:
        flags = [table.entries[i] for i in image_ids]
    if not flags:
        raise ValueError("no detection verdicts to average")
    return sum(flags) / len(flags)


@dataclass(frozen=True)
class AttributeRecord:
    """Soft-biometric estimates for one image; any field may be absent."""

    gender: str | None = None
    race: str | None = None
    emotion: str | None = None
    age: float | None = None
    pose: np.ndarray | None = None  # yaw, pitch, roll in degrees

    def __post_init__(self):
        if self.emotion is not None and self.emotion not in EMOTIONS:
            raise ValueError(f"unknown emotion {self.emotion!r}")
        if self.race is not None and self.race not in ATTRIBUTE_RACES:
            raise ValueError(f"unknown race label {self.race!r}")
        if self.age is not None:
            if not np.isfinite(self.age) or not 0 <= self.age <= 100:
                raise ValueError(f"age {self.age!r} out of range [0, 100]")
        if self.pose is not None:
            pose = np.asarray(self.pose, dtype=np.float64)
            if pose.shape != (3,) or not np.all(np.isfinite(pose)):
                raise ValueError("pose must be a finite 3-vector")
            object.__setattr__(self, "pose", pose)


@dataclass
class AttributeTable:
    estimator_tag: str
    entries: dict[str, AttributeRecord]


ATTRIBUTE_HEADER = ["image_id", "gender", "race", "emotion", "age", "yaw", "pitch", "roll"]


def load_attributes(path: str | Path, estimator_tag: str | None = None) -> AttributeTable:
    """Read an attributes CSV; empty cells mean the estimate is absent.

    The three pose angles must be given together or not at all.
    """
    path = Path(path)
    entries: dict[str, AttributeRecord] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ATTRIBUTE_HEADER:
            raise ParseError(path, 1, f"bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(ATTRIBUTE_HEADER):
                raise ParseError(
                    path, lineno, f"expected {len(ATTRIBUTE_HEADER)} fields, got {len(row)}"
                )
            image_id, gender, race, emotion, age_s, yaw, pitch, roll = row
            if not image_id:
                raise ParseError(path, lineno, "empty image id")
            if image_id in entries:
                raise ParseError(path, lineno, f"duplicate image id {image_id!r}")
            angles = [yaw, pitch, roll]
            given = [a for a in angles if a != ""]
            if given and len(given) != 3:
                raise ParseError(path, lineno, "pose needs all of yaw, pitch, roll")
            try:
                age = float(age_s) if age_s else None
                pose = np.array([float(a) for a in angles]) if given else None
            except ValueError:
                raise ParseError(path, lineno, "non-numeric age or pose angle") from None
            try:
                entries[image_id] = AttributeRecord(
                    gender=gender or None,
                    race=race or None,
                    emotion=emotion or None,
                    age=age,
                    pose=pose,
                )
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    return AttributeTable(estimator_tag=estimator_tag or path.stem, entries=entries)


def emit_attributes(table: AttributeTable, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ATTRIBUTE_HEADER)
        for image_id in sorted(table.entries):
            rec = table.entries[image_id]
            pose = ["", "", ""] if rec.pose is None else [format(a, ".9g") for a in rec.pose]
            writer.writerow(
                [
                    image_id,
                    rec.gender or "",
                    rec.race or "",
                    rec.emotion or "",
                    "" if rec.age is None else format(rec.age, ".9g"),
                ]
                + pose
            )


HEATMAP_MAGIC = b"HMAP"


@dataclass
class Heatmap:
    """A saliency grid with values in [0, 1], row-major, origin top-left."""

    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 2 or vals.shape[0] < 1 or vals.shape[1] < 1:
            raise ValueError("heatmap must be a 2-D grid")
        if not np.all(np.isfinite(vals)):
            raise ValueError("heatmap contains NaN or Inf")
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("heatmap values must lie in [0, 1]")
        self.values = vals

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


def load_heatmap(path: str | Path) -> Heatmap:
    """Read a binary heatmap: 16-byte header then float32 cells.

    Header layout: magic b"HMAP", then height, width, and a reserved
    word as little-endian uint32.
    """
    path = Path(path)
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != HEATMAP_MAGIC:
        raise ParseError(path, None, "not a heatmap file (bad magic)")
    height, width, reserved = struct.unpack_from("<III", raw, 4)
    if height < 1 or width < 1:
        raise ParseError(path, None, f"bad dimensions {height}x{width}")
    expected = 16 + 4 * height * width
    if len(raw) != expected:
        raise ParseError(path, None, f"expected {expected} bytes, found {len(raw)}")
    cells = np.frombuffer(raw, dtype="<f4", offset=16).reshape(height, width)
    try:
        return Heatmap(values=cells.astype(np.float64))
    except ValueError as exc:
        raise ParseError(path, None, str(exc)) from None


def emit_heatmap(hm: Heatmap, path: str | Path) -> None:
    header = HEATMAP_MAGIC + struct.pack("<III", hm.shape[0], hm.shape[1], 0)
    cells = hm.values.astype("<f4").tobytes(order="C")
    Path(path).write_bytes(header + cells)


def load_region_map() -> dict[int, str]:
    """The packaged default landmark-index -> face-region table."""
    text = resources.files("deface_bench").joinpath("data/region_map_v1.csv").read_text()
    mapping: dict[int, str] = {}
    lines = text.strip().split("\n")
    if lines[0] != "index,region":
        raise ValueError("region map header mismatch")
    for line in lines[1:]:
        idx_s, region = line.split(",")
        mapping[int(idx_s)] = region
    _check_region_map(mapping)
    return mapping


def _check_region_map(mapping: Mapping[int, str]) -> None:
    if set(mapping) != set(range(NUM_LANDMARKS)):
        raise ValueError(f"region map must cover indices 0..{NUM_LANDMARKS - 1} exactly")
    bad = set(mapping.values()) - set(REGION_VOCABULARY)
    if bad:
        raise ValueError(f"unknown regions in map: {sorted(bad)}")


@dataclass
class LandmarkSet:
    """Normalized landmark coordinates for one image, plus a region map."""

    image_id: str
    points: np.ndarray  # (NUM_LANDMARKS, 2) with x, y in [0, 1]
    region_map: Mapping[int, str]

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (NUM_LANDMARKS, 2):
            raise ValueError(f"landmarks must have shape ({NUM_LANDMARKS}, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)) or pts.min() < 0.0 or pts.max() > 1.0:
            raise ValueError("landmark coordinates must lie in [0, 1]")
        self.points = pts
        _check_region_map(self.region_map)

    def region_indices(self, region: str) -> list[int]:
        return [i for i in range(NUM_LANDMARKS) if self.region_map[i] == region]


def load_landmarks(
    path: str | Path, region_map: Mapping[int, str] | None = None
) -> dict[str, LandmarkSet]:
    """Read a landmarks CSV (image_id,idx,x,y) into per-image sets.

    Every image must supply each index 0..467 exactly once.
    """
    path = Path(path)
    if region_map is None:
        region_map = load_region_map()
    grids: dict[str, np.ndarray] = {}
    seen: dict[str, set[int]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["image_id", "idx", "x", "y"]:
            raise ParseError(path, 1, f"bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 4:
                raise ParseError(path, lineno, f"expected 4 fields, got {len(row)}")
            image_id, idx_s, x_s, y_s = row
            if not image_id:
                raise ParseError(path, lineno, "empty image id")
            try:
                idx = int(idx_s)
                x, y = float(x_s), float(y_s)
            except ValueError:
                raise ParseError(path, lineno, "non-numeric landmark row") from None
            if not 0 <= idx < NUM_LANDMARKS:
                raise ParseError(path, lineno, f"landmark index {idx} out of range")
            if image_id not in grids:
                grids[image_id] = np.zeros((NUM_LANDMARKS, 2))
                seen[image_id] = set()
            if idx in seen[image_id]:
                raise ParseError(path, lineno, f"duplicate landmark {idx} for {image_id!r}")
            seen[image_id].add(idx)
            grids[image_id][idx] = (x, y)
    out: dict[str, LandmarkSet] = {}
    for image_id, pts in grids.items():
        if len(seen[image_id]) != NUM_LANDMARKS:
            missing = NUM_LANDMARKS - len(seen[image_id])
            raise ParseError(path, None, f"{image_id!r} is missing {missing} landmark indices")
        try:
            out[image_id] = LandmarkSet(image_id=image_id, points=pts, region_map=region_map)
        except ValueError as exc:
            raise ParseError(path, None, f"{image_id!r}: {exc}") from None
    return out


def emit_landmarks(sets: Mapping[str, LandmarkSet], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["image_id", "idx", "x", "y"])
        for image_id in sorted(sets):
            pts = sets[image_id].points
            for idx in range(NUM_LANDMARKS):
                writer.writerow(
                    [image_id, idx, format(pts[idx, 0], ".9g"), format(pts[idx, 1], ".9g")]
                )


def load_confidences(path: str | Path) -> list[tuple[str, str, float]]:
    """Read verification confidences (probe_id,gallery_id,confidence in [0,100])."""
    path = Path(path)
    rows: list[tuple[str, str, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["probe_id", "gallery_id", "confidence"]:
            raise ParseError(path, 1, f"bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 3:
                raise ParseError(path, lineno, f"expected 3 fields, got {len(row)}")
            probe_id, gallery_id, conf_s = row
            if not probe_id or not gallery_id:
                raise ParseError(path, lineno, "empty probe or gallery id")
            try:
                conf = float(conf_s)
            except ValueError:
                raise ParseError(path, lineno, "non-numeric confidence") from None
            if not np.isfinite(conf) or not 0 <= conf <= 100:
                raise ParseError(path, lineno, f"confidence {conf_s} out of range [0, 100]")
            rows.append((probe_id, gallery_id, conf))
    return rows
