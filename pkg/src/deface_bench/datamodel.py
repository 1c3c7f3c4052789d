"""Dataset inventory: identities, demographic groups, manifests.

A dataset is a flat list of face records.  Each record ties one image to
one identity, and each identity belongs to exactly one demographic
group.  Obfuscation outcomes are tracked per image as produced/failed
sets so the passing rate can be computed without touching pixels.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import IntegrityError, ParseError
from .rng import derive_rng


class Gender(enum.Enum):
    FEMALE = "Female"
    MALE = "Male"


class Race(enum.Enum):
    ASIAN = "Asian"
    BLACK = "Black"
    INDIAN = "Indian"
    WHITE = "White"
    UNSPECIFIED = "Unspecified"


@dataclass(frozen=True, order=True)
class DemographicKey:
    """A demographic group: gender always set, race optional."""

    gender: Gender
    race: Race = Race.UNSPECIFIED

    @property
    def label(self) -> str:
        if self.race is Race.UNSPECIFIED:
            return self.gender.value
        return f"{self.race.value} {self.gender.value}"

    @classmethod
    def from_label(cls, label: str) -> DemographicKey:
        parts = label.split()
        if len(parts) == 1:
            return cls(gender=Gender(parts[0]))
        if len(parts) == 2:
            return cls(gender=Gender(parts[1]), race=Race(parts[0]))
        raise ValueError(f"not a demographic label: {label!r}")

    def __str__(self) -> str:
        return self.label


#: The eight race-by-gender groups, in label order.
PAIRED_GROUPS: tuple[DemographicKey, ...] = tuple(
    DemographicKey(gender=g, race=r)
    for r in (Race.ASIAN, Race.BLACK, Race.INDIAN, Race.WHITE)
    for g in (Gender.FEMALE, Gender.MALE)
)

#: Gender-only groups for datasets without race annotations.
GENDER_GROUPS: tuple[DemographicKey, ...] = (
    DemographicKey(gender=Gender.FEMALE),
    DemographicKey(gender=Gender.MALE),
)


@dataclass(frozen=True)
class FaceRecord:
    image_id: str
    identity_id: str
    demographic: DemographicKey
    image_path: str | None = None


@dataclass
class Dataset:
    """An immutable inventory of face records with consistency checks.

    Raises IntegrityError when two records share an image id or when one
    identity appears under two demographic groups.
    """

    name: str
    records: tuple[FaceRecord, ...]
    _by_image: dict[str, FaceRecord] = field(init=False, repr=False, compare=False)
    _by_identity: dict[str, list[FaceRecord]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.records = tuple(self.records)
        by_image: dict[str, FaceRecord] = {}
        by_identity: dict[str, list[FaceRecord]] = {}
        demo_of: dict[str, DemographicKey] = {}
        for rec in self.records:
            if rec.image_id in by_image:
                raise IntegrityError(f"duplicate image id {rec.image_id!r}")
            by_image[rec.image_id] = rec
            seen = demo_of.get(rec.identity_id)
            if seen is None:
                demo_of[rec.identity_id] = rec.demographic
            elif seen != rec.demographic:
                raise IntegrityError(
                    f"identity {rec.identity_id!r} appears in two demographic groups"
                )
            by_identity.setdefault(rec.identity_id, []).append(rec)
        for recs in by_identity.values():
            recs.sort(key=lambda r: r.image_id)
        self._by_image = by_image
        self._by_identity = by_identity

    def image_ids(self) -> list[str]:
        return [rec.image_id for rec in self.records]

    def record(self, image_id: str) -> FaceRecord:
        try:
            return self._by_image[image_id]
        except KeyError:
            raise KeyError(f"image id {image_id!r} not in dataset {self.name!r}") from None

    def identities(self) -> dict[str, list[FaceRecord]]:
        """Identity id -> its records, sorted by image id."""
        return self._by_identity

    def demographic_of(self, identity_id: str) -> DemographicKey:
        return self._by_identity[identity_id][0].demographic

    def groups(self) -> list[DemographicKey]:
        return sorted({rec.demographic for rec in self.records}, key=lambda g: g.label)

    def group_records(self, group: DemographicKey) -> list[FaceRecord]:
        return [rec for rec in self.records if rec.demographic == group]


@dataclass(frozen=True)
class ObfuscationRun:
    """Outcome of running one obfuscation method over a dataset."""

    method: str
    dataset: Dataset
    produced: frozenset[str]
    failed: frozenset[str]

    def __post_init__(self):
        overlap = self.produced & self.failed
        if overlap:
            raise IntegrityError(f"images both produced and failed: {sorted(overlap)[:3]}")
        known = set(self.dataset.image_ids())
        stray = (self.produced | self.failed) - known
        if stray:
            raise IntegrityError(f"outcome for unknown images: {sorted(stray)[:3]}")


def passing_rate(run: ObfuscationRun) -> float:
    """Fraction of attempted images the method successfully obfuscated."""
    attempted = len(run.produced) + len(run.failed)
    if attempted == 0:
        raise ValueError("obfuscation run covers no images")
    return len(run.produced) / attempted


MANIFEST_HEADER = ["image_id", "identity_id", "gender", "race", "image_path"]


def load_manifest(path: str | Path, name: str | None = None) -> Dataset:
    """Read a manifest CSV into a Dataset.

    Columns are image_id, identity_id, gender, race, image_path.  Race
    may be empty (demographic is gender-only) and so may image_path.
    """
    path = Path(path)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise ParseError(path, 1, f"bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ParseError(path, lineno, f"expected 5 fields, got {len(row)}")
            image_id, identity_id, gender_s, race_s, image_path = row
            if not image_id or not identity_id:
                raise ParseError(path, lineno, "empty image or identity id")
            try:
                gender = Gender(gender_s)
            except ValueError:
                raise ParseError(path, lineno, f"unknown gender {gender_s!r}") from None
            try:
                race = Race(race_s) if race_s else Race.UNSPECIFIED
            except ValueError:
                raise ParseError(path, lineno, f"unknown race {race_s!r}") from None
            records.append(
                FaceRecord(
                    image_id=image_id,
                    identity_id=identity_id,
                    demographic=DemographicKey(gender=gender, race=race),
                    image_path=image_path or None,
                )
            )
    return Dataset(name=name if name is not None else path.stem, records=tuple(records))


def emit_manifest(dataset: Dataset, path: str | Path) -> None:
    """Write a Dataset back out as a manifest CSV with LF line endings."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for rec in dataset.records:
            race = "" if rec.demographic.race is Race.UNSPECIFIED else rec.demographic.race.value
            writer.writerow(
                [rec.image_id, rec.identity_id, rec.demographic.gender.value, race,
                 rec.image_path or ""]
            )


OUTCOME_HEADER = ["image_id", "status"]


def load_outcomes(path: str | Path, dataset: Dataset, method: str) -> ObfuscationRun:
    """Read per-image obfuscation outcomes (status produced|failed)."""
    path = Path(path)
    produced: set[str] = set()
    failed: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != OUTCOME_HEADER:
            raise ParseError(path, 1, f"bad header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 2:
                raise ParseError(path, lineno, f"expected 2 fields, got {len(row)}")
            image_id, status = row
            if not image_id:
                raise ParseError(path, lineno, "empty image id")
            if image_id in produced or image_id in failed:
                raise ParseError(path, lineno, f"duplicate outcome for {image_id!r}")
            if status == "produced":
                produced.add(image_id)
            elif status == "failed":
                failed.add(image_id)
            else:
                raise ParseError(path, lineno, f"status must be produced|failed, got {status!r}")
    return ObfuscationRun(
        method=method, dataset=dataset, produced=frozenset(produced), failed=frozenset(failed)
    )


def emit_outcomes(run: ObfuscationRun, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(OUTCOME_HEADER)
        for image_id in sorted(run.produced | run.failed):
            writer.writerow([image_id, "produced" if image_id in run.produced else "failed"])


@dataclass(frozen=True)
class SynthSpec:
    """Shape of a synthetic dataset: groups x identities x images.

    Each identity gets a unit-norm cluster center; its images scatter
    around the center with standard deviation cluster_spread, multiplied
    by the per-group factor from noise_scale (default 1.0).  Larger
    factors make a group harder to recognize.
    """

    groups: tuple[DemographicKey, ...]
    identities_per_group: int = 10
    images_per_identity: int = 4
    dim: int = 64
    cluster_spread: float = 0.3
    noise_scale: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.groups:
            raise ValueError("need at least one demographic group")
        if len(set(self.groups)) != len(self.groups):
            raise ValueError("duplicate demographic groups")
        if self.identities_per_group < 1 or self.images_per_identity < 1:
            raise ValueError("identity and image counts must be at least 1")
        if self.dim < 2:
            raise ValueError("embedding dimension must be at least 2")
        if self.cluster_spread < 0:
            raise ValueError("cluster_spread must be nonnegative")
        for label, scale in self.noise_scale.items():
            if scale <= 0:
                raise ValueError(f"noise scale for {label!r} must be positive")


def synth_dataset(spec: SynthSpec, seed: int = 42):
    """Generate a synthetic Dataset plus matching identity embeddings.

    Returns (dataset, EmbeddingTable).  Fully determined by (spec, seed).
    """
    from .score_io import EmbeddingTable

    rng = derive_rng(seed, "synth-dataset")
    records = []
    entries: dict[str, np.ndarray] = {}
    for group in spec.groups:
        slug = group.label.lower().replace(" ", "-")
        scale = float(spec.noise_scale.get(group.label, 1.0))
        for i in range(spec.identities_per_group):
            identity_id = f"{slug}-{i:03d}"
            center = rng.standard_normal(spec.dim)
            center /= np.linalg.norm(center)
            for j in range(spec.images_per_identity):
                image_id = f"{identity_id}-{j:02d}"
                vec = center + spec.cluster_spread * scale * rng.standard_normal(spec.dim)
                records.append(
                    FaceRecord(image_id=image_id, identity_id=identity_id, demographic=group)
                )
                entries[image_id] = vec
    dataset = Dataset(name="synthetic", records=tuple(records))
    return dataset, EmbeddingTable(model_tag="synthetic", dim=spec.dim, entries=entries)
