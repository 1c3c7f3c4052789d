"""Synthetic benchmark inputs: a full on-disk kit for end-to-end runs.

The kit mimics everything the engine normally ingests from real model
pipelines: a manifest, original and per-method obfuscated embeddings,
obfuscation outcomes, detector verdicts, attribute estimates, landmark
grids, saliency heatmaps, and a ready-to-run experiment config.  Every
byte is determined by (spec, seed).

Landmarks are laid out synthetically: each of the 12 face regions owns
one cell of a 4x3 grid over the unit square, and a region's landmarks
scatter inside that cell.  Planted-focus heatmaps light up exactly one
region's cell, which makes focus recovery exactly checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .datamodel import (
    Dataset,
    DemographicKey,
    ObfuscationRun,
    Race,
    SynthSpec,
    emit_manifest,
    emit_outcomes,
    synth_dataset,
)
from .rng import derive_rng
from .score_io import (
    ATTRIBUTE_RACES,
    EMOTIONS,
    NUM_LANDMARKS,
    REGION_VOCABULARY,
    AttributeRecord,
    AttributeTable,
    EmbeddingTable,
    Heatmap,
    LandmarkSet,
    emit_attributes,
    emit_detections,
    emit_embeddings,
    emit_heatmap,
    emit_landmarks,
    DetectionTable,
    load_region_map,
)

#: Region -> (x_lo, x_hi, y_lo, y_hi) cell on the unit square, with a
#: 10% in-cell margin so neighboring cells never bleed into each other
#: under bilinear sampling at heatmap sizes >= 24.
REGION_ZONES: dict[str, tuple[float, float, float, float]] = {}
for _i, _region in enumerate(REGION_VOCABULARY):
    _row, _col = divmod(_i, 4)
    _mx, _my = 0.1 / 4, 0.1 / 3
    REGION_ZONES[_region] = (
        _col / 4 + _mx,
        (_col + 1) / 4 - _mx,
        _row / 3 + _my,
        (_row + 1) / 3 - _my,
    )

MIN_HEATMAP_SIZE = 24


@dataclass(frozen=True)
class MethodSpec:
    """How one synthetic obfuscation method behaves.

    kind: 'copy' reuses the original embedding, 'noise' perturbs it by
    noise_sigma, 'random' replaces it entirely.  Rates given as a
    mapping apply per demographic label; a bare float applies to all.
    """

    name: str
    kind: str = "noise"
    noise_sigma: float = 0.5
    fail_rate: float | Mapping[str, float] = 0.0
    detect_rate: float | Mapping[str, float] = 1.0
    attr_flip: float | Mapping[str, float] = 0.1
    age_jitter: float = 5.0
    pose_jitter: float = 10.0
    focus_region: Mapping[str, str] = field(default_factory=dict)
    rec_heatmaps: str = "same"  # same | random

    def __post_init__(self):
        if self.kind not in ("copy", "noise", "random"):
            raise ValueError(f"unknown method kind {self.kind!r}")
        if self.rec_heatmaps not in ("same", "random"):
            raise ValueError(f"rec_heatmaps must be same|random, got {self.rec_heatmaps!r}")
        for region in dict(self.focus_region).values():
            if region not in REGION_VOCABULARY:
                raise ValueError(f"unknown focus region {region!r}")


@dataclass(frozen=True)
class KitSpec:
    dataset: SynthSpec
    methods: tuple[MethodSpec, ...]
    heatmap_size: int = 32

    def __post_init__(self):
        if not self.methods:
            raise ValueError("need at least one method")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ValueError("duplicate method names")
        if self.heatmap_size < MIN_HEATMAP_SIZE:
            raise ValueError(f"heatmap_size must be >= {MIN_HEATMAP_SIZE}")


def _rate_for(value: float | Mapping[str, float], label: str, default: float) -> float:
    if isinstance(value, Mapping):
        return float(value.get(label, default))
    return float(value)


def _planted_region(method: MethodSpec, group: DemographicKey, index: int) -> str:
    byconf = dict(method.focus_region).get(group.label)
    if byconf:
        return byconf
    return REGION_VOCABULARY[index % len(REGION_VOCABULARY)]


def _zone_heatmap(size: int, region: str, rng: np.random.Generator) -> Heatmap:
    """High plateau over the region's cell (one sample-pitch of slack
    on every side), low elsewhere."""
    x_lo, x_hi, y_lo, y_hi = REGION_ZONES[region]
    pitch = 1.0 / (size - 1)
    coords = np.arange(size) * pitch
    in_x = (coords >= x_lo - pitch) & (coords <= x_hi + pitch)
    in_y = (coords >= y_lo - pitch) & (coords <= y_hi + pitch)
    mask = np.outer(in_y, in_x)
    high = 0.85 + 0.1 * float(rng.random())
    low = 0.03 + 0.02 * float(rng.random())
    return Heatmap(values=np.where(mask, high, low))


def _random_heatmap(size: int, rng: np.random.Generator) -> Heatmap:
    return Heatmap(values=rng.random((size, size)))


def _synth_landmarks(image_id: str, region_map: Mapping[int, str], rng) -> LandmarkSet:
    points = np.zeros((NUM_LANDMARKS, 2))
    for idx in range(NUM_LANDMARKS):
        x_lo, x_hi, y_lo, y_hi = REGION_ZONES[region_map[idx]]
        points[idx, 0] = x_lo + (x_hi - x_lo) * rng.random()
        points[idx, 1] = y_lo + (y_hi - y_lo) * rng.random()
    return LandmarkSet(image_id=image_id, points=points, region_map=region_map)


_RACE_TO_ATTRIBUTE = {
    Race.ASIAN: "Asian",
    Race.BLACK: "Black",
    Race.INDIAN: "Indian",
    Race.WHITE: "White",
    Race.UNSPECIFIED: None,
}


def _orig_attribute(rec, rng) -> AttributeRecord:
    return AttributeRecord(
        gender=rec.demographic.gender.value,
        race=_RACE_TO_ATTRIBUTE[rec.demographic.race],
        emotion=EMOTIONS[int(rng.integers(len(EMOTIONS)))],
        age=float(rng.integers(18, 81)),
        pose=np.round(rng.normal(0.0, 15.0, size=3).clip(-45, 45), 3),
    )


def _flip_category(value: str, choices: tuple[str, ...], rng) -> str:
    others = [c for c in choices if c != value]
    return others[int(rng.integers(len(others)))]


def _obf_attribute(orig: AttributeRecord, flip_p: float, method: MethodSpec, rng
                   ) -> AttributeRecord:
    gender = orig.gender
    if rng.random() < flip_p:
        gender = "Male" if gender == "Female" else "Female"
    race = orig.race
    if race is not None and rng.random() < flip_p:
        race = _flip_category(race, ATTRIBUTE_RACES, rng)
    emotion = orig.emotion
    if rng.random() < flip_p:
        emotion = _flip_category(emotion, EMOTIONS, rng)
    age = float(np.clip(orig.age + rng.normal(0.0, method.age_jitter), 0.0, 100.0))
    pose = np.round(
        (orig.pose + rng.normal(0.0, method.pose_jitter, size=3)).clip(-89, 89), 3
    )
    return AttributeRecord(
        gender=gender, race=race, emotion=emotion, age=round(age, 2), pose=pose
    )


@dataclass
class KitPaths:
    root: Path
    config: Path
    manifest: Path
    dataset: Dataset


def write_kit(spec: KitSpec, out_dir: str | Path, seed: int = 42) -> KitPaths:
    """Materialize the kit under out_dir and return the key paths."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    (root / "embeddings").mkdir(exist_ok=True)
    (root / "detections").mkdir(exist_ok=True)
    (root / "attributes").mkdir(exist_ok=True)

    dataset, emb_orig = synth_dataset(spec.dataset, seed=seed)
    emit_manifest(dataset, root / "manifest.csv")
    emit_embeddings(emb_orig, root / "embeddings" / "original.csv")

    region_map = load_region_map()
    lm_rng = derive_rng(seed, "kit", "landmarks")
    landmark_sets = {
        rec.image_id: _synth_landmarks(rec.image_id, region_map, lm_rng)
        for rec in dataset.records
    }
    emit_landmarks(landmark_sets, root / "landmarks.csv")

    det_orig = DetectionTable(
        detector_tag="synthetic", entries={r.image_id: True for r in dataset.records}
    )
    emit_detections(det_orig, root / "detections" / "original.csv")

    attr_rng = derive_rng(seed, "kit", "attributes")
    attrs_orig = {
        rec.image_id: _orig_attribute(rec, attr_rng) for rec in dataset.records
    }
    emit_attributes(
        AttributeTable(estimator_tag="synthetic", entries=attrs_orig),
        root / "attributes" / "original.csv",
    )

    groups = dataset.groups()
    for m_index, method in enumerate(spec.methods):
        mdir = root / "methods" / method.name
        (mdir / "heatmaps" / "obf").mkdir(parents=True, exist_ok=True)
        (mdir / "heatmaps" / "rec").mkdir(parents=True, exist_ok=True)
        emb_rng = derive_rng(seed, "kit", method.name, "embeddings")
        out_rng = derive_rng(seed, "kit", method.name, "outcomes")
        det_rng = derive_rng(seed, "kit", method.name, "detections")
        at_rng = derive_rng(seed, "kit", method.name, "attributes")
        hm_rng = derive_rng(seed, "kit", method.name, "heatmaps")

        produced: set[str] = set()
        failed: set[str] = set()
        entries: dict[str, np.ndarray] = {}
        detections: dict[str, bool] = {}
        attrs_obf: dict[str, AttributeRecord] = {}
        planted = {
            g.label: _planted_region(method, g, i) for i, g in enumerate(groups)
        }
        for rec in dataset.records:
            label = rec.demographic.label
            if out_rng.random() < _rate_for(method.fail_rate, label, 0.0):
                failed.add(rec.image_id)
                continue
            produced.add(rec.image_id)
            base = emb_orig.vector(rec.image_id)
            if method.kind == "copy":
                vec = base.copy()
            elif method.kind == "noise":
                vec = base + method.noise_sigma * emb_rng.standard_normal(base.size)
            else:
                vec = emb_rng.standard_normal(base.size)
            entries[rec.image_id] = vec
            detections[rec.image_id] = bool(
                det_rng.random() < _rate_for(method.detect_rate, label, 1.0)
            )
            attrs_obf[rec.image_id] = _obf_attribute(
                attrs_orig[rec.image_id],
                _rate_for(method.attr_flip, label, 0.0),
                method,
                at_rng,
            )
            obf_hm = _zone_heatmap(spec.heatmap_size, planted[label], hm_rng)
            emit_heatmap(obf_hm, mdir / "heatmaps" / "obf" / f"{rec.image_id}.hmap")
            if method.rec_heatmaps == "same":
                rec_hm = obf_hm
            else:
                rec_hm = _random_heatmap(spec.heatmap_size, hm_rng)
            emit_heatmap(rec_hm, mdir / "heatmaps" / "rec" / f"{rec.image_id}.hmap")

        run = ObfuscationRun(
            method=method.name,
            dataset=dataset,
            produced=frozenset(produced),
            failed=frozenset(failed),
        )
        emit_outcomes(run, mdir / "outcomes.csv")
        emit_embeddings(
            EmbeddingTable(model_tag=method.name, dim=emb_orig.dim, entries=entries),
            mdir / "embeddings.csv",
        )
        emit_detections(
            DetectionTable(detector_tag=method.name, entries=detections),
            mdir / "detections.csv",
        )
        emit_attributes(
            AttributeTable(estimator_tag=method.name, entries=attrs_obf),
            mdir / "attributes.csv",
        )

    config = root / "exp.toml"
    config.write_text(_config_text(spec, seed), encoding="utf-8")
    return KitPaths(root=root, config=config, manifest=root / "manifest.csv", dataset=dataset)


def _config_text(spec: KitSpec, seed: int) -> str:
    lines = [
        "version = 1",
        "",
        "[experiment]",
        'name = "synthetic"',
        f"seed = {seed}",
        'out_dir = "report"',
        "eps_grid = [0.2, 0.15, 0.1, 0.05, 0.02]",
        "fpr_target = 0.1",
        "negatives_per_positive = 1",
        "workers = 1",
        "",
        "[[datasets]]",
        'name = "synthetic"',
        'manifest = "manifest.csv"',
        'embeddings = "embeddings/original.csv"',
        'detections = "detections/original.csv"',
        'attributes = "attributes/original.csv"',
        'landmarks = "landmarks.csv"',
    ]
    for method in spec.methods:
        base = f"methods/{method.name}"
        lines += [
            "",
            f"[datasets.methods.{method.name}]",
            f'embeddings = "{base}/embeddings.csv"',
            f'outcomes = "{base}/outcomes.csv"',
            f'detections = "{base}/detections.csv"',
            f'attributes = "{base}/attributes.csv"',
            f'heatmaps_obf = "{base}/heatmaps/obf"',
            f'heatmaps_rec = "{base}/heatmaps/rec"',
        ]
    return "\n".join(lines) + "\n"
