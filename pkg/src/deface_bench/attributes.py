"""Preserving rates: how much soft-biometric signal obfuscation keeps.

Each rate compares attribute estimates on original images against the
estimates on their obfuscated versions.  Categorical attributes count
exact matches, numerical ones use a max-normalized distance, and head
pose uses clamped cosine similarity of (yaw, pitch, roll) vectors.  All
rates live in [0, 1] so per-demographic tables can enter the bias test
directly.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .datamodel import Dataset
from .fairness import RateTable
from .score_io import AttributeTable


def categorical_pr(pairs: Sequence[tuple[str, str]]) -> float:
    """Fraction of pairs whose category labels match exactly."""
    if not pairs:
        raise ValueError("no attribute pairs")
    return sum(orig == obf for orig, obf in pairs) / len(pairs)


def numerical_pr(pairs: Sequence[tuple[float, float]]) -> float:
    """1 - mean(|obf - orig| / max(orig, obf)) over nonnegative values.

    A pair of two zeros has no gap and contributes distance 0.
    """
    if not pairs:
        raise ValueError("no attribute pairs")
    total = 0.0
    for orig, obf in pairs:
        if orig < 0 or obf < 0:
            raise ValueError(f"numerical attributes must be nonnegative, got {(orig, obf)}")
        hi = max(orig, obf)
        total += abs(obf - orig) / hi if hi > 0 else 0.0
    return 1.0 - total / len(pairs)


def pose_pr(pairs: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    """Mean cosine similarity of pose vectors, clamped into [0, 1]."""
    if not pairs:
        raise ValueError("no pose pairs")
    total = 0.0
    for orig, obf in pairs:
        u = np.asarray(orig, dtype=np.float64)
        v = np.asarray(obf, dtype=np.float64)
        if u.shape != (3,) or v.shape != (3,):
            raise ValueError("pose vectors must have 3 components")
        nu = np.linalg.norm(u)
        nv = np.linalg.norm(v)
        if nu == 0.0 or nv == 0.0:
            raise ValueError("pose similarity is undefined for zero vectors")
        total += max(0.0, float(np.dot(u, v) / (nu * nv)))
    return min(1.0, total / len(pairs))


#: Attribute name -> kind of preserving rate it uses.
ATTRIBUTE_KINDS = {
    "gender": "categorical",
    "race": "categorical",
    "emotion": "categorical",
    "age": "numerical",
    "pose": "pose",
}


def preserving_rate(attr: str, pairs: Sequence[tuple]) -> float:
    """Dispatch to the right PR formula for the attribute."""
    kind = ATTRIBUTE_KINDS[attr]
    if kind == "categorical":
        return categorical_pr(pairs)
    if kind == "numerical":
        return numerical_pr(pairs)
    return pose_pr(pairs)


def attribute_pairs(
    orig: AttributeTable, obf: AttributeTable, dataset: Dataset
) -> dict[str, dict[str, list]]:
    """Collect (original, obfuscated) value pairs per attribute per group.

    A pair forms for an image id wherever both tables carry the
    attribute; images missing from either table are skipped.
    """
    by_attr: dict[str, dict[str, list]] = {a: {} for a in ATTRIBUTE_KINDS}
    for rec in dataset.records:
        a = orig.entries.get(rec.image_id)
        b = obf.entries.get(rec.image_id)
        if a is None or b is None:
            continue
        label = rec.demographic.label
        for attr in ATTRIBUTE_KINDS:
            va = getattr(a, attr)
            vb = getattr(b, attr)
            if va is None or vb is None:
                continue
            by_attr[attr].setdefault(label, []).append((va, vb))
    return by_attr


def attribute_rate_tables(
    orig: AttributeTable,
    obf: AttributeTable,
    dataset: Dataset,
    metric_prefix: str = "",
) -> dict[str, RateTable]:
    """Per-demographic preserving rates for every attribute with data.

    Groups without any pair are left out; attributes whose table would
    keep fewer than two groups are dropped entirely.
    """
    tables: dict[str, RateTable] = {}
    for attr, by_group in attribute_pairs(orig, obf, dataset).items():
        if len(by_group) < 2:
            continue
        rates = {label: preserving_rate(attr, pairs) for label, pairs in by_group.items()}
        counts = {label: len(pairs) for label, pairs in by_group.items()}
        name = f"{metric_prefix}{attr}"
        tables[name] = RateTable(metric_name=name, rates=rates, counts=counts)
    return tables
