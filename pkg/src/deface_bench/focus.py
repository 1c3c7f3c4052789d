"""Saliency-to-region analysis.

Heatmaps are sampled at landmark coordinates by bilinear interpolation
and folded into one score per named face region.  From these region
vectors the module derives top-focus features per image, per-group
focus distributions, and Pearson correlations between the focus of an
obfuscation model and the focus of a recognition model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .datamodel import DemographicKey, Dataset
from .score_io import Heatmap, LandmarkSet, REGION_VOCABULARY


@dataclass
class FocusVector:
    """Mean sampled saliency per face region for one image."""

    image_id: str
    region_scores: dict[str, float]

    def __post_init__(self):
        if set(self.region_scores) != set(REGION_VOCABULARY):
            raise ValueError("region scores must cover the fixed region vocabulary")
        for region, score in self.region_scores.items():
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"score for {region} out of [0, 1]: {score}")

    def as_array(self) -> np.ndarray:
        return np.array([self.region_scores[r] for r in REGION_VOCABULARY])


def bilinear_sample(hm: Heatmap, xy: np.ndarray) -> np.ndarray:
    """Sample the heatmap at normalized (x, y) points.

    Coordinates map onto the cell-center grid: x spans columns 0..W-1,
    y spans rows 0..H-1.
    """
    grid = hm.values
    h, w = grid.shape
    gx = xy[:, 0] * (w - 1)
    gy = xy[:, 1] * (h - 1)
    x0 = np.clip(np.floor(gx).astype(int), 0, w - 1)
    y0 = np.clip(np.floor(gy).astype(int), 0, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = gx - x0
    fy = gy - y0
    top = (1.0 - fx) * grid[y0, x0] + fx * grid[y0, x1]
    bottom = (1.0 - fx) * grid[y1, x0] + fx * grid[y1, x1]
    return (1.0 - fy) * top + fy * bottom


def sample_focus(hm: Heatmap, lm: LandmarkSet) -> FocusVector:
    """Average sampled saliency over each region's landmarks.

    A region with no landmarks in the set's mapping scores 0.
    """
    samples = bilinear_sample(hm, lm.points)
    sums = {region: 0.0 for region in REGION_VOCABULARY}
    counts = {region: 0 for region in REGION_VOCABULARY}
    for idx, value in enumerate(samples):
        region = lm.region_map[idx]
        sums[region] += float(value)
        counts[region] += 1
    scores = {
        region: (sums[region] / counts[region] if counts[region] else 0.0)
        for region in REGION_VOCABULARY
    }
    return FocusVector(image_id=lm.image_id, region_scores=scores)


@dataclass
class FocusRecord:
    """Top-focus summary of one image: best region plus normalized top 5."""

    image_id: str
    demographic: DemographicKey
    top_feature: str
    top5: tuple[tuple[str, float], ...]


def focus_record(fv: FocusVector, demographic: DemographicKey) -> FocusRecord:
    """Rank regions by score (ties alphabetical) and normalize by the max.

    An all-zero vector keeps all scores at 0.
    """
    ranked = sorted(fv.region_scores.items(), key=lambda kv: (-kv[1], kv[0]))
    peak = ranked[0][1]
    top5 = tuple(
        (region, score / peak if peak > 0 else 0.0) for region, score in ranked[:5]
    )
    return FocusRecord(
        image_id=fv.image_id,
        demographic=demographic,
        top_feature=ranked[0][0],
        top5=top5,
    )


def focus_distribution(
    records: Sequence[FocusRecord], group_by: str
) -> dict[tuple[str, str], int]:
    """Count images per (group, top region); group_by is race or gender."""
    if group_by not in ("race", "gender"):
        raise ValueError(f"group_by must be 'race' or 'gender', got {group_by!r}")
    if not records:
        raise ValueError("no focus records")
    counts: dict[tuple[str, str], int] = {}
    for rec in records:
        group = getattr(rec.demographic, group_by).value
        key = (group, rec.top_feature)
        counts[key] = counts.get(key, 0) + 1
    return counts


def pearson(u: Sequence[float], v: Sequence[float]) -> float:
    """Sample Pearson correlation; rejects zero-variance inputs."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape or u.ndim != 1 or u.size < 2:
        raise ValueError("inputs must be equal-length vectors of size >= 2")
    du = u - u.mean()
    dv = v - v.mean()
    su = float(du @ du)
    sv = float(dv @ dv)
    if su == 0.0 or sv == 0.0:
        raise ValueError("pearson is undefined for zero-variance input")
    r = float(du @ dv) / math.sqrt(su * sv)
    return max(-1.0, min(1.0, r))


def focus_correlation(
    obf: Mapping[str, FocusVector],
    rec: Mapping[str, FocusVector],
    dataset: Dataset,
) -> dict[str, float]:
    """Mean per-image correlation between two focus maps, per group.

    For every image the two region-score vectors (fixed region order)
    are correlated; the coefficients are then averaged within each
    demographic group.  Images whose vectors have zero variance on
    either side are skipped.
    """
    if set(obf) != set(rec):
        raise ValueError("obfuscation and recognition focus cover different images")
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for image_id in sorted(obf):
        label = dataset.record(image_id).demographic.label
        try:
            r = pearson(obf[image_id].as_array(), rec[image_id].as_array())
        except ValueError:
            continue
        sums[label] = sums.get(label, 0.0) + r
        counts[label] = counts.get(label, 0) + 1
    return {label: sums[label] / counts[label] for label in sorted(sums)}
