"""One-to-one verification attack over ingested embeddings.

Pairs of images are scored by cosine distance, a decision threshold is
fitted by exhaustive F1 search, and a ROC sweep yields AUC plus the TPR
at a capped false-positive rate.  The obfuscation success rate (OSR) is
one minus the true-positive rate: the fraction of genuine pairs the
attacker fails to match.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .datamodel import Dataset
from .score_io import EmbeddingTable

_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # numpy < 2 fallback


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(u, v), in [0, 2].  Zero vectors are rejected."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("cosine distance is undefined for zero vectors")
    return float(1.0 - np.dot(u, v) / (nu * nv))


class PairMode(enum.Enum):
    """How genuine pairs are formed.

    BASELINE compares originals to originals.  M1 models an attacker
    holding the exact source photo of each obfuscated image.  M2 models
    an attacker holding only other photos of the same identity.
    """

    BASELINE = "baseline"
    M1 = "m1"
    M2 = "m2"


@dataclass(frozen=True)
class Pair:
    probe_id: str
    gallery_id: str
    positive: bool


@dataclass
class PairSet:
    mode: PairMode
    pairs: tuple[Pair, ...]

    def __post_init__(self):
        self.pairs = tuple(self.pairs)


def build_pairs(
    dataset: Dataset,
    obf_map: Mapping[str, str] | None,
    mode: PairMode,
    negatives_per_positive: int = 1,
    seed: int = 42,
) -> PairSet:
    """Enumerate genuine pairs and sample impostor pairs.

    Genuine pairs follow the mode; the gallery side is always an
    original image.  For each genuine pair, up to
    ``negatives_per_positive`` impostors are drawn (seeded, without
    replacement) from originals of other identities in the same
    demographic group.  Output is independent of record order in the
    dataset.
    """
    if negatives_per_positive < 0:
        raise ValueError("negatives_per_positive must be nonnegative")
    if mode is not PairMode.BASELINE:
        if not obf_map:
            raise ValueError(f"mode {mode.value} needs an original -> obfuscated id map")
        if len(set(obf_map.values())) != len(obf_map):
            raise ValueError("obfuscated image ids must be unique")
        unknown = [i for i in obf_map if i not in set(dataset.image_ids())]
        if unknown:
            raise ValueError(f"obfuscation map covers unknown images: {unknown[:3]}")

    identities = dataset.identities()
    positives: list[tuple[str, str, str]] = []  # probe, gallery, identity
    if mode is PairMode.BASELINE:
        for identity_id in sorted(identities):
            photos = [rec.image_id for rec in identities[identity_id]]
            for i in range(len(photos)):
                for j in range(i + 1, len(photos)):
                    positives.append((photos[i], photos[j], identity_id))
    elif mode is PairMode.M1:
        for orig_id in sorted(obf_map):
            positives.append((obf_map[orig_id], orig_id, dataset.record(orig_id).identity_id))
    else:
        for orig_id in sorted(obf_map):
            identity_id = dataset.record(orig_id).identity_id
            for rec in identities[identity_id]:
                if rec.image_id != orig_id:
                    positives.append((obf_map[orig_id], rec.image_id, identity_id))
    if not positives:
        raise ValueError(f"no genuine pairs can be formed in mode {mode.value}")

    group_pool: dict = {}
    for rec in sorted(dataset.records, key=lambda r: r.image_id):
        group_pool.setdefault(rec.demographic, []).append(rec)

    rng = np.random.default_rng(seed)
    pairs: list[Pair] = []
    seen: set[tuple[str, str]] = set()
    for probe_id, gallery_id, identity_id in positives:
        pairs.append(Pair(probe_id, gallery_id, True))
        seen.add((probe_id, gallery_id))
        group = dataset.demographic_of(identity_id)
        pool = [
            rec.image_id
            for rec in group_pool[group]
            if rec.identity_id != identity_id and (probe_id, rec.image_id) not in seen
        ]
        take = min(negatives_per_positive, len(pool))
        if take:
            for idx in rng.choice(len(pool), size=take, replace=False):
                impostor = pool[int(idx)]
                pairs.append(Pair(probe_id, impostor, False))
                seen.add((probe_id, impostor))
    return PairSet(mode=mode, pairs=tuple(pairs))


def score_pairs(
    pair_set: PairSet, probe_table: EmbeddingTable, gallery_table: EmbeddingTable
) -> list[tuple[float, bool]]:
    """Cosine distance plus label for every pair, in pair order."""
    return [
        (
            cosine_distance(probe_table.vector(p.probe_id), gallery_table.vector(p.gallery_id)),
            p.positive,
        )
        for p in pair_set.pairs
    ]


def _split_scored(scored) -> tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(scored, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] == 0:
        raise ValueError("scored pairs must be a nonempty list of (distance, label) rows")
    if not np.all(np.isfinite(arr[:, 0])):
        raise ValueError("distances must be finite")
    return arr[:, 0], arr[:, 1] != 0.0


@dataclass(frozen=True)
class ThresholdFit:
    threshold: float
    f1: float


def _f1(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def threshold_candidates(distances: np.ndarray) -> np.ndarray:
    """Midpoints between consecutive unique distances, plus sentinels
    strictly below the minimum and above the maximum."""
    uniq = np.unique(np.asarray(distances, dtype=np.float64))
    return np.concatenate([[uniq[0] - 1.0], (uniq[:-1] + uniq[1:]) / 2.0, [uniq[-1] + 1.0]])


def optimize_threshold(scored) -> ThresholdFit:
    """Pick the candidate threshold maximizing F1; ties take the smaller.

    ``scored`` is a sequence of (distance, label) rows.  A pair matches
    when its distance is <= the threshold.  F1 is taken as 0 when there
    are neither predicted nor actual positives.
    """
    distances, labels = _split_scored(scored)
    order = np.argsort(distances, kind="stable")
    d = distances[order]
    y = labels[order]
    cum_pos = np.concatenate([[0], np.cumsum(y)])
    total_pos = int(cum_pos[-1])
    best: ThresholdFit | None = None
    for t in threshold_candidates(d):
        m = int(np.searchsorted(d, t, side="right"))
        tp = int(cum_pos[m])
        score = _f1(tp, m - tp, total_pos - tp)
        if best is None or score > best.f1:
            best = ThresholdFit(threshold=float(t), f1=score)
    assert best is not None
    return best


@dataclass(frozen=True)
class RocSummary:
    """Operating point plus sweep metrics for one verification run."""

    threshold: float
    f1: float
    tpr: float
    fpr: float
    osr: float
    auc: float
    tpr_at_fpr: float
    fpr_target: float
    n_positive: int
    n_negative: int


def roc_metrics(scored, threshold: float, fpr_target: float = 0.1) -> RocSummary:
    """Evaluate an operating point and sweep the full ROC curve.

    AUC integrates the (FPR, TPR) curve with the trapezoid rule, with
    endpoints pinned at (0, 0) and (1, 1).  tpr_at_fpr reports the TPR
    of the largest threshold whose FPR stays at or under fpr_target (no
    interpolation).  osr is exactly 1 - tpr.
    """
    distances, labels = _split_scored(scored)
    if not 0.0 <= fpr_target <= 1.0:
        raise ValueError(f"fpr_target must be in [0, 1], got {fpr_target}")
    total_pos = int(labels.sum())
    total_neg = int(labels.size - total_pos)
    if total_pos == 0 or total_neg == 0:
        raise ValueError("need at least one genuine and one impostor pair")

    matched = distances <= threshold
    tp = int((matched & labels).sum())
    fp = int((matched & ~labels).sum())
    tpr = tp / total_pos
    fpr = fp / total_neg
    f1 = _f1(tp, fp, total_pos - tp)

    order = np.argsort(distances, kind="stable")
    d = distances[order]
    y = labels[order]
    cum_pos = np.cumsum(y)
    uniq, last_index = np.unique(d, return_index=True)
    # counts of pairs and positives matched at each unique cutoff
    ends = np.concatenate([last_index[1:], [d.size]])
    tps = cum_pos[ends - 1]
    fps = ends - tps
    tpr_pts = np.concatenate([[0.0], tps / total_pos])
    fpr_pts = np.concatenate([[0.0], fps / total_neg])
    auc = float(_trapezoid(tpr_pts, fpr_pts))
    within = np.nonzero(fpr_pts <= fpr_target)[0]
    tpr_at_fpr = float(tpr_pts[within[-1]])

    return RocSummary(
        threshold=float(threshold),
        f1=f1,
        tpr=tpr,
        fpr=fpr,
        osr=1.0 - tpr,
        auc=auc,
        tpr_at_fpr=tpr_at_fpr,
        fpr_target=fpr_target,
        n_positive=total_pos,
        n_negative=total_neg,
    )


@dataclass(frozen=True)
class ConfidenceResult:
    rate: float
    osr: float
    n: int


def confidence_verify(
    rows: Sequence[tuple[str, str, float]], threshold: float = 70.0
) -> ConfidenceResult:
    """Verification by vendor confidence: a pair matches at >= threshold."""
    if not 0 <= threshold <= 100:
        raise ValueError(f"confidence threshold must be in [0, 100], got {threshold}")
    if not rows:
        raise ValueError("no confidence rows")
    confs = np.array([row[2] for row in rows], dtype=np.float64)
    if not np.all(np.isfinite(confs)) or confs.min() < 0 or confs.max() > 100:
        raise ValueError("confidences must lie in [0, 100]")
    rate = float(np.mean(confs >= threshold))
    return ConfidenceResult(rate=rate, osr=1.0 - rate, n=len(rows))


@dataclass(frozen=True)
class GroupVerification:
    tpr: float
    osr: float
    n_genuine: int


@dataclass
class VerificationReport:
    mode: PairMode
    summary: RocSummary
    per_demographic: dict[str, GroupVerification]


def verification_report(
    dataset: Dataset,
    probe_table: EmbeddingTable,
    gallery_table: EmbeddingTable,
    mode: PairMode,
    obf_map: Mapping[str, str] | None = None,
    negatives_per_positive: int = 1,
    fpr_target: float = 0.1,
    seed: int = 42,
) -> VerificationReport:
    """Run one verification attack end to end.

    One threshold is fitted on the pooled pairs; per-group TPR and OSR
    are then read off the genuine pairs of each demographic group (the
    group of a pair is the group of its gallery image's identity).
    """
    pair_set = build_pairs(
        dataset,
        obf_map,
        mode,
        negatives_per_positive=negatives_per_positive,
        seed=seed,
    )
    scored = score_pairs(pair_set, probe_table, gallery_table)
    fit = optimize_threshold(scored)
    summary = roc_metrics(scored, fit.threshold, fpr_target=fpr_target)

    per_group: dict[str, list[bool]] = {}
    for pair, (dist, _) in zip(pair_set.pairs, scored):
        if not pair.positive:
            continue
        label = dataset.record(pair.gallery_id).demographic.label
        per_group.setdefault(label, []).append(bool(dist <= fit.threshold))
    per_demographic = {}
    for label in sorted(per_group):
        hits = per_group[label]
        tpr = sum(hits) / len(hits)
        per_demographic[label] = GroupVerification(tpr=tpr, osr=1.0 - tpr, n_genuine=len(hits))
    return VerificationReport(mode=mode, summary=summary, per_demographic=per_demographic)
