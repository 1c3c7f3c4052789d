"""One-to-N identification attack with a one-vs-one linear SVM committee.

The attacker trains one two-class linear SVM per identity pair and
identifies a probe by majority voting.  Training is seeded subgradient
descent on hinge loss with L2 regularization; an epoch-level safeguard
reverts any step that raises the full training loss, so the recorded
loss sequence never increases.  Scenario S1 trains one committee over
all identities, S2 one committee per demographic group.  Threats M3/M5
train on original embeddings and probe with obfuscated ones; M4/M6 (the
poisoning setting) train on obfuscated embeddings and probe with
originals.
"""

from __future__ import annotations

import enum
import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .datamodel import Dataset
from .rng import derive_rng
from .score_io import EmbeddingTable


class Scenario(enum.Enum):
    S1 = "s1"  # one model over all identities
    S2 = "s2"  # one model per demographic group


class Threat(enum.Enum):
    M3 = "m3"  # train originals, probe obfuscated, pooled identities
    M4 = "m4"  # train obfuscated, probe originals, pooled identities
    M5 = "m5"  # train originals, probe obfuscated, per-group models
    M6 = "m6"  # train obfuscated, probe originals, per-group models


#: Threats that train on obfuscated data and probe with originals.
POISONING_THREATS = (Threat.M4, Threat.M6)

SCENARIO_THREATS = {
    Scenario.S1: (Threat.M3, Threat.M4),
    Scenario.S2: (Threat.M5, Threat.M6),
}


@dataclass(frozen=True)
class Hyper:
    lam: float = 1e-4
    epochs: int = 50
    seed: int = 42

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")


def split_train_test(
    ds: Dataset, fraction: float = 0.8, seed: int = 42
) -> tuple[list[str], list[str]]:
    """Split each identity's images into train and test image ids.

    Each identity contributes floor(fraction * m) training images,
    clamped so that both sides keep at least one image.  Identities with
    a single image are rejected.
    """
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    rng = derive_rng(seed, "train-test-split")
    train: list[str] = []
    test: list[str] = []
    identities = ds.identities()
    for identity_id in sorted(identities):
        photos = [rec.image_id for rec in identities[identity_id]]
        m = len(photos)
        if m < 2:
            raise ValueError(f"identity {identity_id!r} has one image, cannot split")
        n_train = min(max(int(fraction * m), 1), m - 1)
        order = rng.permutation(m)
        chosen = set(order[:n_train])
        for k, image_id in enumerate(photos):
            (train if k in chosen else test).append(image_id)
    return sorted(train), sorted(test)


@dataclass(frozen=True)
class PairwiseSvm:
    """Linear two-class machine: decision >= 0 votes class_a."""

    class_a: str
    class_b: str
    w: np.ndarray
    b: float

    def decision(self, x: np.ndarray) -> float:
        return float(self.w @ x + self.b)


@dataclass
class SvmModel:
    classes: tuple[str, ...]
    machines: tuple[PairwiseSvm, ...]
    hyper: Hyper
    dim: int

    def __post_init__(self):
        n = len(self.classes)
        if len(self.machines) != n * (n - 1) // 2:
            raise ValueError("need one pairwise machine per unordered class pair")
        for m in self.machines:
            if m.w.shape != (self.dim,):
                raise ValueError("pairwise weight dimension mismatch")


def _hinge_loss(X: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, lam: float) -> float:
    margins = y * (X @ w + b)
    return float(np.mean(np.maximum(0.0, 1.0 - margins)) + 0.5 * lam * (w @ w))


def _train_pairwise(
    class_a: str,
    class_b: str,
    Xa: np.ndarray,
    Xb: np.ndarray,
    hyper: Hyper,
) -> PairwiseSvm:
    X = np.vstack([Xa, Xb])
    y = np.concatenate([np.ones(len(Xa)), -np.ones(len(Xb))])
    rng = derive_rng(hyper.seed, "svm", class_a, class_b)
    dim = X.shape[1]
    w = np.zeros(dim)
    b = 0.0
    eta = 0.5
    prev = _hinge_loss(X, y, w, b, hyper.lam)
    for _ in range(hyper.epochs):
        w_try = w.copy()
        b_try = b
        for i in rng.permutation(len(y)):
            xi, yi = X[i], y[i]
            if yi * (w_try @ xi + b_try) < 1.0:
                w_try -= eta * (hyper.lam * w_try - yi * xi)
                b_try += eta * yi
            else:
                w_try -= eta * hyper.lam * w_try
        cur = _hinge_loss(X, y, w_try, b_try, hyper.lam)
        if cur <= prev:
            w, b, prev = w_try, b_try, cur
        else:
            # reject the epoch and retry more cautiously
            eta *= 0.5
    return PairwiseSvm(class_a=class_a, class_b=class_b, w=w, b=b)


def train_multisvm(
    X: np.ndarray,
    y: Sequence[str],
    hyper: Hyper = Hyper(),
    workers: int = 1,
) -> SvmModel:
    """Train one linear machine per unordered pair of identity labels.

    Each machine gets its own random stream derived from the seed and
    the pair's labels, so results do not depend on training order or on
    the worker count.
    """
    X = np.asarray(X, dtype=np.float64)
    labels = list(y)
    if X.ndim != 2 or len(labels) != X.shape[0]:
        raise ValueError("X must be (n_samples, dim) aligned with y")
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise ValueError("need at least two identity classes")
    rows: dict[str, np.ndarray] = {}
    for c in classes:
        block = X[[i for i, lbl in enumerate(labels) if lbl == c]]
        # canonical lexicographic row order, so the caller's sample order
        # cannot leak into the optimization trajectory
        rows[c] = block[np.lexsort(block.T[::-1])]
    pairs = list(itertools.combinations(classes, 2))

    def build(pair: tuple[str, str]) -> PairwiseSvm:
        a, b = pair
        return _train_pairwise(a, b, rows[a], rows[b], hyper)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            machines = tuple(pool.map(build, pairs))
    else:
        machines = tuple(build(p) for p in pairs)
    return SvmModel(classes=classes, machines=machines, hyper=hyper, dim=X.shape[1])


def _tally(model: SvmModel, x: np.ndarray) -> tuple[dict[str, int], dict[str, float]]:
    votes = {c: 0 for c in model.classes}
    weight = {c: 0.0 for c in model.classes}
    for machine in model.machines:
        f = machine.decision(x)
        winner = machine.class_a if f >= 0 else machine.class_b
        votes[winner] += 1
        weight[winner] += abs(f)
    return votes, weight


def predict(model: SvmModel, x: np.ndarray) -> str:
    """Majority vote over all pairwise machines.

    Vote ties go to the identity whose received votes carry the larger
    summed absolute decision value, then to the ascending identity id.
    The result does not depend on the enumeration order of classes or
    machines.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"probe has shape {x.shape}, model expects ({model.dim},)")
    votes, weight = _tally(model, x)
    return min(model.classes, key=lambda c: (-votes[c], -weight[c], c))


@dataclass(frozen=True)
class GroupIdentification:
    ir: float
    osr: float
    n: int


@dataclass
class IdentificationReport:
    scenario: Scenario
    threat: Threat
    per_demographic: dict[str, GroupIdentification]

    def overall_ir(self) -> float:
        total = sum(g.n for g in self.per_demographic.values())
        correct = sum(round(g.ir * g.n) for g in self.per_demographic.values())
        return correct / total if total else 0.0


def identification_run(
    ds: Dataset,
    emb_orig: EmbeddingTable,
    emb_obf: EmbeddingTable,
    scenario: Scenario,
    threat: Threat,
    hyper: Hyper = Hyper(),
    seed: int = 42,
    workers: int = 1,
) -> IdentificationReport:
    """Run one identification attack and report per-group rates.

    The per-identity 80/20 split is seeded; the committee(s) are trained
    on the train side and every test image becomes a probe.  Under S2
    each probe is scored only against the identities of its own
    demographic group.
    """
    if threat not in SCENARIO_THREATS[scenario]:
        allowed = "/".join(t.value for t in SCENARIO_THREATS[scenario])
        raise ValueError(
            f"threat {threat.value} does not run under {scenario.value} (expected {allowed})"
        )
    train_ids, test_ids = split_train_test(ds, fraction=0.8, seed=seed)
    train_table = emb_obf if threat in POISONING_THREATS else emb_orig
    probe_table = emb_orig if threat in POISONING_THREATS else emb_obf

    def fit(ids: list[str]) -> SvmModel:
        X = np.vstack([train_table.vector(i) for i in ids])
        y = [ds.record(i).identity_id for i in ids]
        return train_multisvm(X, y, hyper=hyper, workers=workers)

    if scenario is Scenario.S1:
        models = {None: fit(train_ids)}
        routing = {i: None for i in test_ids}
    else:
        by_group: dict[str, list[str]] = {}
        for image_id in train_ids:
            by_group.setdefault(ds.record(image_id).demographic.label, []).append(image_id)
        models = {label: fit(ids) for label, ids in sorted(by_group.items())}
        routing = {i: ds.record(i).demographic.label for i in test_ids}

    outcomes: dict[str, list[bool]] = {}
    for image_id in test_ids:
        rec = ds.record(image_id)
        model = models[routing[image_id]]
        guess = predict(model, probe_table.vector(image_id))
        outcomes.setdefault(rec.demographic.label, []).append(guess == rec.identity_id)

    per_demographic = {}
    for label in sorted(outcomes):
        hits = outcomes[label]
        ir = sum(hits) / len(hits)
        per_demographic[label] = GroupIdentification(ir=ir, osr=1.0 - ir, n=len(hits))
    return IdentificationReport(
        scenario=scenario, threat=threat, per_demographic=per_demographic
    )
