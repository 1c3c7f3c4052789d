"""Synthetic kit generation: geometry, determinism, file inventory."""

import filecmp
from pathlib import Path

import numpy as np
import pytest

from deface_bench.config import load_config
from deface_bench.datamodel import SynthSpec, load_manifest
from deface_bench.focus import sample_focus
from deface_bench.score_io import (
    REGION_VOCABULARY,
    load_attributes,
    load_detections,
    load_embeddings,
    load_heatmap,
    load_landmarks,
)
from deface_bench.datamodel import load_outcomes
from deface_bench.synthkit import (
    MIN_HEATMAP_SIZE,
    REGION_ZONES,
    KitSpec,
    MethodSpec,
    write_kit,
)

from conftest import ASIAN_F, ASIAN_M


def small_spec(**method_kwargs):
    return KitSpec(
        dataset=SynthSpec(
            groups=(ASIAN_F, ASIAN_M), identities_per_group=3, images_per_identity=2, dim=8
        ),
        methods=(MethodSpec(name="m", **method_kwargs),),
        heatmap_size=24,
    )


def test_zones_partition_without_overlap():
    assert set(REGION_ZONES) == set(REGION_VOCABULARY)
    zones = list(REGION_ZONES.values())
    for x_lo, x_hi, y_lo, y_hi in zones:
        assert 0.0 < x_lo < x_hi < 1.0 or (0.0 <= x_lo < x_hi <= 1.0)
        assert y_lo < y_hi
    # margins keep every pair of cells disjoint
    for i, a in enumerate(zones):
        for b in zones[i + 1 :]:
            separate_x = a[1] < b[0] or b[1] < a[0]
            separate_y = a[3] < b[2] or b[3] < a[2]
            assert separate_x or separate_y


def test_kit_inventory_and_loadability(tmp_path):
    paths = write_kit(small_spec(), tmp_path / "kit", seed=1)
    ds = load_manifest(paths.manifest)
    assert len(ds.image_ids()) == 12
    root = paths.root
    emb = load_embeddings(root / "embeddings" / "original.csv")
    assert set(emb.entries) == set(ds.image_ids())
    load_detections(root / "detections" / "original.csv")
    load_attributes(root / "attributes" / "original.csv")
    lms = load_landmarks(root / "landmarks.csv")
    assert set(lms) == set(ds.image_ids())
    load_outcomes(root / "methods" / "m" / "outcomes.csv", ds, "m")
    load_embeddings(root / "methods" / "m" / "embeddings.csv")
    cfg = load_config(paths.config)
    assert cfg.seed == 1
    assert len(cfg.datasets) == 1
    assert cfg.datasets[0].methods[0].name == "m"


def test_kit_is_deterministic(tmp_path):
    a = write_kit(small_spec(), tmp_path / "a", seed=3)
    b = write_kit(small_spec(), tmp_path / "b", seed=3)
    files_a = sorted(p.relative_to(a.root) for p in a.root.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b.root) for p in b.root.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert filecmp.cmp(a.root / rel, b.root / rel, shallow=False), rel
    c = write_kit(small_spec(), tmp_path / "c", seed=4)
    assert not all(
        filecmp.cmp(a.root / rel, c.root / rel, shallow=False) for rel in files_a
    )


def test_landmarks_stay_in_their_zones(tmp_path):
    paths = write_kit(small_spec(), tmp_path / "kit", seed=5)
    lms = load_landmarks(paths.root / "landmarks.csv")
    for lm in lms.values():
        for idx in range(0, 468, 37):  # spot check across the index range
            x_lo, x_hi, y_lo, y_hi = REGION_ZONES[lm.region_map[idx]]
            x, y = lm.points[idx]
            assert x_lo <= x <= x_hi
            assert y_lo <= y <= y_hi


def test_planted_focus_is_recovered_exactly(tmp_path):
    spec = KitSpec(
        dataset=SynthSpec(
            groups=(ASIAN_F, ASIAN_M), identities_per_group=2, images_per_identity=2, dim=4
        ),
        methods=(
            MethodSpec(
                name="m",
                focus_region={"Asian Female": "lips", "Asian Male": "chin"},
            ),
        ),
        heatmap_size=24,
    )
    paths = write_kit(spec, tmp_path / "kit", seed=6)
    ds = load_manifest(paths.manifest)
    lms = load_landmarks(paths.root / "landmarks.csv")
    want = {"Asian Female": "lips", "Asian Male": "chin"}
    for image_id in ds.image_ids():
        hm = load_heatmap(paths.root / "methods" / "m" / "heatmaps" / "obf" / f"{image_id}.hmap")
        fv = sample_focus(hm, lms[image_id])
        label = ds.record(image_id).demographic.label
        top = max(fv.region_scores, key=lambda r: (fv.region_scores[r], r))
        assert top == want[label]


def test_fail_rate_splits_outcomes(tmp_path):
    paths = write_kit(small_spec(fail_rate=1.0), tmp_path / "kit", seed=7)
    ds = load_manifest(paths.manifest)
    run = load_outcomes(paths.root / "methods" / "m" / "outcomes.csv", ds, "m")
    assert len(run.failed) == 12 and not run.produced
    # failed images must have no embedding rows; header-only CSV fails to load
    text = (paths.root / "methods" / "m" / "embeddings.csv").read_text()
    assert text.count("\n") <= 1


def test_copy_method_reuses_original_vectors(tmp_path):
    paths = write_kit(small_spec(kind="copy"), tmp_path / "kit", seed=8)
    orig = load_embeddings(paths.root / "embeddings" / "original.csv")
    obf = load_embeddings(paths.root / "methods" / "m" / "embeddings.csv")
    for image_id in orig.entries:
        assert np.allclose(orig.vector(image_id), obf.vector(image_id))


def test_spec_validation():
    ds = SynthSpec(groups=(ASIAN_F,), identities_per_group=1, images_per_identity=1, dim=2)
    with pytest.raises(ValueError):
        KitSpec(dataset=ds, methods=())
    with pytest.raises(ValueError):
        KitSpec(dataset=ds, methods=(MethodSpec(name="a"), MethodSpec(name="a")))
    with pytest.raises(ValueError):
        KitSpec(dataset=ds, methods=(MethodSpec(name="a"),), heatmap_size=MIN_HEATMAP_SIZE - 1)
    with pytest.raises(ValueError):
        MethodSpec(name="a", kind="blur")
    with pytest.raises(ValueError):
        MethodSpec(name="a", rec_heatmaps="copy")
    with pytest.raises(ValueError):
        MethodSpec(name="a", focus_region={"Asian Female": "nostril"})
