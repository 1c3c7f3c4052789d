"""Experiment runner tests on small synthetic kits."""

import json

import pytest

from deface_bench.config import load_config
from deface_bench.datamodel import SynthSpec
from deface_bench.runner import run_experiment
from deface_bench.synthkit import KitSpec, MethodSpec, write_kit

from conftest import ASIAN_F, ASIAN_M


def run_kit(tmp_path, methods=None, name="kit", seed=2, ids=4, imgs=3):
    spec = KitSpec(
        dataset=SynthSpec(
            groups=(ASIAN_F, ASIAN_M),
            identities_per_group=ids,
            images_per_identity=imgs,
            dim=8,
        ),
        methods=methods or (MethodSpec(name="copy", kind="copy", attr_flip=0.0),),
        heatmap_size=24,
    )
    paths = write_kit(spec, tmp_path / name, seed=seed)
    cfg = load_config(paths.config)
    return paths, cfg, run_experiment(cfg)


def test_bundle_serializes_and_covers_stages(tmp_path):
    paths, cfg, bundle = run_kit(tmp_path)
    data = json.loads(bundle.to_json())  # round-trips through plain JSON
    assert data["failures"] == {}
    cells = data["per_dataset"]["synthetic"]["copy"]
    for metric in (
        "passing_rate",
        "detection_rate",
        "verification_m1_osr",
        "verification_m2_osr",
        "identification_m3_osr",
        "identification_m4_osr",
        "identification_m5_osr",
        "identification_m6_osr",
        "attr_gender_pr",
        "attr_age_pr",
    ):
        assert metric in cells, metric
        assert set(cells[metric]) == {"value", "prov"}
    assert "_baseline" in data["per_dataset"]["synthetic"]


def test_copy_method_yields_zero_m1_osr(tmp_path):
    _, _, bundle = run_kit(tmp_path)
    cells = bundle.data["per_dataset"]["synthetic"]["copy"]
    assert cells["verification_m1_osr"]["value"] == 0.0
    assert cells["passing_rate"]["value"] == 100.0
    assert cells["detection_rate"]["value"] == 100.0
    assert cells["attr_gender_pr"]["value"] == 100.0


def test_provenance_closure(tmp_path):
    _, _, bundle = run_kit(tmp_path)
    data = bundle.data
    artifacts = data["artifacts"]
    seen = []
    for ds_cells in data["per_dataset"].values():
        for cells in ds_cells.values():
            seen += [c["prov"] for c in cells.values()]
    for m_cells in data["overall"].values():
        seen += [c["prov"] for c in m_cells.values()]
    for entry in data["bias"]:
        seen.append(entry["prov"])
    for ds_tree in data.get("focus", {}).values():
        for m_tree in ds_tree.values():
            seen += [c["prov"] for c in m_tree.values()]
    assert seen, "no provenance found at all"
    for prov in seen:
        assert prov in artifacts, f"dangling provenance {prov}"
    # aggregates must point back at their per-dataset inputs
    for aid, art in artifacts.items():
        for input_aid in art["params"].get("inputs", []):
            assert input_aid in artifacts


def test_overall_is_mean_over_datasets(tmp_path):
    # two datasets in one config: overall = mean of the two dataset cells
    spec = KitSpec(
        dataset=SynthSpec(
            groups=(ASIAN_F, ASIAN_M), identities_per_group=3, images_per_identity=3, dim=8
        ),
        methods=(MethodSpec(name="copy", kind="copy"),),
        heatmap_size=24,
    )
    a = write_kit(spec, tmp_path / "a", seed=3)
    b = write_kit(spec, tmp_path / "b", seed=4)
    text = a.config.read_text()
    second = text[text.index("[[datasets]]") :].replace(
        'name = "synthetic"', 'name = "other"', 1
    )
    second = second.replace('manifest = "manifest.csv"', f'manifest = "{b.root}/manifest.csv"')
    second = second.replace('= "embeddings/', f'= "{b.root}/embeddings/')
    second = second.replace('= "detections/', f'= "{b.root}/detections/')
    second = second.replace('= "attributes/', f'= "{b.root}/attributes/')
    second = second.replace('= "landmarks.csv"', f'= "{b.root}/landmarks.csv"')
    second = second.replace('= "methods/', f'= "{b.root}/methods/')
    a.config.write_text(text + "\n" + second)
    cfg = load_config(a.config)
    bundle = run_experiment(cfg)
    assert bundle.data["failures"] == {}
    per = bundle.data["per_dataset"]
    overall = bundle.data["overall"]["copy"]
    for metric, cell in overall.items():
        va = per["synthetic"]["copy"][metric]["value"]
        vb = per["other"]["copy"][metric]["value"]
        assert cell["value"] == pytest.approx((va + vb) / 2)


def test_bias_entries_cover_rate_metrics(tmp_path):
    _, cfg, bundle = run_kit(tmp_path)
    entries = bundle.data["bias"]
    assert entries, "no bias entries"
    metrics = {e["metric"] for e in entries}
    assert "passing_rate" in metrics
    assert "verification_m1_osr" in metrics
    for e in entries:
        assert e["eps_grid"] == list(cfg.eps_grid)
        assert len(e["ab"]) == len(cfg.eps_grid)
        assert set(e["db"]) == set(e["rates"])
        for vec in e["db"].values():
            assert len(vec) == len(cfg.eps_grid)


def test_external_rates_feed_bias(tmp_path):
    paths = write_kit(
        KitSpec(
            dataset=SynthSpec(
                groups=(ASIAN_F, ASIAN_M), identities_per_group=2, images_per_identity=2, dim=4
            ),
            methods=(MethodSpec(name="m"),),
            heatmap_size=24,
        ),
        tmp_path / "kit",
        seed=5,
    )
    rates = paths.root / "ext.csv"
    rates.write_text("metric,demographic,rate,count\next_pr,A,0.5,4\next_pr,B,1.0,4\n")
    text = paths.config.read_text()
    paths.config.write_text(text.replace("workers = 1", 'workers = 1\nrates = "ext.csv"'))
    bundle = run_experiment(load_config(paths.config))
    ext = [e for e in bundle.data["bias"] if e["metric"] == "ext_pr"]
    assert len(ext) == 1
    assert ext[0]["dataset"] == "external"
    # 0.5 / 1.0 = 0.5: biased at every eps on the default grid
    assert ext[0]["ab"] == [100.0] * 5
    assert ext[0]["db"]["A"] == [100.0] * 5


def test_broken_stage_is_recorded_not_raised(tmp_path):
    paths = write_kit(
        KitSpec(
            dataset=SynthSpec(
                groups=(ASIAN_F, ASIAN_M), identities_per_group=2, images_per_identity=2, dim=4
            ),
            methods=(MethodSpec(name="m"),),
            heatmap_size=24,
        ),
        tmp_path / "kit",
        seed=6,
    )
    # corrupt the method detections: verdicts for images not in the manifest
    det = paths.root / "methods" / "m" / "detections.csv"
    det.write_text("image_id,detected\nghost,1\n")
    bundle = run_experiment(load_config(paths.config))
    failures = bundle.data["failures"]
    assert any("detection" in unit for unit in failures), failures
    # everything else still ran
    cells = bundle.data["per_dataset"]["synthetic"]["m"]
    assert "passing_rate" in cells
    assert "detection_rate" not in cells


def test_runs_are_reproducible(tmp_path):
    _, _, bundle_a = run_kit(tmp_path, name="a", seed=7)
    _, _, bundle_b = run_kit(tmp_path, name="b", seed=7)
    assert bundle_a.to_json() == bundle_b.to_json()
