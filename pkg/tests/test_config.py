import pytest

from deface_bench.config import STAGES, ConfigError, load_config
from deface_bench.datamodel import SynthSpec
from deface_bench.synthkit import KitSpec, MethodSpec, write_kit

from conftest import ASIAN_F, ASIAN_M


def kit(tmp_path, name="kit"):
    spec = KitSpec(
        dataset=SynthSpec(
            groups=(ASIAN_F, ASIAN_M), identities_per_group=2, images_per_identity=2, dim=4
        ),
        methods=(MethodSpec(name="m"),),
        heatmap_size=24,
    )
    return write_kit(spec, tmp_path / name, seed=1)


def rewrite(paths, old, new):
    text = paths.config.read_text()
    assert old in text, f"fixture drift: {old!r} not in config"
    paths.config.write_text(text.replace(old, new))


def test_full_kit_config_loads(tmp_path):
    cfg = load_config(kit(tmp_path).config)
    assert cfg.name == "synthetic"
    assert cfg.stages == STAGES
    assert cfg.eps_grid == (0.2, 0.15, 0.1, 0.05, 0.02)
    ds = cfg.datasets[0]
    assert ds.manifest.exists()
    assert ds.methods[0].heatmaps_obf.is_dir()


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_bad_version_rejected(tmp_path):
    paths = kit(tmp_path)
    rewrite(paths, "version = 1", "version = 2")
    with pytest.raises(ConfigError, match="version"):
        load_config(paths.config)


def test_unknown_key_rejected(tmp_path):
    paths = kit(tmp_path)
    rewrite(paths, "[experiment]", "[experiment]\nturbo = true")
    with pytest.raises(ConfigError, match="unknown keys"):
        load_config(paths.config)


def test_unknown_method_key_rejected(tmp_path):
    paths = kit(tmp_path)
    rewrite(paths, "[datasets.methods.m]", "[datasets.methods.m]\nblocksize = 3")
    with pytest.raises(ConfigError, match="unknown keys"):
        load_config(paths.config)


def test_missing_referenced_file(tmp_path):
    paths = kit(tmp_path)
    (paths.root / "landmarks.csv").unlink()
    with pytest.raises(ConfigError, match="landmarks"):
        load_config(paths.config)


def test_eps_grid_must_descend(tmp_path):
    paths = kit(tmp_path)
    rewrite(paths, "eps_grid = [0.2, 0.15, 0.1, 0.05, 0.02]", "eps_grid = [0.05, 0.2]")
    with pytest.raises(ConfigError, match="descending"):
        load_config(paths.config)


def test_eps_grid_bounds(tmp_path):
    paths = kit(tmp_path)
    rewrite(paths, "eps_grid = [0.2, 0.15, 0.1, 0.05, 0.02]", "eps_grid = [1.0, 0.5]")
    with pytest.raises(ConfigError, match="eps_grid"):
        load_config(paths.config)


def test_unknown_stage_rejected(tmp_path):
    paths = kit(tmp_path)
    rewrite(paths, "workers = 1", 'workers = 1\nstages = ["passing", "osmosis"]')
    with pytest.raises(ConfigError, match="unknown stages"):
        load_config(paths.config)


def test_stage_without_inputs_rejected(tmp_path):
    paths = kit(tmp_path)
    # strip the method's outcome file, then ask only for the passing stage
    rewrite(paths, 'outcomes = "methods/m/outcomes.csv"\n', "")
    rewrite(paths, "workers = 1", 'workers = 1\nstages = ["passing"]')
    with pytest.raises(ConfigError, match="passing"):
        load_config(paths.config)


def test_bias_alone_needs_rates(tmp_path):
    paths = kit(tmp_path)
    rewrite(paths, "workers = 1", 'workers = 1\nstages = ["bias"]')
    with pytest.raises(ConfigError, match="bias"):
        load_config(paths.config)
    # an explicit rates file satisfies it
    rates = paths.root / "rates.csv"
    rates.write_text("metric,demographic,rate,count\nx,A,0.5,1\nx,B,0.9,1\n")
    rewrite(paths, 'stages = ["bias"]', 'stages = ["bias"]\nrates = "rates.csv"')
    cfg = load_config(paths.config)
    assert cfg.rates == rates


def test_duplicate_dataset_names_rejected(tmp_path):
    paths = kit(tmp_path)
    text = paths.config.read_text()
    dup = text[text.index("[[datasets]]") :]
    paths.config.write_text(text + "\n" + dup)
    with pytest.raises(ConfigError, match="duplicate dataset names"):
        load_config(paths.config)


def test_workers_and_seed_validation(tmp_path):
    paths = kit(tmp_path)
    rewrite(paths, "workers = 1", "workers = 0")
    with pytest.raises(ConfigError, match="workers"):
        load_config(paths.config)
    paths2 = kit(tmp_path, name="kit2")
    rewrite(paths2, "seed = 1", 'seed = "one"')
    with pytest.raises(ConfigError, match="seed"):
        load_config(paths2.config)
