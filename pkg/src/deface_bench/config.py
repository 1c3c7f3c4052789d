"""Experiment configuration: a single TOML file, validated up front.

Every referenced input file must exist before any stage runs, the eps
grid must be descending in (0, 1), and every requested stage must have
at least one place to run.  Validation failures raise ConfigError,
which the CLI maps to exit code 2.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STAGES = (
    "passing",
    "detection",
    "verification",
    "identification",
    "attributes",
    "focus",
    "bias",
)


class ConfigError(ValueError):
    """The experiment config is invalid or references missing files."""


@dataclass(frozen=True)
class MethodConfig:
    name: str
    embeddings: Path | None = None
    outcomes: Path | None = None
    detections: Path | None = None
    attributes: Path | None = None
    heatmaps_obf: Path | None = None
    heatmaps_rec: Path | None = None


@dataclass(frozen=True)
class DatasetConfig:
    name: str
    manifest: Path
    embeddings: Path | None = None
    detections: Path | None = None
    attributes: Path | None = None
    landmarks: Path | None = None
    methods: tuple[MethodConfig, ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    seed: int = 42
    out_dir: Path = Path("report")
    eps_grid: tuple[float, ...] = (0.2, 0.15, 0.1, 0.05, 0.02)
    fpr_target: float = 0.1
    negatives_per_positive: int = 1
    workers: int = 1
    stages: tuple[str, ...] = STAGES
    rates: Path | None = None
    datasets: tuple[DatasetConfig, ...] = ()


def _require_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def _path_field(section: dict, key: str, base: Path, where: str) -> Path | None:
    value = section.get(key)
    if value is None:
        return None
    if not isinstance(value, str):
        raise ConfigError(f"{where}.{key} must be a path string")
    path = base / value
    if not path.exists():
        raise ConfigError(f"{where}.{key}: no such file or directory: {path}")
    return path


def load_config(path: str | Path) -> ExperimentConfig:
    """Parse and fully validate an experiment TOML file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    base = path.parent
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    _require_keys(doc, {"version", "experiment", "datasets"}, "config")
    if doc.get("version") != 1:
        raise ConfigError(f"unsupported config version {doc.get('version')!r}")
    exp = doc.get("experiment", {})
    if not isinstance(exp, dict):
        raise ConfigError("[experiment] must be a table")
    _require_keys(
        exp,
        {
            "name",
            "seed",
            "out_dir",
            "eps_grid",
            "fpr_target",
            "negatives_per_positive",
            "workers",
            "stages",
            "rates",
        },
        "[experiment]",
    )
    name = exp.get("name", path.stem)
    seed = exp.get("seed", 42)
    if not isinstance(seed, int):
        raise ConfigError("experiment.seed must be an integer")
    workers = exp.get("workers", 1)
    if not isinstance(workers, int) or workers < 1:
        raise ConfigError("experiment.workers must be a positive integer")
    npp = exp.get("negatives_per_positive", 1)
    if not isinstance(npp, int) or npp < 0:
        raise ConfigError("experiment.negatives_per_positive must be >= 0")
    fpr_target = exp.get("fpr_target", 0.1)
    if not isinstance(fpr_target, (int, float)) or not 0 <= fpr_target <= 1:
        raise ConfigError("experiment.fpr_target must be in [0, 1]")

    eps_grid = tuple(exp.get("eps_grid", (0.2, 0.15, 0.1, 0.05, 0.02)))
    if not eps_grid or any(not 0 < e < 1 for e in eps_grid):
        raise ConfigError("experiment.eps_grid values must lie in (0, 1)")
    if list(eps_grid) != sorted(eps_grid, reverse=True) or len(set(eps_grid)) != len(eps_grid):
        raise ConfigError("experiment.eps_grid must be strictly descending")

    stages = tuple(exp.get("stages", STAGES))
    unknown_stages = set(stages) - set(STAGES)
    if unknown_stages:
        raise ConfigError(f"unknown stages: {sorted(unknown_stages)}")
    if not stages:
        raise ConfigError("experiment.stages is empty")

    rates = _path_field(exp, "rates", base, "experiment")

    datasets = []
    raw_datasets = doc.get("datasets", [])
    if not isinstance(raw_datasets, list):
        raise ConfigError("[[datasets]] must be an array of tables")
    for i, section in enumerate(raw_datasets):
        where = f"datasets[{i}]"
        _require_keys(
            section,
            {
                "name",
                "manifest",
                "embeddings",
                "detections",
                "attributes",
                "landmarks",
                "methods",
            },
            where,
        )
        ds_name = section.get("name")
        if not ds_name or not isinstance(ds_name, str):
            raise ConfigError(f"{where}: name is required")
        manifest = _path_field(section, "manifest", base, where)
        if manifest is None:
            raise ConfigError(f"{where}: manifest is required")
        methods = []
        for m_name, m_section in sorted(section.get("methods", {}).items()):
            m_where = f"{where}.methods.{m_name}"
            _require_keys(
                m_section,
                {
                    "embeddings",
                    "outcomes",
                    "detections",
                    "attributes",
                    "heatmaps_obf",
                    "heatmaps_rec",
                },
                m_where,
            )
            methods.append(
                MethodConfig(
                    name=m_name,
                    embeddings=_path_field(m_section, "embeddings", base, m_where),
                    outcomes=_path_field(m_section, "outcomes", base, m_where),
                    detections=_path_field(m_section, "detections", base, m_where),
                    attributes=_path_field(m_section, "attributes", base, m_where),
                    heatmaps_obf=_path_field(m_section, "heatmaps_obf", base, m_where),
                    heatmaps_rec=_path_field(m_section, "heatmaps_rec", base, m_where),
                )
            )
        datasets.append(
            DatasetConfig(
                name=ds_name,
                manifest=manifest,
                embeddings=_path_field(section, "embeddings", base, where),
                detections=_path_field(section, "detections", base, where),
                attributes=_path_field(section, "attributes", base, where),
                landmarks=_path_field(section, "landmarks", base, where),
                methods=tuple(methods),
            )
        )
    names = [d.name for d in datasets]
    if len(set(names)) != len(names):
        raise ConfigError("duplicate dataset names")

    cfg = ExperimentConfig(
        name=name,
        seed=seed,
        out_dir=base / exp.get("out_dir", "report"),
        eps_grid=tuple(float(e) for e in eps_grid),
        fpr_target=float(fpr_target),
        negatives_per_positive=npp,
        workers=workers,
        stages=stages,
        rates=rates,
        datasets=tuple(datasets),
    )
    _check_stage_support(cfg)
    return cfg


def _stage_inputs(cfg: ExperimentConfig, stage: str):
    """Yield (dataset, method) units able to run the stage."""
    for ds in cfg.datasets:
        for m in ds.methods:
            if stage == "passing" and m.outcomes:
                yield ds, m
            elif stage == "detection" and m.detections:
                yield ds, m
            elif stage in ("verification", "identification") and ds.embeddings and m.embeddings:
                yield ds, m
            elif stage == "attributes" and ds.attributes and m.attributes:
                yield ds, m
            elif stage == "focus" and ds.landmarks and m.heatmaps_obf:
                yield ds, m


def _check_stage_support(cfg: ExperimentConfig) -> None:
    rate_stages = {"passing", "detection", "verification", "identification", "attributes"}
    for stage in cfg.stages:
        if stage == "bias":
            if cfg.rates is None and not (rate_stages & set(cfg.stages)):
                raise ConfigError(
                    "bias stage needs a rates file or a rate-producing stage"
                )
            continue
        if not any(True for _ in _stage_inputs(cfg, stage)):
            raise ConfigError(f"stage {stage!r} has no dataset/method with its inputs")
