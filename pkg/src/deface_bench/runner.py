"""Experiment orchestration: stages, aggregation, provenance.

Stages run in dependency order per dataset and method.  Each unit of
work is isolated: a failing unit is recorded under ``failures`` and
independent units still run.  Every reported number carries a ``prov``
id that resolves into the bundle's ``artifacts`` registry, so each
table cell can be traced to the operation that produced it.

Convention: obfuscated artifacts (embeddings, detections, attributes,
heatmap files) are keyed by the id of the source image they were made
from; the method name lives in the file paths, not in the ids.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attributes import attribute_pairs, preserving_rate
from .config import DatasetConfig, ExperimentConfig, MethodConfig
from .datamodel import Dataset, load_manifest, load_outcomes, passing_rate
from .errors import IntegrityError
from .fairness import RateTable, bias_table, load_rate_tables
from .focus import focus_correlation, focus_distribution, focus_record, sample_focus
from .identification import Hyper, Scenario, Threat, identification_run
from .score_io import (
    load_attributes,
    load_detections,
    load_embeddings,
    load_heatmap,
    load_landmarks,
)
from .verification import PairMode, verification_report


@dataclass
class ReportBundle:
    """The run's complete result tree, JSON-serializable and ordered."""

    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


class _Lazy:
    """Load a shared input once; re-raise the same error on every use."""

    def __init__(self, loader):
        self._loader = loader
        self._value = None
        self._error: Exception | None = None
        self._done = False

    def __call__(self):
        if not self._done:
            try:
                self._value = self._loader()
            except Exception as exc:  # noqa: BLE001 - reported per unit
                self._error = exc
            self._done = True
        if self._error is not None:
            raise self._error
        return self._value


IDENTIFICATION_RUNS = (
    (Scenario.S1, Threat.M3),
    (Scenario.S1, Threat.M4),
    (Scenario.S2, Threat.M5),
    (Scenario.S2, Threat.M6),
)


def run_experiment(cfg: ExperimentConfig) -> ReportBundle:
    """Execute all requested stages and assemble the report bundle."""
    state = {
        "config": {
            "name": cfg.name,
            "seed": cfg.seed,
            "eps_grid": list(cfg.eps_grid),
            "fpr_target": cfg.fpr_target,
            "negatives_per_positive": cfg.negatives_per_positive,
            "stages": list(cfg.stages),
        },
        "artifacts": {},
        "overall": {},
        "per_dataset": {},
        "bias": [],
        "focus": {},
        "focus_distribution": {},
        "failures": {},
    }
    rate_tables: list[tuple[str, str, str, RateTable]] = []

    def fail(unit: str, exc: Exception) -> None:
        state["failures"][unit] = f"{type(exc).__name__}: {exc}"

    def artifact(aid: str, stage: str, dataset: str, method: str | None, params: dict) -> str:
        state["artifacts"][aid] = {
            "stage": stage,
            "dataset": dataset,
            "method": method,
            "params": params,
        }
        return aid

    def cell(dataset: str, method: str, metric: str, value: float, prov: str) -> None:
        state["per_dataset"].setdefault(dataset, {}).setdefault(method, {})[metric] = {
            "value": float(value),
            "prov": prov,
        }

    for ds_cfg in cfg.datasets:
        try:
            dataset = load_manifest(ds_cfg.manifest, name=ds_cfg.name)
        except Exception as exc:  # noqa: BLE001
            fail(f"manifest:{ds_cfg.name}", exc)
            continue
        _run_dataset(cfg, ds_cfg, dataset, state, rate_tables, fail, artifact, cell)

    if "bias" in cfg.stages:
        if cfg.rates is not None:
            try:
                for metric, table in sorted(load_rate_tables(cfg.rates).items()):
                    rate_tables.append((metric, "external", "rates", table))
            except Exception as exc:  # noqa: BLE001
                fail("bias:external", exc)
        for metric, ds_name, m_name, table in rate_tables:
            unit = f"bias:{ds_name}:{m_name}:{metric}"
            try:
                report = bias_table(table, cfg.eps_grid)
            except Exception as exc:  # noqa: BLE001
                fail(unit, exc)
                continue
            aid = artifact(unit, "bias", ds_name, m_name, {"metric": metric})
            state["bias"].append(
                {
                    "metric": metric,
                    "dataset": ds_name,
                    "method": m_name,
                    "eps_grid": list(report.eps_grid),
                    "ab": report.ab_vector(),
                    "db": {g: report.db_vector(g) for g in table.groups()},
                    "rates": {g: table.rates[g] for g in table.groups()},
                    "counts": {g: table.counts[g] for g in table.groups()},
                    "prov": aid,
                }
            )
        state["bias"].sort(key=lambda e: (e["metric"], e["dataset"], e["method"]))

    _aggregate_overall(state, artifact)
    return ReportBundle(data=state)


def _run_dataset(cfg, ds_cfg: DatasetConfig, dataset: Dataset, state, rate_tables,
                 fail, artifact, cell) -> None:
    ds = ds_cfg.name
    orig_emb = _Lazy(lambda: load_embeddings(ds_cfg.embeddings, model_tag="original"))
    orig_attr = _Lazy(lambda: load_attributes(ds_cfg.attributes, estimator_tag="original"))
    landmarks = _Lazy(lambda: load_landmarks(ds_cfg.landmarks))

    if "verification" in cfg.stages and ds_cfg.embeddings is not None:
        unit = f"verification-baseline:{ds}"
        try:
            report = verification_report(
                dataset,
                orig_emb(),
                orig_emb(),
                PairMode.BASELINE,
                negatives_per_positive=cfg.negatives_per_positive,
                fpr_target=cfg.fpr_target,
                seed=cfg.seed,
            )
            aid = artifact(
                unit,
                "verification",
                ds,
                None,
                {
                    "mode": "baseline",
                    "threshold": report.summary.threshold,
                    "n_positive": report.summary.n_positive,
                    "n_negative": report.summary.n_negative,
                },
            )
            base_cells = state["per_dataset"].setdefault(ds, {}).setdefault("_baseline", {})
            for metric, value in (
                ("verification_auc", report.summary.auc),
                ("verification_f1", report.summary.f1),
                ("verification_tpr", report.summary.tpr),
                ("verification_tpr_at_fpr", report.summary.tpr_at_fpr),
            ):
                base_cells[metric] = {"value": float(value), "prov": aid}
        except Exception as exc:  # noqa: BLE001
            fail(unit, exc)

    for m_cfg in sorted(ds_cfg.methods, key=lambda m: m.name):
        m_emb = _Lazy(lambda m=m_cfg: load_embeddings(m.embeddings, model_tag=m.name))
        _run_method(cfg, ds_cfg, dataset, m_cfg, state, rate_tables, fail, artifact, cell,
                    orig_emb, orig_attr, landmarks, m_emb)


def _run_method(cfg, ds_cfg, dataset, m_cfg: MethodConfig, state, rate_tables,
                fail, artifact, cell, orig_emb, orig_attr, landmarks, m_emb) -> None:
    ds = ds_cfg.name
    m = m_cfg.name

    if "passing" in cfg.stages and m_cfg.outcomes is not None:
        unit = f"passing:{ds}:{m}"
        try:
            run = load_outcomes(m_cfg.outcomes, dataset, m)
            rate = passing_rate(run)
            aid = artifact(unit, "passing", ds, m, {"outcomes": m_cfg.outcomes.name})
            cell(ds, m, "passing_rate", 100.0 * rate, aid)
            rates, counts = {}, {}
            for group in dataset.groups():
                ids = {rec.image_id for rec in dataset.group_records(group)}
                n_ok = len(run.produced & ids)
                n_all = n_ok + len(run.failed & ids)
                if n_all:
                    rates[group.label] = n_ok / n_all
                    counts[group.label] = n_all
            if len(rates) >= 2:
                rate_tables.append(
                    (
                        "passing_rate",
                        ds,
                        m,
                        RateTable(metric_name="passing_rate", rates=rates, counts=counts),
                    )
                )
        except Exception as exc:  # noqa: BLE001
            fail(unit, exc)

    if "detection" in cfg.stages and m_cfg.detections is not None:
        unit = f"detection:{ds}:{m}"
        try:
            table = load_detections(m_cfg.detections, detector_tag=m)
            known = set(dataset.image_ids())
            stray = sorted(set(table.entries) - known)
            if stray:
                raise IntegrityError(f"detections for unknown images: {stray[:3]}")
            rate = sum(table.entries.values()) / len(table.entries)
            aid = artifact(unit, "detection", ds, m, {"n": len(table.entries)})
            cell(ds, m, "detection_rate", 100.0 * rate, aid)
            by_group: dict[str, list[bool]] = {}
            for image_id in sorted(table.entries):
                label = dataset.record(image_id).demographic.label
                by_group.setdefault(label, []).append(table.entries[image_id])
            if len(by_group) >= 2:
                rate_tables.append(
                    (
                        "detection_evasion",
                        ds,
                        m,
                        RateTable(
                            metric_name="detection_evasion",
                            rates={g: 1.0 - sum(v) / len(v) for g, v in by_group.items()},
                            counts={g: len(v) for g, v in by_group.items()},
                        ),
                    )
                )
        except Exception as exc:  # noqa: BLE001
            fail(unit, exc)

    if "verification" in cfg.stages and ds_cfg.embeddings and m_cfg.embeddings:
        for mode in (PairMode.M1, PairMode.M2):
            unit = f"verification-{mode.value}:{ds}:{m}"
            try:
                table = m_emb()
                ids = sorted(set(table.entries) & set(dataset.image_ids()))
                if not ids:
                    raise ValueError("no obfuscated embeddings match the manifest")
                report = verification_report(
                    dataset,
                    table,
                    orig_emb(),
                    mode,
                    obf_map={i: i for i in ids},
                    negatives_per_positive=cfg.negatives_per_positive,
                    fpr_target=cfg.fpr_target,
                    seed=cfg.seed,
                )
                s = report.summary
                aid = artifact(
                    unit,
                    "verification",
                    ds,
                    m,
                    {
                        "mode": mode.value,
                        "threshold": s.threshold,
                        "f1": s.f1,
                        "auc": s.auc,
                        "tpr_at_fpr": s.tpr_at_fpr,
                        "n_positive": s.n_positive,
                        "n_negative": s.n_negative,
                    },
                )
                cell(ds, m, f"verification_{mode.value}_osr", 100.0 * s.osr, aid)
                groups = report.per_demographic
                if len(groups) >= 2:
                    rate_tables.append(
                        (
                            f"verification_{mode.value}_osr",
                            ds,
                            m,
                            RateTable(
                                metric_name=f"verification_{mode.value}_osr",
                                rates={g: r.osr for g, r in groups.items()},
                                counts={g: r.n_genuine for g, r in groups.items()},
                            ),
                        )
                    )
            except Exception as exc:  # noqa: BLE001
                fail(unit, exc)

    if "identification" in cfg.stages and ds_cfg.embeddings and m_cfg.embeddings:
        for scenario, threat in IDENTIFICATION_RUNS:
            unit = f"identification-{threat.value}:{ds}:{m}"
            try:
                table = m_emb()
                ids = set(table.entries) & set(dataset.image_ids())
                keep = []
                for identity_id, recs in sorted(dataset.identities().items()):
                    covered = [r for r in recs if r.image_id in ids]
                    if len(covered) >= 2:
                        keep.extend(covered)
                if not keep:
                    raise ValueError("no identity keeps 2+ obfuscated images")
                sub = Dataset(name=dataset.name, records=tuple(keep))
                report = identification_run(
                    sub,
                    orig_emb(),
                    table,
                    scenario,
                    threat,
                    hyper=Hyper(seed=cfg.seed),
                    seed=cfg.seed,
                    workers=cfg.workers,
                )
                osr = 1.0 - report.overall_ir()
                aid = artifact(
                    unit,
                    "identification",
                    ds,
                    m,
                    {
                        "scenario": scenario.value,
                        "threat": threat.value,
                        "n_probes": sum(g.n for g in report.per_demographic.values()),
                    },
                )
                cell(ds, m, f"identification_{threat.value}_osr", 100.0 * osr, aid)
                groups = report.per_demographic
                if len(groups) >= 2:
                    rate_tables.append(
                        (
                            f"identification_{threat.value}_osr",
                            ds,
                            m,
                            RateTable(
                                metric_name=f"identification_{threat.value}_osr",
                                rates={g: r.osr for g, r in groups.items()},
                                counts={g: r.n for g, r in groups.items()},
                            ),
                        )
                    )
            except Exception as exc:  # noqa: BLE001
                fail(unit, exc)

    if "attributes" in cfg.stages and ds_cfg.attributes and m_cfg.attributes:
        unit = f"attributes:{ds}:{m}"
        try:
            obf_attr = load_attributes(m_cfg.attributes, estimator_tag=m)
            by_attr = attribute_pairs(orig_attr(), obf_attr, dataset)
            aid = artifact(unit, "attributes", ds, m, {"attributes": m_cfg.attributes.name})
            for attr in sorted(by_attr):
                by_group = by_attr[attr]
                if not by_group:
                    continue
                pooled = [p for label in sorted(by_group) for p in by_group[label]]
                cell(ds, m, f"attr_{attr}_pr", 100.0 * preserving_rate(attr, pooled), aid)
                if len(by_group) >= 2:
                    name = f"attr_{attr}"
                    rate_tables.append(
                        (
                            name,
                            ds,
                            m,
                            RateTable(
                                metric_name=name,
                                rates={
                                    g: preserving_rate(attr, pairs)
                                    for g, pairs in by_group.items()
                                },
                                counts={g: len(pairs) for g, pairs in by_group.items()},
                            ),
                        )
                    )
        except Exception as exc:  # noqa: BLE001
            fail(unit, exc)

    if "focus" in cfg.stages and ds_cfg.landmarks and m_cfg.heatmaps_obf:
        unit = f"focus:{ds}:{m}"
        try:
            lms = landmarks()
            obf_dir = m_cfg.heatmaps_obf
            rec_dir = m_cfg.heatmaps_rec
            ids = [
                i
                for i in sorted(lms)
                if i in set(dataset.image_ids()) and (obf_dir / f"{i}.hmap").exists()
            ]
            if rec_dir is not None:
                ids = [i for i in ids if (rec_dir / f"{i}.hmap").exists()]
            if not ids:
                raise ValueError("no images with landmarks and heatmaps")

            def sample(image_id: str):
                fv_obf = sample_focus(load_heatmap(obf_dir / f"{image_id}.hmap"), lms[image_id])
                fv_rec = None
                if rec_dir is not None:
                    fv_rec = sample_focus(
                        load_heatmap(rec_dir / f"{image_id}.hmap"), lms[image_id]
                    )
                return fv_obf, fv_rec

            if cfg.workers > 1:
                with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
                    sampled = list(pool.map(sample, ids))
            else:
                sampled = [sample(i) for i in ids]

            aid = artifact(unit, "focus", ds, m, {"n_images": len(ids)})
            records = [
                focus_record(fv_obf, dataset.record(i).demographic)
                for i, (fv_obf, _) in zip(ids, sampled)
            ]
            dists = {}
            for group_by in ("race", "gender"):
                counts = focus_distribution(records, group_by)
                tree: dict[str, dict[str, int]] = {}
                for (group, region), n in sorted(counts.items()):
                    tree.setdefault(group, {})[region] = n
                dists[group_by] = tree
            state["focus_distribution"].setdefault(ds, {})[m] = dists

            if rec_dir is not None:
                corr = focus_correlation(
                    {i: fv for i, (fv, _) in zip(ids, sampled)},
                    {i: fv for i, (_, fv) in zip(ids, sampled)},
                    dataset,
                )
                state["focus"].setdefault(ds, {})[m] = {
                    label: {"value": corr[label], "prov": aid} for label in corr
                }
        except Exception as exc:  # noqa: BLE001
            fail(unit, exc)


def _aggregate_overall(state, artifact) -> None:
    per_dataset = state["per_dataset"]
    methods = sorted(
        {m for cells in per_dataset.values() for m in cells if not m.startswith("_")}
    )
    for m in methods:
        metrics = sorted(
            {
                metric
                for ds_cells in per_dataset.values()
                for metric in ds_cells.get(m, {})
            }
        )
        for metric in metrics:
            values = []
            provs = []
            for ds_name in sorted(per_dataset):
                entry = per_dataset[ds_name].get(m, {}).get(metric)
                if entry is not None:
                    values.append(entry["value"])
                    provs.append(entry["prov"])
            aid = artifact(
                f"aggregate:{m}:{metric}",
                "aggregate",
                "*",
                m,
                {"inputs": provs},
            )
            state["overall"].setdefault(m, {})[metric] = {
                "value": float(np.mean(values)),
                "prov": aid,
            }
