"""Command-line interface.

Exit codes: 0 on success, 2 when inputs or flags fail validation, 3
when a stage fails at runtime.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .attributes import attribute_rate_tables
from .config import ConfigError, load_config
from .datamodel import PAIRED_GROUPS, Dataset, SynthSpec, load_manifest
from .errors import IntegrityError, ParseError
from .fairness import EPS_GRID, bias_table, emit_rate_tables, load_rate_tables
from .focus import focus_correlation, focus_distribution, focus_record, sample_focus
from .identification import Hyper, Scenario, Threat, identification_run
from .obfuscate import dp_snow, k_same_pixel, pixelate, pixelate_standard, read_grid, write_grid
from .report import FORMATS, emit_tables, render_eps_vector
from .runner import ReportBundle, run_experiment
from .score_io import load_attributes, load_embeddings, load_heatmap, load_landmarks
from .synthkit import KitSpec, MethodSpec, write_kit
from .verification import PairMode, verification_report


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deface-bench",
        description="Robustness and fairness benchmark for face-obfuscation methods.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a configured experiment end to end")
    p.add_argument("--config", required=True, help="experiment TOML file")
    p.add_argument("--format", default="md", choices=FORMATS, help="table format")

    p = sub.add_parser("obfuscate", help="apply a pixel obfuscator to a raw grid")
    p.add_argument("--method", required=True, choices=("pixelate", "dpsnow", "ksame"))
    p.add_argument("--input", help="input grid file (pixelate/dpsnow)")
    p.add_argument("--output", required=True, help="output grid file")
    p.add_argument("--block", type=int, help="pixelate cell size; omit for standard 224/16")
    p.add_argument("--delta", type=float, help="dpsnow fraction of pixels to gray out")
    p.add_argument("--gray", type=int, default=128, help="dpsnow gray level")
    p.add_argument("--k", type=int, default=5, help="ksame cluster size")
    p.add_argument("--target", help="ksame target image id")
    p.add_argument("--gallery", help="ksame directory of <image_id>.raw grids")
    p.add_argument("--manifest", help="ksame dataset manifest")
    p.add_argument("--embeddings", help="ksame embeddings CSV")
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("verify", help="one-to-one verification attack")
    p.add_argument("--mode", required=True, choices=[m.value for m in PairMode])
    p.add_argument("--embeddings", required=True, help="original embeddings CSV")
    p.add_argument("--obf-embeddings", help="obfuscated embeddings CSV (m1/m2)")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fpr", type=float, default=0.1, help="FPR cap for TPR@FPR")
    p.add_argument("--neg-ratio", type=int, default=1, help="impostor pairs per genuine pair")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, help="report JSON path")

    p = sub.add_parser("identify", help="one-to-N identification attack")
    p.add_argument("--scenario", required=True, choices=[s.value for s in Scenario])
    p.add_argument("--threat", required=True, choices=[t.value for t in Threat])
    p.add_argument("--embeddings", required=True, help="original embeddings CSV")
    p.add_argument("--obf-embeddings", required=True, help="obfuscated embeddings CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True, help="report JSON path")

    p = sub.add_parser("bias", help="bias sweep over a rates CSV")
    p.add_argument("--rates", required=True, help="rates CSV (metric,demographic,rate,count)")
    p.add_argument("--format", default="json", choices=FORMATS)
    p.add_argument("--out", required=True)

    p = sub.add_parser("attributes", help="attribute preserving rates")
    p.add_argument("--orig", required=True, help="original attributes CSV")
    p.add_argument("--obf", required=True, help="obfuscated attributes CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output rates CSV")

    p = sub.add_parser("focus", help="saliency focus analysis")
    p.add_argument("--heatmaps", required=True, help="directory of <image_id>.hmap files")
    p.add_argument("--landmarks", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--compare-heatmaps", help="second heatmap directory for correlation")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="output JSON path")

    p = sub.add_parser("synth", help="generate a synthetic benchmark input kit")
    p.add_argument("--out", required=True, help="kit output directory")
    p.add_argument("--groups", type=int, default=2, help="number of demographic groups (1-8)")
    p.add_argument("--ids", type=int, default=20, help="identities per group")
    p.add_argument("--imgs", type=int, default=5, help="images per identity")
    p.add_argument("--dim", type=int, default=32, help="embedding dimension")
    p.add_argument("--spread", type=float, default=0.3, help="within-identity scatter")
    p.add_argument("--heatmap-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=42)

    p = sub.add_parser("report", help="re-render tables from a bundle.json")
    p.add_argument("--bundle", required=True)
    p.add_argument("--format", default="md", choices=FORMATS)
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    bundle = run_experiment(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    bundle.write(cfg.out_dir / "bundle.json")
    written = emit_tables(bundle, args.format, cfg.out_dir)
    for path in [cfg.out_dir / "bundle.json"] + written:
        print(path)
    failures = bundle.data["failures"]
    if failures:
        for unit, message in sorted(failures.items()):
            print(f"FAILED {unit}: {message}", file=sys.stderr)
        return 3
    return 0


def _cmd_obfuscate(args) -> int:
    if args.method == "ksame":
        needed = {"target": args.target, "gallery": args.gallery,
                  "manifest": args.manifest, "embeddings": args.embeddings}
        missing = [k for k, v in needed.items() if not v]
        if missing:
            raise ValueError(f"ksame needs --{', --'.join(missing)}")
        dataset = load_manifest(args.manifest)
        grids = {
            path.stem: read_grid(path)
            for path in sorted(Path(args.gallery).glob("*.raw"))
        }
        emb = load_embeddings(args.embeddings)
        out = k_same_pixel(args.target, dataset, grids, emb, k=args.k)
    else:
        if not args.input:
            raise ValueError(f"{args.method} needs --input")
        grid = read_grid(args.input)
        if args.method == "pixelate":
            out = pixelate(grid, args.block) if args.block else pixelate_standard(grid)
        else:
            if args.delta is None:
                raise ValueError("dpsnow needs --delta")
            out = dp_snow(grid, args.delta, gray=args.gray, seed=args.seed)
    write_grid(out, args.output)
    print(args.output)
    return 0


def _take_covered(dataset, table) -> Dataset:
    """Keep identities with at least two images covered by the table."""
    ids = set(table.entries) & set(dataset.image_ids())
    keep = []
    for identity_id, recs in sorted(dataset.identities().items()):
        covered = [r for r in recs if r.image_id in ids]
        if len(covered) >= 2:
            keep.extend(covered)
    if not keep:
        raise ValueError("no identity keeps 2+ covered images")
    return Dataset(name=dataset.name, records=tuple(keep))


def _cmd_verify(args) -> int:
    dataset = load_manifest(args.manifest)
    orig = load_embeddings(args.embeddings, model_tag="original")
    mode = PairMode(args.mode)
    if mode is PairMode.BASELINE:
        probe, obf_map = orig, None
    else:
        if not args.obf_embeddings:
            raise ValueError(f"mode {mode.value} needs --obf-embeddings")
        probe = load_embeddings(args.obf_embeddings, model_tag="obfuscated")
        ids = sorted(set(probe.entries) & set(dataset.image_ids()))
        if not ids:
            raise ValueError("no obfuscated embeddings match the manifest")
        obf_map = {i: i for i in ids}
    report = verification_report(
        dataset,
        probe,
        orig,
        mode,
        obf_map=obf_map,
        negatives_per_positive=args.neg_ratio,
        fpr_target=args.fpr,
        seed=args.seed,
    )
    s = report.summary
    payload = {
        "mode": mode.value,
        "summary": {
            "threshold": s.threshold,
            "f1": s.f1,
            "tpr": s.tpr,
            "fpr": s.fpr,
            "osr": s.osr,
            "auc": s.auc,
            "tpr_at_fpr": s.tpr_at_fpr,
            "fpr_target": s.fpr_target,
            "n_positive": s.n_positive,
            "n_negative": s.n_negative,
        },
        "per_demographic": {
            label: {"tpr": g.tpr, "osr": g.osr, "n_genuine": g.n_genuine}
            for label, g in report.per_demographic.items()
        },
    }
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(args.out)
    return 0


def _cmd_identify(args) -> int:
    dataset = load_manifest(args.manifest)
    orig = load_embeddings(args.embeddings, model_tag="original")
    obf = load_embeddings(args.obf_embeddings, model_tag="obfuscated")
    sub = _take_covered(dataset, obf)
    report = identification_run(
        sub,
        orig,
        obf,
        Scenario(args.scenario),
        Threat(args.threat),
        hyper=Hyper(lam=args.lam, epochs=args.epochs, seed=args.seed),
        seed=args.seed,
        workers=args.workers,
    )
    payload = {
        "scenario": report.scenario.value,
        "threat": report.threat.value,
        "overall_ir": report.overall_ir(),
        "per_demographic": {
            label: {"ir": g.ir, "osr": g.osr, "n": g.n}
            for label, g in report.per_demographic.items()
        },
    }
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(args.out)
    return 0


def _cmd_bias(args) -> int:
    tables = load_rate_tables(args.rates)
    reports = {metric: bias_table(tables[metric], EPS_GRID) for metric in sorted(tables)}
    out = Path(args.out)
    if args.format == "json":
        payload = {}
        for metric, report in reports.items():
            payload[metric] = {
                "eps_grid": list(report.eps_grid),
                "ab": report.ab_vector(),
                "db": {g: report.db_vector(g) for g in tables[metric].groups()},
                "pair_flags": [
                    {
                        "a": a,
                        "b": b,
                        "eps": eps,
                        "biased": flag.biased,
                        "against": flag.against,
                    }
                    for (a, b, eps), flag in sorted(report.pair_flags.items())
                ],
            }
        out.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    else:
        rows = []
        for metric, report in reports.items():
            rows.append([metric, "ab", "", render_eps_vector(report.ab_vector())])
            for group in tables[metric].groups():
                rows.append([metric, "db", group, render_eps_vector(report.db_vector(group))])
        header = ["metric", "kind", "group", "vector"]
        if args.format == "csv":
            import csv as _csv
            import io as _io

            buf = _io.StringIO()
            writer = _csv.writer(buf, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
            out.write_text(buf.getvalue())
        else:
            lines = ["| " + " | ".join(header) + " |",
                     "| " + " | ".join("---" for _ in header) + " |"]
            lines += ["| " + " | ".join(row) + " |" for row in rows]
            out.write_text("\n".join(lines) + "\n")
    print(out)
    return 0


def _cmd_attributes(args) -> int:
    dataset = load_manifest(args.manifest)
    orig = load_attributes(args.orig, estimator_tag="original")
    obf = load_attributes(args.obf, estimator_tag="obfuscated")
    tables = attribute_rate_tables(orig, obf, dataset)
    if not tables:
        raise ValueError("no attribute has pairs in 2+ demographic groups")
    emit_rate_tables(tables, args.out)
    print(args.out)
    return 0


def _cmd_focus(args) -> int:
    dataset = load_manifest(args.manifest)
    lms = load_landmarks(args.landmarks)
    obf_dir = Path(args.heatmaps)
    rec_dir = Path(args.compare_heatmaps) if args.compare_heatmaps else None
    ids = [
        i
        for i in sorted(lms)
        if i in set(dataset.image_ids()) and (obf_dir / f"{i}.hmap").exists()
    ]
    if rec_dir is not None:
        ids = [i for i in ids if (rec_dir / f"{i}.hmap").exists()]
    if not ids:
        raise ValueError("no images with both landmarks and heatmaps")
    vectors = {i: sample_focus(load_heatmap(obf_dir / f"{i}.hmap"), lms[i]) for i in ids}
    records = [focus_record(vectors[i], dataset.record(i).demographic) for i in ids]
    payload = {
        "images": {
            rec.image_id: {
                "top_feature": rec.top_feature,
                "top5": [[region, score] for region, score in rec.top5],
            }
            for rec in records
        },
        "distribution": {
            group_by: {
                f"{group}/{region}": n
                for (group, region), n in sorted(focus_distribution(records, group_by).items())
            }
            for group_by in ("race", "gender")
        },
    }
    if rec_dir is not None:
        compare = {
            i: sample_focus(load_heatmap(rec_dir / f"{i}.hmap"), lms[i]) for i in ids
        }
        payload["correlation"] = focus_correlation(vectors, compare, dataset)
    Path(args.out).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    print(args.out)
    return 0


def _cmd_synth(args) -> int:
    if not 1 <= args.groups <= len(PAIRED_GROUPS):
        raise ValueError(f"--groups must be in [1, {len(PAIRED_GROUPS)}]")
    spec = KitSpec(
        dataset=SynthSpec(
            groups=PAIRED_GROUPS[: args.groups],
            identities_per_group=args.ids,
            images_per_identity=args.imgs,
            dim=args.dim,
            cluster_spread=args.spread,
        ),
        methods=(
            MethodSpec(name="copy", kind="copy", attr_flip=0.0, rec_heatmaps="same"),
            MethodSpec(name="noise", kind="noise", noise_sigma=0.5, attr_flip=0.1),
            MethodSpec(
                name="random",
                kind="random",
                fail_rate=0.05,
                detect_rate=0.2,
                attr_flip=0.3,
                rec_heatmaps="random",
            ),
        ),
        heatmap_size=args.heatmap_size,
    )
    paths = write_kit(spec, args.out, seed=args.seed)
    print(paths.config)
    return 0


def _cmd_report(args) -> int:
    bundle = ReportBundle(data=json.loads(Path(args.bundle).read_text(encoding="utf-8")))
    for path in emit_tables(bundle, args.format, args.out):
        print(path)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "obfuscate": _cmd_obfuscate,
    "verify": _cmd_verify,
    "identify": _cmd_identify,
    "bias": _cmd_bias,
    "attributes": _cmd_attributes,
    "focus": _cmd_focus,
    "synth": _cmd_synth,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ConfigError, ParseError, IntegrityError, ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - anything else is a stage failure
        print(f"stage failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
