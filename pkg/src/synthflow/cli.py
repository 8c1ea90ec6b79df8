"""Command-line pipeline: ingest, train, generate, evaluate, report.

Every command takes one JSON run config (``--config``), with ``--seed`` and
``--out`` as overriding flags. Relative paths inside the config resolve
against the config file's directory. Commands validate the full config
before touching the filesystem and write a manifest listing their outputs;
identical (config, inputs, seed) runs reproduce identical data artifacts
byte for byte (manifests and the train log's wall_ms column carry wall-clock
measurements and are the documented exception).

Exit codes: 0 success, 2 config/validation error, 3 data error, 4 training
divergence, 5 missing prerequisite artifact.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__, schemas
from .dataio import (
    DataError,
    DatasetMatrix,
    FeatureSchema,
    RawTable,
    clean_numeric,
    filter_by_label,
    load_dataset,
    minmax_normalize,
    parse_csv,
    save_dataset,
    schema_from_json,
)
from .evaluator import EvalConfig, QualityReport, evaluate
from .gan import (
    CheckpointError,
    GanConfig,
    TrainingDiverged,
    generate,
    load_checkpoint,
    save_checkpoint,
    train,
    write_train_log,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4
EXIT_MISSING = 5

DATASET_FILE = "dataset.json"
SUMMARY_FILE = "ingest_summary.txt"
MODEL_FILE = "model.sgmodel"
LASTGOOD_MODEL_FILE = "model_lastgood.sgmodel"
TRAIN_LOG_FILE = "train_log.csv"
SYNTH_FILE = "synthetic.csv"
REPORT_JSON_FILE = "quality_report.json"
IMPORTANCE_FILE = "feature_importance.csv"
REPORT_MD_FILE = "report.md"

LOW_SAMPLE_THRESHOLD = 5000

# Reference quality targets printed next to measured values in reports.
REFERENCE_RMSE_MEANS = 0.10
REFERENCE_AUC = 0.75

DATASET_KINDS = ("nsl-kdd", "cicids2017", "custom")


class ConfigError(ValueError):
    """Run config is missing, malformed, or fails validation."""


class MissingArtifactError(FileNotFoundError):
    """A prerequisite artifact from an earlier command is absent."""


@dataclass(frozen=True)
class RunConfig:
    dataset: str
    csv: tuple[str, ...]
    labels: tuple[str, ...]
    out: str
    seed: int
    schema: str | None = None
    has_header: bool | None = None
    gan: GanConfig = GanConfig()
    eval: EvalConfig = EvalConfig()

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "csv": list(self.csv),
            "labels": list(self.labels),
            "out": self.out,
            "seed": self.seed,
            "schema": self.schema,
            "has_header": self.has_header,
            "gan": self.gan.to_dict(),
            "eval": self.eval.to_dict(),
        }

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    def headered(self) -> bool:
        if self.has_header is not None:
            return self.has_header
        return self.dataset != "nsl-kdd"  # NSL-KDD files ship headerless

    def resolve_schema(self) -> FeatureSchema:
        if self.schema is not None:
            return schema_from_json(self.schema)
        if self.dataset == "custom":
            raise ConfigError("dataset kind 'custom' needs a schema path")
        return schemas.BUNDLED_SCHEMAS[self.dataset]()


def load_run_config(
    path, seed_override: int | None = None, out_override: str | None = None
) -> RunConfig:
    """Parse and validate the JSON run config; flags win over file values."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")

    base = Path(path).resolve().parent

    def resolve(p: str) -> str:
        q = Path(p)
        return str(q if q.is_absolute() else base / q)

    known = {
        "dataset", "csv", "labels", "out", "seed", "schema", "has_header",
        "gan", "eval",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    dataset = doc.get("dataset")
    if dataset not in DATASET_KINDS:
        raise ConfigError(f"dataset must be one of {DATASET_KINDS}, got {dataset!r}")
    csv_paths = doc.get("csv")
    if not isinstance(csv_paths, list) or not csv_paths or not all(
        isinstance(p, str) for p in csv_paths
    ):
        raise ConfigError("'csv' must be a nonempty list of paths")
    labels = doc.get("labels")
    if not isinstance(labels, list) or not labels or not all(
        isinstance(lbl, str) and lbl.strip() for lbl in labels
    ):
        raise ConfigError("'labels' must be a nonempty list of label texts")
    seed = seed_override if seed_override is not None else doc.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    out = out_override if out_override is not None else doc.get("out")
    if not isinstance(out, str) or not out:
        raise ConfigError("'out' must be a nonempty directory path")
    schema = doc.get("schema")
    if schema is not None and not isinstance(schema, str):
        raise ConfigError("'schema' must be a path string")
    has_header = doc.get("has_header")
    if has_header is not None and not isinstance(has_header, bool):
        raise ConfigError("'has_header' must be a boolean")

    try:
        gan_cfg = GanConfig.from_dict(doc.get("gan", {}))
        eval_cfg = EvalConfig.from_dict(doc.get("eval", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad gan/eval config: {exc}") from exc
    # the run seed is the single source of randomness
    gan_cfg = replace(gan_cfg, seed=seed)

    cfg = RunConfig(
        dataset=dataset,
        csv=tuple(resolve(p) for p in csv_paths),
        labels=tuple(labels),
        out=out_override if out_override is not None else resolve(out),
        seed=seed,
        schema=resolve(schema) if schema is not None else None,
        has_header=has_header,
        gan=gan_cfg,
        eval=eval_cfg,
    )
    try:
        cfg.resolve_schema()
    except DataError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _write_atomic(path: Path, data: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(data, encoding="utf-8")
    os.replace(tmp, path)


def write_manifest(
    cfg: RunConfig,
    command: str,
    artifacts: list[str],
    timings_ms: dict,
    fingerprint: dict | None = None,
    status: str = "ok",
    extra: dict | None = None,
) -> Path:
    name = f"{command}_manifest.json"
    doc = {
        "command": command,
        "tool_version": __version__,
        "status": status,
        "config": cfg.to_dict(),
        "dataset_fingerprint": fingerprint,
        "artifacts": sorted(artifacts + [name]),
        "timings_ms": timings_ms,
    }
    if extra:
        doc.update(extra)
    path = cfg.out_dir / name
    _write_atomic(path, json.dumps(doc, indent=2) + "\n")
    return path


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise MissingArtifactError(
            f"{path} not found; run the '{producer}' command first"
        )
    return path


def _feature_slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


def histogram_file_name(feature: str) -> str:
    return f"hist_{_feature_slug(feature)}.csv"


def cmd_ingest(cfg: RunConfig) -> int:
    for p in cfg.csv:
        if not Path(p).exists():
            raise ConfigError(f"input CSV not found: {p}")
    schema = cfg.resolve_schema()
    t0 = time.perf_counter()

    names = None if cfg.headered() else [c.name for c in schema.columns]
    tables = [parse_csv(p, has_header=cfg.headered(), names=names) for p in cfg.csv]
    header = tables[0].header
    for p, t in zip(cfg.csv[1:], tables[1:]):
        if t.header != header:
            raise DataError(f"CSV header of {p} differs from {cfg.csv[0]}")
    table = RawTable(header, [row for t in tables for row in t.rows])
    parsed_rows = len(table.rows)

    values, labels, dropped = clean_numeric(table, schema)
    normalized, stats = minmax_normalize(values)
    full = DatasetMatrix(normalized, labels, stats, schema)
    filtered = filter_by_label(full, cfg.labels)
    wall_ms = (time.perf_counter() - t0) * 1000.0

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    save_dataset(filtered, cfg.out_dir / DATASET_FILE)

    label_counts = Counter(lbl.strip() for lbl in labels)
    lines = [
        "ingest summary",
        "==============",
        f"dataset kind: {cfg.dataset}",
        f"rows parsed: {parsed_rows}",
        f"rows dropped (unparseable): {dropped}",
        f"rows kept: {full.n_rows}",
        f"feature count: {len(schema.feature_names())}",
        "label histogram:",
    ]
    for name, count in sorted(label_counts.items(), key=lambda kv: (-kv[1], kv[0])):
        lines.append(f"  {name}: {count}")
    lines.append(f"selected labels: {', '.join(cfg.labels)}")
    lines.append(f"rows after label filter: {filtered.n_rows}")
    low_sample = filtered.n_rows < LOW_SAMPLE_THRESHOLD
    if low_sample:
        warning = (
            f"warning: only {filtered.n_rows} rows match the selected labels "
            f"(< {LOW_SAMPLE_THRESHOLD}); expect weak statistical relevance"
        )
        lines.append(warning)
        print(warning, file=sys.stderr)
    summary = "\n".join(lines) + "\n"
    (cfg.out_dir / SUMMARY_FILE).write_text(summary, encoding="utf-8")

    fingerprint = {
        "rows_parsed": parsed_rows,
        "rows_dropped": dropped,
        "rows_kept": full.n_rows,
        "rows_selected": filtered.n_rows,
        "features": len(schema.feature_names()),
    }
    write_manifest(
        cfg, "ingest", [DATASET_FILE, SUMMARY_FILE], {"total": wall_ms}, fingerprint
    )
    print(
        f"ingested {filtered.n_rows} rows "
        f"({len(schema.feature_names())} features) -> {cfg.out_dir / DATASET_FILE}"
    )
    return EXIT_OK


def cmd_train(cfg: RunConfig) -> int:
    data = load_dataset(_require(cfg.out_dir / DATASET_FILE, "ingest"))
    fingerprint = {"rows": data.n_rows, "features": data.features.shape[1]}
    every = max(1, cfg.gan.gen_steps // 10)

    def progress(record):
        if record.step % every == 0 or record.step == cfg.gan.gen_steps:
            print(
                f"step {record.step}/{cfg.gan.gen_steps} "
                f"critic_loss={record.critic_loss:.4f} "
                f"generator_loss={record.generator_loss:.4f}",
                file=sys.stderr,
            )

    t0 = time.perf_counter()
    try:
        model, records = train(data, cfg.gan, progress)
    except TrainingDiverged as exc:
        wall_ms = (time.perf_counter() - t0) * 1000.0
        (cfg.out_dir / LASTGOOD_MODEL_FILE).write_bytes(save_checkpoint(exc.model))
        write_train_log(exc.records, cfg.out_dir / TRAIN_LOG_FILE)
        write_manifest(
            cfg,
            "train",
            [LASTGOOD_MODEL_FILE, TRAIN_LOG_FILE],
            {"total": wall_ms},
            fingerprint,
            status="diverged",
            extra={"failure_step": exc.step},
        )
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    wall_ms = (time.perf_counter() - t0) * 1000.0

    (cfg.out_dir / MODEL_FILE).write_bytes(save_checkpoint(model))
    write_train_log(records, cfg.out_dir / TRAIN_LOG_FILE)
    write_manifest(
        cfg, "train", [MODEL_FILE, TRAIN_LOG_FILE], {"total": wall_ms}, fingerprint
    )
    print(f"trained {cfg.gan.gen_steps} generator steps -> {cfg.out_dir / MODEL_FILE}")
    return EXIT_OK


def _load_model_and_data(cfg: RunConfig):
    data = load_dataset(_require(cfg.out_dir / DATASET_FILE, "ingest"))
    model = load_checkpoint(
        _require(cfg.out_dir / MODEL_FILE, "train").read_bytes()
    )
    width = data.features.shape[1]
    if model.feature_count != width:
        raise CheckpointError(
            f"checkpoint generates {model.feature_count} features but the "
            f"dataset schema has {width}"
        )
    return model, data


def cmd_generate(cfg: RunConfig, count: int) -> int:
    if count < 1:
        raise ConfigError(f"--count must be >= 1, got {count}")
    model, data = _load_model_and_data(cfg)
    t0 = time.perf_counter()
    rng = np.random.default_rng([cfg.seed, 1])
    rows = generate(model, count, rng, stats=data.stats, clamp=True)
    wall_ms = (time.perf_counter() - t0) * 1000.0

    names = data.schema.feature_names()
    out_path = cfg.out_dir / SYNTH_FILE
    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(f'"{n}"' if "," in n else n for n in names) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    write_manifest(
        cfg, "generate", [SYNTH_FILE], {"total": wall_ms},
        {"rows": count, "features": len(names)},
    )
    print(f"generated {count} synthetic rows -> {out_path}")
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    model, data = _load_model_and_data(cfg)
    t0 = time.perf_counter()
    synth = generate(
        model, data.n_rows, np.random.default_rng([cfg.seed, 3]), clamp=True
    )
    report = evaluate(data, synth, cfg.eval, np.random.default_rng([cfg.seed, 2]))
    wall_ms = (time.perf_counter() - t0) * 1000.0

    artifacts = [REPORT_JSON_FILE, IMPORTANCE_FILE]
    _write_atomic(cfg.out_dir / REPORT_JSON_FILE, report.to_json())

    names = data.schema.feature_names()
    order = {n: i for i, n in enumerate(names)}
    ranked = sorted(report.importances.items(), key=lambda kv: (-kv[1], order[kv[0]]))
    with open(cfg.out_dir / IMPORTANCE_FILE, "w", encoding="utf-8", newline="") as fh:
        fh.write("rank,feature,weight\n")
        for rank, (name, weight) in enumerate(ranked[:15], start=1):
            quoted = f'"{name}"' if "," in name else name
            fh.write(f"{rank},{quoted},{weight!r}\n")

    for hist in report.histograms:
        fname = histogram_file_name(hist.feature)
        artifacts.append(fname)
        with open(cfg.out_dir / fname, "w", encoding="utf-8", newline="") as fh:
            fh.write("feature,bin_low,bin_high,count_real,count_synth\n")
            quoted = f'"{hist.feature}"' if "," in hist.feature else hist.feature
            for k in range(len(hist.count_real)):
                fh.write(
                    f"{quoted},{hist.edges[k]!r},{hist.edges[k + 1]!r},"
                    f"{hist.count_real[k]},{hist.count_synth[k]}\n"
                )

    write_manifest(
        cfg, "evaluate", artifacts, {"total": wall_ms},
        {"rows": data.n_rows, "features": len(names)},
    )
    print(
        f"auc={report.auc:.4f} (reference {REFERENCE_AUC:.2f})  "
        f"rmse_means={report.rmse_means:.4f} (reference {REFERENCE_RMSE_MEANS:.2f})  "
        f"rmse_hist={report.rmse_hist:.4f}"
    )
    print(f"wrote {REPORT_JSON_FILE} and {len(report.histograms)} histogram CSVs")
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    report_path = _require(cfg.out_dir / REPORT_JSON_FILE, "evaluate")
    data = load_dataset(_require(cfg.out_dir / DATASET_FILE, "ingest"))
    report = QualityReport.from_json(report_path.read_text(encoding="utf-8"))
    t0 = time.perf_counter()

    # fold in the manifests' reproducible fields (fingerprints, artifact
    # lists); wall-clock timings stay out so the report is byte-stable
    manifests = {}
    for path in sorted(cfg.out_dir.glob("*_manifest.json")):
        if path.name == "report_manifest.json":
            continue
        doc = json.loads(path.read_text(encoding="utf-8"))
        manifests[doc.get("command", path.stem)] = doc

    names = data.schema.feature_names()
    order = {n: i for i, n in enumerate(names)}
    ranked = sorted(report.importances.items(), key=lambda kv: (-kv[1], order[kv[0]]))

    lines = [
        "# Synthetic flow quality report",
        "",
        f"- dataset kind: {cfg.dataset}",
        f"- selected labels: {', '.join(cfg.labels)}",
        f"- seed: {cfg.seed}",
        f"- real rows: {report.n_real}, synthetic rows: {report.n_synth}, "
        f"features: {len(names)}",
        "",
        "## Quality metrics",
        "",
        "Reference values are the published quality targets for this "
        "pipeline; they are reference points, not pass thresholds.",
        "",
        "| metric | measured | reference |",
        "|---|---|---|",
        f"| rmse_means | {report.rmse_means:.4f} | {REFERENCE_RMSE_MEANS:.2f} |",
        f"| auc | {report.auc:.4f} | {REFERENCE_AUC:.2f} |",
        f"| rmse_hist | {report.rmse_hist:.4f} | - |",
        "",
        "An AUC near 0.5 means the evaluator cannot tell synthetic rows "
        "from real ones.",
        "",
        "## Top features (evaluator split gain)",
        "",
        "| rank | feature | weight |",
        "|---|---|---|",
    ]
    for rank, (name, weight) in enumerate(ranked[:15], start=1):
        lines.append(f"| {rank} | {name} | {weight:.4f} |")
    lines += ["", "## Histograms", ""]
    for hist in report.histograms:
        lines.append(f"- {hist.feature}: `{histogram_file_name(hist.feature)}`")
    if "ingest" in manifests and manifests["ingest"].get("dataset_fingerprint"):
        fp = manifests["ingest"]["dataset_fingerprint"]
        lines += [
            "",
            "## Ingest fingerprint",
            "",
            f"- rows parsed: {fp.get('rows_parsed')}",
            f"- rows dropped (unparseable): {fp.get('rows_dropped')}",
            f"- rows matching the selected labels: {fp.get('rows_selected')}",
        ]
    artifact_names = sorted(
        {name for doc in manifests.values() for name in doc.get("artifacts", [])}
    )
    if artifact_names:
        lines += ["", "## Run artifacts", ""]
        lines += [f"- `{name}`" for name in artifact_names]
    text = "\n".join(lines) + "\n"

    _write_atomic(cfg.out_dir / REPORT_MD_FILE, text)
    wall_ms = (time.perf_counter() - t0) * 1000.0
    write_manifest(cfg, "report", [REPORT_MD_FILE], {"total": wall_ms})
    print(f"wrote {cfg.out_dir / REPORT_MD_FILE}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="synthflow",
        description="Train a GP-WGAN on attack flow features, generate "
        "synthetic flows, and score their quality.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("ingest", "parse, clean, normalize, and cache the input CSVs"),
        ("train", "train the GAN on the ingested cache"),
        ("generate", "sample synthetic rows from a trained model"),
        ("evaluate", "score synthetic data against the real cache"),
        ("report", "merge evaluation outputs into one readable report"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="override the output directory")
        if name == "generate":
            p.add_argument(
                "--count", type=int, default=1000,
                help="number of synthetic rows (default 1000)",
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, args.seed, args.out)
        if args.command != "ingest":
            if not cfg.out_dir.exists():
                raise MissingArtifactError(
                    f"output directory {cfg.out_dir} not found; run 'ingest' first"
                )
        if args.command == "ingest":
            return cmd_ingest(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "generate":
            return cmd_generate(cfg, args.count)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        return cmd_report(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
