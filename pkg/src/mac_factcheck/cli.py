"""Command-line interface: ``mac-factcheck <command> ...``.

Exit codes: 0 success, 2 configuration or usage error, 3 data error,
4 numerical failure during training.

Config files are flat ``key = value`` text, one key per line, ``#`` starts a
comment. Keys are the field names of :class:`MacConfig` and
:class:`TrainConfig`; ``--set key=value`` flags override the file.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import io
import itertools
import json
import logging
import sys
import typing
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import (SCHEMAS, ClaimRecord, Evidence, corpus_stats, dumps_record, encode_all,
                   encode_instance, load_corpus, load_glove, merge_labels, normalize_text,
                   parse_record)
from .errors import (CheckpointError, ConfigError, DataError, MetricUndefinedError,
                     NonFiniteGradientError)
from .metrics import classification_metrics, roc_auc, wilcoxon_one_sided
from .model import MacConfig, forward
from .training import TrainConfig, default_workers, run_cv

log = logging.getLogger("mac_factcheck")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

SCHEMA_DEFAULTS = {
    "snopes": dict(word_heads=5, doc_heads=2, hidden_size=300, speaker_dim=128,
                   publisher_dim=128, use_speakers=False, use_publishers=True),
    "politifact": dict(word_heads=3, doc_heads=1, hidden_size=300, speaker_dim=128,
                       publisher_dim=128, use_speakers=True, use_publishers=True),
}

ABLATION_MODES = {
    "full": dict(word_attention="multi_head", doc_attention="multi_head"),
    "word_only": dict(word_attention="multi_head", doc_attention="mean_pool"),
    "evidence_only": dict(word_attention="mean_pool", doc_attention="multi_head"),
}
FEATURE_SETS = {
    "text": dict(use_speakers=False, use_publishers=False),
    "text+pub": dict(use_speakers=False, use_publishers=True),
    "text+spk": dict(use_speakers=True, use_publishers=False),
    "text+pub+spk": dict(use_speakers=True, use_publishers=True),
}


class UsageError(ConfigError):
    pass


# ------------------------------------------------------------------ config

def _field_types(cls) -> dict[str, type]:
    hints = typing.get_type_hints(cls)
    return {f.name: hints[f.name] for f in dataclasses.fields(cls)}


def _coerce(key: str, raw: str, kind) -> object:
    raw = raw.strip()
    args = typing.get_args(kind)
    if args and type(None) in args:
        if raw.lower() in ("none", "null", ""):
            return None
        kind = next(a for a in args if a is not type(None))
    try:
        if kind is bool:
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"config key {key!r}: cannot read {raw!r} as {kind.__name__}") from None


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve_config(schema: str, config_path: str | None = None,
                   overrides: list[str] | None = None,
                   base: dict | None = None) -> tuple[MacConfig, TrainConfig]:
    """Schema defaults, then the config file, then ``--set`` overrides."""
    raw: dict[str, object] = dict(SCHEMA_DEFAULTS[schema])
    raw["workers"] = default_workers()
    if base:
        raw.update(base)
    if config_path:
        try:
            text = Path(config_path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {config_path}: {exc.strerror}") from None
        raw.update(parse_config_text(text))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        raw[key.strip()] = value
    model_types = _field_types(MacConfig)
    train_types = _field_types(TrainConfig)
    model_kw, train_kw = {}, {}
    for key, value in raw.items():
        if key in model_types:
            model_kw[key] = _coerce(key, value, model_types[key]) if isinstance(value, str) else value
        elif key in train_types:
            train_kw[key] = _coerce(key, value, train_types[key]) if isinstance(value, str) else value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        cfg, tcfg = MacConfig(**model_kw), TrainConfig(**train_kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    if schema == "snopes" and cfg.use_speakers:
        raise ConfigError("the snopes schema has no speakers; use_speakers must be false")
    return cfg, tcfg


# ----------------------------------------------------------------- helpers

def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _load(path: str, schema: str):
    if not Path(path).is_file():
        raise DataError(f"corpus file not found: {path}")
    return load_corpus(path, schema)


def _load_glove(path: str | None, dim: int):
    if not path:
        return None
    vectors, report = load_glove(path, dim)
    log.info("GloVe: %d vectors, %d malformed lines, %d duplicates",
             report.loaded, report.malformed, report.duplicates)
    return vectors


def _cv(records, cfg, tcfg, seed, glove, log_path: Path | None):
    rows = []
    result = run_cv(records, cfg, tcfg, seed, glove, rows.append)
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    return result


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    base = None
    if args.from_manifest:
        prior = json.loads(Path(args.from_manifest).read_text(encoding="utf-8"))
        base = {**prior["config"], **prior["train_config"]}
        args.schema = args.schema or prior["schema"]
        args.seed = prior["seed"] if args.seed is None else args.seed
    if not args.schema:
        raise UsageError("--schema is required")
    seed = 0 if args.seed is None else args.seed
    cfg, tcfg = resolve_config(args.schema, args.config, args.set, base)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = _now()
    records, stats = _load(args.corpus, args.schema)
    glove = _load_glove(args.glove, cfg.embed_dim)
    result = _cv(records, cfg, tcfg, seed, glove, out / "train_log.jsonl")

    outputs = ["report.json", "train_log.jsonl"]
    for fold in result.folds:
        name = f"fold_{fold.fold}"
        save_checkpoint(Checkpoint(fold.params, fold.cfg, fold.vocabs, args.schema, fold.seed,
                                   tcfg.to_dict(), fold.history,
                                   {"fold": fold.fold, "best_epoch": fold.best_epoch}),
                        out / name)
        outputs.append(name)
    report = {"schema": args.schema, "corpus_stats": stats.to_dict(), **result.to_dict()}
    _write_json(report, out / "report.json")
    _write_json({
        "command": "train",
        "argv": sys.argv[1:],
        "schema": args.schema,
        "seed": seed,
        "config": cfg.to_dict(),
        "train_config": tcfg.to_dict(),
        "corpus": {"path": str(args.corpus), "sha256": _sha256_file(args.corpus)},
        "glove": {"path": str(args.glove), "sha256": _sha256_file(args.glove)} if args.glove else None,
        "started_at": started,
        "finished_at": _now(),
        "outputs": outputs,
    }, out / "manifest.json")
    mean = result.aggregate.mean()
    print(f"mean AUC {mean['auc']:.5f}  F1 macro {mean['f1_macro']:.5f}  "
          f"F1 micro {mean['f1_micro']:.5f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    records, _ = _load(args.corpus, ckpt.schema)
    instances = encode_all(records, ckpt.vocabs, ckpt.cfg)
    preds = [forward(ckpt.params, ckpt.cfg, inst).y_hat for inst in instances]
    labels = [inst.label for inst in instances]
    report = classification_metrics(preds, labels)
    try:
        report.auc = roc_auc(preds, labels)
    except MetricUndefinedError:
        report.auc = None
    out = {"checkpoint_blob_sha256": json.loads(
               (Path(args.checkpoint) / "manifest.json").read_text())["blob_sha256"],
           "corpus_sha256": _sha256_file(args.corpus),
           "n": len(instances), **report.to_dict()}
    _write_json(out, Path(args.out))
    return EXIT_OK


def _variant_name(mode: str, features: str) -> str:
    return f"{mode}/{features}"


def cmd_ablate(args) -> int:
    for feat in args.features:
        if args.schema == "snopes" and "spk" in feat:
            raise UsageError(f"feature set {feat!r} needs speakers, which snopes does not have")
    base_cfg, tcfg = resolve_config(args.schema, args.config, args.set)
    records, _ = _load(args.corpus, args.schema)
    glove = _load_glove(args.glove, base_cfg.embed_dim)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    variants = {}
    for mode, feat in itertools.product(args.mode, args.features):
        cfg = base_cfg.replace(**ABLATION_MODES[mode], **FEATURE_SETS[feat])
        name = _variant_name(mode, feat)
        res = _cv(records, cfg, tcfg, args.seed, glove, None)
        agg = res.aggregate
        variants[name] = {"mode": mode, "features": feat,
                          "auc": agg.metric("auc").tolist(),
                          "f1_macro": agg.metric("f1_macro").tolist(),
                          "mean": agg.mean()}

    comparisons = []
    for a, b in itertools.permutations(variants, 2):
        row = {"a": a, "b": b}
        for metric in ("auc", "f1_macro"):
            try:
                row[f"p_{metric}"] = wilcoxon_one_sided(variants[a][metric],
                                                        variants[b][metric]).p_value
            except ValueError as exc:  # too few pairs, or all differences zero
                row[f"p_{metric}"] = None
                row[f"note_{metric}"] = str(exc)
        comparisons.append(row)
    _write_json({"schema": args.schema, "seed": args.seed, "variants": variants,
                 "comparisons": comparisons, "alternative": "a > b"}, out / "ablation.json")

    print(f"{'variant':<28}{'AUC':>10}{'F1 macro':>10}")
    for name, v in variants.items():
        print(f"{name:<28}{v['mean']['auc']:>10.5f}{v['mean']['f1_macro']:>10.5f}")
    return EXIT_OK


def _grid(text: str) -> list[int]:
    try:
        values = sorted({int(v) for v in text.split(",") if v.strip()})
    except ValueError:
        raise UsageError(f"bad head grid {text!r}") from None
    if not values or not set(values) <= set(range(1, 6)):
        raise UsageError(f"head grid {text!r} must be a non-empty subset of 1..5")
    return values


def cmd_sweep(args) -> int:
    h1_grid, h2_grid = _grid(args.h1_grid), _grid(args.h2_grid)
    base_cfg, tcfg = resolve_config(args.schema, args.config, args.set)
    records, _ = _load(args.corpus, args.schema)
    glove = _load_glove(args.glove, base_cfg.embed_dim)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    for h1, h2 in itertools.product(h1_grid, h2_grid):
        res = _cv(records, base_cfg.replace(word_heads=h1, doc_heads=h2), tcfg, args.seed,
                  glove, None)
        aucs = res.aggregate.metric("auc")
        cells.append({"h1": h1, "h2": h2, "fold_auc": aucs.tolist(),
                      "mean_auc": float(aucs.mean()), "std_auc": float(aucs.std())})
    _write_json({"schema": args.schema, "seed": args.seed, "cells": cells}, out / "sweep.json")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["h1", "h2", "mean_auc", "std_auc"])
    for c in cells:
        writer.writerow([c["h1"], c["h2"], repr(c["mean_auc"]), repr(c["std_auc"])])
    (out / "sweep.csv").write_text(buf.getvalue(), encoding="utf-8")
    return EXIT_OK


def explain_claim(ckpt: Checkpoint, record: ClaimRecord) -> dict:
    """Attention weights of one claim as a JSON-ready dict."""
    inst = encode_instance(record, ckpt.vocabs, ckpt.cfg)
    pred = forward(ckpt.params, ckpt.cfg, inst, want_trace=True)
    trace = pred.trace
    documents = []
    for slot in np.flatnonzero(inst.doc_mask):
        weights = trace.word_weights[slot]
        tokens = inst.doc_tokens[slot]
        heads = [[[tok, float(weights[i, h])] for i, tok in enumerate(tokens)]
                 for h in range(weights.shape[1])]
        documents.append({"slot": int(slot), "publisher": inst.publishers[slot],
                          "tokens": list(tokens), "word_attention": heads})
    return {
        "claim_id": record.claim_id,
        "claim_tokens": list(inst.claim_tokens),
        "label": record.label,
        "y_hat": pred.y_hat,
        "word_attention_mode": ckpt.cfg.word_attention,
        "doc_attention_mode": ckpt.cfg.doc_attention,
        "documents": documents,
        "doc_attention": trace.doc_weights[inst.doc_mask].tolist(),
    }


def cmd_explain(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    records, _ = _load(args.corpus, ckpt.schema)
    match = [r for r in records if r.claim_id == args.claim_id]
    if not match:
        raise DataError(f"claim {args.claim_id!r} not found in {args.corpus}")
    _write_json(explain_claim(ckpt, match[0]), Path(args.out))
    return EXIT_OK


TSV_COLUMNS = ("label", "claim_id", "claim_text", "claim_source", "evidence", "evidence_source")


def convert_tsv(lines, schema: str) -> tuple[list[ClaimRecord], int]:
    """Group ``label, claim_id, claim_text, claim_source, evidence, evidence_source`` rows by claim.

    Returns the records in first-appearance order and the number of evidence
    rows whose publisher was missing.
    """
    grouped: dict[str, dict] = {}
    missing_publishers = 0
    for lineno, line in enumerate(lines, start=1):
        line = line.rstrip("\r\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if lineno == 1 and fields[0].strip().lower() in ("cred_label", "label"):
            continue
        if len(fields) < 5:
            raise DataError(f"line {lineno}: expected {len(TSV_COLUMNS)} tab-separated fields, "
                            f"got {len(fields)}")
        fields += [""] * (6 - len(fields))
        label, claim_id, text, source, evidence, publisher = fields[:6]
        merge_labels(label, schema)
        publisher = publisher.strip()
        if not publisher:
            publisher = "unknown"
            missing_publishers += 1
        entry = grouped.setdefault(claim_id, {
            "claim_id": claim_id, "claim_text": normalize_text(text),
            "speaker": (normalize_text(source) or None) if schema == "politifact" else None,
            "label": label.strip(), "evidence": []})
        entry["evidence"].append({"text": normalize_text(evidence), "publisher": publisher})
    return [parse_record(obj, schema) for obj in grouped.values()], missing_publishers


def cmd_convert(args) -> int:
    path = Path(args.tsv_in)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    text = path.read_text(encoding="utf-8")
    first = next((ln for ln in text.splitlines() if ln.strip()), "")
    if first.lstrip().startswith("{"):
        records = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if line.strip():
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"line {lineno}: invalid JSON ({exc.msg})") from None
                records.append(parse_record(obj, args.schema, lineno))
        missing = 0
    else:
        records, missing = convert_tsv(text.splitlines(), args.schema)
    with open(args.jsonl_out, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(dumps_record(r) + "\n")
    _, stats = load_corpus(args.jsonl_out, args.schema)
    print(json.dumps({"claims": len(records), "missing_publishers": missing,
                      **stats.to_dict()}, indent=2, sort_keys=True))
    return EXIT_OK


# -------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mac-factcheck", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, corpus=True, schema_required=True):
        if corpus:
            p.add_argument("--corpus", required=True)
        p.add_argument("--schema", choices=SCHEMAS, required=schema_required)
        p.add_argument("--config", help="flat key = value config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
        p.add_argument("--glove", help="GloVe text file for word-table initialisation")

    p = sub.add_parser("train", help="cross-validated training run")
    common(p, schema_required=False)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--from-manifest", help="reuse config, schema and seed of an earlier run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="attention and metadata ablations")
    common(p)
    p.add_argument("--mode", nargs="+", choices=sorted(ABLATION_MODES), default=["full"])
    p.add_argument("--features", nargs="+", choices=sorted(FEATURE_SETS), default=["text+pub"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep", help="grid over word/document head counts")
    common(p)
    p.add_argument("--h1-grid", default="1,2,3,4,5")
    p.add_argument("--h2-grid", default="1,2,3,4,5")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("explain", help="export attention weights for one claim")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--claim-id", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("convert", help="convert the released TSV layout to canonical JSONL")
    p.add_argument("--tsv-in", required=True)
    p.add_argument("--schema", choices=SCHEMAS, required=True)
    p.add_argument("--jsonl-out", required=True)
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NonFiniteGradientError, FloatingPointError) as exc:
        print(f"error: training aborted: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
