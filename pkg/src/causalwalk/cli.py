"""Command-line harness: data generation, training, evaluation, ablations, SCM checks.

Every command echoes its resolved arguments to ``<out-dir>/config.json``.
Failures print one JSON line ``{"error": ..., "command": ...}`` to stderr and
exit with status 2.

CSV schemas
-----------
train_metrics.csv     epoch, L_walk, L_causal, L_total, dev_accuracy
metrics.csv           split, mode, n, accuracy, precision_<LABEL>..., recall_<LABEL>...
ablation_runs.csv     variant, mode, evidence_supervision, seed, split, accuracy, row_entropy
ablation_summary.csv  variant, split, n_seeds, accuracy_mean, accuracy_std, row_entropy_mean, row_entropy_std
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .featurize import FeaturizerConfig
from .graph import LABELS, as_graphs
from .model import ModelConfig
from .scm import frontdoor_estimate, interventional, load_scm, verify
from .synth import SPLITS, GeneratorConfig, generate, read_split, write_dataset
from .training import MODES, TrainConfig, evaluate, mean_row_entropy, train

__all__ = ["main", "build_parser", "ABLATION_VARIANTS"]

log = logging.getLogger("causalwalk")

TRAIN_HEADER = ["epoch", "L_walk", "L_causal", "L_total", "dev_accuracy"]
ABLATION_VARIANTS = {
    "causal": ("causal", False),
    "walk-only": ("walk-only", False),
    "causal+evidence": ("causal", True),
    "walk-only+evidence": ("walk-only", True),
}
EVAL_SPLITS = ("dev", "test_id", "test_adversarial", "test_symmetric")


class CliError(Exception):
    pass


class _JsonErrorParser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------- helpers


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: list[str], rows: list[dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(row.get(h)) for h in header])


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out: Path, args) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["version"] = __version__
    (out / "config.json").write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _require_dir(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise CliError(f"data directory {str(p)!r} does not exist")
    return p


def _load_split(data_dir: Path, name: str) -> list[dict]:
    path = data_dir / f"{name}.jsonl"
    if not path.exists():
        raise CliError(f"split file {str(path)!r} not found")
    return read_split(path)


def _labels_of(records: list[dict]) -> tuple[str, ...]:
    present = {r["label"] for r in records}
    unknown = present - set(LABELS)
    if unknown:
        raise CliError(f"unknown labels {sorted(unknown)}")
    labels = tuple(l for l in LABELS if l in present)
    if len(labels) < 2:
        raise CliError(f"training data needs at least two labels, found {list(labels)}")
    return labels


def _model_config(args, labels) -> ModelConfig:
    return ModelConfig(
        feature_dim=args.feature_dim,
        hidden_dim=args.hidden_dim,
        layers=args.layers,
        beam_width=args.beam_width,
        max_len=args.max_len,
        alpha=args.alpha,
        n_clusters=args.n_clusters,
        labels=labels,
    )


def _train_config(args, mode=None, evidence=None, seed=None) -> TrainConfig:
    return TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch_size=args.batch_size,
        seed=args.seed if seed is None else seed,
        mode=args.mode if mode is None else mode,
        evidence_supervision=args.evidence_supervision if evidence is None else evidence,
    )


def _metrics_row(split: str, result, labels) -> dict:
    row = {"split": split, "mode": result.mode, "n": result.n, "accuracy": result.accuracy}
    for label in labels:
        row[f"precision_{label}"] = result.precision[label]
        row[f"recall_{label}"] = result.recall[label]
    return row


def _metrics_header(labels) -> list[str]:
    return (
        ["split", "mode", "n", "accuracy"]
        + [f"precision_{l}" for l in labels]
        + [f"recall_{l}" for l in labels]
    )


# ---------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    config = GeneratorConfig(
        n_train=args.n_train,
        n_dev=args.n_dev,
        n_test=args.n_test,
        chain_length=args.chain_length,
        n_distractors=args.n_distractors,
        classes=args.classes,
        bias_strength=args.bias,
        shortcut_rate=args.shortcut_rate,
        seed=args.seed,
    )
    out = _out_dir(args)
    write_dataset(generate(config), out)
    _echo_config(out, args)
    print(json.dumps({"out_dir": str(out), "splits": list(SPLITS)}))
    return 0


def cmd_train(args) -> int:
    data_dir = _require_dir(args.data_dir)
    train_records = _load_split(data_dir, "train")
    if not train_records:
        raise CliError("empty dataset")
    dev_path = data_dir / "dev.jsonl"
    dev_records = read_split(dev_path) if dev_path.exists() else []
    labels = _labels_of(train_records)
    model_config = _model_config(args, labels)
    train_config = _train_config(args)
    feat = FeaturizerConfig(dim=args.feature_dim)
    graphs = as_graphs(train_records, feat)
    dev = as_graphs(dev_records, feat) if dev_records else None
    out = _out_dir(args)
    _echo_config(out, args)
    history = []

    def on_epoch(m):
        history.append(asdict(m))
        log.info("epoch %d L_total=%.6f dev=%s", m.epoch, m.L_total, m.dev_accuracy)

    result = train(graphs, model_config, train_config, dev=dev, on_epoch=on_epoch)
    _write_csv(out / "train_metrics.csv", TRAIN_HEADER, history)
    ckpt = Path(args.checkpoint) if args.checkpoint else out / "model.ckpt"
    save_checkpoint(ckpt, result.params, result.dictionary, model_config, train_config, feat)
    final = history[-1] if history else {}
    print(json.dumps({"checkpoint": str(ckpt), "epochs": len(history), "dev_accuracy": final.get("dev_accuracy")}))
    return 0


def cmd_eval(args) -> int:
    data_dir = _require_dir(args.data_dir)
    ck = load_checkpoint(args.checkpoint)
    default_mode = ck.train_config.mode if ck.train_config else "causal"
    modes = list(MODES) if args.mode == "both" else [args.mode or default_mode]
    splits = args.splits or [s for s in EVAL_SPLITS if (data_dir / f"{s}.jsonl").exists()]
    if not splits:
        raise CliError("no evaluation splits found")
    out = _out_dir(args)
    _echo_config(out, args)
    rows = []
    for split in splits:
        records = _load_split(data_dir, split)
        if not records:
            raise CliError("empty dataset")
        graphs = as_graphs(records, ck.featurizer)
        for mode in modes:
            res = evaluate(graphs, ck.params, ck.dictionary, ck.model_config, mode=mode, n_jobs=args.n_jobs)
            rows.append(_metrics_row(split, res, ck.model_config.labels))
    _write_csv(out / "metrics.csv", _metrics_header(ck.model_config.labels), rows)
    print(json.dumps({r["split"] + "/" + r["mode"]: r["accuracy"] for r in rows}))
    return 0


def _mean_std(values) -> tuple[float, float]:
    a = np.asarray(values, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if len(a) > 1 else 0.0


def run_ablation(records: dict[str, list[dict]], args, variants, seeds, eval_splits) -> list[dict]:
    """Train every variant on every seed; one row per (variant, seed, split)."""
    labels = _labels_of(records["train"])
    model_config = _model_config(args, labels)
    feat = FeaturizerConfig(dim=args.feature_dim)
    graphs = {name: as_graphs(recs, feat) for name, recs in records.items()}
    rows = []
    for variant in variants:
        mode, evidence = ABLATION_VARIANTS[variant]
        for seed in seeds:
            tc = _train_config(args, mode=mode, evidence=evidence, seed=seed)
            res = train(graphs["train"], model_config, tc)
            for split in eval_splits:
                ev = evaluate(graphs[split], res.params, res.dictionary, model_config, mode=mode)
                ent = mean_row_entropy(graphs[split], res.params, model_config)
                rows.append({
                    "variant": variant, "mode": mode, "evidence_supervision": int(evidence),
                    "seed": seed, "split": split, "accuracy": ev.accuracy, "row_entropy": ent,
                })
            log.info("ablation %s seed %d done", variant, seed)
    return rows


def summarize_ablation(rows: list[dict]) -> list[dict]:
    out = []
    keys = dict.fromkeys((r["variant"], r["split"]) for r in rows)
    for variant, split in keys:
        sel = [r for r in rows if r["variant"] == variant and r["split"] == split]
        acc_m, acc_s = _mean_std([r["accuracy"] for r in sel])
        ent_m, ent_s = _mean_std([r["row_entropy"] for r in sel])
        out.append({
            "variant": variant, "split": split, "n_seeds": len(sel),
            "accuracy_mean": acc_m, "accuracy_std": acc_s,
            "row_entropy_mean": ent_m, "row_entropy_std": ent_s,
        })
    return out


def cmd_ablate(args) -> int:
    data_dir = _require_dir(args.data_dir)
    eval_splits = args.splits or [s for s in EVAL_SPLITS[1:] if (data_dir / f"{s}.jsonl").exists()]
    records = {name: _load_split(data_dir, name) for name in ["train", *eval_splits]}
    if any(not recs for recs in records.values()):
        raise CliError("empty dataset")
    variants = args.variants or list(ABLATION_VARIANTS)
    unknown = set(variants) - set(ABLATION_VARIANTS)
    if unknown:
        raise CliError(f"unknown variants {sorted(unknown)}; choose from {list(ABLATION_VARIANTS)}")
    seeds = [args.seed + i for i in range(args.n_seeds)]
    out = _out_dir(args)
    _echo_config(out, args)
    rows = run_ablation(records, args, variants, seeds, eval_splits)
    summary = summarize_ablation(rows)
    _write_csv(
        out / "ablation_runs.csv",
        ["variant", "mode", "evidence_supervision", "seed", "split", "accuracy", "row_entropy"],
        rows,
    )
    _write_csv(
        out / "ablation_summary.csv",
        ["variant", "split", "n_seeds", "accuracy_mean", "accuracy_std", "row_entropy_mean", "row_entropy_std"],
        summary,
    )
    for r in summary:
        print(f"{r['variant']:<20} {r['split']:<18} acc {r['accuracy_mean']:.4f} ± {r['accuracy_std']:.4f}"
              f"  entropy {r['row_entropy_mean']:.4f} ± {r['row_entropy_std']:.4f}")
    return 0


def cmd_scm_verify(args) -> int:
    report = verify(args.n_scms, args.seed)
    if args.scm_file:
        scm = load_scm(args.scm_file)
        report["file_deviation"] = max(
            float(np.abs(frontdoor_estimate(scm, g) - interventional(scm, g)).max())
            for g in range(scm.cardinalities[1])
        )
    worst = max(report["max_frontdoor_deviation"], report.get("file_deviation", 0.0))
    report["passed"] = bool(worst < args.tolerance)
    if args.out_dir:
        out = _out_dir(args)
        _echo_config(out, args)
        (out / "scm_verify.json").write_text(json.dumps(report, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(report, sort_keys=True))
    return 0 if report["passed"] else 1


# ---------------------------------------------------------------- parser


def _add_model_args(p) -> None:
    p.add_argument("--feature-dim", type=int, default=256)
    p.add_argument("--hidden-dim", type=int, default=64, help="node representation width d")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--beam-width", type=int, default=3)
    p.add_argument("--max-len", type=int, default=5, help="maximum number of hops per path")
    p.add_argument("--alpha", type=float, default=0.1, help="intervention weight")
    p.add_argument("--n-clusters", type=int, default=5, help="dictionary entries per class")
    p.add_argument("--learning-rate", type=float, default=3e-3)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = _JsonErrorParser(prog="causalwalk", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"causalwalk {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_JsonErrorParser)

    p = sub.add_parser("gen-data", help="write the five synthetic splits")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-train", type=int, default=500)
    p.add_argument("--n-dev", type=int, default=100)
    p.add_argument("--n-test", type=int, default=200)
    p.add_argument("--chain-length", type=int, default=3)
    p.add_argument("--n-distractors", type=int, default=8)
    p.add_argument("--classes", type=int, choices=(2, 3), default=2)
    p.add_argument("--bias", type=float, default=0.0, help="shortcut agreement probability")
    p.add_argument("--shortcut-rate", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--checkpoint", help="checkpoint path (default <out-dir>/model.ckpt)")
    p.add_argument("--mode", choices=MODES, default="causal")
    p.add_argument("--evidence-supervision", action="store_true")
    _add_model_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on dataset splits")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--mode", choices=(*MODES, "both"), help="default: the mode the checkpoint was trained in")
    p.add_argument("--splits", nargs="+")
    p.add_argument("--n-jobs", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="compare training variants over several seeds")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-seeds", type=int, default=5)
    p.add_argument("--variants", nargs="+", help=f"subset of {list(ABLATION_VARIANTS)}")
    p.add_argument("--splits", nargs="+")
    _add_model_args(p)
    p.set_defaults(func=cmd_ablate, mode="causal", evidence_supervision=False)

    p = sub.add_parser("scm-verify", help="check the front-door identity on random SCMs")
    p.add_argument("--n-scms", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scm-file", help="also verify one SCM in the text format")
    p.add_argument("--tolerance", type=float, default=1e-12)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_scm_verify)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    parser = build_parser()
    command = next((a for a in argv if not a.startswith("-")), None)
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(asctime)s %(name)s %(message)s",
        )
        return args.func(args)
    except (CliError, ValueError, OSError, KeyError, TypeError) as exc:
        msg = str(exc) if not isinstance(exc, KeyError) else f"missing field {exc}"
        print(json.dumps({"error": " ".join(msg.split()), "command": command}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
