"""Operator surface: generate anchors, synthesize data, train, evaluate,
predict and inspect artifacts.

Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric
failure. Progress and results are printed as one JSON object per line so
scripts can scrape them without a custom parser. KPRUNING_SEED overrides
the default --seed of every subcommand.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .anchors import (
    CLASSIFICATION_TEMPLATE,
    REGRESSION_TEMPLATE,
    AnchorSpec,
    PromptTemplate,
    expand_prompts,
    load_anchor_file,
    pseudo_embed,
    save_anchor_file,
)
from .datasets import (
    DatasetSplit,
    TimeSeriesRecord,
    Window,
    cmapss_ingest,
    load_columnar,
    sliding_window,
    synth_write,
)
from .exceptions import DataError, KPError, UsageError
from .training import Checkpoint, evaluate, load_config, predict_windows, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are exit 1 here
        raise UsageError(message)


def _default_seed() -> int:
    raw = os.environ.get("KPRUNING_SEED", "0")
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"KPRUNING_SEED must be an integer, got {raw!r}") from None


def _emit(obj: dict) -> None:
    print(json.dumps(obj, ensure_ascii=False))


def build_parser() -> _Parser:
    parser = _Parser(prog="kpruning", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-anchors",
                       help="expand a prompt template and write pseudo anchor embeddings")
    p.add_argument("--template", default=None,
                   help="prompt pattern with one {placeholder}; defaults per selector")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--classes", default=None, help="comma-separated class names")
    group.add_argument("--range", dest="value_range", default=None, metavar="MIN:MAX:STEP",
                       help="numeric grid, e.g. 0:125:1")
    p.add_argument("--mode", choices=["pseudo-gaussian", "pseudo-structured"], default=None,
                   help="embedding generator (default: structured for --range, gaussian for --classes)")
    p.add_argument("--dim", type=int, default=512, help="embedding dimension")
    p.add_argument("--seed", type=int, default=None, help="generator seed")
    p.add_argument("--out", required=True, help="output anchor file")

    p = sub.add_parser("synth-data",
                       help="write a deterministic synthetic dataset in columnar CSV")
    p.add_argument("--kind", choices=["regression", "classification"], required=True)
    p.add_argument("--units", type=int, default=200, help="units (regression)")
    p.add_argument("--n-classes", type=int, default=4, help="classes (classification)")
    p.add_argument("--samples-per-class", type=int, default=120)
    p.add_argument("--noise", type=float, default=None, help="noise level (default per generator)")
    p.add_argument("--length", type=int, default=None, help="window length override")
    p.add_argument("--r-max", type=float, default=125.0, help="target cap (regression)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("train",
                       help="train a checkpoint from a config, a dataset and an anchor file")
    p.add_argument("--config", required=True, help="key = value config file")
    p.add_argument("--data", required=True, help="columnar CSV or run-to-failure table")
    p.add_argument("--anchors", required=True, help="anchor interchange file")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--format", choices=["auto", "columnar", "cmapss"], default="auto",
                   help="input table format (auto: .txt means cmapss)")

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="columnar CSV with a split column")
    p.add_argument("--split", choices=["train", "val", "test"], default="test")
    p.add_argument("--theta", type=float, default=None, help="voting threshold override")
    p.add_argument("--eval-windows", choices=["last", "all"], default=None)
    p.add_argument("--format", choices=["auto", "columnar", "cmapss"], default="auto")

    p = sub.add_parser("predict",
                       help="one prediction per window of the input series")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True, help="CSV of channel columns (optional unit/step)")
    p.add_argument("--theta", type=float, default=None, help="voting threshold override")
    p.add_argument("--explain", action="store_true",
                   help="also print the sorted voting set per window")

    p = sub.add_parser("inspect",
                       help="summarize an anchor file or a checkpoint")
    p.add_argument("--path", required=True)
    return parser


def _parse_range(raw: str) -> tuple[float, float, float]:
    parts = raw.split(":")
    if len(parts) != 3:
        raise UsageError(f"--range wants MIN:MAX:STEP, got {raw!r}")
    try:
        lo, hi, step = (float(x) for x in parts)
    except ValueError:
        raise UsageError(f"--range parts must be numbers, got {raw!r}") from None
    return lo, hi, step


def cmd_gen_anchors(args) -> int:
    if (args.classes is None) == (args.value_range is None):
        raise UsageError("give exactly one of --classes or --range")
    seed = args.seed if args.seed is not None else _default_seed()
    if args.classes is not None:
        names = tuple(s.strip() for s in args.classes.split(",") if s.strip())
        spec = AnchorSpec(class_names=names)
        template_text = args.template or CLASSIFICATION_TEMPLATE
        template = PromptTemplate(template_text, "classification")
        mode = args.mode or "pseudo-gaussian"
    else:
        spec = AnchorSpec(numeric_range=_parse_range(args.value_range))
        template_text = args.template or REGRESSION_TEMPLATE
        template = PromptTemplate(template_text, "regression")
        mode = args.mode or "pseudo-structured"
    if mode == "pseudo-gaussian":
        mode = "gaussian"
    elif mode == "pseudo-structured":
        mode = "structured"
    prompts = expand_prompts(template, spec)
    anchor_set = pseudo_embed(prompts, spec.payloads(), dim=args.dim, seed=seed,
                              mode=mode, template=template_text)
    save_anchor_file(anchor_set, args.out)
    _emit({"event": "anchors", "count": len(anchor_set), "dim": anchor_set.dim,
           "out": str(args.out)})
    return 0


def cmd_synth_data(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    kw = dict(n_units=args.units, n_classes=args.n_classes,
              samples_per_class=args.samples_per_class, r_max=args.r_max)
    if args.noise is not None:
        kw["noise"] = args.noise
    if args.length is not None:
        kw["length"] = args.length
    meta = synth_write(seed, args.kind, args.out, **kw)
    _emit({"event": "synth-data", "kind": args.kind, "out": str(args.out),
           "length": meta["length"], "seed": seed})
    return 0


def _load_dataset(path: str, fmt: str, length: int, stride: int, r_max: float,
                  seed: int) -> DatasetSplit:
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    if fmt == "auto":
        fmt = "cmapss" if path.suffix == ".txt" else "columnar"
    if fmt == "columnar":
        return load_columnar(path, length=length, stride=stride)
    records = cmapss_ingest(path, r_max=r_max)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(records))
    n_val = max(1, int(round(0.15 * len(records))))
    val_ids = {records[i].unit_id for i in order[:n_val]}
    buckets: dict[str, list[Window]] = {"train": [], "val": [], "test": []}
    for rec in records:
        eff = min(length, rec.n_timesteps)
        windows = sliding_window(rec, eff, stride)
        buckets["val" if rec.unit_id in val_ids else "train"].extend(windows)
    test_path = Path(str(path).replace("train_", "test_"))
    rul_path = Path(str(path).replace("train_", "RUL_"))
    if test_path != path and test_path.exists() and rul_path.exists():
        for rec in cmapss_ingest(test_path, r_max=r_max, rul_path=rul_path):
            eff = min(length, rec.n_timesteps)
            buckets["test"].extend(sliding_window(rec, eff, stride))
    return DatasetSplit(train=buckets["train"], val=buckets["val"], test=buckets["test"],
                        meta={"length": length, "stride": stride, "r_max": r_max})


def cmd_train(args) -> int:
    config = load_config(args.config)
    anchors = load_anchor_file(args.anchors)
    if config.anchor_source is None:
        config.anchor_source = f"file:{args.anchors}"
    dataset = _load_dataset(args.data, args.format, config.window_length,
                            config.window_stride, config.r_max, config.seed)
    checkpoint = train(config, dataset, anchors,
                       on_epoch=lambda rec: _emit({"event": "epoch", **rec}))
    checkpoint.save(args.out)
    history_path = Path(str(args.out) + ".history.jsonl")
    history_path.write_text(
        "".join(json.dumps(rec) + "\n" for rec in checkpoint.history), encoding="utf-8"
    )
    _emit({"event": "trained", "out": str(args.out), "epochs_run": len(checkpoint.history),
           "task": checkpoint.task})
    return 0


def cmd_eval(args) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    dataset = _load_dataset(args.data, args.format, checkpoint.config.window_length,
                            checkpoint.config.window_stride, checkpoint.config.r_max,
                            checkpoint.config.seed)
    windows = getattr(dataset, args.split)
    if not windows:
        raise DataError(f"split {args.split!r} is empty")
    report = evaluate(checkpoint, windows, theta=args.theta, eval_windows=args.eval_windows)
    _emit({"event": "metrics", "split": args.split, **report.to_dict()})
    return 0


def _read_prediction_series(path: Path) -> list[TimeSeriesRecord]:
    """Channel columns with optional unit/step/split/target columns."""
    if not path.exists():
        raise DataError(f"input not found: {path}")
    with path.open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = list(reader)
    if not rows:
        raise DataError(f"{path}: no data rows")
    lowered = [h.strip().lower() for h in header]
    special = {name: lowered.index(name) for name in ("unit", "step", "split", "target", "label")
               if name in lowered}
    channel_idx = [i for i in range(len(header)) if i not in special.values()]
    if not channel_idx:
        raise DataError(f"{path}: no channel columns")
    series: dict[str, list[tuple[int, list[float]]]] = {}
    for n, r in enumerate(rows):
        unit = r[special["unit"]] if "unit" in special else "series"
        step = int(r[special["step"]]) if "step" in special else n
        try:
            series.setdefault(unit, []).append((step, [float(r[i]) for i in channel_idx]))
        except ValueError as e:
            raise DataError(f"{path}: row {n + 2}: channels must be numeric ({e})") from e
    records = []
    for unit, entries in series.items():
        entries.sort(key=lambda t: t[0])
        values = np.array([v for _, v in entries], dtype=np.float64).T
        records.append(TimeSeriesRecord(unit_id=unit, values=values,
                                        rul=np.zeros(values.shape[1])))
    return records


def cmd_predict(args) -> int:
    checkpoint = Checkpoint.load(args.checkpoint)
    records = _read_prediction_series(Path(args.input))
    length = checkpoint.config.window_length
    stride = checkpoint.config.window_stride
    windows: list[Window] = []
    for rec in records:
        if rec.n_timesteps < length:
            raise DataError(
                f"unit {rec.unit_id}: {rec.n_timesteps} timesteps < window length {length}"
            )
        windows.extend(sliding_window(rec, length, stride))
    preds = predict_windows(checkpoint, windows, theta=args.theta, explain=args.explain)
    for w, p in zip(windows, preds):
        line = {"unit": w.unit_id, "end_step": w.end_step, "prediction": p.value}
        if args.explain and p.voting_set is not None:
            line["voting_set"] = [{"weight": v, "value": n} for v, n in p.voting_set.members]
            line["voting_weight_sum"] = p.voting_set.weight_sum
        _emit(line)
    return 0


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    head = path.open("rb").read(len(b"KPCKPT1\n"))
    if head == b"KPCKPT1\n":
        ckpt = Checkpoint.load(path)
        from .training import count_params, estimate_macs

        _emit({
            "kind": "checkpoint",
            "task": ckpt.task,
            "anchors": len(ckpt.anchor_payloads),
            "anchor_dim": ckpt.anchor_dim,
            "n_params": count_params(ckpt),
            "est_macs": estimate_macs(ckpt),
            "epochs_run": len(ckpt.history),
            "config": ckpt.config.to_dict(),
        })
        return 0
    anchor_set = load_anchor_file(path)
    _emit({
        "kind": "anchors",
        "count": len(anchor_set),
        "dim": anchor_set.dim,
        "payload_kind": anchor_set.kind,
        "provenance": anchor_set.provenance,
        "source": anchor_set.source,
        "template": anchor_set.template,
    })
    return 0


_DISPATCH = {
    "gen-anchors": cmd_gen_anchors,
    "synth-data": cmd_synth_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "inspect": cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _DISPATCH[args.command](args)
    except KPError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except BrokenPipeError:
        # downstream consumer (head, grep -m, ...) closed the pipe: not an error
        try:
            sys.stdout.close()
        except Exception:
            pass
        return 0


if __name__ == "__main__":
    sys.exit(main())
