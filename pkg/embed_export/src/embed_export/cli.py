"""Command line for the anchor exporter; flags mirror the consumer's
gen-anchors subcommand plus --encoder.

Exit codes: 0 success, 1 usage error, 2 encoder/file failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .encoders import EncoderError
from .exporter import ExportJob, export
from .prompts import (
    CLASSIFICATION_TEMPLATE,
    REGRESSION_TEMPLATE,
    PromptError,
    PromptPlan,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise PromptError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="kp-embed-export", description=__doc__)
    parser.add_argument("--template", default=None,
                        help="prompt pattern with one {placeholder}; defaults per selector")
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--classes", default=None, help="comma-separated class names")
    group.add_argument("--range", dest="value_range", default=None, metavar="MIN:MAX:STEP",
                       help="numeric grid, e.g. 0:125:1")
    parser.add_argument("--encoder", default="clip:openai/clip-vit-base-patch32",
                        help="encoder identifier: clip:<id>, sbert:<id> or hashed:<dim>[:<seed>]")
    parser.add_argument("--out", required=True, help="anchor file to write")
    return parser


def _plan_from_args(args) -> PromptPlan:
    if (args.classes is None) == (args.value_range is None):
        raise PromptError("give exactly one of --classes or --range")
    if args.classes is not None:
        names = tuple(s.strip() for s in args.classes.split(",") if s.strip())
        return PromptPlan(template=args.template or CLASSIFICATION_TEMPLATE,
                          kind="classification", class_names=names)
    parts = args.value_range.split(":")
    if len(parts) != 3:
        raise PromptError(f"--range wants MIN:MAX:STEP, got {args.value_range!r}")
    try:
        lo, hi, step = (float(p) for p in parts)
    except ValueError:
        raise PromptError(f"--range parts must be numbers, got {args.value_range!r}") from None
    return PromptPlan(template=args.template or REGRESSION_TEMPLATE,
                      kind="regression", numeric_range=(lo, hi, step))


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        plan = _plan_from_args(args)
    except PromptError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    try:
        summary = export(ExportJob(plan=plan, encoder=args.encoder, out_path=args.out))
    except (EncoderError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(json.dumps(summary, ensure_ascii=False))
    return 0


if __name__ == "__main__":
    sys.exit(main())
