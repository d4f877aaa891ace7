"""Prompt expansion and knowledge anchor sets.

An anchor is a text embedding tagged with the class label or numeric value
its prompt describes. Sets are produced here pseudo-randomly for testing,
or loaded from the interchange file a real text encoder writes (one JSON
record per line, header first).
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DataError, FormatError, UsageError

_PLACEHOLDER = re.compile(r"\{[^{}]*\}")

CLASSIFICATION_TEMPLATE = "The subject is {action}."
REGRESSION_TEMPLATE = "The remaining useful life is {num}."


def format_value(v: float) -> str:
    """Minimal decimal rendering: '0', '1', '12.5' - reproducible byte-for-byte."""
    return f"{float(v):.12g}"


@dataclass(frozen=True)
class PromptTemplate:
    pattern: str
    kind: str  # "classification" | "regression"

    def __post_init__(self) -> None:
        if not self.pattern:
            raise UsageError("prompt template must be non-empty")
        if self.kind not in ("classification", "regression"):
            raise UsageError(f"unknown template kind {self.kind!r}")
        if len(_PLACEHOLDER.findall(self.pattern)) != 1:
            raise UsageError(
                f"template must contain exactly one {{placeholder}}: {self.pattern!r}"
            )

    def render(self, payload_text: str) -> str:
        return _PLACEHOLDER.sub(lambda _: payload_text, self.pattern, count=1)


@dataclass(frozen=True)
class AnchorSpec:
    """Either a list of class names or a numeric grid (y_min, y_max, step)."""

    class_names: tuple[str, ...] | None = None
    numeric_range: tuple[float, float, float] | None = None

    def __post_init__(self) -> None:
        if (self.class_names is None) == (self.numeric_range is None):
            raise UsageError("give exactly one of class_names or numeric_range")
        if self.class_names is not None:
            if not self.class_names:
                raise UsageError("class_names must be non-empty")
            if len(set(self.class_names)) != len(self.class_names):
                raise UsageError("class names must be distinct")
        else:
            y_min, y_max, step = self.numeric_range
            if step <= 0:
                raise UsageError(f"step must be positive, got {step}")
            if y_min >= y_max:
                raise UsageError(f"need y_min < y_max, got [{y_min}, {y_max}]")
            count = (y_max - y_min) / step
            if abs(count - round(count)) > 1e-9 * max(1.0, abs(count)) or round(count) < 2:
                raise UsageError(
                    f"(y_max - y_min)/step must be an integer >= 2, got {count}"
                )

    @property
    def kind(self) -> str:
        return "classification" if self.class_names is not None else "regression"

    def grid_values(self) -> np.ndarray:
        if self.numeric_range is None:
            raise UsageError("grid_values is only defined for numeric specs")
        y_min, y_max, step = self.numeric_range
        n = int(round((y_max - y_min) / step))
        values = y_min + step * np.arange(n + 1, dtype=np.float64)
        values[-1] = y_max
        return values

    def payloads(self) -> list[str] | list[float]:
        if self.class_names is not None:
            return list(self.class_names)
        return [float(v) for v in self.grid_values()]


@dataclass
class AnchorPoint:
    id: int
    payload: str | float
    embedding: np.ndarray


@dataclass
class AnchorSet:
    dim: int
    anchors: list[AnchorPoint]
    provenance: str = "pseudo"  # "pseudo" | "external"
    source: str = ""
    template: str | None = None
    validate_order: bool = True

    def __post_init__(self) -> None:
        if self.provenance not in ("pseudo", "external"):
            raise DataError(f"provenance must be pseudo or external, got {self.provenance!r}")
        if not self.anchors:
            raise DataError("anchor set is empty")
        payloads = [a.payload for a in self.anchors]
        if len(set(payloads)) != len(payloads):
            raise DataError("anchor payloads must be unique")
        for a in self.anchors:
            a.embedding = np.asarray(a.embedding, dtype=np.float64)
            if a.embedding.shape != (self.dim,):
                raise DataError(
                    f"anchor {a.id} embedding has length {a.embedding.size}, expected {self.dim}"
                )
            if not np.all(np.isfinite(a.embedding)):
                raise DataError(f"anchor {a.id} embedding has non-finite entries")
            if not np.any(a.embedding):
                raise DataError(f"anchor {a.id} embedding is all-zero")
        if self.kind == "numeric" and self.validate_order:
            vals = self.values()
            if not np.all(np.diff(vals) > 0):
                raise DataError("numeric anchors must be stored in strictly increasing order")

    @property
    def kind(self) -> str:
        return "numeric" if isinstance(self.anchors[0].payload, float) else "class"

    def __len__(self) -> int:
        return len(self.anchors)

    def values(self) -> np.ndarray:
        if self.kind != "numeric":
            raise UsageError("values() is only defined for numeric anchor sets")
        return np.array([a.payload for a in self.anchors], dtype=np.float64)

    def labels(self) -> list[str]:
        if self.kind != "class":
            raise UsageError("labels() is only defined for class anchor sets")
        return [a.payload for a in self.anchors]

    def payloads(self) -> list:
        return [a.payload for a in self.anchors]

    def matrix(self) -> np.ndarray:
        return np.stack([a.embedding for a in self.anchors])


def expand_prompts(template: PromptTemplate, spec: AnchorSpec) -> list[str]:
    """One prompt per class (given order) or per grid value (ascending)."""
    if template.kind != spec.kind:
        raise UsageError(
            f"template kind {template.kind!r} does not match spec kind {spec.kind!r}"
        )
    if spec.class_names is not None:
        return [template.render(name) for name in spec.class_names]
    return [template.render(format_value(v)) for v in spec.grid_values()]


def _payload_rng(seed: int, payload_text: str) -> np.random.Generator:
    digest = hashlib.sha256(payload_text.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng([seed & 0xFFFFFFFF, *words])


def pseudo_embed(
    prompts: Sequence[str],
    payloads: Sequence[str | float],
    dim: int,
    seed: int,
    mode: str = "gaussian",
    template: str | None = None,
) -> AnchorSet:
    """Deterministic stand-in embeddings so everything tests without an LLM.

    gaussian: a unit normal keyed by (seed, payload) - anchors look unrelated.
    structured: numeric payloads only; a fixed seeded matrix applied to
    [v, v^2, sin(pi v), cos(pi v), 1] on the rescaled value, so nearby values
    get nearby embeddings (what anchor voting presumes).
    """
    if dim < 8:
        raise UsageError(f"pseudo embeddings need dim >= 8, got {dim}")
    if len(prompts) != len(payloads):
        raise UsageError("prompts and payloads must align one-to-one")
    if mode not in ("gaussian", "structured"):
        raise UsageError(f"mode must be gaussian or structured, got {mode!r}")

    anchors: list[AnchorPoint] = []
    if mode == "gaussian":
        for i, payload in enumerate(payloads):
            key = payload if isinstance(payload, str) else format_value(payload)
            emb = _payload_rng(seed, key).standard_normal(dim)
            anchors.append(AnchorPoint(id=i, payload=_norm_payload(payload), embedding=emb))
    else:
        if any(isinstance(p, str) for p in payloads):
            raise UsageError("structured mode needs numeric payloads")
        values = np.array([float(p) for p in payloads], dtype=np.float64)
        lo, hi = values.min(), values.max()
        span = hi - lo if hi > lo else 1.0
        mixing = np.random.default_rng(seed).standard_normal((dim, 5))
        for i, v in enumerate(values):
            vhat = (v - lo) / span
            feats = np.array([vhat, vhat**2, np.sin(np.pi * vhat), np.cos(np.pi * vhat), 1.0])
            anchors.append(AnchorPoint(id=i, payload=float(v), embedding=mixing @ feats))
    return AnchorSet(
        dim=dim,
        anchors=anchors,
        provenance="pseudo",
        source=f"pseudo-{mode}(seed={seed})",
        template=template,
    )


def _norm_payload(payload: str | float) -> str | float:
    return payload if isinstance(payload, str) else float(payload)


def save_anchor_file(anchor_set: AnchorSet, path: str | Path) -> None:
    """One JSON object per line: header first, then anchors in storage order."""
    path = Path(path)
    header = {
        "dim": anchor_set.dim,
        "provenance": anchor_set.provenance,
        "source": anchor_set.source,
        "kind": anchor_set.kind,
        "template": anchor_set.template,
    }
    lines = [json.dumps(header, ensure_ascii=False)]
    for a in anchor_set.anchors:
        rec: dict = {"id": a.id, "kind": "class" if isinstance(a.payload, str) else "numeric"}
        if isinstance(a.payload, str):
            rec["label"] = a.payload
        else:
            rec["value"] = a.payload
        rec["embedding"] = a.embedding.tolist()
        lines.append(json.dumps(rec, ensure_ascii=False))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_anchor_file(path: str | Path) -> AnchorSet:
    path = Path(path)
    if not path.exists():
        raise DataError(f"anchor file not found: {path}")
    raw_lines = path.read_text(encoding="utf-8").splitlines()
    numbered = [(i + 1, line) for i, line in enumerate(raw_lines) if line.strip()]
    if not numbered:
        raise FormatError(f"{path}: no anchors")

    def parse(lineno: int, line: str) -> dict:
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: line {lineno}: malformed record ({e.msg})") from e
        if not isinstance(obj, dict):
            raise FormatError(f"{path}: line {lineno}: expected an object")
        return obj

    header_no, header_line = numbered[0]
    header = parse(header_no, header_line)
    if "dim" not in header:
        raise FormatError(f"{path}: line {header_no}: header must carry dim")
    dim = int(header["dim"])
    provenance = header.get("provenance", "external")
    if len(numbered) == 1:
        raise FormatError(f"{path}: no anchors")

    anchors: list[AnchorPoint] = []
    seen_payloads: dict = {}
    for lineno, line in numbered[1:]:
        rec = parse(lineno, line)
        kind = rec.get("kind")
        if kind == "class":
            if "label" not in rec:
                raise FormatError(f"{path}: line {lineno}: class record needs a label")
            payload: str | float = str(rec["label"])
        elif kind == "numeric":
            if "value" not in rec:
                raise FormatError(f"{path}: line {lineno}: numeric record needs a value")
            payload = float(rec["value"])
        else:
            raise FormatError(f"{path}: line {lineno}: kind must be 'class' or 'numeric'")
        if payload in seen_payloads:
            raise FormatError(
                f"{path}: line {lineno}: duplicate payload {payload!r} "
                f"(first seen on line {seen_payloads[payload]})"
            )
        seen_payloads[payload] = lineno
        emb = np.asarray(rec.get("embedding", []), dtype=np.float64)
        if emb.ndim != 1 or emb.size != dim:
            raise FormatError(
                f"{path}: line {lineno}: embedding has length {emb.size}, header says dim {dim}"
            )
        if not np.all(np.isfinite(emb)):
            raise FormatError(f"{path}: line {lineno}: embedding has non-finite entries")
        if not np.any(emb):
            raise FormatError(f"{path}: line {lineno}: embedding is all-zero")
        anchors.append(AnchorPoint(id=int(rec.get("id", len(anchors))), payload=payload, embedding=emb))

    kinds = {("class" if isinstance(a.payload, str) else "numeric") for a in anchors}
    if len(kinds) != 1:
        raise FormatError(f"{path}: mixed class and numeric records")
    if "numeric" in kinds:
        vals = [a.payload for a in anchors]
        for i in range(1, len(vals)):
            if vals[i] <= vals[i - 1]:
                raise FormatError(
                    f"{path}: line {numbered[1 + i][0]}: numeric anchors must be strictly increasing"
                )
    try:
        return AnchorSet(
            dim=dim,
            anchors=anchors,
            provenance=provenance,
            source=str(header.get("source", "")),
            template=header.get("template"),
        )
    except DataError as e:
        raise FormatError(f"{path}: {e}") from e


def assign_targets(payloads: Iterable[str | float], anchor_set: AnchorSet) -> np.ndarray:
    """Anchor index for each sample payload.

    Classification: exact label match. Regression: nearest grid value with
    ties broken toward the lower value; values more than half a grid step
    outside the grid are rejected.
    """
    if anchor_set.kind == "class":
        index = {a.payload: i for i, a in enumerate(anchor_set.anchors)}
        out = []
        for p in payloads:
            if p not in index:
                raise DataError(f"unknown class label {p!r}")
            out.append(index[p])
        return np.array(out, dtype=np.intp)

    values = anchor_set.values()
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    gaps = np.diff(sorted_vals)
    half_gap = gaps.min() / 2.0 if gaps.size else np.inf
    lo, hi = sorted_vals[0] - half_gap, sorted_vals[-1] + half_gap

    out = []
    for p in payloads:
        v = float(p)
        if v < lo or v > hi:
            raise DataError(
                f"value {v} outside anchor grid [{sorted_vals[0]}, {sorted_vals[-1]}] "
                f"(+/- {half_gap})"
            )
        pos = int(np.searchsorted(sorted_vals, v))
        best = None
        for cand in (pos - 1, pos):
            if 0 <= cand < sorted_vals.size:
                d = abs(v - sorted_vals[cand])
                # strict < keeps the lower value on exact ties
                if best is None or d < best[0]:
                    best = (d, cand)
        out.append(int(order[best[1]]))
    return np.array(out, dtype=np.intp)
