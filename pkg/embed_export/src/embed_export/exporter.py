"""Produce real knowledge anchor files.

Expands the prompt plan, runs the text encoder over every prompt in plan
order, and writes the anchor interchange file: a JSON header line carrying
dim/provenance/template, then one JSON record per anchor with id, kind,
label or value, and the embedding at full float precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoders import resolve_encoder
from .prompts import PromptPlan


@dataclass
class ExportJob:
    plan: PromptPlan
    encoder: str
    out_path: str | Path


def export(job: ExportJob) -> dict:
    encoder = resolve_encoder(job.encoder)
    prompts = job.plan.prompts()
    payloads = job.plan.payloads()
    embeddings = encoder.encode(prompts)
    if embeddings.shape != (len(prompts), encoder.dim):
        raise RuntimeError(
            f"encoder returned shape {embeddings.shape}, expected {(len(prompts), encoder.dim)}"
        )

    kind = "class" if job.plan.kind == "classification" else "numeric"
    header = {
        "dim": encoder.dim,
        "provenance": "external",
        "source": f"{encoder.name}@{encoder.version}",
        "kind": kind,
        "template": job.plan.template,
    }
    lines = [json.dumps(header, ensure_ascii=False)]
    for i, payload in enumerate(payloads):
        record: dict = {"id": i, "kind": kind}
        if kind == "class":
            record["label"] = payload
        else:
            record["value"] = float(payload)
        record["embedding"] = [float(x) for x in embeddings[i]]
        lines.append(json.dumps(record, ensure_ascii=False))
    out = Path(job.out_path)
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return {
        "out": str(out),
        "count": len(payloads),
        "dim": encoder.dim,
        "encoder": encoder.name,
        "version": encoder.version,
    }
