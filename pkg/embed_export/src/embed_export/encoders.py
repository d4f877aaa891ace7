"""Text encoder registry.

Identifiers:
  clip:<hf-model-id>    text tower of a pretrained vision-language model
                        (final text projection, e.g. 512-d for the base CLIP)
  sbert:<model-id>      sentence-transformers encoder
  hashed:<dim>[:<seed>] offline deterministic stand-in; each prompt gets a
                        unit-normal vector keyed by (seed, prompt bytes).
                        For pipeline tests where no weights are available.

All encoders run inference only; a fixed identifier and version yield the
same bytes on every run.
"""

from __future__ import annotations

import hashlib

import numpy as np


class EncoderError(RuntimeError):
    """The encoder identifier could not be resolved or its weights loaded."""


class HashedEncoder:
    def __init__(self, dim: int, seed: int = 0):
        if dim < 8:
            raise EncoderError(f"hashed encoder dim must be >= 8, got {dim}")
        self.dim = dim
        self.seed = seed
        self.name = f"hashed:{dim}:{seed}"
        self.version = "1"

    def encode(self, prompts: list[str]) -> np.ndarray:
        out = np.empty((len(prompts), self.dim))
        for i, prompt in enumerate(prompts):
            digest = hashlib.sha256(prompt.encode("utf-8")).digest()
            words = [int.from_bytes(digest[j : j + 4], "little") for j in range(0, 16, 4)]
            rng = np.random.default_rng([self.seed & 0xFFFFFFFF, *words])
            out[i] = rng.standard_normal(self.dim)
        return out


class ClipTextEncoder:
    def __init__(self, model_id: str, batch_size: int = 32):
        try:
            import torch
            from transformers import CLIPTextModelWithProjection, CLIPTokenizer
        except ImportError as e:
            raise EncoderError(f"clip encoders need torch+transformers installed: {e}") from e
        try:
            self._tokenizer = CLIPTokenizer.from_pretrained(model_id)
            self._model = CLIPTextModelWithProjection.from_pretrained(model_id)
        except Exception as e:
            raise EncoderError(f"could not load {model_id!r}: {e}") from e
        self._torch = torch
        self._model.eval()
        self.dim = int(self._model.config.projection_dim)
        self.name = f"clip:{model_id}"
        try:
            from transformers import __version__ as tf_version

            self.version = f"transformers-{tf_version}"
        except Exception:
            self.version = "unknown"
        self.batch_size = batch_size

    def encode(self, prompts: list[str]) -> np.ndarray:
        chunks = []
        with self._torch.no_grad():
            for start in range(0, len(prompts), self.batch_size):
                batch = prompts[start : start + self.batch_size]
                tokens = self._tokenizer(batch, padding=True, return_tensors="pt")
                embeds = self._model(**tokens).text_embeds
                chunks.append(embeds.cpu().numpy().astype(np.float64))
        return np.concatenate(chunks, axis=0)


class SbertEncoder:
    def __init__(self, model_id: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as e:
            raise EncoderError(f"sbert encoders need sentence-transformers: {e}") from e
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as e:
            raise EncoderError(f"could not load {model_id!r}: {e}") from e
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self.name = f"sbert:{model_id}"
        self.version = "sentence-transformers"

    def encode(self, prompts: list[str]) -> np.ndarray:
        return np.asarray(
            self._model.encode(prompts, convert_to_numpy=True, normalize_embeddings=False),
            dtype=np.float64,
        )


def resolve_encoder(identifier: str):
    scheme, _, rest = identifier.partition(":")
    if scheme == "hashed":
        parts = rest.split(":") if rest else []
        if not parts or not parts[0]:
            raise EncoderError("hashed encoder wants hashed:<dim>[:<seed>]")
        dim = int(parts[0])
        seed = int(parts[1]) if len(parts) > 1 else 0
        return HashedEncoder(dim, seed)
    if scheme == "clip":
        if not rest:
            raise EncoderError("clip encoder wants clip:<model-id>")
        return ClipTextEncoder(rest)
    if scheme == "sbert":
        if not rest:
            raise EncoderError("sbert encoder wants sbert:<model-id>")
        return SbertEncoder(rest)
    raise EncoderError(f"unknown encoder scheme {scheme!r} (use clip:, sbert: or hashed:)")
