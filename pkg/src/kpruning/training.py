"""End-to-end training and evaluation.

Reference encoders (MLP, conv1d), the distillation training loop, RMSE /
asymmetric prognostics score / F1 metrics, self-contained checkpoints and
compute accounting. One training run is sequential over batches; the same
seed reproduces everything bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .anchors import AnchorSet, assign_targets
from .datasets import DatasetSplit, NormalizationStats, Window, zscore_apply, zscore_fit
from .distill import (
    AlignmentModule,
    align_anchors,
    bidirectional_distributions,
    kp_loss,
    score,
    target_distribution,
)
from .exceptions import (
    DataError,
    FormatError,
    TrainingDivergedError,
    UsageError,
)
from .nn import OptimizerState, Tensor, adam_step, backward, no_grad, ops
from .nn.layers import AffineLayer, Conv1dLayer
from .voting import Prediction, avs_predict, classify

CHECKPOINT_MAGIC = b"KPCKPT1\n"


# ---------------------------------------------------------------------------
# encoders


@dataclass
class EncoderSpec:
    kind: str = "mlp"  # mlp | conv1d
    hidden: tuple[int, ...] = (256,)  # mlp widths
    channels: tuple[int, ...] = (16, 32)  # conv1d channel counts
    kernel_sizes: tuple[int, ...] = (7, 5)
    feature_dim: int = 64

    def __post_init__(self) -> None:
        self.hidden = tuple(int(h) for h in self.hidden)
        self.channels = tuple(int(c) for c in self.channels)
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        if self.kind not in ("mlp", "conv1d"):
            raise UsageError(f"encoder kind must be mlp or conv1d, got {self.kind!r}")
        if self.feature_dim < 2:
            raise UsageError(f"feature_dim must be >= 2, got {self.feature_dim}")
        if any(h < 1 for h in self.hidden) or any(c < 1 for c in self.channels):
            raise UsageError("layer widths must be positive")
        if self.kind == "conv1d" and len(self.channels) != len(self.kernel_sizes):
            raise UsageError("conv1d needs one kernel size per channel count")


class MLPEncoder:
    def __init__(self, spec: EncoderSpec, n_channels: int, length: int, rng: np.random.Generator):
        self.spec = spec
        self.n_channels = n_channels
        self.length = length
        dims = [n_channels * length, *spec.hidden, spec.feature_dim]
        self.layers = [AffineLayer(dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)]

    def forward(self, x: Tensor) -> Tensor:
        batch = x.shape[0]
        h = ops.reshape(x, (batch, self.n_channels * self.length))
        for layer in self.layers[:-1]:
            h = ops.relu(layer(h))
        return self.layers[-1](h)

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.append((f"mlp.{i}.weight", layer.weight))
            out.append((f"mlp.{i}.bias", layer.bias))
        return out

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers)

    def estimate_macs(self) -> int:
        dims = [self.n_channels * self.length, *self.spec.hidden, self.spec.feature_dim]
        return sum(dims[i] * dims[i + 1] for i in range(len(dims) - 1))


class Conv1dEncoder:
    def __init__(self, spec: EncoderSpec, n_channels: int, length: int, rng: np.random.Generator):
        self.spec = spec
        self.n_channels = n_channels
        self.length = length
        self.convs = []
        c_in, l_out = n_channels, length
        for c_out, k in zip(spec.channels, spec.kernel_sizes):
            if k > l_out:
                raise UsageError(f"kernel {k} exceeds remaining length {l_out}")
            self.convs.append(Conv1dLayer(c_in, c_out, k, stride=1, rng=rng))
            c_in = c_out
            l_out = l_out - k + 1
        self.out_lengths = self._layer_lengths()
        self.head = AffineLayer(c_in, spec.feature_dim, rng)

    def _layer_lengths(self) -> list[int]:
        lengths = []
        l_out = self.length
        for k in self.spec.kernel_sizes:
            l_out = l_out - k + 1
            lengths.append(l_out)
        return lengths

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for conv in self.convs:
            h = ops.relu(conv(h))
        pooled = ops.mean_last(h)
        return self.head(pooled)

    def parameters(self) -> list[Tensor]:
        params = [p for conv in self.convs for p in conv.parameters()]
        return params + self.head.parameters()

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out = []
        for i, conv in enumerate(self.convs):
            out.append((f"conv.{i}.weight", conv.weight))
            out.append((f"conv.{i}.bias", conv.bias))
        out.append(("head.weight", self.head.weight))
        out.append(("head.bias", self.head.bias))
        return out

    def n_params(self) -> int:
        return sum(c.n_params() for c in self.convs) + self.head.n_params()

    def estimate_macs(self) -> int:
        macs = 0
        c_in = self.n_channels
        for conv, l_out in zip(self.convs, self.out_lengths):
            c_out, _, k = conv.weight.shape
            macs += c_out * c_in * k * l_out
            c_in = c_out
        macs += c_in * self.spec.feature_dim
        return macs


def build_encoder(spec: EncoderSpec, n_channels: int, length: int, rng: np.random.Generator):
    if spec.kind == "mlp":
        return MLPEncoder(spec, n_channels, length, rng)
    return Conv1dEncoder(spec, n_channels, length, rng)


# ---------------------------------------------------------------------------
# configuration


@dataclass
class TrainConfig:
    tau: float = 10.0
    theta: float = 0.9
    kl_direction: str = "forward"  # forward | reverse
    distance: str = "cosine"  # cosine | neg_euclidean
    learning_rate: float = 1e-3
    epochs: int = 100
    batch_size: int = 128
    seed: int = 0
    encoder: EncoderSpec = field(default_factory=EncoderSpec)
    r_max: float = 125.0
    window_length: int = 30
    window_stride: int = 1
    # similarity scale: anchor embeddings of adjacent grid values are nearly
    # parallel, so softmax over raw cosines stays flat; 1600 concentrates the
    # voting mass enough for stable anchor voting at theta 0.9
    logit_scale: float = 1600.0
    alignment_hidden: int | None = 32
    avs_include_boundary: bool = True
    eval_windows: str = "last"  # last | all
    early_stopping_patience: int = 10
    anchor_source: str | None = None  # provenance: "file:<path>" or "pseudo:<mode>"

    def __post_init__(self) -> None:
        if isinstance(self.encoder, dict):
            self.encoder = EncoderSpec(**self.encoder)
        if self.tau <= 0:
            raise UsageError(f"tau must be positive, got {self.tau}")
        if not (0.0 < self.theta <= 1.0):
            raise UsageError(f"theta must be in (0, 1], got {self.theta}")
        if self.batch_size < 2:
            raise UsageError("batch_size must be >= 2 (the per-anchor direction is degenerate at 1)")
        if self.epochs < 0:
            raise UsageError("epochs must be >= 0")
        if self.kl_direction not in ("forward", "reverse"):
            raise UsageError(f"kl_direction must be forward or reverse, got {self.kl_direction!r}")
        if self.distance not in ("cosine", "neg_euclidean"):
            raise UsageError(f"distance must be cosine or neg_euclidean, got {self.distance!r}")
        if self.eval_windows not in ("last", "all"):
            raise UsageError(f"eval_windows must be last or all, got {self.eval_windows!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["encoder"] = asdict(self.encoder)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


_TUPLE_FIELDS = {"hidden", "channels", "kernel_sizes"}


def config_to_text(config: TrainConfig) -> str:
    lines = []
    for key, value in config.to_dict().items():
        if key == "encoder":
            for ek, ev in value.items():
                lines.append(f"encoder.{ek} = {json.dumps(list(ev) if isinstance(ev, tuple) else ev)}")
        else:
            lines.append(f"{key} = {json.dumps(value)}")
    return "\n".join(lines) + "\n"


def config_from_text(text: str) -> TrainConfig:
    """Parse `key = value` lines; values are JSON scalars/arrays, # comments allowed."""
    top: dict = {}
    enc: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {raw!r}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        try:
            value = json.loads(raw_value)
        except json.JSONDecodeError:
            value = raw_value  # bare strings allowed
        if key.startswith("encoder."):
            enc[key[len("encoder."):]] = value
        elif key == "encoder":
            raise UsageError(f"config line {lineno}: use encoder.<field> keys")
        else:
            top[key] = value
    for k in _TUPLE_FIELDS & set(enc):
        v = enc[k]
        if isinstance(v, str):
            v = [s for s in v.split(",") if s.strip()]
        if not isinstance(v, (list, tuple)):
            v = [v]
        enc[k] = tuple(int(x) for x in v)
    if enc:
        top["encoder"] = enc
    if top.get("alignment_hidden") in ("null", "None"):
        top["alignment_hidden"] = None
    try:
        return TrainConfig.from_dict(top)
    except TypeError as e:
        raise UsageError(f"config: {e}") from e


def load_config(path: str | Path) -> TrainConfig:
    path = Path(path)
    if not path.exists():
        raise DataError(f"config file not found: {path}")
    return config_from_text(path.read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# metrics


def rmse(predictions: Sequence[float], targets: Sequence[float]) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise UsageError("predictions and targets must have equal length")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def nasa_score(predictions: Sequence[float], targets: Sequence[float]) -> float:
    """Asymmetric prognostics penalty: late predictions cost more.

    d = prediction - target; each sample adds exp(d/10) - 1 when d >= 0
    (late) and exp(-d/13) - 1 when d < 0 (early).
    """
    p = np.asarray(predictions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape:
        raise UsageError("predictions and targets must have equal length")
    d = p - t
    per = np.where(d >= 0, np.exp(d / 10.0) - 1.0, np.exp(-d / 13.0) - 1.0)
    return float(per.sum())


def confusion_counts(y_true: Sequence, y_pred: Sequence) -> dict:
    table: dict = {}
    for t, p in zip(y_true, y_pred):
        table.setdefault(str(t), {}).setdefault(str(p), 0)
        table[str(t)][str(p)] += 1
    return table


def f1_scores(y_true: Sequence, y_pred: Sequence) -> tuple[float, float]:
    """(macro_f1, weighted_f1) over the labels present in y_true or y_pred."""
    if len(y_true) != len(y_pred):
        raise UsageError("predictions and targets must have equal length")
    labels = sorted(set(y_true) | set(y_pred))
    per_class = []
    supports = []
    for lab in labels:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == lab and p == lab)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != lab and p == lab)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == lab and p != lab)
        f1 = 0.0 if (2 * tp + fp + fn) == 0 else 2 * tp / (2 * tp + fp + fn)
        per_class.append(f1)
        supports.append(sum(1 for t in y_true if t == lab))
    macro = float(np.mean(per_class))
    total = sum(supports)
    weighted = float(sum(f * s for f, s in zip(per_class, supports)) / total) if total else 0.0
    return macro, weighted


@dataclass
class MetricsReport:
    task: str
    n_windows: int
    rmse: float | None = None
    nasa_score: float | None = None
    macro_f1: float | None = None
    weighted_f1: float | None = None
    confusion: dict | None = None
    n_params: int = 0
    est_macs: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# checkpoint


@dataclass
class Checkpoint:
    version: str
    task: str  # regression | classification
    config: TrainConfig
    encoder_arrays: dict[str, np.ndarray]
    aligned_anchors: np.ndarray  # [n_anchors, feature_dim]
    anchor_payloads: list
    anchor_dim: int
    stats: NormalizationStats
    history: list[dict]

    @property
    def anchor_values(self) -> np.ndarray:
        return np.asarray(self.anchor_payloads, dtype=np.float64)

    def build_encoder(self):
        n_channels = len(self.stats.kept)
        encoder = build_encoder(
            self.config.encoder, n_channels, self.config.window_length, np.random.default_rng(0)
        )
        for name, tensor in encoder.named_parameters():
            arr = self.encoder_arrays[name]
            if arr.shape != tensor.data.shape:
                raise FormatError(f"checkpoint tensor {name} has shape {arr.shape}, "
                                  f"expected {tensor.data.shape}")
            tensor.data = arr.copy()
        return encoder

    def save(self, path: str | Path) -> None:
        path = Path(path)
        tensors: list[tuple[str, np.ndarray]] = list(self.encoder_arrays.items())
        tensors.append(("aligned_anchors", self.aligned_anchors))
        table = []
        offset = 0
        blobs = []
        for name, arr in tensors:
            blob = np.ascontiguousarray(arr, dtype="<f8").tobytes()
            table.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += len(blob)
            blobs.append(blob)
        header = {
            "version": self.version,
            "task": self.task,
            "config": self.config.to_dict(),
            "anchor": {
                "dim": self.anchor_dim,
                "kind": "numeric" if self.task == "regression" else "class",
                "payloads": self.anchor_payloads,
            },
            "stats": self.stats.to_dict(),
            "history": self.history,
            "tensors": table,
            "float_layout": "little-endian float64, row-major",
        }
        head = json.dumps(header, ensure_ascii=False).encode("utf-8")
        with path.open("wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<Q", len(head)))
            fh.write(head)
            for blob in blobs:
                fh.write(blob)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        path = Path(path)
        if not path.exists():
            raise DataError(f"checkpoint not found: {path}")
        raw = path.read_bytes()
        if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: not a checkpoint file (bad magic)")
        pos = len(CHECKPOINT_MAGIC)
        (head_len,) = struct.unpack("<Q", raw[pos : pos + 8])
        pos += 8
        try:
            header = json.loads(raw[pos : pos + head_len].decode("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError) as e:
            raise FormatError(f"{path}: corrupt header ({e})") from e
        pos += head_len
        body = raw[pos:]
        arrays = {}
        for entry in header["tensors"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            start = entry["offset"]
            arr = np.frombuffer(body, dtype="<f8", count=count, offset=start).reshape(shape)
            arrays[entry["name"]] = arr.astype(np.float64)
        aligned = arrays.pop("aligned_anchors")
        payloads = header["anchor"]["payloads"]
        if header["anchor"]["kind"] == "numeric":
            payloads = [float(v) for v in payloads]
        return cls(
            version=header["version"],
            task=header["task"],
            config=TrainConfig.from_dict(header["config"]),
            encoder_arrays=arrays,
            aligned_anchors=aligned,
            anchor_payloads=payloads,
            anchor_dim=int(header["anchor"]["dim"]),
            stats=NormalizationStats.from_dict(header["stats"]),
            history=list(header["history"]),
        )


def count_params(checkpoint: Checkpoint) -> int:
    """Trainable parameters: encoder plus the alignment map reconstructed from dims."""
    enc = sum(arr.size for arr in checkpoint.encoder_arrays.values())
    d = checkpoint.anchor_dim
    f = checkpoint.config.encoder.feature_dim
    h = checkpoint.config.alignment_hidden or f
    align = d * h + h + h * f + f
    return enc + align


def estimate_macs(checkpoint: Checkpoint, window_shape: tuple[int, int] | None = None) -> int:
    """Multiply-add estimate for one window at inference (encoder + anchor scoring)."""
    if window_shape is None:
        window_shape = (len(checkpoint.stats.kept), checkpoint.config.window_length)
    n_channels, length = window_shape
    encoder = build_encoder(
        checkpoint.config.encoder, n_channels, length, np.random.default_rng(0)
    )
    scoring = checkpoint.aligned_anchors.shape[0] * checkpoint.config.encoder.feature_dim
    return encoder.estimate_macs() + scoring


# ---------------------------------------------------------------------------
# training


def _task_of(dataset: DatasetSplit) -> str:
    return dataset.kind


def _batch_matrix(windows: list[Window], idx: np.ndarray) -> np.ndarray:
    return np.stack([windows[i].data for i in idx])


def _forward_scores(encoder, aligned: np.ndarray, windows: list[Window],
                    config: TrainConfig, chunk: int = 512) -> np.ndarray:
    """Row-softmax anchor probabilities for every window, taped nowhere."""
    probs = []
    with no_grad():
        k = Tensor(aligned)
        for start in range(0, len(windows), chunk):
            x = Tensor(np.stack([w.data for w in windows[start : start + chunk]]))
            feats = encoder.forward(x)
            s = score(feats, k, mode=config.distance, logit_scale=config.logit_scale,
                      eps=1e-12)
            p_t = ops.log_softmax(s, axis="row")
            probs.append(np.exp(p_t.data))
    return np.concatenate(probs, axis=0)


def _predict_values(probs: np.ndarray, values: np.ndarray, config: TrainConfig,
                    theta: float | None = None, inference: str = "avs") -> np.ndarray:
    if inference == "argmax":
        return values[np.argmax(probs, axis=1)]
    theta = config.theta if theta is None else theta
    out = np.empty(probs.shape[0])
    for i in range(probs.shape[0]):
        out[i] = avs_predict(
            probs[i] / probs[i].sum(), values, theta=theta,
            include_boundary=config.avs_include_boundary,
        ).value
    return out


def _last_windows_per_unit(windows: list[Window]) -> list[Window]:
    best: dict[str, Window] = {}
    for w in windows:
        cur = best.get(w.unit_id)
        if cur is None or w.end_step > cur.end_step:
            best[w.unit_id] = w
    return [best[u] for u in sorted(best, key=lambda u: (len(u), u))]


def train(
    config: TrainConfig,
    dataset: DatasetSplit,
    anchors: AnchorSet,
    on_epoch: Callable[[dict], None] | None = None,
) -> Checkpoint:
    """Fit encoder and alignment jointly with the bidirectional KL objective.

    Per batch: encode windows, align anchors, score, build both soft
    distributions and the temperature target, take one optimizer step on
    everything. Keeps the parameters of the best validation epoch.
    """
    if not dataset.train:
        raise DataError("training split is empty")
    task = _task_of(dataset)
    if task == "regression" and anchors.kind != "numeric":
        raise UsageError("regression data needs numeric anchors")
    if task == "classification" and anchors.kind != "class":
        raise UsageError("classification data needs class anchors")

    stats = zscore_fit(dataset.train)
    train_windows = zscore_apply(stats, dataset.train)
    val_windows = zscore_apply(stats, dataset.val) if dataset.val else []
    assignments = assign_targets([w.target for w in train_windows], anchors)

    rng = np.random.default_rng(config.seed)
    n_channels = len(stats.kept)
    length = train_windows[0].data.shape[1]
    if length != config.window_length:
        config = replace(config, window_length=length)
    encoder = build_encoder(config.encoder, n_channels, length, rng)
    phi = AlignmentModule(
        anchors.dim, config.encoder.feature_dim,
        hidden=config.alignment_hidden, rng=rng,
    )
    params = encoder.parameters() + phi.parameters()
    opt = OptimizerState.for_params(params, lr=config.learning_rate)
    anchor_matrix = anchors.matrix()
    n_anchors = len(anchors)

    history: list[dict] = []
    best_metric = np.inf
    best_snapshot: dict[str, np.ndarray] | None = None
    best_aligned: np.ndarray | None = None
    stale = 0

    def snapshot() -> tuple[dict[str, np.ndarray], np.ndarray]:
        arrays = {name: t.data.copy() for name, t in encoder.named_parameters()}
        with no_grad():
            aligned = align_anchors(phi, anchor_matrix).data.copy()
        return arrays, aligned

    if config.epochs == 0:
        best_snapshot, best_aligned = snapshot()

    n_train = len(train_windows)
    for epoch in range(config.epochs):
        order = rng.permutation(n_train)
        losses = []
        for start in range(0, n_train, config.batch_size):
            idx = order[start : start + config.batch_size]
            if idx.size < 2:
                continue  # a single sample degenerates the per-anchor direction
            x = Tensor(_batch_matrix(train_windows, idx))
            feats = encoder.forward(x)
            k = align_anchors(phi, anchor_matrix)
            s = score(feats, k, mode=config.distance, logit_scale=config.logit_scale)
            pair = bidirectional_distributions(s)
            targets = target_distribution(assignments[idx], n_anchors, config.tau)
            loss = kp_loss(pair, targets, kl_direction=config.kl_direction)
            if not np.isfinite(loss.data):
                feat_norms = np.linalg.norm(feats.data, axis=1)
                raise TrainingDivergedError(
                    f"loss became {loss.data} at epoch {epoch + 1}, batch {start // config.batch_size}: "
                    f"feature norms [{feat_norms.min():.3e}, {feat_norms.max():.3e}], "
                    f"score range [{s.data.min():.3e}, {s.data.max():.3e}]"
                )
            for p in params:
                p.grad = None
            backward(loss)
            adam_step(opt, params)
            losses.append(float(loss.data))

        record: dict = {"epoch": epoch + 1, "loss": float(np.mean(losses)) if losses else None}
        monitor_windows = val_windows if val_windows else train_windows
        arrays_now, aligned_now = snapshot()
        probs = _forward_scores(encoder, aligned_now, monitor_windows, config)
        if task == "regression":
            preds = _predict_values(probs, anchors.values(), config)
            metric = rmse(preds, [w.target for w in monitor_windows])
            record["val_rmse"] = metric
        else:
            payloads = anchors.labels()
            preds = [classify(p / p.sum(), payloads).value for p in probs]
            macro, _ = f1_scores([w.target for w in monitor_windows], preds)
            record["val_macro_f1"] = macro
            metric = 1.0 - macro  # minimized
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)

        if metric < best_metric - 1e-12:
            best_metric = metric
            best_snapshot, best_aligned = arrays_now, aligned_now
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stopping_patience:
                break

    if best_snapshot is None:  # epochs > 0 but no batch ran (tiny split)
        best_snapshot, best_aligned = snapshot()

    return Checkpoint(
        version="1",
        task=task,
        config=config,
        encoder_arrays=best_snapshot,
        aligned_anchors=best_aligned,
        anchor_payloads=anchors.payloads(),
        anchor_dim=anchors.dim,
        stats=stats,
        history=history,
    )


# ---------------------------------------------------------------------------
# evaluation and prediction


def predict_windows(
    checkpoint: Checkpoint,
    windows: list[Window],
    theta: float | None = None,
    explain: bool = False,
) -> list[Prediction]:
    """One prediction per raw window (normalization applied here)."""
    if not windows:
        return []
    expected = len(checkpoint.stats.kept) + len(checkpoint.stats.dropped)
    got_channels, got_length = windows[0].data.shape
    if got_channels != expected or got_length != checkpoint.config.window_length:
        raise DataError(
            f"window shape ({got_channels} ch, {got_length} steps) does not match "
            f"checkpoint ({expected} ch, {checkpoint.config.window_length} steps)"
        )
    normed = zscore_apply(checkpoint.stats, windows)
    encoder = checkpoint.build_encoder()
    probs = _forward_scores(encoder, checkpoint.aligned_anchors, normed, checkpoint.config)
    theta = checkpoint.config.theta if theta is None else theta
    out = []
    for row in probs:
        row = row / row.sum()
        if checkpoint.task == "regression":
            pred = avs_predict(row, checkpoint.anchor_values, theta=theta,
                               include_boundary=checkpoint.config.avs_include_boundary)
            if not explain:
                pred = Prediction(value=pred.value, voting_set=pred.voting_set)
        else:
            pred = classify(row, checkpoint.anchor_payloads)
        out.append(pred)
    return out


def evaluate(
    checkpoint: Checkpoint,
    windows: list[Window],
    theta: float | None = None,
    eval_windows: str | None = None,
    regression_inference: str = "avs",
) -> MetricsReport:
    """Metrics over a split of raw windows.

    Regression defaults to the last window of each unit; pass
    eval_windows="all" for full trajectories. regression_inference="argmax"
    swaps anchor voting for the best-anchor value (the ablation variant).
    """
    if not windows:
        raise DataError("cannot evaluate an empty split")
    mode = eval_windows or checkpoint.config.eval_windows
    if checkpoint.task == "regression" and mode == "last":
        windows = _last_windows_per_unit(windows)
    normed = zscore_apply(checkpoint.stats, windows)
    encoder = checkpoint.build_encoder()
    probs = _forward_scores(encoder, checkpoint.aligned_anchors, normed, checkpoint.config)
    targets = [w.target for w in windows]
    report = MetricsReport(
        task=checkpoint.task,
        n_windows=len(windows),
        n_params=count_params(checkpoint),
        est_macs=estimate_macs(checkpoint),
    )
    if checkpoint.task == "regression":
        preds = _predict_values(
            probs, checkpoint.anchor_values, checkpoint.config,
            theta=theta, inference=regression_inference,
        )
        report.rmse = rmse(preds, targets)
        report.nasa_score = nasa_score(preds, targets)
    else:
        payloads = checkpoint.anchor_payloads
        preds = [classify(p / p.sum(), payloads).value for p in probs]
        report.macro_f1, report.weighted_f1 = f1_scores(targets, preds)
        report.confusion = confusion_counts(targets, preds)
    return report
