"""Dataset ingest, windowing, normalization and desk-scale synthesis.

Handles run-to-failure engine tables (unit, cycle, 3 settings, 21 sensors,
whitespace separated, with a companion RUL file for test units) and generic
labeled columnar CSV for activity-style data, plus deterministic synthetic
generators small enough for CI.
"""

from __future__ import annotations

import csv
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DataError

CMAPSS_COLUMNS = 26  # unit, cycle, setting1-3, sensor1-21


@dataclass
class TimeSeriesRecord:
    unit_id: str
    values: np.ndarray  # [channels, timesteps]
    rul: np.ndarray | None = None  # [timesteps] regression targets
    labels: list[str] | None = None  # [timesteps] class labels

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise DataError(f"unit {self.unit_id}: need a [channels, timesteps] matrix")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"unit {self.unit_id}: non-finite values")

    @property
    def n_timesteps(self) -> int:
        return self.values.shape[1]

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]


@dataclass
class Window:
    data: np.ndarray  # [channels, length]
    target: float | str
    unit_id: str = ""
    end_step: int = 0


@dataclass
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray
    kept: list[int]
    dropped: list[int]

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "kept": list(self.kept),
            "dropped": list(self.dropped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        return cls(
            mean=np.asarray(d["mean"], dtype=np.float64),
            std=np.asarray(d["std"], dtype=np.float64),
            kept=list(d["kept"]),
            dropped=list(d["dropped"]),
        )


@dataclass
class DatasetSplit:
    train: list[Window]
    val: list[Window]
    test: list[Window]
    meta: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        probe = (self.train or self.val or self.test)[0]
        return "classification" if isinstance(probe.target, str) else "regression"


def sliding_window(record: TimeSeriesRecord, length: int, stride: int = 1) -> list[Window]:
    """Windows start at multiples of stride; the target is read at the window end."""
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    if length > record.n_timesteps:
        raise DataError(
            f"unit {record.unit_id}: window length {length} exceeds {record.n_timesteps} timesteps"
        )
    windows = []
    n = (record.n_timesteps - length) // stride + 1
    for w in range(n):
        start = w * stride
        end = start + length - 1
        if record.labels is not None:
            segment = record.labels[start : end + 1]
            counts = Counter(segment)
            top = max(counts.values())
            ties = {lab for lab, c in counts.items() if c == top}
            target: float | str = segment[-1] if segment[-1] in ties else sorted(ties)[0]
        elif record.rul is not None:
            target = float(record.rul[end])
        else:
            raise DataError(f"unit {record.unit_id}: record carries no targets")
        windows.append(
            Window(
                data=record.values[:, start : end + 1].copy(),
                target=target,
                unit_id=record.unit_id,
                end_step=end,
            )
        )
    return windows


def _read_table(path: Path) -> np.ndarray:
    first = path.open("r", encoding="utf-8").readline()
    delimiter = "," if ("," in first) else None
    try:
        table = np.loadtxt(path, delimiter=delimiter, dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise DataError(f"{path}: could not parse numeric table ({e})") from e
    return table


def cmapss_ingest(
    path: str | Path,
    r_max: float = 125.0,
    rul_path: str | Path | None = None,
) -> list[TimeSeriesRecord]:
    """Per-unit records with capped RUL targets.

    Training tables (no rul_path): RUL(t) = min(T_fail - t, r_max).
    Test tables: the companion file gives RUL at each unit's last cycle;
    earlier cycles extrapolate linearly, capped identically.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"table not found: {path}")
    table = _read_table(path)
    if table.shape[1] != CMAPSS_COLUMNS:
        raise DataError(f"{path}: expected {CMAPSS_COLUMNS} columns, got {table.shape[1]}")
    unit_col = table[:, 0].astype(int)
    cycle_col = table[:, 1]
    unit_order = list(dict.fromkeys(unit_col.tolist()))

    final_ruls: dict[int, float] | None = None
    if rul_path is not None:
        rul_values = np.loadtxt(rul_path, dtype=np.float64, ndmin=1)
        if rul_values.size != len(unit_order):
            raise DataError(
                f"{rul_path}: {rul_values.size} RUL rows for {len(unit_order)} units"
            )
        final_ruls = {u: float(r) for u, r in zip(unit_order, rul_values)}

    records = []
    for u in unit_order:
        rows = table[unit_col == u]
        cycles = rows[:, 1]
        if np.any(np.diff(cycles) <= 0):
            raise DataError(f"{path}: unit {u} has non-monotone cycle numbers")
        t_last = cycles[-1]
        if final_ruls is None:
            rul = np.minimum(t_last - cycles, r_max)
        else:
            rul = np.minimum(final_ruls[u] + (t_last - cycles), r_max)
        records.append(
            TimeSeriesRecord(unit_id=str(u), values=rows[:, 2:].T, rul=rul)
        )
    return records


def har_ingest(
    path: str | Path,
    length: int = 128,
    stride: int = 64,
) -> list[Window]:
    """Labeled windows from a columnar CSV: channel columns plus a label column."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"table not found: {path}")
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
    label_idx = lowered.index("label") if "label" in lowered else len(header) - 1
    channel_idx = [i for i in range(len(header)) if i != label_idx]
    if not channel_idx:
        raise DataError(f"{path}: no channel columns beside the label")
    labels = [r[label_idx].strip() for r in rows]
    if all(lab == "" for lab in labels):
        raise DataError(f"{path}: label column is empty")
    if any(lab == "" for lab in labels):
        raise DataError(f"{path}: label column has gaps")
    try:
        values = np.array(
            [[float(r[i]) for i in channel_idx] for r in rows], dtype=np.float64
        ).T
    except (ValueError, IndexError) as e:
        raise DataError(f"{path}: channel columns must be numeric ({e})") from e
    record = TimeSeriesRecord(unit_id=path.stem, values=values, labels=labels)
    return sliding_window(record, length=length, stride=stride)


def zscore_fit(windows: list[Window]) -> NormalizationStats:
    """Per-channel mean/std over every timestep of the given windows (denominator N)."""
    if not windows:
        raise DataError("cannot fit normalization on an empty split")
    stacked = np.concatenate([w.data for w in windows], axis=1)
    mean = stacked.mean(axis=1)
    std = stacked.std(axis=1)  # ddof=0
    kept = [i for i in range(stacked.shape[0]) if std[i] > 1e-12]
    dropped = [i for i in range(stacked.shape[0]) if std[i] <= 1e-12]
    if not kept:
        raise DataError("every channel is constant; nothing to train on")
    if dropped:
        warnings.warn(f"dropping constant channels {dropped}", stacklevel=2)
    return NormalizationStats(mean=mean[kept], std=std[kept], kept=kept, dropped=dropped)


def zscore_apply(stats: NormalizationStats, windows: list[Window]) -> list[Window]:
    out = []
    for w in windows:
        data = (w.data[stats.kept] - stats.mean[:, None]) / stats.std[:, None]
        out.append(Window(data=data, target=w.target, unit_id=w.unit_id, end_step=w.end_step))
    return out


def _split_units(unit_ids: list[str], rng: np.random.Generator) -> dict[str, str]:
    order = list(unit_ids)
    rng.shuffle(order)
    n = len(order)
    n_val = max(1, int(round(0.15 * n)))
    n_test = max(1, int(round(0.15 * n)))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise DataError(f"{n} units is too few to split into train/val/test")
    assignment = {}
    for i, u in enumerate(order):
        if i < n_train:
            assignment[u] = "train"
        elif i < n_train + n_val:
            assignment[u] = "val"
        else:
            assignment[u] = "test"
    return assignment


DEFAULT_SYNTH_NOISE = 0.3


def _synth_records(
    seed: int,
    kind: str,
    n_units: int,
    n_classes: int,
    samples_per_class: int,
    noise: float,
    length: int | None,
    stride: int | None,
    r_max: float,
    n_channels: int | None,
) -> tuple[list[tuple[str, TimeSeriesRecord]], dict]:
    rng = np.random.default_rng(seed)
    if kind == "regression":
        length = 30 if length is None else length
        stride = 1 if stride is None else stride
        n_channels = 6 if n_channels is None else n_channels
        amp = rng.uniform(0.5, 2.0, size=n_channels)
        power = rng.uniform(0.5, 3.0, size=n_channels)
        records = []
        for u in range(n_units):
            t_fail = int(rng.integers(120, 261))
            t = np.arange(1, t_fail + 1, dtype=np.float64)
            frac = t / t_fail
            clean = amp[:, None] * frac[None, :] ** power[:, None]
            values = clean + noise * rng.standard_normal((n_channels, t_fail))
            rul = np.minimum(t_fail - t, r_max)
            records.append(TimeSeriesRecord(unit_id=f"u{u}", values=values, rul=rul))
        assignment = _split_units([r.unit_id for r in records], rng)
        tagged = []
        for rec in records:
            split_name = assignment[rec.unit_id]
            if split_name != "train":
                # held-out units stop before failure (true remaining life stays known),
                # mirroring how run-to-failure test sets are published
                t_cut = int(rng.integers(length, rec.n_timesteps + 1))
                rec = TimeSeriesRecord(
                    unit_id=rec.unit_id,
                    values=rec.values[:, :t_cut],
                    rul=rec.rul[:t_cut],
                )
            tagged.append((split_name, rec))
        meta = {
            "kind": "regression",
            "length": length,
            "stride": stride,
            "r_max": r_max,
            "n_channels": n_channels,
            "channel_names": [f"ch_{i}" for i in range(n_channels)],
            "generator": {"amp": amp.tolist(), "power": power.tolist()},
            "seed": seed,
        }
        return tagged, meta

    if kind == "classification":
        length = 128 if length is None else length
        stride = length if stride is None else stride
        n_channels = 3 if n_channels is None else n_channels
        class_names = [f"activity_{k}" for k in range(n_classes)]
        freqs = 2.0 + 3.0 * np.arange(n_classes)  # cycles per window, well separated
        amps = 1.0 + 0.25 * np.arange(n_classes)
        t = np.arange(length, dtype=np.float64) / length
        records = []
        for k, name in enumerate(class_names):
            for s in range(samples_per_class):
                phase = rng.uniform(0, 2 * np.pi, size=(n_channels, 1))
                chan_scale = 1.0 + 0.1 * np.arange(n_channels)[:, None]
                clean = amps[k] * chan_scale * np.sin(2 * np.pi * freqs[k] * t[None, :] + phase)
                data = clean + noise * rng.standard_normal((n_channels, length))
                records.append(
                    TimeSeriesRecord(unit_id=f"c{k}s{s}", values=data, labels=[name] * length)
                )
        order = rng.permutation(len(records))
        n = len(records)
        n_val = max(1, int(round(0.15 * n)))
        n_test = max(1, int(round(0.15 * n)))
        tagged = []
        for rank, i in enumerate(order):
            split_name = "train" if rank < n - n_val - n_test else (
                "val" if rank < n - n_test else "test")
            tagged.append((split_name, records[i]))
        meta = {
            "kind": "classification",
            "length": length,
            "stride": stride,
            "n_channels": n_channels,
            "channel_names": [f"ch_{i}" for i in range(n_channels)],
            "class_names": class_names,
            "generator": {"freqs": freqs.tolist(), "amps": amps.tolist()},
            "seed": seed,
        }
        return tagged, meta

    raise DataError(f"kind must be regression or classification, got {kind!r}")


def synth_generate(
    seed: int,
    kind: str,
    n_units: int = 200,
    n_classes: int = 4,
    samples_per_class: int = 120,
    noise: float = DEFAULT_SYNTH_NOISE,
    length: int | None = None,
    stride: int | None = None,
    r_max: float = 125.0,
    n_channels: int | None = None,
) -> DatasetSplit:
    """Deterministic desk-scale data.

    regression: unit lifetimes ~ uniform[120, 260]; channel c reads
    a_c * (t/T)^p_c + noise, so the degradation stage (hence RUL) is
    recoverable from a window. classification: class-specific sinusoid
    frequency/amplitude per channel plus noise.
    """
    tagged, meta = _synth_records(
        seed, kind, n_units, n_classes, samples_per_class, noise,
        length, stride, r_max, n_channels,
    )
    buckets: dict[str, list[Window]] = {"train": [], "val": [], "test": []}
    for split_name, rec in tagged:
        buckets[split_name].extend(sliding_window(rec, meta["length"], meta["stride"]))
    return DatasetSplit(
        train=buckets["train"], val=buckets["val"], test=buckets["test"], meta=meta
    )


def synth_write(seed: int, kind: str, path: str | Path, **kw) -> dict:
    """Generate synthetic records and write them in the columnar format."""
    tagged, meta = _synth_records(
        seed,
        kind,
        n_units=kw.get("n_units", 200),
        n_classes=kw.get("n_classes", 4),
        samples_per_class=kw.get("samples_per_class", 120),
        noise=kw.get("noise", DEFAULT_SYNTH_NOISE),
        length=kw.get("length"),
        stride=kw.get("stride"),
        r_max=kw.get("r_max", 125.0),
        n_channels=kw.get("n_channels"),
    )
    save_records_columnar(tagged, path, channel_names=meta["channel_names"])
    return meta


def save_records_columnar(
    tagged_records: list[tuple[str, TimeSeriesRecord]],
    path: str | Path,
    channel_names: list[str] | None = None,
) -> None:
    """Write split,unit,step,<channels...>,target rows (comma separated, header row)."""
    path = Path(path)
    if not tagged_records:
        raise DataError("nothing to write")
    n_ch = tagged_records[0][1].n_channels
    names = channel_names or [f"ch_{i}" for i in range(n_ch)]
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["split", "unit", "step"] + list(names) + ["target"])
        for split_name, rec in tagged_records:
            for s in range(rec.n_timesteps):
                if rec.labels is not None:
                    target = rec.labels[s]
                else:
                    target = repr(float(rec.rul[s]))
                writer.writerow(
                    [split_name, rec.unit_id, s]
                    + [repr(float(v)) for v in rec.values[:, s]]
                    + [target]
                )


def load_columnar(
    path: str | Path,
    length: int,
    stride: int = 1,
) -> DatasetSplit:
    """Rebuild records from a columnar CSV and re-window them.

    Consecutive rows of one (split, unit) pair form that unit's series;
    overlapping windows written by save_columnar are deduplicated by step.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"table not found: {path}")
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
    required = {"split", "unit", "step", "target"}
    if not required.issubset(set(lowered)):
        raise DataError(f"{path}: needs columns {sorted(required)} plus channels")
    idx = {name: lowered.index(name) for name in required}
    channel_idx = [i for i in range(len(header)) if i not in idx.values()]
    if not channel_idx:
        raise DataError(f"{path}: no channel columns")

    series: dict[tuple[str, str], dict[int, tuple[list[float], str]]] = {}
    for r in rows:
        key = (r[idx["split"]], r[idx["unit"]])
        step = int(r[idx["step"]])
        try:
            chans = [float(r[i]) for i in channel_idx]
        except ValueError as e:
            raise DataError(f"{path}: channel columns must be numeric ({e})") from e
        series.setdefault(key, {})[step] = (chans, r[idx["target"]])

    def parse_target(raw: str) -> float | str:
        try:
            return float(raw)
        except ValueError:
            return raw

    buckets: dict[str, list[Window]] = {"train": [], "val": [], "test": []}
    kinds = set()
    for (split_name, unit), per_step in series.items():
        if split_name not in buckets:
            raise DataError(f"{path}: unknown split {split_name!r}")
        steps = sorted(per_step)
        values = np.array([per_step[s][0] for s in steps], dtype=np.float64).T
        targets = [parse_target(per_step[s][1]) for s in steps]
        numeric = all(isinstance(t, float) for t in targets)
        kinds.add("regression" if numeric else "classification")
        if numeric:
            rec = TimeSeriesRecord(unit_id=unit, values=values,
                                   rul=np.array(targets, dtype=np.float64))
        else:
            rec = TimeSeriesRecord(unit_id=unit, values=values,
                                   labels=[str(t) for t in targets])
        eff_length = min(length, rec.n_timesteps)
        buckets[split_name].extend(sliding_window(rec, eff_length, stride))
    if len(kinds) != 1:
        raise DataError(f"{path}: mixed numeric and class targets")
    meta = {
        "kind": kinds.pop(),
        "length": length,
        "stride": stride,
        "channel_names": [header[i] for i in channel_idx],
    }
    return DatasetSplit(train=buckets["train"], val=buckets["val"], test=buckets["test"], meta=meta)
