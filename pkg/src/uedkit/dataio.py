"""Dataset container, binary persistence, and train/test splits.

File layout (all little-endian)::

    magic   4 bytes  b"UED1"
    version u16      currently 1
    n_traces u32
    trace_len u32
    n_emitters u32
    then per trace: emitter_id i32, day u16, trace_len * (I f32, Q f32)

so a file holds exactly ``18 + n_traces * (6 + 8 * trace_len)`` bytes.
Externally converted real recordings (e.g. WiSig / ORACLE exports, pre-sliced
to fixed-length traces) use the same container; see README for the recipe.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, ValidationError
from .modality import IQTrace

MAGIC = b"UED1"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")


@dataclass
class Dataset:
    """Column-wise trace store: iq is (n, 2, trace_len) float32."""

    iq: np.ndarray
    emitter_ids: np.ndarray
    days: np.ndarray
    n_emitters: int

    def __post_init__(self):
        self.iq = np.ascontiguousarray(self.iq, dtype=np.float32)
        self.emitter_ids = np.asarray(self.emitter_ids, dtype=np.int32)
        self.days = np.asarray(self.days, dtype=np.int16)
        if self.iq.ndim != 3 or self.iq.shape[1] != 2:
            raise ValidationError(f"iq must be (n, 2, trace_len), got {self.iq.shape}")
        n = self.iq.shape[0]
        if self.emitter_ids.shape != (n,) or self.days.shape != (n,):
            raise ValidationError("emitter_ids/days must have one entry per trace")
        if n and (self.emitter_ids.min() < 0 or self.emitter_ids.max() >= self.n_emitters):
            raise ValidationError("emitter_id out of range")

    def __len__(self):
        return self.iq.shape[0]

    @property
    def trace_len(self) -> int:
        return self.iq.shape[2]

    def trace(self, index: int) -> IQTrace:
        return IQTrace(
            self.iq[index, 0].astype(np.float64),
            self.iq[index, 1].astype(np.float64),
            int(self.emitter_ids[index]),
            int(self.days[index]),
        )

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(
            self.iq[indices], self.emitter_ids[indices], self.days[indices], self.n_emitters
        )


def write_dataset(path, dataset: Dataset) -> None:
    n = len(dataset)
    trace_len = dataset.trace_len if n else 0
    payload = bytearray(_HEADER.pack(MAGIC, VERSION, n, trace_len, dataset.n_emitters))
    rec = struct.Struct("<ih")
    interleaved = np.empty((trace_len * 2,), dtype="<f4")
    for t in range(n):
        payload += rec.pack(int(dataset.emitter_ids[t]), int(dataset.days[t]))
        interleaved[0::2] = dataset.iq[t, 0]
        interleaved[1::2] = dataset.iq[t, 1]
        payload += interleaved.tobytes()
    with open(path, "wb") as fh:
        fh.write(bytes(payload))


def read_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise DataFormatError(f"file too short for header ({len(blob)} bytes)")
    magic, version, n, trace_len, n_emitters = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r} at byte 0")
    if version != VERSION:
        raise DataFormatError(f"unsupported version {version}")
    record = 6 + 8 * trace_len
    expected = _HEADER.size + n * record
    if len(blob) != expected:
        bad_trace = max(0, (len(blob) - _HEADER.size) // record) if record else 0
        raise DataFormatError(
            f"file length {len(blob)} != expected {expected}; "
            f"truncated near trace {min(bad_trace, max(n - 1, 0))} (byte {len(blob)})"
        )
    iq = np.empty((n, 2, trace_len), dtype=np.float32)
    emitter_ids = np.empty(n, dtype=np.int32)
    days = np.empty(n, dtype=np.int16)
    rec = struct.Struct("<ih")
    offset = _HEADER.size
    for t in range(n):
        emitter_ids[t], days[t] = rec.unpack_from(blob, offset)
        offset += 6
        flat = np.frombuffer(blob, dtype="<f4", count=2 * trace_len, offset=offset)
        if not np.all(np.isfinite(flat)):
            raise DataFormatError(f"non-finite sample in trace {t} (byte {offset})")
        iq[t, 0] = flat[0::2]
        iq[t, 1] = flat[1::2]
        offset += 8 * trace_len
    if n and (emitter_ids.min() < 0 or emitter_ids.max() >= n_emitters):
        raise DataFormatError("emitter_id out of declared range")
    return Dataset(iq, emitter_ids, days, n_emitters)


@dataclass
class SplitSpec:
    unknown_emitters: frozenset
    train_fraction_per_day: float = 0.8
    fold_id: int = 0

    def __post_init__(self):
        self.unknown_emitters = frozenset(int(e) for e in self.unknown_emitters)
        if not 0.0 < self.train_fraction_per_day < 1.0:
            raise ValidationError("train fraction must be in (0, 1)")
        if not self.unknown_emitters:
            raise ValidationError("unknown-emitter set must be non-empty")


@dataclass
class Split:
    train_indices: np.ndarray
    test_indices: np.ndarray
    test_labels: np.ndarray  # 1 = unknown emitter, 0 = known
    spec: SplitSpec = field(repr=False, default=None)


def make_split(dataset: Dataset, spec: SplitSpec) -> Split:
    """Per-(emitter, day) temporal split in stored order.

    Known emitters contribute their first ``train_fraction_per_day`` of traces
    per day to training; every emitter contributes the remainder to the test
    set, where traces of the held-out emitters are labelled unknown (1).
    """
    emitters = set(int(e) for e in np.unique(dataset.emitter_ids))
    if not spec.unknown_emitters <= emitters:
        raise ValidationError("unknown emitters not present in the dataset")
    if spec.unknown_emitters == emitters:
        raise ValidationError("all emitters marked unknown: no training data remains")

    train, test, labels = [], [], []
    for e in sorted(emitters):
        for day in np.unique(dataset.days[dataset.emitter_ids == e]):
            idx = np.flatnonzero((dataset.emitter_ids == e) & (dataset.days == day))
            if idx.size < 5:
                raise ValidationError(
                    f"emitter {e} day {int(day)} has only {idx.size} traces (< 5)"
                )
            cut = int(np.floor(spec.train_fraction_per_day * idx.size))
            if e not in spec.unknown_emitters:
                train.append(idx[:cut])
            test.append(idx[cut:])
            labels.append(np.full(idx.size - cut, int(e in spec.unknown_emitters), np.uint8))
    return Split(
        train_indices=np.concatenate(train),
        test_indices=np.concatenate(test),
        test_labels=np.concatenate(labels),
        spec=spec,
    )
