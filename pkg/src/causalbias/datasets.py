"""Tabular datasets: label-bias injection, splits, summaries and persistence.

A :class:`Dataset` holds binary channel matrices ``x_z`` and ``x_a``, the
attribute ``a``, the observed label ``y`` and the latent condition ``z``.
``z`` is oracle-only: trainers call :meth:`Dataset.features` and
:attr:`Dataset.y`; only metrics and audits read :attr:`Dataset.oracle_z`.
"""

from __future__ import annotations

import copy
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError

DATA_FILE = "data.csv"
MANIFEST_FILE = "manifest.json"


def _frozen(arr, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    x_z: np.ndarray
    x_a: np.ndarray
    a: np.ndarray
    y: np.ndarray
    z: np.ndarray = field(repr=False)
    record_index: np.ndarray | None = None
    manifest: dict = field(default_factory=dict)

    def __post_init__(self):
        x_z = _frozen(self.x_z, np.uint8)
        x_a = _frozen(self.x_a, np.uint8)
        n = x_z.shape[0]
        if x_z.ndim != 2 or x_a.ndim != 2 or x_a.shape[0] != n:
            raise InputError("x_z and x_a must be 2-D with matching row counts")
        cols = {}
        for name in ("a", "y", "z"):
            v = _frozen(getattr(self, name), np.int8)
            if v.shape != (n,):
                raise InputError(f"column {name} has shape {v.shape}, expected ({n},)")
            if v.size and not np.isin(v, (0, 1)).all():
                raise InputError(f"column {name} must be binary")
            cols[name] = v
        if not (np.isin(x_z, (0, 1)).all() and np.isin(x_a, (0, 1)).all()):
            raise InputError("channels must be binary")
        idx = np.arange(n) if self.record_index is None else self.record_index
        idx = _frozen(idx, np.int64)
        if idx.shape != (n,):
            raise InputError("record_index length mismatch")
        object.__setattr__(self, "x_z", x_z)
        object.__setattr__(self, "x_a", x_a)
        for name, v in cols.items():
            object.__setattr__(self, name, v)
        object.__setattr__(self, "record_index", idx)
        object.__setattr__(self, "manifest", copy.deepcopy(dict(self.manifest)))

    def __len__(self):
        return self.x_z.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    @property
    def oracle_z(self) -> np.ndarray:
        """Latent condition.  Metrics only; never a training input."""
        return self.z

    @property
    def widths(self) -> tuple[int, int]:
        return self.x_z.shape[1], self.x_a.shape[1]

    def features(self) -> np.ndarray:
        """Model inputs: x_z channels followed by x_a channels (no a, no z)."""
        return np.hstack([self.x_z, self.x_a]).astype(np.float64)

    def subset(self, rows, **manifest_updates) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        manifest = dict(self.manifest)
        manifest.update(manifest_updates)
        return Dataset(self.x_z[rows], self.x_a[rows], self.a[rows], self.y[rows],
                       self.z[rows], self.record_index[rows], manifest)

    def with_labels(self, y, **manifest_updates) -> "Dataset":
        manifest = dict(self.manifest)
        manifest.update(manifest_updates)
        return Dataset(self.x_z, self.x_a, self.a, y, self.z, self.record_index, manifest)

    def equals(self, other: "Dataset") -> bool:
        return (self.manifest == other.manifest
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("x_z", "x_a", "a", "y", "z", "record_index")))


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise InputError("train_fraction must lie in (0, 1)")


def inject_label_bias(data: Dataset, target_group: int, flip_rate: float, seed: int) -> Dataset:
    """Relabel a fixed fraction of one group's positives as negative.

    Exactly ``floor(flip_rate * P)`` of the ``P`` records with ``a ==
    target_group`` and ``y == 1`` are drawn without replacement and set to
    ``y = 0``.  Nothing else changes.
    """
    if target_group not in (0, 1):
        raise InputError("target_group must be 0 or 1")
    if not 0.0 <= flip_rate <= 1.0:
        raise InputError("flip_rate must lie in [0, 1]")
    positives = np.flatnonzero((data.a == target_group) & (data.y == 1))
    if positives.size == 0:
        raise InputError(f"no positive records in group {target_group}")
    count = math.floor(round(flip_rate * positives.size, 9))
    rng = np.random.default_rng(seed)
    flipped = np.sort(rng.choice(positives, size=count, replace=False))
    y = data.y.copy()
    y[flipped] = 0
    record = {"group": int(target_group), "rate": float(flip_rate),
              "seed": int(seed), "flipped": int(count)}
    history = list(data.manifest.get("bias_injection") or []) + [record]
    return data.with_labels(y, bias_injection=history)


def split(data: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then cut at ``floor(train_fraction * n)``.

    Each side keeps the original record order.
    """
    n = len(data)
    if n == 0:
        raise InputError("cannot split an empty dataset")
    perm = np.random.default_rng(spec.seed).permutation(n)
    cut = math.floor(spec.train_fraction * n)
    meta = {"train_fraction": float(spec.train_fraction), "seed": int(spec.seed)}
    left = data.subset(np.sort(perm[:cut]), split=dict(meta, side="train"))
    right = data.subset(np.sort(perm[cut:]), split=dict(meta, side="test"))
    return left, right


def group_stats(data: Dataset) -> dict:
    """Per-group counts, p(a), p(y=1 | a) and label-noise rate p(y != z | a).

    Groups without records map to ``None``.
    """
    n = len(data)
    out = {"n": n, "groups": {}}
    for g in (0, 1):
        mask = data.a == g
        count = int(mask.sum())
        if count == 0:
            out["groups"][g] = None
            continue
        out["groups"][g] = {
            "count": count,
            "p_a": count / n,
            "prevalence": float(data.y[mask].mean()),
            "condition_rate": float(data.oracle_z[mask].mean()),
            "noise_rate": float((data.y[mask] != data.oracle_z[mask]).mean()),
        }
    return out


def _columns(data: Dataset) -> list[str]:
    k_z, k_a = data.widths
    return [f"xz{j}" for j in range(k_z)] + [f"xa{j}" for j in range(k_a)] + ["a", "y", "z"]


def dumps_csv(data: Dataset) -> str:
    table = np.hstack([data.x_z, data.x_a, data.a[:, None], data.y[:, None], data.z[:, None]])
    buf = io.StringIO()
    buf.write(",".join(_columns(data)) + "\n")
    for row in table:
        buf.write(",".join(map(str, row.tolist())) + "\n")
    return buf.getvalue()


def _manifest_doc(data: Dataset) -> dict:
    doc = dict(data.manifest)
    doc["widths"] = {"x_z": data.widths[0], "x_a": data.widths[1]}
    doc["n"] = len(data)
    if not np.array_equal(data.record_index, np.arange(len(data))):
        doc["record_index"] = data.record_index.tolist()
    return doc


def write_dataset(data: Dataset, directory) -> Path:
    """Write ``data.csv`` and the ``manifest.json`` sidecar into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / DATA_FILE).write_text(dumps_csv(data))
    (directory / MANIFEST_FILE).write_text(
        json.dumps(_manifest_doc(data), indent=2, sort_keys=True) + "\n")
    return directory


def read_dataset(directory) -> Dataset:
    directory = Path(directory)
    try:
        manifest = json.loads((directory / MANIFEST_FILE).read_text())
        lines = (directory / DATA_FILE).read_text().splitlines()
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read dataset at {directory}: {exc}") from exc
    try:
        k_z = manifest.pop("widths")["x_z"]
        manifest.pop("n")
        header = lines[0].split(",")
        body = (np.array([[int(v) for v in ln.split(",")] for ln in lines[1:]], dtype=np.int64)
                if len(lines) > 1 else np.zeros((0, len(header)), dtype=np.int64))
    except (KeyError, IndexError, ValueError) as exc:
        raise InputError(f"malformed dataset at {directory}: {exc}") from exc
    if body.shape[1] != len(header) or header[-3:] != ["a", "y", "z"]:
        raise InputError(f"malformed header in {directory / DATA_FILE}")
    index = manifest.pop("record_index", None)
    return Dataset(body[:, :k_z], body[:, k_z:-3], body[:, -3], body[:, -2], body[:, -1],
                   index, manifest)
