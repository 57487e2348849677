"""Small from-scratch classifiers: ERM, kernel-penalised FRL and oracle FRL.

A model is a tanh feature extractor followed by a linear head.  With no
hidden layers the extractor is the identity on the logit, i.e. logistic
regression whose representation is the logit itself.

Inputs are the x_z channels followed by the x_a channels, mapped to +-1.
``a`` and ``z`` are never inputs; the sensitive attribute reaches a model
only through x_a.

Training is plain mini-batch gradient descent with group-stratified
batches, so ERM and FRL see exactly the same batches for a given seed.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .datasets import Dataset
from .errors import InputError, TrainingDivergenceError

FORMAT_VERSION = 1
MODES = ("ERM", "FRL", "OracleFRL")


@dataclass(frozen=True)
class ModelSpec:
    hidden_widths: tuple[int, ...] = ()
    representation_dim: int = 1
    learning_rate: float = 0.5
    epochs: int = 20
    batch_size: int = 512
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if any(w < 1 for w in self.hidden_widths):
            raise InputError("hidden widths must be positive")
        if self.hidden_widths and self.representation_dim != self.hidden_widths[-1]:
            raise InputError("representation_dim must equal the last hidden width")
        if not self.hidden_widths and self.representation_dim != 1:
            raise InputError("logistic regression has a 1-dimensional representation")
        if self.learning_rate <= 0 or self.epochs < 0 or self.batch_size < 1 or self.l2 < 0:
            raise InputError("invalid optimiser settings")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden_widths"] = list(self.hidden_widths)
        return d

    @classmethod
    def from_dict(cls, doc) -> "ModelSpec":
        unknown = set(doc) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InputError(f"unknown ModelSpec keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True)
class FrlPenaltySpec:
    kernel_bandwidths: tuple[float, ...] = (0.5, 1.0, 2.0)
    penalty_weight: float = 10.0
    standardize: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kernel_bandwidths",
                           tuple(float(b) for b in self.kernel_bandwidths))
        if not self.kernel_bandwidths or any(b <= 0 for b in self.kernel_bandwidths):
            raise InputError("kernel bandwidths must be positive")
        if self.penalty_weight < 0:
            raise InputError("penalty_weight must be non-negative")

    def to_dict(self) -> dict:
        return {"kernel_bandwidths": list(self.kernel_bandwidths),
                "penalty_weight": self.penalty_weight, "standardize": self.standardize}

    @classmethod
    def from_dict(cls, doc) -> "FrlPenaltySpec":
        unknown = set(doc) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise InputError(f"unknown FrlPenaltySpec keys: {sorted(unknown)}")
        return cls(**doc)


Params = list  # [(W, b), ...]; last pair is the head


@dataclass(frozen=True, eq=False)
class TrainedModel:
    spec: ModelSpec
    weights: tuple
    mode: str
    input_mask: np.ndarray
    widths: tuple[int, int]
    penalty: FrlPenaltySpec | None = None
    target: str = "y"

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"mode must be one of {MODES}")
        mask = np.array(self.input_mask, dtype=bool)
        if mask.shape != (sum(self.widths),):
            raise InputError("input_mask width mismatch")
        mask.setflags(write=False)
        object.__setattr__(self, "input_mask", mask)
        frozen = []
        for W, b in self.weights:
            W = np.array(W, dtype=np.float64)
            b = np.array(b, dtype=np.float64)
            W.setflags(write=False)
            b.setflags(write=False)
            frozen.append((W, b))
        object.__setattr__(self, "weights", tuple(frozen))

    def inputs(self, data: Dataset) -> np.ndarray:
        if tuple(data.widths) != tuple(self.widths):
            raise InputError(f"dataset widths {data.widths} do not match model {self.widths}")
        return _encode(data.features(), self.input_mask)

    def to_dict(self) -> dict:
        return {
            "version": FORMAT_VERSION,
            "mode": self.mode,
            "target": self.target,
            "spec": self.spec.to_dict(),
            "penalty": None if self.penalty is None else self.penalty.to_dict(),
            "widths": list(self.widths),
            "input_mask": [int(v) for v in self.input_mask],
            "weights": [{"W": W.tolist(), "b": b.tolist()} for W, b in self.weights],
        }

    @classmethod
    def from_dict(cls, doc) -> "TrainedModel":
        if doc.get("version") != FORMAT_VERSION:
            raise InputError(f"unsupported model format version {doc.get('version')!r}")
        try:
            penalty = None if doc["penalty"] is None else FrlPenaltySpec.from_dict(doc["penalty"])
            weights = tuple((np.array(l["W"], dtype=np.float64).reshape(-1, len(l["b"])),
                             np.array(l["b"], dtype=np.float64)) for l in doc["weights"])
            return cls(ModelSpec.from_dict(doc["spec"]), weights, doc["mode"],
                       np.array(doc["input_mask"], dtype=bool), tuple(doc["widths"]),
                       penalty, doc.get("target", "y"))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed model document: {exc}") from exc


def save_model(model: TrainedModel, path) -> None:
    # json writes floats with repr, which round-trips exactly
    Path(path).write_text(json.dumps(model.to_dict(), indent=1) + "\n")


def load_model(path) -> TrainedModel:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model {path}: {exc}") from exc
    return TrainedModel.from_dict(doc)


def _encode(features: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return (2.0 * features - 1.0) * mask


# ---------------------------------------------------------------- network


def init_params(n_in: int, spec: ModelSpec, gen: np.random.Generator) -> Params:
    sizes = [n_in, *spec.hidden_widths, 1]
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        W = gen.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, fan_out))
        params.append((W, np.zeros(fan_out)))
    return params


def forward(params: Params, X: np.ndarray):
    """Return (representation, logit, hidden activations)."""
    acts = [X]
    h = X
    for W, b in params[:-1]:
        h = np.tanh(h @ W + b)
        acts.append(h)
    W, b = params[-1]
    logit = (h @ W + b)[:, 0]
    rep = h if len(params) > 1 else logit[:, None]
    return rep, logit, acts


def _softplus(x):
    return np.logaddexp(0.0, x)


def mmd2(rep: np.ndarray, groups: np.ndarray, bandwidths: Sequence[float]):
    """Unbiased (U-statistic) squared MMD between the two groups and its gradient.

    Within-group sums exclude the diagonal, so two samples from one
    distribution score zero in expectation whatever their spread.
    """
    g1 = groups.astype(bool)
    n1 = int(g1.sum())
    n0 = g1.size - n1
    if n0 < 2 or n1 < 2:
        raise InputError("the FRL penalty needs at least two records per group")
    u1 = g1.astype(np.float64)
    u0 = 1.0 - u1
    # pair weight c_ij depends only on the two groups
    c11, c00, c01 = 1.0 / (n1 * (n1 - 1)), 1.0 / (n0 * (n0 - 1)), -1.0 / (n0 * n1)
    if rep.shape[1] <= 8:
        dist = np.zeros((g1.size, g1.size))
        buf = np.empty_like(dist)
        for col in rep.T:
            np.subtract.outer(col, col, out=buf)
            buf *= buf
            dist += buf
    else:
        sq = (rep ** 2).sum(axis=1)
        dist = np.maximum(sq[:, None] + sq[None, :] - 2.0 * rep @ rep.T, 0.0)
        buf = np.empty_like(dist)
    value = 0.0
    row = np.zeros(g1.size)           # sum_j c_ij k_ij / s^2
    row_r = np.zeros_like(rep)        # sum_j c_ij k_ij r_j / s^2
    for s in bandwidths:
        np.multiply(dist, -0.5 / (s * s), out=buf)
        # exp is very slow on underflow; exp(-700) is already ~1e-304
        np.maximum(buf, -700.0, out=buf)
        np.exp(buf, out=buf)
        k1, k0 = buf @ u1, buf @ u0
        # the diagonal holds k(r, r) = 1 and is dropped from within-group sums
        value += c11 * (u1 @ k1 - n1) + c00 * (u0 @ k0 - n0) + 2.0 * c01 * (u1 @ k0)
        w1 = np.where(g1, c11, c01)   # c_ij for j in group 1
        w0 = np.where(g1, c01, c00)   # c_ij for j in group 0
        row += (w1 * k1 + w0 * k0) / (s * s)
        row_r += (w1[:, None] * (buf @ (u1[:, None] * rep))
                  + w0[:, None] * (buf @ (u0[:, None] * rep))) / (s * s)
    grad = -2.0 * (row[:, None] * rep - row_r)
    return float(value), grad


def standardized_mmd2(rep: np.ndarray, groups: np.ndarray, bandwidths: Sequence[float],
                      eps: float = 1e-6):
    """:func:`mmd2` on the batch-standardised representation.

    Each column is centred and scaled by its pooled standard deviation
    (floored by ``eps`` in the variance), so the penalty cannot be lowered
    by stretching or shrinking the representation.
    """
    mu = rep.mean(axis=0)
    sd = np.sqrt(rep.var(axis=0) + eps)
    z = (rep - mu) / sd
    value, gz = mmd2(z, groups, bandwidths)
    grad = (gz - gz.mean(axis=0) - z * (gz * z).mean(axis=0)) / sd
    return value, grad


def objective(params: Params, X, t, groups=None, penalty: FrlPenaltySpec | None = None,
              l2: float = 0.0):
    """Mean cross-entropy + penalty * MMD^2 + l2/2 * ||weights||^2, with gradients."""
    rep, logit, acts = forward(params, X)
    n = X.shape[0]
    loss = float(np.mean(_softplus(logit) - t * logit))
    dlogit = (expit(logit) - t) / n

    grads = [None] * len(params)
    W, b = params[-1]
    h = acts[-1]
    grads[-1] = (h.T @ dlogit[:, None] + l2 * W, np.array([dlogit.sum()]))
    if len(params) > 1:
        dh = dlogit[:, None] @ W.T
    else:
        dh = None

    if penalty is not None and penalty.penalty_weight > 0:
        penalty_fn = standardized_mmd2 if penalty.standardize else mmd2
        value, grad_rep = penalty_fn(rep, groups, penalty.kernel_bandwidths)
        loss += penalty.penalty_weight * value
        if len(params) > 1:
            dh = dh + penalty.penalty_weight * grad_rep
        else:
            extra = penalty.penalty_weight * grad_rep[:, 0]
            grads[-1] = (grads[-1][0] + h.T @ extra[:, None],
                         grads[-1][1] + extra.sum())

    for i in range(len(params) - 2, -1, -1):
        W, b = params[i]
        out = acts[i + 1]
        dz = dh * (1.0 - out ** 2)
        grads[i] = (acts[i].T @ dz + l2 * W, dz.sum(axis=0))
        dh = dz @ W.T
    loss += 0.5 * l2 * sum(float((W ** 2).sum()) for W, _ in params)
    return loss, grads


def flatten(params: Params) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in params])


def unflatten(vec: np.ndarray, like: Params) -> Params:
    out, i = [], 0
    for W, b in like:
        Wn = vec[i: i + W.size].reshape(W.shape)
        i += W.size
        bn = vec[i: i + b.size].reshape(b.shape)
        i += b.size
        out.append((Wn, bn))
    return out


# ---------------------------------------------------------------- training


def _stratified_batches(groups: np.ndarray, batch_size: int, gen: np.random.Generator,
                        require_both: bool):
    n = groups.size
    n_batches = max(1, math.ceil(n / batch_size))
    parts = []
    for g in (0, 1):
        idx = np.flatnonzero(groups == g)
        idx = idx[gen.permutation(idx.size)]
        parts.append(np.array_split(idx, n_batches))
    batches = []
    for b in range(n_batches):
        if require_both and (parts[0][b].size == 0 or parts[1][b].size == 0):
            raise InputError("a batch lacks one of the groups; use fewer, larger batches")
        batches.append(np.concatenate([parts[0][b], parts[1][b]]))
    return batches


def fit(X: np.ndarray, t: np.ndarray, groups: np.ndarray, spec: ModelSpec,
        penalty: FrlPenaltySpec | None = None) -> Params:
    """Mini-batch gradient descent; deterministic for a given ``spec.seed``."""
    if X.shape[0] == 0:
        raise InputError("cannot train on an empty dataset")
    gen = np.random.default_rng(spec.seed)
    params = init_params(X.shape[1], spec, gen)
    active = penalty is not None and penalty.penalty_weight > 0
    t = t.astype(np.float64)
    for epoch in range(spec.epochs):
        for batch in _stratified_batches(groups, spec.batch_size, gen, require_both=active):
            loss, grads = objective(params, X[batch], t[batch], groups[batch],
                                    penalty if active else None, spec.l2)
            if not math.isfinite(loss):
                raise TrainingDivergenceError(epoch, loss)
            params = [(W - spec.learning_rate * gW, b - spec.learning_rate * gb)
                      for (W, b), (gW, gb) in zip(params, grads)]
    return params


def _train(data: Dataset, spec: ModelSpec, mode: str, mask: np.ndarray,
           penalty: FrlPenaltySpec | None, target: str = "y") -> TrainedModel:
    if len(data) == 0:
        raise InputError("training set is empty")
    X = _encode(data.features(), mask)
    t = data.y if target == "y" else data.a
    params = fit(X, t, data.a, spec, penalty)
    return TrainedModel(spec, tuple(params), mode, mask, data.widths, penalty, target)


def full_mask(data: Dataset) -> np.ndarray:
    return np.ones(sum(data.widths), dtype=bool)


def train_erm(train: Dataset, spec: ModelSpec) -> TrainedModel:
    """Unconstrained model minimising cross-entropy on (x_z, x_a)."""
    return _train(train, spec, "ERM", full_mask(train), None)


def train_frl(train: Dataset, spec: ModelSpec, penalty: FrlPenaltySpec) -> TrainedModel:
    """Cross-entropy plus a kernel MMD penalty pulling R|A=0 and R|A=1 together."""
    return _train(train, spec, "FRL", full_mask(train), penalty)


def train_oracle_frl(train: Dataset, spec: ModelSpec) -> TrainedModel:
    """ERM restricted to the x_z channels."""
    k_z, k_a = train.widths
    mask = np.r_[np.ones(k_z, dtype=bool), np.zeros(k_a, dtype=bool)]
    return _train(train, spec, "OracleFRL", mask, None)


def train_group_classifier(train: Dataset, spec: ModelSpec) -> TrainedModel:
    """ERM predicting the attribute a from (x_z, x_a)."""
    return _train(train, spec, "ERM", full_mask(train), None, target="a")


def representations(model: TrainedModel, data: Dataset) -> np.ndarray:
    rep, _, _ = forward(list(model.weights), model.inputs(data))
    return rep


def logits(model: TrainedModel, data: Dataset) -> np.ndarray:
    _, logit, _ = forward(list(model.weights), model.inputs(data))
    return logit


def predict(model: TrainedModel, data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Sigmoid scores and hard labels; a score of exactly 0.5 maps to 0."""
    logit = logits(model, data)
    scores = expit(logit)
    return scores, (scores > 0.5).astype(np.int8)
