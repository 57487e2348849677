"""Separability AUC, group accuracy, mutual information and fairness verdicts.

All information quantities are in nats.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from . import models
from .datasets import Dataset
from .errors import InputError
from .scm import JointTable

EPSILON = 0.01          # independence threshold for I(A; R), nats
DEFAULT_BINS = 8
N_PERMUTATIONS = 100
# width, in standard deviations, of the uniform jitter added to standardised
# representations before binning; structure well below it carries almost no
# information, for A and Y alike
REPRESENTATION_JITTER = 0.75


@dataclass(frozen=True)
class AucResult:
    auc: float
    n_pos: int
    n_neg: int
    u: float  # correctly ordered pos/neg pairs, ties counted 1/2

    def to_dict(self) -> dict:
        return {"auc": self.auc, "n_pos": self.n_pos, "n_neg": self.n_neg, "u": self.u}


@dataclass(frozen=True)
class MiEstimate:
    """An MI value plus how it was obtained.

    For plug-in estimates ``details`` carries the permutation null
    (``null_mean``, ``null_sd``, ``null_q95``) and the delta-method standard
    error ``se``; :attr:`calibrated` subtracts the null mean.
    """

    value: float
    method: str
    details: dict = field(default_factory=dict)

    @property
    def calibrated(self) -> float:
        if self.method == "exact":
            return self.value
        return max(0.0, self.value - self.details.get("null_mean", 0.0))

    @property
    def se(self) -> float:
        return self.details.get("se", 0.0)

    def to_dict(self) -> dict:
        return {"value": self.value, "calibrated": self.calibrated,
                "method": self.method, "details": dict(self.details)}


# ---------------------------------------------------------------- AUC


def auc(scores, labels) -> AucResult:
    """Probability that a random positive outranks a random negative."""
    s = np.asarray(scores, dtype=float).ravel()
    lab = np.asarray(labels).ravel()
    if s.shape != lab.shape:
        raise InputError("scores and labels must have equal length")
    pos = lab == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise InputError("auc needs both classes")
    doubled = np.rint(2 * rankdata(s)).astype(np.int64)
    u = (int(doubled[pos].sum()) - n_pos * (n_pos + 1)) / 2.0
    return AucResult(u / (n_pos * n_neg), n_pos, n_neg, u)


def measure_separability(train: Dataset, test: Dataset, spec: models.ModelSpec) -> AucResult:
    """Test AUC of a classifier trained to predict the group from (x_z, x_a)."""
    for name, d in (("train", train), ("test", test)):
        if not (np.any(d.a == 0) and np.any(d.a == 1)):
            raise InputError(f"{name} set must contain both groups")
    clf = models.train_group_classifier(train, spec)
    scores, _ = models.predict(clf, test)
    return auc(scores, test.a)


def group_accuracy(model: models.TrainedModel, test: Dataset) -> dict:
    """Accuracy against ``test.y`` overall and per group; empty groups map to None."""
    _, labels = models.predict(model, test)
    correct = labels == test.y
    out = {"overall": float(correct.mean()) if len(test) else None}
    for g in (0, 1):
        mask = test.a == g
        out[g] = float(correct[mask].mean()) if mask.any() else None
    return out


# ---------------------------------------------------------------- exact MI


def mutual_information_exact(joint: JointTable, vars_x, vars_y, given=()) -> MiEstimate:
    """(Conditional) mutual information by summation over the joint table."""
    vx, vy, vg = (list([v] if isinstance(v, str) else v) for v in (vars_x, vars_y, given))
    if not vx or not vy:
        raise InputError("vars_x and vars_y must be non-empty")
    if set(vx) & set(vy) or set(vx) & set(vg) or set(vy) & set(vg):
        raise InputError("variable sets must be disjoint")
    p = joint.marginal(vx + vy + vg)
    sx = int(np.prod(p.shape[: len(vx)]))
    sy = int(np.prod(p.shape[len(vx): len(vx) + len(vy)]))
    p = p.reshape(sx, sy, -1)
    pg = p.sum(axis=(0, 1))
    pxg = p.sum(axis=1)
    pyg = p.sum(axis=0)
    nz = p > 0
    ratio = (p * pg[None, None, :])[nz] / (pxg[:, None, :] * pyg[None, :, :])[nz]
    value = float(np.sum(p[nz] * np.log(ratio)))
    return MiEstimate(max(0.0, value), "exact",
                      {"vars_x": vx, "vars_y": vy, "given": vg})


# ---------------------------------------------------------------- plug-in MI


def discretize(samples, bins: int = DEFAULT_BINS, max_levels: int = 32) -> np.ndarray:
    """Integer cell code per row.

    Integer or boolean columns, and columns with at most ``max_levels``
    distinct values, are used as-is; otherwise values are grouped into
    ``bins`` equal-mass bins, never splitting a level.  Rows are then coded
    by their joint cell.
    """
    x = np.asarray(samples)
    if x.ndim == 1:
        x = x[:, None]
    if bins < 2:
        raise InputError("bins must be >= 2")
    cols = []
    for j in range(x.shape[1]):
        col = x[:, j]
        if col.dtype.kind in "biu":
            cols.append(np.unique(col, return_inverse=True)[1].ravel())
            continue
        codes = np.unique(col, return_inverse=True)[1].ravel()
        if codes.max(initial=-1) + 1 <= max_levels:
            cols.append(codes)
        else:
            edges = np.quantile(codes, np.arange(1, bins) / bins, method="inverted_cdf")
            cols.append(np.searchsorted(np.unique(edges), codes, side="left"))
    if not cols:
        return np.zeros(x.shape[0], dtype=np.int64)
    _, codes = np.unique(np.stack(cols, axis=1), axis=0, return_inverse=True)
    return codes.ravel().astype(np.int64)


def _mi_codes(cx: np.ndarray, cy: np.ndarray) -> tuple[float, float]:
    """Plug-in MI of two code vectors and its delta-method standard error."""
    n = cx.size
    nx, ny = cx.max() + 1, cy.max() + 1
    table = np.bincount(cx * ny + cy, minlength=nx * ny).reshape(nx, ny) / n
    px = table.sum(axis=1, keepdims=True)
    py = table.sum(axis=0, keepdims=True)
    nz = table > 0
    logr = np.log(table[nz] / (px @ py)[nz])
    mi = float(np.sum(table[nz] * logr))
    var = float(np.sum(table[nz] * logr ** 2)) - mi ** 2
    return max(0.0, mi), float(np.sqrt(max(var, 0.0) / n))


def mutual_information_plugin(samples_x, samples_y, bins: int = DEFAULT_BINS,
                              n_permutations: int = N_PERMUTATIONS, seed: int = 0,
                              max_levels: int = 32, jitter: float = 0.0) -> MiEstimate:
    """Histogram plug-in MI with a permutation null.

    ``samples_x`` may be a matrix (joint cell per row) and ``samples_y`` a
    vector.  With ``jitter > 0`` every entry of ``samples_x`` first gets
    seeded uniform noise of that total width, which smooths the estimate so
    that a shift of size d between conditionals contributes on the order of
    (d / jitter)**2 instead of up to log 2.  The null permutes ``samples_y``
    ``n_permutations`` times.
    """
    x = np.asarray(samples_x)
    y = np.asarray(samples_y)
    if x.shape[0] != y.shape[0]:
        raise InputError("samples_x and samples_y need equal row counts")
    if x.shape[0] == 0:
        raise InputError("need at least one sample")
    if jitter < 0:
        raise InputError("jitter must be non-negative")
    if jitter > 0:
        noise = np.random.default_rng([seed, 1]).random(x.shape)
        x = x.astype(np.float64) + jitter * (noise - 0.5)
    cx = discretize(x, bins, max_levels)
    cy = discretize(y, bins, max_levels)
    value, se = _mi_codes(cx, cy)
    details = {"bins": bins, "jitter": float(jitter), "cells_x": int(cx.max() + 1), "cells_y": int(cy.max() + 1),
               "n": int(cx.size), "se": se}
    if n_permutations:
        gen = np.random.default_rng(seed)
        null = np.array([_mi_codes(cx, cy[gen.permutation(cy.size)])[0]
                         for _ in range(n_permutations)])
        details.update(null_mean=float(null.mean()), null_sd=float(null.std(ddof=1)),
                       null_q95=float(np.quantile(null, 0.95)), n_permutations=n_permutations,
                       seed=int(seed))
    return MiEstimate(value, "plugin", details)


# ---------------------------------------------------------------- verdicts


@dataclass(frozen=True)
class FairnessVerdict:
    effective: bool
    harmless: bool
    i_a_r_erm: MiEstimate
    i_a_r_frl: MiEstimate
    i_y_r_frl: MiEstimate
    i_y_x: MiEstimate
    epsilon: float
    delta: float

    @property
    def fair(self) -> bool:
        """Whether the FRL representation itself passes the independence threshold."""
        return bool(self.i_a_r_frl.calibrated <= self.epsilon)

    def to_dict(self) -> dict:
        return {
            "effective": self.effective, "harmless": self.harmless, "fair": self.fair,
            "epsilon": self.epsilon, "delta": self.delta,
            "i_a_r_erm": self.i_a_r_erm.to_dict(), "i_a_r_frl": self.i_a_r_frl.to_dict(),
            "i_y_r_frl": self.i_y_r_frl.to_dict(), "i_y_x": self.i_y_x.to_dict(),
        }


def _require_both(values, what, name):
    if not (np.any(values == 0) and np.any(values == 1)):
        raise InputError(f"{name} set lacks one of the {what}")


def standardize(rep) -> np.ndarray:
    """Columns scaled to unit standard deviation (constant columns left as-is)."""
    r = np.asarray(rep, dtype=np.float64)
    r = r.reshape(r.shape[0], -1)
    sd = r.std(axis=0)
    return r / np.where(sd > 0, sd, 1.0)


def representation_mi(rep, target, jitter: float = REPRESENTATION_JITTER, **kw) -> MiEstimate:
    """Plug-in MI between a standardised, jittered representation and ``target``.

    Standardising first makes the measurement blind to the overall scale of
    R, so a model cannot hide structure by inflating its logits.
    """
    return mutual_information_plugin(standardize(rep), target, jitter=jitter, **kw)


def _pattern_codes(bits: np.ndarray) -> np.ndarray:
    return (bits.astype(np.int64) << np.arange(bits.shape[1])).sum(axis=1)


def bayes_logit(test: Dataset, joint: JointTable | None = None,
                nodes: Sequence[str] = ("Y", "X_Z", "X_A")) -> np.ndarray:
    """log P(Y=1 | x) / P(Y=0 | x) for every test row.

    Exact from ``joint`` when given, otherwise from test cell counts with
    1/2 added to both classes.
    """
    xz, xa = _pattern_codes(test.x_z), _pattern_codes(test.x_a)
    if joint is not None:
        p = joint.marginal(list(nodes))
        if p.shape[1] < 2 ** test.x_z.shape[1] or p.shape[2] < 2 ** test.x_a.shape[1]:
            raise InputError("test joint does not match the test channels")
        with np.errstate(divide="ignore"):
            logit = np.log(p[1][xz, xa]) - np.log(p[0][xz, xa])
        # a deterministic cell only needs to sort beyond every other cell
        return np.clip(logit, -50.0, 50.0)
    key = xz * (2 ** test.x_a.shape[1]) + xa
    _, cell = np.unique(key, return_inverse=True)
    n1 = np.bincount(cell, weights=test.y)
    n0 = np.bincount(cell) - n1
    return (np.log(n1 + 0.5) - np.log(n0 + 0.5))[cell]


def fairness_verdict(erm: models.TrainedModel, frl: models.TrainedModel, train: Dataset,
                     test: Dataset, test_joint: JointTable | None = None,
                     epsilon: float = EPSILON, bins: int = DEFAULT_BINS,
                     n_permutations: int = N_PERMUTATIONS, seed: int = 0,
                     nodes: Sequence[str] = ("Y", "X_Z", "X_A"),
                     jitter: float = REPRESENTATION_JITTER) -> FairnessVerdict:
    """Effectiveness on train-time representations, harmlessness at test time.

    Every representation is measured through the same channel
    (:func:`representation_mi`), so information counts only at the
    resolution ``jitter`` can resolve.

    Effective: I(A; R_FRL) <= epsilon < I(A; R_ERM), calibrated.
    Harmless: I(Y; R_FRL) >= I(Y; X) - delta, where I(Y; X) is measured as
    I(Y; L) for the Bayes logit L of the test distribution (exact from
    ``test_joint`` when given, empirical otherwise), itself a sufficient
    statistic of X for Y.  delta is two standard errors of the difference,
    floored at one permutation-null standard deviation.
    """
    _require_both(train.a, "groups", "train")
    _require_both(test.a, "groups", "test")
    _require_both(test.y, "classes", "test")
    kw = dict(bins=bins, n_permutations=n_permutations, seed=seed, jitter=jitter)
    i_a_erm = representation_mi(models.representations(erm, train), train.a, **kw)
    i_a_frl = representation_mi(models.representations(frl, train), train.a, **kw)
    i_y_r = representation_mi(models.representations(frl, test), test.y, **kw)
    i_y_x = representation_mi(bayes_logit(test, test_joint, nodes), test.y, **kw)
    i_y_x.details["reference"] = "bayes_exact" if test_joint is not None else "bayes_empirical"
    delta = max(2.0 * float(np.hypot(i_y_r.se, i_y_x.se)), i_y_r.details.get("null_sd", 0.0))
    effective = i_a_frl.calibrated <= epsilon < i_a_erm.calibrated
    harmless = i_y_r.calibrated >= i_y_x.calibrated - delta
    return FairnessVerdict(bool(effective), bool(harmless), i_a_erm, i_a_frl, i_y_r, i_y_x,
                           epsilon, delta)
