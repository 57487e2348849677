"""Rank tests and resampling used by the experiments.

Exact null distributions are computed by counting, not by simulation:
Mann-Whitney via a subset-sum recursion over doubled midranks (ties handled
exactly), Kendall's tau via the inversion-count (Mahonian) recursion when
there are no ties and by full enumeration of permutations otherwise.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import InputError

MW_EXACT_MAX = 12        # exact U test when min(n_a, n_b) <= this
TAU_EXACT_MAX = 30       # exact tau test when n <= this
TAU_ENUMERATE_MAX = 9    # full permutation enumeration for tied data
TAU_RANDOMIZATIONS = 20000

ALTERNATIVES = ("two-sided", "less", "greater")


class Method(str, enum.Enum):
    MANN_WHITNEY_EXACT = "MannWhitneyExact"
    MANN_WHITNEY_NORMAL = "MannWhitneyNormal"
    KENDALL_TAU_EXACT = "KendallTauExact"
    KENDALL_TAU_PERMUTATION = "KendallTauPermutation"
    KENDALL_TAU_NORMAL = "KendallTauNormal"


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: Method
    n: tuple[int, ...]
    alternative: str = "two-sided"

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "p_value": self.p_value,
                "method": self.method.value, "n": list(self.n),
                "alternative": self.alternative}


def _check_alternative(alternative):
    if alternative not in ALTERNATIVES:
        raise InputError(f"alternative must be one of {ALTERNATIVES}")


def u_statistic(sample_a, sample_b) -> float:
    """Pairs with a > b plus half the ties."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    ranks = sps.rankdata(np.concatenate([a, b]))
    # doubled rank sums are integers, which keeps U an exact half-integer
    doubled = int(round(2 * ranks[: a.size].sum()))
    return (doubled - a.size * (a.size + 1)) / 2.0


def _rank_sum_distribution(doubled_ranks: np.ndarray, k: int) -> np.ndarray:
    """Counts of size-``k`` subsets by their sum of doubled ranks."""
    ranks = np.sort(doubled_ranks.astype(np.int64))
    top = int(ranks[-k:].sum()) if k else 0
    counts = np.zeros((k + 1, top + 1))
    counts[0, 0] = 1.0
    for r in ranks:
        if r > top:
            break
        # snapshot so each rank joins a subset at most once
        counts[1:, r:] += counts[:-1, : top + 1 - r].copy()
    return counts[k]


def _exact_u_null(doubled: np.ndarray, na: int, nb: int):
    """Support (as 2 * U_a) and probabilities of the permutation null."""
    small = min(na, nb)
    counts = _rank_sum_distribution(doubled, small)
    support = np.flatnonzero(counts)
    prob = counts[support] / counts[support].sum()
    u2_small = support - small * (small + 1)
    u2_a = u2_small if na <= nb else 2 * na * nb - u2_small
    return u2_a, prob


def mann_whitney_u(sample_a, sample_b, alternative: str = "two-sided") -> TestResult:
    """Mann-Whitney U for ``sample_a`` against ``sample_b``.

    ``statistic`` is U_a, the number of pairs with a > b (ties count 1/2).
    ``greater`` tests whether ``sample_a`` tends to be larger.  The exact
    null conditions on the observed tie pattern.
    """
    _check_alternative(alternative)
    a = np.asarray(sample_a, dtype=float).ravel()
    b = np.asarray(sample_b, dtype=float).ravel()
    if a.size == 0 or b.size == 0:
        raise InputError("both samples must be non-empty")
    na, nb = a.size, b.size
    ranks = sps.rankdata(np.concatenate([a, b]))
    doubled = np.rint(2 * ranks).astype(np.int64)
    u2 = int(doubled[:na].sum()) - na * (na + 1)
    u = u2 / 2.0

    if min(na, nb) <= MW_EXACT_MAX:
        support, prob = _exact_u_null(doubled, na, nb)
        center = na * nb  # null mean of 2 * U_a
        if alternative == "greater":
            p = prob[support >= u2].sum()
        elif alternative == "less":
            p = prob[support <= u2].sum()
        else:
            p = prob[np.abs(support - center) >= abs(u2 - center)].sum()
        return TestResult(u, float(min(1.0, p)), Method.MANN_WHITNEY_EXACT, (na, nb), alternative)

    n = na + nb
    _, tie_counts = np.unique(ranks, return_counts=True)
    tie_term = (tie_counts ** 3 - tie_counts).sum() / (n * (n - 1))
    sd = math.sqrt(na * nb / 12.0 * ((n + 1) - tie_term))
    mean = na * nb / 2.0
    if sd == 0:
        return TestResult(u, 1.0, Method.MANN_WHITNEY_NORMAL, (na, nb), alternative)
    if alternative == "greater":
        p = sps.norm.sf((u - mean - 0.5) / sd)
    elif alternative == "less":
        p = sps.norm.cdf((u - mean + 0.5) / sd)
    else:
        p = 2 * sps.norm.sf((abs(u - mean) - 0.5) / sd)
    return TestResult(u, float(min(1.0, p)), Method.MANN_WHITNEY_NORMAL, (na, nb), alternative)


def holm_bonferroni(p_values, alpha: float = 0.05) -> np.ndarray:
    """Step-down Holm rejections, reported in the input order."""
    p = np.asarray(p_values, dtype=float).ravel()
    if not 0.0 < alpha < 1.0:
        raise InputError("alpha must lie in (0, 1)")
    if ((p < 0) | (p > 1) | np.isnan(p)).any():
        raise InputError("p-values must lie in [0, 1]")
    m = p.size
    reject = np.zeros(m, dtype=bool)
    for i, j in enumerate(np.argsort(p, kind="stable")):
        if p[j] > alpha / (m - i):
            break
        reject[j] = True
    return reject


def _pair_counts(x, y):
    dx = np.sign(x[:, None] - x[None, :])
    dy = np.sign(y[:, None] - y[None, :])
    iu = np.triu_indices(x.size, 1)
    prod = (dx * dy)[iu]
    concordant = int((prod > 0).sum())
    discordant = int((prod < 0).sum())
    ties_x = int((dx[iu] == 0).sum())
    ties_y = int((dy[iu] == 0).sum())
    return concordant, discordant, ties_x, ties_y


def _tau_b(x, y) -> float:
    n0 = x.size * (x.size - 1) // 2
    c, d, tx, ty = _pair_counts(x, y)
    denom = math.sqrt((n0 - tx) * (n0 - ty))
    return (c - d) / denom if denom > 0 else float("nan")


def _permuted_taus(x, y, perms: np.ndarray) -> np.ndarray:
    """tau-b of ``x`` against ``y[perm]`` for every row of ``perms``.

    Permuting ``y`` leaves both tie counts, hence the denominator, unchanged.
    """
    n = x.size
    i, j = np.triu_indices(n, 1)
    sx = np.sign(x[i] - x[j])
    n0 = n * (n - 1) // 2
    tx = int((sx == 0).sum())
    ty = int((np.sign(y[i] - y[j]) == 0).sum())
    denom = math.sqrt((n0 - tx) * (n0 - ty))
    out = np.empty(perms.shape[0])
    for start in range(0, perms.shape[0], 20000):
        yp = y[perms[start: start + 20000]]
        out[start: start + 20000] = (np.sign(yp[:, i] - yp[:, j]) @ sx) / denom
    return out


def _mahonian(n: int) -> np.ndarray:
    """Distribution of inversion counts over permutations of n items."""
    dist = np.array([1.0])
    for k in range(2, n + 1):
        new = np.zeros(dist.size + k - 1)
        for j in range(k):
            new[j: j + dist.size] += dist
        dist = new
    return dist / dist.sum()


def _tail(null_values, observed, alternative, tol=1e-12):
    null_values = np.asarray(null_values)
    if alternative == "greater":
        return float(np.mean(null_values >= observed - tol))
    if alternative == "less":
        return float(np.mean(null_values <= observed + tol))
    return float(np.mean(np.abs(null_values) >= abs(observed) - tol))


def kendall_tau(x, y, alternative: str = "two-sided", seed: int = 0) -> TestResult:
    """Kendall's tau-b with an exact or permutation p-value for n <= 30.

    Without ties the null distribution is the Mahonian inversion
    distribution.  With ties, n <= 9 enumerates every permutation of ``y``;
    larger tied samples use a seeded randomisation of ``y`` (method
    ``KendallTauPermutation``).  Above 30 the tie-corrected normal
    approximation is used.
    """
    _check_alternative(alternative)
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise InputError("x and y must have equal lengths")
    if x.size < 2:
        raise InputError("need at least two observations")
    n = x.size
    tau = _tau_b(x, y)
    if math.isnan(tau):
        return TestResult(tau, 1.0, Method.KENDALL_TAU_EXACT, (n,), alternative)
    has_ties = np.unique(x).size < n or np.unique(y).size < n

    if n <= TAU_EXACT_MAX and not has_ties:
        n0 = n * (n - 1) // 2
        dist = _mahonian(n)
        # tau = 1 - 4 * inversions / (n (n-1))
        taus = 1.0 - 2.0 * np.arange(dist.size) / n0
        if alternative == "greater":
            p = dist[taus >= tau - 1e-12].sum()
        elif alternative == "less":
            p = dist[taus <= tau + 1e-12].sum()
        else:
            p = dist[np.abs(taus) >= abs(tau) - 1e-12].sum()
        return TestResult(tau, float(min(1.0, p)), Method.KENDALL_TAU_EXACT, (n,), alternative)

    if n <= TAU_ENUMERATE_MAX:
        perms = np.array(list(itertools.permutations(range(n))), dtype=np.int64)
        null = _permuted_taus(x, y, perms)
        return TestResult(tau, _tail(null, tau, alternative), Method.KENDALL_TAU_EXACT,
                          (n,), alternative)

    if n <= TAU_EXACT_MAX:
        gen = np.random.default_rng(seed)
        perms = np.array([gen.permutation(n) for _ in range(TAU_RANDOMIZATIONS)])
        null = _permuted_taus(x, y, perms)
        # count the observed arrangement as one of the randomisations
        hits = _tail(null, tau, alternative) * TAU_RANDOMIZATIONS
        p = (hits + 1) / (TAU_RANDOMIZATIONS + 1)
        return TestResult(tau, float(p), Method.KENDALL_TAU_PERMUTATION, (n,), alternative)

    c, d, _, _ = _pair_counts(x, y)
    _, tx = np.unique(x, return_counts=True)
    _, ty = np.unique(y, return_counts=True)
    v0 = n * (n - 1) * (2 * n + 5)
    vt = (tx * (tx - 1) * (2 * tx + 5)).sum()
    vu = (ty * (ty - 1) * (2 * ty + 5)).sum()
    var = (v0 - vt - vu) / 18.0
    var += (tx * (tx - 1)).sum() * (ty * (ty - 1)).sum() / (2.0 * n * (n - 1))
    var += ((tx * (tx - 1) * (tx - 2)).sum() * (ty * (ty - 1) * (ty - 2)).sum()
            / (9.0 * n * (n - 1) * (n - 2)))
    zstat = (c - d) / math.sqrt(var)
    if alternative == "greater":
        p = sps.norm.sf(zstat)
    elif alternative == "less":
        p = sps.norm.cdf(zstat)
    else:
        p = 2 * sps.norm.sf(abs(zstat))
    return TestResult(tau, float(p), Method.KENDALL_TAU_NORMAL, (n,), alternative)


def bootstrap_ci(values, statistic: str = "mean", iterations: int = 1000,
                 seed: int = 0, level: float = 0.95) -> tuple[float, float]:
    """Percentile bootstrap interval."""
    v = np.asarray(values, dtype=float).ravel()
    if v.size == 0:
        raise InputError("values must be non-empty")
    if iterations < 100:
        raise InputError("iterations must be >= 100")
    if not 0.0 < level < 1.0:
        raise InputError("level must lie in (0, 1)")
    funcs = {"mean": np.mean, "median": np.median}
    if statistic not in funcs:
        raise InputError(f"statistic must be one of {sorted(funcs)}")
    gen = np.random.default_rng(seed)
    draws = v[gen.integers(0, v.size, size=(iterations, v.size))]
    boot = funcs[statistic](draws, axis=1)
    lo, hi = np.quantile(boot, [(1 - level) / 2, (1 + level) / 2])
    if np.all(v == v[0]):
        return float(v[0]), float(v[0])
    return float(lo), float(hi)
