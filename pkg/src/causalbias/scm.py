"""Discrete structural causal models over the bias-mechanism templates.

``build_scm`` turns an :class:`ScmConfig` into conditional probability
tables; ``exact_joint`` enumerates the induced distribution; and
``sample_dataset`` draws ancestral samples with a counter-based generator so
that every (node, sample index) pair has its own reproducible uniform.

``X_Z`` and ``X_A`` are single categorical nodes of cardinality ``2**k``.
Value ``v`` encodes channel ``j`` as bit ``(v >> j) & 1``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import rng
from .datasets import Dataset
from .errors import CapacityError, InputError
from .graph import (BiasMechanism, CausalDag, NodeRole, mechanism_template,
                    remove_unfair_pathways)

MAX_STATES = 2 ** 24
CPT_TOL = 1e-9

# Mechanism shapes.  Each unfair edge's effect is ``mechanism_strength``
# times one of these constants.
PREVALENCE_GAP = 0.4          # p(z=1 | a=0) - p(z=1 | a=1) at full strength
ANNOTATION_FLIP = 0.7         # p(y=0 | z=1, a=1) at full strength
PRESENTATION_SHRINK = 0.5     # fractional loss of x_z log-odds in group 1
SENSITIVE_LEAK = 0.5          # probability an x_a channel reports z instead


@dataclass(frozen=True)
class ScmConfig:
    """Knobs for :func:`build_scm`.

    ``disease_signal`` sets the log-likelihood ratio of the strongest x_z
    channel; channel ``j`` carries ``disease_signal * DISEASE_PROFILE[j]``.
    """

    mechanism: BiasMechanism = BiasMechanism.UNBIASED
    separability_strength: float = 1.0
    mechanism_strength: float = 0.5
    x_z_channels: int = 4
    x_a_channels: int = 4
    base_prevalence: float = 0.5
    group_balance: float = 0.5
    seed: int = 0
    disease_signal: float = 1.1
    entangle_a_to_xz: bool = True
    entangle_z_to_xa: bool = True

    def __post_init__(self):
        try:
            object.__setattr__(self, "mechanism", BiasMechanism(self.mechanism))
        except ValueError as exc:
            raise InputError(str(exc)) from exc
        for name in ("separability_strength", "mechanism_strength"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InputError(f"{name} must lie in [0, 1], got {v}")
        for name in ("base_prevalence", "group_balance"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise InputError(f"{name} must lie in (0, 1), got {v}")
        for name in ("x_z_channels", "x_a_channels"):
            if int(getattr(self, name)) < 1:
                raise InputError(f"{name} must be >= 1")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InputError("seed must be a 64-bit unsigned integer")
        if self.disease_signal <= 0:
            raise InputError("disease_signal must be positive")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["mechanism"] = self.mechanism.value
        return d

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ScmConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise InputError(f"unknown ScmConfig keys: {sorted(unknown)}")
        return cls(**doc)

    def replace(self, **changes) -> "ScmConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> str:
        return config_hash(self.to_dict())


def config_hash(doc) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# Per-channel log-likelihood ratio profile for x_z.  One full-weight channel
# and half-weight channels put the posterior log-odds on an odd lattice when
# k is even, so at base_prevalence 1/2 no pattern sits on the boundary.
DISEASE_PROFILE = (1.0, 0.5, 0.5, 0.5)


# Worked clinical examples.  A is referral site, race or report language;
# Z is disease status.
PRESETS = {
    # referral policy sends one site's patients later, so their scans show
    # disease differently
    "presentation_disparity": ScmConfig(mechanism=BiasMechanism.FEATURE_ENTANGLEMENT,
                                        mechanism_strength=0.5, separability_strength=0.8),
    # unequal access to care ties race to prevalence in the collected sample
    "prevalence_disparity": ScmConfig(mechanism=BiasMechanism.PREVALENCE_DISPARITY,
                                      mechanism_strength=0.5, separability_strength=0.9),
    # labels mined from reports are noisier for one language
    "annotation_disparity": ScmConfig(mechanism=BiasMechanism.ANNOTATION_DISPARITY,
                                      mechanism_strength=0.5, separability_strength=1.0),
}


def preset_config(name: str) -> ScmConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise InputError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def disease_llr(config: ScmConfig) -> np.ndarray:
    k = config.x_z_channels
    profile = np.array([DISEASE_PROFILE[j % len(DISEASE_PROFILE)] for j in range(k)])
    return config.disease_signal * profile


@dataclass(frozen=True, eq=False)
class DiscreteScm:
    """CPTs over a DAG.

    ``cpts[node]`` has shape ``(*parent_cardinalities, cardinality)`` with
    parents in ``dag.parents(node)`` order.
    """

    dag: CausalDag
    cardinalities: Mapping[str, int]
    cpts: Mapping[str, np.ndarray]
    label: str = "train"
    config: ScmConfig | None = None
    metadata: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.label not in ("train", "test"):
            raise InputError("label must be 'train' or 'test'")
        cards = {n: int(self.cardinalities[n]) for n in self.dag.node_ids}
        cpts = {}
        for node in self.dag.node_ids:
            if node not in self.cpts:
                raise InputError(f"missing CPT for {node}")
            table = np.array(self.cpts[node], dtype=np.float64)
            shape = tuple(cards[p] for p in self.dag.parents(node)) + (cards[node],)
            if table.shape != shape:
                raise InputError(f"CPT for {node} has shape {table.shape}, expected {shape}")
            if (table < 0).any() or np.abs(table.sum(axis=-1) - 1.0).max() > CPT_TOL:
                raise InputError(f"CPT rows for {node} are not distributions")
            table.setflags(write=False)
            cpts[node] = table
        object.__setattr__(self, "cardinalities", cards)
        object.__setattr__(self, "cpts", cpts)

    def cpt_rows(self, node: str) -> np.ndarray:
        """CPT as a 2-D (parent configuration x value) matrix."""
        return self.cpts[node].reshape(-1, self.cardinalities[node])

    def role_node(self, role: NodeRole) -> str:
        return self.dag.node_for_role(role)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps(self.dag.to_dict(), sort_keys=True).encode())
        for node in self.dag.node_ids:
            h.update(node.encode())
            h.update(np.ascontiguousarray(self.cpts[node]).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class JointTable:
    """Dense joint distribution; axis ``i`` indexes ``variables[i]``."""

    variables: tuple[str, ...]
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != len(self.variables):
            raise InputError("one axis per variable required")
        if (p < 0).any() or abs(p.sum() - 1.0) > CPT_TOL:
            raise InputError("joint table must be a distribution")
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "probabilities", p)

    def axis(self, var: str) -> int:
        try:
            return self.variables.index(var)
        except ValueError:
            raise InputError(f"unknown variable {var!r}") from None

    def marginal(self, keep: Sequence[str]) -> np.ndarray:
        """Marginal over ``keep``, axes in the given order."""
        keep = list(keep)
        axes = [self.axis(v) for v in keep]
        drop = tuple(i for i in range(len(self.variables)) if i not in axes)
        m = self.probabilities.sum(axis=drop)
        remaining = [i for i in range(len(self.variables)) if i in axes]
        return np.transpose(m, [remaining.index(a) for a in axes])


def _bits_distribution(q: np.ndarray) -> np.ndarray:
    """Distribution over 2**k patterns of independent bits with p(bit_j=1)=q_j."""
    k = len(q)
    values = np.arange(2 ** k)
    bits = (values[:, None] >> np.arange(k)) & 1
    return np.prod(np.where(bits == 1, q, 1.0 - q), axis=1)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def build_scm(config: ScmConfig) -> DiscreteScm:
    """Parameterise the mechanism template described by ``config``."""
    m = config.mechanism
    strength = config.mechanism_strength
    dag = mechanism_template(m, config.entangle_a_to_xz, config.entangle_z_to_xa)
    k_z, k_a = config.x_z_channels, config.x_a_channels
    cards = {"A": 2, "Z": 2, "Y": 2, "X_Z": 2 ** k_z, "X_A": 2 ** k_a}
    pi = config.group_balance
    prev = config.base_prevalence
    cpts = {"A": np.array([1.0 - pi, pi])}

    if "A" in dag.parents("Z"):
        # group 0 shifted up, group 1 down; the marginal stays at prev
        gap = strength * PREVALENCE_GAP
        rates = np.array([prev + gap * pi, prev - gap * (1.0 - pi)])
        if not ((rates > 0) & (rates < 1)).all():
            raise InputError("prevalence gap pushes p(z | a) outside (0, 1)")
        cpts["Z"] = np.stack([1.0 - rates, rates], axis=1)
    else:
        cpts["Z"] = np.array([1.0 - prev, prev])

    if "A" in dag.parents("Y"):
        # axes (z, a, y): group-1 positives are under-reported
        miss = strength * ANNOTATION_FLIP
        y = np.zeros((2, 2, 2))
        y[0, :, 0] = 1.0
        y[1, 0, 1] = 1.0
        y[1, 1] = (miss, 1.0 - miss)
        # parent order follows dag node order (A before Z)
        cpts["Y"] = np.transpose(y, (1, 0, 2))
    else:
        cpts["Y"] = np.eye(2)

    llr = disease_llr(config)
    def xz_given_z(z, shrink=0.0):
        q = _sigmoid(llr * (1.0 - shrink))
        return _bits_distribution(q if z == 1 else 1.0 - q)

    if "A" in dag.parents("X_Z"):
        shrink = strength * PRESENTATION_SHRINK
        # parents (A, Z)
        cpts["X_Z"] = np.stack([
            np.stack([xz_given_z(z) for z in (0, 1)]),
            np.stack([xz_given_z(z, shrink) for z in (0, 1)]),
        ])
    else:
        cpts["X_Z"] = np.stack([xz_given_z(z) for z in (0, 1)])

    s = config.separability_strength
    group_bit = {0: (1.0 - s) / 2.0, 1: (1.0 + s) / 2.0}
    if "Z" in dag.parents("X_A"):
        leak = strength * SENSITIVE_LEAK
        cpts["X_A"] = np.stack([
            np.stack([_bits_distribution(np.full(k_a, (1.0 - leak) * group_bit[a] + leak * z))
                      for z in (0, 1)])
            for a in (0, 1)
        ])
    else:
        cpts["X_A"] = np.stack([_bits_distribution(np.full(k_a, group_bit[a])) for a in (0, 1)])

    return DiscreteScm(dag, cards, cpts, "train", config,
                       {"config_hash": config.digest()})


def exact_joint(scm: DiscreteScm) -> JointTable:
    """Chain-rule product of all CPTs over the full outcome space."""
    order = scm.dag.node_ids
    shape = tuple(scm.cardinalities[n] for n in order)
    if int(np.prod(shape, dtype=object)) > MAX_STATES:
        raise CapacityError(f"joint state space {shape} exceeds {MAX_STATES} states")
    joint = np.ones(shape)
    for node in order:
        axes = [order.index(p) for p in scm.dag.parents(node)] + [order.index(node)]
        table = scm.cpts[node]
        # move CPT axes into joint order, then broadcast
        perm = np.argsort(axes)
        table = np.transpose(table, perm)
        bshape = [1] * len(order)
        for ax in sorted(axes):
            bshape[ax] = shape[ax]
        joint = joint * table.reshape(bshape)
    return JointTable(order, joint)


def sample_dataset(scm: DiscreteScm, n: int, seed: int) -> Dataset:
    """Draw ``n`` i.i.d. ancestral samples.

    Node ``i`` (position in ``dag.node_ids``) reads stream ``i + 1`` of the
    counter-based generator, so record ``j`` is a function of
    ``(scm, seed, j)`` alone.
    """
    if n < 1:
        raise InputError("n must be >= 1")
    dag = scm.dag
    idx = np.arange(n, dtype=np.uint64)
    values: dict[str, np.ndarray] = {}
    for node in dag.topological_order():
        parents = dag.parents(node)
        rows = np.zeros(n, dtype=np.int64)
        for p in parents:
            rows = rows * scm.cardinalities[p] + values[p]
        cum = np.cumsum(scm.cpt_rows(node), axis=1)
        u = rng.uniforms(seed, dag.node_ids.index(node) + 1, idx)
        draw = (u[:, None] >= cum[rows]).sum(axis=1)
        values[node] = np.minimum(draw, scm.cardinalities[node] - 1)

    def bits(node):
        k = int(np.log2(scm.cardinalities[node]))
        return ((values[node][:, None] >> np.arange(k)) & 1).astype(np.uint8)

    xz, xa = scm.role_node(NodeRole.X_Z), scm.role_node(NodeRole.X_A)
    manifest = {
        "config_hash": scm.metadata.get("config_hash", scm.digest()),
        "scm_digest": scm.digest(),
        "scm_label": scm.label,
        "seed": int(seed),
    }
    if scm.config is not None:
        manifest["config"] = scm.config.to_dict()
    return Dataset(bits(xz), bits(xa), values[scm.role_node(NodeRole.A)],
                   values[scm.role_node(NodeRole.Y)], values[scm.role_node(NodeRole.Z)],
                   None, manifest)


def unbiased_counterpart(scm: DiscreteScm) -> DiscreteScm:
    """Test-time SCM with every unfair edge deleted.

    A node that loses parents gets the train-time conditional averaged over
    the deleted parents' train-time marginal; all other CPTs are kept.
    """
    new_dag = remove_unfair_pathways(scm.dag)
    joint = None
    cpts = {}
    for node in scm.dag.node_ids:
        old_parents = scm.dag.parents(node)
        kept = new_dag.parents(node)
        dropped = [p for p in old_parents if p not in kept]
        if not dropped:
            cpts[node] = scm.cpts[node]
            continue
        if joint is None:
            joint = exact_joint(scm)
        weights = joint.marginal(dropped)
        table = scm.cpts[node]
        # dropped parent axes first, in `dropped` order, to match `weights`
        axes_dropped = [old_parents.index(p) for p in dropped]
        axes_kept = [old_parents.index(p) for p in kept]
        table = np.transpose(table, axes_dropped + axes_kept + [len(old_parents)])
        w = weights.reshape(weights.shape + (1,) * (table.ndim - len(dropped)))
        cpts[node] = (table * w).sum(axis=tuple(range(len(dropped))))
    return DiscreteScm(new_dag, scm.cardinalities, cpts, "test", scm.config,
                       dict(scm.metadata, counterpart_of=scm.digest()))


def random_scm(dag: CausalDag, cardinalities: Mapping[str, int] | int = 2, seed: int = 0,
               min_tv: float = 1e-3, max_tries: int = 1000) -> DiscreteScm:
    """SCM with Dirichlet(1) CPT rows on ``dag``.

    Rows are redrawn until, for every node and every parent, changing that
    parent moves the child's conditional by more than ``min_tv`` in total
    variation; this keeps the sampled parameterisation faithful to the graph
    in practice.
    """
    if isinstance(cardinalities, int):
        cardinalities = {n: cardinalities for n in dag.node_ids}
    gen = np.random.default_rng(seed)
    cpts = {}
    for node in dag.node_ids:
        parents = dag.parents(node)
        shape = tuple(cardinalities[p] for p in parents) + (cardinalities[node],)
        for _ in range(max_tries):
            rows = gen.dirichlet(np.ones(cardinalities[node]), size=int(np.prod(shape[:-1])))
            table = rows.reshape(shape)
            if _faithful(table, len(parents), min_tv):
                break
        else:
            raise InputError(f"could not draw a faithful CPT for {node}")
        cpts[node] = table
    return DiscreteScm(dag, cardinalities, cpts)


def _faithful(table: np.ndarray, n_parents: int, min_tv: float) -> bool:
    for ax in range(n_parents):
        moved = np.moveaxis(table, ax, 0)
        for i, j in itertools.combinations(range(moved.shape[0]), 2):
            tv = 0.5 * np.abs(moved[i] - moved[j]).sum(axis=-1)
            if tv.min() <= min_tv:
                return False
    return True
