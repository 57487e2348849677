import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from causalbias.graph import CausalDag

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_lines():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def random_dag(n_nodes: int, edge_prob: float, gen: np.random.Generator) -> CausalDag:
    """Random DAG over nodes v0..v{n-1}; edges only go forward in index order."""
    ids = [f"v{i}" for i in range(n_nodes)]
    edges = [(ids[i], ids[j]) for i, j in itertools.combinations(range(n_nodes), 2)
             if gen.random() < edge_prob]
    return CausalDag(tuple((v, "Exogenous") for v in ids), tuple(edges))


def path_dseparated(dag: CausalDag, x: str, y: str, given) -> bool:
    """Brute-force d-separation: enumerate every simple undirected path."""
    given = set(given)
    adj = {n: set() for n in dag.node_ids}
    for u, v in dag.edges:
        adj[u].add(v)
        adj[v].add(u)
    edges = set(dag.edges)

    def descendants(n):
        out, stack = set(), [n]
        while stack:
            m = stack.pop()
            for c in dag.children(m):
                if c not in out:
                    out.add(c)
                    stack.append(c)
        return out

    def blocked(path):
        for a, b, c in zip(path, path[1:], path[2:]):
            collider = (a, b) in edges and (c, b) in edges
            if collider:
                if b not in given and not (descendants(b) & given):
                    return True
            elif b in given:
                return True
        return False

    def walk(path):
        last = path[-1]
        if last == y:
            yield path
            return
        for nb in adj[last]:
            if nb not in path:
                yield from walk(path + [nb])

    return all(blocked(p) for p in walk([x]))


def ci_holds(joint, x: str, y: str, given, tol: float = 1e-9) -> bool:
    """p(x, y | g) = p(x | g) p(y | g) for every g, up to ``tol``."""
    keep = [x, y, *given]
    p = joint.marginal(keep)
    p = p.reshape(p.shape[0], p.shape[1], -1)
    pg = p.sum(axis=(0, 1))
    pxg = p.sum(axis=1)
    pyg = p.sum(axis=0)
    lhs = p * pg[None, None, :]
    rhs = pxg[:, None, :] * pyg[None, :, :]
    return bool(np.abs(lhs - rhs).max() <= tol)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
