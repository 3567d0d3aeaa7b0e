"""Communication graphs, doubly stochastic weights and synchronous gossip."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import TopologyError

STOCH_TOL = 1e-10


@dataclass(frozen=True)
class CommGraph:
    n_nodes: int
    edges: frozenset

    def __post_init__(self):
        norm = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise TopologyError("self-loops are implicit in W and must not be listed")
            if not (0 <= i < self.n_nodes and 0 <= j < self.n_nodes):
                raise TopologyError(f"edge {(i, j)} out of range")
            norm.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", frozenset(norm))

    @classmethod
    def ring(cls, n):
        if n <= 2:
            return cls.complete(n)
        return cls(n, frozenset((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def complete(cls, n):
        return cls(n, frozenset((i, j) for i in range(n) for j in range(i + 1, n)))

    @classmethod
    def star(cls, n):
        return cls(n, frozenset((0, j) for j in range(1, n)))

    def degrees(self):
        deg = np.zeros(self.n_nodes, dtype=int)
        for i, j in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def is_connected(self):
        if self.n_nodes <= 1:
            return True
        nbrs = {i: set() for i in range(self.n_nodes)}
        for i, j in self.edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        seen, stack = {0}, [0]
        while stack:
            for j in nbrs[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == self.n_nodes


def parse_graph(text, n_nodes):
    """Parse ``ring | complete | star | edges:0-1,1-2,...``."""
    text = text.strip()
    if text == "ring":
        return CommGraph.ring(n_nodes)
    if text == "complete":
        return CommGraph.complete(n_nodes)
    if text == "star":
        return CommGraph.star(n_nodes)
    if text.startswith("edges:"):
        pairs = []
        for tok in text[len("edges:"):].replace(";", ",").split(","):
            tok = tok.strip().strip("[]()")
            if tok:
                i, j = tok.split("-")
                pairs.append((int(i), int(j)))
        return CommGraph(n_nodes, frozenset(pairs))
    raise TopologyError(f"unknown topology {text!r}")


def second_singular_value(W):
    """Largest singular value of ``W`` on the complement of the all-ones vector."""
    n = W.shape[0]
    if n == 1:
        return 0.0
    return float(np.linalg.norm(W - np.full((n, n), 1.0 / n), 2))


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Validated doubly stochastic mixing matrix with cached ``nu``."""

    W: np.ndarray
    nu: float

    @classmethod
    def from_matrix(cls, W, graph=None):
        W = np.array(W, dtype=float)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise TopologyError("W must be square")
        if np.any(W < 0):
            raise TopologyError("W must be entrywise nonnegative")
        if np.max(np.abs(W.sum(axis=1) - 1)) > STOCH_TOL or np.max(np.abs(W.sum(axis=0) - 1)) > STOCH_TOL:
            raise TopologyError("W must be doubly stochastic")
        if graph is not None:
            if graph.n_nodes != W.shape[0]:
                raise TopologyError("graph and W disagree on the node count")
            allowed = np.eye(W.shape[0], dtype=bool)
            for i, j in graph.edges:
                allowed[i, j] = allowed[j, i] = True
            if np.any(W[~allowed] > 0):
                raise TopologyError("W has weight on a pair that is not an edge")
        nu = second_singular_value(W)
        if nu >= 1 - STOCH_TOL:
            raise TopologyError(f"second singular value {nu:.6g} is not below 1")
        W.setflags(write=False)
        return cls(W, nu)

    @property
    def n(self):
        return self.W.shape[0]

    def to_json(self):
        return json.dumps({"W": self.W.tolist(), "nu": self.nu})

    @classmethod
    def from_json(cls, text):
        return cls.from_matrix(json.loads(text)["W"])


def metropolis_weights(graph):
    if not graph.is_connected():
        raise TopologyError("graph is disconnected; consensus cannot contract")
    n = graph.n_nodes
    deg = graph.degrees()
    W = np.zeros((n, n))
    for i, j in graph.edges:
        W[i, j] = W[j, i] = 1.0 / (1 + max(deg[i], deg[j]))
    W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    return WeightMatrix.from_matrix(W, graph)


def consensus_round(values, W):
    """One synchronous gossip round: node i receives ``sum_j W_ij values_j``."""
    W = W.W if isinstance(W, WeightMatrix) else W
    values = np.asarray(values, dtype=float)
    if values.shape[0] != W.shape[0]:
        raise ValueError(f"expected {W.shape[0]} node values, got {values.shape[0]}")
    return W @ values


def disagreement_norm(values):
    """Frobenius norm of ``Q @ values`` with ``Q = I - 11^T / N``."""
    values = np.asarray(values, dtype=float)
    return float(np.linalg.norm(values - values.mean(axis=0)))


def scalar_gossip(values, W, rounds):
    if rounds < 0:
        raise ValueError("rounds must be nonnegative")
    out = np.asarray(values, dtype=float)
    for _ in range(rounds):
        out = consensus_round(out, W)
    return out
