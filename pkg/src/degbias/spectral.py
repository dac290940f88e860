"""Sparse RW/SYM filters and exact walk-collision quantities."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .graph import Graph


class FilterKind(str, Enum):
    RW = "rw"
    SYM = "sym"
    ATT = "att"


@dataclass(frozen=True)
class WalkRow:
    """Row ``e_i^T P_rw^l`` stored sparsely as parallel (nodes, probs) arrays."""

    source: int
    hop: int
    nodes: np.ndarray
    probs: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return {int(j): float(p) for j, p in zip(self.nodes, self.probs)}

    def dense(self, num_nodes: int) -> np.ndarray:
        out = np.zeros(num_nodes)
        out[self.nodes] = self.probs
        return out


def _step(graph: Graph, nodes: np.ndarray, probs: np.ndarray):
    # push mass p_j / D_j to each neighbor of j
    deg = graph.degrees[nodes]
    starts = graph.row_offsets[nodes]
    idx = np.repeat(starts - np.concatenate([[0], np.cumsum(deg)[:-1]]), deg) + np.arange(deg.sum())
    targets = graph.neighbor_ids[idx]
    mass = np.repeat(probs / deg, deg)
    uniq, inv = np.unique(targets, return_inverse=True)
    return uniq, np.bincount(inv, weights=mass, minlength=len(uniq))


class WalkCache:
    """Memo of walk rows for one graph.  Fills are idempotent."""

    def __init__(self, graph: Graph):
        self.graph = graph
        self._rows: dict[tuple[int, int], WalkRow] = {}

    def row(self, i: int, l: int) -> WalkRow:
        key = (int(i), int(l))
        hit = self._rows.get(key)
        if hit is not None:
            return hit
        if l == 0:
            out = WalkRow(int(i), 0, np.array([int(i)]), np.array([1.0]))
        else:
            prev = self.row(i, l - 1)
            nodes, probs = _step(self.graph, prev.nodes, prev.probs)
            out = WalkRow(int(i), int(l), nodes, probs)
        self._rows[key] = out
        return out


def rw_row(graph: Graph, i: int, l: int, cache: WalkCache | None = None) -> WalkRow:
    if l < 0:
        raise ValueError("hop must be >= 0")
    return (cache or WalkCache(graph)).row(i, l)


def filter_matrix(graph: Graph, kind):
    kind = FilterKind(kind)
    if kind is FilterKind.RW:
        return graph.rw_matrix
    if kind is FilterKind.SYM:
        return graph.sym_matrix
    raise ValueError("ATT filters depend on parameters; use models.attention_filter")


def apply_filter(graph: Graph, kind, M: np.ndarray) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.shape[0] != graph.num_nodes:
        raise ValueError(f"matrix has {M.shape[0]} rows, graph has {graph.num_nodes} nodes")
    return np.asarray(filter_matrix(graph, kind) @ M)


def collision_prob(graph: Graph, i: int, l: int, cache: WalkCache | None = None) -> float:
    r = rw_row(graph, i, l, cache)
    return float(np.sum(r.probs ** 2))


def discounted_collision_prob(graph: Graph, i: int, l: int, cache: WalkCache | None = None) -> float:
    r = rw_row(graph, i, l, cache)
    return float(np.sum(r.probs ** 2 / graph.degrees[r.nodes]))


def inverse_collision_probability(graph: Graph, i: int, L: int, cache: WalkCache | None = None) -> float:
    if L < 0:
        raise ValueError("L must be >= 0")
    cache = cache or WalkCache(graph)
    return 1.0 / sum(collision_prob(graph, i, l, cache) for l in range(L + 1))


def walk_powers(graph: Graph, L: int) -> list:
    """Sparse ``P_rw^l`` for l = 0..L (densifies as walks spread)."""
    out = [sp.identity(graph.num_nodes, format="csr")]
    for _ in range(L):
        out.append((out[-1] @ graph.rw_matrix).tocsr())
    return out


def collision_table(graph: Graph, L: int, discounted: bool = False) -> np.ndarray:
    """All-node alpha (or discounted alpha) as an ``N x (L+1)`` array."""
    inv_deg = 1.0 / graph.degrees
    cols = []
    for P in walk_powers(graph, L):
        sq = P.multiply(P)
        if discounted:
            sq = sq @ inv_deg
        else:
            sq = sq.sum(axis=1)
        cols.append(np.asarray(sq).ravel())
    return np.stack(cols, axis=1)


def icp_all(graph: Graph, L: int) -> np.ndarray:
    return 1.0 / collision_table(graph, L).sum(axis=1)


def collision_sum_via_neighbors(graph: Graph, i: int, L: int, cache: WalkCache | None = None) -> float:
    """``1 + D_ii^-2 * sum_{l=1..L} sum_j (sum_{k in N(i)} (P^{l-1})_{kj})^2``.

    Equals the summed collision probabilities of ``i`` over hops 0..L, since
    row ``i`` of ``P^l`` is the neighbor average of rows of ``P^(l-1)``.
    """
    cache = cache or WalkCache(graph)
    d = graph.degrees[i]
    total = 1.0
    for l in range(1, L + 1):
        acc: dict[int, float] = {}
        for k in graph.neighbors(i):
            r = cache.row(int(k), l - 1)
            for j, p in zip(r.nodes.tolist(), r.probs.tolist()):
                acc[j] = acc.get(j, 0.0) + p
        total += sum(v * v for v in acc.values()) / d ** 2
    return total
