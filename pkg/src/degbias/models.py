"""Linearized jumping-knowledge models and the 3-layer general message-passing
network, with hand-derived gradients.

General layer:  Z = H W1 + P H W2 + X W3,  ReLU between layers, softmax output.
Linearized:     Z = sum_l P^l X W^(l).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .graph import Graph
from .spectral import FilterKind, apply_filter

LEAKY_SLOPE = 0.2
HIDDEN = 64
LAYERS = 3


# loss ---------------------------------------------------------------------

def softmax(Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    e = np.exp(Z - Z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(Z: np.ndarray) -> np.ndarray:
    Z = np.asarray(Z, dtype=np.float64)
    shifted = Z - Z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(z, c: int) -> float:
    return float(-log_softmax(np.asarray(z, dtype=np.float64))[c])


def logit_gradient(z, c: int) -> np.ndarray:
    g = softmax(np.asarray(z, dtype=np.float64))
    g[c] -= 1.0
    return g


def node_losses(Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    return -log_softmax(Z)[np.arange(len(y)), y]


def residual(Z: np.ndarray, y: np.ndarray, rows) -> np.ndarray:
    """softmax(Z) - onehot(y), restricted to ``rows``."""
    eps = softmax(Z[rows])
    eps[np.arange(len(eps)), y[rows]] -= 1.0
    return eps


def masked_loss(Z: np.ndarray, y: np.ndarray, mask: np.ndarray):
    """Mean cross-entropy over ``mask`` and its gradient w.r.t. ``Z``."""
    rows = np.flatnonzero(mask)
    dZ = np.zeros_like(Z)
    if len(rows) == 0:
        return 0.0, dZ
    loss = float(node_losses(Z[rows], y[rows]).mean())
    dZ[rows] = residual(Z, y, rows) / len(rows)
    return loss, dZ


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


# linearized -----------------------------------------------------------------

@dataclass
class LinearizedParams:
    weights: list

    @property
    def hops(self) -> int:
        return len(self.weights) - 1

    def named(self) -> dict:
        return {f"W{l}": w for l, w in enumerate(self.weights)}

    @classmethod
    def from_named(cls, arrays: dict) -> "LinearizedParams":
        return cls([np.asarray(arrays[f"W{l}"]) for l in range(len(arrays))])

    def copy(self) -> "LinearizedParams":
        return LinearizedParams([w.copy() for w in self.weights])


def propagate(graph: Graph, X: np.ndarray, hops: int, kind) -> list:
    """``[X, P X, ..., P^L X]`` by repeated sparse products."""
    kind = FilterKind(kind)
    if kind is FilterKind.ATT:
        raise ValueError("the linearized model supports RW and SYM only")
    feats = [np.asarray(X, dtype=np.float64)]
    for _ in range(hops):
        feats.append(apply_filter(graph, kind, feats[-1]))
    return feats


def forward_linearized(graph: Graph, X: np.ndarray, params: LinearizedParams, kind) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    for w in params.weights:
        if w.shape[0] != X.shape[1]:
            raise ValueError(f"weight has {w.shape[0]} rows, features have {X.shape[1]} columns")
    feats = propagate(graph, X, params.hops, kind)
    return sum(F @ W for F, W in zip(feats, params.weights))


class LinearizedModel:
    family = "linear"

    def __init__(self, graph: Graph, X: np.ndarray, kind, hops: int):
        self.graph = graph
        self.X = np.asarray(X, dtype=np.float64)
        self.kind = FilterKind(kind)
        self.hops = hops
        self.feats = propagate(graph, self.X, hops, self.kind)

    def init_params(self, num_classes: int, rng: np.random.Generator) -> LinearizedParams:
        d = self.X.shape[1]
        return LinearizedParams([uniform_init(rng, d, (d, num_classes)) for _ in range(self.hops + 1)])

    def logits(self, params: LinearizedParams) -> np.ndarray:
        return sum(F @ W for F, W in zip(self.feats, params.weights))

    def logits_for(self, params: LinearizedParams, X: np.ndarray) -> np.ndarray:
        """Forward pass on replacement features (projects before propagating)."""
        out = X @ params.weights[-1]
        for W in reversed(params.weights[:-1]):
            out = apply_filter(self.graph, self.kind, out) + X @ W
        return out

    def loss_and_grad(self, params: LinearizedParams, y, mask):
        Z = self.logits(params)
        loss, dZ = masked_loss(Z, y, mask)
        grads = {f"W{l}": F.T @ dZ for l, F in enumerate(self.feats)}
        return loss, grads, Z


# general message passing ------------------------------------------------------

@dataclass
class GeneralParams:
    kind: FilterKind
    W1: list
    W2: list
    W3: list
    att: list = field(default_factory=list)

    def named(self) -> dict:
        out = {}
        for l in range(len(self.W1)):
            out[f"layer{l}.W1"] = self.W1[l]
            out[f"layer{l}.W2"] = self.W2[l]
            out[f"layer{l}.W3"] = self.W3[l]
            if self.att:
                out[f"layer{l}.att"] = self.att[l]
        return out

    @classmethod
    def from_named(cls, kind, arrays: dict) -> "GeneralParams":
        n = sum(1 for k in arrays if k.endswith(".W1"))
        get = lambda l, s: np.asarray(arrays[f"layer{l}.{s}"])  # noqa: E731
        att = [get(l, "att") for l in range(n)] if "layer0.att" in arrays else []
        return cls(FilterKind(kind), [get(l, "W1") for l in range(n)],
                   [get(l, "W2") for l in range(n)], [get(l, "W3") for l in range(n)], att)

    def copy(self) -> "GeneralParams":
        cp = lambda ws: [w.copy() for w in ws]  # noqa: E731
        return GeneralParams(self.kind, cp(self.W1), cp(self.W2), cp(self.W3), cp(self.att))


def _edge_rows(graph: Graph) -> np.ndarray:
    return np.repeat(np.arange(graph.num_nodes), graph.degrees)


def _attention(graph: Graph, G: np.ndarray, a: np.ndarray):
    k = G.shape[1]
    rows, cols = _edge_rows(graph), graph.neighbor_ids
    pre = (G @ a[:k])[rows] + (G @ a[k:])[cols]
    score = np.where(pre > 0, pre, LEAKY_SLOPE * pre)
    starts = graph.row_offsets[:-1]
    ex = np.exp(score - np.maximum.reduceat(score, starts)[rows])
    alpha = ex / np.add.reduceat(ex, starts)[rows]
    n = graph.num_nodes
    P = sp.csr_matrix((alpha, cols, graph.row_offsets), shape=(n, n))
    return P, pre, alpha


def attention_filter(graph: Graph, H: np.ndarray, a: np.ndarray, W2: np.ndarray) -> sp.csr_matrix:
    """Single-head attention weights over each node's neighbors.

    ``P_ij = softmax_j leaky_relu(a . [(H W2)_i || (H W2)_j])`` with support
    equal to the adjacency support, so rows sum to one.
    """
    return _attention(graph, np.asarray(H) @ W2, np.asarray(a))[0]


def init_general(kind, in_dim: int, num_classes: int, rng: np.random.Generator,
                 hidden: int = HIDDEN, layers: int = LAYERS) -> GeneralParams:
    kind = FilterKind(kind)
    dims = [in_dim] + [hidden] * (layers - 1) + [num_classes]
    W1, W2, W3, att = [], [], [], []
    for l in range(layers):
        d_in, d_out = dims[l], dims[l + 1]
        W1.append(uniform_init(rng, d_in, (d_in, d_out)))
        W2.append(uniform_init(rng, d_in, (d_in, d_out)))
        W3.append(uniform_init(rng, in_dim, (in_dim, d_out)))
        if kind is FilterKind.ATT:
            att.append(uniform_init(rng, 2 * d_out, (2 * d_out,)))
    return GeneralParams(kind, W1, W2, W3, att)


def forward_general(graph: Graph, X: np.ndarray, params: GeneralParams, kind=None):
    """Return ``(logits, activations)``; activations feed :func:`backward_general`."""
    kind = FilterKind(kind or params.kind)
    X = np.asarray(X, dtype=np.float64)
    if params.W1[0].shape[0] != X.shape[1]:
        raise ValueError("first-layer weights do not match feature width")
    H = X
    acts = []
    n_layers = len(params.W1)
    for l in range(n_layers):
        G = H @ params.W2[l]
        if kind is FilterKind.ATT:
            P, pre, alpha = _attention(graph, G, params.att[l])
            msg = P @ G
            att = (pre, alpha)
        else:
            P, att = None, None
            msg = apply_filter(graph, kind, G)
        Z = H @ params.W1[l] + msg + X @ params.W3[l]
        acts.append((H, G, P, att, Z))
        H = np.maximum(Z, 0.0) if l < n_layers - 1 else Z
    return Z, acts


def backward_general(graph: Graph, X: np.ndarray, params: GeneralParams, acts, dlogits: np.ndarray) -> dict:
    kind = params.kind
    n_layers = len(params.W1)
    rows, cols = _edge_rows(graph), graph.neighbor_ids
    grads = {}
    dZ, dH = dlogits, None
    for l in reversed(range(n_layers)):
        H, G, P, att, Z = acts[l]
        if l < n_layers - 1:
            dZ = dH * (Z > 0)
        grads[f"layer{l}.W1"] = H.T @ dZ
        grads[f"layer{l}.W3"] = X.T @ dZ
        if kind is FilterKind.ATT:
            pre, alpha = att
            a = params.att[l]
            k = G.shape[1]
            dG = P.T @ dZ
            dP = np.einsum("ek,ek->e", dZ[rows], G[cols])
            weighted = np.add.reduceat(alpha * dP, graph.row_offsets[:-1])
            dscore = alpha * (dP - weighted[rows])
            dpre = dscore * np.where(pre > 0, 1.0, LEAKY_SLOPE)
            n = graph.num_nodes
            ds = np.bincount(rows, weights=dpre, minlength=n)
            dt = np.bincount(cols, weights=dpre, minlength=n)
            grads[f"layer{l}.att"] = np.concatenate([G.T @ ds, G.T @ dt])
            dG = dG + np.outer(ds, a[:k]) + np.outer(dt, a[k:])
        else:
            # P_sym is symmetric; P_rw is not, so transpose explicitly
            dG = np.asarray(apply_transpose(graph, kind, dZ))
        grads[f"layer{l}.W2"] = H.T @ dG
        if l > 0:
            dH = dZ @ params.W1[l].T + dG @ params.W2[l].T
    return grads


def apply_transpose(graph: Graph, kind, M: np.ndarray) -> np.ndarray:
    kind = FilterKind(kind)
    P = graph.rw_matrix if kind is FilterKind.RW else graph.sym_matrix
    return P.T @ M


class GeneralModel:
    family = "general"

    def __init__(self, graph: Graph, X: np.ndarray, kind, hidden: int = HIDDEN, layers: int = LAYERS):
        self.graph = graph
        self.X = np.asarray(X, dtype=np.float64)
        self.kind = FilterKind(kind)
        self.hidden = hidden
        self.layers = layers

    def init_params(self, num_classes: int, rng: np.random.Generator) -> GeneralParams:
        return init_general(self.kind, self.X.shape[1], num_classes, rng, self.hidden, self.layers)

    def logits(self, params: GeneralParams) -> np.ndarray:
        return forward_general(self.graph, self.X, params, self.kind)[0]

    def logits_for(self, params: GeneralParams, X: np.ndarray) -> np.ndarray:
        return forward_general(self.graph, X, params, self.kind)[0]

    def loss_and_grad(self, params: GeneralParams, y, mask):
        Z, acts = forward_general(self.graph, self.X, params, self.kind)
        loss, dZ = masked_loss(Z, y, mask)
        return loss, backward_general(self.graph, self.X, params, acts, dZ), Z


def build_model(family: str, graph: Graph, X: np.ndarray, kind, hops: int = 2,
                layers: int = LAYERS, hidden: int = HIDDEN):
    if family in ("linear", "linearized"):
        return LinearizedModel(graph, X, kind, hops)
    if family == "general":
        return GeneralModel(graph, X, kind, hidden=hidden, layers=layers)
    raise ValueError(f"unknown model family {family!r}")
