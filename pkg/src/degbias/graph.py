"""Graph, feature, label and split containers plus the canonical on-disk format."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

log = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected graph in CSR layout.

    ``row_offsets[i]:row_offsets[i+1]`` slices ``neighbor_ids`` to give the
    sorted neighbors of node ``i``.  Every node must have at least one
    neighbor because the normalized filters divide by degree.
    """

    row_offsets: np.ndarray
    neighbor_ids: np.ndarray
    has_self_loops: bool = False
    degrees: np.ndarray = field(init=False)

    def __post_init__(self):
        offsets = np.asarray(self.row_offsets, dtype=np.int64)
        nbrs = np.asarray(self.neighbor_ids, dtype=np.int64)
        object.__setattr__(self, "row_offsets", offsets)
        object.__setattr__(self, "neighbor_ids", nbrs)
        object.__setattr__(self, "degrees", np.diff(offsets))
        for arr in (offsets, nbrs, self.degrees):
            arr.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return len(self.row_offsets) - 1

    @property
    def num_edges(self) -> int:
        """Undirected edge count; a self-loop counts once."""
        loops = int(self.adjacency.diagonal().sum())
        return (len(self.neighbor_ids) - loops) // 2 + loops

    def neighbors(self, i: int) -> np.ndarray:
        return self.neighbor_ids[self.row_offsets[i]:self.row_offsets[i + 1]]

    @classmethod
    def from_edges(cls, edges, num_nodes: int, keep_self_loops: bool = False) -> "Graph":
        """Build a symmetric graph from (u, v) pairs, dropping duplicates.

        Raises GraphFormatError on out-of-range ids or isolated nodes.
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
            bad = edges[(edges < 0).any(1) | (edges >= num_nodes).any(1)][0]
            raise GraphFormatError(f"edge {tuple(bad)} out of range for N={num_nodes}")
        u, v = edges[:, 0], edges[:, 1]
        if not keep_self_loops:
            keep = u != v
            u, v = u[keep], v[keep]
        rows = np.concatenate([u, v])
        cols = np.concatenate([v, u])
        # unique (row, col) pairs, sorted row-major
        keys = np.unique(rows * num_nodes + cols)
        rows, cols = keys // num_nodes, keys % num_nodes
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(np.bincount(rows, minlength=num_nodes), out=offsets[1:])
        graph = cls(offsets, cols, has_self_loops=bool(keep_self_loops and (rows == cols).any()))
        isolated = np.flatnonzero(graph.degrees == 0)
        if len(isolated):
            raise GraphFormatError(f"{len(isolated)} isolated node(s), first is {isolated[0]}")
        return graph

    def edge_array(self) -> np.ndarray:
        """Each undirected edge once as (u, v) with u <= v."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees)
        keep = rows <= self.neighbor_ids
        return np.stack([rows[keep], self.neighbor_ids[keep]], axis=1)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        n = self.num_nodes
        data = np.ones(len(self.neighbor_ids))
        return sp.csr_matrix((data, self.neighbor_ids, self.row_offsets), shape=(n, n))

    @cached_property
    def rw_matrix(self) -> sp.csr_matrix:
        """P_rw = D^-1 A."""
        return sp.diags(1.0 / self.degrees) @ self.adjacency

    @cached_property
    def sym_matrix(self) -> sp.csr_matrix:
        """P_sym = D^-1/2 A D^-1/2."""
        d = sp.diags(1.0 / np.sqrt(self.degrees))
        return (d @ self.adjacency @ d).tocsr()

    def is_symmetric(self) -> bool:
        a = self.adjacency
        return (a != a.T).nnz == 0

    def is_connected(self) -> bool:
        n_comp, _ = connected_components(self.adjacency, directed=False)
        return n_comp == 1

    def subgraph(self, nodes: np.ndarray) -> "Graph":
        """Induced subgraph on ``nodes`` (sorted), ids remapped to 0..len-1."""
        nodes = np.asarray(nodes)
        sub = self.adjacency[nodes][:, nodes].tocsr()
        sub.sort_indices()
        return Graph(sub.indptr, sub.indices, has_self_loops=bool(sub.diagonal().any()))


def largest_component(graph: Graph) -> np.ndarray:
    _, comp = connected_components(graph.adjacency, directed=False)
    sizes = np.bincount(comp)
    return np.flatnonzero(comp == np.argmax(sizes))


def edge_homophily(graph: Graph, labels: np.ndarray) -> float:
    """Fraction of edge endpoints (both directions) that share a label."""
    rows = np.repeat(np.arange(graph.num_nodes), graph.degrees)
    return float(np.mean(labels[rows] == labels[graph.neighbor_ids]))


def normalize_features(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    sums = X.sum(axis=1, keepdims=True)
    safe = np.where(sums == 0, 1.0, sums)
    return X / safe


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def mask(self, part: str, num_nodes: int) -> np.ndarray:
        m = np.zeros(num_nodes, dtype=bool)
        m[getattr(self, part)] = True
        return m


def split_nodes(num_nodes: int, test_size: int, val_size: int, seed: int) -> Split:
    """Uniform random test/val/train split; the permutation is drawn once from PCG64."""
    if test_size < 0 or val_size < 0 or test_size + val_size >= num_nodes:
        raise ValueError(f"test_size + val_size must be < N={num_nodes}")
    perm = np.random.default_rng(seed).permutation(num_nodes)
    test = np.sort(perm[:test_size])
    val = np.sort(perm[test_size:test_size + val_size])
    train = np.sort(perm[test_size + val_size:])
    return Split(train=train, val=val, test=test)


def scaled_split(num_nodes: int, seed: int, test_size: int = 1000, val_size: int = 500) -> Split:
    """The 1000-500-rest split, shrunk proportionally when N is too small."""
    if test_size + val_size >= num_nodes:
        test_size = max(1, num_nodes // 3)
        val_size = max(1, num_nodes // 6)
    return split_nodes(num_nodes, test_size, val_size, seed)


def generate_synthetic(
    num_nodes: int,
    num_classes: int,
    intra_edge_prob: float,
    inter_edge_prob: float,
    degree_skew: float,
    feature_noise: float,
    seed: int,
    feature_dim: int | None = None,
):
    """Degree-weighted planted partition graph with class-informative features.

    Node ``i`` gets a weight ``theta_i`` drawn from a Pareto law with shape
    ``degree_skew`` (no weighting when ``degree_skew <= 0``), normalized to
    mean one.  Edge ``(i, j)`` appears with probability
    ``min(1, theta_i * theta_j * p)`` where ``p`` is the intra or inter class
    probability.  Features are the one-hot class indicator (padded to
    ``feature_dim``) plus ``feature_noise * U[0, 1)`` in every coordinate,
    row-normalized afterwards.

    Draw order from one PCG64 stream: label permutation, degree weights,
    upper-triangle edge uniforms row-major, feature noise row-major.

    Returns ``(graph, X, y)`` restricted to the largest connected component.
    """
    if num_classes < 2:
        raise ValueError("need at least two classes")
    feature_dim = num_classes if feature_dim is None else feature_dim
    if feature_dim < num_classes:
        raise ValueError("feature_dim must be >= num_classes")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(num_nodes) % num_classes)
    if degree_skew > 0:
        theta = (1.0 - rng.random(num_nodes)) ** (-1.0 / degree_skew)
    else:
        theta = np.ones(num_nodes)
    theta /= theta.mean()

    iu, ju = np.triu_indices(num_nodes, k=1)
    draws = rng.random(len(iu))
    base = np.where(labels[iu] == labels[ju], intra_edge_prob, inter_edge_prob)
    prob = np.minimum(1.0, theta[iu] * theta[ju] * base)
    hit = draws < prob
    edges = np.stack([iu[hit], ju[hit]], axis=1)
    del iu, ju, draws, base, prob

    noise = rng.random((num_nodes, feature_dim))
    X = feature_noise * noise
    X[np.arange(num_nodes), labels] += 1.0
    X = normalize_features(X)

    if len(edges) == 0:
        raise ValueError("parameters produced an empty graph")
    # isolated nodes are legal here; the component filter removes them
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(num_nodes, num_nodes))
    _, comp = connected_components(adj, directed=False)
    keep = np.flatnonzero(comp == np.argmax(np.bincount(comp)))
    if len(keep) < 2:
        raise ValueError("parameters produced an empty graph")
    remap = -np.ones(num_nodes, dtype=np.int64)
    remap[keep] = np.arange(len(keep))
    sel = (remap[edges[:, 0]] >= 0) & (remap[edges[:, 1]] >= 0)
    graph = Graph.from_edges(remap[edges[sel]], len(keep))
    return graph, X[keep], labels[keep]


# canonical dataset container ------------------------------------------------

@dataclass
class Dataset:
    graph: Graph
    features: np.ndarray
    labels: np.ndarray
    name: str = "unnamed"
    meta: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return int(self.meta.get("C", self.labels.max() + 1))


def load_graph(edge_list_path, num_nodes: int, keep_self_loops: bool = False) -> Graph:
    """Read whitespace-separated ``u v`` pairs.  Blank lines and ``#`` comments are skipped."""
    try:
        text = Path(edge_list_path).read_text()
    except OSError as exc:
        raise GraphFormatError(f"cannot read {edge_list_path}: {exc}") from exc
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(f"{edge_list_path}:{lineno}: expected 'u v'")
        pairs.append((int(parts[0]), int(parts[1])))
    graph = Graph.from_edges(np.array(pairs, dtype=np.int64).reshape(-1, 2), num_nodes, keep_self_loops)
    if not graph.is_connected():
        log.warning("graph from %s is disconnected; using it as-is", edge_list_path)
    return graph


def save_graph(graph: Graph, path) -> None:
    edges = graph.edge_array()
    _atomic_write(path, "".join(f"{u} {v}\n" for u, v in edges))


def _atomic_write(path, text: str) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def save_dataset(ds: Dataset, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    n, d = ds.features.shape
    meta = {"N": n, "d": d, "C": ds.num_classes, "name": ds.name}
    meta.update({k: v for k, v in ds.meta.items() if k not in meta})
    _atomic_write(directory / "meta", "".join(f"{k}={v}\n" for k, v in meta.items()))
    save_graph(ds.graph, directory / "edges")
    rows = (",".join(repr(float(x)) for x in row) for row in ds.features)
    _atomic_write(directory / "features.csv", "\n".join(rows) + "\n")
    _atomic_write(directory / "labels", "".join(f"{int(y)}\n" for y in ds.labels))
    return directory


def read_meta(path) -> dict:
    meta = {}
    for line in Path(path).read_text().splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            meta[k.strip()] = v.strip()
    for k in ("N", "d", "C"):
        if k not in meta:
            raise GraphFormatError(f"meta file missing '{k}'")
        meta[k] = int(meta[k])
    return meta


def load_dataset(directory, keep_self_loops: bool = False) -> Dataset:
    directory = Path(directory)
    try:
        meta = read_meta(directory / "meta")
        n, d, c = meta["N"], meta["d"], meta["C"]
        graph = load_graph(directory / "edges", n, keep_self_loops=keep_self_loops)
        X = np.loadtxt(directory / "features.csv", delimiter=",", ndmin=2)
        y = np.loadtxt(directory / "labels", dtype=np.int64, ndmin=1)
    except (OSError, ValueError) as exc:
        if isinstance(exc, GraphFormatError):
            raise
        raise GraphFormatError(f"cannot read dataset {directory}: {exc}") from exc
    if X.shape != (n, d):
        raise GraphFormatError(f"features.csv has shape {X.shape}, meta says {(n, d)}")
    if y.shape != (n,):
        raise GraphFormatError(f"labels has {len(y)} entries, meta says {n}")
    if y.min() < 0 or y.max() >= c or c < 2:
        raise GraphFormatError(f"labels must lie in [0, {c}) with C >= 2")
    return Dataset(graph, normalize_features(X), y, name=meta.get("name", directory.name), meta=meta)
