"""Per-node degree-bias quantities: prediction homogeneity, R estimates,
representation variance, PCA, degree-binned losses and neighborhood
similarity vectors.

Class feature distributions are replaced by their empirical surrogate: the
uniform distribution over the observed feature rows of each class.
Expectations therefore use class means exactly and variances use ddof=0
projection variances.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .graph import Graph
from .spectral import WalkCache, rw_row, walk_powers


@dataclass(frozen=True)
class ClassStats:
    means: np.ndarray       # C x d
    covs: np.ndarray        # C x d x d, ddof=0
    members: tuple          # per-class node index arrays

    @property
    def num_classes(self) -> int:
        return len(self.members)

    def projection_variance(self, w: np.ndarray) -> np.ndarray:
        """Per-class variance of ``x . w`` under the empirical class law."""
        return np.einsum("i,cij,j->c", w, self.covs, w)


def class_stats(X: np.ndarray, y: np.ndarray, num_classes: int | None = None) -> ClassStats:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    num_classes = num_classes or int(y.max()) + 1
    members = tuple(np.flatnonzero(y == c) for c in range(num_classes))
    for c, m in enumerate(members):
        if len(m) == 0:
            raise ValueError(f"class {c} has no nodes")
    means = np.stack([X[m].mean(axis=0) for m in members])
    covs = np.stack([np.cov(X[m], rowvar=False, ddof=0).reshape(X.shape[1], X.shape[1])
                     for m in members])
    return ClassStats(means, covs, members)


# prediction homogeneity ---------------------------------------------------------

def prediction_homogeneity(graph: Graph, i: int, contrast: int, l: int, W: np.ndarray,
                           stats: ClassStats, labels: np.ndarray, discounted: bool = False,
                           cache: WalkCache | None = None) -> float:
    """beta (or the degree-discounted beta~) of node ``i`` against ``contrast`` at hop ``l``."""
    c = int(labels[i])
    if contrast == c:
        raise ValueError("contrast class must differ from the node's label")
    w = W[:, contrast] - W[:, c]
    row = rw_row(graph, i, l, cache)
    scores = stats.means[labels[row.nodes]] @ w
    if discounted:
        scores = scores / np.sqrt(graph.degrees[row.nodes])
    return float(np.dot(row.probs, scores))


def homogeneity_table(graph: Graph, weights: list, stats: ClassStats, labels: np.ndarray,
                      contrast: np.ndarray, discounted: bool = False) -> np.ndarray:
    """beta for every node at every hop, shape ``N x (L+1)``; vectorized."""
    n = graph.num_nodes
    rows = np.arange(n)
    inv_sqrt = 1.0 / np.sqrt(graph.degrees)
    out = np.empty((n, len(weights)))
    powers = walk_powers(graph, len(weights) - 1)
    for l, W in enumerate(weights):
        scores = stats.means[labels] @ W  # N x C class-mean scores
        if discounted:
            scores = scores * inv_sqrt[:, None]
        agg = np.asarray(powers[l] @ scores)
        out[:, l] = agg[rows, contrast] - agg[rows, labels]
    return out


def default_contrast(Z: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Highest-scoring wrong class per node."""
    masked = np.array(Z, dtype=np.float64, copy=True)
    masked[np.arange(len(y)), y] = -np.inf
    return masked.argmax(axis=1)


# analytic moments of the logit gap for linearized models ----------------------------

def _filter_row(graph: Graph, i: int, l: int, kind: str, cache: WalkCache):
    row = rw_row(graph, i, l, cache)
    if kind == "sym":
        return row.nodes, row.probs * np.sqrt(graph.degrees[i] / graph.degrees[row.nodes])
    return row.nodes, row.probs


def gap_moments(graph: Graph, weights: list, kind: str, stats: ClassStats, labels: np.ndarray,
                i: int, contrast: int, cache: WalkCache | None = None):
    """Exact mean and variance of ``Z[i, contrast] - Z[i, y_i]`` under class resampling.

    The variance includes covariance between hops, because every hop reuses
    the same feature draw of each reached node.
    """
    cache = cache or WalkCache(graph)
    c = int(labels[i])
    d = weights[0].shape[0]
    coef: dict[int, np.ndarray] = {}
    for l, W in enumerate(weights):
        w = W[:, contrast] - W[:, c]
        nodes, vals = _filter_row(graph, i, l, kind, cache)
        for j, v in zip(nodes.tolist(), vals.tolist()):
            coef.setdefault(j, np.zeros(d))
            coef[j] += v * w
    nodes = np.fromiter(coef.keys(), dtype=np.int64)
    V = np.stack(list(coef.values()))
    cls = labels[nodes]
    mean = float(np.einsum("jd,jd->", V, stats.means[cls]))
    var = float(np.einsum("jd,jde,je->", V, stats.covs[cls], V))
    return mean, var


def term_variance(graph: Graph, W: np.ndarray, kind: str, stats: ClassStats, labels: np.ndarray,
                  i: int, contrast: int, l: int, cache: WalkCache | None = None) -> float:
    """Variance of the single hop-``l`` term: ``sum_j p_ij^2 Var_{Y_j}[x . w]``
    (with the ``D_ii / D_jj`` factor for SYM)."""
    cache = cache or WalkCache(graph)
    w = W[:, contrast] - W[:, int(labels[i])]
    pv = stats.projection_variance(w)
    nodes, vals = _filter_row(graph, i, l, kind, cache)
    return float(np.sum(vals ** 2 * pv[labels[nodes]]))


# Monte Carlo ------------------------------------------------------------------

def resample_features(X: np.ndarray, stats: ClassStats, labels: np.ndarray,
                      rng: np.random.Generator) -> np.ndarray:
    """Replace every row with a uniform draw from the rows of the same class (class-major order)."""
    idx = np.empty(len(labels), dtype=np.int64)
    for c, m in enumerate(stats.members):
        idx[m] = m[rng.integers(0, len(m), size=len(m))]
    return X[idx]


def resample_logits(forward, X, labels, stats: ClassStats, resamples: int, seed: int,
                    nodes=None) -> np.ndarray:
    """Logits under ``resamples`` independent feature resamples.

    Resample ``r`` uses the generator seeded by ``[seed, r]`` so results do
    not depend on evaluation order.  Returns ``(resamples, len(nodes), C)``.
    """
    out = []
    for r in range(resamples):
        Z = forward(resample_features(X, stats, labels, np.random.default_rng([seed, r])))
        out.append(Z if nodes is None else Z[nodes])
    return np.stack(out)


@dataclass(frozen=True)
class GapStats:
    r_hat: float
    stderr: float          # jackknife standard error of r_hat
    mean_gap: float
    mean_stderr: float
    var_gap: float
    n: int


def jackknife_ratio(gaps: np.ndarray):
    """Leave-one-out values of ``mean^2 / var`` (unbiased variance)."""
    n = len(gaps)
    s, ss = gaps.sum(), np.dot(gaps, gaps)
    m = (s - gaps) / (n - 1)
    v = (ss - gaps ** 2 - (n - 1) * m ** 2) / (n - 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return m ** 2 / v


def gap_statistics(gaps) -> GapStats:
    gaps = np.asarray(gaps, dtype=np.float64)
    n = len(gaps)
    if n < 2:
        raise ValueError("need at least two resamples")
    mean = float(gaps.mean())
    var = float(gaps.var(ddof=1))
    mean_se = float(np.sqrt(var / n))
    # relative threshold: a constant gap has round-off sized variance
    if var <= 1e-24 * max(1.0, mean * mean):
        return GapStats(float("inf"), float("nan"), mean, 0.0, 0.0, n)
    r_hat = mean * mean / var
    if n > 2:
        loo = jackknife_ratio(gaps)
        stderr = float(np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2)))
    else:
        stderr = float("nan")
    return GapStats(r_hat, stderr, mean, mean_se, var, n)


def estimate_R(forward, X, labels, i: int, contrast: int, resamples: int, seed: int,
               stats: ClassStats | None = None) -> GapStats:
    """Monte Carlo ``R = E[gap]^2 / Var[gap]`` for ``gap = Z[i, c'] - Z[i, y_i]``.

    ``forward`` maps a feature matrix to logits with parameters held fixed.
    A zero sample variance gives ``r_hat = inf``.
    """
    if resamples < 2:
        raise ValueError("need at least two resamples")
    stats = stats or class_stats(X, labels)
    Z = resample_logits(forward, X, labels, stats, resamples, seed, nodes=[i])[:, 0, :]
    return gap_statistics(Z[:, contrast] - Z[:, int(labels[i])])


# representation geometry ------------------------------------------------------------

def representation_variance(samples: np.ndarray, nodes=None) -> np.ndarray:
    """Trace of the unbiased covariance of each node's logit row across samples.

    ``samples`` has shape ``(S, N, C)`` (seeds or feature resamples).
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.shape[0] < 2:
        raise ValueError("need at least two samples")
    if nodes is not None:
        samples = samples[:, nodes]
    return samples.var(axis=0, ddof=1).sum(axis=-1)


@dataclass
class PCAResult:
    coords: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    converged: bool


def _orthogonalize(v: np.ndarray, basis: list) -> np.ndarray:
    # keeps later components orthogonal even when the deflated matrix is ~0
    for b in basis:
        v = v - (v @ b) * b
    return v / np.linalg.norm(v)


def pca_2d(Z: np.ndarray, tol: float = 1e-9, max_iter: int = 10_000) -> PCAResult:
    """Top-2 principal coordinates via power iteration with deflation.

    Each component is signed so its largest-magnitude loading is positive.
    """
    Z = np.asarray(Z, dtype=np.float64)
    if Z.shape[0] < 3:
        raise ValueError("need at least three points")
    centered = Z - Z.mean(axis=0)
    cov = centered.T @ centered / (len(Z) - 1)
    scale = max(np.abs(cov).max(), 1e-300)
    comps, evals = [], []
    converged = True
    rng = np.random.default_rng(0)
    A = cov.copy()
    for _ in range(min(2, cov.shape[0])):
        v = _orthogonalize(rng.standard_normal(cov.shape[0]), comps)
        lam = 0.0
        ok = False
        for _ in range(max_iter):
            Av = A @ v
            lam = float(v @ Av)
            if np.linalg.norm(Av - lam * v) <= tol * scale:
                ok = True
                break
            nrm = np.linalg.norm(Av)
            if nrm == 0:
                ok = True
                break
            v = _orthogonalize(Av / nrm, comps)
        converged &= ok
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        comps.append(v)
        evals.append(max(lam, 0.0))
        A = A - lam * np.outer(v, v)
    while len(comps) < 2:
        comps.append(np.zeros(cov.shape[0]))
        evals.append(0.0)
    if not converged:
        warnings.warn("power iteration did not converge", RuntimeWarning, stacklevel=2)
    C = np.stack(comps, axis=1)
    return PCAResult(centered @ C, C, np.array(evals), converged)


# degree-binned losses --------------------------------------------------------------

@dataclass
class DegreeBins:
    rows: list
    requested: int
    merged: bool

    @property
    def median_degree(self) -> np.ndarray:
        return np.array([r["median_degree"] for r in self.rows])

    @property
    def mean_loss(self) -> np.ndarray:
        return np.array([r["mean_loss"] for r in self.rows])


def degree_bins(degrees: np.ndarray, num_bins: int) -> np.ndarray:
    """Equal-count quantile bin id per node; duplicate edges (ties) merge bins."""
    if num_bins < 2:
        raise ValueError("need at least two bins")
    degrees = np.asarray(degrees, dtype=np.float64)
    edges = np.unique(np.quantile(degrees, np.linspace(0, 1, num_bins + 1)))
    raw = np.searchsorted(edges[1:-1], degrees, side="right")
    return np.unique(raw, return_inverse=True)[1].reshape(raw.shape)


def degree_binned_loss(losses: np.ndarray, degrees: np.ndarray, num_bins: int = 10) -> DegreeBins:
    """Mean loss per degree bin, with the std over seeds (ddof=1) of per-seed bin means.

    ``losses`` is ``(N,)`` or ``(seeds, N)``.
    """
    losses = np.atleast_2d(np.asarray(losses, dtype=np.float64))
    degrees = np.asarray(degrees)
    bins = degree_bins(degrees, num_bins)
    rows = []
    for b in range(bins.max() + 1):
        sel = bins == b
        per_seed = losses[:, sel].mean(axis=1)
        rows.append({
            "bin": b,
            "degree_min": int(degrees[sel].min()),
            "degree_max": int(degrees[sel].max()),
            "median_degree": float(np.median(degrees[sel])),
            "mean_loss": float(per_seed.mean()),
            "std_loss": float(per_seed.std(ddof=1)) if len(per_seed) > 1 else 0.0,
            "count": int(sel.sum()),
        })
    return DegreeBins(rows, num_bins, merged=len(rows) < num_bins)


def aggregate_seeds(values: np.ndarray):
    """Mean and 1-sigma standard deviation (ddof=1) across axis 0."""
    values = np.asarray(values, dtype=np.float64)
    std = values.std(axis=0, ddof=1) if len(values) > 1 else np.zeros(values.shape[1:])
    return values.mean(axis=0), std


# neighborhood similarity ------------------------------------------------------------

def neighborhood_similarity(graph: Graph, X: np.ndarray, i: int, batch, l: int,
                            discounted: bool = False, cache: WalkCache | None = None) -> np.ndarray:
    """chi_i (or the degree-discounted chi~_i) over ``batch`` at hop ``l``.

    ``chi[m] = E_{j~N(i), k~N(m)}[X_j . X_k]``; the discounted form divides by
    ``sqrt(D_jj D_kk)`` inside the expectation and multiplies by ``sqrt(D_mm)``.
    """
    cache = cache or WalkCache(graph)
    X = np.asarray(X, dtype=np.float64)
    scale = 1.0 / np.sqrt(graph.degrees) if discounted else np.ones(graph.num_nodes)

    def agg(node):
        r = rw_row(graph, node, l, cache)
        return (r.probs * scale[r.nodes]) @ X[r.nodes]

    u = agg(i)
    out = np.array([agg(m) @ u for m in batch])
    if discounted:
        out = out * np.sqrt(graph.degrees[np.asarray(batch, dtype=np.int64)])
    return out


def similarity_norms(graph: Graph, X: np.ndarray, batch, L: int, discounted: bool = False) -> np.ndarray:
    """``||chi_i^(l)||_2`` for every node ``i`` and hop ``l``; shape ``N x (L+1)``."""
    X = np.asarray(X, dtype=np.float64)
    batch = np.asarray(batch, dtype=np.int64)
    base = X / np.sqrt(graph.degrees)[:, None] if discounted else X
    out = np.empty((graph.num_nodes, L + 1))
    F = base
    for l in range(L + 1):
        if l:
            F = np.asarray(graph.rw_matrix @ F)
        S = F @ F[batch].T
        if discounted:
            S = S * np.sqrt(graph.degrees[batch])[None, :]
        out[:, l] = np.linalg.norm(S, axis=1)
    return out
