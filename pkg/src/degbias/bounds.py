"""Numerical checks of the misclassification, R lower-bound, Lipschitz and
per-step training bounds.

Every check produces :class:`BoundRecord` objects oriented so that
``slack >= 0`` means the inequality holds.  Deterministic identities use an
absolute tolerance of 1e-8; Monte Carlo comparisons allow 3 standard errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import (ClassStats, GapStats, gap_moments, gap_statistics, homogeneity_table,
                          resample_logits, similarity_norms)
from .graph import Graph, Split
from .models import LinearizedModel, LinearizedParams, log_softmax, node_losses, residual
from .spectral import WalkCache, collision_table, rw_row

DETERMINISTIC_TOL = 1e-8
MC_SIGMAS = 3.0
SQRT2 = np.sqrt(2.0)


@dataclass
class BoundRecord:
    check: str
    node: int
    lhs: float
    rhs: float
    slack: float
    holds: bool
    stderr: float = 0.0
    contrast: int = -1
    degree: int = 0
    status: str = "checked"   # checked | precondition-unmet | indeterminate
    step: int = -1
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = {"check": self.check, "node": self.node, "contrast": self.contrast,
               "step": self.step, "degree": self.degree, "lhs": self.lhs, "rhs": self.rhs,
               "slack": self.slack, "stderr": self.stderr, "holds": int(self.holds),
               "status": self.status}
        out.update(self.extra)
        return out


def summarize(records) -> dict:
    checked = [r for r in records if r.status == "checked"]
    slacks = np.array([r.slack for r in checked]) if checked else np.array([np.nan])
    return {
        "records": len(records),
        "checked": len(checked),
        "fraction_holding": float(np.mean([r.holds for r in checked])) if checked else float("nan"),
        "min_slack": float(np.nanmin(slacks)) if checked else float("nan"),
        "median_slack": float(np.nanmedian(slacks)) if checked else float("nan"),
        "indeterminate": sum(r.status == "indeterminate" for r in records),
        "precondition_unmet": sum(r.status == "precondition-unmet" for r in records),
    }


# misclassification (Cantelli) -----------------------------------------------------

def cantelli_bound(R: float) -> float:
    if R < 0:
        raise ValueError("R must be nonnegative")
    return 1.0 / (1.0 + R)


def misclassification_record(gaps, node: int = -1, contrast: int = -1, degree: int = 0,
                             stats: GapStats | None = None) -> BoundRecord:
    """Compare the observed frequency of ``gap > 0`` with ``1 / (1 + R_hat)``.

    The precondition ``E[gap] < 0`` is accepted only when the sample mean is
    below zero by three standard errors; a mean above zero by three standard
    errors is ``precondition-unmet`` and anything in between is
    ``indeterminate``.
    """
    gaps = np.asarray(gaps, dtype=np.float64)
    stats = stats or gap_statistics(gaps)
    freq = float(np.mean(gaps > 0))
    binom_se = float(np.sqrt(freq * (1 - freq) / len(gaps)))
    bound = cantelli_bound(stats.r_hat) if np.isfinite(stats.r_hat) else 0.0
    rec = BoundRecord("cantelli", node, freq, bound, bound - freq, True, binom_se, contrast, degree,
                      extra={"r_hat": stats.r_hat, "r_stderr": stats.stderr, "mean_gap": stats.mean_gap})
    threshold = MC_SIGMAS * stats.mean_stderr
    if stats.mean_gap >= -threshold:
        rec.status = "precondition-unmet" if stats.mean_gap > threshold else "indeterminate"
        return rec
    rec.holds = rec.slack >= -MC_SIGMAS * binom_se
    return rec


def verify_misclassification_bound(forward, X, y, i: int, contrast: int, resamples: int, seed: int,
                                   stats: ClassStats, degree: int = 0) -> BoundRecord:
    Z = resample_logits(forward, X, y, stats, resamples, seed, nodes=[i])[:, 0, :]
    return misclassification_record(Z[:, contrast] - Z[:, int(y[i])], i, contrast, degree)


# R lower bounds ---------------------------------------------------------------------

def variance_cap(weights: list, stats: ClassStats, y_i: int, contrast: int) -> float:
    """Empirical M: the largest class projection variance over hops and classes."""
    caps = [stats.projection_variance(W[:, contrast] - W[:, y_i]).max() for W in weights]
    return float(max(caps))


def r_lower_bound(graph: Graph, weights: list, stats: ClassStats, labels: np.ndarray, i: int,
                  contrast: int, discounted: bool, cache: WalkCache | None = None):
    """``(sum beta)^2 / (M (L+1) sum alpha)``; returns ``(bound, M, beta_sum, alpha_sum)``.

    With ``discounted`` the degree-discounted beta~ and alpha~ are used.
    """
    cache = cache or WalkCache(graph)
    c = int(labels[i])
    beta_sum = 0.0
    alpha_sum = 0.0
    for l, W in enumerate(weights):
        w = W[:, contrast] - W[:, c]
        row = rw_row(graph, i, l, cache)
        scores = stats.means[labels[row.nodes]] @ w
        sq = row.probs ** 2
        if discounted:
            scores = scores / np.sqrt(graph.degrees[row.nodes])
            sq = sq / graph.degrees[row.nodes]
        beta_sum += float(row.probs @ scores)
        alpha_sum += float(sq.sum())
    M = variance_cap(weights, stats, c, contrast)
    L = len(weights) - 1
    if M == 0:
        return (0.0 if beta_sum == 0 else np.inf), M, beta_sum, alpha_sum
    return beta_sum ** 2 / (M * (L + 1) * alpha_sum), M, beta_sum, alpha_sum


def r_bound_record(check: str, graph: Graph, weights: list, kind: str, stats: ClassStats,
                   labels: np.ndarray, i: int, contrast: int, r_est: GapStats | None,
                   cache: WalkCache | None = None) -> BoundRecord:
    """R_hat (or the exact R when no estimate is given) against the lower bound."""
    cache = cache or WalkCache(graph)
    bound, M, beta_sum, alpha_sum = r_lower_bound(graph, weights, stats, labels, i, contrast,
                                                  discounted=(kind == "sym"), cache=cache)
    mean, var = gap_moments(graph, weights, kind, stats, labels, i, contrast, cache)
    r_exact = mean * mean / var if var > 0 else np.inf
    extra = {"M": M, "beta_sum": beta_sum, "alpha_sum": alpha_sum, "r_exact": r_exact,
             "exact_holds": int(r_exact >= bound - DETERMINISTIC_TOL * max(1.0, abs(bound)))}
    deg = int(graph.degrees[i])
    if r_est is None:
        lhs, se = r_exact, 0.0
        tol = DETERMINISTIC_TOL * max(1.0, abs(bound))
    else:
        lhs, se = r_est.r_hat, r_est.stderr
        tol = MC_SIGMAS * (se if np.isfinite(se) else 0.0)
    slack = np.inf if lhs == np.inf else lhs - bound
    return BoundRecord(check, i, lhs, bound, float(slack), bool(slack >= -tol), se, contrast, deg,
                       extra=extra)


def r_bound_rw(graph, X, Y, params: LinearizedParams, i, contrast, stats: ClassStats,
                         r_est: GapStats | None = None) -> BoundRecord:
    return r_bound_record("r_rw", graph, params.weights, "rw", stats, Y, i, contrast, r_est)


def r_bound_sym(graph, X, Y, params: LinearizedParams, i, contrast, stats: ClassStats,
                         r_est: GapStats | None = None) -> BoundRecord:
    return r_bound_record("r_sym", graph, params.weights, "sym", stats, Y, i, contrast, r_est)


# Lipschitz constant of the cross-entropy ------------------------------------------------

def lipschitz_ratio(z1: np.ndarray, z2: np.ndarray, c: np.ndarray) -> np.ndarray:
    """``|l(z1,c) - l(z2,c)| / ||z1 - z2||``, row-wise; 0 where ``z1 == z2``."""
    rows = np.arange(len(z1))
    dl = np.abs(log_softmax(z1)[rows, c] - log_softmax(z2)[rows, c])
    dz = np.linalg.norm(z1 - z2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(dz > 0, dl / dz, 0.0)


def verify_lipschitz(samples: int, seed: int, dims=range(2, 11), low=-30.0, high=30.0) -> BoundRecord:
    """Random logit pairs across ``dims``; lhs is the largest observed ratio, rhs is sqrt(2)."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    dims = list(dims)
    per_dim = np.full(len(dims), samples // len(dims))
    per_dim[: samples % len(dims)] += 1
    worst, violations = 0.0, 0
    for d, n in zip(dims, per_dim):
        if n == 0:
            continue
        z1 = rng.uniform(low, high, (n, d))
        z2 = rng.uniform(low, high, (n, d))
        c = rng.integers(0, d, n)
        ratio = lipschitz_ratio(z1, z2, c)
        worst = max(worst, float(ratio.max()))
        violations += int(np.sum(ratio > SQRT2))
    return BoundRecord("lipschitz", -1, worst, SQRT2, SQRT2 - worst, violations == 0,
                       extra={"samples": int(samples), "violations": violations})


# per-step training bounds -------------------------------------------------------------

@dataclass
class StepSweep:
    """lhs/rhs arrays of shape ``(steps, N)`` for one kind."""

    check: str
    lhs: np.ndarray
    rhs: np.ndarray
    degrees: np.ndarray
    tol: float = DETERMINISTIC_TOL
    losses: np.ndarray | None = None

    @property
    def slack(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def holds(self) -> np.ndarray:
        return self.slack >= -self.tol

    def records(self):
        for t in range(self.lhs.shape[0]):
            for i in range(self.lhs.shape[1]):
                yield BoundRecord(self.check, i, float(self.lhs[t, i]), float(self.rhs[t, i]),
                                  float(self.slack[t, i]), bool(self.holds[t, i]),
                                  degree=int(self.degrees[i]), step=t)


def verify_training_step_bound(kind: str, graph: Graph, X: np.ndarray, y: np.ndarray, split: Split,
                               learning_rate: float, steps: int, hops: int = 2, seed: int = 0,
                               params: LinearizedParams | None = None) -> StepSweep:
    """Run ``steps`` plain gradient-descent steps on the linearized model and bound every
    node's loss change.

    Gradients are of the *mean* batch loss, i.e. a step of ``eta / |B|`` on the
    summed loss, so the right-hand side uses ``eta / |B|`` as the step size.
    SYM uses the degree-discounted similarity and the ``sqrt(D_ii)`` factor.
    """
    kind = str(getattr(kind, "value", kind))
    model = LinearizedModel(graph, X, kind, hops)
    num_classes = int(y.max()) + 1
    params = params.copy() if params is not None else model.init_params(num_classes, np.random.default_rng(seed))
    batch = split.train
    mask = split.mask("train", len(y))
    discounted = kind == "sym"
    sims = similarity_norms(graph, X, batch, hops, discounted).sum(axis=1)
    prefactor = np.sqrt(graph.degrees) if discounted else np.ones(graph.num_nodes)
    eta_eff = learning_rate / len(batch)
    lhs = np.empty((steps, graph.num_nodes))
    rhs = np.empty_like(lhs)
    losses = np.empty((steps + 1, graph.num_nodes))
    Z = model.logits(params)
    losses[0] = node_losses(Z, y)
    for t in range(steps):
        eps = residual(Z, y, batch)
        _, grads, _ = model.loss_and_grad(params, y, mask)
        for k, p in params.named().items():
            p -= learning_rate * grads[k]
        Z = model.logits(params)
        losses[t + 1] = node_losses(Z, y)
        lhs[t] = np.abs(losses[t + 1] - losses[t])
        rhs[t] = prefactor * SQRT2 * eta_eff * np.linalg.norm(eps) * sims
    check = "step_sym" if discounted else "step_rw"
    return StepSweep(check, lhs, rhs, graph.degrees.copy(), losses=losses)


def r_bound_table(graph: Graph, weights: list, kind: str, stats: ClassStats, labels: np.ndarray,
                  contrast: np.ndarray) -> np.ndarray:
    """Vectorized lower bound for every node against ``contrast[i]``."""
    discounted = kind == "sym"
    beta = homogeneity_table(graph, weights, stats, labels, contrast, discounted).sum(axis=1)
    alpha = collision_table(graph, len(weights) - 1, discounted).sum(axis=1)
    M = np.array([variance_cap(weights, stats, int(labels[i]), int(contrast[i]))
                  for i in range(graph.num_nodes)])
    L = len(weights) - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        return beta ** 2 / (M * (L + 1) * alpha)
