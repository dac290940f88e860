"""Desk-scale check suite on synthetic graphs.

Every ``check_*`` function runs one experiment and returns a :class:`Check`
with a pass/fail verdict and a one-line detail string.  ``run_suite`` runs
them all; the CLI's ``paper-desk`` command and the acceptance tests share
these functions so the thresholds live in one place.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import experiments as E
from .bounds import r_lower_bound, summarize, verify_lipschitz
from .diagnostics import class_stats
from .graph import Dataset, Graph
from .records import write_csv
from .spectral import icp_all

STEP_TOL = 1e-8
WL_TOL = 1e-9


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    data: dict = field(default_factory=dict, repr=False)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        out = fn(*args, **kwargs)
        out.seconds = time.perf_counter() - t0
        return out
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_lipschitz(samples: int = 100_000, seed: int = 0) -> Check:
    rec = verify_lipschitz(samples, seed)
    v = rec.extra["violations"]
    return Check("lipschitz", v == 0, f"{v} violations in {samples} pairs, max ratio {rec.lhs:.6f}")


def mc_sweeps(ds: Dataset, resamples: int = 2000, num_nodes: int = 150, seed: int = 0, epochs: int = 500):
    """One Monte Carlo sweep per filter on the first ``num_nodes`` test nodes."""
    split = E.desk_split(ds.graph.num_nodes)
    nodes = split.test[:num_nodes]
    return {kind: E.mc_bound_sweep(ds, kind, seed, resamples, nodes=nodes, epochs=epochs, split=split)
            for kind in ("rw", "sym")}


@_timed
def check_misclassification(sweeps: dict, min_pairs: int = 200) -> Check:
    parts, ok = [], True
    for kind, sweep in sweeps.items():
        s = summarize(sweep.misclassification)
        ok &= s["checked"] >= min_pairs and s["fraction_holding"] == 1.0
        parts.append(f"{kind}: {s['checked']} checked pairs, hold {s['fraction_holding']:.4f}, "
                     f"min slack {s['min_slack']:.3g}")
    return Check("cantelli", bool(ok), "; ".join(parts))


def regular_coincidence(graphs=None) -> float:
    """Largest |RW bound - SYM bound| over nodes and contrasts of d-regular graphs."""
    if graphs is None:
        cyc = Graph.from_edges([(i, (i + 1) % 8) for i in range(8)], 8)
        circ = Graph.from_edges([(i, (i + s) % 10) for i in range(10) for s in (1, 2)], 10)
        k4 = Graph.from_edges([(i, j) for i in range(4) for j in range(i + 1, 4)], 4)
        graphs = [cyc, circ, k4]
    worst = 0.0
    rng = np.random.default_rng(0)
    for g in graphs:
        n = g.num_nodes
        y = np.arange(n) % 2
        X = rng.normal(size=(n, 3))
        stats = class_stats(X, y, 2)
        weights = [rng.normal(size=(3, 2)) for _ in range(3)]
        for i in range(n):
            b_rw = r_lower_bound(g, weights, stats, y, i, 1 - y[i], discounted=False)[0]
            b_sym = r_lower_bound(g, weights, stats, y, i, 1 - y[i], discounted=True)[0]
            worst = max(worst, abs(b_rw - b_sym))
    return worst


@_timed
def check_r_bounds(sweeps: dict, min_pairs: int = 200) -> Check:
    parts, ok = [], True
    for kind, sweep in sweeps.items():
        s = summarize(sweep.paired_r_bounds())
        ok &= s["checked"] >= min_pairs and s["fraction_holding"] == 1.0
        parts.append(f"{kind}: {s['checked']} pairs, hold {s['fraction_holding']:.4f}, "
                     f"min slack {s['min_slack']:.3g}")
    gap = regular_coincidence()
    ok &= gap <= 1e-10
    parts.append(f"regular-graph |RW-SYM| {gap:.2e}")
    return Check("r-bounds", bool(ok), "; ".join(parts))


@_timed
def check_step_bounds(ds: Dataset, steps: int = 50, learning_rate: float = 5e-3, seed: int = 0) -> Check:
    parts, ok = [], True
    for kind in ("sym", "rw"):
        sweep = E.step_bound_sweep(ds, kind, steps, learning_rate, seed=seed)
        holds = sweep.slack >= -STEP_TOL
        ok &= bool(holds.all())
        parts.append(f"{sweep.check}: {holds.mean():.4f} of {holds.size}, "
                     f"min slack {sweep.slack.min():.3g}")
    return Check("step-bounds", ok, f"N={ds.graph.num_nodes}, {steps} steps; " + "; ".join(parts))


@_timed
def check_degree_bias(homophilic: Dataset, heterophilic: Dataset, seeds, epochs: int = 500) -> Check:
    parts, ok, data = [], True, {}
    for label, ds, test in (("homophilic", homophilic, lambda r: r <= -0.5),
                            ("heterophilic", heterophilic, lambda r: r >= -0.2)):
        for kind in ("rw", "sym"):
            res = E.degree_bias(ds, kind, seeds, epochs=epochs)
            data[(label, kind)] = res
            ok &= bool(test(res.spearman))
            parts.append(f"{label}/{kind} rho={res.spearman:.3f}")
    return Check("degree-bias", ok, ", ".join(parts), data=data)


@_timed
def check_variance(ds: Dataset, seeds, resamples: int = 10, epochs: int = 500) -> Check:
    rw = E.variance_asymmetry(ds, "rw", seeds, resamples, epochs=epochs)
    sym = E.variance_asymmetry(ds, "sym", seeds, resamples, epochs=epochs)
    ok = rw.gap > 0 and sym.gap <= sym.pooled_sigma
    detail = (f"RW low {rw.low.mean():.4g} vs high {rw.high.mean():.4g}; "
              f"SYM low {sym.low.mean():.4g} vs high {sym.high.mean():.4g} (pooled sigma {sym.pooled_sigma:.3g})")
    return Check("variance-asymmetry", bool(ok), detail, data={"rw": rw, "sym": sym})


@_timed
def check_training_rate(ds: Dataset, seeds, epochs: int = 500) -> Check:
    res = E.training_rate(ds, "sym", seeds, epochs=epochs)
    # a group that never halves within the budget cannot count as first
    wins = int((res.high_first & np.isfinite(res.high_epochs)).sum())
    need = int(np.ceil(0.8 * len(seeds)))
    detail = (f"high-degree group halves first in {wins}/{len(seeds)} seeds; "
              f"halving epochs high {res.high_epochs.tolist()} low {res.low_epochs.tolist()}")
    return Check("training-rate", wins >= need, detail, data={"sym": res})


WL_RUNS = (("general", "rw"), ("general", "sym"), ("general", "att"), ("linear", "rw"), ("linear", "sym"))


@_timed
def check_wl_ceiling(feature_distinct: Dataset, epochs: int = 500, runs=WL_RUNS) -> Check:
    tri, split = E.two_triangles()
    conflict = E.wl_ceiling_runs(tri, split, runs, epochs, stop_at_ceiling=False)
    ok = all(abs(r.ceiling - 0.5) < WL_TOL and r.best_train_acc <= 0.5 + WL_TOL for r in conflict)
    parts = [f"two triangles MAJ_WL {conflict[0].ceiling:.3f}, best "
             f"{max(r.best_train_acc for r in conflict):.3f}"]
    gen_runs = [r for r in runs if r[0] == "general"]
    reach = E.wl_ceiling_runs(feature_distinct, E.desk_split(feature_distinct.graph.num_nodes), gen_runs, epochs)
    for r in reach:
        ok &= r.best_train_acc >= r.ceiling - 0.01
        parts.append(f"{r.kind}: {r.best_train_acc:.3f}/{r.ceiling:.3f} in {r.epochs_run - 1} epochs")
    return Check("wl-ceiling", bool(ok), "; ".join(parts), data={"conflict": conflict, "reach": reach})


def _rank_agreement(degrees, icp) -> float:
    if np.ptp(degrees) == 0:
        return 1.0 if np.ptp(icp) <= 1e-12 else 0.0
    return float(spearmanr(degrees, icp)[0])


@_timed
def check_icp(test_graphs: dict, corpus: dict) -> Check:
    ok, parts = True, []
    worst_l1 = min(_rank_agreement(g.degrees, icp_all(g, 1)) for g in test_graphs.values())
    ok &= worst_l1 >= 1.0 - 1e-12
    parts.append(f"L=1 min rho {worst_l1:.6f} over {len(test_graphs)} graphs")
    for name, ds in corpus.items():
        rho = E.icp_spearman(ds.graph, 3)
        ok &= rho >= 0.7
        parts.append(f"{name} L=3 rho={rho:.3f}")
    return Check("icp-association", bool(ok), "; ".join(parts))


def small_test_graphs() -> dict:
    tri = Graph.from_edges([(0, 1), (1, 2), (2, 0)], 3)
    path = Graph.from_edges([(i, i + 1) for i in range(9)], 10)
    star = Graph.from_edges([(0, i) for i in range(1, 12)], 12)
    cyc = Graph.from_edges([(i, (i + 1) % 8) for i in range(8)], 8)
    return {"triangle": tri, "path10": path, "star12": star, "cycle8": cyc}


@dataclass
class SuiteConfig:
    seeds: tuple = tuple(range(10))
    epochs: int = 500
    resamples: int = 2000
    mc_nodes: int = 150
    lipschitz_samples: int = 100_000
    variance_resamples: int = 10
    bound_steps: int = 50

    @classmethod
    def quick(cls) -> "SuiteConfig":
        return cls(seeds=(0, 1, 2), epochs=150, resamples=200, mc_nodes=40, lipschitz_samples=10_000,
                   bound_steps=10)


def run_suite(seeds=None, out=None, quick: bool = False) -> list:
    cfg = SuiteConfig.quick() if quick else SuiteConfig()
    if seeds:
        cfg.seeds = tuple(seeds)
    hom, het = E.HOMOPHILIC.build("homophilic"), E.HETEROPHILIC.build("heterophilic")
    t0 = time.perf_counter()
    sweeps = mc_sweeps(hom, cfg.resamples, cfg.mc_nodes, cfg.seeds[0], cfg.epochs)
    sweep_seconds = time.perf_counter() - t0
    results = [
        check_lipschitz(cfg.lipschitz_samples, cfg.seeds[0]),
        check_misclassification(sweeps),
        check_r_bounds(sweeps),
        check_step_bounds(hom, cfg.bound_steps),
        check_degree_bias(hom, het, cfg.seeds, cfg.epochs),
        check_variance(hom, cfg.seeds, cfg.variance_resamples, cfg.epochs),
        check_training_rate(hom, cfg.seeds, cfg.epochs),
        check_wl_ceiling(hom, cfg.epochs),
        check_icp(small_test_graphs(), E.synthetic_corpus()),
    ]
    results[1].seconds += sweep_seconds
    if out is not None:
        rows = ({"check": r.name, "passed": int(r.passed), "seconds": round(r.seconds, 3), "detail": r.detail}
                for r in results)
        write_csv(Path(out) / "paper_desk.csv", rows, "suite", quick=int(quick), seeds=len(cfg.seeds))
    return results
