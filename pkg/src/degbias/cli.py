"""Command-line entry point: ``degbias {gen,train,diagnose,bounds,wl,report,paper-desk}``.

Exit codes: 0 when every assertion of the invoked command holds, 1 on
violations, 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
from scipy.stats import spearmanr

from . import experiments as E
from .bounds import summarize, verify_lipschitz
from .config import ConfigError, RunConfig, dump_config, load_config
from .bounds import misclassification_record, r_bound_record
from .diagnostics import (aggregate_seeds, class_stats, default_contrast, degree_binned_loss, degree_bins,
                          gap_statistics, homogeneity_table, pca_2d, representation_variance, resample_logits)
from .graph import Dataset, GraphFormatError, load_dataset, save_dataset, split_nodes
from .models import build_model, node_losses
from .records import MalformedCSV, RunManifest, atomic_write_text, write_csv
from .spectral import WalkCache, collision_table, icp_all
from .training import TrainConfig, TrainingDivergence, load_checkpoint, save_checkpoint, trace_rows, train
from .wl import color_table_rows, feature_colors, maj_wl_accuracy, wl_refine

log = logging.getLogger("degbias")


class UsageError(Exception):
    pass


# shared plumbing ---------------------------------------------------------------------

def resolve_dataset(cfg: RunConfig) -> Dataset:
    if cfg.dataset:
        return load_dataset(cfg.dataset, keep_self_loops=cfg.keep_self_loops)
    spec = E.SyntheticSpec(cfg.num_nodes, cfg.num_classes, cfg.intra_edge_prob, cfg.inter_edge_prob,
                           cfg.degree_skew, cfg.feature_noise, cfg.feature_dim or cfg.num_classes,
                           cfg.graph_seed)
    return spec.build("synthetic")


def run_split(cfg: RunConfig, ds: Dataset):
    n = ds.graph.num_nodes
    if cfg.test_size + cfg.val_size >= n:
        raise UsageError(f"test_size + val_size must be < {n} nodes")
    return split_nodes(n, cfg.test_size, cfg.val_size, cfg.split_seed)


def run_name(cfg: RunConfig, kind: str, seed: int) -> str:
    return f"{cfg.model}-{kind}-seed{seed}"


def checkpoint_path(cfg: RunConfig, kind: str, seed: int) -> Path:
    return Path(cfg.out) / "checkpoints" / run_name(cfg, kind, seed)


def load_run(cfg: RunConfig, kind: str, seed: int):
    path = checkpoint_path(cfg, kind, seed)
    if not path.with_suffix(".npz").exists():
        raise UsageError(f"missing checkpoint {path}.npz (run 'degbias train' first)")
    return load_checkpoint(path)[0]


def require_runs(cfg: RunConfig) -> None:
    missing = [str(checkpoint_path(cfg, k, s)) + ".npz" for k in cfg.filters for s in cfg.seed_list
               if not checkpoint_path(cfg, k, s).with_suffix(".npz").exists()]
    if missing:
        raise UsageError(f"{len(missing)} checkpoint(s) missing, first {missing[0]} (run 'degbias train' first)")


def manifest_path(cfg: RunConfig) -> Path:
    return Path(cfg.out) / "manifest.json"


def open_manifest(cfg: RunConfig) -> RunManifest:
    path = manifest_path(cfg)
    if path.exists():
        m = RunManifest.load(path)
        if m.config_hash == cfg.hash():
            return m
    return RunManifest(cfg.hash())


# subcommands -------------------------------------------------------------------------

def cmd_gen(cfg: RunConfig, args) -> int:
    ds = resolve_dataset(cfg)
    out = save_dataset(ds, cfg.out)
    print(f"wrote {out} (N={ds.graph.num_nodes}, edges={ds.graph.num_edges}, "
          f"homophily={ds.meta.get('homophily')})")
    return 0


def cmd_train(cfg: RunConfig, args) -> int:
    ds = resolve_dataset(cfg)
    split = run_split(cfg, ds)
    ceiling = E.majwl_ceiling(ds, split)
    low, high = E.degree_groups(ds.graph.degrees, split.train, cfg.group_size)
    manifest = open_manifest(cfg)
    h = cfg.hash()
    status = 0
    curves = {}
    for kind in cfg.filters:
        t0 = time.perf_counter()
        for seed in cfg.seed_list:
            model = build_model(cfg.model, ds.graph, ds.features, kind, hops=cfg.hops, layers=cfg.layers,
                                hidden=cfg.hidden)
            tcfg = TrainConfig(cfg.learning_rate, cfg.epochs, cfg.optimizer, seed)
            try:
                best, trace = train(model, ds.labels, split, tcfg, tracked_groups={"low": low, "high": high},
                                    ceiling=ceiling, num_classes=ds.num_classes)
            except TrainingDivergence as exc:
                print(f"{run_name(cfg, kind, seed)}: {exc}", file=sys.stderr)
                status = 1
                continue
            ckpt = save_checkpoint(checkpoint_path(cfg, kind, seed), best, cfg.model, kind, seed, h)
            tpath = write_csv(Path(cfg.out) / "traces" / f"{run_name(cfg, kind, seed)}.csv", trace_rows(trace), h,
                              seed=seed, stop=trace.stop_reason.replace(" ", "_"))
            manifest.add(seed, ckpt)
            manifest.add(seed, ckpt.with_suffix(".manifest"))
            manifest.add(seed, tpath)
            curves.setdefault(kind, []).append((trace.group_loss["low"], trace.group_loss["high"]))
            print(f"{run_name(cfg, kind, seed)}: epochs={trace.epochs} best_epoch={trace.best_epoch} "
                  f"train_acc={trace.train_acc[trace.best_epoch]:.4f} "
                  f"val_acc={trace.val_acc[trace.best_epoch]:.4f} stop={trace.stop_reason}")
        manifest.timings[f"train-{kind}"] = round(time.perf_counter() - t0, 3)
    if curves:
        gpath = write_csv(Path(cfg.out) / "group_curves.csv", _group_curve_rows(curves), h,
                          group_size=cfg.group_size)
        manifest.add("train", gpath)
    manifest.save(manifest_path(cfg))
    print(f"MAJ_WL training ceiling: {ceiling:.4f}")
    return status


def _group_curve_rows(curves):
    """Seed-mean low/high curves per filter, padded with the last value when runs stop early."""
    table = {}
    for kind, runs in curves.items():
        length = max(len(lo) for lo, _ in runs)
        for side, idx in (("low", 0), ("high", 1)):
            padded = np.array([np.pad(r[idx], (0, length - len(r[idx])), mode="edge") for r in runs])
            table[f"loss_{kind}_{side}"] = padded.mean(axis=0)
    length = max(len(v) for v in table.values())
    for t in range(length):
        row = {"epoch": t}
        for k, v in table.items():
            row[k] = float(v[t]) if t < len(v) else ""
        yield row


def cmd_diagnose(cfg: RunConfig, args) -> int:
    require_runs(cfg)
    ds = resolve_dataset(cfg)
    split = run_split(cfg, ds)
    test = split.test
    deg = ds.graph.degrees
    h = cfg.hash()
    L = cfg.hops if cfg.model == "linear" else cfg.layers
    alpha = collision_table(ds.graph, L)
    alpha_t = collision_table(ds.graph, L, discounted=True)
    icp = icp_all(ds.graph, L)
    bin_ids = degree_bins(deg[test], cfg.num_bins)
    stats = class_stats(ds.features, ds.labels, ds.num_classes)
    node_rows, bin_rows, var_rows = [], [], []
    for kind in cfg.filters:
        runs = [load_run(cfg, kind, seed) for seed in cfg.seed_list]
        model = build_model(cfg.model, ds.graph, ds.features, kind, hops=cfg.hops, layers=cfg.layers,
                            hidden=cfg.hidden)
        logits = np.array([model.logits(p) for p in runs])
        losses = np.array([node_losses(Z, ds.labels)[test] for Z in logits])
        bins = degree_binned_loss(losses, deg[test], cfg.num_bins)
        bin_rows += [{"kind": kind, **r} for r in bins.rows]
        mean_loss, std_loss = aggregate_seeds(losses)
        if args.variance_mode == "resamples":
            first = runs[0]
            samples = resample_logits(lambda F: model.logits_for(first, F), ds.features, ds.labels, stats,
                                      cfg.resamples, cfg.seed_list[0], nodes=test)
            var = representation_variance(samples)
        elif len(runs) > 1:
            var = representation_variance(logits, test)
        else:
            var = np.full(len(test), np.nan)
        beta = None
        if cfg.model == "linear":
            contrast = default_contrast(logits[0], ds.labels)
            beta = homogeneity_table(ds.graph, runs[0].weights, stats, ds.labels, contrast,
                                     discounted=(kind == "sym"))
        for k, i in enumerate(test.tolist()):
            row = {"kind": kind, "node": i, "degree": int(deg[i]), "bin": int(bin_ids[k]), "icp": float(icp[i]),
                   "loss_mean": float(mean_loss[k]), "loss_std": float(std_loss[k]),
                   "repr_variance": float(var[k])}
            for s_idx, seed in enumerate(cfg.seed_list):
                row[f"loss_seed{seed}"] = float(losses[s_idx, k])
            for l in range(L + 1):
                row[f"alpha_{l}"] = float(alpha[i, l])
                row[f"alpha_tilde_{l}"] = float(alpha_t[i, l])
            if beta is not None:
                for l in range(L + 1):
                    row[f"beta_{l}"] = float(beta[i, l])
            node_rows.append(row)
        if np.all(np.isfinite(var)):
            pos = {int(n): k for k, n in enumerate(test)}
            for name, group in zip(("low", "high"), E.degree_groups(deg, test, cfg.group_size)):
                v = var[[pos[int(n)] for n in group]]
                var_rows.append({"kind": kind, "group": name, "mode": args.variance_mode, "mean": float(v.mean()),
                                 "std": float(v.std(ddof=1)), "nodes": len(group)})
        if kind == cfg.filters[0]:
            pca = pca_2d(logits[0][test])
            rows = ({"node": int(i), "label": int(ds.labels[i]), "degree": int(deg[i]), "pc1": float(x),
                     "pc2": float(y)} for i, (x, y) in zip(test, pca.coords))
            write_csv(Path(cfg.out) / "pca.csv", rows, h, kind=kind, seed=cfg.seed_list[0])
        print(f"{kind}: bins={len(bins.rows)}{' (merged)' if bins.merged else ''} "
              f"spearman(bin degree, loss)={E.bin_spearman(bins):.3f}")
    rho = float(spearmanr(deg, icp)[0])
    rho1 = float(spearmanr(deg, icp_all(ds.graph, 1))[0]) if np.ptp(deg) else 1.0
    print(f"spearman(degree, ICP) at L={L}: {rho:.3f}; at L=1: {rho1:.3f}")
    write_csv(Path(cfg.out) / "nodes.csv", node_rows, h, hops=L)
    write_csv(Path(cfg.out) / "degree_bins.csv", bin_rows, h, bins="equal-count-quantile",
              requested=cfg.num_bins)
    write_csv(Path(cfg.out) / "variance.csv", var_rows, h, variance_mode=args.variance_mode)
    return 0 if rho1 >= 0.9 else 1


def cmd_bounds(cfg: RunConfig, args) -> int:
    if cfg.model != "linear":
        raise UsageError("the bounds concern the linearized model; pass --model linear")
    require_runs(cfg)
    ds = resolve_dataset(cfg)
    split = run_split(cfg, ds)
    h = cfg.hash()
    out = Path(cfg.out)
    stats = class_stats(ds.features, ds.labels, ds.num_classes)
    cache = WalkCache(ds.graph)
    lip = verify_lipschitz(100_000, seed=cfg.seed_list[0])
    write_csv(out / "bounds_lipschitz.csv", [lip.row()], h)
    summaries = [("lipschitz", summarize([lip]))]
    nodes = split.test
    for kind in cfg.filters:
        r_id = f"r_{kind}"
        step_id = f"step_{kind}"
        cant, rb, step_rows = [], [], []
        for seed in cfg.seed_list:
            params = load_run(cfg, kind, seed)
            model = build_model("linear", ds.graph, ds.features, kind, hops=cfg.hops)
            Z = resample_logits(lambda F: model.logits_for(params, F), ds.features, ds.labels, stats,
                                cfg.resamples, seed, nodes=nodes)
            for k, i in enumerate(nodes.tolist()):
                c = int(ds.labels[i])
                for c2 in range(ds.num_classes):
                    if c2 == c:
                        continue
                    gs = gap_statistics(Z[:, k, c2] - Z[:, k, c])
                    rec = misclassification_record(Z[:, k, c2] - Z[:, k, c], i, c2, int(ds.graph.degrees[i]), gs)
                    rrec = r_bound_record(r_id, ds.graph, params.weights, kind, stats, ds.labels, i, c2,
                                          gs, cache)
                    # the R comparison is only asserted on pairs that pass the sign gate
                    rrec.status = rec.status
                    rec.extra["seed"] = rrec.extra["seed"] = seed
                    cant.append(rec)
                    rb.append(rrec)
            sweep = E.step_bound_sweep(ds, kind, cfg.bound_steps, cfg.bound_lr, cfg.hops, seed, split,
                                       params=params.copy())
            for t in range(sweep.lhs.shape[0]):
                worst = int(np.argmin(sweep.slack[t]))
                step_rows.append({"seed": seed, "step": t, "nodes": sweep.lhs.shape[1],
                                  "holding": int(sweep.holds[t].sum()), "min_slack": float(sweep.slack[t, worst]),
                                  "worst_node": worst, "worst_degree": int(sweep.degrees[worst])})
        write_csv(out / f"bounds_cantelli_{kind}.csv", (r.row() for r in cant), h)
        write_csv(out / f"bounds_{r_id}.csv", (r.row() for r in rb), h)
        write_csv(out / f"bounds_{step_id}.csv", step_rows, h, steps=cfg.bound_steps, lr=cfg.bound_lr)
        summaries += [(f"cantelli_{kind}", summarize(cant)), (r_id, summarize(rb))]
        total = sum(r["nodes"] for r in step_rows)
        held = sum(r["holding"] for r in step_rows)
        summaries.append((step_id, {"records": total, "checked": total, "fraction_holding": held / total,
                                     "min_slack": min(r["min_slack"] for r in step_rows),
                                     "indeterminate": 0, "precondition_unmet": 0}))
    status = 0
    for name, s in summaries:
        print(f"{name}: records={s['records']} checked={s['checked']} holding={s['fraction_holding']:.4f} "
              f"min_slack={s['min_slack']:.3g} indeterminate={s['indeterminate']} "
              f"precondition_unmet={s['precondition_unmet']}")
        if s["checked"] and s["fraction_holding"] < 1.0:
            status = 1
    return status


def cmd_wl(cfg: RunConfig, args) -> int:
    ds = resolve_dataset(cfg)
    split = run_split(cfg, ds)
    coloring = wl_refine(ds.graph, feature_colors(ds.features, tolerance=args.tolerance))
    acc, majority = maj_wl_accuracy(coloring, ds.labels, split.train, mode=args.mode)
    write_csv(Path(cfg.out) / "wl_colors.csv", color_table_rows(coloring, ds.labels, split.train, majority),
              cfg.hash(), mode=args.mode, rounds=coloring.rounds)
    print(f"colors={coloring.num_colors} rounds={coloring.rounds} stable={coloring.stable} "
          f"MAJ_WL train accuracy ({args.mode})={acc:.4f}")
    return 0


def cmd_report(cfg: RunConfig, args) -> int:
    from .report import render_report
    run_dir = Path(args.run_dir or cfg.out)
    if not run_dir.is_dir():
        raise UsageError(f"{run_dir} is not a directory")
    paths, summary = render_report(run_dir)
    print(summary, end="")
    return 0


def cmd_paper_desk(cfg: RunConfig, args) -> int:
    from .desk import run_suite
    results = run_suite(cfg.seeds or None, Path(cfg.out), quick=args.quick)
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


# argument parsing ----------------------------------------------------------------------

COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "diagnose": cmd_diagnose,
    "bounds": cmd_bounds,
    "wl": cmd_wl,
    "report": cmd_report,
    "paper-desk": cmd_paper_desk,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--dataset", help="dataset directory (default: synthetic from config)")
    common.add_argument("--seed", type=int, help="single model seed")
    common.add_argument("--seeds", help="comma list of model seeds")
    common.add_argument("--filter", dest="filters", help="rw, sym or att (comma list allowed)")
    common.add_argument("--model", choices=["linear", "general"])
    common.add_argument("--hops", type=int)
    common.add_argument("--epochs", type=int)
    common.add_argument("--keep-self-loops", action="store_true", default=None)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="degbias", description="Degree-bias diagnostics and bound checks for message-passing GNNs.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common])
        if name == "wl":
            p.add_argument("--mode", choices=["train", "all"], default="train",
                           help="label pool for the color-wise mode")
            p.add_argument("--tolerance", type=float, default=None,
                           help="group feature rows equal within this width")
        if name == "diagnose":
            p.add_argument("--variance-mode", choices=["seeds", "resamples"], default="seeds",
                           help="representation variance across trained seeds or across feature resamples")
        if name == "report":
            p.add_argument("run_dir", nargs="?")
        if name == "paper-desk":
            p.add_argument("--quick", action="store_true", help="fewer seeds and resamples (smoke run)")
    return parser


def config_from_args(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v
    for key in ("out", "dataset", "filters", "model", "hops", "epochs", "seeds", "keep_self_loops"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val if not isinstance(val, int) or isinstance(val, bool) else val
    if args.seed is not None:
        overrides["seeds"] = [args.seed]
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
        if args.command != "report":
            atomic_write_text(Path(cfg.out) / f"config.{args.command}.txt", dump_config(cfg))
        return COMMANDS[args.command](cfg, args)
    except (UsageError, ConfigError, GraphFormatError, MalformedCSV) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
