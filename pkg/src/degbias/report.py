"""Static SVG charts from run CSVs.

Output bytes are deterministic for fixed input: the SVG id salt is pinned and
the date metadata is dropped.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .records import MalformedCSV, atomic_write_text, read_csv  # noqa: E402

plt.rcParams["svg.hashsalt"] = "degbias"
plt.rcParams["svg.fonttype"] = "none"

BIN_NOTE = "equal-count degree quantile bins"


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    fig.savefig(tmp, format="svg", metadata={"Date": None})
    plt.close(fig)
    tmp.replace(path)
    return path


def _column(rows, key):
    try:
        return np.array([float(r[key]) for r in rows])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedCSV(f"column {key!r} missing or non-numeric") from exc


def loss_vs_degree(rows, path, title="test loss vs degree"):
    """One series per ``kind`` column value: bin median degree vs mean loss with 1-sigma bars."""
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for kind in sorted({r.get("kind", "") for r in rows}):
        sub = [r for r in rows if r.get("kind", "") == kind]
        ax.errorbar(_column(sub, "median_degree"), _column(sub, "mean_loss"), yerr=_column(sub, "std_loss"),
                    marker="o", capsize=3, label=kind or None)
    ax.set_xscale("log")
    ax.set_xlabel("bin median degree")
    ax.set_ylabel("mean test loss")
    ax.set_title(f"{title}\n({BIN_NOTE})", fontsize=9)
    if any(r.get("kind") for r in rows):
        ax.legend()
    return _save(fig, path)


def icp_vs_degree(rows, path):
    # nodes.csv repeats each node once per filter; structure does not depend on it
    first = rows[0].get("kind")
    rows = [r for r in rows if r.get("kind") == first]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.scatter(_column(rows, "degree"), _column(rows, "icp"), s=6)
    ax.set_xscale("log")
    ax.set_xlabel("degree")
    ax.set_ylabel("inverse collision probability")
    return _save(fig, path)


def group_curves(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    epochs = _column(rows, "epoch")
    for key in sorted(k for k in rows[0] if k.startswith("loss_")):
        ax.plot(epochs, _column(rows, key), label=key[5:])
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean training loss")
    ax.legend()
    return _save(fig, path)


def variance_bars(rows, path):
    fig, ax = plt.subplots(figsize=(5, 3.5))
    labels = [f"{r['kind']}\n{r['group']}" for r in rows]
    ax.bar(np.arange(len(rows)), _column(rows, "mean"), yerr=_column(rows, "std"), capsize=3)
    ax.set_xticks(np.arange(len(rows)), labels)
    ax.set_ylabel("representation variance")
    return _save(fig, path)


def pca_scatter(rows, path):
    fig, ax = plt.subplots(figsize=(4.5, 4))
    labels = _column(rows, "label").astype(int)
    ax.scatter(_column(rows, "pc1"), _column(rows, "pc2"), c=labels, s=6, cmap="tab10")
    ax.set_xlabel("PC 1")
    ax.set_ylabel("PC 2")
    return _save(fig, path)


# name of input CSV -> (chart function, output name)
CHARTS = {
    "degree_bins.csv": (loss_vs_degree, "loss_vs_degree.svg"),
    "nodes.csv": (icp_vs_degree, "icp_vs_degree.svg"),
    "group_curves.csv": (group_curves, "group_curves.svg"),
    "variance.csv": (variance_bars, "variance.svg"),
    "pca.csv": (pca_scatter, "pca.svg"),
}


def render_report(run_dir) -> tuple[list, str]:
    """Render every chart whose CSV exists and is non-empty; return ``(paths, summary)``."""
    run_dir = Path(run_dir)
    out_dir = run_dir / "report"
    written, notes = [], []
    for name, (fn, svg) in CHARTS.items():
        src = run_dir / name
        if not src.exists():
            notes.append(f"{svg}: omitted ({name} not found)")
            continue
        _, rows = read_csv(src)
        if not rows:
            notes.append(f"{svg}: omitted ({name} has no rows)")
            continue
        written.append(fn(rows, out_dir / svg))
        notes.append(f"{svg}: {len(rows)} rows")
    summary = "\n".join(notes) + "\n"
    atomic_write_text(out_dir / "summary.txt", summary)
    return written, summary
