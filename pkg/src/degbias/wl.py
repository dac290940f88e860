"""1-WL color refinement and the majority-vote training-accuracy ceiling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph


@dataclass(frozen=True)
class Coloring:
    colors: np.ndarray
    num_colors: int
    stable: bool
    rounds: int


def _canonical(keys) -> np.ndarray:
    # ids in order of first appearance by node index
    table: dict = {}
    return np.array([table.setdefault(k, len(table)) for k in keys], dtype=np.int64)


def feature_colors(X: np.ndarray, tolerance: float | None = None) -> np.ndarray:
    """Initial colors from feature rows.

    Exact mode compares raw float64 bytes.  With ``tolerance`` set, rows are
    snapped to a grid of that width first, which merges rows that differ only
    by normalization round-off.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    if tolerance is not None:
        X = np.ascontiguousarray(np.round(X / tolerance)).astype(np.int64)
    return _canonical(row.tobytes() for row in X)


def wl_refine(graph: Graph, initial_colors=None, max_rounds: int | None = None) -> Coloring:
    """Refine until the partition stops splitting.

    ``rounds`` counts refinement rounds performed, including the final one
    that confirmed stability.
    """
    n = graph.num_nodes
    colors = _canonical(np.zeros(n, dtype=np.int64) if initial_colors is None else initial_colors)
    num = int(colors.max()) + 1 if n else 0
    limit = max_rounds if max_rounds is not None else n + 1
    rounds = 0
    stable = False
    while rounds < limit:
        rounds += 1
        keys = []
        for i in range(n):
            nb = colors[graph.neighbor_ids[graph.row_offsets[i]:graph.row_offsets[i + 1]]]
            keys.append((int(colors[i]), tuple(np.sort(nb).tolist())))
        new = _canonical(keys)
        new_num = int(new.max()) + 1
        colors = new
        # refinement only splits classes, so an unchanged count means an unchanged partition
        if new_num == num:
            stable = True
            break
        num = new_num
    return Coloring(colors, num, stable, rounds)


def maj_wl_accuracy(coloring: Coloring, labels: np.ndarray, train_set, mode: str = "train"):
    """Training accuracy of the color-wise majority vote.

    ``mode="train"`` takes each color's mode over training nodes only;
    ``mode="all"`` uses every node's label.  Ties go to the smallest class id;
    colors without voters fall back to the global majority of the voters.

    Returns ``(accuracy, majority)`` where ``majority[color]`` is the vote.
    """
    train_set = np.asarray(train_set)
    if len(train_set) == 0:
        raise ValueError("train_set is empty")
    labels = np.asarray(labels)
    colors = coloring.colors
    voters = train_set if mode == "train" else np.arange(len(labels))
    num_classes = int(labels.max()) + 1
    counts = np.zeros((coloring.num_colors, num_classes), dtype=np.int64)
    np.add.at(counts, (colors[voters], labels[voters]), 1)
    fallback = int(np.argmax(np.bincount(labels[voters], minlength=num_classes)))
    majority = np.where(counts.sum(1) > 0, counts.argmax(1), fallback)
    acc = float(np.mean(majority[colors[train_set]] == labels[train_set]))
    return acc, majority


def color_table_rows(coloring: Coloring, labels, train_set, majority):
    train = np.zeros(len(labels), dtype=bool)
    train[np.asarray(train_set)] = True
    for i, c in enumerate(coloring.colors):
        yield {"node": i, "color": int(c), "train": int(train[i]), "label": int(labels[i]),
               "majority": int(majority[c])}
