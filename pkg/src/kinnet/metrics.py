"""Network-recovery metrics: precision-recall and ROC curves.

The threshold sweep runs over unique score values in descending order, so
tied scores enter or leave the predicted set together and the result cannot
depend on sample ordering. AUPR uses step-wise interpolation (sum of
precision times recall increments); AUROC uses the trapezoid rule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class MetricReport:
    aupr: float
    auroc: float
    pr_curve: tuple       # ((recall, precision), ...) along the sweep
    roc_curve: tuple      # ((fpr, tpr), ...) including the (0,0)/(1,1) anchors
    n_true_edges: int
    n_possible_edges: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "aupr": self.aupr,
                "auroc": self.auroc,
                "n_true_edges": self.n_true_edges,
                "n_possible_edges": self.n_possible_edges,
                "pr_curve": [list(p) for p in self.pr_curve],
                "roc_curve": [list(p) for p in self.roc_curve],
            },
            indent=2, sort_keys=True,
        )


def ranked_metrics(scores, truths) -> MetricReport:
    """PR and ROC metrics for flat score/truth vectors."""
    scores = np.asarray(scores, dtype=float).ravel()
    truths = np.asarray(truths).ravel().astype(bool)
    if scores.shape != truths.shape:
        raise DataError("scores and truths differ in length")
    n_pos = int(truths.sum())
    n_neg = truths.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DataError("degenerate truth: need at least one edge and one non-edge")

    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    t_sorted = truths[order]
    # group boundaries: last index of each tied block
    boundary = np.nonzero(np.diff(s_sorted))[0]
    ends = np.append(boundary, scores.size - 1)
    tp_cum = np.cumsum(t_sorted)
    fp_cum = np.cumsum(~t_sorted)

    pr_points = []
    roc_points = [(0.0, 0.0)]
    aupr = 0.0
    prev_recall = 0.0
    for e in ends:
        tp = float(tp_cum[e])
        fp = float(fp_cum[e])
        recall = tp / n_pos
        precision = tp / (tp + fp)
        aupr += (recall - prev_recall) * precision
        prev_recall = recall
        pr_points.append((recall, precision))
        roc_points.append((fp / n_neg, tp / n_pos))
    fpr = np.array([p[0] for p in roc_points])
    tpr = np.array([p[1] for p in roc_points])
    auroc = float(np.trapezoid(tpr, fpr))
    return MetricReport(
        aupr=float(aupr), auroc=auroc,
        pr_curve=tuple(pr_points), roc_curve=tuple(roc_points),
        n_true_edges=n_pos, n_possible_edges=int(scores.size),
    )


def pr_roc(probs: np.ndarray, truth: np.ndarray, include_self: bool = True) -> MetricReport:
    """Edge-recovery metrics of a score matrix against a truth adjacency.

    include_self keeps the diagonal (self-edges) in the candidate set; it
    should match the inference configuration that produced the scores.
    """
    probs = np.asarray(probs, dtype=float)
    truth = np.asarray(truth).astype(bool)
    if probs.shape != truth.shape or probs.ndim != 2 or probs.shape[0] != probs.shape[1]:
        raise DataError("score and truth matrices must be square and congruent")
    if include_self:
        mask = np.ones_like(truth, dtype=bool)
    else:
        mask = ~np.eye(truth.shape[0], dtype=bool)
    return ranked_metrics(probs[mask], truth[mask])


def write_curves(report: MetricReport, pr_path, roc_path) -> None:
    with open(pr_path, "w", encoding="utf-8") as fh:
        fh.write("recall,precision\n")
        for r, p in report.pr_curve:
            fh.write(f"{r!r},{p!r}\n")
    with open(roc_path, "w", encoding="utf-8") as fh:
        fh.write("fpr,tpr\n")
        for f, t in report.roc_curve:
            fh.write(f"{f!r},{t!r}\n")
