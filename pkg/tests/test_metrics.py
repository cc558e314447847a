import itertools
import json

import numpy as np
import pytest

from kinnet.errors import DataError
from kinnet.metrics import pr_roc, ranked_metrics, write_curves


def _brute_force_aupr(scores, truths):
    """Step-interpolated AP over descending unique thresholds, the long way."""
    scores = np.asarray(scores, dtype=float)
    truths = np.asarray(truths, dtype=bool)
    n_pos = truths.sum()
    aupr = 0.0
    prev_recall = 0.0
    for thr in sorted(set(scores), reverse=True):
        sel = scores >= thr
        tp = (truths & sel).sum()
        recall = tp / n_pos
        precision = tp / sel.sum()
        aupr += (recall - prev_recall) * precision
        prev_recall = recall
    return aupr


def _mann_whitney_auroc(scores, truths):
    """P(score_pos > score_neg) + 0.5 P(tie), pair by pair."""
    pos = [s for s, t in zip(scores, truths) if t]
    neg = [s for s, t in zip(scores, truths) if not t]
    wins = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_hand_case():
    scores = [0.9, 0.8, 0.4, 0.3, 0.2, 0.1]
    truths = [1, 1, 0, 1, 0, 0]
    rep = ranked_metrics(scores, truths)
    # AP = 1/3*1 + 1/3*1 + 1/3*(3/4) = 11/12; AUROC = 8/9 by pair counting
    assert rep.aupr == pytest.approx(11 / 12, abs=1e-12)
    assert rep.auroc == pytest.approx(8 / 9, abs=1e-12)
    assert rep.n_true_edges == 3
    assert rep.n_possible_edges == 6
    assert rep.roc_curve[0] == (0.0, 0.0)
    assert rep.roc_curve[-1] == (1.0, 1.0)
    assert rep.pr_curve[-1][0] == 1.0  # recall reaches 1


def test_matches_brute_force_enumeration():
    rng = np.random.default_rng(0)
    for trial in range(40):
        n = int(rng.integers(4, 10))
        # quantized scores force ties regularly
        scores = rng.integers(0, 4, size=n) / 3.0
        truths = rng.integers(0, 2, size=n).astype(bool)
        if truths.all() or not truths.any():
            continue
        rep = ranked_metrics(scores, truths)
        assert rep.aupr == pytest.approx(_brute_force_aupr(scores, truths), abs=1e-12)
        assert rep.auroc == pytest.approx(_mann_whitney_auroc(scores, truths), abs=1e-12)


def test_order_invariance():
    scores = np.array([0.9, 0.5, 0.5, 0.5, 0.1, 0.7])
    truths = np.array([1, 0, 1, 0, 0, 1], dtype=bool)
    ref = ranked_metrics(scores, truths)
    for perm in itertools.islice(itertools.permutations(range(6)), 0, 720, 37):
        idx = list(perm)
        rep = ranked_metrics(scores[idx], truths[idx])
        assert rep.aupr == pytest.approx(ref.aupr, abs=1e-13)
        assert rep.auroc == pytest.approx(ref.auroc, abs=1e-13)


def test_all_tied_scores_give_positive_rate_and_half():
    # one tied block: precision = positive rate at recall 1, AUROC chance
    scores = np.full(8, 0.5)
    truths = np.array([1, 0, 0, 1, 0, 0, 1, 0], dtype=bool)
    rep = ranked_metrics(scores, truths)
    assert rep.aupr == pytest.approx(3 / 8, abs=1e-12)
    assert rep.auroc == pytest.approx(0.5, abs=1e-12)


def test_perfect_and_inverted_ranking():
    scores = [0.9, 0.8, 0.7, 0.2, 0.1]
    truths = [1, 1, 1, 0, 0]
    rep = ranked_metrics(scores, truths)
    assert rep.aupr == 1.0
    assert rep.auroc == 1.0
    flipped = ranked_metrics(scores, [0, 0, 0, 1, 1])
    assert flipped.auroc == 0.0


def test_degenerate_truth_rejected():
    with pytest.raises(DataError):
        ranked_metrics([0.1, 0.2], [1, 1])
    with pytest.raises(DataError):
        ranked_metrics([0.1, 0.2], [0, 0])
    with pytest.raises(DataError):
        ranked_metrics([0.1], [1, 0])


def test_matrix_diagonal_masking():
    probs = np.array([
        [0.9, 0.8, 0.1],
        [0.2, 0.9, 0.7],
        [0.1, 0.3, 0.9],
    ])
    truth = np.array([
        [0, 1, 0],
        [0, 0, 1],
        [0, 0, 0],
    ], dtype=bool)
    # with the (high-scoring, all-false) diagonal included the ranking is
    # polluted; masking it out recovers the perfect off-diagonal ranking
    with_diag = pr_roc(probs, truth, include_self=True)
    without = pr_roc(probs, truth, include_self=False)
    assert without.aupr == 1.0 and without.auroc == 1.0
    assert with_diag.aupr < 1.0
    assert without.n_possible_edges == 6
    assert with_diag.n_possible_edges == 9
    with pytest.raises(DataError):
        pr_roc(probs[:2], truth, include_self=True)


def test_json_and_curve_files(tmp_path):
    rep = ranked_metrics([0.9, 0.4, 0.1], [1, 0, 1])
    doc = json.loads(rep.to_json())
    assert doc["aupr"] == rep.aupr
    assert doc["n_possible_edges"] == 3
    pr_path = tmp_path / "pr.csv"
    roc_path = tmp_path / "roc.csv"
    write_curves(rep, pr_path, roc_path)
    pr_lines = pr_path.read_text().strip().splitlines()
    assert pr_lines[0] == "recall,precision"
    assert len(pr_lines) == 1 + len(rep.pr_curve)
    first = tuple(float(v) for v in pr_lines[1].split(","))
    assert first == rep.pr_curve[0]
    roc_lines = roc_path.read_text().strip().splitlines()
    assert roc_lines[0] == "fpr,tpr"
    assert len(roc_lines) == 1 + len(rep.roc_curve)
