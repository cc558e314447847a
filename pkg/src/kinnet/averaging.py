"""Model averaging: edge posteriors and joint posterior ensemble draws.

Because the likelihood factorizes over substrates, each substrate's graph
scores are averaged independently; an edge (i, j) gets the total normalized
weight of substrate-j graphs in which i participates (as enzyme or
inhibitor). Weights are exp(log marginal + log prior), handled in log space
throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, NumericalError
from .graphs import LocalGraph
from .inference import PosteriorResult

# graphs this far (nats) below the per-substrate best carry < 2e-22 of the
# posterior mass and are dropped from the average
LOG_WEIGHT_FLOOR = 50.0


@dataclass(frozen=True)
class EdgePosterior:
    """p x p matrix of marginal edge probabilities plus provenance."""

    probs: np.ndarray
    provenance: dict

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)
        if np.any(probs < 0) or np.any(probs > 1):
            raise NumericalError("edge probabilities outside [0, 1]")


def _normalized_weights(results: list[PosteriorResult]):
    """Posterior graph probabilities for one substrate, with the floor applied.

    Returns (kept results, their normalized weights, number dropped).
    """
    if not results:
        raise DataError("no scored graphs for substrate")
    lw = np.array([r.log_weight for r in results])
    keep = lw > lw.max() - LOG_WEIGHT_FLOOR
    kept = [r for r, k in zip(results, keep) if k]
    lw = lw[keep]
    w = np.exp(lw - lw.max())
    return kept, w / w.sum(), int((~keep).sum())


def edge_posterior(scores: dict[int, list[PosteriorResult]], p: int) -> EdgePosterior:
    """Marginal probability of every directed edge under model averaging."""
    probs = np.zeros((p, p))
    provenance = {}
    for s in range(p):
        if s not in scores or not scores[s]:
            raise DataError(f"no scored graphs for substrate {s}")
        kept, w, dropped = _normalized_weights(scores[s])
        for r, wi in zip(kept, w):
            for i in r.graph.parents():
                probs[i, s] += wi
        provenance[s] = {
            "n_scored": len(scores[s]),
            "n_dropped_by_floor": dropped,
            "log_weights": [float(r.log_weight) for r in scores[s]],
        }
    # tiny negative/overshoot from float summation
    probs = np.clip(probs, 0.0, 1.0)
    return EdgePosterior(probs, provenance)


@dataclass(frozen=True)
class EnsembleDraw:
    """One joint posterior draw: a local graph and parameters per substrate.

    constants is None for linear-analogue draws (the linear model has no
    Michaelis constants; rates holds the regression coefficients).
    """

    locals: tuple[LocalGraph, ...]
    rates: tuple
    constants: tuple
    sigma: tuple


def draw_ensemble(scores: dict[int, list[PosteriorResult]], p: int,
                  count: int, seed) -> list[EnsembleDraw]:
    """Joint (graph, parameter) draws from the averaged posterior.

    Per draw and substrate: a graph with probability proportional to its
    weight, then one retained chain state uniformly. Substrates are drawn
    independently, which the likelihood factorization justifies.
    """
    rng = np.random.default_rng(np.random.SeedSequence((int(seed), 0x5EED)))
    per_substrate = []
    for s in range(p):
        kept, w, _ = _normalized_weights(scores[s])
        for r in kept:
            if len(r.chain) == 0:
                raise DataError(f"empty chain for substrate {s}")
        per_substrate.append((kept, w))
    draws = []
    for _ in range(count):
        locs, rates, consts, sigs = [], [], [], []
        for s in range(p):
            kept, w = per_substrate[s]
            r = kept[rng.choice(len(kept), p=w)]
            m = rng.integers(len(r.chain))
            locs.append(r.graph)
            rates.append(r.chain.v[m])
            consts.append(r.chain.k[m] if r.chain.k.shape[1] else None)
            sigs.append(float(r.chain.sigma[m]))
        draws.append(EnsembleDraw(tuple(locs), tuple(rates), tuple(consts),
                                  tuple(sigs)))
    return draws
