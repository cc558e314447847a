"""Candidate reaction graphs: enumeration, multiplicity prior, projection.

A LocalGraph names, for one substrate, which phospho-proteins catalyze its
phosphorylation (enzymes) and which competitively inhibit each enzyme. The
model space for a panel is the product of independent local spaces, which is
what makes scoring embarrassingly parallel.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from math import comb, log

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class LocalGraph:
    """Enzyme/inhibitor structure for one substrate.

    enzymes is an ordered tuple of protein indices; inhibitors holds one
    tuple per enzyme, aligned by position. Both are kept sorted so equality
    is structural.
    """

    substrate: int
    enzymes: tuple[int, ...] = ()
    inhibitors: tuple[tuple[int, ...], ...] = ()

    def __post_init__(self):
        enzymes = tuple(self.enzymes)
        inhibitors = tuple(tuple(i) for i in self.inhibitors)
        if not inhibitors:
            inhibitors = tuple(() for _ in enzymes)
        object.__setattr__(self, "enzymes", enzymes)
        object.__setattr__(self, "inhibitors", inhibitors)
        if len(inhibitors) != len(enzymes):
            raise DataError("one inhibitor tuple per enzyme required")
        if list(enzymes) != sorted(set(enzymes)):
            raise DataError("enzymes must be sorted and unique")
        for inh in inhibitors:
            if list(inh) != sorted(set(inh)):
                raise DataError("inhibitor sets must be sorted and unique")

    @property
    def n_enzymes(self) -> int:
        return len(self.enzymes)

    @property
    def n_inhibitors(self) -> int:
        return sum(len(i) for i in self.inhibitors)

    def parents(self) -> frozenset:
        """All proteins with a causal influence on this substrate."""
        out = set(self.enzymes)
        for inh in self.inhibitors:
            out.update(inh)
        return frozenset(out)

    def label(self, names) -> str:
        parts = []
        for e, inh in zip(self.enzymes, self.inhibitors):
            s = names[e]
            if inh:
                s += "(-" + ",".join(names[i] for i in inh) + ")"
            parts.append(s)
        return "{" + ",".join(parts) + "}"


@dataclass(frozen=True)
class ReactionGraph:
    """One LocalGraph per substrate, in substrate order."""

    locals: tuple[LocalGraph, ...]

    def __post_init__(self):
        object.__setattr__(self, "locals", tuple(self.locals))
        for s, g in enumerate(self.locals):
            if g.substrate != s:
                raise DataError("locals must be ordered by substrate index")

    @property
    def p(self) -> int:
        return len(self.locals)


@dataclass(frozen=True)
class Network:
    """Directed causal network as a boolean adjacency matrix (i -> j)."""

    adjacency: np.ndarray

    def __post_init__(self):
        adj = np.array(self.adjacency, dtype=bool)
        adj.setflags(write=False)
        object.__setattr__(self, "adjacency", adj)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise DataError("adjacency must be square")

    def edges(self):
        return [tuple(e) for e in np.argwhere(self.adjacency)]


def enumerate_local(p: int, substrate: int, c1: int, c2: int,
                    self_edges: bool = True) -> list[LocalGraph]:
    """All local graphs for one substrate under in-degree bounds.

    Enzyme sets of size 0..c1 are drawn from the candidate pool (all p
    phospho-forms, optionally excluding the substrate itself), each crossed
    with every assignment of 0..c2 inhibitors per enzyme from the full pool.
    Deterministic order: by enzyme count, then lexicographic.
    """
    if not 0 <= substrate < p:
        raise DataError("substrate index out of range")
    if c1 > p or c1 < 0 or c2 < 0:
        raise DataError(f"invalid in-degree bounds c1={c1}, c2={c2}")
    pool = [i for i in range(p) if self_edges or i != substrate]
    inhibitor_pool = list(range(p))
    inhibitor_sets = [
        tuple(s)
        for k in range(c2 + 1)
        for s in itertools.combinations(inhibitor_pool, k)
    ]
    out = []
    for k in range(min(c1, len(pool)) + 1):
        for enzymes in itertools.combinations(pool, k):
            for assignment in itertools.product(inhibitor_sets, repeat=k):
                out.append(LocalGraph(substrate, enzymes, assignment))
    return out


def graph_prior(g: LocalGraph, p: int) -> Fraction:
    """Multiplicity-correcting prior weight, exact.

    Uniform over the number of enzymes and, per enzyme, uniform over the
    number of its inhibitors: weight = 1/C(p,|E|) * prod_E 1/C(p,|I_E|).
    Exact rational arithmetic so prior-mass identities can be asserted
    without tolerance.
    """
    w = Fraction(1, comb(p, g.n_enzymes))
    for inh in g.inhibitors:
        w *= Fraction(1, comb(p, len(inh)))
    return w


def log_graph_prior(g: LocalGraph, p: int) -> float:
    w = graph_prior(g, p)
    return log(w.numerator) - log(w.denominator)


def project_network(rg: ReactionGraph) -> Network:
    """Edge (i, j) present iff i influences substrate j as enzyme or inhibitor."""
    p = rg.p
    adj = np.zeros((p, p), dtype=bool)
    for g in rg.locals:
        for i in g.parents():
            adj[i, g.substrate] = True
    return Network(adj)


# ---------------------------------------------------------------------------
# serialization helpers used by the CLI

def local_graph_to_dict(g: LocalGraph, names) -> dict:
    return {
        "substrate": names[g.substrate],
        "enzymes": [names[e] for e in g.enzymes],
        "inhibitors": {
            names[e]: [names[i] for i in inh]
            for e, inh in zip(g.enzymes, g.inhibitors)
            if inh
        },
    }


def local_graph_from_dict(doc: dict, names) -> LocalGraph:
    index = {n: i for i, n in enumerate(names)}
    try:
        substrate = index[doc["substrate"]]
        enzymes = tuple(sorted(index[e] for e in doc.get("enzymes", [])))
        inh_map = doc.get("inhibitors", {})
        inhibitors = tuple(
            tuple(sorted(index[i] for i in inh_map.get(names[e], [])))
            for e in enzymes
        )
    except KeyError as exc:
        raise DataError(f"bad graph record: missing {exc}") from None
    return LocalGraph(substrate, enzymes, inhibitors)


def reaction_graph_from_dict(doc: dict, names) -> ReactionGraph:
    """Parse the {substrate: {enzymes, inhibitors}} JSON layout."""
    index = {n: i for i, n in enumerate(names)}
    locals_ = []
    for s, name in enumerate(names):
        entry = doc.get(name, {})
        enzymes = tuple(sorted(index[e] for e in entry.get("enzymes", [])))
        inh_map = entry.get("inhibitors", {})
        inhibitors = tuple(
            tuple(sorted(index[i] for i in inh_map.get(names[e], [])))
            for e in enzymes
        )
        locals_.append(LocalGraph(s, enzymes, inhibitors))
    return ReactionGraph(tuple(locals_))


def write_edge_list(path, probs: np.ndarray, names, threshold: float = -1.0) -> None:
    """Edge-list CSV `source,target,posterior_probability`, row-major order."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("source,target,posterior_probability\n")
        p = len(names)
        for i in range(p):
            for j in range(p):
                if probs[i, j] > threshold:
                    fh.write(f"{names[i]},{names[j]},{float(probs[i, j])!r}\n")


def read_edge_list(path):
    """Read `source,target[,posterior_probability]` into (names, probability map)."""
    pairs = {}
    names: list[str] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["source", "target"]:
            raise DataError(f"{path}: expected source,target[,...] header")
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise DataError(f"{path}:{lineno}: expected at least 2 columns")
            src, dst = parts[0], parts[1]
            try:
                val = float(parts[2]) if len(parts) > 2 else 1.0
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric probability "
                                f"{parts[2]!r}") from None
            for nm in (src, dst):
                if nm not in names:
                    names.append(nm)
            if (src, dst) in pairs:
                raise DataError(f"{path}:{lineno}: duplicate edge {src}->{dst}")
            pairs[(src, dst)] = val
    return names, pairs
