"""Synthetic benchmark systems: ground-truth models and data generation.

A System bundles a reaction graph with true kinetic parameters and a
reference initial state. Datasets are sampled from the stochastic dynamics
with per-course jittered initial conditions (state diversity is what makes
the regression identifiable), observed on a regular grid, and written in
the same long CSV format the inference pipeline reads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import Dataset, ProteinPanel, TimeCourse
from .dynamics import integrate, simulate_sde
from .errors import DataError
from .graphs import LocalGraph, Network, ReactionGraph, project_network
from .kinetics import michaelis_dim, rate_dim


@dataclass(frozen=True)
class System:
    names: tuple[str, ...]
    graph: ReactionGraph
    rates: tuple            # per substrate, length 1 + n_enzymes
    constants: tuple        # per substrate, michaelis_dim entries
    x0: np.ndarray          # length 2p reference initial state

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float)
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "names", tuple(self.names))
        p = len(self.names)
        if self.graph.p != p or x0.size != 2 * p:
            raise DataError("system pieces disagree on panel size")
        for s, g in enumerate(self.graph.locals):
            if len(self.rates[s]) != rate_dim(g):
                raise DataError(f"substrate {self.names[s]}: wrong rate count")
            if len(self.constants[s]) != michaelis_dim(g):
                raise DataError(f"substrate {self.names[s]}: wrong constant count")

    @property
    def p(self) -> int:
        return len(self.names)

    def truth(self) -> Network:
        return project_network(self.graph)


def chain_system(p: int = 4) -> System:
    """A signalling cascade X1 -> X2 -> ... -> Xp.

    Every substrate dephosphorylates at rate 1 with unit Michaelis constant;
    each downstream substrate is phosphorylated by its predecessor's
    phospho-form. Abundances are O(1) so unit-mean normalization is mild.
    """
    names = tuple(chr(ord("A") + i) for i in range(p)) if p <= 26 else \
        tuple(f"X{i}" for i in range(p))
    locals_ = [LocalGraph(0, (), ())]
    rates = [(1.0,)]
    constants = [(1.0,)]
    for s in range(1, p):
        locals_.append(LocalGraph(s, (s - 1,), ((),)))
        rates.append((1.0, 2.0))
        constants.append((1.0, 0.5))
    x0 = np.concatenate([np.full(p, 1.2), np.full(p, 0.4)])
    return System(names, ReactionGraph(tuple(locals_)), tuple(rates),
                  tuple(constants), x0)


def system_to_json(system: System) -> str:
    doc = {
        "proteins": list(system.names),
        "local": {},
        "x0": {"u": system.x0[:system.p].tolist(),
               "p": system.x0[system.p:].tolist()},
    }
    for s, g in enumerate(system.graph.locals):
        doc["local"][system.names[s]] = {
            "enzymes": [system.names[e] for e in g.enzymes],
            "inhibitors": {system.names[e]: [system.names[i] for i in inh]
                           for e, inh in zip(g.enzymes, g.inhibitors) if inh},
            "vmax": list(map(float, system.rates[s])),
            "km": list(map(float, system.constants[s])),
        }
    return json.dumps(doc, indent=2, sort_keys=True)


def system_from_json(text: str) -> System:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"bad system spec: {exc}") from None
    try:
        names = tuple(doc["proteins"])
        index = {n: i for i, n in enumerate(names)}
        locals_, rates, constants = [], [], []
        for s, name in enumerate(names):
            entry = doc["local"][name]
            enzymes = tuple(sorted(index[e] for e in entry.get("enzymes", [])))
            inh_map = entry.get("inhibitors", {})
            inhibitors = tuple(
                tuple(sorted(index[i] for i in inh_map.get(names[e], [])))
                for e in enzymes
            )
            locals_.append(LocalGraph(s, enzymes, inhibitors))
            rates.append(tuple(float(v) for v in entry["vmax"]))
            constants.append(tuple(float(k) for k in entry["km"]))
        x0 = np.concatenate([np.asarray(doc["x0"]["u"], dtype=float),
                             np.asarray(doc["x0"]["p"], dtype=float)])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"bad system spec: {exc!r}") from None
    return System(names, ReactionGraph(tuple(locals_)), tuple(rates),
                  tuple(constants), x0)


def jittered_x0(system: System, rng, spread: float = 0.35) -> np.ndarray:
    """Multiplicative log-uniform jitter around the reference initial state."""
    factors = np.exp(rng.uniform(-spread, spread, size=2 * system.p))
    return system.x0 * factors


def make_dataset(system: System, n_courses: int, n_points: int, t_end: float,
                 sigma: float, seed: int, intervention=frozenset(),
                 jitter: float = 0.35) -> Dataset:
    """Sample a raw (un-normalized) dataset from the stochastic dynamics.

    Each course starts from a jittered initial state and is observed at
    n_points evenly spaced times on [0, t_end]. The same intervention (if
    any) applies to every course and is recorded on the courses.
    """
    if n_points < 2 or n_courses < 1:
        raise DataError("need n_points >= 2 and n_courses >= 1")
    times = np.linspace(0.0, t_end, n_points)
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0xDA7A)))
    courses = []
    for c in range(n_courses):
        x0 = jittered_x0(system, rng, jitter)
        traj = simulate_sde(system.graph.locals, system.rates, system.constants,
                            x0, times, sigma, seed=rng.integers(2**63),
                            intervention=intervention)
        courses.append(TimeCourse(
            times=times,
            u=traj.states[:, :system.p],
            p=traj.states[:, system.p:],
            condition=f"course{c}",
            inhibited=frozenset(intervention),
        ))
    return Dataset(ProteinPanel(system.names), tuple(courses), normalized=False)


def noiseless_course(system: System, x0, times, intervention=frozenset()):
    """Ground-truth trajectory for held-out evaluation."""
    return integrate(system.graph.locals, system.rates, system.constants,
                     x0, times, intervention=intervention)
