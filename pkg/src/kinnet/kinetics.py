"""Michaelis-Menten rate evaluation and design-matrix construction.

The rate model for substrate S under local graph g is

    f(x) = -V0 * xS*/(xS* + K0)
           + sum_E  V_E * xE* * xS / (xS + K_E * (1 + sum_I xI*/K_I))

with competitive inhibition entering through the rescaled Michaelis constant.
The model is linear in the rates V given the constants K, which is what the
conjugate regression exploits: f = design_row(x, K) . V with the
dephosphorylation column carrying the minus sign so every V stays in the
non-negative orthant.

Michaelis-constant vectors are flattened as [K0, K_E1..K_Em, then the
inhibitor constants enzyme by enzyme]; `michaelis_dim` and `split_michaelis`
define that layout in one place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import GradientSample
from .errors import DataError
from .graphs import LocalGraph


@dataclass(frozen=True)
class KineticParams:
    """Parameters of one substrate model: rates, constants, noise scale."""

    vmax: np.ndarray  # [V0, V_E1, ...], 1/hour
    km: np.ndarray    # [K0, K_E..., K_I...], dimensionless after normalization
    sigma: float
    hill: int = 1

    def __post_init__(self):
        vmax = np.atleast_1d(np.asarray(self.vmax, dtype=float))
        km = np.atleast_1d(np.asarray(self.km, dtype=float))
        vmax.setflags(write=False)
        km.setflags(write=False)
        object.__setattr__(self, "vmax", vmax)
        object.__setattr__(self, "km", km)
        if np.any(vmax < 0):
            raise DataError("rates must be non-negative")
        if np.any(km <= 0):
            raise DataError("Michaelis constants must be positive")
        if not self.sigma > 0:
            raise DataError("sigma must be positive")
        if self.hill != 1:
            raise DataError("only hill = 1 is supported")


def rate_dim(g: LocalGraph) -> int:
    return 1 + g.n_enzymes


def michaelis_dim(g: LocalGraph) -> int:
    return 1 + g.n_enzymes + g.n_inhibitors


def split_michaelis(g: LocalGraph, km):
    """Unpack a flat constant vector into (K0, per-enzyme K, per-enzyme K_I arrays)."""
    km = np.asarray(km, dtype=float)
    if km.shape != (michaelis_dim(g),):
        raise DataError(
            f"expected {michaelis_dim(g)} Michaelis constants, got {km.shape}"
        )
    m = g.n_enzymes
    k0 = km[0]
    k_enz = km[1:1 + m]
    k_inh = []
    ptr = 1 + m
    for inh in g.inhibitors:
        k_inh.append(km[ptr:ptr + len(inh)])
        ptr += len(inh)
    return k0, k_enz, k_inh


def check_dims(params: KineticParams, g: LocalGraph) -> None:
    if params.vmax.shape != (rate_dim(g),):
        raise DataError(f"expected {rate_dim(g)} rates, got {params.vmax.shape}")
    split_michaelis(g, params.km)  # shape check


def mm_rate(state, g: LocalGraph, params: KineticParams,
            blocked: frozenset = frozenset()) -> float:
    """Net phosphorylation rate of g.substrate at one state.

    `state` is the 2p channel vector (u then p). Enzymes in `blocked` have
    their catalytic terms removed (intervention semantics); dephosphorylation
    is never blocked.
    """
    check_dims(params, g)
    state = np.asarray(state, dtype=float)
    p = state.size // 2
    k0, k_enz, k_inh = split_michaelis(g, params.km)
    y_s = state[g.substrate]
    ystar_s = state[p + g.substrate]
    rate = -params.vmax[0] * ystar_s / (ystar_s + k0)
    for c, enzyme in enumerate(g.enzymes):
        if enzyme in blocked:
            continue
        scale = 1.0
        for i, inhibitor in enumerate(g.inhibitors[c]):
            scale += state[p + inhibitor] / k_inh[c][i]
        rate += params.vmax[1 + c] * state[p + enzyme] * y_s / (y_s + k_enz[c] * scale)
    return float(rate)


def design_row(state, g: LocalGraph, km) -> np.ndarray:
    """Regression row such that mm_rate = design_row . vmax (bilinearity).

    Column 0 is the negated dephosphorylation saturation; column 1+c is
    enzyme c's catalytic term without its rate factor.
    """
    state = np.asarray(state, dtype=float)
    p = state.size // 2
    k0, k_enz, k_inh = split_michaelis(g, km)
    row = np.empty(rate_dim(g))
    ystar_s = state[p + g.substrate]
    y_s = state[g.substrate]
    row[0] = -ystar_s / (ystar_s + k0)
    for c, enzyme in enumerate(g.enzymes):
        scale = 1.0
        if g.inhibitors[c]:
            idx = np.array(g.inhibitors[c], dtype=int)
            scale += float((state[p + idx] / k_inh[c]).sum())
        row[1 + c] = state[p + enzyme] * y_s / (y_s + k_enz[c] * scale)
    return row


@dataclass(frozen=True)
class DesignMatrix:
    rows: np.ndarray
    column_labels: tuple      # ("dephospho", enzyme indices...)
    mask: tuple               # per-row frozenset of masked enzyme indices

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "mask", tuple(frozenset(m) for m in self.mask))


def apply_intervention(dm: DesignMatrix, inhibited) -> DesignMatrix:
    """Zero the catalytic entries of inhibited enzymes, row by row.

    `inhibited` is one set of protein indices per row. Proteins without a
    column are ignored; the dephosphorylation column is never masked.
    """
    rows = np.array(dm.rows)
    mask = []
    for j, blocked in enumerate(inhibited):
        hit = set()
        for c, label in enumerate(dm.column_labels):
            if c == 0:
                continue
            if label in blocked:
                rows[j, c] = 0.0
                hit.add(label)
        mask.append(frozenset(hit))
    return DesignMatrix(rows, dm.column_labels, tuple(mask))


def build_design(samples: list[GradientSample], g: LocalGraph, km):
    """Stack design rows and responses for one substrate's regression.

    Applies each sample's intervention mask. Returns (DesignMatrix, z).
    """
    if not samples:
        raise DataError("no gradient samples")
    if any(s.substrate != g.substrate for s in samples):
        raise DataError("samples and graph disagree on the substrate")
    rows = np.array([design_row(s.state, g, km) for s in samples])
    labels = ("dephospho",) + g.enzymes
    dm = DesignMatrix(rows, labels, tuple(frozenset() for _ in samples))
    dm = apply_intervention(dm, [s.inhibited for s in samples])
    z = np.array([s.z for s in samples])
    return dm, z


# ---------------------------------------------------------------------------
# vectorized fast path used inside the MCMC loop

@dataclass(frozen=True)
class Regressors:
    """Pre-extracted state columns for one (samples, graph) pair.

    Intervention masks are folded into the enzyme columns once (a blocked
    enzyme's abundance is zeroed, which zeroes its whole catalytic term), so
    rebuilding the design for a new K is a handful of vector ops.
    """

    z: np.ndarray
    y_s: np.ndarray
    ystar_s: np.ndarray
    enzyme: np.ndarray            # (n, m), masked
    inhibitor: tuple              # per enzyme: (n, n_inh_e)

    @property
    def n(self) -> int:
        return self.z.size


def precompute_regressors(samples: list[GradientSample], g: LocalGraph) -> Regressors:
    if not samples:
        raise DataError("no gradient samples")
    n = len(samples)
    p = samples[0].state.size // 2
    states = np.array([s.state for s in samples])
    z = np.array([s.z for s in samples])
    y_s = states[:, g.substrate].copy()
    ystar_s = states[:, p + g.substrate].copy()
    enzyme = np.empty((n, g.n_enzymes))
    for c, e in enumerate(g.enzymes):
        col = states[:, p + e].copy()
        blocked = np.fromiter((e in s.inhibited for s in samples), bool, count=n)
        col[blocked] = 0.0
        enzyme[:, c] = col
    inhibitor = tuple(
        states[:, p + np.array(inh, dtype=int)] if inh else np.empty((n, 0))
        for inh in g.inhibitors
    )
    return Regressors(z, y_s, ystar_s, enzyme, inhibitor)


def design_from_regressors(reg: Regressors, g: LocalGraph, km) -> np.ndarray:
    """Design matrix for constants km; equals build_design's rows (masked)."""
    k0, k_enz, k_inh = split_michaelis(g, km)
    cols = [-reg.ystar_s / (reg.ystar_s + k0)]
    for c in range(g.n_enzymes):
        scale = 1.0
        if len(k_inh[c]):
            scale = 1.0 + reg.inhibitor[c] @ (1.0 / k_inh[c])
        cols.append(reg.enzyme[:, c] * reg.y_s / (reg.y_s + k_enz[c] * scale))
    return np.column_stack(cols)


# ---------------------------------------------------------------------------
# linear analogue

def linear_rate(state, g: LocalGraph, beta) -> float:
    """Affine rate beta0 + sum_E beta_E * xE* (the linear comparison model)."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (1 + g.n_enzymes,):
        raise DataError(f"expected {1 + g.n_enzymes} coefficients, got {beta.shape}")
    state = np.asarray(state, dtype=float)
    p = state.size // 2
    out = beta[0]
    for c, e in enumerate(g.enzymes):
        out += beta[1 + c] * state[p + e]
    return float(out)


def linear_design(samples: list[GradientSample], g: LocalGraph):
    """Rows [1, xE1*, ...] with intervention masks; responses z.

    Same regression shape as the kinetic model but with no Michaelis
    constants and no positivity constraint downstream.
    """
    if not samples:
        raise DataError("no gradient samples")
    n = len(samples)
    p = samples[0].state.size // 2
    rows = np.ones((n, 1 + g.n_enzymes))
    for c, e in enumerate(g.enzymes):
        for j, s in enumerate(samples):
            rows[j, 1 + c] = 0.0 if e in s.inhibited else s.state[p + e]
    z = np.array([s.z for s in samples])
    return rows, z
