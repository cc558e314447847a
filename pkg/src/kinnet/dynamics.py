"""Forward simulation and prediction scoring.

The full dynamical system pairs every substrate's net phosphorylation rate
f_S with mass exchange: d[S*]/dt = f_S and d[S]/dt = -f_S, so each protein's
total abundance is conserved by construction (in rescaled units the coupling
carries the normalization's scale ratio; see _field). Deterministic trajectories use
fixed-step classical RK4 (deterministic, step-convergence tested);
synthetic data generation uses Euler-Maruyama with additive intrinsic noise
on the phospho channels, clipped at zero.

States are clipped to the non-negative orthant after every internal step;
with non-negative rates the flow points inward at the boundary, so the clip
only removes sub-ulp transients in practice.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .averaging import EnsembleDraw
from .errors import DataError, NumericalError
from .graphs import LocalGraph
from .kinetics import split_michaelis

log = logging.getLogger(__name__)

BLOWUP = 1e12


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (T, 2p): u channels then p channels
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states, dtype=float)
        times.setflags(write=False)
        states.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        if states.shape[0] != times.size:
            raise DataError("times and states misaligned")


@dataclass(frozen=True)
class PredictionBand:
    times: np.ndarray
    mean: np.ndarray  # (T, 2p)
    sd: np.ndarray    # (T, 2p)
    metadata: dict = field(default_factory=dict)


def _field(locals_: tuple[LocalGraph, ...], rates, constants, intervention,
           model: str, mass_ratio=None):
    """Compile the vector field for one parameter draw.

    Enzymes named in `intervention` have their catalytic terms removed for
    every substrate, which is exactly equivalent to zeroing their rates.

    mass_ratio[s] is the phospho-to-unphospho unit ratio for protein s: in
    raw units total abundance gives du/dt = -dp*/dt, but when the two
    channels were rescaled by different normalization factors s_u and s_p
    the conserved combination becomes s_u*u + s_p*p, i.e.
    du/dt = -(s_p/s_u) dp*/dt. None means consistent units (ratio 1).
    """
    p = len(locals_)
    if mass_ratio is None:
        ratio = np.ones(p)
    else:
        ratio = np.asarray(mass_ratio, dtype=float)
        if ratio.shape != (p,) or np.any(ratio <= 0):
            raise DataError("mass_ratio must hold one positive value per protein")
    pre = []
    for s, g in enumerate(locals_):
        keep = [c for c, e in enumerate(g.enzymes) if e not in intervention]
        if model == "mm":
            k0, k_enz, k_inh = split_michaelis(g, constants[s])
            pre.append((g, np.asarray(rates[s], float), k0, k_enz, k_inh, keep))
        else:
            pre.append((g, np.asarray(rates[s], float), None, None, None, keep))

    def f(x):
        out = np.zeros(2 * p)
        for s, (g, v, k0, k_enz, k_inh, keep) in enumerate(pre):
            if model == "mm":
                ystar = x[p + s]
                y = x[s]
                rate = -v[0] * ystar / (ystar + k0)
                for c in keep:
                    scale = 1.0
                    for i_pos, i in enumerate(g.inhibitors[c]):
                        scale += x[p + i] / k_inh[c][i_pos]
                    rate += v[1 + c] * x[p + g.enzymes[c]] * y / (y + k_enz[c] * scale)
            else:
                rate = v[0]
                for c in keep:
                    rate += v[1 + c] * x[p + g.enzymes[c]]
            out[p + s] = rate
            out[s] = -ratio[s] * rate
        return out

    return f


def _check_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or np.any(np.diff(times) <= 0):
        raise DataError("times must be strictly increasing, length >= 2")
    return times


def integrate(locals_, rates, constants, x0, times, intervention=frozenset(),
              max_step: float = 0.01, model: str = "mm",
              mass_ratio=None) -> Trajectory:
    """Fixed-step RK4 trajectory through the given output times.

    The internal step never exceeds min(max_step, smallest output gap); each
    output interval is subdivided evenly. Raises NumericalError with the
    blow-up time if the state leaves [0, 1e12] or turns non-finite.
    mass_ratio adapts the mass-balance coupling to rescaled units (see
    _field); leave it None for data in consistent physical units.
    """
    times = _check_times(times)
    x = np.asarray(x0, dtype=float).copy()
    if np.any(x < 0):
        raise DataError("initial state must be non-negative")
    f = _field(tuple(locals_), rates, constants, frozenset(intervention),
               model, mass_ratio)
    h_cap = min(max_step, float(np.min(np.diff(times))))
    out = np.empty((times.size, x.size))
    out[0] = x
    t = times[0]
    for j in range(1, times.size):
        gap = times[j] - times[j - 1]
        n_sub = int(np.ceil(gap / h_cap - 1e-12))
        h = gap / n_sub
        for _ in range(n_sub):
            k1 = f(x)
            k2 = f(np.maximum(x + 0.5 * h * k1, 0.0))
            k3 = f(np.maximum(x + 0.5 * h * k2, 0.0))
            k4 = f(np.maximum(x + h * k3, 0.0))
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            x = np.maximum(x, 0.0)
            t += h
            if not np.all(np.isfinite(x)) or x.max() > BLOWUP:
                raise NumericalError(f"trajectory diverged near t = {t:.4g}")
        out[j] = x
        t = times[j]
    return Trajectory(times, out, {"intervention": sorted(intervention),
                                   "model": model})


def simulate_sde(locals_, rates, constants, x0, times, intrinsic_sigma: float,
                 seed, intervention=frozenset(), step: float = 0.01,
                 model: str = "mm") -> Trajectory:
    """Euler-Maruyama sample path observed at the given times.

    Additive noise of scale intrinsic_sigma per unit time enters the phospho
    channels only; the u channels follow the deterministic mass-balance
    drift, and all channels are clipped at zero. intrinsic_sigma = 0 reduces
    to plain Euler integration.
    """
    if intrinsic_sigma < 0:
        raise DataError("intrinsic_sigma must be >= 0")
    times = _check_times(times)
    x = np.asarray(x0, dtype=float).copy()
    if np.any(x < 0):
        raise DataError("initial state must be non-negative")
    p = len(locals_)
    rng = np.random.default_rng(seed)
    f = _field(tuple(locals_), rates, constants, frozenset(intervention), model)
    out = np.empty((times.size, x.size))
    out[0] = x
    t = times[0]
    for j in range(1, times.size):
        gap = times[j] - times[j - 1]
        n_sub = int(np.ceil(gap / min(step, gap) - 1e-12))
        h = gap / n_sub
        root_h = np.sqrt(h)
        for _ in range(n_sub):
            x = x + h * f(x)
            if intrinsic_sigma > 0:
                x[p:] = x[p:] + root_h * intrinsic_sigma * rng.standard_normal(p)
            x = np.maximum(x, 0.0)
            t += h
            if not np.all(np.isfinite(x)) or x.max() > BLOWUP:
                raise NumericalError(f"trajectory diverged near t = {t:.4g}")
        out[j] = x
        t = times[j]
    return Trajectory(times, out, {"intervention": sorted(intervention),
                                   "seed": seed, "sigma": intrinsic_sigma})


def stationary_benchmark(x0, times) -> Trajectory:
    """The no-dynamics reference: the initial state, held constant."""
    times = _check_times(times)
    x0 = np.asarray(x0, dtype=float)
    return Trajectory(times, np.tile(x0, (times.size, 1)), {"benchmark": True})


def predict(draws: list[EnsembleDraw], x0, times, intervention=frozenset(),
            max_step: float = 0.01, model: str = "mm",
            mass_ratio=None) -> PredictionBand:
    """Ensemble-averaged prediction with a pointwise standard-deviation band.

    Each posterior draw is integrated separately; draws whose trajectory
    blows up are excluded and counted in metadata (the linear analogue does
    this routinely, the kinetic model essentially never). Pass the training
    normalization's phospho/unphospho scale ratio as mass_ratio when the
    parameters were fitted in rescaled units.
    """
    if not draws:
        raise DataError("empty ensemble")
    times = _check_times(times)
    kept = []
    divergent = 0
    for d in draws:
        try:
            traj = integrate(d.locals, d.rates, d.constants, x0, times,
                             intervention=intervention, max_step=max_step,
                             model=model, mass_ratio=mass_ratio)
            kept.append(traj.states)
        except NumericalError:
            divergent += 1
    if not kept:
        raise NumericalError("every ensemble trajectory diverged")
    stack = np.array(kept)
    meta = {"n_used": len(kept), "n_divergent": divergent,
            "intervention": sorted(intervention), "model": model}
    return PredictionBand(times, stack.mean(axis=0), stack.std(axis=0), meta)


# ---------------------------------------------------------------------------
# scoring

def _states_of(x) -> np.ndarray:
    if isinstance(x, PredictionBand):
        return x.mean
    if isinstance(x, Trajectory):
        return x.states
    return np.asarray(x, dtype=float)


def prediction_mse(pred, test: Trajectory, horizon: float = 1.0) -> float:
    """Normalized mean squared error of a prediction against a test course.

    Both series are scaled per channel by the test channel's maximum; the
    squared error is then averaged over channels and over the first
    ceil(horizon * n) points after the (shared) initial state. Channels
    whose test maximum is zero are excluded and logged.
    """
    if not 0 < horizon <= 1:
        raise DataError("horizon must lie in (0, 1]")
    pred_states = _states_of(pred)
    pred_times = pred.times if isinstance(pred, (Trajectory, PredictionBand)) else None
    if pred_times is not None and not np.allclose(pred_times, test.times):
        raise DataError("prediction and test times misaligned")
    if pred_states.shape != test.states.shape:
        raise DataError("prediction and test shapes differ")
    n_intervals = test.times.size - 1
    last = int(np.ceil(horizon * n_intervals))
    sel = slice(1, last + 1)
    scale = np.abs(test.states).max(axis=0)
    usable = scale > 0
    if not np.all(usable):
        log.warning("excluding %d all-zero test channels from the MSE",
                    int((~usable).sum()))
    if not np.any(usable):
        raise DataError("every test channel is identically zero")
    diff = (pred_states[sel][:, usable] - test.states[sel][:, usable]) / scale[usable]
    return float(np.mean(diff * diff))


# ---------------------------------------------------------------------------
# wide-format CSV

def _wide_header(names, with_sd: bool):
    cols = ["time"]
    for n in names:
        cols += [f"{n}_u", f"{n}_p"]
    if with_sd:
        for n in names:
            cols += [f"{n}_u_sd", f"{n}_p_sd"]
    return cols


def _interleave(states: np.ndarray) -> np.ndarray:
    """(T, 2p) u-block/p-block layout -> per-protein (u, p) column pairs."""
    p = states.shape[1] // 2
    out = np.empty_like(states)
    out[:, 0::2] = states[:, :p]
    out[:, 1::2] = states[:, p:]
    return out


def write_trajectory(traj: Trajectory, names, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_wide_header(names, with_sd=False))
        body = _interleave(traj.states)
        for j, t in enumerate(traj.times):
            w.writerow([repr(float(t))] + [repr(float(v)) for v in body[j]])


def write_band(band: PredictionBand, names, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(_wide_header(names, with_sd=True))
        mean = _interleave(band.mean)
        sd = _interleave(band.sd)
        for j, t in enumerate(band.times):
            w.writerow([repr(float(t))]
                       + [repr(float(v)) for v in mean[j]]
                       + [repr(float(v)) for v in sd[j]])


def read_trajectory(path):
    """Read a wide trajectory CSV. Returns (names, Trajectory)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "time":
            raise DataError(f"{path}: expected a wide trajectory CSV")
        chan_cols = [h for h in header[1:] if not h.endswith("_sd")]
        names = []
        for col in chan_cols[0::2]:
            if not col.endswith("_u"):
                raise DataError(f"{path}: unexpected column order near {col!r}")
            names.append(col[:-2])
        expect = _wide_header(names, with_sd=False)
        if header[:len(expect)] != expect:
            raise DataError(f"{path}: malformed header")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row[:len(expect)]])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value") from None
    arr = np.array(rows)
    if arr.size == 0:
        raise DataError(f"{path}: no data rows")
    times = arr[:, 0]
    inter = arr[:, 1:]
    p = len(names)
    states = np.empty_like(inter)
    states[:, :p] = inter[:, 0::2]
    states[:, p:] = inter[:, 1::2]
    return names, Trajectory(times, states)
