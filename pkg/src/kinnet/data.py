"""Dataset representation, CSV ingestion, normalization, gradient matching.

Time courses hold two abundance matrices per panel: the unphosphorylated
channel ("u") and the phosphorylated channel ("p"). A full system state is a
length-2p vector with the u channels in [0:p] and the p channels in [p:2p];
every module downstream uses that layout.

All containers are frozen and their arrays are write-protected, so datasets
can be shared across worker processes without copies or locks.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError

CSV_HEADER = ("course", "time", "protein", "channel", "value")
CHANNELS = ("u", "p")


def _frozen(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class ProteinPanel:
    """Ordered protein identifiers; each implies a u and a p channel."""

    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) < 2:
            raise DataError("panel needs at least 2 proteins")
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate protein names in panel")

    @property
    def p(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise DataError(f"unknown protein {name!r}") from None


@dataclass(frozen=True)
class TimeCourse:
    """One experimental condition: abundances on a shared time grid.

    Parameters
    ----------
    times : array, shape (n+1,)
        Strictly increasing observation times in hours.
    u, p : arrays, shape (n+1, n_proteins)
        Unphosphorylated / phosphorylated abundances, non-negative.
    condition : str
        Label, unique within a dataset.
    inhibited : frozenset of int
        Protein indices whose phospho-form's enzymatic activity is blocked
        under this condition. Blocks activity only; the protein's own
        abundances still evolve.
    """

    times: np.ndarray
    u: np.ndarray
    p: np.ndarray
    condition: str
    inhibited: frozenset = frozenset()

    def __post_init__(self):
        times = _frozen(self.times)
        u = _frozen(self.u)
        p = _frozen(self.p)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "inhibited", frozenset(self.inhibited))
        if times.ndim != 1 or len(times) < 2:
            raise DataError(f"course {self.condition!r}: need at least 2 time points")
        if np.any(np.diff(times) <= 0):
            raise DataError(f"course {self.condition!r}: non-increasing times")
        if u.shape != p.shape or u.shape[0] != len(times) or u.ndim != 2:
            raise DataError(f"course {self.condition!r}: matrix shapes inconsistent")
        for name, mat in (("u", u), ("p", p)):
            if not np.all(np.isfinite(mat)):
                raise DataError(f"course {self.condition!r}: non-finite {name} abundance")
            if np.any(mat < 0):
                raise DataError(f"course {self.condition!r}: negative abundance")

    @property
    def n_intervals(self) -> int:
        return len(self.times) - 1

    def state(self, j: int) -> np.ndarray:
        """Full 2p state vector at time index j (u channels then p channels)."""
        return np.concatenate([self.u[j], self.p[j]])


@dataclass(frozen=True)
class Dataset:
    panel: ProteinPanel
    courses: tuple[TimeCourse, ...]
    normalized: bool = False
    #: raw-to-model-units divisors, length 2p (u channels then p channels);
    #: present only for pooled normalization where one map covers all courses
    scale: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "courses", tuple(self.courses))
        if not self.courses:
            raise DataError("dataset has no courses")
        labels = [c.condition for c in self.courses]
        if len(set(labels)) != len(labels):
            raise DataError("duplicate course labels")
        for c in self.courses:
            if c.u.shape[1] != self.panel.p:
                raise DataError(f"course {c.condition!r}: wrong protein count")
            bad = {i for i in c.inhibited if not 0 <= i < self.panel.p}
            if bad:
                raise DataError(f"course {c.condition!r}: inhibited index out of range")

    @property
    def n_samples(self) -> int:
        """Total gradient samples the dataset yields (intervals across courses)."""
        return sum(c.n_intervals for c in self.courses)


@dataclass(frozen=True)
class GradientSample:
    """One regression row: finite-difference response plus the state it came from."""

    substrate: int
    z: float
    state: np.ndarray  # length 2p, frozen
    course_id: str
    interval_index: int
    inhibited: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "state", _frozen(self.state))
        if not np.isfinite(self.z):
            raise DataError("non-finite gradient response")
        if np.any(self.state < 0):
            raise DataError("negative state entry in gradient sample")


# ---------------------------------------------------------------------------
# loading / writing

def load_dataset(path) -> Dataset:
    """Load a long-format CSV into an un-normalized Dataset.

    Required header: course,time,protein,channel,value with channel in
    {u, p}. An optional sixth column `inhibited` carries a semicolon-joined
    list of protein names whose activity is blocked in that course; it must
    be identical on every row of a course. Times must appear in strictly
    increasing order within each course, and the (time x protein x channel)
    grid must be complete.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        has_inhibit = False
        if tuple(header[:5]) != CSV_HEADER:
            raise DataError(f"{path}: header must start with {','.join(CSV_HEADER)}")
        if len(header) == 6 and header[5] == "inhibited":
            has_inhibit = True
        elif len(header) != 5:
            raise DataError(f"{path}: unexpected extra columns {header[5:]}")

        proteins: list[str] = []
        course_order: list[str] = []
        times: dict[str, list[float]] = {}
        cells: dict[str, dict] = {}
        inhibit_raw: dict[str, str] = {}

        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) < 5:
                raise DataError(f"{path}:{lineno}: expected at least 5 columns")
            course, t_raw, protein, channel, v_raw = (f.strip() for f in row[:5])
            try:
                t = float(t_raw)
            except ValueError:
                raise DataError(f"{path}:{lineno}: column 2: bad time {t_raw!r}") from None
            try:
                v = float(v_raw)
            except ValueError:
                raise DataError(f"{path}:{lineno}: column 5: bad value {v_raw!r}") from None
            if channel not in CHANNELS:
                raise DataError(f"{path}:{lineno}: column 4: channel must be u or p")
            if not np.isfinite(v):
                raise DataError(f"{path}:{lineno}: non-finite abundance")
            if v < 0:
                raise DataError(f"{path}:{lineno}: negative abundance {v}")

            if protein not in proteins:
                proteins.append(protein)
            if course not in course_order:
                course_order.append(course)
                times[course] = []
                cells[course] = {}
            tl = times[course]
            if not tl or t > tl[-1]:
                tl.append(t)
            elif t < tl[-1] and t not in tl:
                raise DataError(f"{path}:{lineno}: non-increasing times in course {course!r}")
            key = (t, protein, channel)
            if key in cells[course]:
                raise DataError(
                    f"{path}:{lineno}: duplicate cell (course={course}, time={t}, "
                    f"protein={protein}, channel={channel})"
                )
            cells[course][key] = v

            if has_inhibit:
                inh = row[5].strip() if len(row) > 5 else ""
                prev = inhibit_raw.setdefault(course, inh)
                if prev != inh:
                    raise DataError(
                        f"{path}:{lineno}: inhibited set differs within course {course!r}"
                    )

    panel = ProteinPanel(tuple(proteins))
    courses = []
    for course in course_order:
        tl = times[course]
        n_pts = len(tl)
        u = np.empty((n_pts, panel.p))
        pm = np.empty((n_pts, panel.p))
        for j, t in enumerate(tl):
            for i, name in enumerate(panel.names):
                for channel, mat in (("u", u), ("p", pm)):
                    try:
                        mat[j, i] = cells[course][(t, name, channel)]
                    except KeyError:
                        raise DataError(
                            f"{path}: course {course!r} missing cell "
                            f"(time={t}, protein={name}, channel={channel})"
                        ) from None
        inhibited = frozenset()
        raw = inhibit_raw.get(course, "")
        if raw:
            inhibited = frozenset(panel.index(nm.strip()) for nm in raw.split(";") if nm.strip())
        courses.append(TimeCourse(np.array(tl), u, pm, course, inhibited))
    return Dataset(panel, tuple(courses), normalized=False)


def write_dataset(d: Dataset, path) -> None:
    """Write a Dataset in the long CSV format load_dataset accepts."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER + ("inhibited",))
        for c in d.courses:
            inh = ";".join(sorted(d.panel.names[i] for i in c.inhibited))
            for j, t in enumerate(c.times):
                for i, name in enumerate(d.panel.names):
                    writer.writerow([c.condition, repr(float(t)), name, "u",
                                     repr(float(c.u[j, i])), inh])
                    writer.writerow([c.condition, repr(float(t)), name, "p",
                                     repr(float(c.p[j, i])), inh])


def dataset_to_json(d: Dataset) -> str:
    """Debug export of a dataset (normalization metadata included)."""
    doc = {
        "panel": list(d.panel.names),
        "normalized": d.normalized,
        "channels_normalized": "separately",
        "scale": list(d.scale) if d.scale is not None else None,
        "courses": [
            {
                "condition": c.condition,
                "inhibited": sorted(d.panel.names[i] for i in c.inhibited),
                "times": c.times.tolist(),
                "u": c.u.tolist(),
                "p": c.p.tolist(),
            }
            for c in d.courses
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# normalization

def normalize(d: Dataset, scope: str = "pooled") -> Dataset:
    """Scale every channel to unit mean.

    Each protein's u and p channels are treated separately. The default
    "pooled" scope divides all courses by the grand per-channel mean, so one
    raw-to-model-units map exists and is recorded on the result (needed to
    cast held-out courses into the fitted units); "per-course" rescales each
    course by its own means, cancelling between-condition batch effects at
    the cost of a shared unit system.
    """
    if d.normalized:
        raise DataError("dataset already normalized")
    if scope not in ("per-course", "pooled"):
        raise DataError(f"unknown normalization scope {scope!r}")

    def channel_means(mats, label):
        m = np.concatenate(mats, axis=0).mean(axis=0)
        for i, mean in enumerate(m):
            if mean <= 0:
                raise DataError(
                    f"zero-mean channel: protein {d.panel.names[i]!r} in {label}"
                )
        return m

    courses = []
    scale = None
    if scope == "pooled":
        mu_u = channel_means([c.u for c in d.courses], "pooled data")
        mu_p = channel_means([c.p for c in d.courses], "pooled data")
        scale = tuple(np.concatenate([mu_u, mu_p]).tolist())
    for c in d.courses:
        if scope == "per-course":
            mu_u = channel_means([c.u], f"course {c.condition!r} (channel u)")
            mu_p = channel_means([c.p], f"course {c.condition!r} (channel p)")
        courses.append(replace(c, u=c.u / mu_u, p=c.p / mu_p))
    return Dataset(d.panel, tuple(courses), normalized=True, scale=scale)


# ---------------------------------------------------------------------------
# gradient matching

def gradient_match(course: TimeCourse, substrate: int, point: str = "left"):
    """Finite-difference responses for one substrate over one course.

    Returns one GradientSample per interval: z_j = (p[j] - p[j-1]) / dt_j for
    the substrate's phospho channel, paired with the full state at the
    interval's evaluation point. "left" uses the interval's left endpoint
    (forward-Euler consistency), "right" the right endpoint, "midpoint" the
    average of the two states.
    """
    if not 0 <= substrate < course.u.shape[1]:
        raise DataError(f"substrate index {substrate} out of range")
    if point not in ("left", "right", "midpoint"):
        raise DataError(f"unknown gradient evaluation point {point!r}")
    dt = np.diff(course.times)
    z = np.diff(course.p[:, substrate]) / dt
    samples = []
    for j in range(course.n_intervals):
        if point == "left":
            state = course.state(j)
        elif point == "right":
            state = course.state(j + 1)
        else:
            state = 0.5 * (course.state(j) + course.state(j + 1))
        samples.append(
            GradientSample(
                substrate=substrate,
                z=float(z[j]),
                state=state,
                course_id=course.condition,
                interval_index=j,
                inhibited=course.inhibited,
            )
        )
    return samples


def gradient_samples(d: Dataset, substrate: int, point: str = "left"):
    """Concatenated gradient samples for a substrate across all courses.

    The dataset must be normalized first; all downstream regression formulas
    assume unit-mean channels.
    """
    if not d.normalized:
        raise DataError("normalize the dataset before gradient matching")
    out = []
    for c in d.courses:
        out.extend(gradient_match(c, substrate, point))
    return out
