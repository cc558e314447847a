"""Run configuration: defaults, config-file parsing, artifact echo.

Every output artifact embeds the exact configuration used (`as_dict`), so a
run can be reproduced from any of its products. Config files are flat
``key = value`` text; unknown keys are rejected rather than ignored.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, asdict

from .errors import DataError

GRADIENT_POINTS = ("left", "right", "midpoint")
NORMALIZATIONS = ("per-course", "pooled")
B_VARIANTS = ("complete", "simplified")


@dataclass(frozen=True)
class PriorSpec:
    """Hyperparameters of the rate/constant priors.

    mu_v, mu_k are the prior means of the maximum rates and Michaelis
    constants (broadcast over coordinates); nu is the prior variance of each
    Michaelis constant. g_scale, when None, defaults to the number of
    gradient samples n (unit-information scaling of the rate prior
    covariance g * sigma^2 * (D'D)^-1).
    """

    mu_v: float = 1.0
    mu_k: float = 1.0
    nu: float = 0.5
    g_scale: float | None = None

    def __post_init__(self):
        if self.nu <= 0:
            raise DataError("prior variance nu must be positive")
        if self.mu_v < 0 or self.mu_k < 0:
            raise DataError("prior means must be non-negative")


@dataclass(frozen=True)
class SamplerConfig:
    """MCMC settings for one (substrate, graph) scoring job."""

    iters: int = 20_000
    burn_in: int = 5_000
    thin: int = 5
    proposal_scale: float = 0.3
    adapt: bool = True
    reduced_draws: int = 3_000  # reduced-run size for the marginal likelihood
    b_variant: str = "complete"

    def __post_init__(self):
        if self.burn_in >= self.iters:
            raise DataError("burn_in must be smaller than iters")
        if self.thin < 1 or self.iters < 2:
            raise DataError("bad sampler settings")
        if self.b_variant not in B_VARIANTS:
            raise DataError(f"b_variant must be one of {B_VARIANTS}")


def default_workers() -> int:
    raw = os.environ.get("KINNET_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise DataError(f"KINNET_WORKERS must be an integer, got {raw!r}") from None


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a run's outputs besides the input files."""

    seed: int = 0
    c1: int = 2
    c2: int = 0
    self_edges: bool = True
    gradient_point: str = "left"
    normalization: str = "pooled"
    prior: PriorSpec = field(default_factory=PriorSpec)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    workers: int = field(default_factory=default_workers)
    ensemble: int = 200
    horizon: float = 1.0
    retain: int = 1_000  # stored chain states per graph

    def __post_init__(self):
        if self.gradient_point not in GRADIENT_POINTS:
            raise DataError(f"gradient_point must be one of {GRADIENT_POINTS}")
        if self.normalization not in NORMALIZATIONS:
            raise DataError(f"normalization must be one of {NORMALIZATIONS}")
        if self.c1 < 0 or self.c2 < 0:
            raise DataError("in-degree bounds must be non-negative")
        if not 0 < self.horizon <= 1:
            raise DataError("horizon must lie in (0, 1]")
        if self.workers < 1 or self.ensemble < 1 or self.retain < 1:
            raise DataError("workers, ensemble and retain must be >= 1")

    def as_dict(self) -> dict:
        return asdict(self)


# Config-file keys, their target field paths and parsers. Kept explicit so a
# typo in a config file fails loudly instead of silently running defaults.
def _parse_bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(s)


_KEYS = {
    "seed": ("seed", int),
    "c1": ("c1", int),
    "c2": ("c2", int),
    "self_edges": ("self_edges", _parse_bool),
    "gradient_point": ("gradient_point", str),
    "normalization": ("normalization", str),
    "workers": ("workers", int),
    "ensemble": ("ensemble", int),
    "horizon": ("horizon", float),
    "retain": ("retain", int),
    "mu_v": ("prior.mu_v", float),
    "mu_k": ("prior.mu_k", float),
    "nu": ("prior.nu", float),
    "g_scale": ("prior.g_scale", float),
    "iters": ("sampler.iters", int),
    "burn_in": ("sampler.burn_in", int),
    "thin": ("sampler.thin", int),
    "proposal_scale": ("sampler.proposal_scale", float),
    "adapt": ("sampler.adapt", _parse_bool),
    "reduced_draws": ("sampler.reduced_draws", int),
    "b_variant": ("sampler.b_variant", str),
}


def read_config_file(path) -> dict:
    """Parse a flat ``key = value`` config file into {field_path: value}."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value'")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _KEYS:
                raise DataError(f"{path}:{lineno}: unknown config key {key!r}")
            target, parser = _KEYS[key]
            try:
                values[target] = parser(val)
            except ValueError:
                raise DataError(
                    f"{path}:{lineno}: bad value {val!r} for {key!r}"
                ) from None
    return values


def build_run_config(file_values: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Assemble a RunConfig from file values and CLI overrides.

    Overrides use the same field paths as config keys ('sampler.iters') and
    win over the file. None-valued overrides are skipped.
    """
    merged: dict = {}
    for source in (file_values or {}), (overrides or {}):
        for k, v in source.items():
            if v is not None:
                merged[k] = v
    top = {k: v for k, v in merged.items() if "." not in k}
    prior_kw = {k.split(".", 1)[1]: v for k, v in merged.items() if k.startswith("prior.")}
    samp_kw = {k.split(".", 1)[1]: v for k, v in merged.items() if k.startswith("sampler.")}
    return RunConfig(
        prior=PriorSpec(**prior_kw),
        sampler=SamplerConfig(**samp_kw),
        **top,
    )
