"""Seeded synthetic-data generator for panels of log growth curves.

Used as the independent oracle in tests: mean curves are generated directly
from the model definitions (running the growth processes forward), not
through the fitting modules' prediction code. Per-source deviations follow
the random-effects structure (intercept and per-segment slope offsets,
optionally correlated between intercept and first-segment slope), coverage
windows blank out cells as missing, and observation noise is i.i.d.
Gaussian on the log scale. Everything is deterministic in the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError
from .series import LOG_CUMULATIVE, Panel

EXPONENTIAL = "exponential"
LOGISTIC = "logistic"
SEGMENTED = "segmented"

DEFAULT_SEED = 20210907


@dataclass(frozen=True)
class SourceSim:
    """Coverage window for one simulated source (None = full range)."""

    source_id: str
    first_year: int | None = None
    last_year: int | None = None


@dataclass(frozen=True)
class RandomEffectsSim:
    """Population the per-source deviations are drawn from."""

    sd_intercept: float = 0.0
    sd_slopes: tuple[float, ...] = ()
    corr_intercept_slope1: float = 0.0


@dataclass(frozen=True)
class SimSpec:
    model: str
    t0: int
    t_end: int
    intercept: float
    slopes: tuple[float, ...] = ()
    breakpoints: tuple[float, ...] = ()
    log_capacity: float | None = None
    noise_sd: float = 0.0
    sources: tuple[SourceSim, ...] = (SourceSim("sim"),)
    random_effects: RandomEffectsSim | None = None
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.model not in (EXPONENTIAL, LOGISTIC, SEGMENTED):
            raise InvalidSpecError(f"unknown model {self.model!r}")
        if self.t_end <= self.t0:
            raise InvalidSpecError("t_end must exceed t0")
        if self.noise_sd < 0:
            raise InvalidSpecError("noise_sd must be >= 0")
        if self.model in (EXPONENTIAL, LOGISTIC):
            if len(self.slopes) != 1:
                raise InvalidSpecError(f"{self.model} takes exactly one slope")
            if self.breakpoints:
                raise InvalidSpecError(f"{self.model} takes no breakpoints")
        if self.model == LOGISTIC:
            if self.log_capacity is None or self.log_capacity <= self.intercept:
                raise InvalidSpecError("logistic needs log_capacity > intercept")
        if self.model == SEGMENTED:
            if len(self.breakpoints) != len(self.slopes) - 1:
                raise InvalidSpecError("need one breakpoint fewer than slopes")
            bps = list(self.breakpoints)
            if bps != sorted(bps) or len(set(bps)) != len(bps):
                raise InvalidSpecError("breakpoints must be strictly increasing")
            if bps and (bps[0] <= self.t0 or bps[-1] >= self.t_end):
                raise InvalidSpecError("breakpoints must lie inside (t0, t_end)")
        if not self.sources:
            raise InvalidSpecError("need at least one source")
        for src in self.sources:
            fy = self.t0 if src.first_year is None else src.first_year
            ly = self.t_end if src.last_year is None else src.last_year
            if fy < self.t0 or ly > self.t_end or fy > ly:
                raise InvalidSpecError(
                    f"{src.source_id}: coverage {fy}..{ly} outside {self.t0}..{self.t_end}"
                )
        re = self.random_effects
        if re is not None:
            if re.sd_intercept < 0 or any(s < 0 for s in re.sd_slopes):
                raise InvalidSpecError("random-effect SDs must be >= 0")
            if abs(re.corr_intercept_slope1) > 1:
                raise InvalidSpecError("correlation must lie in [-1, 1]")
            if self.model == SEGMENTED and re.sd_slopes and len(re.sd_slopes) != len(self.slopes):
                raise InvalidSpecError("need one slope SD per segment (or none)")


@dataclass(frozen=True)
class SimTruth:
    """Generating parameters actually used, including per-source draws."""

    spec: SimSpec
    intercept_by_source: dict[str, float]
    slopes_by_source: dict[str, tuple[float, ...]]
    seed: int


def _segmented_log_mean(year, t0, intercept, slopes, breakpoints):
    # literal translation of the nested segment clauses; deliberately
    # independent of the fitting module's basis construction
    level = intercept
    prev = t0
    for slope, bp in zip(slopes, list(breakpoints) + [math.inf]):
        if year <= bp:
            return level + slope * (year - prev)
        level += slope * (bp - prev)
        prev = bp
    return level


def _logistic_log_mean_level_form(year, t0, intercept, rate, log_capacity):
    # compute the level-scale curve and log it (independent derivation)
    t = year - t0
    cap = math.exp(log_capacity)
    start = math.exp(intercept)
    level = cap * start / ((cap - start) * math.exp(-rate * t) + start)
    return math.log(level)


def log_mean_curve(spec: SimSpec, years, intercept=None, slopes=None) -> np.ndarray:
    """Noise-free log curve for the spec (per-source values may override)."""
    intercept = spec.intercept if intercept is None else intercept
    slopes = spec.slopes if slopes is None else slopes
    years = np.atleast_1d(years)
    if spec.model == EXPONENTIAL:
        return intercept + slopes[0] * (years - spec.t0)
    if spec.model == LOGISTIC:
        return np.array(
            [
                _logistic_log_mean_level_form(
                    yr, spec.t0, intercept, slopes[0], spec.log_capacity
                )
                for yr in years
            ]
        )
    return np.array(
        [
            _segmented_log_mean(yr, spec.t0, intercept, slopes, spec.breakpoints)
            for yr in years
        ]
    )


def simulate(spec: SimSpec) -> tuple[Panel, SimTruth]:
    """Generate a log-scale panel plus the ground-truth sidecar."""
    rng = np.random.default_rng(spec.seed)
    years = np.arange(spec.t0, spec.t_end + 1)
    n_years = years.size
    n_src = len(spec.sources)

    intercepts = {}
    slope_sets = {}
    for src in spec.sources:
        b0 = spec.intercept
        slopes = np.array(spec.slopes, dtype=float)
        re = spec.random_effects
        if re is not None:
            sd_slopes = np.array(
                re.sd_slopes if re.sd_slopes else np.zeros(slopes.size), dtype=float
            )
            # intercept and first-slope deviations share a correlated draw
            z = rng.standard_normal(2)
            u0 = re.sd_intercept * z[0]
            rho = re.corr_intercept_slope1
            u1 = sd_slopes[0] * (rho * z[0] + math.sqrt(max(0.0, 1 - rho**2)) * z[1]) if sd_slopes.size else 0.0
            rest = rng.standard_normal(max(slopes.size - 1, 0))
            b0 = b0 + u0
            if slopes.size:
                slopes = slopes + np.concatenate([[u1], sd_slopes[1:] * rest])
        intercepts[src.source_id] = float(b0)
        slope_sets[src.source_id] = tuple(float(v) for v in slopes)

    values = np.full((n_years, n_src), np.nan)
    for j, src in enumerate(spec.sources):
        mean = log_mean_curve(
            spec, years, intercepts[src.source_id], slope_sets[src.source_id]
        )
        noise = rng.standard_normal(n_years) * spec.noise_sd
        col = mean + noise
        fy = spec.t0 if src.first_year is None else src.first_year
        ly = spec.t_end if src.last_year is None else src.last_year
        covered = (years >= fy) & (years <= ly)
        values[covered, j] = col[covered]

    panel = Panel(
        spec.t0,
        spec.t_end,
        tuple(s.source_id for s in spec.sources),
        values,
        LOG_CUMULATIVE,
    )
    truth = SimTruth(spec, intercepts, slope_sets, spec.seed)
    return panel, truth
