"""BIC scoring and segment-count selection.

Two scoring conventions, never mixed in one ranking:

* likelihood-based: ``-2 loglik + p ln n`` (mixed-model comparisons; p
  includes residual variance and every variance/covariance component);
* MSE-based: ``n ln(SSE/n) + p ln n`` (single-series fixed-effects sweeps;
  p counts intercept, slopes and breakpoints only).

For numerical sanity the SSE entering the MSE-based score is floored at a
per-observation residual of 1e-6 times the data scale; on noiseless data
every adequate segment count then ties on fit and the parameter penalty
picks the smallest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllFitsFailedError,
    GrowthSegError,
    MixedConventionError,
    NonPositiveSSEError,
)

LOGLIK = "loglik"
MSE = "mse"

EQUIVALENT_DELTA = 2.0  # |delta BIC| below this is reported as a tie


def bic_loglik(loglik: float, p: int, n: int) -> float:
    if n <= 0:
        raise NonPositiveSSEError("n must be positive")
    return -2.0 * loglik + p * math.log(n)


def bic_mse(sse: float, p: int, n: int) -> float:
    if sse <= 0:
        raise NonPositiveSSEError(f"sse must be positive, got {sse}")
    if n <= p:
        raise NonPositiveSSEError(f"need n > p, got n={n}, p={p}")
    return n * math.log(sse / n) + p * math.log(n)


@dataclass(frozen=True)
class ModelScore:
    model_id: str
    p: int
    n: int
    bic: float
    loglik: float | None = None
    mse: float | None = None
    converged: bool = True

    def __post_init__(self):
        if (self.loglik is None) == (self.mse is None):
            raise MixedConventionError(
                "exactly one of loglik/mse must back a score"
            )

    @property
    def convention(self) -> str:
        return LOGLIK if self.loglik is not None else MSE


def score_loglik(model_id: str, loglik: float, p: int, n: int, converged=True) -> ModelScore:
    return ModelScore(model_id, p, n, bic_loglik(loglik, p, n), loglik=loglik, converged=converged)


def score_mse(model_id: str, sse: float, p: int, n: int, converged=True) -> ModelScore:
    return ModelScore(model_id, p, n, bic_mse(sse, p, n), mse=sse / n, converged=converged)


def compare(scores: list[ModelScore]) -> list[ModelScore]:
    """Ascending BIC; non-converged fits sink to the bottom, ties by id."""
    conventions = {s.convention for s in scores}
    if len(conventions) > 1:
        raise MixedConventionError(
            "cannot rank likelihood-based and MSE-based scores together"
        )
    return sorted(scores, key=lambda s: (not s.converged, s.bic, s.model_id))


def _sse_floor(data, n: int) -> float:
    values = getattr(data, "values", None)
    if values is not None:
        arr = np.asarray(values, dtype=float)
        finite = arr[np.isfinite(arr)]
        scale = max(1.0, float(np.max(np.abs(finite)))) if finite.size else 1.0
    else:
        scale = 1.0
    return n * (1e-6 * scale) ** 2


@dataclass(frozen=True)
class SegmentSelection:
    best_segments: int
    scores: tuple[ModelScore, ...]  # one per attempted J, in J order
    errors: tuple[tuple[int, str], ...]  # (J, message) for failed fits

    @property
    def table(self) -> list[dict]:
        rows = [
            {
                "model_id": s.model_id,
                "segments": int(s.model_id.rsplit("=", 1)[1]),
                "p": s.p,
                "n": s.n,
                "mse": s.mse,
                "loglik": s.loglik,
                "bic": s.bic,
                "converged": s.converged,
            }
            for s in self.scores
        ]
        for j, msg in self.errors:
            rows.append(
                {"model_id": f"segments={j}", "segments": j, "error": msg}
            )
        return sorted(rows, key=lambda r: r["segments"])


def select_segments(data, j_min: int, j_max: int, fit_fn, convention: str | None = None) -> SegmentSelection:
    """Sweep segment counts, score each fit, return the BIC winner.

    ``fit_fn(data, J)`` must return an object exposing ``n_obs``,
    ``converged``, ``n_params`` and either ``sse`` (MSE convention) or
    ``loglik`` plus ``n_params_loglik`` (likelihood convention). The
    convention is inferred from the first successful fit unless forced.
    """
    if j_min < 1 or j_max < j_min:
        raise GrowthSegError(f"bad segment range {j_min}..{j_max}")
    scores: list[ModelScore] = []
    errors: list[tuple[int, str]] = []
    for J in range(j_min, j_max + 1):
        try:
            fit = fit_fn(data, J)
        except GrowthSegError as exc:
            errors.append((J, str(exc)))
            continue
        conv = convention
        if conv is None:
            conv = getattr(fit, "score_convention", MSE)
        model_id = f"segments={J}"
        if conv == MSE:
            sse = max(fit.sse, _sse_floor(data, fit.n_obs))
            scores.append(score_mse(model_id, sse, fit.n_params, fit.n_obs, fit.converged))
        else:
            scores.append(
                score_loglik(model_id, fit.loglik, fit.n_params_loglik, fit.n_obs, fit.converged)
            )
    if not scores:
        raise AllFitsFailedError(
            "; ".join(f"J={j}: {m}" for j, m in errors) or "no segment counts attempted"
        )
    ranked = compare(scores)
    best = int(ranked[0].model_id.rsplit("=", 1)[1])
    return SegmentSelection(best, tuple(scores), tuple(errors))
