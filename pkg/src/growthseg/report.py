"""Fit reports: everything a rerun or a plotting tool needs, as plain dicts.

A report records the exact configuration (input, flags, seed) so the same
numbers can be regenerated, the parameter table (pooled statistics when the
fit went through imputation), per-segment growth rates with both doubling
conventions, diagnostics, and per-source observed/fitted curves with an
approximate 95% band (residual variance plus the linearized parameter
term). The companion plot CSV flattens the curves.
"""

from __future__ import annotations

import math

import numpy as np

from . import __version__
from .growth import EXPONENTIAL, GrowthFit, _logistic_jacobian, growth_rate, predict
from .impute import ImputedFit, PooledEstimate
from .mixed import MixedFit, group_curve
from .segmented import (
    SegmentedFit,
    predict_segmented,
    residual_lag1_autocorr,
    segment_rates,
    segmented_design,
)
from .series import Panel

_Z95 = 1.959963984540054


def _doubling_if_slope_is_rate(slope: float) -> float | None:
    """Doubling under the other printed convention: slope read as e^b - 1."""
    return math.log(2.0) / math.log1p(slope) if slope > 0 else None


def _band_quad(fit, years: np.ndarray) -> np.ndarray:
    """Parameter-uncertainty term x' Cov x per prediction year."""
    cov = getattr(fit, "cov_params", None)
    if isinstance(fit, MixedFit):
        cov = fit.fixed.cov_params
        X = np.column_stack(
            [np.ones(years.size), segmented_design(years, fit.fixed.breakpoints, fit.fixed.t0)]
        )
    elif isinstance(fit, SegmentedFit):
        X = np.column_stack(
            [np.ones(years.size), segmented_design(years, fit.breakpoints, fit.t0)]
        )
    elif isinstance(fit, GrowthFit):
        t = years - fit.t0
        if fit.model == EXPONENTIAL:
            X = np.column_stack([np.ones(years.size), t])
        else:
            X = _logistic_jacobian(t, fit.intercept, fit.rate, fit.log_capacity)
    else:
        return np.zeros(years.size)
    if cov is None or cov.shape[0] != X.shape[1]:
        return np.zeros(years.size)
    return np.einsum("ij,jk,ik->i", X, cov, X)


def _fitted_for(fit, years: np.ndarray, source: str) -> np.ndarray:
    if isinstance(fit, MixedFit):
        return group_curve(fit, source, years)
    if isinstance(fit, SegmentedFit):
        return np.asarray(predict_segmented(fit, years))
    return np.asarray(predict(fit, years.astype(float) - fit.t0))


def _curves(fit, panel: Panel) -> dict:
    years = panel.years.astype(float)
    sigma2 = fit.resid_var
    quad = _band_quad(fit, years)
    half = _Z95 * np.sqrt(sigma2 + quad)
    out = {}
    mask = panel.missing_mask
    for j, sid in enumerate(panel.sources):
        fitted = _fitted_for(fit, years, sid)
        out[sid] = {
            "observed": panel.values[:, j].tolist(),
            "fitted": fitted.tolist(),
            "lower": (fitted - half).tolist(),
            "upper": (fitted + half).tolist(),
            "imputed": mask[:, j].astype(int).tolist(),
        }
    return out


def _segments_block(fit) -> list[dict]:
    if isinstance(fit, MixedFit):
        fit = fit.fixed
    if isinstance(fit, GrowthFit):
        g = growth_rate(fit.rate)
        return [
            {
                "segment": 1,
                "slope": fit.rate,
                "growth_pct": 100.0 * g,
                "doubling_years": (math.log(2.0) / fit.rate) if fit.rate > 0 else None,
                "doubling_years_alt": _doubling_if_slope_is_rate(fit.rate),
                "note": None,
            }
        ]
    return [
        {
            "segment": r.segment,
            "slope": r.slope,
            "growth_pct": 100.0 * r.growth,
            "doubling_years": r.doubling,
            "doubling_years_alt": r.doubling_if_slope_is_rate,
            "note": r.note,
        }
        for r in segment_rates(fit)
    ]


def _parameters_single(fit) -> dict:
    from .impute import params_with_se

    return {
        name: {"estimate": v, "se": se} for name, (v, se) in params_with_se(fit).items()
    }


def _parameters_pooled(pooled: dict[str, PooledEstimate]) -> dict:
    return {
        name: {
            "estimate": p.point,
            "se": p.se,
            "within": p.within,
            "between": p.between,
            "gamma": p.gamma,
            "relative_efficiency": p.relative_efficiency,
        }
        for name, p in pooled.items()
    }


def _model_block(fit, request=None) -> dict:
    if isinstance(fit, MixedFit):
        return {
            "name": "mixed_segmented",
            "segments": fit.fixed.n_segments,
            "mixed": True,
            "covariance": fit.corr_intercept_slope1 is not None,
            "random_effects": list(fit.re_names),
        }
    if isinstance(fit, SegmentedFit):
        return {
            "name": "segmented",
            "segments": fit.n_segments,
            "mixed": False,
            "saturating_first": fit.saturating_first is not None,
        }
    return {"name": fit.model, "segments": 1, "mixed": False}


def _diagnostics(fit) -> dict:
    # for mixed fits the interesting residuals are conditional on the
    # predicted source deviations
    out = {
        "lag1_autocorr": residual_lag1_autocorr(fit),
        "converged": bool(fit.converged),
    }
    if isinstance(fit, MixedFit):
        out["boundary"] = list(fit.boundary)
    return out


def build_report(fit, panel: Panel, config: dict, seed: int) -> dict:
    """Report for one model fitted directly to a (complete) panel."""
    from .selection import bic_loglik, bic_mse

    fixed = fit.fixed if isinstance(fit, MixedFit) else fit
    stats = {
        "loglik": fit.loglik if hasattr(fit, "loglik") else None,
        "resid_var": fit.resid_var,
        "n_obs": fixed.n_obs,
    }
    if isinstance(fit, MixedFit):
        stats["bic"] = bic_loglik(fit.loglik, fit.n_params_loglik, fit.n_total)
        stats["bic_convention"] = "loglik"
    else:
        sse = fit.resid_var * fit.n_obs
        if sse > 0 and fit.n_obs > fit.n_params:
            stats["bic"] = bic_mse(sse, fit.n_params, fit.n_obs)
            stats["bic_convention"] = "mse"
    report = {
        "package_version": __version__,
        "config": dict(config),
        "seed": seed,
        "model": _model_block(fit),
        "parameters": _parameters_single(fit),
        "segments": _segments_block(fit),
        "breakpoints": list(getattr(fixed, "breakpoints", np.zeros(0))),
        "fit_stats": stats,
        "diagnostics": _diagnostics(fit),
        "years": [int(y) for y in panel.years],
        "curves": _curves(fit, panel),
    }
    return report


def build_imputed_report(result: ImputedFit, panel: Panel, config: dict, seed: int) -> dict:
    """Report for an impute-then-fit run; parameters carry pooled spreads."""
    ok = [f for f in result.fits if f is not None]
    ref = ok[0]
    fixed = ref.fixed if isinstance(ref, MixedFit) else ref
    years = panel.years.astype(float)
    sigma2 = float(np.mean([f.resid_var for f in ok]))
    half = _Z95 * np.sqrt(sigma2 + np.mean([_band_quad(f, years) for f in ok], axis=0))
    curves = {}
    for j, sid in enumerate(panel.sources):
        fitted = result.predictions[sid]
        curves[sid] = {
            "observed": panel.values[:, j].tolist(),
            "fitted": fitted.tolist(),
            "lower": (fitted - half).tolist(),
            "upper": (fitted + half).tolist(),
            "imputed": result.imputed_mask[:, j].astype(int).tolist(),
        }
    def _indexed(prefix):
        keys = [k for k in result.pooled if k.startswith(prefix)]
        return [result.pooled[k].point for k in sorted(keys, key=lambda k: int(k[len(prefix):]))]

    slopes_pooled = _indexed("slope_") or (
        [result.pooled["rate"].point] if "rate" in result.pooled else []
    )
    segments = []
    for i, b in enumerate(slopes_pooled, start=1):
        g = growth_rate(b)
        segments.append(
            {
                "segment": i,
                "slope": b,
                "growth_pct": 100.0 * g,
                "doubling_years": (math.log(2.0) / b) if b > 0 else None,
                "doubling_years_alt": _doubling_if_slope_is_rate(b),
                "note": None,
            }
        )
    diag = _diagnostics(ref)
    diag["monotonicity_violations"] = result.monotonicity_violations
    diag["failed_imputations"] = list(result.failed)
    report = {
        "package_version": __version__,
        "config": dict(config),
        "seed": seed,
        "model": {**_model_block(ref), "imputations": result.m},
        "parameters": _parameters_pooled(result.pooled),
        "segments": segments,
        "breakpoints": _indexed("breakpoint_"),
        "fit_stats": {
            "loglik_mean": float(np.mean([f.loglik for f in ok])),
            "resid_var": sigma2,
            "n_obs": fixed.n_obs,
        },
        "diagnostics": diag,
        "years": [int(y) for y in panel.years],
        "curves": curves,
    }
    return report


def build_selection_report(selection, config: dict, seed: int) -> dict:
    return {
        "package_version": __version__,
        "config": dict(config),
        "seed": seed,
        "best_segments": selection.best_segments,
        "table": selection.table,
    }
