"""Multiple imputation for incomplete panels and pooling of repeated fits.

Missing cells are filled by a data-augmentation sampler on a multivariate
normal over sources, treating years as exchangeable rows: the I-step draws
each row's missing cells from their conditional normal given the observed
cells and the current (mu, Sigma); the P-step draws (mu, Sigma) from the
normal-inverse-Wishart posterior under a Jeffreys-style prior (with a tiny
ridge on the scale matrix for stability). The sampler needs at least one
source observed over the whole year range to anchor the conditionals.
Treating years as i.i.d. rows ignores the serial structure; this is the
package's documented imputation model, and downstream reports count
monotonicity violations among imputed values as a check.

Pooling follows the usual two-part variance split: the point estimate is
the mean across imputations, the within variance is the mean squared
standard error, the between variance is the sample variance of the
estimates, and the total is W + (1 + 1/m) B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import invwishart

from .errors import (
    ChainDivergenceError,
    EmptyInputError,
    GrowthSegError,
    LengthMismatchError,
    NoCompleteBackboneError,
    NoConvergenceError,
)
from .growth import GrowthFit, fit_exponential_xy, fit_logistic_xy, predict
from .mixed import MixedFit, RandomEffectsSpec, fit_mixed, group_curve
from .segmented import SegmentedFit, SegmentedOptions, fit_segmented_xy, predict_segmented
from .series import LOG_CUMULATIVE, KindMismatchError, Panel
from .simulate import DEFAULT_SEED

_RIDGE = 1e-6


@dataclass(frozen=True)
class ImputationSet:
    """m completed panels; observed cells match the input exactly."""

    m: int
    panels: tuple[Panel, ...]
    seed: int
    burnin: int
    gap: int
    trace: dict | None = None


def impute_mcmc(
    panel: Panel,
    m: int = 5,
    seed: int = DEFAULT_SEED,
    burnin: int = 200,
    gap: int = 100,
    keep_trace: bool = False,
) -> ImputationSet:
    """Draw m completed panels for a log-scale panel with missing cells."""
    if panel.kind != LOG_CUMULATIVE:
        raise KindMismatchError(f"imputation expects log_cumulative, got {panel.kind}")
    if m < 1:
        raise EmptyInputError("need at least one imputation")
    Y0 = np.array(panel.values, dtype=float)
    mask = np.isnan(Y0)

    if not mask.any():
        return ImputationSet(m, (panel,) * m, seed, burnin, gap, None)

    if not (~mask).all(axis=0).any():
        raise NoCompleteBackboneError(
            "need at least one source observed over the full year range"
        )

    n, d = Y0.shape
    rng = np.random.default_rng(seed)
    col_means = np.nanmean(Y0, axis=0)
    Y = np.where(mask, col_means[None, :], Y0)

    # rows sharing a missingness pattern can be drawn in one batch
    pattern_rows: dict[tuple, np.ndarray] = {}
    keys, inverse = np.unique(mask, axis=0, return_inverse=True)
    for k in range(keys.shape[0]):
        if keys[k].any():
            pattern_rows[tuple(keys[k])] = np.flatnonzero(inverse == k)

    panels: list[Panel] = []
    trace_mu, trace_sigma = [], []
    it = 0
    while len(panels) < m:
        it += 1
        # P-step: (mu, Sigma) from the posterior given the completed matrix
        xbar = Y.mean(axis=0)
        dev = Y - xbar
        S = dev.T @ dev + _RIDGE * np.eye(d)
        Sigma = np.atleast_2d(invwishart.rvs(df=n - 1, scale=S, random_state=rng))
        mu = rng.multivariate_normal(xbar, Sigma / n, method="cholesky")

        # I-step: conditional normal draws per missingness pattern
        for key, rows in pattern_rows.items():
            miss = np.flatnonzero(key)
            obs = np.flatnonzero(~np.asarray(key))
            Soo = Sigma[np.ix_(obs, obs)]
            Smo = Sigma[np.ix_(miss, obs)]
            Smm = Sigma[np.ix_(miss, miss)]
            A = np.linalg.solve(Soo, Smo.T).T
            cond_cov = Smm - A @ Smo.T
            cond_cov = (cond_cov + cond_cov.T) / 2.0 + _RIDGE * np.eye(miss.size)
            try:
                C = np.linalg.cholesky(cond_cov)
            except np.linalg.LinAlgError as exc:
                raise ChainDivergenceError(f"conditional covariance not PD: {exc}")
            cond_mean = mu[miss][None, :] + (Y0[np.ix_(rows, obs)] - mu[obs][None, :]) @ A.T
            z = rng.standard_normal((rows.size, miss.size))
            draws = cond_mean + z @ C.T
            if not np.all(np.isfinite(draws)):
                raise ChainDivergenceError(f"non-finite draw at iteration {it}")
            Y[np.ix_(rows, miss)] = draws

        if it > burnin and (it - burnin) % gap == 0:
            completed = np.where(mask, Y, Y0)
            panels.append(panel.with_values(completed))
            if keep_trace:
                trace_mu.append(mu.copy())
                trace_sigma.append(Sigma.copy())

    trace = None
    if keep_trace:
        trace = {"mu": np.array(trace_mu), "sigma": np.array(trace_sigma)}
    return ImputationSet(m, tuple(panels), seed, burnin, gap, trace)


# --- pooling -----------------------------------------------------------------


@dataclass(frozen=True)
class PooledEstimate:
    """A parameter pooled across imputations, with its variance split."""

    point: float
    within: float
    between: float
    total: float
    se: float
    gamma: float  # fraction of missing information
    relative_efficiency: float
    m: int


def pool(estimates, ses) -> PooledEstimate:
    """Combine per-imputation estimates and standard errors."""
    est = np.asarray(list(estimates), dtype=float)
    se = np.asarray(list(ses), dtype=float)
    if est.size != se.size:
        raise LengthMismatchError(f"{est.size} estimates vs {se.size} ses")
    if est.size == 0:
        raise EmptyInputError("nothing to pool")
    # every statistic is symmetric in the imputations; summing in sorted
    # order makes the result bitwise independent of their ordering
    est = np.sort(est)
    se = np.sort(se)
    m = est.size
    point = float(est.mean())
    within = float(np.mean(se**2))
    between = float(est.var(ddof=1)) if m > 1 else 0.0
    total = within + (1.0 + 1.0 / m) * between
    gamma = (1.0 + 1.0 / m) * between / total if total > 0 else 0.0
    return PooledEstimate(
        point=point,
        within=within,
        between=between,
        total=total,
        se=math.sqrt(total),
        gamma=gamma,
        relative_efficiency=1.0 / (1.0 + gamma / m),
        m=m,
    )


def relative_efficiency(pooled: PooledEstimate, m: int | None = None) -> float:
    """Efficiency of the m-imputation estimator relative to m = infinity."""
    m = pooled.m if m is None else m
    return 1.0 / (1.0 + pooled.gamma / m)


# --- fit per imputation and pool ----------------------------------------------


@dataclass(frozen=True)
class ModelRequest:
    """Which model to run on each completed panel.

    ``exponential``/``logistic``/``segmented`` pool all sources' cells into
    one curve; ``mixed`` fits the shared curve with per-source deviations.
    """

    model: str
    segments: int = 1
    random_effects: RandomEffectsSpec | None = None
    logistic_first: bool = False


@dataclass
class ImputedFit:
    request: ModelRequest
    m: int
    seed: int
    pooled: dict[str, PooledEstimate]
    fits: list
    failed: tuple[int, ...]
    years: np.ndarray
    sources: tuple[str, ...]
    predictions: dict[str, np.ndarray]  # mean fitted log values per source
    imputed_mask: np.ndarray  # True where the input cell was missing
    monotonicity_violations: int

    @property
    def n_used(self) -> int:
        return self.m - len(self.failed)


def _fit_one(panel: Panel, request: ModelRequest, opts: SegmentedOptions | None):
    years = panel.years.astype(float)
    t0 = int(panel.first_year)
    if request.model == "mixed":
        return fit_mixed(
            panel,
            request.segments,
            request.random_effects or RandomEffectsSpec(),
            opts,
        )
    cells = ~np.isnan(panel.values)
    yy = np.repeat(years, panel.n_sources)[cells.ravel()]
    vv = panel.values.ravel()[cells.ravel()]
    if request.model == "exponential":
        return fit_exponential_xy(yy - t0, vv, t0)
    if request.model == "logistic":
        return fit_logistic_xy(yy - t0, vv, t0)
    if request.model == "segmented":
        o = opts or SegmentedOptions()
        if request.logistic_first:
            o = SegmentedOptions(**{**o.__dict__, "logistic_first": True})
        return fit_segmented_xy(yy, vv, request.segments, t0, o)
    raise EmptyInputError(f"unknown model {request.model!r}")


def params_with_se(fit) -> dict[str, tuple[float, float]]:
    """Scalar parameters and their standard errors, uniformly named.

    Parameters without a sampling SE in this fit (the residual variance of
    least-squares fits) report SE 0 so pooling still tracks their
    between-imputation spread.
    """
    out: dict[str, tuple[float, float]] = {}
    if isinstance(fit, GrowthFit):
        out["intercept"] = (fit.intercept, fit.se.get("intercept", 0.0))
        out["rate"] = (fit.rate, fit.se.get("rate", 0.0))
        if fit.log_capacity is not None:
            out["log_capacity"] = (fit.log_capacity, fit.se.get("log_capacity", 0.0))
        out["resid_var"] = (fit.resid_var, 0.0)
        return out
    if isinstance(fit, SegmentedFit):
        out["intercept"] = (fit.intercept, fit.se_intercept)
        for j, (b, se) in enumerate(zip(fit.slopes, fit.se_slopes), start=1):
            out[f"slope_{j}"] = (float(b), float(se))
        for j, (a, se) in enumerate(zip(fit.breakpoints, fit.se_breakpoints), start=1):
            out[f"breakpoint_{j}"] = (float(a), float(se))
        out["resid_var"] = (fit.resid_var, 0.0)
        return out
    if isinstance(fit, MixedFit):
        fx = fit.fixed
        out["intercept"] = (fx.intercept, fx.se_intercept)
        for j, (b, se) in enumerate(zip(fx.slopes, fx.se_slopes), start=1):
            out[f"slope_{j}"] = (float(b), float(se))
        for j, (a, se) in enumerate(zip(fx.breakpoints, fx.se_breakpoints), start=1):
            out[f"breakpoint_{j}"] = (float(a), float(se))
        for name, sd, se in zip(fit.re_names, fit.re_sd, fit.re_sd_se):
            out[f"re_sd_{name}"] = (float(sd), float(se))
        if fit.corr_intercept_slope1 is not None:
            out["corr_intercept_slope1"] = (
                fit.corr_intercept_slope1,
                fit.corr_se if fit.corr_se is not None else 0.0,
            )
        out["resid_var"] = (fit.resid_var, 0.0)
        return out
    raise EmptyInputError(f"cannot extract parameters from {type(fit).__name__}")


def _predict_sources(fit, years, sources) -> dict[str, np.ndarray]:
    if isinstance(fit, MixedFit):
        return {sid: group_curve(fit, sid, years) for sid in sources}
    if isinstance(fit, SegmentedFit):
        curve = predict_segmented(fit, years)
    else:
        curve = predict(fit, np.asarray(years, dtype=float) - fit.t0)
    return {sid: np.array(curve) for sid in sources}


def _count_monotonicity_violations(imp: ImputationSet, mask: np.ndarray) -> int:
    count = 0
    for p in imp.panels:
        v = p.values
        drops = v[1:, :] < v[:-1, :]
        touched = mask[1:, :] | mask[:-1, :]
        count += int(np.sum(drops & touched))
    return count


def fit_with_imputation(
    panel: Panel,
    request: ModelRequest,
    m: int = 5,
    seed: int = DEFAULT_SEED,
    burnin: int = 200,
    gap: int = 100,
    opts: SegmentedOptions | None = None,
) -> ImputedFit:
    """Impute, fit the requested model per completed panel, pool everything.

    Individual imputation fits may fail; the result pools the converged
    ones as long as at least ceil(m/2) succeed, recording which failed.
    Warm start: completed panels after the first reuse its fitted
    breakpoints as the refinement start (same data distribution, large
    saving on the knot search).
    """
    imp = impute_mcmc(panel, m=m, seed=seed, burnin=burnin, gap=gap)
    mask = panel.missing_mask

    fits: list = []
    failed: list[int] = []
    warm: SegmentedOptions | None = None
    for i, completed in enumerate(imp.panels):
        use = opts
        if warm is not None and request.model in ("segmented", "mixed"):
            use = warm
        try:
            fit = _fit_one(completed, request, use)
        except GrowthSegError:
            fits.append(None)
            failed.append(i)
            continue
        fits.append(fit)
        if warm is None and request.model in ("segmented", "mixed") and request.segments > 1:
            bp = fit.breakpoints if isinstance(fit, SegmentedFit) else fit.fixed.breakpoints
            base = opts or SegmentedOptions()
            warm = SegmentedOptions(
                **{**base.__dict__, "init_breakpoints": tuple(float(a) for a in bp)}
            )

    ok = [f for f in fits if f is not None]
    if len(ok) < math.ceil(m / 2):
        raise NoConvergenceError(
            f"only {len(ok)} of {m} imputation fits converged (imputations "
            f"{tuple(failed)} failed)"
        )

    by_param: dict[str, list[tuple[float, float]]] = {}
    for f in ok:
        for name, (v, se) in params_with_se(f).items():
            by_param.setdefault(name, []).append((v, se))
    pooled = {}
    for name, pairs in by_param.items():
        if len(pairs) == len(ok):  # pool only parameters present in every fit
            pooled[name] = pool([v for v, _ in pairs], [s for _, s in pairs])

    years = panel.years
    curves = [_predict_sources(f, years, panel.sources) for f in ok]
    predictions = {
        sid: np.mean([c[sid] for c in curves], axis=0) for sid in panel.sources
    }

    return ImputedFit(
        request=request,
        m=m,
        seed=seed,
        pooled=pooled,
        fits=fits,
        failed=tuple(failed),
        years=years,
        sources=panel.sources,
        predictions=predictions,
        imputed_mask=mask,
        monotonicity_violations=_count_monotonicity_violations(imp, mask),
    )
