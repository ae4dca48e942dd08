"""Single-series growth models on the log scale.

Two mean functions for log totals ``ln y(t)`` with t in years since an
anchor year t0:

* exponential (unrestricted): ``b0 + b1 * t``
* logistic (saturating):      ``K + b0 - ln((e^K - e^b0) e^(-b1 t) + e^b0)``

The logistic curve starts at ``b0`` at t=0 and levels off at the log
capacity ``K``. Both are fitted by least squares on log values; the
residual variance uses the maximum-likelihood divisor n (not n - p) so the
reported log-likelihood and any BIC built from it are consistent. Standard
errors therefore also use the ML variance; multiply by sqrt(n / (n - p))
for the unbiased convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapacityCollapseError,
    DegenerateDesignError,
    NoConvergenceError,
    NonPositiveGrowthError,
)
from .series import LOG_CUMULATIVE, AnnualSeries, KindMismatchError

EXPONENTIAL = "exponential"
LOGISTIC = "logistic"

_LOG_2PI = math.log(2.0 * math.pi)
_VAR_FLOOR = 1e-300  # keeps log-likelihood finite on noiseless data


@dataclass(frozen=True)
class GrowthFit:
    """Fitted growth model.

    ``intercept`` is the log volume at t=0, ``rate`` the per-year growth
    constant, ``log_capacity`` the log saturation level (logistic only,
    None otherwise). ``se`` maps parameter names to standard errors.
    """

    model: str
    t0: int
    intercept: float
    rate: float
    log_capacity: float | None
    resid_var: float
    se: dict[str, float]
    n_obs: int
    loglik: float
    residuals: np.ndarray = field(repr=False)
    converged: bool = True
    cov_params: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.resid_var < 0:
            raise ValueError("residual variance cannot be negative")
        if self.model == LOGISTIC and self.log_capacity is not None:
            if self.log_capacity <= self.intercept:
                raise CapacityCollapseError(
                    "log capacity must exceed the log initial volume"
                )

    score_convention = "mse"

    @property
    def n_params(self) -> int:
        """Mean-function parameters (residual variance not counted)."""
        return 2 if self.model == EXPONENTIAL else 3

    @property
    def n_params_loglik(self) -> int:
        """Parameter count for likelihood-based scoring (adds sigma^2)."""
        return self.n_params + 1

    @property
    def sse(self) -> float:
        return self.resid_var * self.n_obs


def gaussian_loglik(sse: float, n: int) -> float:
    """Maximized Gaussian log-likelihood with sigma^2 = sse / n."""
    s2 = max(sse / n, _VAR_FLOOR)
    return -0.5 * n * (_LOG_2PI + math.log(s2) + 1.0)


def _check_log_series(s: AnnualSeries, min_n: int):
    if s.kind != LOG_CUMULATIVE:
        raise KindMismatchError(f"expected log_cumulative series, got {s.kind}")
    if len(s) < min_n:
        raise DegenerateDesignError(f"need at least {min_n} observations, have {len(s)}")


def fit_exponential_xy(t: np.ndarray, y: np.ndarray, t0: int) -> GrowthFit:
    """Ordinary least squares of log values on time offsets."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.size
    if n < 3:
        raise DegenerateDesignError("need at least 3 observations")
    if np.ptp(t) == 0:
        raise DegenerateDesignError("all time points identical")
    X = np.column_stack([np.ones(n), t])
    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    sse = float(resid @ resid)
    sigma2 = sse / n
    cov = np.linalg.inv(X.T @ X) * sigma2
    se = np.sqrt(np.diag(cov))
    return GrowthFit(
        model=EXPONENTIAL,
        t0=t0,
        intercept=float(coef[0]),
        rate=float(coef[1]),
        log_capacity=None,
        resid_var=sigma2,
        se={"intercept": float(se[0]), "rate": float(se[1])},
        n_obs=n,
        loglik=gaussian_loglik(sse, n),
        residuals=resid,
        cov_params=cov,
    )


def fit_exponential(s: AnnualSeries, t0: int | None = None) -> GrowthFit:
    _check_log_series(s, 3)
    t0 = s.start_year if t0 is None else t0
    return fit_exponential_xy(s.years - t0, s.values, t0)


# --- logistic ---------------------------------------------------------------


def logistic_log_mean(t, intercept: float, rate: float, log_capacity: float):
    """Log-scale logistic mean; equals intercept at t=0, -> log_capacity."""
    t = np.asarray(t, dtype=float)
    with np.errstate(over="ignore"):  # a runaway capacity probe is rejected upstream
        a = np.exp(log_capacity) - np.exp(intercept)
        denom = a * np.exp(-rate * t) + np.exp(intercept)
        return log_capacity + intercept - np.log(denom)


def _logistic_jacobian(t, b0, b1, K):
    with np.errstate(over="ignore", invalid="ignore"):
        eK = np.exp(K)
        eb0 = np.exp(b0)
        decay = np.exp(-b1 * t)
        denom = (eK - eb0) * decay + eb0
        d_b0 = 1.0 - eb0 * (1.0 - decay) / denom
        d_b1 = t * (eK - eb0) * decay / denom
        d_K = 1.0 - eK * decay / denom
    return np.column_stack([d_b0, d_b1, d_K])


def _gauss_newton_logistic(t, y, start, max_iter=200, tol=1e-12):
    """Damped Gauss-Newton on (b0, b1, K); returns (params, sse, converged)."""
    theta = np.asarray(start, dtype=float)

    def sse_of(th):
        mu = logistic_log_mean(t, th[0], th[1], th[2])
        r = y - mu
        return float(r @ r), r

    sse, resid = sse_of(theta)
    lam = 1e-3
    converged = False
    for _ in range(max_iter):
        if theta[2] - theta[0] < 1e-10:
            raise CapacityCollapseError("capacity collapsed onto the initial volume")
        J = _logistic_jacobian(t, *theta)
        g = J.T @ resid
        H = J.T @ J
        accepted = False
        for _ in range(40):
            try:
                step = np.linalg.solve(H + lam * np.diag(np.diag(H)) + 1e-14 * np.eye(3), g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            cand = theta + step
            if cand[2] - cand[0] < 1e-10:
                # shrink toward the boundary instead of jumping across it
                lam *= 10.0
                continue
            cand_sse, cand_resid = sse_of(cand)
            if np.isfinite(cand_sse) and cand_sse <= sse:
                rel_drop = (sse - cand_sse) / max(sse, 1e-300)
                theta, sse, resid = cand, cand_sse, cand_resid
                lam = max(lam / 3.0, 1e-12)
                accepted = True
                if rel_drop < tol or float(np.max(np.abs(step))) < 1e-12:
                    converged = True
                break
            lam *= 10.0
        if not accepted or converged:
            converged = converged or accepted
            break
    else:
        converged = True  # ran out of iterations with steady improvement
    return theta, sse, converged


def fit_logistic(s: AnnualSeries, t0: int | None = None) -> GrowthFit:
    """Nonlinear least squares for the saturating model, multi-start in K.

    Starting values: intercept at the first observation, rate from an
    exponential pre-fit, and log capacity at max(log y) + {0.5, 1, 2}.
    """
    _check_log_series(s, 4)
    t0 = s.start_year if t0 is None else t0
    return fit_logistic_xy(s.years - t0, s.values, t0)


def fit_logistic_xy(t: np.ndarray, y: np.ndarray, t0: int) -> GrowthFit:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.size < 4:
        raise DegenerateDesignError("need at least 4 observations")
    order = np.argsort(t, kind="stable")
    t, y = t[order], y[order]

    pre = fit_exponential_xy(t, y, t0)
    b0_start = float(y[0])
    b1_start = max(pre.rate, 1e-4)
    top = float(np.max(y))

    best = None
    collapses = 0
    for bump in (0.5, 1.0, 2.0):
        start = (b0_start, b1_start, top + bump)
        try:
            theta, sse, ok = _gauss_newton_logistic(t, y, start)
        except CapacityCollapseError:
            collapses += 1
            continue
        if not ok:
            continue
        if best is None or sse < best[1]:
            best = (theta, sse)
    if best is None:
        if collapses == 3:
            raise CapacityCollapseError(
                "capacity collapsed onto the initial volume from every start"
            )
        raise NoConvergenceError("logistic fit failed from every start")

    theta, sse = best
    if theta[2] - theta[0] < 1e-4:  # capacity pinned onto the initial volume
        raise CapacityCollapseError(
            f"capacity {theta[2]:.6f} collapsed onto initial volume {theta[0]:.6f}"
        )
    n = y.size
    sigma2 = sse / n
    J = _logistic_jacobian(t, *theta)
    cov = np.linalg.pinv(J.T @ J) * sigma2
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))
    resid = y - logistic_log_mean(t, *theta)
    return GrowthFit(
        model=LOGISTIC,
        t0=t0,
        intercept=float(theta[0]),
        rate=float(theta[1]),
        log_capacity=float(theta[2]),
        resid_var=sigma2,
        se={"intercept": float(se[0]), "rate": float(se[1]), "log_capacity": float(se[2])},
        n_obs=n,
        loglik=gaussian_loglik(sse, n),
        residuals=resid,
        cov_params=cov,
    )


def predict(fit: GrowthFit, t) -> np.ndarray | float:
    """Model-implied log magnitude at offset years t."""
    if fit.model == EXPONENTIAL:
        out = fit.intercept + fit.rate * np.asarray(t, dtype=float)
    else:
        out = logistic_log_mean(t, fit.intercept, fit.rate, fit.log_capacity)
    return float(out) if np.isscalar(t) else out


# --- rates ------------------------------------------------------------------


def growth_rate(rate: float) -> float:
    """Annual fractional change implied by the per-year growth constant."""
    return math.expm1(rate)


def doubling_time(g: float) -> float:
    """Years needed to double at annual growth fraction g > 0."""
    if g <= 0:
        raise NonPositiveGrowthError(f"growth rate must be positive, got {g}")
    return math.log(2.0) / math.log1p(g)
