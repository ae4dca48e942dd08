"""Continuity-constrained piecewise log-linear growth fitting.

The mean of log totals over calendar years is a continuous broken line: one
slope per time segment, joined at estimated breakpoint years. With
breakpoints a_1 < ... < a_{J-1} (a_0 being the anchor year t0) the value at
year t is

    intercept + sum_k slope_k * (min(t, a_k) - a_{k-1}, clamped at 0)

so every observation's design row depends on the breakpoints only through
the clamped differences above. Given the breakpoints the model is linear
and solved by least squares; the breakpoints themselves are found by a
two-stage search:

1. candidate generation -- an exhaustive coarse grid over integer-year
   tuples (stride 5) when the tuple count is tractable, always backed by a
   dynamic program over optimal per-segment straight lines (exact for the
   discontinuous relaxation) and by greedy forward knot insertion on the
   continuous model;
2. refinement -- cyclic per-breakpoint golden-section line search on the
   residual sum of squares, each move limited to +-5 years and to windows
   that keep every segment at its minimum observation count, iterated until
   the largest movement in a sweep drops below ``refine_tol`` years, then a
   full-range relocation pass that lets a knot stuck in the wrong basin
   jump anywhere the fit strictly improves.

Every stage is deterministic; grid ties break toward the lexicographically
smallest tuple. Fractional breakpoint years are allowed in refinement.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegenerateDesignError,
    InfeasibleSegmentationError,
    NoConvergenceError,
    UnorderedBreakpointsError,
)
from .growth import (
    GrowthFit,
    _gauss_newton_logistic,
    fit_exponential_xy,
    gaussian_loglik,
    growth_rate,
    logistic_log_mean,
)
from .series import LOG_CUMULATIVE, AnnualSeries, KindMismatchError

MIN_SEGMENT_LEN = 5


@dataclass(frozen=True)
class SegmentedOptions:
    """Search controls; the defaults match the documented algorithm."""

    min_segment_len: int = MIN_SEGMENT_LEN
    grid_stride: int = 5
    max_grid_tuples: int = 100_000
    refine_tol: float = 0.01  # sweep stops when no breakpoint moved further
    golden_tol: float = 1e-4  # 1D search resolution in years
    max_sweeps: int = 60
    init_breakpoints: tuple[float, ...] | None = None
    keep_trace: bool = False
    logistic_first: bool = False


@dataclass(frozen=True)
class SegmentedFit:
    """Continuous piecewise-linear fit on the log scale."""

    n_segments: int
    t0: int
    intercept: float
    slopes: np.ndarray
    breakpoints: np.ndarray  # calendar years, length n_segments - 1
    se_intercept: float
    se_slopes: np.ndarray
    se_breakpoints: np.ndarray
    resid_var: float  # ML convention (divisor n)
    loglik: float
    n_obs: int
    converged: bool
    residuals: np.ndarray = field(repr=False)
    years: np.ndarray = field(repr=False)
    search_trace: tuple | None = None
    saturating_first: GrowthFit | None = None  # set by the logistic-first variant
    cov_params: np.ndarray | None = field(default=None, repr=False)  # (b0, slopes)

    score_convention = "mse"

    @property
    def sse(self) -> float:
        return self.resid_var * self.n_obs

    @property
    def n_params(self) -> int:
        """Mean-function parameters: intercept + slopes + breakpoints."""
        extra = 1 if self.saturating_first is not None else 0
        return 1 + self.n_segments + (self.n_segments - 1) + extra

    @property
    def n_params_loglik(self) -> int:
        """Parameter count for likelihood-based scoring (adds sigma^2)."""
        return self.n_params + 1


def segmented_design(years, breakpoints, t0: float) -> np.ndarray:
    """Clamped-difference basis; row t, column k = min(t, a_k) - a_{k-1} >= 0.

    ``years`` may be calendar years or any values on the same scale as the
    breakpoints. Output shape is (len(years), len(breakpoints) + 1).
    """
    years = np.atleast_1d(np.asarray(years, dtype=float))
    bp = np.asarray(breakpoints, dtype=float)
    if bp.size and np.any(np.diff(bp) <= 0):
        raise UnorderedBreakpointsError(f"breakpoints must increase: {bp}")
    lowers = np.concatenate([[t0], bp])
    uppers = np.concatenate([bp, [np.inf]])
    cols = np.minimum(years[:, None], uppers[None, :]) - lowers[None, :]
    return np.maximum(cols, 0.0)


def _solve_given_breakpoints(years, y, breakpoints, t0):
    """Least squares for (intercept, slopes) at fixed knots; returns coef, sse."""
    X = np.column_stack([np.ones(years.size), segmented_design(years, breakpoints, t0)])
    coef, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return coef, float(resid @ resid), X, resid


def _sse_at(years, y, breakpoints, t0):
    X = np.column_stack([np.ones(years.size), segmented_design(years, breakpoints, t0)])
    xtx = X.T @ X
    xty = X.T @ y
    try:
        coef = np.linalg.solve(xtx, xty)
    except np.linalg.LinAlgError:
        coef = np.linalg.lstsq(X, y, rcond=None)[0]
    resid = y - X @ coef
    return float(resid @ resid)


def _golden_min(f, lo, hi, tol):
    """Golden-section minimizer on [lo, hi]; deterministic, derivative-free."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while (b - a) > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = c if fc <= fd else d
    return x, min(fc, fd)


# --- stage 1: candidate breakpoints ----------------------------------------


def _segment_counts(sorted_years, breakpoints, t0):
    edges = np.concatenate([[-np.inf], np.asarray(breakpoints, dtype=float), [np.inf]])
    idx = np.searchsorted(sorted_years, edges, side="right")
    return np.diff(idx)


def _grid_years(years_sorted, stride, min_len):
    # integer-year knots that can keep min_len rows on both sides, thinned
    lo = years_sorted[min_len - 1]
    hi = years_sorted[-min_len]
    inner = np.unique(years_sorted)
    ok = inner[(inner >= lo) & (inner < hi)]
    return ok[::stride]


def _enumerate_grid(years_sorted, y, grid, J, t0, min_len, cap):
    """Exhaustive search over stride-thinned integer-year tuples.

    Returns (best_tuple, best_sse, n_evaluated) or None when the tuple count
    exceeds the cap. Ties keep the lexicographically earliest tuple
    (combinations are generated in lexicographic order and only strict
    improvements replace the incumbent).
    """
    k = J - 1
    n_tuples = math.comb(len(grid), k) if len(grid) >= k else 0
    if n_tuples == 0 or n_tuples > cap:
        return None
    best = None
    best_sse = np.inf
    evaluated = 0
    for combo in itertools.combinations(grid, k):
        counts = _segment_counts(years_sorted, combo, t0)
        if counts.min() < min_len:
            continue
        evaluated += 1
        sse = _sse_at(years_sorted, y, np.asarray(combo, dtype=float), t0)
        if sse < best_sse:
            best_sse = sse
            best = combo
    if best is None:
        return None
    return np.asarray(best, dtype=float), best_sse, evaluated


def _dp_candidate(years_sorted, y, J, min_len):
    """Optimal partition into J straight-line segments (continuity relaxed).

    Dynamic program over year boundaries with O(1) per-interval line-fit
    cost from prefix sums. Returns the end year of each interior segment.
    """
    t = years_sorted
    # segment boundaries may only fall between distinct years
    change = np.flatnonzero(np.diff(t) > 0)
    ends = np.concatenate([change, [t.size - 1]])  # row index of each year's last row
    starts = np.concatenate([[0], change + 1])
    m = ends.size  # number of distinct years
    if m < J:
        raise InfeasibleSegmentationError(f"{m} distinct years cannot host {J} segments")

    p1 = np.concatenate([[0.0], np.cumsum(np.ones_like(y))])
    px = np.concatenate([[0.0], np.cumsum(t)])
    py = np.concatenate([[0.0], np.cumsum(y)])
    pxx = np.concatenate([[0.0], np.cumsum(t * t)])
    pxy = np.concatenate([[0.0], np.cumsum(t * y)])
    pyy = np.concatenate([[0.0], np.cumsum(y * y)])

    lo = starts[:, None]  # candidate segment start rows
    hi = ends[None, :]  # candidate segment end rows
    n = p1[hi + 1] - p1[lo]
    sx = px[hi + 1] - px[lo]
    sy = py[hi + 1] - py[lo]
    sxx = pxx[hi + 1] - pxx[lo]
    sxy = pxy[hi + 1] - pxy[lo]
    syy = pyy[hi + 1] - pyy[lo]
    with np.errstate(divide="ignore", invalid="ignore"):
        sxx_c = sxx - sx * sx / n
        sxy_c = sxy - sx * sy / n
        syy_c = syy - sy * sy / n
        gain = np.where(sxx_c > 1e-12, sxy_c * sxy_c / sxx_c, 0.0)
        cost = syy_c - gain
    cost = np.where((n >= min_len) & (hi >= lo), cost, np.inf)
    cost = np.maximum(cost, 0.0)

    # dp[k][e]: best cost of splitting year blocks 0..e into k+1 segments,
    # where segment k+1 starts at some block s >= 1 and blocks 0..s-1 hold
    # the previous segments
    dp = np.full((J, m), np.inf)
    back = np.zeros((J, m), dtype=int)
    dp[0] = cost[0]
    for k in range(1, J):
        totals = dp[k - 1, :-1, None] + cost[1:, :]  # rows: s-1, cols: e
        dp[k] = np.min(totals, axis=0)
        back[k] = np.argmin(totals, axis=0)
    if not np.isfinite(dp[J - 1, m - 1]):
        raise InfeasibleSegmentationError(
            f"cannot place {J} segments of >= {min_len} observations"
        )
    cuts = []
    e = m - 1
    for k in range(J - 1, 0, -1):
        s = back[k, e]  # previous segments end at block s
        cuts.append(t[ends[s]])
        e = s
    return np.array(sorted(cuts), dtype=float)


# --- stage 2: refinement -----------------------------------------------------


def _feasible_window(years_sorted, bp, j, t0, min_len, span):
    """Interval for breakpoint j keeping adjacent segments at min_len rows."""
    a = bp[j]
    left = bp[j - 1] if j > 0 else -np.inf
    right = bp[j + 1] if j + 1 < bp.size else np.inf
    i_left = np.searchsorted(years_sorted, left, side="right")
    i_right = (
        np.searchsorted(years_sorted, right, side="right")
        if np.isfinite(right)
        else years_sorted.size
    )
    if i_right - i_left < 2 * min_len:
        return None
    lo_year = years_sorted[i_left + min_len - 1]
    hi_year = years_sorted[i_right - min_len] - 1e-9
    lo = max(lo_year, a - span)
    hi = min(hi_year, a + span)
    if lo >= hi:
        return None
    return lo, hi


def _refine(years_sorted, y, bp, t0, opts: SegmentedOptions):
    """Cyclic golden-section sweeps; returns (breakpoints, sse, converged)."""
    bp = np.array(bp, dtype=float)
    sse = _sse_at(years_sorted, y, bp, t0)
    converged = False
    for _ in range(opts.max_sweeps):
        max_move = 0.0
        for j in range(bp.size):
            window = _feasible_window(
                years_sorted, bp, j, t0, opts.min_segment_len, span=5.0
            )
            if window is None:
                continue

            def sse_j(a, j=j):
                trial = bp.copy()
                trial[j] = a
                return _sse_at(years_sorted, y, trial, t0)

            a_new, sse_new = _golden_min(sse_j, window[0], window[1], opts.golden_tol)
            if sse_new < sse:
                max_move = max(max_move, abs(a_new - bp[j]))
                bp[j] = a_new
                sse = sse_new
        if max_move < opts.refine_tol:
            converged = True
            break
    return bp, sse, converged


def _greedy_candidate(years_sorted, y, J, t0, opts: SegmentedOptions):
    """Forward knot insertion on the continuous model.

    Grows the knot set one at a time, each time scanning every feasible
    integer year for the insertion that most reduces the residual sum of
    squares, then re-polishing. Unlike the dynamic program this sees the
    continuity constraint at every step, which matters when a shallow
    feature is only worth keeping because the line must stay connected.
    """
    unique_years = np.unique(years_sorted)
    bp = np.zeros(0)
    for _ in range(J - 1):
        best_a, best_sse = None, np.inf
        for a in unique_years:
            trial = np.sort(np.append(bp, float(a)))
            if np.any(np.diff(trial) <= 0):
                continue
            counts = _segment_counts(years_sorted, trial, t0)
            if counts.min() < opts.min_segment_len:
                continue
            cand = _sse_at(years_sorted, y, trial, t0)
            if cand < best_sse:
                best_sse = cand
                best_a = float(a)
        if best_a is None:
            raise InfeasibleSegmentationError(
                f"cannot insert knot {bp.size + 1} at minimum segment length"
            )
        bp = np.sort(np.append(bp, best_a))
        bp, _, _ = _refine(years_sorted, y, bp, t0, opts)
    return bp


def _relocate(years_sorted, y, bp, sse, t0, opts: SegmentedOptions, max_rounds=8):
    """Escape one-knot-at-a-time local minima by full-range relocation.

    A knot left in the wrong basin by the candidate stage cannot cross its
    neighbors under the local sweeps, so scan every feasible integer year
    for each knot (others fixed, removal allowed implicitly by moving next
    to a neighbor), keep any strict improvement, then re-polish. Purely
    deterministic.
    """
    bp = np.array(bp, dtype=float)
    unique_years = np.unique(years_sorted)
    for _ in range(max_rounds):
        improved = False
        for j in range(bp.size):
            others = np.delete(bp, j)
            best_a, best_sse = bp[j], sse
            for a in unique_years:
                trial = np.sort(np.insert(others, 0, float(a)))
                if np.any(np.diff(trial) <= 0):
                    continue
                counts = _segment_counts(years_sorted, trial, t0)
                if counts.min() < opts.min_segment_len:
                    continue
                cand = _sse_at(years_sorted, y, trial, t0)
                if cand < best_sse - 1e-12:
                    best_sse = cand
                    best_a = float(a)
            if best_a != bp[j]:
                bp = np.sort(np.concatenate([others, [best_a]]))
                sse = best_sse
                improved = True
        if not improved:
            break
        bp, sse, _ = _refine(years_sorted, y, bp, t0, opts)
    return bp, sse


# --- standard errors ---------------------------------------------------------


def _breakpoint_ses(years, y, bp, t0, sigma2):
    """Curvature-based SEs from the profiled SSE over the breakpoints.

    Central second differences of SSE(a)/2*sigma2 with slopes re-solved at
    every probe; the usual local quadratic approximation, reported as such.
    """
    k = bp.size
    if k == 0:
        return np.zeros(0)
    h = 0.25

    def f(a):
        return _sse_at(years, y, a, t0) / (2.0 * max(sigma2, 1e-300))

    H = np.zeros((k, k))
    f0 = f(bp)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h
        fpp = f(bp + ei)
        fmm = f(bp - ei)
        H[i, i] = (fpp - 2.0 * f0 + fmm) / h**2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h
            fpj = f(bp + ei + ej)
            fmj = f(bp - ei - ej)
            fpm = f(bp + ei - ej)
            fmp = f(bp - ei + ej)
            H[i, j] = H[j, i] = (fpj + fmj - fpm - fmp) / (4.0 * h**2)
    try:
        cov = np.linalg.inv(H)
        var = np.diag(cov)
        if np.any(var <= 0):
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        var = np.full(k, np.nan)
        with np.errstate(divide="ignore"):
            diag = np.diag(H)
            var = np.where(diag > 0, 1.0 / diag, np.nan)
    return np.sqrt(var)


# --- fitting -----------------------------------------------------------------


def fit_segmented_xy(
    years,
    y,
    n_segments: int,
    t0: int,
    opts: SegmentedOptions | None = None,
) -> SegmentedFit:
    """Fit the broken-line model to (year, log value) pairs.

    Accepts repeated years (stacked sources). Rows are sorted by year
    internally. ``n_segments`` = 1 reduces to plain linear regression and
    matches the exponential fit exactly.
    """
    opts = opts or SegmentedOptions()
    years = np.asarray(years, dtype=float)
    y = np.asarray(y, dtype=float)
    order = np.argsort(years, kind="stable")
    years, y = years[order], y[order]
    n = y.size
    J = n_segments
    if J < 1:
        raise InfeasibleSegmentationError("need at least one segment")
    if n < J * opts.min_segment_len + 1:
        raise InfeasibleSegmentationError(
            f"{n} observations cannot support {J} segments of "
            f">= {opts.min_segment_len} (need {J * opts.min_segment_len + 1})"
        )
    if np.ptp(years) == 0:
        raise DegenerateDesignError("all years identical")

    trace = []
    if J == 1:
        bp = np.zeros(0)
        converged = True
    elif opts.init_breakpoints is not None:
        bp0 = np.asarray(opts.init_breakpoints, dtype=float)
        if bp0.size != J - 1:
            raise UnorderedBreakpointsError(
                f"expected {J - 1} initial breakpoints, got {bp0.size}"
            )
        bp, _, converged = _refine(years, y, bp0, t0, opts)
        trace.append(("init", tuple(bp0), None))
    else:
        candidates = []
        grid = _grid_years(years, opts.grid_stride, opts.min_segment_len)
        got = _enumerate_grid(
            years, y, grid, J, t0, opts.min_segment_len, opts.max_grid_tuples
        )
        if got is not None:
            candidates.append(got[0])
            trace.append(("grid", tuple(got[0]), got[1]))
        dp_bp = _dp_candidate(years, y, J, opts.min_segment_len)
        candidates.append(dp_bp)
        trace.append(("dp", tuple(dp_bp), None))
        try:
            # greedy insertion can corner itself near the feasibility limit;
            # the dynamic program above is feasibility-complete, so skip it
            greedy_bp = _greedy_candidate(years, y, J, t0, opts)
        except InfeasibleSegmentationError:
            greedy_bp = None
        if greedy_bp is not None:
            candidates.append(greedy_bp)
            trace.append(("greedy", tuple(greedy_bp), None))

        best = None
        for cand in candidates:
            refined, sse, conv = _refine(years, y, cand, t0, opts)
            key = (sse, tuple(refined))
            if best is None or key < best[0]:
                best = (key, refined, conv)
        bp, converged = best[1], best[2]
        if not converged:
            raise NoConvergenceError("breakpoint refinement did not settle")
        bp, _ = _relocate(years, y, bp, best[0][0], t0, opts)
        if opts.keep_trace:
            trace.append(("relocated", tuple(bp), None))

    coef, sse, X, resid = _solve_given_breakpoints(years, y, bp, t0)
    sigma2 = sse / n
    try:
        cov_lin = np.linalg.inv(X.T @ X) * sigma2
        se_lin = np.sqrt(np.maximum(np.diag(cov_lin), 0.0))
    except np.linalg.LinAlgError:
        cov_lin = None
        se_lin = np.full(J + 1, np.nan)
    se_bp = _breakpoint_ses(years, y, bp, t0, sigma2) if J > 1 else np.zeros(0)

    fit = SegmentedFit(
        n_segments=J,
        t0=t0,
        intercept=float(coef[0]),
        slopes=coef[1:].copy(),
        breakpoints=bp.copy(),
        se_intercept=float(se_lin[0]),
        se_slopes=se_lin[1:].copy(),
        se_breakpoints=se_bp,
        resid_var=sigma2,
        loglik=gaussian_loglik(sse, n),
        n_obs=n,
        converged=converged,
        residuals=resid,
        years=years.copy(),
        search_trace=tuple(trace) if opts.keep_trace else None,
        cov_params=cov_lin,
    )
    if opts.logistic_first and J > 1:
        fit = _attach_saturating_first(fit, years, y, opts)
    return fit


def fit_segmented(
    s: AnnualSeries, n_segments: int, opts: SegmentedOptions | None = None
) -> SegmentedFit:
    if s.kind != LOG_CUMULATIVE:
        raise KindMismatchError(f"expected log_cumulative series, got {s.kind}")
    return fit_segmented_xy(s.years, s.values, n_segments, s.start_year, opts)


def _attach_saturating_first(fit: SegmentedFit, years, y, opts) -> SegmentedFit:
    """Swap the first straight segment for a saturating curve.

    Composition, not joint optimization: the saturating parameters are fitted
    on the first segment's rows only, later slopes are re-solved by least
    squares anchored at the curve's value at the first knot (continuity by
    construction).
    """
    a1 = fit.breakpoints[0]
    in_first = years <= a1
    if in_first.sum() < 4:
        raise InfeasibleSegmentationError("first segment too short for a saturating fit")
    t_first = years[in_first] - fit.t0
    pre = fit_exponential_xy(t_first, y[in_first], fit.t0)
    top = float(np.max(y[in_first]))
    best = None
    for bump in (0.5, 1.0, 2.0):
        try:
            theta, sse, ok = _gauss_newton_logistic(
                t_first, y[in_first], (float(y[in_first][0]), max(pre.rate, 1e-4), top + bump)
            )
        except Exception:
            continue
        if ok and (best is None or sse < best[1]):
            best = (theta, sse)
    if best is None:
        raise NoConvergenceError("saturating first segment failed to fit")
    theta, sse_first = best
    sat = GrowthFit(
        model="logistic",
        t0=fit.t0,
        intercept=float(theta[0]),
        rate=float(theta[1]),
        log_capacity=float(theta[2]),
        resid_var=sse_first / max(int(in_first.sum()), 1),
        se={},
        n_obs=int(in_first.sum()),
        loglik=gaussian_loglik(sse_first, int(in_first.sum())),
        residuals=y[in_first] - logistic_log_mean(t_first, *theta),
    )
    anchor = float(logistic_log_mean(a1 - fit.t0, *theta))
    rest = ~in_first
    basis = segmented_design(years[rest], fit.breakpoints, fit.t0)[:, 1:]
    target = y[rest] - anchor
    coef, _, _, _ = np.linalg.lstsq(basis, target, rcond=None)
    resid_rest = target - basis @ coef
    slopes = np.concatenate([[theta[1]], coef])
    fitted_first = logistic_log_mean(years[in_first] - fit.t0, *theta)
    residuals = np.concatenate([y[in_first] - fitted_first, resid_rest])
    sse = float(residuals @ residuals)
    return replace(
        fit,
        slopes=slopes,
        resid_var=sse / fit.n_obs,
        loglik=gaussian_loglik(sse, fit.n_obs),
        residuals=residuals,
        saturating_first=sat,
    )


# --- prediction and reporting -------------------------------------------------


def predict_segmented(fit: SegmentedFit, year) -> np.ndarray | float:
    """Model value at calendar year(s); continuous across the knots."""
    scalar = np.isscalar(year)
    year = np.atleast_1d(np.asarray(year, dtype=float))
    if fit.saturating_first is None:
        basis = segmented_design(year, fit.breakpoints, fit.t0)
        out = fit.intercept + basis @ fit.slopes
    else:
        sat = fit.saturating_first
        a1 = fit.breakpoints[0]
        out = np.empty(year.size)
        first = year <= a1
        out[first] = logistic_log_mean(
            year[first] - fit.t0, sat.intercept, sat.rate, sat.log_capacity
        )
        anchor = float(
            logistic_log_mean(a1 - fit.t0, sat.intercept, sat.rate, sat.log_capacity)
        )
        basis = segmented_design(year[~first], fit.breakpoints, fit.t0)[:, 1:]
        out[~first] = anchor + basis @ fit.slopes[1:]
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class SegmentRate:
    """Growth summary for one segment.

    ``doubling`` is ln 2 / slope (exact given growth = e^slope - 1);
    ``doubling_if_slope_is_rate`` treats the slope itself as the annual
    fraction, the other convention seen in print. Either is None when the
    slope is not positive, with ``note`` saying why.
    """

    segment: int
    slope: float
    growth: float
    doubling: float | None
    doubling_if_slope_is_rate: float | None
    note: str | None = None


def segment_rates(fit: SegmentedFit) -> list[SegmentRate]:
    out = []
    for j, b in enumerate(fit.slopes, start=1):
        b = float(b)
        g = growth_rate(b)
        note = None
        if j == 1 and fit.saturating_first is not None:
            note = "saturating segment; rate is the curve's growth constant"
        if b > 0:
            k = math.log(2.0) / b
            k_alt = math.log(2.0) / math.log1p(b)
        else:
            k = k_alt = None
            note = "non-positive slope; doubling time undefined"
        out.append(SegmentRate(j, b, g, k, k_alt, note))
    return out


def residual_lag1_autocorr(fit) -> float | None:
    """Pearson correlation of consecutive residuals; None when degenerate."""
    e = np.asarray(fit.residuals, dtype=float)
    if e.size < 3:
        return None
    x, z = e[:-1], e[1:]
    sx, sz = x.std(), z.std()
    if sx == 0 or sz == 0:
        return None
    return float(np.corrcoef(x, z)[0, 1])
