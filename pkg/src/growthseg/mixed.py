"""Mixed-effects piecewise growth fitting for multi-source panels.

All sources share one broken-line mean (intercept, per-segment slopes,
breakpoint years); each source additionally carries random deviations for
the intercept and/or the per-segment slopes, optionally with a correlation
between the intercept and first-slope deviations. With the knots held
fixed this is a plain linear mixed model, so estimation is exact maximum
likelihood on the marginal Gaussian:

    y_j ~ N(X_j beta, Z_j D Z_j' + sigma2_eps I)   per source j

The per-source covariance is handled through the Woodbury identity (the
random-effect dimension is tiny), the covariance matrix D is parameterized
by log standard deviations and an inverse-tanh correlation so the search is
unconstrained, and the knots are updated in an outer loop that alternates
the mixed-model fit with the segmented refinement applied to the data minus
the predicted source deviations. Variance parameters hitting their lower
bound are reported with boundary flags rather than failing; with few
sources this is expected behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import (
    EmptyInputError,
    InfeasibleSegmentationError,
    KindMismatchError,
    NoConvergenceError,
    UnknownSourceError,
)
from .segmented import (
    SegmentedFit,
    SegmentedOptions,
    _breakpoint_ses,
    _refine,
    _relocate,
    fit_segmented_xy,
    segmented_design,
)
from .series import LOG_CUMULATIVE, Panel

_SD_FLOOR_LOG = -13.8  # exp(-13.8) ~ 1e-6; variances below ~1e-12 are boundary
_BOUNDARY_EPS = 0.51  # distance (in log units) to the bound that flags boundary


@dataclass(frozen=True)
class RandomEffectsSpec:
    """Which source-level deviations the model carries.

    ``random_slopes`` is either one flag for all segments or a per-segment
    tuple. ``scaling`` multiplies the random-effect design columns (one
    entry per active effect, intercept first); reported SDs then refer to
    the scaled columns. Default scaling is 1 everywhere, so SDs come back
    in natural units.
    """

    random_intercept: bool = True
    random_slopes: bool | tuple[bool, ...] = True
    intercept_slope1_covariance: bool = False
    scaling: tuple[float, ...] | None = None

    def resolve(self, n_segments: int) -> tuple[tuple[str, ...], np.ndarray]:
        """Active effect names and their design-column indices (0=intercept)."""
        if isinstance(self.random_slopes, bool):
            slope_flags = (self.random_slopes,) * n_segments
        else:
            slope_flags = tuple(self.random_slopes)
            if len(slope_flags) != n_segments:
                raise InfeasibleSegmentationError(
                    f"{len(slope_flags)} slope flags for {n_segments} segments"
                )
        names: list[str] = []
        cols: list[int] = []
        if self.random_intercept:
            names.append("intercept")
            cols.append(0)
        for j, active in enumerate(slope_flags, start=1):
            if active:
                names.append(f"slope{j}")
                cols.append(j)
        if self.intercept_slope1_covariance:
            if not (self.random_intercept and slope_flags and slope_flags[0]):
                raise EmptyInputError(
                    "intercept/slope1 covariance needs both effects random"
                )
        if self.scaling is not None and len(self.scaling) != len(names):
            raise EmptyInputError(
                f"scaling needs {len(names)} entries, got {len(self.scaling)}"
            )
        if self.scaling is not None and any(c <= 0 for c in self.scaling):
            raise EmptyInputError("scaling multipliers must be positive")
        return tuple(names), np.asarray(cols, dtype=int)


NO_RANDOM_EFFECTS = RandomEffectsSpec(random_intercept=False, random_slopes=False)


@dataclass(frozen=True)
class MixedFit:
    """Maximum-likelihood fit of the shared curve plus source deviations."""

    fixed: SegmentedFit
    spec: RandomEffectsSpec
    sources: tuple[str, ...]
    panel_years: np.ndarray = field(repr=False)
    re_names: tuple[str, ...] = ()
    re_sd: np.ndarray = field(default_factory=lambda: np.zeros(0))
    re_sd_se: np.ndarray = field(default_factory=lambda: np.zeros(0))
    corr_intercept_slope1: float | None = None
    corr_se: float | None = None
    resid_var: float = 0.0
    group_effects: dict[str, np.ndarray] = field(default_factory=dict)
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    loglik: float = 0.0
    n_total: int = 0
    n_groups: int = 0
    boundary: tuple[str, ...] = ()
    converged: bool = True

    score_convention = "loglik"

    @property
    def n_segments(self) -> int:
        return self.fixed.n_segments

    @property
    def n_obs(self) -> int:
        return self.n_total

    @property
    def n_params_loglik(self) -> int:
        """Everything the likelihood optimizes: mean, knots, variances."""
        J = self.fixed.n_segments
        p = 1 + J + (J - 1) + 1  # intercept, slopes, breakpoints, resid var
        p += len(self.re_names)
        if self.corr_intercept_slope1 is not None:
            p += 1
        return p


def _effect_factor(sds: np.ndarray, corr: float | None) -> np.ndarray:
    """Lower-triangular factor of D (diagonal except the optional 2x2 head)."""
    q = sds.size
    L = np.zeros((q, q))
    for i in range(q):
        L[i, i] = sds[i]
    if corr is not None and q >= 2:
        L[1, 0] = corr * sds[1]
        L[1, 1] = sds[1] * math.sqrt(max(0.0, 1.0 - corr**2))
    return L


class _Marginal:
    """Profile marginal likelihood machinery at fixed breakpoints."""

    def __init__(self, groups, breakpoints, t0, cols, scaling, use_corr):
        self.t0 = t0
        self.cols = cols
        self.scaling = scaling
        self.use_corr = use_corr
        self.X = []
        self.Z = []
        self.y = []
        for years, yv in groups:
            X = np.column_stack(
                [np.ones(years.size), segmented_design(years, breakpoints, t0)]
            )
            self.X.append(X)
            self.Z.append(X[:, cols] * scaling[None, :])
            self.y.append(yv)
        self.n_total = sum(y.size for y in self.y)
        self.q = cols.size

    def unpack(self, theta):
        sds = np.exp(theta[: self.q])
        k = self.q
        corr = None
        if self.use_corr:
            corr = math.tanh(theta[k])
            k += 1
        sigma2 = math.exp(theta[k])
        return sds, corr, sigma2

    def _group_solves(self, theta):
        """Per group: V^-1 applied to [X | y] plus log det V."""
        sds, corr, sigma2 = self.unpack(theta)
        L = _effect_factor(sds, corr)
        out = []
        logdet_total = 0.0
        for X, Z, y in zip(self.X, self.Z, self.y):
            W = Z @ L
            n = y.size
            B = np.column_stack([X, y])
            M = sigma2 * np.eye(self.q) + W.T @ W
            try:
                c = np.linalg.cholesky(M)
            except np.linalg.LinAlgError:
                return None
            WtB = W.T @ B
            sol = np.linalg.solve(c.T, np.linalg.solve(c, WtB))
            VinvB = (B - W @ sol) / sigma2
            logdet = (n - self.q) * math.log(sigma2) + 2.0 * np.sum(
                np.log(np.diag(c))
            )
            logdet_total += logdet
            out.append((VinvB[:, :-1], VinvB[:, -1], W, c))
        return out, logdet_total, sigma2, L

    def profile(self, theta):
        """(negative loglik, beta, aux) with beta solved by GLS."""
        solved = self._group_solves(theta)
        if solved is None:
            return np.inf, None, None
        parts, logdet, sigma2, L = solved
        p = self.X[0].shape[1]
        A = np.zeros((p, p))
        b = np.zeros(p)
        yVy = 0.0
        for (VinvX, Vinvy, _, _), X, y in zip(parts, self.X, self.y):
            A += X.T @ VinvX
            b += X.T @ Vinvy
            yVy += y @ Vinvy
        try:
            beta = np.linalg.solve(A, b)
        except np.linalg.LinAlgError:
            return np.inf, None, None
        quad = yVy - beta @ b  # r' V^-1 r via the normal equations
        nll = 0.5 * (logdet + quad + self.n_total * math.log(2.0 * math.pi))
        if not np.isfinite(nll):
            return np.inf, None, None
        return nll, beta, (parts, A, sigma2, L)

    def __call__(self, theta):
        nll = self.profile(theta)[0]
        # keep the surface finite so numeric gradients stay usable
        return nll if np.isfinite(nll) else 1e15

    def effects(self, theta, beta):
        """Empirical best predictions of each group's deviations."""
        solved = self._group_solves(theta)
        parts, _, sigma2, L = solved
        D = L @ L.T
        out = []
        for (VinvX, Vinvy, _, _), X, Z, y in zip(parts, self.X, self.Z, self.y):
            Vinv_r = Vinvy - VinvX @ beta
            out.append(D @ (Z.T @ Vinv_r))
        return out


def _initial_theta(groups, breakpoints, t0, cols, scaling, use_corr, pooled_var):
    """Start from the spread of per-group least-squares coefficients."""
    coefs = []
    for years, y in groups:
        X = np.column_stack([np.ones(years.size), segmented_design(years, breakpoints, t0)])
        if years.size >= X.shape[1]:
            coefs.append(np.linalg.lstsq(X, y, rcond=None)[0])
    theta_sd = []
    corr0 = 0.0
    if len(coefs) >= 2:
        C = np.vstack(coefs)
        spread = C.std(axis=0, ddof=1)
        for c, scale in zip(cols, scaling):
            # floor in natural units so user scaling is a pure translation
            # of the log-SD coordinates
            theta_sd.append(math.log(max(spread[c], 1e-3) / scale))
        if use_corr and cols.size >= 2:
            a, b = C[:, cols[0]], C[:, cols[1]]
            if a.std() > 0 and b.std() > 0:
                corr0 = float(np.clip(np.corrcoef(a, b)[0, 1], -0.95, 0.95))
    else:
        theta_sd = [math.log(1e-2)] * cols.size
    theta = theta_sd
    if use_corr:
        theta.append(math.atanh(corr0))
    theta.append(math.log(max(pooled_var, 1e-8)))
    return np.array(theta)


def _optimize_theta(marg, theta0, bounds, n_sd):
    """L-BFGS-B plus a simplex polish, then snap flat SDs to the floor.

    A variance component the data cannot see leaves the likelihood flat in
    its log-SD; gradient methods stall somewhere along the shelf. Any SD
    whose floor value is (numerically) as good as the current one is set to
    the floor so boundary reporting is deterministic.
    """
    res = minimize(
        marg, theta0, method="L-BFGS-B", bounds=bounds,
        options={"maxiter": 600, "maxfun": 4000, "ftol": 1e-14, "gtol": 1e-9},
    )
    theta, best = res.x, float(res.fun)
    res2 = minimize(
        marg, theta, method="Nelder-Mead", bounds=bounds,
        options={"maxiter": 500, "xatol": 1e-9, "fatol": 1e-12},
    )
    if float(res2.fun) < best:
        theta, best = res2.x, float(res2.fun)
    floor = _SD_FLOOR_LOG
    for i in range(n_sd):
        if theta[i] > floor:
            trial = theta.copy()
            trial[i] = floor
            val = marg(trial)
            if val <= best + 1e-7:
                theta, best = trial, float(val)
    return theta


def _hessian_se(fun, theta, steps):
    """Delta-method SEs from a central-difference Hessian of -loglik."""
    d = theta.size
    H = np.zeros((d, d))
    f0 = fun(theta)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = steps[i]
        for j in range(i, d):
            ej = np.zeros(d)
            ej[j] = steps[j]
            if i == j:
                H[i, i] = (fun(theta + ei) - 2 * f0 + fun(theta - ei)) / steps[i] ** 2
            else:
                H[i, j] = H[j, i] = (
                    fun(theta + ei + ej)
                    - fun(theta + ei - ej)
                    - fun(theta - ei + ej)
                    + fun(theta - ei - ej)
                ) / (4 * steps[i] * steps[j])
    try:
        cov = np.linalg.inv(H)
        var = np.diag(cov).copy()
    except np.linalg.LinAlgError:
        var = np.full(d, np.nan)
    with np.errstate(invalid="ignore", divide="ignore"):
        diag = np.diag(H)
        fallback = np.where(diag > 0, 1.0 / diag, np.nan)
        var = np.where(np.isfinite(var) & (var > 0), var, fallback)
    return np.sqrt(var)


def fit_mixed(
    panel: Panel,
    n_segments: int,
    spec: RandomEffectsSpec | None = None,
    opts: SegmentedOptions | None = None,
    max_outer: int = 50,
    outer_tol: float = 0.01,
) -> MixedFit:
    """Fit the shared broken line with per-source random deviations.

    Needs a log-scale panel with at least two sources. Returns boundary
    flags (not an error) when a variance component collapses to the lower
    bound, which with a handful of sources is common.
    """
    if panel.kind != LOG_CUMULATIVE:
        raise KindMismatchError(f"expected log_cumulative panel, got {panel.kind}")
    spec = spec if spec is not None else RandomEffectsSpec()
    opts = opts or SegmentedOptions()
    names, cols = spec.resolve(n_segments)

    groups = []
    for sid in panel.sources:
        col = panel.column(sid)
        present = ~np.isnan(col)
        groups.append((panel.years[present].astype(float), col[present]))
    if len(groups) < 2:
        raise EmptyInputError("mixed fit needs at least two sources")
    for sid, (years, y) in zip(panel.sources, groups):
        if y.size < n_segments * opts.min_segment_len:
            raise InfeasibleSegmentationError(
                f"{sid}: {y.size} observations cannot support {n_segments} segments"
            )

    years_all = np.concatenate([g[0] for g in groups])
    y_all = np.concatenate([g[1] for g in groups])
    t0 = int(panel.first_year)
    pooled = fit_segmented_xy(years_all, y_all, n_segments, t0, opts)

    if not names:  # no random effects: exactly the pooled fixed-effects fit
        return MixedFit(
            fixed=pooled,
            spec=spec,
            sources=panel.sources,
            panel_years=panel.years.copy(),
            resid_var=pooled.resid_var,
            group_effects={sid: np.zeros(0) for sid in panel.sources},
            residuals=pooled.residuals,
            loglik=pooled.loglik,
            n_total=pooled.n_obs,
            n_groups=len(groups),
            converged=pooled.converged,
        )

    scaling = (
        np.asarray(spec.scaling, dtype=float)
        if spec.scaling is not None
        else np.ones(len(names))
    )
    use_corr = spec.intercept_slope1_covariance

    bp = pooled.breakpoints.copy()
    theta = _initial_theta(groups, bp, t0, cols, scaling, use_corr, pooled.resid_var)
    lo = np.full(theta.size, _SD_FLOOR_LOG)
    hi = np.full(theta.size, 6.0)
    if use_corr:
        lo[cols.size], hi[cols.size] = -6.0, 6.0
    lo[-1] = -30.0  # residual variance may be tiny but stays positive
    bounds = list(zip(lo, hi))

    marg = None
    beta = None
    converged_outer = False
    for outer_iter in range(max_outer):
        marg = _Marginal(groups, bp, t0, cols, scaling, use_corr)
        theta = _optimize_theta(marg, theta, bounds, cols.size)
        nll, beta, aux = marg.profile(theta)
        if beta is None:
            raise NoConvergenceError("marginal likelihood undefined at optimum")
        effects = marg.effects(theta, beta)

        if n_segments == 1:
            converged_outer = True
            break
        # subtract predicted deviations, re-find the knots on the profile
        y_adj = np.concatenate(
            [y - Z @ u for (years, y), Z, u in zip(groups, marg.Z, effects)]
        )
        order = np.argsort(years_all, kind="stable")
        new_bp, sse_prof, _ = _refine(years_all[order], y_adj[order], bp, t0, opts)
        if outer_iter == 0 and opts.init_breakpoints is None:
            # the pooled init can sit in the wrong basin when source levels
            # differ a lot; one full relocation pass on the profile fixes it
            new_bp, _ = _relocate(
                years_all[order], y_adj[order], new_bp, sse_prof, t0, opts
            )
        move = float(np.max(np.abs(new_bp - bp))) if bp.size else 0.0
        bp = new_bp
        if move < outer_tol:
            converged_outer = True
            break
    # final pass at the settled knots so every reported number is consistent
    marg = _Marginal(groups, bp, t0, cols, scaling, use_corr)
    theta = _optimize_theta(marg, theta, bounds, cols.size)
    nll, beta, aux = marg.profile(theta)
    if beta is None:
        raise NoConvergenceError("marginal likelihood undefined at optimum")
    effects = marg.effects(theta, beta)
    parts, A, sigma2, L = aux
    sds, corr, _ = marg.unpack(theta)
    loglik = -nll

    # standard errors
    try:
        cov_beta = np.linalg.inv(A)
        se_beta = np.sqrt(np.maximum(np.diag(cov_beta), 0.0))
    except np.linalg.LinAlgError:
        cov_beta = None
        se_beta = np.full(beta.size, np.nan)
    steps = np.full(theta.size, 1e-4)
    se_theta = _hessian_se(marg, theta, steps)
    se_sd = sds * se_theta[: cols.size]  # delta method through exp
    k = cols.size
    corr_se = None
    if use_corr:
        corr_se = float((1.0 - corr**2) * se_theta[k])
        k += 1
    resid_var_se = sigma2 * se_theta[k]

    flagged = [
        name
        for name, th in zip(names, theta[: cols.size])
        if th <= _SD_FLOOR_LOG + _BOUNDARY_EPS
    ]
    if use_corr and abs(theta[cols.size]) >= 6.0 - _BOUNDARY_EPS:
        flagged.append("corr_intercept_slope1")
    boundary = tuple(flagged)

    order = np.argsort(years_all, kind="stable")
    y_adj = np.concatenate(
        [y - Z @ u for (years, y), Z, u in zip(groups, marg.Z, effects)]
    )
    se_bp = (
        _breakpoint_ses(years_all[order], y_adj[order], bp, t0, sigma2)
        if bp.size
        else np.zeros(0)
    )
    resid_fixed = y_all - np.concatenate([X @ beta for X in marg.X])
    resid_cond = np.concatenate(
        [y - X @ beta - Z @ u for (yr, y), X, Z, u in zip(groups, marg.X, marg.Z, effects)]
    )
    fixed = SegmentedFit(
        n_segments=n_segments,
        t0=t0,
        intercept=float(beta[0]),
        slopes=beta[1:].copy(),
        breakpoints=bp.copy(),
        se_intercept=float(se_beta[0]),
        se_slopes=se_beta[1:].copy(),
        se_breakpoints=se_bp,
        resid_var=sigma2,
        loglik=loglik,
        n_obs=int(marg.n_total),
        converged=converged_outer,
        residuals=resid_fixed,
        years=years_all.copy(),
        cov_params=cov_beta,
    )
    return MixedFit(
        fixed=fixed,
        spec=spec,
        sources=panel.sources,
        panel_years=panel.years.copy(),
        re_names=names,
        re_sd=sds,
        re_sd_se=se_sd,
        corr_intercept_slope1=corr,
        corr_se=corr_se,
        resid_var=sigma2,
        group_effects={
            sid: u.copy() for sid, u in zip(panel.sources, effects)
        },
        residuals=resid_cond,
        loglik=loglik,
        n_total=int(marg.n_total),
        n_groups=len(groups),
        boundary=boundary,
        converged=converged_outer,
    )


def marginal_loglik(fit: MixedFit) -> float:
    """Maximized marginal log-likelihood (feeds likelihood-based BIC)."""
    return fit.loglik


def group_curve(fit: MixedFit, source_id: str, years=None) -> np.ndarray:
    """Predicted log values for one source: shared curve plus its deviations."""
    if source_id not in fit.sources:
        raise UnknownSourceError(f"source {source_id!r} not in fit")
    years = fit.panel_years if years is None else np.asarray(years, dtype=float)
    X = np.column_stack(
        [
            np.ones(len(years)),
            segmented_design(years, fit.fixed.breakpoints, fit.fixed.t0),
        ]
    )
    curve = X @ np.concatenate([[fit.fixed.intercept], fit.fixed.slopes])
    u = fit.group_effects[source_id]
    if u.size:
        _, cols = fit.spec.resolve(fit.fixed.n_segments)
        scaling = (
            np.asarray(fit.spec.scaling, dtype=float)
            if fit.spec.scaling is not None
            else np.ones(cols.size)
        )
        curve = curve + (X[:, cols] * scaling[None, :]) @ u
    return curve
