"""Growth-curve fitting for cumulative annual series.

Exponential and logistic single-series fits, continuous segmented
regression with estimated breakpoint years, a mixed-effects variant for
multi-source panels, MCMC multiple imputation with within/between pooling,
and BIC model selection, plus CSV/JSON tooling and a CLI.
"""

__version__ = "0.1.0"

from .errors import GrowthSegError
from .growth import (
    GrowthFit,
    doubling_time,
    fit_exponential,
    fit_logistic,
    growth_rate,
    predict,
)
from .impute import (
    ImputationSet,
    ImputedFit,
    ModelRequest,
    PooledEstimate,
    fit_with_imputation,
    impute_mcmc,
    pool,
    relative_efficiency,
)
from .io import read_fred_csv, read_panel_csv, write_panel_csv
from .mixed import (
    MixedFit,
    NO_RANDOM_EFFECTS,
    RandomEffectsSpec,
    fit_mixed,
    group_curve,
    marginal_loglik,
)
from .segmented import (
    SegmentedFit,
    SegmentedOptions,
    fit_segmented,
    predict_segmented,
    residual_lag1_autocorr,
    segment_rates,
    segmented_design,
)
from .selection import (
    ModelScore,
    bic_loglik,
    bic_mse,
    compare,
    select_segments,
)
from .series import (
    AnnualSeries,
    Panel,
    align,
    cumulate,
    log_transform,
    time_index,
    to_log_cumulative,
    trim_leading_zeros,
    truncate_head,
)
from .simulate import RandomEffectsSim, SimSpec, SourceSim, simulate

__all__ = [
    "AnnualSeries",
    "GrowthFit",
    "GrowthSegError",
    "ImputationSet",
    "ImputedFit",
    "MixedFit",
    "ModelRequest",
    "ModelScore",
    "NO_RANDOM_EFFECTS",
    "Panel",
    "PooledEstimate",
    "RandomEffectsSim",
    "RandomEffectsSpec",
    "SegmentedFit",
    "SegmentedOptions",
    "SimSpec",
    "SourceSim",
    "align",
    "bic_loglik",
    "bic_mse",
    "compare",
    "cumulate",
    "doubling_time",
    "fit_exponential",
    "fit_logistic",
    "fit_mixed",
    "fit_segmented",
    "fit_with_imputation",
    "group_curve",
    "growth_rate",
    "impute_mcmc",
    "log_transform",
    "marginal_loglik",
    "pool",
    "predict",
    "predict_segmented",
    "read_fred_csv",
    "read_panel_csv",
    "relative_efficiency",
    "residual_lag1_autocorr",
    "segment_rates",
    "segmented_design",
    "select_segments",
    "simulate",
    "time_index",
    "to_log_cumulative",
    "trim_leading_zeros",
    "truncate_head",
    "write_panel_csv",
]
