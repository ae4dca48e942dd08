import numpy as np
import pytest

from growthseg.series import LOG_CUMULATIVE, AnnualSeries
from growthseg.simulate import RandomEffectsSim, SimSpec, SourceSim, simulate


@pytest.fixture
def noisy_two_segment():
    """Single noisy series with a clear slope change at 1800."""
    spec = SimSpec(
        model="segmented",
        t0=1700,
        t_end=1900,
        intercept=3.0,
        slopes=(0.03, 0.06),
        breakpoints=(1800.0,),
        noise_sd=0.05,
        seed=7,
    )
    panel, truth = simulate(spec)
    return panel.extract("sim"), truth


@pytest.fixture
def worldwide_panel():
    """Four sources with staggered coverage, Table-scale magnitudes."""
    spec = SimSpec(
        model="segmented",
        t0=1670,
        t_end=2018,
        intercept=4.5,
        slopes=(0.028, 0.055, 0.037, 0.050),
        breakpoints=(1809.0, 1881.0, 1952.0),
        noise_sd=0.19,
        sources=(
            SourceSim("dim"),
            SourceSim("ma", 1805),
            SourceSim("sco", 1866),
            SourceSim("wos", 1905),
        ),
        random_effects=RandomEffectsSim(2.8, (0.002, 0.001, 0.001, 0.001), -0.9),
        seed=20,
    )
    panel, truth = simulate(spec)
    return panel, truth


def make_log_series(values, start_year=1700, source="s"):
    return AnnualSeries(source, start_year, np.asarray(values, float), LOG_CUMULATIVE)
