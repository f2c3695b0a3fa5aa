"""Cox regression with wild-bootstrap simultaneous confidence bands.

The package fits the Cox proportional hazards model to counting-process
data, resamples the estimators with multiplier (wild) bootstrap schemes and
turns the replicates into time-simultaneous bands for the cumulative
baseline hazard and covariate-specific survival curves, plus intervals for
the restricted residual mean. :mod:`wildband.simulation` runs Monte Carlo
coverage studies.
"""

__version__ = "0.1.0"

from .bands import (  # noqa: E402
    BandSpec, ConfidenceBand, RrmInterval, Transform, Weight, build_band, critical_value, rrm, rrm_ci,
    sup_statistic, survival_band, weight_values,
)
from .bootstrap import (  # noqa: E402
    BootConfig, BootstrapReplicate, Increments, MultiplierKind, ReplicateSet, Scheme, direct_replicate,
    draw_multipliers, ee_dmhat_substitution, ee_replicate, run_bootstrap,
)
from .cox import (  # noqa: E402
    FitOptions, FittedCox, breslow, fit, information, log_partial_likelihood, residual_increments, score,
)
from .data import (  # noqa: E402
    Moments, StepFunction, SurvivalDataset, SurvivalRow, eval_step, s_moments, validate_dataset,
)
from .errors import *  # noqa: E402,F401,F403
from .simulation import (  # noqa: E402
    CoverageResult, DgpConfig, coverage_experiment, generate_dataset, true_cumulative_hazard,
)
