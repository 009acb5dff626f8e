"""Tools for commercial real estate loss-given-default modeling: macro series
transforms and screening, workout LGD accounting, censored regression, MARS,
and coefficient-stability validation."""

__version__ = "0.1.0"

from .errors import (ConfigError, CrelgdError, DataError, NumericalError)  # noqa: E402
from .series import (MonthKey, MonthlySeries, TransformSpec, apply_transform, read_series_csv,  # noqa: E402
                     shift_forward, window)
from .screen import adf_test, pearson, screen, transform_correlation_matrix  # noqa: E402
from .lgd import LoanDefaultRecord, censor, lgd_decomposed, raw_lgd  # noqa: E402
from .tobit import DesignMatrix, fit_tobit, predict_censored_mean, rank_by_bic  # noqa: E402
from .mars import mars_fit, mars_predict  # noqa: E402
from .validation import k_fold_plan, leave_one_group_plan, run_stability_cv  # noqa: E402
