"""Monte-Carlo solver and diagnostics for stochastic fixed-point equations
x = h(x) on discretized spaces of adapted random paths."""

from .errors import (ApfxError, ConfigError, DegenerateDataError,
                     DimensionMismatchError, DivisibilityError,
                     OperatorEvalError, ShapeMismatchError, UnknownPresetError)
from .fixpoint import (BoxGrowth, LevelSolve, SchemeConfig, SchemeResult,
                       StrongLimitReport, build_hn, run_scheme,
                       save_scheme_result, solve_level, strong_limit_probe)
from .operators import (CAUSAL, STRICT, UNKNOWN, AdaptednessReport, Coefficient,
                        LocalityReport, Operator, adaptedness_check,
                        adaptedness_sweep, apply, clamp_operator, compose,
                        constant_operator, coupled_driver, custom_operator,
                        interp_operator,
                        demo_anticipating_endpoint, demo_nonlocal_mean,
                        identity_operator, ito_integral, lebesgue_integral,
                        locality_check, operator_sum, state_coefficient,
                        superposition, time_coefficient)
from .pathspace import (DriverEnsemble, MetricEstimate, PathEnsemble, TimeGrid,
                        constant_ensemble, driver_as_ensemble,
                        driver_from_increments, ensemble_from_values,
                        load_ensemble, load_ensemble_csv, make_grid,
                        prob_metric, sample_driver, save_ensemble,
                        save_ensemble_csv, sup_norms)
from .problems import SDEProblem, as_operator, exit_nodes, preset, solve_localized
from .projective import (CompactBox, ProjectionLevel, clamp_box, make_level,
                         mollify, property_pi_probe, volterra_interp)
from .rng import substream
from .tightness import (ContinuityRow, ModulusRow, RegularityFit,
                        TightnessReport, calibrate_compact, kolmogorov_estimate,
                        modulus_report, path_modulus, tight_set_probe,
                        uniform_continuity_probe)
from .youngdiag import (NarrowRow, NarrowTable, TestFunctional, WeakSummary,
                        narrow_stats, test_battery, weak_summary)

__version__ = "0.1.0"
