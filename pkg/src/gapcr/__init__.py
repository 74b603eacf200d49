"""Marginal estimation for recurrent gap times with competing risks.

Inverse-censoring-weighted cumulative incidence, four gap-time survival
estimators, plug-in cumulative cause-specific hazards and incidences
conditional on the previous cause, with subject-level bootstrap inference
and a gamma-frailty simulation harness.
"""

from ._version import __version__
from .curves import StepCurve
from .estimators import (
    SURVIVAL_VARIANTS,
    EstimateCurve,
    PrevTypeMass,
    Target,
    Variant,
    estimate_cif,
    estimate_cond_cif,
    estimate_cum_csh,
    estimate_surv,
    estimate_surv_ipcw,
    estimate_surv_pl,
    estimate_surv_sum,
    estimate_surv_uncensored,
    estimate_target,
    evaluate_weighted,
)
from .exceptions import ConfigError, GapcrError, NoStageDataError, SampleError, UnidentifiableError
from .inference import (
    BootstrapPlan,
    BootstrapSummary,
    TestKind,
    TestResult,
    bootstrap_se,
    ci_pointwise,
    confidence_band,
    resample,
    test_group,
    test_prev_type,
    test_stage,
)
from .models import (
    CensoringSurvival,
    ConditionalIncidence,
    CumulativeHazard,
    CumulativeIncidence,
    GapSurvival,
)
from .sample import GapRecord, Sample, SubjectRecord, build_sample, fit_censor_survival, identifiable_tau
from .simulation import SimConfig, McSummaryRow, gen_sample, gen_subject, run_mc_study, true_functionals

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
