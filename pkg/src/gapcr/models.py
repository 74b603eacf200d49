"""Estimator classes with a scikit-learn style ``fit`` / ``predict`` interface.

``fit`` takes a :class:`~gapcr.sample.Sample` (or long-format rows plus
censor times) and stores the fitted step curve in ``curve_``; ``predict``
evaluates it at new times.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .estimators import Target, Variant, estimate_cond_cif, estimate_target
from .inference import BootstrapPlan, bootstrap_se
from .sample import fit_censor_survival
from .validation import check_sample, check_times


class _CurveEstimator(BaseEstimator):
    def _target(self):
        raise NotImplementedError

    def _fit_curve(self, sample):
        return estimate_target(sample, self._target())

    def fit(self, X, y=None, censor_times=None):
        """Fit the curve.

        Parameters
        ----------
        X : Sample or sequence of (subject_id, stage, gap_time, cause)
        y : ignored
        censor_times : dict, optional
            Needed when `X` is raw rows without terminal records.

        Returns
        -------
        self
        """
        sample = check_sample(X, censor_times, num_causes=getattr(self, "num_causes", 2))
        est = self._fit_curve(sample)
        self.sample_ = sample
        self.estimate_ = est
        self.curve_ = est.curve
        self.tau_ = est.tau
        self.n_subjects_ = sample.n
        return self

    def predict(self, t, return_flags=False):
        """Evaluate at `t`; with ``return_flags`` also report points past ``tau_``."""
        check_is_fitted(self, "curve_")
        values, beyond = self.estimate_.evaluate(check_times(t))
        return (values, beyond) if return_flags else values

    def bootstrap(self, grid, B=100, alpha=0.05, random_state=0, band=None, workers=1):
        """Bootstrap SEs, intervals and optional band on the fitted sample."""
        check_is_fitted(self, "curve_")
        plan = BootstrapPlan(self._target(), tuple(grid), B, alpha, random_state, band)
        return bootstrap_se(self.sample_, plan, workers=workers)


class CensoringSurvival(BaseEstimator):
    """Empirical survival ``G(t) = #{C_i > t} / n`` of the censoring time."""

    def fit(self, X, y=None, censor_times=None):
        self.curve_ = fit_censor_survival(check_sample(X, censor_times))
        return self

    def predict(self, t):
        check_is_fitted(self, "curve_")
        return self.curve_(check_times(t))


class CumulativeIncidence(_CurveEstimator):
    """Inverse-censoring-weighted cumulative incidence of cause `cause` at stage `stage`.

    Parameters
    ----------
    stage : int, default=1
    cause : int, default=1
    num_causes : int, default=2

    Attributes
    ----------
    curve_ : StepCurve
    tau_ : float
        Largest observed cause-specific gap; predictions past it are flagged.
    """

    def __init__(self, stage=1, cause=1, num_causes=2):
        self.stage = stage
        self.cause = cause
        self.num_causes = num_causes

    def _target(self):
        return Target(Variant.CIF, self.stage, cause=self.cause)


class GapSurvival(_CurveEstimator):
    """Survival of the stage-`stage` gap time.

    Parameters
    ----------
    stage : int, default=1
    variant : {'pl', 'sum', 'ipcw', 'unc'}, default='pl'
        Product limit, one minus summed incidences, weighted survivors, or
        weighted uncensored survivors.
    num_causes : int, default=2
    """

    def __init__(self, stage=1, variant="pl", num_causes=2):
        self.stage = stage
        self.variant = variant
        self.num_causes = num_causes

    def _target(self):
        v = Variant(self.variant)
        if not v.is_survival:
            raise ValueError(f"variant must be one of sum, ipcw, pl, unc; got {self.variant!r}")
        return Target(v, self.stage)


class CumulativeHazard(_CurveEstimator):
    """Plug-in cumulative cause-specific hazard using survival estimator `plugin`."""

    def __init__(self, stage=1, cause=1, plugin="pl", num_causes=2):
        self.stage = stage
        self.cause = cause
        self.plugin = plugin
        self.num_causes = num_causes

    def _target(self):
        return Target(Variant.CUM_CSH, self.stage, cause=self.cause, plugin=self.plugin)


class ConditionalIncidence(_CurveEstimator):
    """Cause-`cause` incidence at stage `stage` given previous cause `prev_cause`.

    Attributes
    ----------
    prev_mass_ : PrevTypeMass
        Estimated share of previous-stage gaps of cause `prev_cause`.
    """

    def __init__(self, stage=2, cause=1, prev_cause=1, num_causes=2):
        self.stage = stage
        self.cause = cause
        self.prev_cause = prev_cause
        self.num_causes = num_causes

    def _target(self):
        return Target(Variant.COND_CIF, self.stage, cause=self.cause, prev_cause=self.prev_cause)

    def _fit_curve(self, sample):
        est, mass = estimate_cond_cif(sample, self.stage, self.cause, self.prev_cause)
        self.prev_mass_ = mass
        return est
