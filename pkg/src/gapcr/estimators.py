"""Marginal gap-time estimators for recurrent events with competing risks.

All estimators reweight observed indicators by the inverse of the
empirical censoring survival ``G``:

* cumulative incidence ``F_k^(j)(t)`` of a cause-``k`` stage-``j`` gap,
* four estimators of the gap survival ``S^(j)(t)``:
  ``sum`` (one minus the summed incidences), ``ipcw`` (weighted survivors),
  ``pl`` (weighted product limit) and ``unc`` (weighted uncensored survivors),
* the cumulative cause-specific hazard ``sum_{u<=t} dF_k(u) / S(u-)``,
* the incidence conditional on the previous event's cause.
"""

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._engine import SampleEngine
from .curves import StepCurve
from .exceptions import NoStageDataError, UnidentifiableError
from .sample import Sample, fit_censor_survival

__all__ = [
    "Variant",
    "SURVIVAL_VARIANTS",
    "EstimateCurve",
    "PrevTypeMass",
    "Target",
    "estimate_cif",
    "estimate_surv_sum",
    "estimate_surv_ipcw",
    "estimate_surv_pl",
    "estimate_surv_uncensored",
    "estimate_surv",
    "estimate_cum_csh",
    "estimate_cond_cif",
    "estimate_target",
    "evaluate_weighted",
]


class Variant(str, enum.Enum):
    CIF = "cif"
    SURV_SUM = "sum"
    SURV_IPCW = "ipcw"
    SURV_PL = "pl"
    SURV_UNC = "unc"
    CUM_CSH = "csh"
    COND_CIF = "cond"

    @property
    def is_survival(self):
        return self in SURVIVAL_VARIANTS


SURVIVAL_VARIANTS = (Variant.SURV_SUM, Variant.SURV_IPCW, Variant.SURV_PL, Variant.SURV_UNC)


@dataclass(frozen=True)
class Target:
    """Descriptor of one estimand: what to estimate, at which stage and cause.

    ``plugin`` selects the survival estimator inside a cumulative hazard.
    """

    variant: Variant
    stage: int
    cause: int | None = None
    prev_cause: int | None = None
    plugin: Variant = Variant.SURV_PL

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        object.__setattr__(self, "plugin", Variant(self.plugin))
        if self.variant in (Variant.CIF, Variant.CUM_CSH, Variant.COND_CIF) and self.cause is None:
            raise ValueError(f"{self.variant.value} target needs a cause")
        if self.variant is Variant.COND_CIF and self.prev_cause is None:
            raise ValueError("conditional CIF target needs prev_cause")
        if not self.plugin.is_survival:
            raise ValueError(f"plugin must be a survival variant, got {self.plugin.value}")

    @property
    def kind(self):
        if self.variant.is_survival:
            return "surv"
        return {Variant.CIF: "cif", Variant.CUM_CSH: "cum_csh", Variant.COND_CIF: "cond_cif"}[
            self.variant
        ]

    @property
    def surv_key(self):
        return (self.variant if self.variant.is_survival else self.plugin).value

    @property
    def label(self):
        parts = [self.variant.value, f"j{self.stage}"]
        if self.cause is not None:
            parts.append(f"k{self.cause}")
        if self.prev_cause is not None:
            parts.append(f"l{self.prev_cause}")
        if self.variant is Variant.CUM_CSH:
            parts.append(self.plugin.value)
        return "_".join(parts)


class _EngineTarget:
    """Adapter exposing the plain-string fields the engine dispatches on."""

    def __init__(self, target):
        self.stage = target.stage
        self.cause = target.cause
        self.prev_cause = target.prev_cause
        self.kind = target.kind
        self.plugin = target.surv_key


@dataclass(frozen=True, eq=False)
class EstimateCurve:
    """A step-function estimate tagged with what it estimates.

    Evaluation past ``tau`` (or at/after ``truncated_at``) returns the last
    value and raises the ``beyond`` flag rather than failing.
    """

    curve: StepCurve
    stage: int
    variant: Variant
    tau: float
    cause: int | None = None
    prev_cause: int | None = None
    plugin: Variant | None = None
    truncated_at: float | None = None
    notes: tuple = field(default_factory=tuple)

    def __call__(self, t):
        return self.curve(t)

    def evaluate(self, t):
        """Values and beyond-identifiable-range flags at ``t``."""
        t = np.asarray(t, dtype=float)
        beyond = ~(t <= self.tau)
        if self.truncated_at is not None:
            beyond |= t >= self.truncated_at
        return self.curve(t), beyond

    def left_limit(self, t):
        return self.curve.left_limit(t)

    @property
    def target(self):
        return Target(
            self.variant, self.stage, self.cause, self.prev_cause, self.plugin or Variant.SURV_PL
        )

    @property
    def label(self):
        return self.target.label


@dataclass(frozen=True)
class PrevTypeMass:
    stage: int
    cause: int
    mass: float
    t_max: float


def _censor_curve(sample, G):
    return fit_censor_survival(sample) if G is None else G


def _engine(sample, G):
    return SampleEngine(sample, censor_curve=_censor_curve(sample, G))


def _stage_cols(sample, j):
    cols = sample.stage_columns(j)
    return cols


def _check_cause(sample, k):
    if not 1 <= int(k) <= sample.num_causes:
        raise ValueError(f"cause must be in 1..{sample.num_causes}, got {k}")


def _tau_or_raise(gaps, j, what):
    if gaps.size == 0:
        raise UnidentifiableError(f"estimand unidentifiable at stage {j}: no uncensored {what} gaps")
    return float(gaps.max())


def estimate_cif(sample: Sample, j: int, k: int, G: StepCurve | None = None) -> EstimateCurve:
    """Cumulative incidence of cause ``k`` for the stage-``j`` gap.

    Parameters
    ----------
    sample : Sample
    j : int
        Stage (1-based).
    k : int
        Cause in ``1..K``.
    G : StepCurve, optional
        Censoring survival; defaults to the empirical ``#{C_i > t} / n``.
    """
    _check_cause(sample, k)
    cols = _stage_cols(sample, j)
    gaps = cols.gap[cols.cause == k]
    tau = _tau_or_raise(gaps, j, f"cause-{k}")
    jumps = np.unique(gaps)
    values = _engine(sample, G).stage(j).cif(k, jumps)[0]
    return EstimateCurve(StepCurve(jumps, values, 0.0), j, Variant.CIF, tau, cause=k)


def estimate_surv_sum(sample, j, G=None, floor=True) -> EstimateCurve:
    """``1 - sum_k F_k^(j)(t)``, floored at zero unless ``floor=False``."""
    cols = _stage_cols(sample, j)
    for k in range(1, sample.num_causes + 1):
        _tau_or_raise(cols.gap[cols.cause == k], j, f"cause-{k}")
    gaps = cols.gap[cols.cause > 0]
    jumps = np.unique(gaps)
    values = _engine(sample, G).stage(j).surv_sum(jumps, floor=floor)[0]
    return EstimateCurve(StepCurve(jumps, values, 1.0), j, Variant.SURV_SUM, float(gaps.max()))


def _any_cause_tau(cols, j):
    gaps = cols.gap[cols.cause > 0]
    return (float(gaps.max()) if gaps.size else float("nan")), gaps


def _ipcw_curve(cols, G, n):
    """Exact step curve of ``n^-1 sum_i I(T_ij > t) / G(Y_i(j-1) + t)``.

    Subject ``i`` contributes ``1/G(a_i + t)`` on ``[0, T_ij)`` with
    ``a_i = Y_i(j-1)``, which changes whenever ``a_i + t`` crosses a jump of
    ``G``.  All per-subject increments are collected and summed in time
    order.
    """
    at_risk = cols.gap > 0
    gap, a = cols.gap[at_risk], cols.prev_cum[at_risk]
    knots = G.jump_times
    g_knots = G(knots)
    inv = lambda g: np.divide(1.0, g, out=np.zeros_like(g, dtype=float), where=g > 0)  # noqa: E731
    start_val = inv(np.asarray(G(a), dtype=float))
    initial = start_val.sum() / n

    lo = np.searchsorted(knots, a, side="right")
    hi = np.searchsorted(knots, a + gap, side="left")
    counts = np.maximum(hi - lo, 0)
    owner = np.repeat(np.arange(gap.size), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    kidx = lo[owner] + offs
    inner_t = knots[kidx] - a[owner]
    inner_val = inv(g_knots[kidx])
    # value just before each knot: previous knot's value, or the start value
    first = offs == 0
    before = np.empty_like(inner_val)
    before[first] = start_val[owner[first]]
    before[~first] = inner_val[np.flatnonzero(~first) - 1]
    last_val = start_val.copy()
    has_inner = counts > 0
    ends = np.cumsum(counts) - 1
    last_val[has_inner] = inner_val[ends[has_inner]]

    t = np.r_[inner_t, gap]
    inc = np.r_[inner_val - before, -last_val]
    keep = t > 0
    t, inc = t[keep], inc[keep]
    order = np.argsort(t, kind="stable")
    t, inc = t[order], inc[order]
    values = initial + np.cumsum(inc) / n
    curve = StepCurve.from_points(t, values, initial)
    return curve


def estimate_surv_ipcw(sample, j, G=None, monotone=False) -> EstimateCurve:
    """``n^-1 sum_i I(T_ij > t) / G(Y_i(j-1) + t)``, returned raw by default.

    The raw estimate can exceed one and need not be monotone.  With
    ``monotone=True`` a running minimum is applied.
    """
    cols = _stage_cols(sample, j)
    tau, _ = _any_cause_tau(cols, j)
    curve = _ipcw_curve(cols, _censor_curve(sample, G), sample.n)
    if monotone:
        curve = _running_min(curve)
    return EstimateCurve(curve, j, Variant.SURV_IPCW, tau, notes=_tau_notes(tau))


def estimate_surv_pl(sample, j, G=None) -> EstimateCurve:
    """Weighted product-limit survival of the stage-``j`` gap.

    The hazard increment at an event gap ``v`` is the weighted number of
    events at ``v`` over the weighted number with ``T_ij >= v``, each term
    weighted by ``1 / G(Y_i(j-1) + v)``.  For ``j = 1`` the weights cancel and
    this is the Kaplan-Meier estimator.
    """
    cols = _stage_cols(sample, j)
    tau, gaps = _any_cause_tau(cols, j)
    jumps = np.unique(gaps)
    values = _engine(sample, G).stage(j).surv_pl(jumps)[0] if jumps.size else jumps
    return EstimateCurve(StepCurve(jumps, values, 1.0), j, Variant.SURV_PL, tau, notes=_tau_notes(tau))


def estimate_surv_uncensored(sample, j, G=None, monotone=False) -> EstimateCurve:
    """``n^-1 sum_i I(T_ij > t, D_ij != 0) / G(Y_ij)``; uses uncensored gaps only."""
    cols = _stage_cols(sample, j)
    tau, gaps = _any_cause_tau(cols, j)
    jumps = np.unique(gaps)
    eng = _engine(sample, G).stage(j)
    initial = float(eng.surv_unc(np.array([0.0]))[0, 0])
    values = eng.surv_unc(jumps)[0]
    notes = _tau_notes(tau)
    if not gaps.size:
        warnings.warn(f"all stage-{j} records are censored; estimate is identically 0", stacklevel=2)
    curve = StepCurve(jumps, values, initial)
    if monotone:
        curve = _running_min(curve)
    return EstimateCurve(curve, j, Variant.SURV_UNC, tau, notes=notes)


def _tau_notes(tau):
    return ("no uncensored gaps at this stage",) if np.isnan(tau) else ()


def _running_min(curve):
    vals = np.minimum.accumulate(np.r_[curve.initial_value, curve.values])
    return StepCurve(curve.jump_times, vals[1:], vals[0])


_SURV_FUNCS = {
    Variant.SURV_SUM: estimate_surv_sum,
    Variant.SURV_IPCW: estimate_surv_ipcw,
    Variant.SURV_PL: estimate_surv_pl,
    Variant.SURV_UNC: estimate_surv_uncensored,
}


def estimate_surv(sample, j, variant=Variant.SURV_PL, G=None, **kwargs) -> EstimateCurve:
    """Dispatch to one of the four survival estimators."""
    return _SURV_FUNCS[Variant(variant)](sample, j, G=G, **kwargs)


def estimate_cum_csh(cif: EstimateCurve, surv: EstimateCurve) -> EstimateCurve:
    """Plug-in cumulative cause-specific hazard ``sum_{u<=t} dF(u) / S(u-)``.

    The sum runs over the jumps of `cif`; ``S(u-)`` is the left limit of
    `surv`.  If ``S(u-) <= 0`` at some jump the curve stops before it and
    ``truncated_at`` records ``u``.
    """
    if cif.variant is not Variant.CIF:
        raise ValueError("first argument must be a CIF estimate")
    if not surv.variant.is_survival:
        raise ValueError("second argument must be a survival estimate")
    if cif.stage != surv.stage:
        raise ValueError(f"stage mismatch: CIF stage {cif.stage}, survival stage {surv.stage}")
    u = cif.curve.jump_times
    dF = cif.curve.increments()
    s_left = surv.left_limit(u)
    bad = np.flatnonzero((s_left <= 0) & (dF > 0))
    truncated_at = None
    if bad.size:
        truncated_at = float(u[bad[0]])
        u, dF, s_left = u[: bad[0]], dF[: bad[0]], s_left[: bad[0]]
    values = np.cumsum(dF / s_left) if u.size else u
    tau = cif.tau
    return EstimateCurve(
        StepCurve(u, values, 0.0),
        cif.stage,
        Variant.CUM_CSH,
        tau,
        cause=cif.cause,
        plugin=surv.variant,
        truncated_at=truncated_at,
    )


def estimate_cond_cif(sample, j, k, l, G=None):
    """Cause-``k`` incidence at stage ``j`` among subjects whose stage ``j-1`` cause was ``l``.

    Returns
    -------
    curve : EstimateCurve
        ``F_{k,l}^(j)(t) / pi_l^(j-1)``.
    mass : PrevTypeMass
        ``pi_l^(j-1)``, the previous-stage cause-``l`` incidence evaluated at
        the largest observed cause-``l`` gap (not extrapolated to infinity).
    """
    if j < 2:
        raise ValueError("conditional CIF needs a previous stage (j >= 2)")
    _check_cause(sample, k)
    _check_cause(sample, l)
    prev = _stage_cols(sample, j - 1)
    cols = _stage_cols(sample, j)
    prev_gaps = prev.gap[prev.cause == l]
    if not prev_gaps.size:
        raise UnidentifiableError(f"cause {l} never observed at stage {j - 1}")
    t_max = float(prev_gaps.max())
    eng = _engine(sample, G)
    mass = float(eng.stage(j - 1).cif(l, np.array([t_max]))[0, 0])
    if not mass > 0:
        raise UnidentifiableError(f"previous-type mass for cause {l} at stage {j - 1} is zero")
    mask = (cols.cause == k) & (cols.prev_cause == l)
    tau = _tau_or_raise(cols.gap[mask], j, f"cause-{k} after cause-{l}")
    jumps = np.unique(cols.gap[mask])
    values = eng.stage(j).cif(k, jumps, prev_cause=l)[0] / mass
    curve = EstimateCurve(
        StepCurve(jumps, values, 0.0), j, Variant.COND_CIF, tau, cause=k, prev_cause=l
    )
    return curve, PrevTypeMass(j - 1, l, mass, t_max)


def estimate_target(sample: Sample, target: Target, G=None) -> EstimateCurve:
    """Point estimate curve for a :class:`Target`."""
    v = target.variant
    if v is Variant.CIF:
        return estimate_cif(sample, target.stage, target.cause, G)
    if v.is_survival:
        return estimate_surv(sample, target.stage, v, G)
    if v is Variant.CUM_CSH:
        cif = estimate_cif(sample, target.stage, target.cause, G)
        return estimate_cum_csh(cif, estimate_surv(sample, target.stage, target.plugin, G))
    if v is Variant.COND_CIF:
        return estimate_cond_cif(sample, target.stage, target.cause, target.prev_cause, G)[0]
    raise ValueError(f"unsupported variant {v}")


def evaluate_weighted(sample, targets, times, weights=None):
    """Evaluate several targets under a ``(B, n)`` frequency-weight matrix.

    Returns a dict ``target -> (B, len(times))`` array with NaN where a row
    is unidentifiable.  Row ``b`` equals the estimate on the sample in which
    subject ``i`` is repeated ``weights[b, i]`` times.
    """
    eng = SampleEngine(sample, weights)
    out = {}
    for target in targets:
        try:
            out[target] = eng.evaluate(_EngineTarget(target), times)
        except NoStageDataError:
            out[target] = np.full((eng.weights.shape[0], np.size(times)), np.nan)
    return out
