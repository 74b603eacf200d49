"""Subject-level bootstrap: standard errors, pointwise intervals, bands and tests.

Replicate ``b`` resamples whole subject trajectories using a random stream
derived only from ``(seed, b)``.  Replicates are evaluated in fixed-size
chunks of replicate indices, so the output does not depend on how many
workers share the work.
"""

import enum
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import _rng
from .estimators import EstimateCurve, Target, Variant, estimate_target, evaluate_weighted
from .exceptions import UnidentifiableError
from .sample import Sample

__all__ = [
    "BootstrapPlan",
    "BootstrapSummary",
    "TestKind",
    "TestResult",
    "resample",
    "bootstrap_replicates",
    "bootstrap_se",
    "ci_pointwise",
    "confidence_band",
    "test_stage",
    "test_group",
    "test_prev_type",
    "z_critical",
]

logger = logging.getLogger(__name__)

# replicate indices per evaluation chunk; fixed so results ignore worker count
CHUNK = 25
# largest tolerated share of unidentifiable replicates at a grid point
MAX_DROP = 0.5


def z_critical(alpha):
    """Two-sided standard normal critical value ``z_{alpha/2}``."""
    return float(norm.isf(alpha / 2))


def resample(sample: Sample, rng) -> Sample:
    """Draw ``n`` whole subjects uniformly with replacement."""
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return sample.take(rng.integers(0, sample.n, size=sample.n))


def _chunk_values(args):
    sample, targets, times, ss, lo, hi = args
    weights = _rng.bootstrap_weights(sample.n, ss, range(lo, hi))
    return evaluate_weighted(sample, targets, times, weights)


def bootstrap_replicates(sample, targets, times, B, random_state=None, workers=1):
    """Replicate values of several targets, ``{target: (B, len(times))}``.

    All targets share the same resampled subjects in each replicate, so
    differences between them keep their joint distribution.  NaN marks a
    replicate in which the target is unidentifiable at that time.
    """
    ss = _rng.as_seed_sequence(random_state)
    times = np.asarray(times, dtype=float)
    jobs = [(sample, targets, times, ss, lo, min(lo + CHUNK, B)) for lo in range(0, B, CHUNK)]
    if workers is None:
        workers = os.cpu_count() or 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            parts = list(pool.map(_chunk_values, jobs))
    else:
        parts = [_chunk_values(job) for job in jobs]
    return {t: np.vstack([p[t] for p in parts]) for t in targets}


@dataclass(frozen=True)
class BootstrapPlan:
    """What to bootstrap and how.

    Parameters
    ----------
    target : Target
        The estimand.
    grid : sequence of float
        Increasing evaluation times.
    B : int
        Number of bootstrap replicates.
    alpha : float
        Significance level for intervals and bands.
    seed : int or None
    band : (t1, t2), optional
        Range of the simultaneous band; clipped to the identifiable range.
    """

    target: Target
    grid: tuple
    B: int = 100
    alpha: float = 0.05
    seed: int | None = 0
    band: tuple | None = None

    def __post_init__(self):
        grid = tuple(float(t) for t in np.atleast_1d(self.grid))
        object.__setattr__(self, "grid", grid)
        if int(self.B) < 2:
            raise ValueError(f"B must be at least 2, got {self.B}")
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not grid or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be nonempty and strictly increasing")
        if self.band is not None:
            t1, t2 = (float(x) for x in self.band)
            if not t1 <= t2:
                raise ValueError(f"band needs t1 <= t2, got {self.band}")
            object.__setattr__(self, "band", (t1, t2))


@dataclass
class BootstrapSummary:
    """Per-grid-point bootstrap results for one estimand.

    ``ci_*`` and ``band_*`` are ``(lower, upper)`` pairs of arrays aligned with
    ``grid``.  ``flags`` holds a ``;``-joined note string per grid point.
    """

    point: EstimateCurve
    grid: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    n_kept: np.ndarray
    ci_plain: tuple
    ci_log: tuple
    band_plain: tuple | None
    band_log: tuple | None
    v_quantile: float | None
    B: int
    alpha: float
    flags: list = field(default_factory=list)
    replicates: np.ndarray | None = field(default=None, repr=False)

    def to_rows(self):
        """One dict per grid point, in grid order."""
        rows = []
        for m, t in enumerate(self.grid):
            row = {
                "t": float(t),
                "estimate": float(self.estimate[m]),
                "se": float(self.se[m]),
                "lower_plain": float(self.ci_plain[0][m]),
                "upper_plain": float(self.ci_plain[1][m]),
                "lower_log": float(self.ci_log[0][m]),
                "upper_log": float(self.ci_log[1][m]),
            }
            for name, band in (("plain", self.band_plain), ("log", self.band_log)):
                lo, hi = band if band is not None else (None, None)
                row[f"band_lower_{name}"] = float(lo[m]) if lo is not None else float("nan")
                row[f"band_upper_{name}"] = float(hi[m]) if hi is not None else float("nan")
            row["n_kept"] = int(self.n_kept[m])
            row["flag"] = self.flags[m]
            rows.append(row)
        return rows


def _interval(estimate, spread, transform):
    """``E -/+ spread`` or ``E exp(-/+ spread / E)``; flags degenerate log intervals."""
    estimate = np.asarray(estimate, dtype=float)
    spread = np.asarray(spread, dtype=float)
    if transform == "plain":
        return estimate - spread, estimate + spread, np.zeros(estimate.shape, dtype=bool)
    if transform != "log":
        raise ValueError(f"transform must be 'plain' or 'log', got {transform!r}")
    positive = estimate > 0
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        factor = np.exp(np.where(positive, spread / np.where(positive, estimate, 1.0), 0.0))
    lower = np.where(positive, estimate / factor, 0.0)
    upper = np.where(positive, estimate * factor, 0.0)
    return lower, upper, ~positive


def ci_pointwise(summary, alpha=None, transform="plain"):
    """Pointwise Wald interval, plain or log-transformed.

    Parameters
    ----------
    summary : BootstrapSummary or (estimate, se) pair
    alpha : float, optional
        Defaults to the summary's level.
    transform : {'plain', 'log'}

    Returns
    -------
    lower, upper : ndarray
    degenerate : ndarray of bool
        True where the log interval is undefined (estimate <= 0) and reported
        as ``[0, 0]``.
    """
    if isinstance(summary, BootstrapSummary):
        estimate, se = summary.estimate, summary.se
        alpha = summary.alpha if alpha is None else alpha
    else:
        estimate, se = summary
        alpha = 0.05 if alpha is None else alpha
    return _interval(estimate, z_critical(alpha) * np.asarray(se, dtype=float), transform)


def _sd_kept(boot):
    kept = np.sum(~np.isnan(boot), axis=0)
    sd = np.full(boot.shape[1], np.nan)
    ok = kept >= 2
    if ok.any():
        sd[ok] = np.nanstd(boot[:, ok], axis=0, ddof=1)
    return sd, kept


def _check_drop(kept, B, times, what):
    bad = np.flatnonzero(kept < (1 - MAX_DROP) * B)
    if bad.size:
        t = float(np.asarray(times)[bad[0]])
        raise UnidentifiableError(
            f"{what}: {B - int(kept[bad[0]])} of {B} bootstrap replicates unidentifiable at t={t!r}"
        )
    dropped = B - kept
    if dropped.any():
        logger.info("%s: dropped %d replicate values across grid points", what, int(dropped.sum()))


def _sup_quantile(stats, alpha):
    """``inf{v : mean(stats <= v) >= 1 - alpha}``."""
    v = np.sort(stats)
    k = int(np.ceil((1 - alpha) * v.size - 1e-12))
    return float(v[max(k, 1) - 1])


def bootstrap_se(sample: Sample, plan: BootstrapPlan, workers=1, keep_replicates=False):
    """Bootstrap standard errors, pointwise intervals and, if requested, a band.

    Grid points beyond the identifiable range of the point estimate are
    dropped.  Replicates in which the target is unidentifiable at a grid
    point are excluded from that point's SD; if more than half are excluded
    the call fails.
    """
    point = estimate_target(sample, plan.target)
    grid = np.asarray(plan.grid)
    limit = point.tau if point.truncated_at is None else min(point.tau, np.nextafter(point.truncated_at, -np.inf))
    inside = grid <= limit
    if not inside.any():
        raise UnidentifiableError(
            f"{plan.target.label}: no grid point within the identifiable range [0, {point.tau!r}]"
        )
    if not inside.all():
        logger.warning("%s: %d grid points beyond tau=%r dropped", plan.target.label, int((~inside).sum()), point.tau)
    grid = grid[inside]

    band_times = np.empty(0)
    if plan.band is not None:
        t1, t2 = max(plan.band[0], 0.0), min(plan.band[1], limit)
        jumps = point.curve.jump_times
        band_times = np.union1d(grid[(grid >= t1) & (grid <= t2)], jumps[(jumps >= t1) & (jumps <= t2)])
        if band_times.size == 0:
            band_times = np.array([t1])
    times = np.union1d(grid, band_times)

    boot = bootstrap_replicates(sample, [plan.target], times, plan.B, plan.seed, workers)[plan.target]
    est_all, _ = point.evaluate(times)
    se_all, kept_all = _sd_kept(boot)
    _check_drop(kept_all, plan.B, times, plan.target.label)

    pos = np.searchsorted(times, grid)
    estimate, se, kept = est_all[pos], se_all[pos], kept_all[pos]
    flags = [[] for _ in grid]
    lo, hi, degenerate = ci_pointwise((estimate, se), plan.alpha, "plain")
    ci_plain = (lo, hi)
    lo, hi, degenerate = ci_pointwise((estimate, se), plan.alpha, "log")
    ci_log = (lo, hi)
    for m in np.flatnonzero(degenerate):
        flags[m].append("log_degenerate")
    for m in np.flatnonzero(kept < plan.B):
        flags[m].append(f"dropped={plan.B - int(kept[m])}")

    band_plain = band_log = v_quantile = None
    if plan.band is not None:
        bpos = np.searchsorted(times, band_times)
        b_se = se_all[bpos]
        usable = b_se > 0
        if not usable.any():
            raise UnidentifiableError(f"{plan.target.label}: bootstrap SE is zero across the band range")
        dev = np.abs(boot[:, bpos[usable]] - est_all[bpos[usable]]) / b_se[usable]
        sup = np.nanmax(np.where(np.isnan(dev), -np.inf, dev), axis=1)
        sup = sup[np.isfinite(sup)]
        v_quantile = _sup_quantile(sup, plan.alpha)
        in_band = (grid >= band_times[0]) & (grid <= band_times[-1])
        spread = np.where(in_band, v_quantile * se, np.nan)
        lo, hi, _ = _interval(estimate, spread, "plain")
        band_plain = (lo, hi)
        lo, hi, _ = _interval(estimate, spread, "log")
        band_log = (lo, hi)
        for m in np.flatnonzero(in_band & ~(se > 0)):
            flags[m].append("se_zero_excluded_from_sup")

    return BootstrapSummary(
        point=point,
        grid=grid,
        estimate=estimate,
        se=se,
        n_kept=kept,
        ci_plain=ci_plain,
        ci_log=ci_log,
        band_plain=band_plain,
        band_log=band_log,
        v_quantile=v_quantile,
        B=int(plan.B),
        alpha=float(plan.alpha),
        flags=[";".join(f) for f in flags],
        replicates=boot[:, pos] if keep_replicates else None,
    )


def confidence_band(sample, plan, transform="plain", workers=1):
    """Simultaneous band over ``plan.band`` (the whole grid if unset).

    Returns ``(lower, upper, v_quantile, summary)``; bounds are NaN at grid
    points outside the band range.
    """
    if plan.band is None:
        plan = BootstrapPlan(plan.target, plan.grid, plan.B, plan.alpha, plan.seed, (plan.grid[0], plan.grid[-1]))
    summary = bootstrap_se(sample, plan, workers=workers)
    lower, upper = summary.band_plain if transform == "plain" else summary.band_log
    return lower, upper, summary.v_quantile, summary


# -- hypothesis tests --------------------------------------------------------


class TestKind(str, enum.Enum):
    STAGE = "stage"
    GROUP = "group"
    PREV_TYPE = "prevtype"


@dataclass(frozen=True)
class TestResult:
    """Outcome of a bootstrap Wald-type equality test at one time point.

    ``statistic`` is ``|difference| / SD`` of the replicate differences.
    A zero SD makes the test inconclusive: statistic and p-value are NaN,
    ``reject`` is False and ``flag`` says so.
    """

    statistic: float
    p_value: float
    reject: bool
    t: float
    kind: TestKind
    functional: str
    difference: float
    se: float
    alpha: float
    B: int
    n_kept: int
    flag: str = ""

    def to_row(self):
        return {
            "kind": self.kind.value,
            "functional": self.functional,
            "t": self.t,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "reject": self.reject,
            "difference": self.difference,
            "se": self.se,
            "B": self.B,
            "flag": self.flag,
        }


def _functional_target(functional, j, k=None, plugin=Variant.SURV_PL):
    v = Variant(functional)
    if v is Variant.CIF:
        return Target(v, j, cause=1 if k is None else k)
    if v.is_survival:
        return Target(v, j)
    if v is Variant.CUM_CSH:
        return Target(v, j, cause=1 if k is None else k, plugin=plugin)
    raise ValueError(f"functional must be cif, a survival variant or csh, got {v.value!r}")


def _functional_name(target):
    if target.variant is Variant.CUM_CSH:
        return f"csh:{target.plugin.value}"
    if target.variant.is_survival:
        return f"surv:{target.variant.value}"
    return target.variant.value


def _point_at(sample, target, t):
    value = evaluate_weighted(sample, [target], [t])[target][0, 0]
    if np.isnan(value):
        raise UnidentifiableError(f"{target.label} is not identifiable at t={t!r}")
    return float(value)


def _decide(diff, boot_diff, t, kind, functional, alpha, B):
    kept = int(np.sum(~np.isnan(boot_diff)))
    _check_drop(np.array([kept]), B, [t], f"{kind.value} test")
    sd = float(np.nanstd(boot_diff, ddof=1)) if kept > 1 else float("nan")
    z = z_critical(alpha)
    if not sd > 0:
        return TestResult(float("nan"), float("nan"), False, float(t), kind, functional, diff, sd, alpha, B, kept, "inconclusive: zero bootstrap SD")
    stat = abs(diff) / sd
    p = float(2 * norm.sf(stat))
    return TestResult(stat, p, bool(stat > z), float(t), kind, functional, diff, sd, alpha, B, kept)


def test_stage(sample, j, j2, t, functional="cif", k=1, B=100, alpha=0.05, random_state=None, plugin=Variant.SURV_PL, workers=1):
    """Test 1: equality of one functional at stages ``j`` and ``j2`` at time ``t``.

    Both stage estimates come from the same resampled subjects, so the SD of
    their replicate difference accounts for within-subject correlation.
    """
    if j == j2:
        raise ValueError("stages must differ")
    ta = _functional_target(functional, j, k, plugin)
    tb = _functional_target(functional, j2, k, plugin)
    diff = _point_at(sample, ta, t) - _point_at(sample, tb, t)
    boot = bootstrap_replicates(sample, [ta, tb], [t], B, random_state, workers)
    return _decide(diff, (boot[ta] - boot[tb])[:, 0], t, TestKind.STAGE, _functional_name(ta), alpha, B)


def test_group(sample_g1, sample_g2, j, t, functional="cif", k=1, B=100, alpha=0.05, random_state=None, plugin=Variant.SURV_PL, workers=1):
    """Test 2: equality of one stage-``j`` functional between two groups.

    Each group is resampled separately, with its own censoring estimate, from
    independent random streams.
    """
    for name, s in (("first", sample_g1), ("second", sample_g2)):
        if s is None or len(s) == 0:
            raise ValueError(f"{name} group is empty")
    target = _functional_target(functional, j, k, plugin)
    diff = _point_at(sample_g1, target, t) - _point_at(sample_g2, target, t)
    ss = _rng.as_seed_sequence(random_state)
    b1 = bootstrap_replicates(sample_g1, [target], [t], B, _rng.child(ss, 0), workers)[target]
    b2 = bootstrap_replicates(sample_g2, [target], [t], B, _rng.child(ss, 1), workers)[target]
    return _decide(diff, (b1 - b2)[:, 0], t, TestKind.GROUP, _functional_name(target), alpha, B)


def test_prev_type(sample, j, k, l, t, B=100, alpha=0.05, random_state=None, workers=1):
    """Test 3: ``F_{k|k}^(j)(t) = F_{k|l}^(j)(t)``, incidence given the previous cause."""
    if k == l:
        raise ValueError("test needs two different previous causes (k != l)")
    if j < 2:
        raise ValueError("conditional incidence needs j >= 2")
    ta = Target(Variant.COND_CIF, j, cause=k, prev_cause=k)
    tb = Target(Variant.COND_CIF, j, cause=k, prev_cause=l)
    diff = _point_at(sample, ta, t) - _point_at(sample, tb, t)
    boot = bootstrap_replicates(sample, [ta, tb], [t], B, random_state, workers)
    return _decide(diff, (boot[ta] - boot[tb])[:, 0], t, TestKind.PREV_TYPE, f"cond:k{k}", alpha, B)


# keep pytest from collecting these when imported into test modules
for _obj in (TestKind, TestResult, test_stage, test_group, test_prev_type):
    _obj.__test__ = False
