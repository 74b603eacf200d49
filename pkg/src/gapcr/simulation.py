"""Frailty-based generator of recurrent gap times with two competing causes.

Marginally every stage has

    F_1(t) = (1 - exp(-a t)) / a,    F_2(t) = (1 - 1/a)(1 - exp(-a t)),

so ``S(t) = exp(-a t)``, ``Lambda_1(t) = t`` and ``Lambda_2(t) = (a - 1) t``.
Cause-1 gaps of one subject share a gamma frailty ``W ~ Gamma(1/(theta-1), 1)``
which makes them positively associated for ``theta > 1``; ``theta = 1`` is
the independence limit (``W == 1``).  Cause-2 gaps are exponential given the
cause.  Censoring is ``C ~ Uniform(0, censor_upper)``, independent of all
else.
"""

import math
import os
import time
from collections import namedtuple
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import norm

from . import _rng
from .estimators import SURVIVAL_VARIANTS, Target, Variant, evaluate_weighted
from .exceptions import ConfigError
from .sample import Sample

SURVIVAL_LEVELS = (0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2)

Truth = namedtuple("Truth", "F1 F2 S Lambda1 Lambda2")


def survival_grid(alpha=1.25, levels=SURVIVAL_LEVELS):
    """Times where ``S(t) = exp(-alpha t)`` equals each of `levels`."""
    return tuple(float(-math.log(s) / alpha) for s in levels)


DEFAULT_GRID = survival_grid()


def true_functionals(alpha_j, t):
    """Closed-form ``(F1, F2, S, Lambda1, Lambda2)`` of the generator at ``t``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    a = float(alpha_j)
    cdf = -np.expm1(-a * t)
    return Truth(cdf / a, (1 - 1 / a) * cdf, np.exp(-a * t), t * 1.0, (a - 1) * t)


def sample_frailty(theta, rng, size=None):
    """Gamma frailty with shape ``1/(theta-1)`` and unit scale; ``1`` when ``theta == 1``."""
    if theta < 1:
        raise ConfigError(f"theta must be ≥ 1, got {theta}")
    if theta == 1:
        return 1.0 if size is None else np.ones(size)
    return rng.gamma(1.0 / (theta - 1.0), 1.0, size=size)


def _marginal_cif1(t, a):
    return -np.expm1(-a * np.asarray(t, dtype=float)) / a


def type1_mass(w, alpha_j, theta):
    """``F_1(infinity | w)``: probability that a gap is of cause 1 given the frailty."""
    if theta == 1:
        return np.broadcast_to(1.0 / alpha_j, np.shape(w)) * 1.0
    return np.exp(np.asarray(w, dtype=float) * (1.0 - alpha_j ** (theta - 1.0)))


def conditional_cif1(t, w, alpha_j, theta):
    """``F_1(t | w) = exp[w (1 - F_1(t)^(1-theta))]``; the marginal ``F_1`` when ``theta == 1``."""
    x = _marginal_cif1(t, alpha_j)
    if theta == 1:
        return x
    with np.errstate(divide="ignore"):
        return np.exp(np.asarray(w, dtype=float) * (1.0 - x ** (1.0 - theta)))


def conditional_cif1_inv(u, w, alpha_j, theta):
    """Closed-form inverse of :func:`conditional_cif1` in ``t``.

    Raises ``ValueError`` if any ``u`` is outside ``(0, F_1(infinity | w))``.
    """
    u = np.asarray(u, dtype=float)
    mass = type1_mass(w, alpha_j, theta)
    if np.any(u <= 0) or np.any(u >= mass):
        raise ValueError("u must lie in (0, F_1(inf | w)); larger draws belong to cause 2")
    if theta == 1:
        x = u
    else:
        x = (1.0 - np.log(u) / w) ** (1.0 / (1.0 - theta))
    return -np.log1p(-alpha_j * x) / alpha_j


@dataclass(frozen=True)
class SimConfig:
    """Generator and Monte Carlo study settings.

    ``alpha_j`` is either one rate for all stages or a per-stage sequence
    (the last entry is reused past its end).
    """

    theta: float = 1.0
    alpha_j: float | tuple = 1.25
    censor_upper: float = 10.0
    n: int = 200
    reps: int = 500
    B: int = 100
    grid: tuple = DEFAULT_GRID
    seed: int = 0
    alpha: float = 0.05

    def __post_init__(self):
        rates = self.alpha_j if isinstance(self.alpha_j, (tuple, list)) else (self.alpha_j,)
        object.__setattr__(self, "alpha_j", tuple(float(a) for a in rates) if len(rates) > 1 else float(rates[0]))
        object.__setattr__(self, "grid", tuple(float(t) for t in self.grid))
        if not self.theta >= 1:
            raise ConfigError(f"theta must be ≥ 1, got {self.theta}")
        if not all(a > 1 for a in rates):
            raise ConfigError("alpha_j must exceed 1 at every stage")
        if not self.censor_upper > 0:
            raise ConfigError("censor_upper must be positive")
        if int(self.n) < 1 or int(self.reps) < 1 or int(self.B) < 2:
            raise ConfigError("need n >= 1, reps >= 1 and B >= 2")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if not self.grid or min(self.grid) < 0:
            raise ConfigError("grid must be a nonempty list of nonnegative times")

    def alpha_at(self, j):
        if isinstance(self.alpha_j, tuple):
            return self.alpha_j[min(j, len(self.alpha_j)) - 1]
        return self.alpha_j


def _generate(config, n, rng):
    """Padded stage arrays for `n` subjects, following each until censoring."""
    theta = config.theta
    w = sample_frailty(theta, rng, size=n)
    censor = rng.uniform(0.0, config.censor_upper, size=n)
    y = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    gaps, cums, causes = [], [], []
    m_stage = np.zeros(n, dtype=np.int64)
    j = 0
    while alive.any():
        j += 1
        a = config.alpha_at(j)
        u = rng.uniform(size=n)
        e = rng.standard_exponential(size=n)
        is1 = u < type1_mass(w, a, theta)
        t = e / a
        if is1.any():
            t[is1] = conditional_cif1_inv(u[is1], w[is1] if theta != 1 else 1.0, a, theta)
        y_new = y + t
        observed = alive & (y_new < censor)
        closing = alive & ~observed
        gaps.append(np.where(observed, t, np.where(closing, censor - y, 0.0)))
        cums.append(np.where(observed, y_new, censor))
        causes.append(np.where(observed, np.where(is1, 1, 2), 0))
        m_stage[closing] = j
        y = np.where(observed, y_new, y)
        alive = observed
    return np.column_stack(gaps), np.column_stack(cums), np.column_stack(causes), censor, m_stage


def gen_sample(config: SimConfig, rng, n=None) -> Sample:
    """Draw a sample of ``n`` (default ``config.n``) independent subjects."""
    n = config.n if n is None else n
    gap, cum, cause, censor, m = _generate(config, n, rng)
    return Sample(gap, cum, cause, censor, m, range(n), num_causes=2)


def gen_subject(config: SimConfig, rng):
    """One simulated :class:`SubjectRecord`."""
    return gen_sample(config, rng, n=1).subjects[0]


def censoring_rates(sample, stages=(1, 2, 3)):
    """Fraction of subjects whose stage-``j`` gap is the censored one."""
    return tuple(float(np.mean(sample.m_stage == j)) for j in stages)


def simulated_censoring_rates(config: SimConfig, n, rng, stages=(1, 2, 3), batch=10_000):
    """:func:`censoring_rates` over `n` generated subjects, drawn in batches.

    Batching bounds memory: a sample is stored densely up to its largest
    stage, which grows quickly with n under strong frailty.
    """
    counts = np.zeros(len(stages))
    done = 0
    while done < n:
        size = min(batch, n - done)
        m = gen_sample(config, rng, n=size).m_stage
        counts += [np.sum(m == j) for j in stages]
        done += size
    return tuple(float(c / n) for c in counts)


# -- Monte Carlo study -------------------------------------------------------

TEST_FAMILIES = ("F",) + tuple(f"S{i}" for i in range(1, 5)) + tuple(f"L{i}" for i in range(1, 5))


def default_targets(stages=(2, 3)):
    """Cause-1 CIF, the four survival estimators and four cause-1 hazards per stage."""
    out = []
    for j in stages:
        out.append(Target(Variant.CIF, j, cause=1))
        out.extend(Target(v, j) for v in SURVIVAL_VARIANTS)
        out.extend(Target(Variant.CUM_CSH, j, cause=1, plugin=v) for v in SURVIVAL_VARIANTS)
    return out


def _family(target):
    if target.variant is Variant.CIF:
        return "F"
    if target.variant.is_survival:
        return f"S{SURVIVAL_VARIANTS.index(target.variant) + 1}"
    return f"L{SURVIVAL_VARIANTS.index(target.plugin) + 1}"


def target_truth(target, config, t):
    """True value of `target` under the generator, or ``None`` if not closed form."""
    tr = true_functionals(config.alpha_at(target.stage), t)
    if target.variant is Variant.CIF:
        return tr.F1 if target.cause == 1 else tr.F2
    if target.variant.is_survival:
        return tr.S
    if target.variant is Variant.CUM_CSH:
        return tr.Lambda1 if target.cause == 1 else tr.Lambda2
    return None


@dataclass
class McSummaryRow:
    target: str
    stage: int
    n: int
    theta: float
    t: float
    truth: float
    bias: float
    ese: float | None
    bse: float
    cp: float
    n_valid: int
    flags: str = ""


@dataclass
class McStudyResult:
    config: SimConfig
    summary: list
    rejection: list
    failures: int
    wall_time: float
    replicate_estimates: dict = field(repr=False, default_factory=dict)

    def manifest(self):
        # wall time is left out so that reruns give identical files
        return {"config": asdict(self.config), "failures": self.failures}


def _sd(boot):
    """Column-wise sample SD over non-NaN rows and the count of rows kept."""
    kept = np.sum(~np.isnan(boot), axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        sd = np.nanstd(boot, axis=0, ddof=1) if boot.shape[0] > 1 else np.full(boot.shape[1], np.nan)
    return sd, kept


def _replication(args):
    config, r, targets, pairs = args
    root = _rng.as_seed_sequence(config.seed)
    sample = gen_sample(config, _rng.generator(root, r, 0))
    boot_ss = _rng.child(root, r, 1)
    weights = np.vstack([np.ones((1, sample.n)), _rng.bootstrap_weights(sample.n, boot_ss, range(config.B))])
    grid = np.asarray(config.grid)
    values = evaluate_weighted(sample, targets, grid, weights)
    z = norm.ppf(1 - config.alpha / 2)
    out = {"est": {}, "se": {}, "cover": {}, "reject": {}, "failed": False}
    min_kept = config.B / 2
    for target in targets:
        v = values[target]
        point, boot = v[0], v[1:]
        se, kept = _sd(boot)
        se = np.where(kept >= min_kept, se, np.nan)
        truth = target_truth(target, config, grid)
        with np.errstate(invalid="ignore", divide="ignore"):
            half = np.exp(z * se / point)
            cover = (point / half <= truth) & (truth <= point * half) & (point > 0)
        out["est"][target] = point
        out["se"][target] = se
        out["cover"][target] = np.where(np.isnan(se) | np.isnan(point), np.nan, cover)
    for fam, (ta, tb) in pairs.items():
        va, vb = values[ta], values[tb]
        diff_point = va[0] - vb[0]
        sd, kept = _sd(va[1:] - vb[1:])
        with np.errstate(invalid="ignore", divide="ignore"):
            stat = np.abs(diff_point) / sd
        ok = (kept >= min_kept) & (sd > 0) & ~np.isnan(diff_point)
        out["reject"][fam] = np.where(ok, stat > z, np.nan)
    return out


def _test_pairs(targets, stages):
    by_key = {}
    for t in targets:
        by_key[(_family(t), t.stage)] = t
    pairs = {}
    for fam in TEST_FAMILIES:
        a, b = (fam, stages[0]), (fam, stages[1])
        if a in by_key and b in by_key:
            pairs[fam] = (by_key[a], by_key[b])
    return pairs


def run_mc_study(config: SimConfig, targets=None, test_stages=(2, 3), workers=1, keep_estimates=False):
    """Monte Carlo study: bias, empirical and bootstrap SE, log-CI coverage, and Test-1 rejection rates.

    Each replication draws a fresh sample, computes every target on the grid,
    bootstraps it ``B`` times (whole-subject resampling, shared across targets
    so stage differences keep their correlation) and tests equality of each
    target family between the two `test_stages`.

    Replication ``r`` uses random streams derived only from ``(seed, r)``, so
    results are identical for any `workers`.
    """
    targets = default_targets(test_stages) if targets is None else list(targets)
    for t in targets:
        if target_truth(t, config, 0.0) is None:
            raise ConfigError(f"no closed-form truth for target {t.label}")
    pairs = _test_pairs(targets, test_stages) if test_stages else {}
    jobs = [(config, r, targets, pairs) for r in range(config.reps)]
    start = time.perf_counter()
    if workers is None:
        workers = os.cpu_count() or 1
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reps = list(pool.map(_replication, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        reps = [_replication(job) for job in jobs]
    wall = time.perf_counter() - start
    return _aggregate(config, targets, pairs, reps, wall, keep_estimates)


def _aggregate(config, targets, pairs, reps, wall, keep_estimates):
    grid = np.asarray(config.grid)
    summary = []
    est_store = {}
    failed = np.zeros(len(reps), dtype=bool)
    for target in targets:
        est = np.array([r["est"][target] for r in reps])
        se = np.array([r["se"][target] for r in reps])
        cover = np.array([r["cover"][target] for r in reps])
        failed |= np.isnan(se).any(axis=1) | np.isnan(est).any(axis=1)
        est_store[target] = est
        truth = target_truth(target, config, grid)
        for m, t in enumerate(grid):
            ok = ~np.isnan(est[:, m]) & ~np.isnan(se[:, m])
            e = est[ok, m]
            flags = []
            ese = float(np.std(e, ddof=1)) if e.size > 1 else None
            if ese is None:
                flags.append("ese_undefined")
            summary.append(
                McSummaryRow(
                    target=target.label,
                    stage=target.stage,
                    n=config.n,
                    theta=config.theta,
                    t=float(t),
                    truth=float(truth[m]),
                    bias=float(e.mean() - truth[m]) if e.size else float("nan"),
                    ese=ese,
                    bse=float(se[ok, m].mean()) if e.size else float("nan"),
                    cp=float(cover[ok, m].mean()) if e.size else float("nan"),
                    n_valid=int(ok.sum()),
                    flags=";".join(flags),
                )
            )
    rejection = []
    for m, t in enumerate(grid):
        row = {"n": config.n, "theta": config.theta, "t": float(t)}
        for fam in pairs:
            rej = np.array([r["reject"][fam][m] for r in reps])
            row[fam] = float(np.nanmean(rej)) if np.any(~np.isnan(rej)) else float("nan")
        rejection.append(row)
    failures = int(failed.sum())
    if failures > 0.05 * len(reps):
        raise RuntimeError(f"{failures} of {len(reps)} replications failed (more than 5%)")
    return McStudyResult(config, summary, rejection, failures, wall, est_store if keep_estimates else {})
