"""Vectorised evaluation of the IPCW estimators under frequency weights.

Every estimator is a sum over subjects, so a bootstrap replicate is the
same computation with a row of resampling counts in place of ones.  The
engine works on a ``(B, n)`` weight matrix and returns ``(B, m)`` arrays;
row ``b`` equals the estimator applied to the sample where subject ``i``
appears ``weights[b, i]`` times.  Entries that are unidentifiable (time
beyond the row's identifiable range, truncated hazards, zero previous-type
mass) are NaN.
"""

import numpy as np

from .curves import StepCurve

# cap on the number of (replicate x subject x time) cells per dense block
_BLOCK_CELLS = 2_000_000


def _safe_div(num, den):
    """``num / den`` with the 0/0 = 0 convention wherever ``den <= 0``."""
    num, den = np.broadcast_arrays(num, den)
    out = np.zeros(num.shape)
    np.divide(num, den, out=out, where=den > 0)
    return out


class EmpiricalCensorWeights:
    """Empirical ``G(t) = sum_i w_i I(C_i > t) / sum_i w_i`` for each weight row."""

    def __init__(self, censor, weights):
        order = np.argsort(censor, kind="stable")
        self.sorted_censor = censor[order]
        w = weights[:, order]
        tail = np.zeros((w.shape[0], w.shape[1] + 1))
        tail[:, :-1] = np.cumsum(w[:, ::-1], axis=1)[:, ::-1]
        self.tail = tail / w.sum(axis=1, keepdims=True)
        self.inv_tail = _safe_div(1.0, self.tail)

    def at(self, a):
        return self.tail[:, np.searchsorted(self.sorted_censor, a, side="right")]

    def left(self, a):
        return self.tail[:, np.searchsorted(self.sorted_censor, a, side="left")]

    def inv_at(self, a):
        """``1 / G(a)``, or 0 where ``G(a) = 0``."""
        return self.inv_tail[:, np.searchsorted(self.sorted_censor, a, side="right")]

    def inv_left(self, a):
        return self.inv_tail[:, np.searchsorted(self.sorted_censor, a, side="left")]


class CurveCensorWeights:
    """A fixed censoring survival curve shared by every weight row."""

    def __init__(self, curve: StepCurve):
        self.curve = curve

    def at(self, a):
        return self.curve(a)[None, ...]

    def left(self, a):
        return self.curve.left_limit(a)[None, ...]

    def inv_at(self, a):
        return _safe_div(1.0, self.at(a))

    def inv_left(self, a):
        return _safe_div(1.0, self.left(a))


def _group_sum(values, keys_sorted):
    """Sum columns of ``values`` over runs of equal sorted keys.

    Returns the distinct keys and a ``(B, n_keys)`` array.
    """
    if keys_sorted.size == 0:
        return keys_sorted, np.zeros((values.shape[0], 0))
    starts = np.flatnonzero(np.r_[True, keys_sorted[1:] != keys_sorted[:-1]])
    return keys_sorted[starts], np.add.reduceat(values, starts, axis=1)


class StageEngine:
    """Weighted estimators for one stage ``j``."""

    def __init__(self, cols, weights, gweights, num_causes):
        self.cols = cols
        self.weights = weights
        self.gw = gweights
        self.num_causes = num_causes
        self.total = weights.sum(axis=1)
        self._pl_cache = None

    # -- building blocks ---------------------------------------------------

    def _event_terms(self, mask):
        """Sorted gaps and per-row IPCW terms ``w_i / G(Y_ij)`` for masked events."""
        gap = self.cols.gap[mask]
        order = np.argsort(gap, kind="stable")
        gap = gap[order]
        w = self.weights[:, mask][:, order]
        return gap, w * self.gw.inv_at(self.cols.cum[mask][order])

    def _cum_terms(self, mask):
        gap, terms = self._event_terms(mask)
        csum = np.zeros((terms.shape[0], terms.shape[1] + 1))
        np.cumsum(terms, axis=1, out=csum[:, 1:])
        return gap, csum

    def tau(self, mask):
        """Per-row largest masked gap among subjects with positive weight."""
        present = (self.weights > 0) & mask[None, :]
        gaps = np.where(present, self.cols.gap[None, :], -np.inf)
        return gaps.max(axis=1, initial=-np.inf)

    def _mask(self, cause=None, prev_cause=None):
        if cause is None:
            m = self.cols.cause > 0
        else:
            m = self.cols.cause == cause
        if prev_cause is not None:
            m = m & (self.cols.prev_cause == prev_cause)
        return m

    def _risk_sum(self, times, inclusive, left):
        """``sum_i w_i I(T_ij > t) / G(Y_i(j-1) + t)`` (or ``>=`` and ``G(.-)``)."""
        times = np.asarray(times, dtype=float)
        at_risk = self.cols.gap > 0
        gap = self.cols.gap[at_risk]
        prev = self.cols.prev_cum[at_risk]
        w = self.weights[:, at_risk]
        B = w.shape[0]
        out = np.zeros((B, times.size))
        if gap.size == 0 or times.size == 0:
            return out
        per_time = max(1, _BLOCK_CELLS // max(1, B * gap.size))
        inv_g = self.gw.inv_left if left else self.gw.inv_at
        for lo in range(0, times.size, per_time):
            tt = times[lo : lo + per_time]
            ind = gap[None, :] >= tt[:, None] if inclusive else gap[None, :] > tt[:, None]
            t_idx, s_idx = np.nonzero(ind)  # time-major ordering
            if t_idx.size == 0:
                continue
            terms = w[:, s_idx] * inv_g(prev[s_idx] + tt[t_idx])
            keys, sums = _group_sum(terms, t_idx)
            out[:, lo + keys] = sums
        return out

    # -- cumulative incidence ------------------------------------------------

    def cif(self, cause, times, prev_cause=None, side="right"):
        """``n^-1 sum_i w_i I(T_ij <= t, D_ij = k) / G(Y_ij)`` (left limit for side='left')."""
        gap, csum = self._cum_terms(self._mask(cause, prev_cause))
        idx = np.searchsorted(gap, times, side=side)
        return csum[:, idx] / self.total[:, None]

    def cif_jumps(self, cause, prev_cause=None):
        """Distinct event gaps of ``cause`` and the CIF increment at each."""
        gap, terms = self._event_terms(self._mask(cause, prev_cause))
        keys, sums = _group_sum(terms, gap)
        return keys, sums / self.total[:, None]

    def prev_mass(self, prev_cause, prev_engine):
        """Total cause-``l`` incidence at the previous stage, per row."""
        gap, csum = prev_engine._cum_terms(prev_engine._mask(prev_cause))
        return csum[:, -1] / prev_engine.total

    # -- survival variants ---------------------------------------------------

    def surv_sum(self, times, side="right", floor=True):
        s = np.ones((self.weights.shape[0], np.size(times)))
        for k in range(1, self.num_causes + 1):
            s -= self.cif(k, times, side=side)
        return np.maximum(s, 0.0) if floor else s

    def surv_ipcw(self, times, side="right"):
        left = side == "left"
        return self._risk_sum(times, inclusive=left, left=left) / self.total[:, None]

    def surv_unc(self, times, side="right"):
        gap, terms = self._event_terms(self._mask())
        suffix = np.zeros((terms.shape[0], terms.shape[1] + 1))
        suffix[:, :-1] = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1]
        idx = np.searchsorted(gap, times, side=side)
        return suffix[:, idx] / self.total[:, None]

    def _pl_product(self, t_max):
        """Product-limit survival at every distinct event gap ``<= t_max``."""
        if self._pl_cache is not None and self._pl_cache[0] >= t_max:
            return self._pl_cache[1], self._pl_cache[2]
        mask = (self.cols.cause > 0) & (self.cols.gap <= t_max)
        gap = self.cols.gap[mask]
        order = np.argsort(gap, kind="stable")
        gap = gap[order]
        terms = self.weights[:, mask][:, order] * self.gw.inv_at(self.cols.prev_cum[mask][order] + gap)
        v, num = _group_sum(terms, gap)
        den = self._risk_sum(v, inclusive=True, left=False)
        hazard = _safe_div(num, den)
        surv = np.cumprod(1.0 - hazard, axis=1)
        self._pl_cache = (t_max, v, surv)
        return v, surv

    def surv_pl(self, times, side="right"):
        times = np.asarray(times, dtype=float)
        t_max = float(times.max(initial=0.0))
        v, surv = self._pl_product(t_max)
        padded = np.ones((surv.shape[0], surv.shape[1] + 1))
        padded[:, 1:] = surv
        return padded[:, np.searchsorted(v, times, side=side)]

    def surv(self, variant, times, side="right", floor=True):
        if variant == "sum":
            return self.surv_sum(times, side=side, floor=floor)
        if variant == "ipcw":
            return self.surv_ipcw(times, side=side)
        if variant == "pl":
            return self.surv_pl(times, side=side)
        if variant == "unc":
            return self.surv_unc(times, side=side)
        raise ValueError(f"unknown survival variant {variant!r}")

    # -- cumulative cause-specific hazard -----------------------------------

    def cum_csh(self, cause, plugin, times):
        """Plug-in ``sum_{u <= t} dF_k(u) / S(u-)``; NaN from the first ``S(u-) <= 0``."""
        times = np.asarray(times, dtype=float)
        u, dF = self.cif_jumps(cause)
        keep = u <= times.max(initial=0.0)
        u, dF = u[keep], dF[:, keep]
        s_left = self.surv(plugin, u, side="left")
        bad = (s_left <= 0) & (dF > 0)
        ratio = _safe_div(dF, s_left)
        ratio[bad] = np.nan
        csum = np.zeros((ratio.shape[0], ratio.shape[1] + 1))
        csum[:, 1:] = np.cumsum(ratio, axis=1)  # NaN propagates past a truncation
        return csum[:, np.searchsorted(u, times, side="right")]


class SampleEngine:
    """Weighted evaluation of estimators over all stages of one sample."""

    def __init__(self, sample, weights=None, censor_curve=None):
        self.sample = sample
        if weights is None:
            weights = np.ones((1, sample.n))
        self.weights = np.atleast_2d(np.asarray(weights, dtype=float))
        if censor_curve is None:
            self.gw = EmpiricalCensorWeights(sample.censor, self.weights)
        else:
            self.gw = CurveCensorWeights(censor_curve)
        self._stages = {}

    def stage(self, j):
        if j not in self._stages:
            cols = self.sample.stage_columns(j)
            self._stages[j] = StageEngine(cols, self.weights, self.gw, self.sample.num_causes)
        return self._stages[j]

    def evaluate(self, target, times):
        """Values of ``target`` at ``times`` for every weight row; NaN if unidentifiable."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        eng = self.stage(target.stage)
        kind = target.kind
        if kind == "cif":
            values = eng.cif(target.cause, times)
            tau = eng.tau(eng._mask(target.cause))
        elif kind == "surv":
            values = eng.surv(target.plugin, times)
            tau = eng.tau(eng._mask())
        elif kind == "cum_csh":
            values = eng.cum_csh(target.cause, target.plugin, times)
            tau = eng.tau(eng._mask(target.cause))
        elif kind == "cond_cif":
            values = eng.cif(target.cause, times, prev_cause=target.prev_cause)
            mass = eng.prev_mass(target.prev_cause, self.stage(target.stage - 1))
            values = np.where(mass[:, None] > 0, _safe_div(values, mass[:, None]), np.nan)
            tau = eng.tau(eng._mask(target.cause, target.prev_cause))
        else:
            raise ValueError(f"unknown target kind {kind!r}")
        values = np.where(times[None, :] > tau[:, None], np.nan, values)
        return values
