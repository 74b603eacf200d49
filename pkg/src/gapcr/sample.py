"""Observed recurrent-event samples with competing risks.

A subject contributes a censoring time ``C`` and an ordered list of gap
records.  Every record but the last is an observed event with cause in
``1..K``; the last record is the censored remainder ``C - Y_{M-1}`` with
cause 0.  Internally a :class:`Sample` keeps dense ``(n, J)`` arrays padded
past each subject's last stage with ``gap = 0``, ``cause = 0`` and
``cum = C`` so that stage-wise estimators are plain column operations.
"""

from collections import namedtuple
from dataclasses import dataclass
from functools import cached_property
from typing import Hashable, Mapping, Sequence

import numpy as np

from .curves import StepCurve
from .exceptions import NoStageDataError, SampleError, UnidentifiableError

StageColumns = namedtuple("StageColumns", "gap cum cause prev_cum prev_cause")


@dataclass(frozen=True)
class GapRecord:
    stage: int
    gap_time: float
    cum_time: float
    cause: int


@dataclass(frozen=True)
class SubjectRecord:
    """One subject's censoring time and its observed gap records."""

    subject_id: Hashable
    censor_time: float
    records: tuple

    def __post_init__(self):
        records = tuple(self.records)
        object.__setattr__(self, "records", records)
        sid = self.subject_id
        if not records:
            raise SampleError("subject has no records", sid)
        if not self.censor_time > 0:
            raise SampleError(f"censor time must be positive, got {self.censor_time}", sid)
        prev = 0.0
        for pos, rec in enumerate(records, start=1):
            if rec.stage != pos:
                raise SampleError(f"expected stage {pos}, found {rec.stage}", sid, rec.stage)
            if rec.gap_time < 0:
                raise SampleError(f"negative gap time {rec.gap_time}", sid, rec.stage)
            last = pos == len(records)
            if last and rec.cause != 0:
                raise SampleError("terminal record must be censored (cause 0)", sid, rec.stage)
            if not last:
                if rec.cause <= 0:
                    raise SampleError("only the terminal record may be censored", sid, rec.stage)
                if not rec.cum_time > prev:
                    raise SampleError("event times must be strictly increasing", sid, rec.stage)
                if not rec.cum_time < self.censor_time:
                    raise SampleError(
                        f"event time {rec.cum_time} is not before censor time {self.censor_time}",
                        sid,
                        rec.stage,
                    )
            prev = rec.cum_time
        if records[-1].cum_time != self.censor_time:
            raise SampleError("terminal record must end at the censor time", sid, len(records))

    @property
    def m_stage(self):
        return len(self.records)


def _sorted_ids(ids):
    try:
        return sorted(ids)
    except TypeError:
        return sorted(ids, key=repr)


class Sample:
    """Immutable collection of subjects, stored as padded stage arrays.

    Use :func:`build_sample` or :meth:`Sample.from_subjects` rather than the
    constructor, which trusts its inputs.
    """

    def __init__(self, gap, cum, cause, censor, m_stage, subject_ids, num_causes=2):
        self.gap = np.asarray(gap, dtype=float)
        self.cum = np.asarray(cum, dtype=float)
        self.cause = np.asarray(cause, dtype=np.int64)
        self.censor = np.asarray(censor, dtype=float)
        self.m_stage = np.asarray(m_stage, dtype=np.int64)
        for a in (self.gap, self.cum, self.cause, self.censor, self.m_stage):
            a.setflags(write=False)
        self.subject_ids = tuple(subject_ids)
        self.num_causes = int(num_causes)
        if self.censor.size == 0:
            raise SampleError("no subjects parsed")
        if self.cause.max(initial=0) > self.num_causes:
            raise SampleError(f"cause {self.cause.max()} exceeds num_causes={self.num_causes}")

    @classmethod
    def from_subjects(cls, subjects, num_causes=2):
        subjects = list(subjects)
        if not subjects:
            raise SampleError("no subjects parsed")
        n = len(subjects)
        width = max(s.m_stage for s in subjects)
        censor = np.array([s.censor_time for s in subjects], dtype=float)
        gap = np.zeros((n, width))
        cause = np.zeros((n, width), dtype=np.int64)
        cum = np.repeat(censor[:, None], width, axis=1)
        for i, s in enumerate(subjects):
            m = s.m_stage
            gap[i, :m] = [r.gap_time for r in s.records]
            cum[i, :m] = [r.cum_time for r in s.records]
            cause[i, :m] = [r.cause for r in s.records]
        m_stage = [s.m_stage for s in subjects]
        return cls(gap, cum, cause, censor, m_stage, [s.subject_id for s in subjects], num_causes)

    @property
    def n(self):
        return self.censor.size

    @property
    def max_stage(self):
        """Largest stage index carrying any record (observed or censored)."""
        return self.gap.shape[1]

    @cached_property
    def subjects(self):
        out = []
        for i, sid in enumerate(self.subject_ids):
            m = int(self.m_stage[i])
            recs = tuple(
                GapRecord(j + 1, float(self.gap[i, j]), float(self.cum[i, j]), int(self.cause[i, j]))
                for j in range(m)
            )
            out.append(SubjectRecord(sid, float(self.censor[i]), recs))
        return tuple(out)

    def stage_columns(self, j):
        """Per-subject ``(T_j, Y_j, D_j, Y_{j-1}, D_{j-1})`` with padding.

        ``prev_cause`` is -1 for ``j == 1``.  Raises :class:`NoStageDataError`
        when no subject has a record at stage ``j``.
        """
        j = int(j)
        if j < 1:
            raise ValueError(f"stage must be >= 1, got {j}")
        if j > self.max_stage:
            raise NoStageDataError(j)
        gap, cum, cause = self.gap[:, j - 1], self.cum[:, j - 1], self.cause[:, j - 1]
        if j == 1:
            prev_cum = np.zeros(self.n)
            prev_cause = np.full(self.n, -1, dtype=np.int64)
        else:
            prev_cum, prev_cause = self.cum[:, j - 2], self.cause[:, j - 2]
        return StageColumns(gap, cum, cause, prev_cum, prev_cause)

    def take(self, indices):
        """Sample made of whole subject trajectories at ``indices`` (repeats allowed)."""
        idx = np.asarray(indices, dtype=np.int64)
        width = max(int(self.m_stage[idx].max(initial=1)), 1)
        return Sample(
            self.gap[idx, :width],
            self.cum[idx, :width],
            self.cause[idx, :width],
            self.censor[idx],
            self.m_stage[idx],
            [self.subject_ids[i] for i in idx],
            self.num_causes,
        )

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Sample(n={self.n}, max_stage={self.max_stage}, num_causes={self.num_causes})"


def build_sample(
    raw_rows: Sequence,
    censor_times: Mapping | None = None,
    num_causes: int = 2,
    subject_ids: Sequence | None = None,
) -> Sample:
    """Assemble a :class:`Sample` from long-format rows.

    Parameters
    ----------
    raw_rows : sequence of (subject_id, stage, gap_time, cause)
        One row per observed gap.  A terminal cause-0 row is optional; when
        present without an entry in `censor_times` it defines ``C`` as the sum
        of the subject's gaps.
    censor_times : mapping subject_id -> C, optional
    num_causes : int
        Number of competing causes ``K``.
    subject_ids : sequence, optional
        Extra subjects to include even if they have no rows (they then need
        a censor time and become a single censored record).

    Returns
    -------
    Sample
        Subjects ordered by sorted subject id, so results do not depend on
        input row order.
    """
    censor_times = dict(censor_times or {})
    by_subject = {}
    for row in raw_rows:
        try:
            sid, stage, gap_time, cause = row
            stage, gap_time, cause = int(stage), float(gap_time), int(cause)
        except (TypeError, ValueError) as exc:
            raise SampleError(f"malformed row {row!r}: {exc}") from None
        by_subject.setdefault(sid, []).append((stage, gap_time, cause))
    for sid in subject_ids or ():
        by_subject.setdefault(sid, [])
    for sid in censor_times:
        by_subject.setdefault(sid, [])
    if not by_subject:
        raise SampleError("no subjects parsed")

    subjects = []
    for sid in _sorted_ids(by_subject):
        rows = sorted(by_subject[sid])
        stages = [r[0] for r in rows]
        if stages != list(range(1, len(rows) + 1)):
            expected = next((k for k, s in enumerate(stages, 1) if s != k), len(rows) + 1)
            raise SampleError(f"stages are not contiguous from 1 (missing stage {expected})", sid)
        terminal = None
        for pos, (stage, gap_time, cause) in enumerate(rows):
            if gap_time < 0:
                raise SampleError(f"negative gap time {gap_time}", sid, stage)
            if cause < 0 or cause > num_causes:
                raise SampleError(f"cause {cause} outside 0..{num_causes}", sid, stage)
            if cause == 0:
                if pos != len(rows) - 1:
                    raise SampleError("censored row must be the last stage", sid, stage)
                terminal = gap_time
        events = rows[:-1] if terminal is not None else rows
        records = []
        y = 0.0
        for stage, gap_time, cause in events:
            if gap_time == 0:
                raise SampleError("observed event with zero gap time", sid, stage)
            y = y + gap_time
            records.append(GapRecord(stage, gap_time, y, cause))
        if sid in censor_times:
            c = float(censor_times[sid])
            if terminal is not None and not np.isclose(c - y, terminal, rtol=1e-9, atol=1e-12):
                raise SampleError(
                    f"censored gap {terminal} disagrees with censor time {c} (expected {c - y})",
                    sid,
                    len(rows),
                )
        elif terminal is not None:
            c = y + terminal
        else:
            raise SampleError("missing censor time", sid)
        if not c > 0:
            raise SampleError(f"censor time must be positive, got {c}", sid)
        if records and not y < c:
            raise SampleError(
                f"cumulative event time {y} is not before censor time {c}", sid, records[-1].stage
            )
        records.append(GapRecord(len(records) + 1, c - y, c, 0))
        subjects.append(SubjectRecord(sid, c, tuple(records)))
    return Sample.from_subjects(subjects, num_causes=num_causes)


def fit_censor_survival(sample: Sample) -> StepCurve:
    """Empirical censoring survival ``G(t) = #{C_i > t} / n``.

    Uses strict inequality, so ``G`` drops at each observed censor time.
    """
    c = np.sort(sample.censor)
    n = c.size
    if n == 0:
        raise SampleError("no subjects parsed")
    times = np.unique(c)
    # number of C strictly greater than times[k]
    greater = n - np.searchsorted(c, times, side="right")
    return StepCurve(times, greater / n, initial_value=1.0)


def identifiable_tau(sample: Sample, j: int, k: int | None = None) -> float:
    """Largest uncensored stage-``j`` gap of cause ``k`` (any cause if ``None``)."""
    cols = sample.stage_columns(j)
    mask = cols.cause == k if k is not None else cols.cause > 0
    if not mask.any():
        what = f"cause {k}" if k is not None else "any cause"
        raise UnidentifiableError(f"estimand unidentifiable at stage {j}: no uncensored {what} gaps")
    return float(cols.gap[mask].max())
