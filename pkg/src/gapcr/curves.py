"""Right-continuous step functions used as the carrier for every estimate."""

from dataclasses import dataclass

import numpy as np


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True).reshape(-1)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class StepCurve:
    """Piecewise-constant, right-continuous function of time.

    Parameters
    ----------
    jump_times : array_like
        Strictly increasing jump locations.
    values : array_like
        ``values[k]`` is the value on ``[jump_times[k], jump_times[k + 1])``.
    initial_value : float
        Value before the first jump.
    """

    jump_times: np.ndarray
    values: np.ndarray
    initial_value: float = 0.0

    def __post_init__(self):
        jt = _frozen(self.jump_times)
        vals = _frozen(self.values)
        if jt.shape != vals.shape:
            raise ValueError("jump_times and values must have the same length")
        if jt.size > 1 and not np.all(np.diff(jt) > 0):
            raise ValueError("jump_times must be strictly increasing")
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "initial_value", float(self.initial_value))

    @classmethod
    def from_points(cls, times, values, initial_value=0.0):
        """Build a curve from possibly repeated times, keeping the last value."""
        times = np.asarray(times, dtype=float).reshape(-1)
        values = np.asarray(values, dtype=float).reshape(-1)
        order = np.argsort(times, kind="stable")
        times, values = times[order], values[order]
        if times.size:
            last = np.r_[times[1:] != times[:-1], True]
            times, values = times[last], values[last]
        return cls(times, values, initial_value)

    def _lookup(self, t, side):
        t = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t, side=side) - 1
        padded = np.r_[self.initial_value, self.values]
        return padded[idx + 1]

    def __call__(self, t):
        """Right-continuous value: the value of the last jump ``<= t``."""
        return self._lookup(t, "right")

    def left_limit(self, t):
        """Left limit ``f(t-)``: the value of the last jump strictly before ``t``."""
        return self._lookup(t, "left")

    def __len__(self):
        return self.jump_times.size

    def increments(self):
        """Jump sizes at each jump location."""
        return np.diff(np.r_[self.initial_value, self.values])

    def to_rows(self):
        """``(t, value)`` pairs, starting with the value at time zero."""
        rows = [(0.0, float(self(0.0)))]
        rows += [(float(t), float(v)) for t, v in zip(self.jump_times, self.values) if t > 0]
        return rows

    def __repr__(self):
        return (
            f"StepCurve(n_jumps={len(self)}, initial_value={self.initial_value!r}, "
            f"range=[{self.jump_times[:1]}, {self.jump_times[-1:]}])"
        )
