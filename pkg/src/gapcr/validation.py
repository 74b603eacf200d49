"""Input checks shared by the estimator classes."""

import numpy as np

from .sample import Sample, build_sample


def check_sample(X, censor_times=None, num_causes=2):
    """Return `X` as a :class:`Sample`.

    `X` may already be a Sample, or an iterable of
    ``(subject_id, stage, gap_time, cause)`` rows (a 2-d array with four
    columns works too), in which case `censor_times` maps ids to ``C``.
    """
    if isinstance(X, Sample):
        return X
    if isinstance(X, np.ndarray):
        if X.ndim != 2 or X.shape[1] != 4:
            raise ValueError(f"expected an (n_rows, 4) array, got shape {X.shape}")
        X = [tuple(r) for r in X.tolist()]
    return build_sample(list(X), censor_times, num_causes=num_causes)


def check_times(t):
    """Finite, nonnegative evaluation times as a 1-d float array."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if t.ndim != 1:
        raise ValueError("times must be a scalar or a 1-d array")
    if not np.all(np.isfinite(t)) or np.any(t < 0):
        raise ValueError("times must be finite and nonnegative")
    return t
