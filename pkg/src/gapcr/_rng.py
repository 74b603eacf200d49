"""Deterministic random substreams keyed by replicate index.

A stream is identified by a root seed plus a tuple of integer keys, e.g.
``(replication, 1, b)``.  Streams never depend on worker count or on the
order in which they are consumed.
"""

import numpy as np


def as_seed_sequence(random_state=None):
    """Coerce ``None``, an int, a SeedSequence or a Generator to a SeedSequence."""
    if isinstance(random_state, np.random.SeedSequence):
        return random_state
    if isinstance(random_state, np.random.Generator):
        return np.random.SeedSequence(random_state.integers(0, 2**63, size=4).tolist())
    if random_state is None or isinstance(random_state, (int, np.integer)):
        return np.random.SeedSequence(None if random_state is None else int(random_state))
    raise TypeError(f"cannot build a seed sequence from {type(random_state).__name__}")


def child(ss, *keys):
    return np.random.SeedSequence(
        ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in keys), pool_size=ss.pool_size
    )


def generator(ss, *keys):
    return np.random.Generator(np.random.PCG64(child(ss, *keys)))


def bootstrap_indices(n, ss, b):
    """Subject indices of bootstrap replicate ``b`` (uniform, with replacement)."""
    return generator(ss, b).integers(0, n, size=n)


def bootstrap_weights(n, ss, replicates):
    """Resampling counts, one row per replicate index in `replicates`."""
    replicates = list(replicates)
    w = np.zeros((len(replicates), n))
    for row, b in enumerate(replicates):
        w[row] = np.bincount(bootstrap_indices(n, ss, b), minlength=n)
    return w
