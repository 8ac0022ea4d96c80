"""Input validation helpers shared by the samplers and diagnostics."""

import numbers

import numpy as np


def check_random_state(seed):
    """Turn ``seed`` into a :class:`numpy.random.Generator`.

    ``None`` gives fresh OS entropy, integers and ``SeedSequence`` objects
    seed a new PCG64 generator, and an existing ``Generator`` is passed
    through unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.default_rng(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a numpy Generator")


def check_seed_sequence(seed):
    """Return a ``SeedSequence`` for spawning independent replica streams."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        # derive a child sequence deterministically from the generator state
        return np.random.SeedSequence(seed.integers(0, 2**63 - 1, size=4))
    if seed is None or isinstance(seed, numbers.Integral):
        return np.random.SeedSequence(seed)
    raise ValueError(f"{seed!r} cannot be used to seed a SeedSequence")


def check_positions(theta, dim, name="theta"):
    """Validate an array of positions with trailing dimension ``dim``.

    Scalars are accepted for ``dim == 1``. The returned array is float64
    with at least one dimension.
    """
    arr = np.asarray(theta, dtype=float)
    if arr.ndim == 0:
        if dim != 1:
            raise ValueError(f"{name} is a scalar but the target has dimension {dim}")
        arr = arr.reshape(1)
    if arr.shape[-1] != dim:
        raise ValueError(
            f"{name} has trailing dimension {arr.shape[-1]}, expected {dim}"
        )
    return arr


def check_positive(value, name, strict=True):
    value = float(value)
    if not np.isfinite(value) or (value <= 0 if strict else value < 0):
        bound = "> 0" if strict else ">= 0"
        raise ValueError(f"{name} must be finite and {bound}, got {value}")
    return value


def check_count(value, name, minimum=0):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ValueError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_samples(samples, min_samples=1):
    """Coerce a chain to shape ``(n, D)`` and check it is non-empty."""
    arr = np.asarray(samples, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"samples must be 1d or 2d, got shape {arr.shape}")
    if arr.shape[0] < min_samples:
        raise ValueError(
            f"need at least {min_samples} samples, got {arr.shape[0]}"
        )
    return arr
