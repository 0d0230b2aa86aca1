"""Input validation helpers shared by the estimators and functional APIs."""

import numbers

import numpy as np
from sklearn.utils.validation import check_array


def as_float_matrix(X, name="X", dtype=np.float64, allow_empty=False):
    """Return ``X`` as a finite 2-D float array."""
    X = check_array(
        X,
        dtype=dtype,
        ensure_2d=True,
        ensure_min_samples=0 if allow_empty else 1,
        ensure_min_features=1,
        input_name=name,
    )
    return X


def as_label_vector(y, n=None, name="y"):
    y = np.asarray(y)
    if y.ndim != 1:
        raise ValueError(f"{name} must be 1-D, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        if np.issubdtype(y.dtype, np.floating) and np.all(y == np.round(y)):
            y = y.astype(np.int64)
        else:
            raise ValueError(f"{name} must hold integer labels")
    if n is not None and y.shape[0] != n:
        raise ValueError(f"{name} has {y.shape[0]} entries, expected {n}")
    return y.astype(np.int64, copy=False)


def check_same_length(a, b, names=("y", "c")):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] != b.shape[0]:
        raise ValueError(
            f"length mismatch: {names[0]} has {a.shape[0]} entries, "
            f"{names[1]} has {b.shape[0]}"
        )
    return a, b


def check_positive_int(value, name, minimum=1):
    if not isinstance(value, numbers.Integral) or value < minimum:
        raise ValueError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)


def check_random_state(seed):
    """Return a ``numpy.random.Generator`` for ``seed``."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
