"""Input validation helpers.

scikit-learn's ``check_array`` rejects complex input, so the estimators in
this package validate through the small helpers below instead.
"""
from numbers import Integral

import numpy as np

from .exceptions import InvalidDimensionError


def check_positive_int(value, name, minimum=1):
    """Return ``value`` as ``int`` or raise if it is not an integer >= minimum."""
    if isinstance(value, (bool, np.bool_)) or not isinstance(value, (Integral, np.integer)):
        raise InvalidDimensionError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise InvalidDimensionError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_complex_array(array, name="array", ndim=None, shape=None, allow_nan=False):
    """Convert ``array`` to a contiguous complex128 ndarray and check it.

    Parameters
    ----------
    array : array_like
        Input data; real input is promoted to complex.
    name : str
        Used in error messages.
    ndim : int, optional
        Required number of dimensions. One-dimensional input is accepted for
        ``ndim=2`` and reshaped into a single column.
    shape : tuple, optional
        Required shape; ``None`` entries are wildcards.
    allow_nan : bool
        Reject non-finite entries unless set.

    Returns
    -------
    numpy.ndarray
    """
    out = np.asarray(array)
    if out.dtype == object:
        raise TypeError(f"{name} has object dtype")
    out = np.ascontiguousarray(out, dtype=np.complex128)
    if ndim == 2 and out.ndim == 1:
        out = out[:, None]
    if ndim is not None and out.ndim != ndim:
        raise InvalidDimensionError(f"{name} must be {ndim}-D, got shape {out.shape}")
    if shape is not None:
        if len(shape) != out.ndim or any(s is not None and s != o for s, o in zip(shape, out.shape)):
            raise InvalidDimensionError(f"{name} must have shape {shape}, got {out.shape}")
    if 0 in out.shape:
        raise InvalidDimensionError(f"{name} is empty (shape {out.shape})")
    if not allow_nan and not np.all(np.isfinite(out)):
        raise ValueError(f"{name} contains NaN or infinity")
    return out


def as_generator(rng):
    """Accept ``None``, an int seed, a SeedSequence or a Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
