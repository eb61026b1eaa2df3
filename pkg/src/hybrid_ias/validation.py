"""Input validation helpers shared by the solvers and the estimator."""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from .exceptions import DomainError


def as_vector(v, name="vector", length=None):
    """Return `v` as a finite 1-D float array, optionally checking its length."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {v.shape}")
    if length is not None and v.shape[0] != length:
        raise ValueError(f"{name} must have length {length}, got {v.shape[0]}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def as_positive_vector(v, name="vector", length=None):
    v = as_vector(v, name, length)
    if np.any(v <= 0):
        raise DomainError(f"{name} must be strictly positive")
    return v


def broadcast_positive(value, n, name="vector"):
    """Broadcast a scalar or length-`n` array to a positive length-`n` vector."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    return as_positive_vector(arr, name, n)


def as_operator(A):
    """Wrap a dense array, sparse matrix or LinearOperator as a LinearOperator."""
    if isinstance(A, LinearOperator):
        return A
    if sp.issparse(A):
        return aslinearoperator(A.tocsr())
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"forward map must be two-dimensional, got shape {A.shape}")
    return aslinearoperator(A)


def check_compatible(A, b):
    m, _ = A.shape
    if b.shape[0] != m:
        raise ValueError(f"data length {b.shape[0]} does not match {m} rows of the forward map")
