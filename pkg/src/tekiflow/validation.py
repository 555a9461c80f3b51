"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor


def as_float_vector(x, name: str, size: int | None = None) -> np.ndarray:
    """Coerce ``x`` to a finite 1-d float64 array, optionally of fixed size."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {v.shape}")
    if size is not None and v.size != size:
        raise ValueError(f"{name} has size {v.size}, expected {size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def as_matrix(x, name: str, shape: tuple[int, int] | None = None) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.ndim != 2:
        raise ValueError(f"{name} must be a 2-d matrix, got shape {v.shape}")
    if shape is not None and v.shape != shape:
        raise ValueError(f"{name} has shape {v.shape}, expected {shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def as_spd_matrix(x, name: str, size: int | None = None) -> np.ndarray:
    """Validate a symmetric positive definite matrix (attempts a Cholesky)."""
    shape = None if size is None else (size, size)
    m = as_matrix(x, name, shape)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=1e-10, atol=1e-12):
        raise ValueError(f"{name} is not symmetric")
    try:
        cho_factor(m, lower=True)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - message path
        raise ValueError(f"{name} is not positive definite") from exc
    except Exception as exc:
        raise ValueError(f"{name} is not positive definite") from exc
    return m


def as_members(x, name: str = "members") -> np.ndarray:
    """Coerce to a (J, n_x) float64 array of stacked parameter vectors."""
    m = np.asarray(x, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be a (J, n_x) array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def check_positive(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive, got {value}")
    return value


def check_nonnegative(value: float, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value}")
    return value
