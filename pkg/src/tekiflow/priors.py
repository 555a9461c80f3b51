"""Gaussian priors built on the Dirichlet Laplacian eigenbasis.

Covariances of the form ``amplitude * (-laplacian)**(-exponent)`` are
represented spectrally through the discrete sine modes, which are exact
eigenvectors of the tridiagonal second-difference matrix.  The same basis
parametrizes the diagonal hyperparameter family used by the adaptive
regularization flow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import Ensemble
from .validation import check_positive

__all__ = [
    "LaplacianEigenbasis",
    "PriorSpec",
    "HyperParamState",
    "build_eigenbasis",
    "sample_prior",
    "init_ensemble",
    "hyper_cov_apply_inverse",
]


@dataclass(frozen=True)
class LaplacianEigenbasis:
    """Eigenpairs of the discrete Dirichlet Laplacian on a uniform grid.

    Attributes
    ----------
    eigenvalues : ndarray, shape (n,)
        Ascending positive eigenvalues of the second-difference matrix
        (with the 1/h^2 scaling).
    vectors : ndarray, shape (n, n)
        Orthonormal columns; column j is the sine mode of frequency j+1.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        ev = np.asarray(self.eigenvalues, dtype=float)
        vec = np.asarray(self.vectors, dtype=float)
        if ev.ndim != 1 or vec.shape != (ev.size, ev.size):
            raise ValueError("inconsistent eigenbasis shapes")
        object.__setattr__(self, "eigenvalues", ev)
        object.__setattr__(self, "vectors", vec)

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @classmethod
    def from_interior_count(cls, n: int) -> "LaplacianEigenbasis":
        """Analytic eigenpairs for n interior nodes, mesh ``h = 1/(n+1)``."""
        if n < 1:
            raise ValueError(f"need at least one interior node, got {n}")
        h = 1.0 / (n + 1)
        j = np.arange(1, n + 1)
        eigenvalues = (2.0 / h**2) * (1.0 - np.cos(np.pi * j * h))
        nodes = j * h
        vectors = np.sqrt(2.0 * h) * np.sin(np.pi * np.outer(nodes, j))
        return cls(eigenvalues=eigenvalues, vectors=vectors)


def build_eigenbasis(grid) -> LaplacianEigenbasis:
    """Eigenbasis matching a :class:`~tekiflow.darcy.GridSpec`."""
    return LaplacianEigenbasis.from_interior_count(grid.n_interior)


@dataclass(frozen=True)
class PriorSpec:
    """Zero-mean Gaussian with covariance ``amplitude * (-laplacian)**(-exponent)``."""

    amplitude: float
    exponent: float
    basis: LaplacianEigenbasis

    def __post_init__(self):
        if not np.isfinite(self.amplitude) or self.amplitude < 0:
            raise ValueError(f"amplitude must be >= 0, got {self.amplitude}")
        if not np.isfinite(self.exponent) or self.exponent < 1:
            raise ValueError(f"exponent must be >= 1, got {self.exponent}")

    def mode_std(self) -> np.ndarray:
        """Per-mode standard deviations, ordered by ascending eigenvalue."""
        return np.sqrt(self.amplitude * self.basis.eigenvalues ** (-self.exponent))

    def covariance_matrix(self) -> np.ndarray:
        """Dense covariance; requires a strictly positive amplitude."""
        if self.amplitude == 0:
            raise ValueError("zero-amplitude prior has a singular covariance")
        v = self.basis.vectors
        return (v * self.mode_std() ** 2) @ v.T


def sample_prior(spec: PriorSpec, rng: np.random.Generator) -> np.ndarray:
    """One draw from the prior; deterministic given the generator state."""
    xi = rng.standard_normal(spec.basis.dim)
    return spec.basis.vectors @ (spec.mode_std() * xi)


def init_ensemble(strategy: str, size: int, spec: PriorSpec, rng: np.random.Generator) -> Ensemble:
    """Build the initial particle system.

    Parameters
    ----------
    strategy : {"basis", "random"}
        "basis" takes the leading eigenvectors scaled by the per-mode prior
        standard deviation (so both strategies produce comparable
        magnitudes); "random" takes i.i.d. prior draws.
    size : int
        Ensemble size J; the basis strategy requires ``J <= n_x``.
    """
    if size < 2:
        raise ValueError(f"ensemble size must be >= 2, got {size}")
    if strategy == "basis":
        if size > spec.basis.dim:
            raise ValueError(
                f"basis initialization needs size <= {spec.basis.dim}, got {size}"
            )
        members = (spec.basis.vectors[:, :size] * spec.mode_std()[:size]).T
    elif strategy == "random":
        members = np.vstack([sample_prior(spec, rng) for _ in range(size)])
    else:
        raise ValueError(f"unknown initialization strategy {strategy!r}")
    sv = np.linalg.svd(members, compute_uv=False)
    if sv[-1] <= sv[0] * max(members.shape) * np.finfo(float).eps * 1e3:
        raise ValueError("initial ensemble is numerically linearly dependent; reseed")
    return Ensemble(members)


@dataclass(frozen=True)
class HyperParamState:
    """Positive spectral weights of the parametrized regularization family.

    The covariance is ``V diag(1/theta) V^T``; component i of ``theta``
    scales the penalty on mode i.
    """

    theta: np.ndarray
    bound: float = 1e6

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        bound = check_positive(self.bound, "bound")
        if theta.ndim != 1:
            raise ValueError("theta must be a vector")
        if np.any(~np.isfinite(theta)) or np.any(theta <= 0) or np.any(theta > bound):
            raise ValueError("theta components must lie in (0, bound]")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "bound", bound)


def hyper_cov_apply_inverse(state: HyperParamState, basis: LaplacianEigenbasis, x) -> np.ndarray:
    """Apply the inverse of the parametrized covariance, ``V diag(theta) V^T x``."""
    theta = state.theta
    if np.any(theta <= 0):
        raise ValueError("theta components must be positive")
    x = np.asarray(x, dtype=float)
    if x.shape != (basis.dim,):
        raise ValueError(f"x has shape {x.shape}, expected ({basis.dim},)")
    return basis.vectors @ (theta * (basis.vectors.T @ x))
