"""Invariant-subspace machinery derived from the initial ensemble.

The flows in this package never leave the affine set spanned by the initial
spread vectors, offset by the component of the initial mean orthogonal to
that span.  All convergence statements are relative to this geometry, so the
bases built here are frozen at time zero and reused along the whole
trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh, svd

from .ensemble import Ensemble

__all__ = ["SubspaceBasis", "build_subspace", "project", "restricted_min_eigenvalue"]


@dataclass(frozen=True)
class SubspaceBasis:
    """Orthonormal bases attached to an initial ensemble.

    Attributes
    ----------
    spread_basis : ndarray, shape (n_x, J-1)
        Orthonormal basis of the span of the initial spread vectors
        (member minus mean).  The spread vectors sum to zero, so the span
        has dimension exactly J-1 for a linearly independent ensemble.
    offset : ndarray, shape (n_x,)
        Component of the initial mean orthogonal to the spread span.  Every
        flow trajectory keeps this component of each particle frozen.
    container_basis : ndarray, shape (n_x, d)
        Orthonormal basis of span{offset} + spread span (d = J-1 or J).
    member_basis : ndarray, shape (n_x, d_m)
        Orthonormal basis of the span of the initial members themselves;
        used for subspace-drift diagnostics.
    """

    spread_basis: np.ndarray
    offset: np.ndarray
    container_basis: np.ndarray
    member_basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.container_basis.shape[1]


def _orthonormal_range(columns: np.ndarray, min_rank: int, what: str) -> np.ndarray:
    """Orthonormal basis of the range, failing below the required rank."""
    u, s, _ = svd(columns, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError(f"degenerate {what}")
    tol = s[0] * max(columns.shape) * np.finfo(float).eps
    rank = int(np.sum(s > tol))
    if rank < min_rank:
        raise ValueError(f"degenerate {what}: numerical rank {rank} < {min_rank}")
    return u[:, :rank]


def build_subspace(initial: Ensemble) -> SubspaceBasis:
    """Construct all bases from the initial ensemble.

    Raises
    ------
    ValueError
        If the spread vectors have numerical rank below J-1
        ("degenerate initial ensemble").
    """
    members = initial.members if isinstance(initial, Ensemble) else np.asarray(initial, float)
    n_members = members.shape[0]
    mean = members.mean(axis=0)
    dev = members - mean
    q = _orthonormal_range(dev.T, n_members - 1, "initial ensemble")
    q = q[:, : n_members - 1]
    offset = mean - q @ (q.T @ mean)
    norm_offset = np.linalg.norm(offset)
    if norm_offset > 1e-12 * (1.0 + np.linalg.norm(mean)):
        container = np.hstack([q, (offset / norm_offset)[:, None]])
    else:
        offset = np.zeros_like(mean)
        container = q
    member_basis = _orthonormal_range(members.T, 1, "initial ensemble members")
    return SubspaceBasis(
        spread_basis=q,
        offset=offset,
        container_basis=container,
        member_basis=member_basis,
    )


def project(basis: SubspaceBasis, x) -> np.ndarray:
    """Orthogonal projection onto span{offset} + spread span."""
    x = np.asarray(x, dtype=float)
    if x.shape != (basis.container_basis.shape[0],):
        raise ValueError(
            f"x has shape {x.shape}, expected ({basis.container_basis.shape[0]},)"
        )
    c = basis.container_basis
    return c @ (c.T @ x)


def restricted_min_eigenvalue(cov: np.ndarray, basis: SubspaceBasis) -> float:
    """Smallest eigenvalue of the covariance restricted to the spread span.

    The quadratic form vanishes identically along the offset direction (it is
    orthogonal to every spread vector), so positivity is only attainable, and
    only asserted, on the spread span itself.
    """
    q = basis.spread_basis
    cov = np.asarray(cov, dtype=float)
    restricted = q.T @ cov @ q
    return float(eigvalsh(restricted)[0])
