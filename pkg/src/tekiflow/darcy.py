"""One-dimensional elliptic forward model on the unit interval.

Solves ``-(exp(u(s)) p'(s))' = 1`` on [0, 1] with homogeneous Dirichlet
conditions by a conservative second-order finite-difference scheme, and
observes the pressure at equidistant interior points.  The log-conductivity
``u`` lives on the interior grid nodes; it is the unknown of the inverse
problem.

Flux coefficients at half-nodes use the arithmetic mean of the adjacent
``exp(u)`` values; at the two boundary half-nodes, where only one interior
neighbor exists, ``u`` is extrapolated linearly to the half-node, which keeps
constant fields exact and preserves second-order accuracy up to the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky_banded, cho_solve_banded

__all__ = [
    "GridSpec",
    "ObservationOperator",
    "solve_pde",
    "observe",
    "darcy_forward",
    "darcy_jacobian",
]


@dataclass(frozen=True)
class GridSpec:
    """Dyadic grid on [0, 1] with mesh size ``2**-refinement``.

    The parameter dimension is the number of interior nodes,
    ``2**refinement - 1``; the stated grid size ``2**refinement`` counts
    cells, not unknowns.
    """

    refinement: int = 8

    def __post_init__(self):
        if int(self.refinement) != self.refinement or self.refinement < 2:
            raise ValueError(f"refinement must be an integer >= 2, got {self.refinement}")
        object.__setattr__(self, "refinement", int(self.refinement))

    @property
    def mesh_size(self) -> float:
        return 2.0 ** (-self.refinement)

    @property
    def n_interior(self) -> int:
        return 2 ** self.refinement - 1

    @property
    def nodes(self) -> np.ndarray:
        """Interior node coordinates ``l * h`` for ``l = 1 .. 2**r - 1``."""
        return np.arange(1, self.n_interior + 1) * self.mesh_size


@dataclass(frozen=True)
class ObservationOperator:
    """Pointwise extraction of the pressure at a subset of grid nodes."""

    indices: np.ndarray  # zero-based positions into the interior-node vector
    n_interior: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("indices must be a nonempty 1-d integer array")
        if np.any(idx < 0) or np.any(idx >= self.n_interior):
            raise ValueError("observation index out of range for the grid")
        idx = idx.copy()
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def count(self) -> int:
        return self.indices.size

    @classmethod
    def equidistant(cls, grid: GridSpec, count: int) -> "ObservationOperator":
        """K observation points at ``s = i / (count + 1)``, ``i = 1 .. K``.

        The points must coincide with grid nodes, which requires
        ``count + 1`` to divide ``2**refinement``.  This keeps every
        observation strictly interior; placing the last point at ``s = 1``
        would observe the pinned boundary value.
        """
        total = 2 ** grid.refinement
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        if total % (count + 1) != 0:
            raise ValueError(
                f"count+1 = {count + 1} must divide 2**refinement = {total} "
                "so observation points land on grid nodes"
            )
        stride = total // (count + 1)
        indices = stride * np.arange(1, count + 1) - 1
        return cls(indices=indices, n_interior=grid.n_interior)


def _half_node_coeffs(grid: GridSpec, u: np.ndarray) -> np.ndarray:
    """Conductivities at the n+1 half-nodes (boundary halves extrapolated)."""
    c = np.empty(grid.n_interior + 1)
    with np.errstate(over="ignore"):
        b = np.exp(u)
        c[1:-1] = 0.5 * (b[:-1] + b[1:])
        c[0] = np.exp(1.5 * u[0] - 0.5 * u[1])
        c[-1] = np.exp(1.5 * u[-1] - 0.5 * u[-2])
    if not np.all(np.isfinite(c)):
        raise ValueError("conductivity exp(u) overflows; u is out of range")
    return c


def _banded_system(grid: GridSpec, u: np.ndarray):
    """Upper banded form of the stiffness matrix and the scaled right side."""
    c = _half_node_coeffs(grid, u)
    n = grid.n_interior
    ab = np.zeros((2, n))
    ab[1] = c[:-1] + c[1:]
    ab[0, 1:] = -c[1:-1]
    rhs = np.full(n, grid.mesh_size**2)
    return ab, rhs, c


def solve_pde(grid: GridSpec, u) -> np.ndarray:
    """Pressure at the interior nodes for log-conductivity ``u``.

    The tridiagonal system is symmetric positive definite for any finite
    ``u`` and is solved directly in O(n_x).
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_interior,):
        raise ValueError(f"u has shape {u.shape}, expected ({grid.n_interior},)")
    if not np.all(np.isfinite(u)):
        raise ValueError("u contains non-finite entries")
    ab, rhs, _ = _banded_system(grid, u)
    cb = cholesky_banded(ab, lower=False, check_finite=False)
    return cho_solve_banded((cb, False), rhs, check_finite=False)


def observe(op: ObservationOperator, p) -> np.ndarray:
    """Extract the pressure at the observation nodes (a linear map)."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size != op.n_interior:
        raise ValueError(f"pressure vector has shape {p.shape}, expected ({op.n_interior},)")
    return p[op.indices]


def darcy_forward(grid: GridSpec, op: ObservationOperator, u) -> np.ndarray:
    """Composition of the PDE solve and the observation operator."""
    return observe(op, solve_pde(grid, u))


def darcy_jacobian(grid: GridSpec, op: ObservationOperator, u) -> np.ndarray:
    """Exact Jacobian of :func:`darcy_forward` via adjoint sensitivities.

    Differentiating ``A(u) p = f`` gives ``dp/du_m = -A^{-1} (dA/du_m) p``;
    only K adjoint solves are needed because ``dA/du_m`` touches at most two
    half-node coefficients.  Cost is one factorization plus K + 1 solves.
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_interior,):
        raise ValueError(f"u has shape {u.shape}, expected ({grid.n_interior},)")
    if not np.all(np.isfinite(u)):
        raise ValueError("u contains non-finite entries")
    n = grid.n_interior
    ab, rhs, c = _banded_system(grid, u)
    b = np.exp(u)
    cb = cholesky_banded(ab, lower=False, check_finite=False)
    p = cho_solve_banded((cb, False), rhs, check_finite=False)
    sel = np.zeros((n, op.count))
    sel[op.indices, np.arange(op.count)] = 1.0
    w = cho_solve_banded((cb, False), sel, check_finite=False)  # (n, K)

    # pad with boundary zeros; row k pairs nodes k and k+1 across half-node k
    p_ext = np.concatenate(([0.0], p, [0.0]))
    w_ext = np.vstack([np.zeros(op.count), w, np.zeros(op.count)])
    z = (p_ext[:-1] - p_ext[1:])[:, None] * (w_ext[:-1] - w_ext[1:])  # (n+1, K)

    # dc_k/du_m: interior half-nodes split exp(u) evenly between neighbors;
    # the extrapolated boundary half-nodes depend on their two nearest ones
    left = np.empty(n)   # coefficient of z[m-1] in column m
    right = np.empty(n)  # coefficient of z[m] in column m
    left[0] = 1.5 * c[0]
    left[1:] = 0.5 * b[1:]
    right[:-1] = 0.5 * b[:-1]
    right[-1] = 1.5 * c[-1]
    out = left[:, None] * z[:-1] + right[:, None] * z[1:]
    out[1] += -0.5 * c[0] * z[0]
    out[-2] += -0.5 * c[-1] * z[-1]
    return -out.T
