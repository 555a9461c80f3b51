"""Forward-map abstraction, data misfit and Tikhonov-regularized loss.

An :class:`InverseProblem` bundles a forward map ``G``, observed data ``y``,
a noise covariance and a regularization covariance.  Weighted norms are
applied through Cholesky factors cached at construction; no matrix is ever
inverted explicitly.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
from scipy.linalg import cho_solve, cholesky, eigvalsh, solve_triangular

from .validation import as_float_vector, as_spd_matrix, check_nonnegative

__all__ = [
    "InverseProblem",
    "DifferentiableForward",
    "misfit",
    "regularized_loss",
    "grad_regularized_loss",
]


class InverseProblem:
    """A nonlinear least-squares inverse problem with Tikhonov regularization.

    Parameters
    ----------
    forward : callable
        Deterministic map from a parameter vector (n_x,) to an observation
        vector (K,).  Repeated evaluation at the same point must return the
        same output.
    data : ndarray, shape (K,)
        Observed data vector.
    noise_cov : ndarray, shape (K, K)
        Symmetric positive definite noise covariance.
    reg_matrix : ndarray, shape (n_x, n_x)
        Symmetric positive definite regularization covariance.
    reg_scale : float, optional
        Nonnegative scale multiplying the inverse regularization covariance in
        the loss; kept separate from ``reg_matrix`` so the same covariance can
        serve prior sampling and regularization at independent strengths.
    """

    def __init__(self, forward: Callable, data, noise_cov, reg_matrix, reg_scale: float = 1.0):
        if not callable(forward):
            raise TypeError("forward must be callable")
        self.forward = forward
        self.data = as_float_vector(data, "data")
        self.noise_cov = as_spd_matrix(noise_cov, "noise_cov", self.data.size)
        self.reg_matrix = as_spd_matrix(reg_matrix, "reg_matrix")
        self.reg_scale = check_nonnegative(reg_scale, "reg_scale")
        # lower-triangular factors: noise_cov = L L^T, reg_matrix = M M^T
        self._noise_chol = cholesky(self.noise_cov, lower=True)
        self._reg_chol = cholesky(self.reg_matrix, lower=True)

    @property
    def n_obs(self) -> int:
        return self.data.size

    @property
    def n_param(self) -> int:
        return self.reg_matrix.shape[0]

    # -- weighted-norm plumbing -------------------------------------------
    def whiten_obs(self, v: np.ndarray) -> np.ndarray:
        """Apply the inverse noise Cholesky factor (rows or columns of v)."""
        return solve_triangular(self._noise_chol, v, lower=True, check_finite=False)

    def whiten_param(self, v: np.ndarray) -> np.ndarray:
        return solve_triangular(self._reg_chol, v, lower=True, check_finite=False)

    def noise_inv(self, v: np.ndarray) -> np.ndarray:
        """Solve ``noise_cov @ x = v`` (v may hold multiple columns)."""
        return cho_solve((self._noise_chol, True), v, check_finite=False)

    def reg_inv(self, v: np.ndarray) -> np.ndarray:
        """Solve ``reg_matrix @ x = v`` (v may hold multiple columns)."""
        return cho_solve((self._reg_chol, True), v, check_finite=False)

    def noise_inv_extremes(self) -> tuple[float, float]:
        """(smallest, largest) eigenvalue of the inverse noise covariance."""
        w = eigvalsh(self.noise_cov)
        return 1.0 / w[-1], 1.0 / w[0]

    def reg_inv_extremes(self) -> tuple[float, float]:
        """(smallest, largest) eigenvalue of reg_scale * reg_matrix^{-1}."""
        w = eigvalsh(self.reg_matrix)
        return self.reg_scale / w[-1], self.reg_scale / w[0]

    # -- evaluation ---------------------------------------------------------
    def forward_all(self, members: np.ndarray) -> np.ndarray:
        """Evaluate the forward map on each row of ``members``."""
        members = np.asarray(members, dtype=float)
        out = np.empty((members.shape[0], self.n_obs))
        for j, u in enumerate(members):
            out[j] = self.forward(u)
        return out


class DifferentiableForward(InverseProblem):
    """An inverse problem whose forward map has an exact Jacobian.

    The Jacobian exists only for diagnostics and the reference optimizer;
    the particle flows never touch it.

    Parameters
    ----------
    jacobian : callable
        Map from a parameter vector (n_x,) to the (K, n_x) Jacobian of the
        forward map; must agree with central finite differences of
        ``forward`` to second order in the step.
    """

    def __init__(self, forward, jacobian, data, noise_cov, reg_matrix, reg_scale=1.0):
        super().__init__(forward, data, noise_cov, reg_matrix, reg_scale)
        if not callable(jacobian):
            raise TypeError("jacobian must be callable")
        self.jacobian = jacobian


def misfit(problem: InverseProblem, x) -> float:
    """Half the squared noise-weighted residual of the forward map at x."""
    x = as_float_vector(x, "x", problem.n_param)
    r = problem.forward(x) - problem.data
    if r.shape != problem.data.shape:
        raise ValueError(
            f"forward map returned shape {np.shape(r)}, expected ({problem.n_obs},)"
        )
    w = problem.whiten_obs(r)
    return 0.5 * float(w @ w)


def regularized_loss(problem: InverseProblem, x) -> float:
    """Data misfit plus the scaled regularization penalty at x."""
    x = as_float_vector(x, "x", problem.n_param)
    w = problem.whiten_param(x)
    return misfit(problem, x) + 0.5 * problem.reg_scale * float(w @ w)


def grad_regularized_loss(problem: DifferentiableForward, x) -> np.ndarray:
    """Exact gradient of the regularized loss.

    Used by diagnostics and the reference optimizer only; the particle flows
    stay derivative-free.
    """
    if not hasattr(problem, "jacobian"):
        raise TypeError("grad_regularized_loss needs a DifferentiableForward")
    x = as_float_vector(x, "x", problem.n_param)
    r = problem.forward(x) - problem.data
    jac = problem.jacobian(x)
    grad = jac.T @ problem.noise_inv(r)
    if problem.reg_scale > 0.0:
        grad = grad + problem.reg_scale * problem.reg_inv(x)
    return grad


def grad_misfit(problem: DifferentiableForward, x) -> np.ndarray:
    """Exact gradient of the data misfit alone (no regularization term)."""
    x = as_float_vector(x, "x", problem.n_param)
    r = problem.forward(x) - problem.data
    return problem.jacobian(x).T @ problem.noise_inv(r)
