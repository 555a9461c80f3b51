"""Right-hand sides of the particle dynamics.

The deterministic flow moves each particle along the empirical cross
covariance against its own data residual and shrinks it toward zero in the
regularization geometry, both preconditioned by the sample covariance:

    du_j/dt = C_uG Gam^{-1} (y - G(u_j)) - kappa C C0^{-1} u_j
              + rho [ C_uG Gam^{-1} (G(u_j) - g_mean) + kappa C C0^{-1} (u_j - u_mean) ]

with inflation factor ``rho in [0, 1)``.  The inflation terms average to zero
over the ensemble, so the instantaneous mean drift is independent of rho;
they only slow the collapse of the spread.  Setting rho = 0 and kappa = 1
recovers the plain regularized flow, and kappa = 0, rho = 0 the unregularized
one.

Every term is a linear combination of the current spread vectors, so
trajectories remain in the affine set fixed by the initial ensemble; see
:mod:`tekiflow.subspace`.

The adaptive variant replaces the fixed regularization by the spectral
family ``C0(theta)`` and evolves ``theta`` by gradient descent on the
joint objective ``0.5 * ||u_mean||^2_{C0(theta)} + 0.5 * log det C0(theta)``,
which stays derivative-free with respect to the forward map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .ensemble import Ensemble, compute_stats
from .priors import LaplacianEigenbasis
from .problems import InverseProblem

__all__ = [
    "AdaptiveSettings",
    "FlowParams",
    "FlowState",
    "FlowDerivative",
    "teki_rhs",
    "adaptive_rhs",
    "make_rhs",
    "discrete_eki_step",
    "pack_state",
    "unpack_state",
]


@dataclass(frozen=True)
class AdaptiveSettings:
    """Configuration of the hyperparameter flow.

    Attributes
    ----------
    basis : LaplacianEigenbasis
        Spectral basis diagonalizing the regularization family.
    bound : float
        Upper clip for theta components.
    floor : float
        Lower clip; the uniform hyperprior has no lower bound, so this purely
        prevents log-det blowup in floating point.
    rate : float
        Multiplier on the theta derivative.  The relative time scale of the
        two flow levels is not pinned down by the scheme itself, so it is
        exposed rather than hard-coded.
    per_particle : bool
        Evolve one theta per particle (driven by that particle) instead of a
        single theta driven by the ensemble mean.
    """

    basis: LaplacianEigenbasis
    bound: float = 1e6
    floor: float = 1e-6
    rate: float = 1.0
    per_particle: bool = False


@dataclass(frozen=True)
class FlowParams:
    """Everything that selects which flow is integrated."""

    problem: InverseProblem
    rho: float = 0.0
    kappa: Optional[float] = None
    adaptive: Optional[AdaptiveSettings] = None

    def __post_init__(self):
        kappa = self.problem.reg_scale if self.kappa is None else float(self.kappa)
        object.__setattr__(self, "kappa", kappa)
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        if kappa < 0.0 or not np.isfinite(kappa):
            raise ValueError(f"kappa must be >= 0, got {kappa}")
        if kappa == 0.0 and self.rho > 0.0 and self.adaptive is None:
            raise ValueError("inflation (rho > 0) requires kappa > 0")
        if self.adaptive is not None and self.adaptive.basis.dim != self.problem.n_param:
            raise ValueError("adaptive basis dimension does not match the problem")


@dataclass(frozen=True)
class FlowState:
    """Ensemble state (plus hyperparameters for the adaptive flow) at a time."""

    ensemble: Ensemble
    theta: Optional[np.ndarray] = None
    time: float = 0.0

    def __post_init__(self):
        if self.theta is not None:
            theta = np.asarray(self.theta, dtype=float)
            object.__setattr__(self, "theta", theta)


@dataclass(frozen=True)
class FlowDerivative:
    """Time derivative matching the layout of a :class:`FlowState`."""

    members: np.ndarray
    theta: Optional[np.ndarray] = None
    g_values: np.ndarray = field(default=None, repr=False)


def _reg_inverse_apply(params: FlowParams, theta, vectors: np.ndarray) -> np.ndarray:
    """Rows of ``vectors`` mapped through the active inverse regularization.

    Fixed flow: ``kappa * C0^{-1} v``.  Adaptive flow: ``C0(theta)^{-1} v``
    with the shared or per-particle theta (clipped into its admissible box
    before use).
    """
    if params.adaptive is None:
        if params.kappa == 0.0:
            return np.zeros_like(vectors)
        return params.kappa * params.problem.reg_inv(vectors.T).T
    settings = params.adaptive
    v = settings.basis.vectors
    theta = np.clip(theta, settings.floor, settings.bound)
    coeff = v.T @ vectors.T  # (n_x, J)
    if settings.per_particle:
        return (v @ (theta.T * coeff)).T
    return (v @ (theta[:, None] * coeff)).T


def _drift(members: np.ndarray, params: FlowParams, theta=None):
    problem = params.problem
    g = problem.forward_all(members)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("forward map returned non-finite values")
    stats = compute_stats(members, g)
    residual = problem.data[None, :] - g
    w = problem.noise_inv(residual.T).T  # (J, K)
    reg = _reg_inverse_apply(params, theta, members)  # (J, n)
    rhs = w @ stats.cross_cov.T - reg @ stats.cov
    if params.rho != 0.0:
        w_dev = problem.noise_inv((g - stats.g_mean).T).T
        reg_dev = _reg_inverse_apply(params, theta, members - stats.mean)
        rhs = rhs + params.rho * (w_dev @ stats.cross_cov.T + reg_dev @ stats.cov)
    return rhs, g, stats


def teki_rhs(state: FlowState, params: FlowParams) -> FlowDerivative:
    """Particle drift of the fixed-regularization flow.

    One forward evaluation per particle per call; the evaluations are batched
    and reduced into a single set of moments.
    """
    rhs, g, _ = _drift(state.ensemble.members, params, state.theta)
    return FlowDerivative(members=rhs, theta=None, g_values=g)


def adaptive_rhs(state: FlowState, params: FlowParams) -> FlowDerivative:
    """Joint drift of particles and regularization hyperparameters.

    The theta derivative is ``rate * (1/(2 theta) - v**2 / 2)`` componentwise,
    where ``v`` collects the spectral coefficients of the ensemble mean (or of
    each particle in per-particle mode); it is projected to zero wherever it
    would push theta outside the clip box.
    """
    if params.adaptive is None:
        raise ValueError("adaptive_rhs called without adaptive settings")
    if state.theta is None:
        raise ValueError("adaptive flow state carries no theta")
    settings = params.adaptive
    members = state.ensemble.members
    rhs, g, stats = _drift(members, params, state.theta)
    theta = np.clip(state.theta, settings.floor, settings.bound)
    basis = settings.basis
    if settings.per_particle:
        coeff = members @ basis.vectors  # (J, n)
    else:
        coeff = basis.vectors.T @ stats.mean  # (n,)
    d_theta = settings.rate * (0.5 / theta - 0.5 * coeff**2)
    at_top = (theta >= settings.bound) & (d_theta > 0)
    at_bottom = (theta <= settings.floor) & (d_theta < 0)
    d_theta = np.where(at_top | at_bottom, 0.0, d_theta)
    return FlowDerivative(members=rhs, theta=d_theta, g_values=g)


def make_rhs(params: FlowParams):
    """Callable ``state -> FlowDerivative`` for the configured flow."""
    if params.adaptive is not None:
        return lambda state: adaptive_rhs(state, params)
    return lambda state: teki_rhs(state, params)


def discrete_eki_step(
    ensemble: Ensemble,
    problem: InverseProblem,
    step: float,
    perturbations: Optional[np.ndarray] = None,
) -> Ensemble:
    """One discrete update of the unregularized iteration.

    ``u_j <- u_j + C_uG (C_GG + Gam/step)^{-1} (y + xi_j - G(u_j))``.

    Perturbation draws ``xi_j`` are supplied by the caller; passing ``None``
    gives the deterministic variant.  The K x K system is solved through a
    symmetric factorization, which cannot fail for a positive definite noise
    covariance.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    members = ensemble.members
    g = problem.forward_all(members)
    stats = compute_stats(members, g)
    if perturbations is None:
        perturbations = np.zeros_like(g)
    else:
        perturbations = np.asarray(perturbations, dtype=float)
        if perturbations.shape != g.shape:
            raise ValueError(
                f"perturbations have shape {perturbations.shape}, expected {g.shape}"
            )
    gain_matrix = stats.out_cov + problem.noise_cov / step
    cho = cho_factor(gain_matrix, lower=True)
    innovation = problem.data[None, :] + perturbations - g
    update = cho_solve(cho, innovation.T).T @ stats.cross_cov.T
    return Ensemble(members + update)


# -- packing convention shared with the integrator --------------------------


def pack_state(state: FlowState) -> np.ndarray:
    """Flatten a state to a single vector (members first, then theta)."""
    if state.theta is None:
        return state.ensemble.members.ravel().copy()
    return np.concatenate([state.ensemble.members.ravel(), state.theta.ravel()])


def pack_derivative(deriv: FlowDerivative) -> np.ndarray:
    if deriv.theta is None:
        return deriv.members.ravel()
    return np.concatenate([deriv.members.ravel(), deriv.theta.ravel()])


def unpack_state(z: np.ndarray, template: FlowState, time: float) -> FlowState:
    """Rebuild a state from a packed vector, using the template's layout."""
    shape = template.ensemble.members.shape
    head = shape[0] * shape[1]
    members = z[:head].reshape(shape)
    theta = None
    if template.theta is not None:
        theta = z[head:].reshape(template.theta.shape)
    return FlowState(ensemble=Ensemble(members), theta=theta, time=time)
