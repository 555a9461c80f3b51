"""Quantitative bound checks evaluated along computed trajectories.

Verified along every trajectory:

* collapse envelope: the particle spread obeys
  ``V_e(t) <= 1 / ((2 (1-rho) sigma_min / J) t + V_e(0)^{-1})``;
* restricted-eigenvalue floor: the sample covariance restricted to the
  initial spread span stays above
  ``1 / ((1-rho) m t + zeta_0^{-1})`` with
  ``m = 2 (c_lip^2 lambda_max V_e(0) + sigma_max)``;
* derivative-free gradient approximation: the residual between the
  covariance-preconditioned residual drift and the preconditioned exact
  misfit gradient, which scales like ``V_e^{3/2}``;
* subspace confinement: particles never leave the span of the initial
  ensemble (up to integration tolerance).

The Lipschitz constant entering ``m`` is estimated empirically from particle
pairs along the trajectory plus random probes in its bounding box, times a
safety factor; no certified global constant exists for the nonlinear forward
models, so these are empirical-constant bound checks, not proofs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .ensemble import compute_stats
from .problems import (
    DifferentiableForward,
    InverseProblem,
    grad_misfit,
    regularized_loss,
)
from .subspace import SubspaceBasis, restricted_min_eigenvalue
from .validation import check_nonnegative, check_positive

__all__ = [
    "BoundConstants",
    "DiagnosticsRecord",
    "BoundCheck",
    "BoundReport",
    "GradApproxResult",
    "RateFit",
    "spread_bound",
    "zeta_bound",
    "grad_approx_error",
    "estimate_lipschitz",
    "fit_rate",
    "evaluate_trajectory",
    "check_trajectory",
]


@dataclass(frozen=True)
class BoundConstants:
    """Constants entering the collapse and eigenvalue envelopes.

    ``sigma_min``/``sigma_max`` are the extreme eigenvalues of the scaled
    inverse regularization covariance, ``lambda_max`` the largest eigenvalue
    of the inverse noise covariance, ``c_lip`` the (empirical) Lipschitz
    constant of the forward map, and ``m`` the derived eigenvalue-decay
    constant.
    """

    sigma_min: float
    sigma_max: float
    lambda_max: float
    c_lip: float
    v_e0: float
    rho: float
    m: float = None

    def __post_init__(self):
        # the sigmas vanish together for unregularized flows; the envelopes
        # stay valid (the spread bound degenerates to the initial spread)
        check_nonnegative(self.sigma_min, "sigma_min")
        check_nonnegative(self.sigma_max, "sigma_max")
        if self.sigma_max < self.sigma_min:
            raise ValueError("sigma_max must be >= sigma_min")
        check_positive(self.lambda_max, "lambda_max")
        check_positive(self.c_lip, "c_lip")
        check_positive(self.v_e0, "v_e0")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must lie in [0, 1), got {self.rho}")
        m = 2.0 * (self.c_lip**2 * self.lambda_max * self.v_e0 + self.sigma_max)
        if self.m is not None and not np.isclose(self.m, m, rtol=1e-12):
            raise ValueError(f"m = {self.m} does not match its formula value {m}")
        object.__setattr__(self, "m", m)

    @classmethod
    def from_problem(cls, problem: InverseProblem, v_e0: float, rho: float, c_lip: float):
        sigma_min, sigma_max = problem.reg_inv_extremes()
        _, lambda_max = problem.noise_inv_extremes()
        return cls(
            sigma_min=sigma_min,
            sigma_max=sigma_max,
            lambda_max=lambda_max,
            c_lip=c_lip,
            v_e0=v_e0,
            rho=rho,
        )


def spread_bound(t, v_e0: float, sigma_min: float, ensemble_size: int, rho: float = 0.0):
    """Upper envelope of the particle spread at time(s) ``t``."""
    check_positive(v_e0, "v_e0")
    t = np.asarray(t, dtype=float)
    out = 1.0 / (2.0 * (1.0 - rho) * sigma_min / ensemble_size * t + 1.0 / v_e0)
    return float(out) if out.ndim == 0 else out


def zeta_bound(t, zeta0: float, m: float, rho: float = 0.0):
    """Lower envelope of the restricted smallest covariance eigenvalue."""
    check_positive(zeta0, "zeta0")
    t = np.asarray(t, dtype=float)
    out = 1.0 / ((1.0 - rho) * m * t + 1.0 / zeta0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class GradApproxResult:
    """Gradient-approximation residual norms, per particle and for the mean."""

    per_particle: np.ndarray
    mean_error: float

    @property
    def max_error(self) -> float:
        return float(np.max(self.per_particle))


def grad_approx_error(members, problem: DifferentiableForward, g_values=None) -> GradApproxResult:
    """Exact residuals of the derivative-free gradient approximation.

    For each particle the residual is
    ``|| C_uG Gam^{-1} (G(u_j) - y) - C grad_misfit(u_j) ||``; the mean
    version replaces ``G(u_j)`` by the ensemble-mean map value and evaluates
    the misfit gradient at the particle mean.  Identically zero for linear
    forward maps.
    """
    members = np.asarray(members, dtype=float)
    if g_values is None:
        g_values = problem.forward_all(members)
    stats = compute_stats(members, g_values)
    residuals = g_values - problem.data[None, :]
    weighted = problem.noise_inv(residuals.T).T  # (J, K)
    approx = weighted @ stats.cross_cov.T  # (J, n)
    exact = np.vstack([stats.cov @ grad_misfit(problem, u) for u in members])
    per_particle = np.linalg.norm(approx - exact, axis=1)
    mean_weighted = problem.noise_inv(stats.g_mean - problem.data)
    mean_err = float(
        np.linalg.norm(stats.cross_cov @ mean_weighted - stats.cov @ grad_misfit(problem, stats.mean))
    )
    return GradApproxResult(per_particle=per_particle, mean_error=mean_err)


def estimate_lipschitz(
    problem: InverseProblem,
    trajectory,
    rng: np.random.Generator,
    n_random_pairs: int = 200,
    safety: float = 1.5,
) -> float:
    """Empirical Lipschitz constant of the forward map along a trajectory.

    Takes the maximum difference quotient over all particle pairs at every
    checkpoint plus ``n_random_pairs`` uniform pairs in the trajectory's
    bounding box, scaled by a safety factor.
    """
    best = 0.0
    lo = None
    hi = None
    for cp in trajectory:
        members = cp.members
        lo = members.min(axis=0) if lo is None else np.minimum(lo, members.min(axis=0))
        hi = members.max(axis=0) if hi is None else np.maximum(hi, members.max(axis=0))
        g = problem.forward_all(members)
        for a in range(members.shape[0]):
            du = members[a + 1 :] - members[a]
            dg = g[a + 1 :] - g[a]
            dist = np.linalg.norm(du, axis=1)
            keep = dist > 1e-12 * (1.0 + np.linalg.norm(members[a]))
            if np.any(keep):
                quot = np.linalg.norm(dg[keep], axis=1) / dist[keep]
                best = max(best, float(quot.max()))
    span = hi - lo
    for _ in range(n_random_pairs):
        x_a = lo + span * rng.random(lo.size)
        x_b = lo + span * rng.random(lo.size)
        dist = np.linalg.norm(x_a - x_b)
        if dist <= 1e-12 * (1.0 + np.linalg.norm(x_a)):
            continue
        quot = np.linalg.norm(problem.forward(x_a) - problem.forward(x_b)) / dist
        best = max(best, float(quot))
    if best == 0.0:
        raise ValueError("forward map looks constant; cannot estimate a Lipschitz constant")
    return safety * best


@dataclass(frozen=True)
class RateFit:
    """Least-squares power-law fit of a decaying positive series."""

    exponent: float
    residual: float
    n_points: int
    window: tuple


def fit_rate(times, gaps, window: Optional[tuple] = None) -> RateFit:
    """Fit ``gap ~ t**(-exponent)`` on a log-log window.

    ``window`` defaults to the last two decades, ``[t_max / 100, t_max]``.

    Raises
    ------
    ValueError
        If any gap in the window is nonpositive (the trajectory passed the
        reference optimum; report that instead of fitting) or fewer than two
        points fall inside the window.
    """
    times = np.asarray(times, dtype=float)
    gaps = np.asarray(gaps, dtype=float)
    if window is None:
        window = (times.max() / 100.0, times.max())
    lo, hi = window
    mask = (times >= lo) & (times <= hi) & (times > 0)
    if np.count_nonzero(mask) < 2:
        raise ValueError("fewer than two points in the fitting window")
    if np.any(gaps[mask] <= 0):
        raise ValueError("nonpositive loss gap in the fitting window")
    log_t = np.log(times[mask])
    log_g = np.log(gaps[mask])
    slope, intercept = np.polyfit(log_t, log_g, 1)
    fitted = slope * log_t + intercept
    residual = float(np.sqrt(np.mean((log_g - fitted) ** 2)))
    return RateFit(
        exponent=float(-slope),
        residual=residual,
        n_points=int(np.count_nonzero(mask)),
        window=(float(lo), float(hi)),
    )


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Derived quantities at one checkpoint."""

    time: float
    v_e: float
    spread_upper_bound: float
    zeta: float
    zeta_lower_bound: float
    loss_mean: float
    loss_particle_avg: float
    loss_gap: float
    grad_approx_err: float
    subspace_drift: float
    theta_min: Optional[float] = None
    theta_max: Optional[float] = None


def evaluate_trajectory(
    trajectory,
    problem: DifferentiableForward,
    basis: SubspaceBasis,
    constants: BoundConstants,
    zeta0: float,
    phi_star: float,
) -> list:
    """Compute a :class:`DiagnosticsRecord` per checkpoint and attach it.

    Pure post-processing: re-evaluates the forward map and its Jacobian at
    every checkpoint; the trajectory itself is not modified beyond filling
    the ``record`` slots.
    """
    records = []
    member_span = basis.member_basis
    for cp in trajectory:
        members = cp.members
        g = problem.forward_all(members)
        stats = compute_stats(members, g)
        n_members = members.shape[0]
        v_e = stats.spread
        zeta = restricted_min_eigenvalue(stats.cov, basis)
        losses = [regularized_loss(problem, u) for u in members]
        loss_particle_avg = float(np.mean(losses))
        loss_mean = regularized_loss(problem, stats.mean)
        grad_err = grad_approx_error(members, problem, g).max_error
        outside = members - (members @ member_span) @ member_span.T
        drift = float(
            np.max(np.linalg.norm(outside, axis=1) / (1.0 + np.linalg.norm(members, axis=1)))
        )
        record = DiagnosticsRecord(
            time=cp.time,
            v_e=v_e,
            spread_upper_bound=spread_bound(
                cp.time, constants.v_e0, constants.sigma_min, n_members, constants.rho
            ),
            zeta=zeta,
            zeta_lower_bound=zeta_bound(cp.time, zeta0, constants.m, constants.rho),
            loss_mean=loss_mean,
            loss_particle_avg=loss_particle_avg,
            loss_gap=loss_particle_avg - phi_star,
            grad_approx_err=grad_err,
            subspace_drift=drift,
            theta_min=None if cp.theta is None else float(np.min(cp.theta)),
            theta_max=None if cp.theta is None else float(np.max(cp.theta)),
        )
        cp.record = record
        records.append(record)
    return records


@dataclass(frozen=True)
class BoundCheck:
    """Verdict for one bound at one checkpoint."""

    time: float
    name: str
    value: float
    bound: float
    passed: bool


@dataclass(frozen=True)
class BoundReport:
    """All per-checkpoint verdicts of one trajectory."""

    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self):
        return [c for c in self.checks if not c.passed]


def check_trajectory(
    trajectory,
    constants: BoundConstants,
    zeta0: float,
    rel_tol: float = 1e-6,
    drift_threshold: float = 1e-6,
) -> BoundReport:
    """Verify every proved bound at every checkpoint of a trajectory.

    Verdict tolerances absorb integration error: values are compared against
    their bounds scaled by ``1 +/- (1e-6 + 10 rel_tol)``.  Failures become
    report entries, never exceptions.
    """
    tol = 1e-6 + 10.0 * rel_tol
    checks = []
    for cp in trajectory:
        rec = cp.record
        if rec is None:
            raise ValueError("trajectory has no diagnostics records; run evaluate_trajectory first")
        n_members = cp.members.shape[0]
        sb = spread_bound(rec.time, constants.v_e0, constants.sigma_min, n_members, constants.rho)
        zb = zeta_bound(rec.time, zeta0, constants.m, constants.rho)
        checks.append(
            BoundCheck(rec.time, "spread_upper", rec.v_e, sb, rec.v_e <= sb * (1.0 + tol))
        )
        checks.append(
            BoundCheck(rec.time, "zeta_lower", rec.zeta, zb, rec.zeta >= zb * (1.0 - tol))
        )
        checks.append(
            BoundCheck(
                rec.time,
                "subspace_drift",
                rec.subspace_drift,
                drift_threshold,
                rec.subspace_drift <= drift_threshold,
            )
        )
        gap_slack = 1e-10 * (1.0 + abs(rec.loss_particle_avg))
        checks.append(
            BoundCheck(rec.time, "gap_nonnegative", rec.loss_gap, 0.0, rec.loss_gap >= -gap_slack)
        )
    return BoundReport(checks=tuple(checks))


def corrupt_records(trajectory, factor: float = 2.0):
    """Scale the recorded spreads (negative-control helper for the check suite)."""
    for cp in trajectory:
        if cp.record is not None:
            cp.record = replace(cp.record, v_e=cp.record.v_e * factor)
