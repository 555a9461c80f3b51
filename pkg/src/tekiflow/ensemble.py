"""Particle ensembles and their empirical moments.

All moments use the ``1/J`` divisor, not the unbiased ``1/(J-1)``.  This is
deliberate and every downstream formula (flow right-hand sides, collapse
bounds, subspace eigenvalues) depends on it; do not "fix" it to match the
default of general statistics libraries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .validation import as_members

__all__ = [
    "Ensemble",
    "EnsembleStats",
    "compute_mean",
    "compute_stats",
    "ensemble_spread",
]


@dataclass(frozen=True)
class Ensemble:
    """An ordered collection of J parameter vectors of common dimension n_x.

    Parameters
    ----------
    members : ndarray, shape (J, n_x)
        One particle per row.  J >= 2 is required: a single particle has zero
        sample covariance and is a fixed point of every flow in this package.
    """

    members: np.ndarray

    def __post_init__(self):
        m = as_members(self.members)
        if m.shape[0] < 2:
            raise ValueError(f"ensemble needs at least 2 members, got {m.shape[0]}")
        m = m.copy()
        m.setflags(write=False)
        object.__setattr__(self, "members", m)

    @property
    def size(self) -> int:
        """Number of particles J."""
        return self.members.shape[0]

    @property
    def dim(self) -> int:
        """Parameter dimension n_x."""
        return self.members.shape[1]

    def with_members(self, members: np.ndarray) -> "Ensemble":
        return Ensemble(members)


@dataclass(frozen=True)
class EnsembleStats:
    """Empirical moments of an ensemble and its forward-map values.

    Attributes
    ----------
    mean : ndarray, shape (n_x,)
        Particle mean.
    g_mean : ndarray, shape (K,)
        Mean of the forward-map values.
    cov : ndarray, shape (n_x, n_x)
        Sample covariance of the particles (1/J divisor); symmetric positive
        semidefinite with rank at most min(n_x, J - 1).
    cross_cov : ndarray, shape (n_x, K)
        Particle/observation cross covariance; its transpose is the
        observation/particle cross covariance.
    out_cov : ndarray, shape (K, K)
        Sample covariance of the forward-map values.
    spread : float
        Mean squared deviation of particles from their mean; equals
        ``trace(cov)``.
    cov_factor : ndarray, shape (n_x, J)
        Columns are the spread vectors scaled by 1/sqrt(J), so that
        ``cov = cov_factor @ cov_factor.T``.  Exposed so callers can exploit
        the rank-(J-1) structure without refactorizing.
    """

    mean: np.ndarray
    g_mean: np.ndarray
    cov: np.ndarray
    cross_cov: np.ndarray
    out_cov: np.ndarray
    spread: float
    cov_factor: np.ndarray = field(repr=False)


def _members_of(ensemble) -> np.ndarray:
    if isinstance(ensemble, Ensemble):
        return ensemble.members
    return as_members(ensemble)


def compute_mean(ensemble) -> np.ndarray:
    """Arithmetic mean over ensemble members."""
    members = _members_of(ensemble)
    if members.shape[0] == 0:
        raise ValueError("empty ensemble")
    return members.mean(axis=0)


def compute_stats(ensemble, g_values) -> EnsembleStats:
    """Compute all empirical moments of an ensemble and its map values.

    Parameters
    ----------
    ensemble : Ensemble or ndarray, shape (J, n_x)
    g_values : ndarray, shape (J, K)
        Forward-map value for each member, same order.

    Returns
    -------
    EnsembleStats

    Notes
    -----
    Moments are recomputed from scratch on every call; forward-map evaluation
    dominates the cost of a flow step, so incremental updates are not worth
    their complexity here.
    """
    members = _members_of(ensemble)
    if members.shape[0] == 0:
        raise ValueError("empty ensemble")
    g = np.asarray(g_values, dtype=float)
    if g.ndim != 2 or g.shape[0] != members.shape[0]:
        raise ValueError(
            f"g_values must have one row per member: got {g.shape}, "
            f"ensemble has {members.shape[0]} members"
        )
    n = members.shape[0]
    mean = members.mean(axis=0)
    g_mean = g.mean(axis=0)
    dev = members - mean
    g_dev = g - g_mean
    cov = dev.T @ dev / n
    cross_cov = dev.T @ g_dev / n
    out_cov = g_dev.T @ g_dev / n
    spread = float(np.sum(dev * dev)) / n
    return EnsembleStats(
        mean=mean,
        g_mean=g_mean,
        cov=cov,
        cross_cov=cross_cov,
        out_cov=out_cov,
        spread=spread,
        cov_factor=dev.T / np.sqrt(n),
    )


def ensemble_spread(ensemble) -> float:
    """Mean squared deviation of the particles from their mean.

    Equals the trace of the sample covariance returned by
    :func:`compute_stats`.
    """
    members = _members_of(ensemble)
    if members.shape[0] == 0:
        raise ValueError("empty ensemble")
    dev = members - members.mean(axis=0)
    return float(np.sum(dev * dev)) / members.shape[0]
