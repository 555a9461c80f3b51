"""Adaptive time integration of the particle flows.

A Dormand-Prince 5(4) embedded pair with PI step-size control drives the
long-horizon integrations.  The collapse dynamics slow down like 1/t, so the
controller is allowed to grow steps by at most a factor of 10 per step, which
rides through the collapse transient without overshooting.  Output states at
the logarithmically spaced checkpoint times come from the pair's quartic
dense-output interpolant, whose accuracy matches the step error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .flows import FlowState, pack_derivative, pack_state, unpack_state

__all__ = [
    "IntegratorConfig",
    "Checkpoint",
    "Trajectory",
    "IntegrationError",
    "checkpoint_times",
    "solve_ode",
    "integrate",
]


class IntegrationError(RuntimeError):
    """Integration aborted; carries the state reached for post-mortems."""

    def __init__(self, message, t=None, y=None, step=None, n_steps=None):
        super().__init__(message)
        self.t = t
        self.y = y
        self.step = step
        self.n_steps = n_steps


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances, horizon and output density of one integration."""

    t_final: float
    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    checkpoints: int = 33
    max_steps: int = 1_000_000
    project: bool = False  # re-project members onto the initial member span after each step

    def __post_init__(self):
        if self.t_final <= 0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if self.rel_tol <= 0 or self.abs_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.checkpoints < 2:
            raise ValueError(f"checkpoints must be >= 2, got {self.checkpoints}")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


@dataclass
class Checkpoint:
    """Snapshot of the flow state at one output time."""

    time: float
    members: np.ndarray
    theta: Optional[np.ndarray] = None
    record: object = None  # filled in by the diagnostics pass


@dataclass
class Trajectory:
    """Ordered checkpoints of one integration plus solver metadata."""

    checkpoints: list
    metadata: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return np.array([c.time for c in self.checkpoints])

    def __iter__(self):
        return iter(self.checkpoints)

    def __len__(self):
        return len(self.checkpoints)


def checkpoint_times(t_final: float, count: int) -> np.ndarray:
    """{0} followed by a geometric ladder of output times up to t_final.

    The ladder starts at 1e-3 (or ``t_final * 1e-10`` for very short
    horizons); both endpoints are exact.
    """
    if t_final <= 0:
        raise ValueError(f"t_final must be positive, got {t_final}")
    if count < 2:
        raise ValueError(f"count must be >= 2, got {count}")
    if count == 2:
        return np.array([0.0, float(t_final)])
    start = 1e-3 if t_final > 1e-3 else t_final * 1e-10
    times = np.empty(count)
    times[0] = 0.0
    times[1:] = np.geomspace(start, t_final, count - 1)
    times[-1] = float(t_final)
    return times


# -- Dormand-Prince 5(4) tableau --------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([]),
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E = _B - _B_LOW

# Quartic dense-output coefficients for the pair (Shampine's interpolant).
_P = np.array(
    [
        [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
        [0.0, 0.0, 0.0, 0.0],
        [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
        [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
        [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
        [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
        [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
    ]
)

# PI controller: classic (0.7/k, 0.4/k) exponents for a 4th-order error estimate
_PI_ALPHA = 0.7 / 5
_PI_BETA = 0.4 / 5
_SAFETY = 0.9
_MAX_GROWTH = 10.0
_MIN_SHRINK = 0.2


@dataclass
class SolveResult:
    """States at the requested output times, plus step statistics."""

    t_eval: np.ndarray
    states: np.ndarray
    n_steps: int
    n_rejected: int


def _error_norm(err: np.ndarray, y0: np.ndarray, y1: np.ndarray, rtol, atol) -> float:
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, y0, f0, rtol, atol, t_final) -> float:
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 0.01 * d0 / d1 if d0 > 1e-5 and d1 > 1e-5 else 1e-6
    h0 = min(h0, t_final)
    try:
        f1 = np.asarray(f(h0, y0 + h0 * f0), dtype=float)
        d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    except (FloatingPointError, ValueError, np.linalg.LinAlgError):
        d2 = np.inf
    if not np.isfinite(d2):
        return min(h0 * 1e-3, t_final)
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, t_final)


def solve_ode(
    f: Callable[[float, np.ndarray], np.ndarray],
    y0: np.ndarray,
    t_final: float,
    rel_tol: float = 1e-6,
    abs_tol: float = 1e-9,
    t_eval: Optional[np.ndarray] = None,
    max_steps: int = 1_000_000,
    projector: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SolveResult:
    """Integrate ``dy/dt = f(t, y)`` from 0 to ``t_final``.

    Error per step is controlled in the mixed absolute/relative RMS norm over
    the full state vector.  Requested output times are filled from the dense
    interpolant of the step containing them; the final time is hit exactly.

    Raises
    ------
    IntegrationError
        On step-size underflow (step below ``1e-14 * max(t, 1)``), on
        exceeding ``max_steps``, or on a non-finite state.
    """
    y = np.asarray(y0, dtype=float).copy()
    if y.ndim != 1:
        raise ValueError("y0 must be a vector")
    t_eval = np.array([] if t_eval is None else t_eval, dtype=float)
    if np.any(t_eval < 0) or np.any(t_eval > t_final):
        raise ValueError("t_eval values must lie in [0, t_final]")
    if np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must be strictly increasing")
    out = np.empty((t_eval.size, y.size))
    out_pos = 0
    while out_pos < t_eval.size and t_eval[out_pos] == 0.0:
        out[out_pos] = y
        out_pos += 1

    t = 0.0
    k = np.empty((7, y.size))
    f0 = np.asarray(f(t, y), dtype=float)  # errors here are caller bugs: propagate
    if not np.all(np.isfinite(f0)):
        raise IntegrationError("right-hand side non-finite at the initial state", t=0.0, y=y)
    h = _initial_step(f, y, f0, rel_tol, abs_tol, t_final)
    err_prev = 1.0
    n_steps = 0
    n_rejected = 0

    while t < t_final:
        if n_steps + n_rejected >= max_steps:
            raise IntegrationError(
                f"exceeded max_steps = {max_steps}", t=t, y=y, step=h, n_steps=n_steps
            )
        if h < 1e-14 * max(t, 1.0):
            raise IntegrationError(
                f"step size underflow: h = {h:.3e} at t = {t:.6e}",
                t=t,
                y=y,
                step=h,
                n_steps=n_steps,
            )
        final_step = h >= t_final - t
        if final_step:
            h = t_final - t
        k[0] = f0
        failed = False
        try:
            for i in range(1, 6):
                k[i] = f(t + _C[i] * h, y + h * (_A[i] @ k[:i]))
            y_new = y + h * (_B[:6] @ k[:6])
            k[6] = f(t + h, y_new)
        except (FloatingPointError, ValueError, np.linalg.LinAlgError):
            # wild trial state (e.g. overflow inside the forward map): reject
            failed = True
        if not failed:
            err = _error_norm(h * (_E @ k), y, y_new, rel_tol, abs_tol)
            failed = not np.isfinite(err)
        if failed:
            n_rejected += 1
            h *= _MIN_SHRINK
            continue
        if err <= 1.0:
            t_new = t_final if final_step else t + h
            # accepted: fill checkpoints covered by this step via dense output
            if out_pos < t_eval.size and t_eval[out_pos] <= t_new:
                q = k.T @ _P  # (n, 4)
                while out_pos < t_eval.size and t_eval[out_pos] <= t_new:
                    theta = min((t_eval[out_pos] - t) / h, 1.0)
                    powers = np.array([theta, theta**2, theta**3, theta**4])
                    out[out_pos] = y + h * (q @ powers)
                    out_pos += 1
            t = t_new
            y = y_new
            if projector is not None:
                y = projector(y)
                k[6] = f(t, y)
            f0 = k[6].copy()
            factor = _SAFETY * (err + 1e-300) ** (-_PI_ALPHA) * err_prev**_PI_BETA
            err_prev = max(err, 1e-4)
            h *= min(_MAX_GROWTH, max(_MIN_SHRINK, factor))
            n_steps += 1
            if t == t_final and out_pos > 0 and t_eval.size and t_eval[out_pos - 1] == t_final:
                out[out_pos - 1] = y  # exact endpoint, no interpolant noise
        else:
            n_rejected += 1
            h *= max(_MIN_SHRINK, _SAFETY * err ** (-_PI_ALPHA))

    if out_pos < t_eval.size:
        # numerically possible only for times within one ulp of t_final
        out[out_pos:] = y
    return SolveResult(t_eval=t_eval, states=out, n_steps=n_steps, n_rejected=n_rejected)


def integrate(rhs, initial: FlowState, config: IntegratorConfig) -> Trajectory:
    """Integrate a flow and checkpoint it at logarithmically spaced times.

    Parameters
    ----------
    rhs : callable
        Map from :class:`~tekiflow.flows.FlowState` to
        :class:`~tekiflow.flows.FlowDerivative` (see
        :func:`tekiflow.flows.make_rhs`).
    initial : FlowState
        State at time zero; fixes the packing layout.
    config : IntegratorConfig
    """
    times = checkpoint_times(config.t_final, config.checkpoints)
    z0 = pack_state(initial)

    def f(t, z):
        return pack_derivative(rhs(unpack_state(z, initial, t)))

    projector = None
    if config.project:
        members = initial.ensemble.members
        u, s, _ = np.linalg.svd(members.T, full_matrices=False)
        rank = int(np.sum(s > s[0] * max(members.shape) * np.finfo(float).eps))
        span = u[:, :rank]
        head = members.size

        def projector(z):
            flat = z.copy()
            block = flat[:head].reshape(members.shape)
            flat[:head] = ((block @ span) @ span.T).ravel()
            return flat

    result = solve_ode(
        f,
        z0,
        config.t_final,
        rel_tol=config.rel_tol,
        abs_tol=config.abs_tol,
        t_eval=times,
        max_steps=config.max_steps,
        projector=projector,
    )
    checkpoints = []
    for t, z in zip(result.t_eval, result.states):
        state = unpack_state(z, initial, float(t))
        checkpoints.append(
            Checkpoint(time=float(t), members=state.ensemble.members, theta=state.theta)
        )
    metadata = {
        "n_steps": result.n_steps,
        "n_rejected": result.n_rejected,
        "projected": bool(config.project),
        "rel_tol": config.rel_tol,
        "abs_tol": config.abs_tol,
    }
    return Trajectory(checkpoints=checkpoints, metadata=metadata)
