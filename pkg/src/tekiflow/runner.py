"""Experiment orchestration: build, run, post-process, persist.

A run resolves its configuration into a problem, draws the ground truth and
data with seeded noise, initializes the ensemble, solves the subspace
reference optimum, integrates the flow, evaluates every diagnostic bound
along the trajectory, and writes four artifacts under the output directory:

* ``trajectory.csv``   one diagnostics row per checkpoint (fixed schema),
* ``diagnostics.csv``  per-checkpoint bound verdicts,
* ``manifest.txt``     resolved config, seeds and derived constants; enough
  to re-run the experiment bit-identically,
* ``plot_trajectory.py``  a standalone script that renders the CSVs.

All randomness flows from the single config seed through named substreams of
a counter-based generator, so every artifact is replayable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .config import ExperimentConfig
from .darcy import GridSpec, ObservationOperator, darcy_forward, darcy_jacobian
from .diagnostics import (
    BoundConstants,
    BoundReport,
    check_trajectory,
    estimate_lipschitz,
    evaluate_trajectory,
)
from .ensemble import Ensemble, compute_stats, ensemble_spread
from .flows import AdaptiveSettings, FlowParams, FlowState, make_rhs, teki_rhs
from .integrate import IntegratorConfig, Trajectory, integrate
from .priors import LaplacianEigenbasis, PriorSpec, init_ensemble, sample_prior
from .problems import DifferentiableForward, grad_regularized_loss, regularized_loss
from .reference import ConstrainedSolution, OptimizationError, solve_constrained
from .subspace import SubspaceBasis, build_subspace, restricted_min_eigenvalue

__all__ = [
    "ProblemBundle",
    "RunResult",
    "build_problem",
    "run_experiment",
    "reproduce",
    "check_experiment",
    "write_manifest",
    "read_manifest_config",
    "TRAJECTORY_COLUMNS",
]

TRAJECTORY_COLUMNS = (
    "t",
    "V_e",
    "spread_bound",
    "zeta",
    "zeta_bound",
    "loss_mean",
    "loss_particle_avg",
    "loss_gap",
    "grad_approx_err",
    "subspace_drift",
    "theta_min",
    "theta_max",
)

_SUBSTREAMS = ("truth", "noise", "init", "forward", "lipschitz", "probes")


def _substreams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(_SUBSTREAMS))
    return {
        name: np.random.Generator(np.random.Philox(child))
        for name, child in zip(_SUBSTREAMS, children)
    }


@dataclass
class ProblemBundle:
    """A fully materialized problem with its spectral basis and ground truth."""

    problem: DifferentiableForward
    eigenbasis: LaplacianEigenbasis
    prior: PriorSpec
    truth: np.ndarray
    grid: Optional[GridSpec] = None


def build_problem(config: ExperimentConfig, rngs=None) -> ProblemBundle:
    """Materialize the configured inverse problem with seeded truth and data."""
    rngs = rngs or _substreams(config.ensemble.seed)
    prior_cfg = config.prior
    if config.problem.kind == "darcy":
        grid = GridSpec(config.problem.refinement)
        op = ObservationOperator.equidistant(grid, config.problem.n_obs)
        eigenbasis = LaplacianEigenbasis.from_interior_count(grid.n_interior)

        def forward(u, _grid=grid, _op=op):
            return darcy_forward(_grid, _op, u)

        def jacobian(u, _grid=grid, _op=op):
            return darcy_jacobian(_grid, _op, u)

        n_obs = op.count
    else:
        grid = None
        n_param = config.problem.n_param
        eigenbasis = LaplacianEigenbasis.from_interior_count(n_param)
        n_obs = config.problem.n_obs or n_param
        if n_obs > n_param:
            raise ValueError("linear problems need n_obs <= n_param")
        gauss = rngs["forward"].standard_normal((n_param, n_param))
        q, r = np.linalg.qr(gauss)
        q = q * np.sign(np.diag(r))
        matrix = q[:n_obs]

        def forward(u, _a=matrix):
            return _a @ u

        def jacobian(u, _a=matrix):
            return _a.copy()

    prior = PriorSpec(prior_cfg.amplitude, prior_cfg.exponent, eigenbasis)
    truth_amp, truth_exp = prior_cfg.resolved_truth()
    truth_prior = PriorSpec(truth_amp, truth_exp, eigenbasis)
    truth = sample_prior(truth_prior, rngs["truth"])
    noise_cov = config.problem.noise * np.eye(n_obs)
    data = forward(truth) + np.sqrt(config.problem.noise) * rngs["noise"].standard_normal(n_obs)
    problem = DifferentiableForward(
        forward=forward,
        jacobian=jacobian,
        data=data,
        noise_cov=noise_cov,
        reg_matrix=prior.covariance_matrix(),
        reg_scale=config.flow.kappa,
    )
    return ProblemBundle(problem=problem, eigenbasis=eigenbasis, prior=prior, truth=truth, grid=grid)


@dataclass
class RunResult:
    """Everything produced by one experiment run."""

    config: ExperimentConfig
    bundle: ProblemBundle
    initial: Ensemble
    subspace: SubspaceBasis
    zeta0: float
    v_e0: float
    reference: ConstrainedSolution
    trajectory: Trajectory
    constants: BoundConstants
    report: BoundReport
    theta_clipped: bool = False
    paths: dict = field(default_factory=dict)

    @property
    def records(self):
        return [cp.record for cp in self.trajectory]

    @property
    def estimate(self) -> np.ndarray:
        """Particle mean at the final time."""
        return self.trajectory.checkpoints[-1].members.mean(axis=0)

    def reconstruction_errors(self) -> np.ndarray:
        """Squared distance of the running particle mean to the ground truth."""
        truth = self.bundle.truth
        return np.array(
            [float(np.sum((cp.members.mean(axis=0) - truth) ** 2)) for cp in self.trajectory]
        )


def _theta0(prior: PriorSpec) -> np.ndarray:
    # spectral weights reproducing the fixed covariance at time zero
    return prior.basis.eigenvalues ** prior.exponent / prior.amplitude


def _solve_reference(problem, subspace, initial_mean, trajectory) -> ConstrainedSolution:
    q = subspace.spread_basis
    final_mean = trajectory.checkpoints[-1].members.mean(axis=0)
    best = None
    failure = None
    for raw in (initial_mean, final_mean):
        start = subspace.offset + q @ (q.T @ raw)  # snap onto the affine set
        tol = min(1e-8, 1e-10 * (1.0 + abs(regularized_loss(problem, start))))
        try:
            solution = solve_constrained(problem, subspace, start, tol=tol)
        except OptimizationError as exc:
            # a start stuck in a nonconvex stretch is fine as long as some
            # other start certifies; keep the failure in case none does
            if failure is None or (
                exc.best is not None
                and failure.best is not None
                and exc.best.value < failure.best.value
            ):
                failure = exc
            continue
        if best is None or solution.value < best.value:
            best = solution
    if best is None:
        raise failure
    return best


def run_experiment(config: ExperimentConfig, write: bool = True) -> RunResult:
    """Execute one configured experiment end to end."""
    rngs = _substreams(config.ensemble.seed)
    bundle = build_problem(config, rngs)
    problem = bundle.problem

    ensemble = init_ensemble(config.ensemble.init, config.ensemble.size, bundle.prior, rngs["init"])
    subspace = build_subspace(ensemble)
    stats0 = compute_stats(ensemble.members, problem.forward_all(ensemble.members))
    zeta0 = restricted_min_eigenvalue(stats0.cov, subspace)
    if zeta0 <= 0:
        raise RuntimeError(f"initial restricted eigenvalue is not positive: {zeta0}")
    v_e0 = ensemble_spread(ensemble)

    adaptive = None
    theta = None
    if config.flow.adaptive:
        adaptive = AdaptiveSettings(
            basis=bundle.eigenbasis,
            bound=config.flow.bound,
            rate=config.flow.theta_rate,
            per_particle=config.flow.per_particle,
        )
        theta = _theta0(bundle.prior)
        if config.flow.per_particle:
            theta = np.tile(theta, (ensemble.size, 1))
    params = FlowParams(problem=problem, rho=config.flow.rho, kappa=config.flow.kappa, adaptive=adaptive)
    initial = FlowState(ensemble=ensemble, theta=theta, time=0.0)
    int_config = IntegratorConfig(
        t_final=config.integrator.t_final,
        rel_tol=config.integrator.rel_tol,
        abs_tol=config.integrator.abs_tol,
        checkpoints=config.integrator.checkpoints,
        max_steps=config.integrator.max_steps,
        project=config.integrator.project,
    )
    trajectory = integrate(make_rhs(params), initial, int_config)

    # the restricted loss need not be convex for nonlinear forward maps, so
    # the reference solve is multi-started: from the initial mean and from the
    # terminal mean the flow itself reached; the lowest certified value wins
    reference = _solve_reference(problem, subspace, stats0.mean, trajectory)

    c_lip = estimate_lipschitz(problem, trajectory, rngs["lipschitz"])
    theta_clipped = False
    if config.flow.adaptive:
        # effective regularization extremes follow the running hyperparameters
        theta_lo = min(float(np.min(cp.theta)) for cp in trajectory)
        theta_hi = max(float(np.max(cp.theta)) for cp in trajectory)
        settings = params.adaptive
        theta_clipped = theta_lo <= settings.floor or theta_hi >= settings.bound
        theta_lo = float(np.clip(theta_lo, settings.floor, settings.bound))
        theta_hi = float(np.clip(theta_hi, settings.floor, settings.bound))
        _, lambda_max = problem.noise_inv_extremes()
        constants = BoundConstants(
            sigma_min=theta_lo,
            sigma_max=theta_hi,
            lambda_max=lambda_max,
            c_lip=c_lip,
            v_e0=v_e0,
            rho=config.flow.rho,
        )
    else:
        constants = BoundConstants.from_problem(problem, v_e0, config.flow.rho, c_lip)

    evaluate_trajectory(trajectory, problem, subspace, constants, zeta0, reference.value)
    report = check_trajectory(
        trajectory, constants, zeta0, rel_tol=config.integrator.rel_tol
    )

    result = RunResult(
        config=config,
        bundle=bundle,
        initial=ensemble,
        subspace=subspace,
        zeta0=zeta0,
        v_e0=v_e0,
        reference=reference,
        trajectory=trajectory,
        constants=constants,
        report=report,
        theta_clipped=theta_clipped,
    )
    if write:
        result.paths = write_artifacts(result)
    return result


# -- artifact writing --------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    return f"{value:.17g}"


def write_trajectory_csv(path: Path, records) -> None:
    lines = [",".join(TRAJECTORY_COLUMNS)]
    for r in records:
        lines.append(
            ",".join(
                _fmt(v)
                for v in (
                    r.time,
                    r.v_e,
                    r.spread_upper_bound,
                    r.zeta,
                    r.zeta_lower_bound,
                    r.loss_mean,
                    r.loss_particle_avg,
                    r.loss_gap,
                    r.grad_approx_err,
                    r.subspace_drift,
                    r.theta_min,
                    r.theta_max,
                )
            )
        )
    path.write_text("\n".join(lines) + "\n")


def write_diagnostics_csv(path: Path, report: BoundReport) -> None:
    lines = ["t,check,value,bound,passed"]
    for c in report.checks:
        lines.append(f"{_fmt(c.time)},{c.name},{_fmt(c.value)},{_fmt(c.bound)},{int(c.passed)}")
    path.write_text("\n".join(lines) + "\n")


def _flatten(prefix: str, data: dict, out: list) -> None:
    for key, value in data.items():
        path = f"{prefix}.{key}"
        if isinstance(value, dict):
            _flatten(path, value, out)
        else:
            out.append((path, value))


def write_manifest(path: Path, config: ExperimentConfig, extras: dict) -> None:
    """Key-value manifest; the config lines alone re-run the experiment."""
    items: list = []
    _flatten("config", config.to_dict(), items)
    items.extend(extras.items())
    lines = [f"{key} = {json.dumps(value)}" for key, value in items]
    path.write_text("\n".join(lines) + "\n")


def read_manifest_config(path) -> ExperimentConfig:
    """Rebuild the experiment configuration from a manifest file."""
    nested: dict = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or " = " not in line:
            continue
        key, raw = line.split(" = ", 1)
        if not key.startswith("config."):
            continue
        value = json.loads(raw)
        parts = key.split(".")[1:]
        node = nested
        for part in parts[:-1]:
            node = node.setdefault(part, {})
        node[parts[-1]] = value
    return ExperimentConfig.from_dict(nested)


_PLOT_SCRIPT = """\
#!/usr/bin/env python3
\"\"\"Render the trajectory diagnostics written next to this script.\"\"\"
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).parent
rows = list(csv.DictReader(open(here / "trajectory.csv")))
get = lambda k: [float(r[k]) for r in rows if r[k]]
t = get("t")[1:]

fig, axes = plt.subplots(1, 3, figsize=(15, 4))
axes[0].loglog(t, get("V_e")[1:], label="V_e")
axes[0].loglog(t, get("spread_bound")[1:], "--", label="upper bound")
axes[0].loglog(t, get("zeta")[1:], label="zeta")
axes[0].loglog(t, get("zeta_bound")[1:], "--", label="lower bound")
axes[0].set_xlabel("t"); axes[0].legend(); axes[0].set_title("spread and restricted eigenvalue")
axes[1].loglog(t, get("loss_mean")[1:], label="loss at mean")
axes[1].loglog(t, get("loss_particle_avg")[1:], label="particle-average loss")
axes[1].set_xlabel("t"); axes[1].legend(); axes[1].set_title("loss decay")
gaps = get("loss_gap")[1:]
if all(g > 0 for g in gaps):
    axes[2].loglog(t, gaps)
axes[2].set_xlabel("t"); axes[2].set_title("gap to subspace optimum")
fig.tight_layout()
fig.savefig(here / "trajectory.png", dpi=150)
print("wrote", here / "trajectory.png")
"""


def write_artifacts(result: RunResult) -> dict:
    out_dir = Path(result.config.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectory": out_dir / "trajectory.csv",
        "diagnostics": out_dir / "diagnostics.csv",
        "manifest": out_dir / "manifest.txt",
        "plot": out_dir / "plot_trajectory.py",
    }
    write_trajectory_csv(paths["trajectory"], result.records)
    write_diagnostics_csv(paths["diagnostics"], result.report)
    extras = {
        "data.y": [float(v) for v in result.bundle.problem.data],
        "constants.c_lip": result.constants.c_lip,
        "constants.sigma_min": result.constants.sigma_min,
        "constants.sigma_max": result.constants.sigma_max,
        "constants.lambda_max": result.constants.lambda_max,
        "constants.m": result.constants.m,
        "ensemble.v_e0": result.v_e0,
        "subspace.zeta0": result.zeta0,
        "reference.phi_star": result.reference.value,
        "reference.kkt_residual": result.reference.kkt_residual,
        "reference.offset_derivative": result.reference.offset_derivative,
        "reference.iterations": result.reference.iterations,
        "run.n_steps": result.trajectory.metadata["n_steps"],
        "run.n_rejected": result.trajectory.metadata["n_rejected"],
        "run.theta_clipped": result.theta_clipped,
        "run.bounds_passed": result.report.passed,
    }
    write_manifest(paths["manifest"], result.config, extras)
    paths["plot"].write_text(_PLOT_SCRIPT)
    if "npz" in result.config.output.formats:
        paths["states"] = out_dir / "states.npz"
        arrays = {
            f"members_{i:04d}": cp.members for i, cp in enumerate(result.trajectory)
        }
        arrays["times"] = result.trajectory.times
        np.savez(paths["states"], **arrays)
    return paths


# -- invariant suite for the check subcommand --------------------------------


def invariant_suite(result: RunResult) -> list:
    """Cheap spot checks of the library invariants on a finished run.

    Returns ``(name, passed, value)`` triples; used by the CLI ``check``
    subcommand alongside the trajectory bound report.
    """
    problem = result.bundle.problem
    ensemble = result.initial
    members = ensemble.members
    g = problem.forward_all(members)
    stats = compute_stats(members, g)
    checks = []

    trace_err = abs(np.trace(stats.cov) - stats.spread) / max(stats.spread, 1e-300)
    checks.append(("moments_trace_equals_spread", trace_err <= 1e-13, trace_err))

    basis = result.bundle.eigenbasis
    n = basis.dim
    h = 1.0 / (n + 1)
    second_diff = (
        np.diag(np.full(n, 2.0)) - np.diag(np.ones(n - 1), 1) - np.diag(np.ones(n - 1), -1)
    ) / h**2
    resid = np.linalg.norm(second_diff @ basis.vectors - basis.vectors * basis.eigenvalues)
    checks.append(("eigenbasis_residual", resid <= 1e-8 * np.max(basis.eigenvalues), resid))

    c = result.subspace.container_basis
    proj = c @ c.T
    proj_err = max(
        np.max(np.abs(proj @ proj - proj)), np.max(np.abs(proj - proj.T))
    )
    checks.append(("projector_idempotent_symmetric", proj_err <= 1e-12, proj_err))

    params = FlowParams(problem=problem, rho=result.config.flow.rho, kappa=result.config.flow.kappa)
    deriv = teki_rhs(FlowState(ensemble=ensemble), params)
    q = result.subspace.spread_basis
    outside = deriv.members - (deriv.members @ q) @ q.T
    rhs_scale = max(float(np.linalg.norm(deriv.members)), 1e-300)
    span_err = float(np.linalg.norm(outside)) / rhs_scale
    checks.append(("rhs_in_spread_span", span_err <= 1e-12, span_err))

    dev = members - stats.mean
    dissipation = 2.0 / members.shape[0] * float(np.sum(dev * deriv.members))
    diss_scale = 2.0 / members.shape[0] * float(
        np.sum(np.linalg.norm(dev, axis=1) * np.linalg.norm(deriv.members, axis=1))
    )
    ok = dissipation <= 1e-12 * (1.0 + diss_scale) if result.config.flow.kappa > 0 else True
    checks.append(("spread_dissipation", ok, dissipation))

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(12345)))
    x = stats.mean + 0.05 * rng.standard_normal(problem.n_param)
    jac = problem.jacobian(x)
    step = 1e-6 * (1.0 + np.linalg.norm(x))
    fd = np.empty_like(jac)
    for i in range(problem.n_param):
        e = np.zeros(problem.n_param)
        e[i] = step
        fd[:, i] = (problem.forward(x + e) - problem.forward(x - e)) / (2 * step)
    jac_err = np.linalg.norm(jac - fd) / max(np.linalg.norm(jac), 1e-300)
    checks.append(("jacobian_matches_fd", jac_err <= 1e-5, jac_err))

    grad = grad_regularized_loss(problem, result.reference.minimizer)
    kkt = float(np.linalg.norm(q.T @ grad))
    checks.append(("reference_kkt", kkt <= 1e-6, kkt))

    checks.append(("trajectory_bounds", result.report.passed, float(len(result.report.failures()))))
    return checks


def check_experiment(config: ExperimentConfig) -> tuple[dict, bool]:
    """Run the experiment and the full verification suite; emit a verdict file."""
    result = run_experiment(config, write=True)
    checks = invariant_suite(result)
    verdict = {
        "passed": all(ok for _, ok, _ in checks),
        "checks": [
            {"name": name, "passed": bool(ok), "value": float(value)}
            for name, ok, value in checks
        ],
        "bound_failures": len(result.report.failures()),
    }
    out_dir = Path(config.output.directory)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "verdict.json").write_text(json.dumps(verdict, indent=2) + "\n")
    return verdict, verdict["passed"]


# -- figure reproduction ------------------------------------------------------


@dataclass
class RunSummary:
    """Picklable extract of a run; what figure assembly needs, nothing more.

    Full results hold forward-map closures and cannot cross process
    boundaries, so worker-pool execution returns these instead.
    """

    times: np.ndarray
    records: list
    phi_star: float
    estimate: np.ndarray
    truth: np.ndarray
    nodes: Optional[np.ndarray]
    reconstruction_errors: np.ndarray
    bounds_passed: bool


def _summarize(result: RunResult) -> RunSummary:
    return RunSummary(
        times=result.trajectory.times,
        records=result.records,
        phi_star=result.reference.value,
        estimate=result.estimate,
        truth=result.bundle.truth,
        nodes=None if result.bundle.grid is None else result.bundle.grid.nodes,
        reconstruction_errors=result.reconstruction_errors(),
        bounds_passed=result.report.passed,
    )


def _run_summary(config_dict: dict) -> RunSummary:
    """Worker-pool entry point: run one experiment from its plain-dict config."""
    return _summarize(run_experiment(ExperimentConfig.from_dict(config_dict), write=True))


_SCALES = {
    "desk": {"refinement": 6, "t_final": 1e4, "spread_size": 20, "sizes": (5, 20, 50), "adaptive_size": 20},
    "paper": {"refinement": 8, "t_final": 1e7, "spread_size": 50, "sizes": (5, 20, 50), "adaptive_size": 100},
}

_RHOS = (0.0, 0.25, 0.5, 0.8)


def _base_config(scale: str, out_dir: str, **overrides) -> ExperimentConfig:
    preset = _SCALES[scale]
    data = {
        "problem": {"kind": "darcy", "refinement": preset["refinement"], "n_obs": 31, "noise": 0.01},
        "prior": {"amplitude": 10.0, "exponent": 1.0},
        "ensemble": {"size": 5, "init": "basis", "seed": 7},
        "flow": {"rho": 0.0, "kappa": 0.0001},
        "integrator": {"t_final": preset["t_final"], "checkpoints": 49},
        "output": {"directory": out_dir},
    }
    for section, values in overrides.items():
        data[section].update(values)
    return ExperimentConfig.from_dict(data)


def _write_curve(path: Path, header: tuple, columns) -> None:
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


_FIGURE_PLOT = """\
#!/usr/bin/env python3
\"\"\"Render every curve CSV in this directory into one log-log figure.\"\"\"
import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).parent
fig, ax = plt.subplots(figsize=(7, 5))
loglog = True
for path in sorted(here.glob("*.csv")):
    rows = list(csv.reader(open(path)))
    header, body = rows[0], rows[1:]
    xs = [float(r[0]) for r in body if r[1]]
    ys = [float(r[1]) for r in body if r[1]]
    if any(x <= 0 for x in xs) or any(y <= 0 for y in ys):
        loglog = False
    ax.plot(xs, ys, label=path.stem)
ax.set_xlabel("t" if loglog else "s")
if loglog:
    ax.set_xscale("log"); ax.set_yscale("log")
ax.legend(fontsize=7)
fig.tight_layout()
fig.savefig(here / "figure.png", dpi=150)
print("wrote", here / "figure.png")
"""


def _execute_variants(variants: list, workers: int) -> dict:
    """Run (name, config-dict) pairs, serially or in a process pool.

    Every run writes only under its own output directory, so the runs are
    independent; with ``workers > 1`` they execute concurrently.
    """
    if workers <= 1:
        return {name: _run_summary(cfg) for name, cfg in variants}
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [(name, pool.submit(_run_summary, cfg)) for name, cfg in variants]
        return {name: future.result() for name, future in futures}


def reproduce(figure: str, scale: str, output_dir: str, workers: int = 1) -> dict:
    """Re-create the curves of one experiment figure at the given scale.

    Returns a mapping from curve name to the written CSV path.  Each
    underlying run also leaves its full artifact set in a subdirectory.
    ``workers > 1`` distributes the independent runs over a process pool.
    """
    if scale not in _SCALES:
        raise ValueError(f"unknown scale {scale!r}; use 'desk' or 'paper'")
    figures = {"spread", "loss", "loss-gap", "estimate", "adaptive"}
    if figure not in figures:
        raise ValueError(f"unknown figure {figure!r}; use one of {sorted(figures)}")
    preset = _SCALES[scale]
    base = Path(output_dir) / figure
    base.mkdir(parents=True, exist_ok=True)

    def config_for(name, **overrides):
        return _base_config(scale, str(base / name), **overrides).to_dict()

    variants: list = []
    if figure == "spread":
        size = preset["spread_size"]
        for init in ("basis", "random"):
            for rho in _RHOS:
                name = f"{init}_J{size}_rho{rho:g}"
                variants.append(
                    (name, config_for(name, ensemble={"size": size, "init": init}, flow={"rho": rho}))
                )
    elif figure in ("loss", "loss-gap"):
        for init in ("basis", "random"):
            for size in preset["sizes"]:
                name = f"{init}_J{size}"
                variants.append((name, config_for(name, ensemble={"size": size, "init": init})))
        if figure == "loss-gap":
            size = preset["spread_size"]
            for rho in _RHOS[1:]:
                name = f"basis_J{size}_rho{rho:g}"
                variants.append((name, config_for(name, ensemble={"size": size}, flow={"rho": rho})))
    elif figure == "estimate":
        for init in ("basis", "random"):
            for size in preset["sizes"]:
                name = f"{init}_J{size}"
                variants.append((name, config_for(name, ensemble={"size": size, "init": init})))
    else:  # adaptive
        size = preset["adaptive_size"]
        common = {
            "prior": {
                "amplitude": 1.0,
                "exponent": 1.0,
                "truth_amplitude": 1.0,
                "truth_exponent": 2.0,
            },
            "ensemble": {"size": size, "init": "random"},
        }
        for name, flow in (
            ("adaptive", {"adaptive": True, "kappa": 1.0}),
            ("kappa1", {"kappa": 1.0}),
            ("kappa0.001", {"kappa": 0.001}),
        ):
            variants.append((name, config_for(name, flow=flow, **common)))

    summaries = _execute_variants(variants, workers)

    curves: dict = {}

    def emit(path: Path, header, columns):
        _write_curve(path, header, columns)
        curves[path.stem] = path

    def emit_truth(summary):
        emit(base / "estimate_truth.csv", ("s", "u"), (summary.nodes, summary.truth))

    if figure == "spread":
        for name, summary in summaries.items():
            emit(
                base / f"spread_{name}.csv",
                ("t", "V_e"),
                (summary.times[1:], [r.v_e for r in summary.records[1:]]),
            )
    elif figure == "loss":
        for name, summary in summaries.items():
            emit(
                base / f"loss_{name}.csv",
                ("t", "loss_mean"),
                (summary.times[1:], [r.loss_mean for r in summary.records[1:]]),
            )
    elif figure == "loss-gap":
        for name, summary in summaries.items():
            gaps = [r.loss_mean - summary.phi_star for r in summary.records[1:]]
            emit(base / f"lossgap_{name}.csv", ("t", "loss_mean_gap"), (summary.times[1:], gaps))
    elif figure == "estimate":
        emit_truth(next(iter(summaries.values())))
        for name, summary in summaries.items():
            emit(base / f"estimate_{name}.csv", ("s", "u"), (summary.nodes, summary.estimate))
    else:
        emit_truth(next(iter(summaries.values())))
        for name, summary in summaries.items():
            emit(base / f"estimate_{name}.csv", ("s", "u"), (summary.nodes, summary.estimate))
            emit(
                base / f"residual_{name}.csv",
                ("t", "reconstruction_error"),
                (summary.times[1:], summary.reconstruction_errors[1:]),
            )

    (base / "plot_figure.py").write_text(_FIGURE_PLOT)
    return curves
