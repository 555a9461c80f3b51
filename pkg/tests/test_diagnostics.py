import numpy as np
import pytest

from tekiflow.darcy import GridSpec, ObservationOperator, darcy_forward, darcy_jacobian
from tekiflow.diagnostics import (
    BoundConstants,
    check_trajectory,
    corrupt_records,
    estimate_lipschitz,
    fit_rate,
    grad_approx_error,
    spread_bound,
    zeta_bound,
)
from tekiflow.problems import DifferentiableForward


class TestSpreadBound:
    def test_anchors_at_initial_spread(self):
        assert spread_bound(0.0, 3.2, 0.5, 5) == pytest.approx(3.2)

    def test_large_time_asymptote(self):
        t = 1e9
        value = spread_bound(t, 1.0, 0.5, 5, rho=0.0)
        assert value == pytest.approx(5 / (2 * 0.5 * t), rel=1e-6)

    def test_inflation_doubles_asymptotic_constant(self):
        t = 1e9
        plain = spread_bound(t, 1.0, 0.5, 5, rho=0.0)
        inflated = spread_bound(t, 1.0, 0.5, 5, rho=0.5)
        assert inflated == pytest.approx(2 * plain, rel=1e-6)

    def test_vectorized(self):
        t = np.array([0.0, 1.0, 10.0])
        out = spread_bound(t, 1.0, 0.5, 5)
        assert out.shape == (3,) and np.all(np.diff(out) < 0)


class TestZetaBound:
    def test_anchor(self):
        assert zeta_bound(0.0, 0.07, 2.0) == pytest.approx(0.07)

    def test_positive_and_decreasing(self):
        t = np.geomspace(1e-3, 1e6, 40)
        values = zeta_bound(t, 0.07, 2.0)
        assert np.all(values > 0) and np.all(np.diff(values) < 0)

    def test_full_inflation_limit_freezes(self):
        assert zeta_bound(1e12, 0.07, 2.0, rho=1.0 - 1e-15) == pytest.approx(0.07, rel=1e-3)


class TestBoundConstants:
    def test_m_formula(self):
        c = BoundConstants(
            sigma_min=0.1, sigma_max=0.5, lambda_max=2.0, c_lip=1.5, v_e0=0.8, rho=0.0
        )
        assert c.m == pytest.approx(2 * (1.5**2 * 2.0 * 0.8 + 0.5))

    def test_m_mismatch_rejected(self):
        with pytest.raises(ValueError, match="formula"):
            BoundConstants(
                sigma_min=0.1, sigma_max=0.5, lambda_max=2.0, c_lip=1.5, v_e0=0.8,
                rho=0.0, m=123.0,
            )

    def test_from_problem_extremes(self):
        problem = DifferentiableForward(
            forward=lambda x: x,
            jacobian=lambda x: np.eye(3),
            data=np.zeros(3),
            noise_cov=np.diag([0.5, 1.0, 2.0]),
            reg_matrix=np.diag([1.0, 4.0, 0.25]),
            reg_scale=0.5,
        )
        c = BoundConstants.from_problem(problem, v_e0=1.0, rho=0.0, c_lip=1.0)
        assert c.sigma_min == pytest.approx(0.5 / 4.0)
        assert c.sigma_max == pytest.approx(0.5 / 0.25)
        assert c.lambda_max == pytest.approx(1.0 / 0.5)


def darcy_problem(rng, grid_refinement=5, n_obs=7):
    g = GridSpec(grid_refinement)
    op = ObservationOperator.equidistant(g, n_obs)
    truth = 0.3 * rng.standard_normal(g.n_interior)
    return DifferentiableForward(
        forward=lambda u: darcy_forward(g, op, u),
        jacobian=lambda u: darcy_jacobian(g, op, u),
        data=darcy_forward(g, op, truth),
        noise_cov=0.01 * np.eye(n_obs),
        reg_matrix=np.eye(g.n_interior),
        reg_scale=1e-4,
    ), g


class TestGradApproxError:
    def test_linear_map_exact(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 6))
        problem = DifferentiableForward(
            forward=lambda x: a @ x,
            jacobian=lambda x: a,
            data=rng.standard_normal(4),
            noise_cov=np.eye(4),
            reg_matrix=np.eye(6),
        )
        members = rng.standard_normal((5, 6))
        result = grad_approx_error(members, problem)
        assert result.max_error <= 1e-12
        assert result.mean_error <= 1e-12

    def test_zero_spread(self):
        rng = np.random.default_rng(1)
        problem, g = darcy_problem(rng)
        members = np.tile(0.2 * rng.standard_normal(g.n_interior), (4, 1))
        result = grad_approx_error(members, problem)
        assert result.max_error == 0.0

    def test_cubic_scaling_in_contraction(self):
        # scaling-sweep oracle: spread ~ s^2, residual ~ s^3
        rng = np.random.default_rng(2)
        problem, g = darcy_problem(rng)
        center = 0.4 * rng.standard_normal(g.n_interior)
        members0 = center + 0.25 * rng.standard_normal((5, g.n_interior))
        scales = [1.0, 0.5, 0.25, 0.125]
        errors = [
            grad_approx_error(center + s * (members0 - center), problem).max_error
            for s in scales
        ]
        slope = np.polyfit(np.log(scales), np.log(errors), 1)[0]
        assert slope == pytest.approx(3.0, abs=0.3)


class TestFitRate:
    def test_synthetic_power_law(self):
        t = np.geomspace(1.0, 1e4, 60)
        gaps = (100.0 / (t + 1.0)) ** 0.5
        fit = fit_rate(t, gaps, window=(1e2, 1e4))
        assert fit.exponent == pytest.approx(0.5, abs=0.02)

    def test_constant_series(self):
        t = np.geomspace(1.0, 1e3, 30)
        fit = fit_rate(t, np.full(30, 2.5))
        assert fit.exponent == pytest.approx(0.0, abs=1e-12)

    def test_pure_reciprocal(self):
        t = np.geomspace(1.0, 1e3, 30)
        fit = fit_rate(t, 7.0 / t)
        assert fit.exponent == pytest.approx(1.0, rel=1e-10)

    def test_nonpositive_gap_rejected(self):
        t = np.geomspace(1.0, 1e3, 10)
        gaps = 1.0 / t
        gaps[-1] = -1e-8
        with pytest.raises(ValueError, match="nonpositive"):
            fit_rate(t, gaps)

    def test_default_window_is_last_two_decades(self):
        t = np.geomspace(1e-3, 1e4, 80)
        gaps = 3.0 / t
        fit = fit_rate(t, gaps)
        assert fit.window == (pytest.approx(1e2), pytest.approx(1e4))


class TestEstimateLipschitz:
    def test_linear_map_recovers_norm(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((4, 6))
        problem = DifferentiableForward(
            forward=lambda x: a @ x,
            jacobian=lambda x: a,
            data=np.zeros(4),
            noise_cov=np.eye(4),
            reg_matrix=np.eye(6),
        )

        class FakeCheckpoint:
            def __init__(self, members):
                self.members = members

        traj = [FakeCheckpoint(rng.standard_normal((6, 6))) for _ in range(3)]
        est = estimate_lipschitz(problem, traj, np.random.default_rng(0), n_random_pairs=100)
        norm = np.linalg.norm(a, 2)
        # quotients never exceed the operator norm; safety factor is 1.5
        assert est <= 1.5 * norm * (1 + 1e-12)
        assert est >= 0.5 * norm


def run_small_trajectory():
    from tekiflow.config import ExperimentConfig
    from tekiflow.runner import run_experiment

    cfg = ExperimentConfig.from_dict(
        {
            "problem": {"kind": "linear", "n_param": 8, "n_obs": 8, "noise": 0.01},
            "prior": {"amplitude": 10.0, "exponent": 1.0},
            "ensemble": {"size": 4, "init": "random", "seed": 2},
            "flow": {"rho": 0.0, "kappa": 1.0},
            "integrator": {"t_final": 100.0, "checkpoints": 9},
            "output": {"directory": "unused"},
        }
    )
    return run_experiment(cfg, write=False)


def test_unregularized_flow_end_to_end():
    # kappa = 0 (no regularization term): the spread envelope degenerates to
    # the initial spread and every bound still holds along the run
    from tekiflow.config import ExperimentConfig
    from tekiflow.runner import run_experiment

    cfg = ExperimentConfig.from_dict(
        {
            "problem": {"kind": "linear", "n_param": 8, "n_obs": 8, "noise": 0.01},
            "prior": {"amplitude": 10.0, "exponent": 1.0},
            "ensemble": {"size": 4, "init": "random", "seed": 5},
            "flow": {"rho": 0.0, "kappa": 0.0},
            "integrator": {"t_final": 100.0, "checkpoints": 9},
            "output": {"directory": "unused"},
        }
    )
    result = run_experiment(cfg, write=False)
    assert result.constants.sigma_min == 0.0
    assert result.report.passed


def test_empirical_scaling_constant_bounded():
    # the per-particle residual over J sqrt(misfit) V_e^{3/2} stays bounded
    # along a nonlinear trajectory; the constant itself is only recorded
    from tekiflow.config import ExperimentConfig
    from tekiflow.problems import misfit
    from tekiflow.runner import run_experiment

    cfg = ExperimentConfig.from_dict(
        {
            "problem": {"kind": "darcy", "refinement": 5, "n_obs": 7, "noise": 0.01},
            "prior": {"amplitude": 10.0, "exponent": 1.0},
            "ensemble": {"size": 5, "init": "random", "seed": 8},
            "flow": {"rho": 0.0, "kappa": 0.0001},
            "integrator": {"t_final": 100.0, "checkpoints": 9},
            "output": {"directory": "unused"},
        }
    )
    result = run_experiment(cfg, write=False)
    problem = result.bundle.problem
    ratios = []
    for cp in result.trajectory.checkpoints[1:]:
        r = grad_approx_error(cp.members, problem)
        dev = cp.members - cp.members.mean(axis=0)
        v_e = float(np.sum(dev * dev)) / cp.members.shape[0]
        for j, u in enumerate(cp.members):
            phi = misfit(problem, u)
            if phi > 1e-30 and v_e > 1e-30:
                ratios.append(r.per_particle[j] / (cp.members.shape[0] * np.sqrt(phi) * v_e**1.5))
    assert ratios and np.isfinite(max(ratios))
    assert max(ratios) < 1e3


class TestCheckTrajectory:
    def test_clean_run_passes(self):
        result = run_small_trajectory()
        assert result.report.passed

    def test_corrupted_spread_flagged(self):
        result = run_small_trajectory()
        corrupt_records(result.trajectory, factor=2.0)
        report = check_trajectory(result.trajectory, result.constants, result.zeta0)
        failures = report.failures()
        assert failures and any(c.name == "spread_upper" for c in failures)

    def test_requires_records(self):
        result = run_small_trajectory()
        for cp in result.trajectory:
            cp.record = None
        with pytest.raises(ValueError, match="records"):
            check_trajectory(result.trajectory, result.constants, result.zeta0)

    def test_inflation_keeps_higher_zeta(self):
        # paired-run comparison: inflation weakens eigenvalue decay
        from tekiflow.config import ExperimentConfig
        from tekiflow.runner import run_experiment

        def run(rho):
            cfg = ExperimentConfig.from_dict(
                {
                    "problem": {"kind": "linear", "n_param": 8, "n_obs": 8, "noise": 0.01},
                    "prior": {"amplitude": 10.0, "exponent": 1.0},
                    "ensemble": {"size": 4, "init": "random", "seed": 2},
                    "flow": {"rho": rho, "kappa": 1.0},
                    "integrator": {"t_final": 1000.0, "checkpoints": 9},
                    "output": {"directory": "unused"},
                }
            )
            return run_experiment(cfg, write=False)

        plain = run(0.0)
        inflated = run(0.8)
        for a, b in zip(plain.records[2:], inflated.records[2:]):
            assert b.zeta >= a.zeta
