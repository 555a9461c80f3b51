import numpy as np
import pytest

from tekiflow.darcy import (
    GridSpec,
    ObservationOperator,
    darcy_forward,
    darcy_jacobian,
    observe,
    solve_pde,
)


def dense_reference_solve(grid, u):
    """Dense-assembly oracle: build the full stiffness matrix and solve it."""
    n = grid.n_interior
    u = np.asarray(u, float)
    b = np.exp(u)
    c = np.empty(n + 1)
    c[1:-1] = 0.5 * (b[:-1] + b[1:])
    c[0] = np.exp(1.5 * u[0] - 0.5 * u[1])
    c[-1] = np.exp(1.5 * u[-1] - 0.5 * u[-2])
    a = np.zeros((n, n))
    for l in range(n):
        a[l, l] = c[l] + c[l + 1]
        if l > 0:
            a[l, l - 1] = -c[l]
        if l < n - 1:
            a[l, l + 1] = -c[l + 1]
    return np.linalg.solve(a, np.full(n, grid.mesh_size**2))


def smooth_field(s):
    # fixed random low-mode combination (seeded draw, frozen here)
    rng = np.random.default_rng(2)
    amps = rng.normal(0.0, 1.0, 4) / np.arange(1, 5)
    return sum(a * np.sin((j + 1) * np.pi * s) for j, a in enumerate(amps))


class TestGridSpec:
    def test_counts(self):
        g = GridSpec(6)
        assert g.n_interior == 63
        assert g.mesh_size == pytest.approx(2.0**-6)
        assert g.nodes[0] == pytest.approx(g.mesh_size)
        assert g.nodes[-1] == pytest.approx(1.0 - g.mesh_size)

    def test_rejects_small_refinement(self):
        with pytest.raises(ValueError):
            GridSpec(1)


class TestSolvePDE:
    def test_zero_field_analytic_solution(self):
        # -p'' = 1 has p(s) = s(1-s)/2; the discretization is exact for it
        g = GridSpec(6)
        p = solve_pde(g, np.zeros(g.n_interior))
        s = g.nodes
        exact = s * (1 - s) / 2
        h = g.mesh_size
        assert np.max(np.abs(p - exact)) <= 2 * h**2
        mid = g.n_interior // 2
        assert p[mid] == pytest.approx(0.125, abs=2 * h**2)

    def test_constant_field_rescaling(self):
        g = GridSpec(5)
        c = 0.7
        p0 = solve_pde(g, np.zeros(g.n_interior))
        pc = solve_pde(g, np.full(g.n_interior, c))
        np.testing.assert_allclose(pc, np.exp(-c) * p0, rtol=1e-12)

    def test_refinement_order_two(self):
        # coarse solutions approach the fine-grid reference at second order;
        # the observed order is the least-squares slope across three levels
        fine = GridSpec(11)
        p_fine = solve_pde(fine, smooth_field(fine.nodes))
        levels = (6, 7, 8)
        errors = []
        for r in levels:
            g = GridSpec(r)
            p = solve_pde(g, smooth_field(g.nodes))
            stride = 2 ** (11 - r)
            restriction = p_fine[stride - 1 :: stride]
            errors.append(np.max(np.abs(p - restriction)))
        order = np.polyfit([r * np.log(2) for r in levels], -np.log(errors), 1)[0]
        assert order == pytest.approx(2.0, abs=0.1)

    def test_positive_interior(self):
        # discrete maximum principle: the pressure is positive inside
        rng = np.random.default_rng(1)
        g = GridSpec(5)
        for _ in range(5):
            p = solve_pde(g, rng.uniform(-2, 2, g.n_interior))
            assert np.all(p > 0)

    def test_rejects_non_finite(self):
        g = GridSpec(4)
        u = np.zeros(g.n_interior)
        u[3] = np.nan
        with pytest.raises(ValueError):
            solve_pde(g, u)

    def test_matches_dense_assembly(self):
        rng = np.random.default_rng(2)
        g = GridSpec(5)
        u = rng.uniform(-1.5, 1.5, g.n_interior)
        np.testing.assert_allclose(solve_pde(g, u), dense_reference_solve(g, u), rtol=1e-12)


class TestObserve:
    def test_equidistant_placement(self):
        g = GridSpec(6)
        op = ObservationOperator.equidistant(g, 31)
        np.testing.assert_allclose(g.nodes[op.indices], np.arange(1, 32) / 32.0)

    def test_divisibility_required(self):
        with pytest.raises(ValueError, match="divide"):
            ObservationOperator.equidistant(GridSpec(6), 30)

    def test_zero_vector(self):
        g = GridSpec(5)
        op = ObservationOperator.equidistant(g, 3)
        assert np.all(observe(op, np.zeros(g.n_interior)) == 0)

    def test_parabola_values(self):
        g = GridSpec(5)
        op = ObservationOperator.equidistant(g, 3)
        s = g.nodes
        values = observe(op, s * (1 - s) / 2)
        np.testing.assert_allclose(values, [0.09375, 0.125, 0.09375], rtol=1e-13)

    def test_linearity(self):
        rng = np.random.default_rng(3)
        g = GridSpec(5)
        op = ObservationOperator.equidistant(g, 7)
        p, q = rng.standard_normal(g.n_interior), rng.standard_normal(g.n_interior)
        np.testing.assert_allclose(
            observe(op, 2.5 * p + q), 2.5 * observe(op, p) + observe(op, q), rtol=1e-14
        )

    def test_index_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            ObservationOperator(indices=np.array([99]), n_interior=31)


class TestForward:
    def test_zero_field(self):
        g = GridSpec(6)
        op = ObservationOperator.equidistant(g, 31)
        s = g.nodes[op.indices]
        np.testing.assert_allclose(
            darcy_forward(g, op, np.zeros(g.n_interior)), s * (1 - s) / 2, atol=1e-13
        )

    def test_constant_shift_scales_observations(self):
        rng = np.random.default_rng(4)
        g = GridSpec(5)
        op = ObservationOperator.equidistant(g, 7)
        u = rng.uniform(-1, 1, g.n_interior)
        c = 0.42
        base = darcy_forward(g, op, u)
        shifted = darcy_forward(g, op, u + c)
        np.testing.assert_allclose(shifted, np.exp(-c) * base, rtol=1e-12)

    def test_matches_dense_reference(self):
        rng = np.random.default_rng(5)
        g = GridSpec(5)
        op = ObservationOperator.equidistant(g, 7)
        u = rng.uniform(-1, 1, g.n_interior)
        expected = dense_reference_solve(g, u)[op.indices]
        np.testing.assert_allclose(darcy_forward(g, op, u), expected, rtol=1e-12)


class TestJacobian:
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        g = GridSpec(5)
        op = ObservationOperator.equidistant(g, 7)
        u = rng.uniform(-1, 1, g.n_interior)
        jac = darcy_jacobian(g, op, u)
        step = 1e-6
        fd = np.empty_like(jac)
        for m in range(g.n_interior):
            e = np.zeros(g.n_interior)
            e[m] = step
            fd[:, m] = (darcy_forward(g, op, u + e) - darcy_forward(g, op, u - e)) / (2 * step)
        assert np.linalg.norm(jac - fd) <= 1e-5 * np.linalg.norm(jac)


def test_local_lipschitz_quotient_is_finite():
    # empirical Lipschitz quotient over bounded fields stays finite and modest
    rng = np.random.default_rng(6)
    g = GridSpec(5)
    op = ObservationOperator.equidistant(g, 7)
    worst = 0.0
    for _ in range(50):
        uA = rng.uniform(-3, 3, g.n_interior)
        uB = rng.uniform(-3, 3, g.n_interior)
        dist = np.linalg.norm(uA - uB)
        if dist < 1e-9:
            continue
        quot = np.linalg.norm(darcy_forward(g, op, uA) - darcy_forward(g, op, uB)) / dist
        worst = max(worst, quot)
    assert 0.0 < worst < 100.0
