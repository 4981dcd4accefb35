import numpy as np
import pytest
from scipy import integrate, stats

from cpca import FitConfig
from cpca.errors import ValidationError
from cpca.wasserstein import (
    IntervalGrid,
    TransportMap,
    barycenter,
    build_cpca_problem,
    default_epsilon,
    empirical_quantile_map,
    fit_gpca,
    lift_map,
    monotone_domain,
    perturbation_curve,
    project_map,
    reconstruct,
    reconstruction_error,
    w2_distance,
)

UNIT = IntervalGrid(0.0, 1.0, 1)


def random_map(rng, grid):
    v = np.sort(rng.uniform(grid.a, grid.b, grid.size))
    return TransportMap(grid, v)


def family(rng, grid, n_maps=30):
    """Location-scale family, well inside the monotone domain."""
    x = (np.arange(grid.size) + 0.5) / grid.size - 0.5
    base = 2.0 * x
    scale = rng.uniform(-0.3, 0.3, n_maps)
    shift = rng.uniform(-0.4, 0.4, n_maps)
    return [TransportMap(grid, base + s * np.ones_like(x) + c * x)
            for s, c in zip(shift, scale)]


class TestGrid:
    def test_validation(self):
        with pytest.raises(ValidationError):
            IntervalGrid(1.0, 1.0, 2)
        with pytest.raises(ValidationError):
            IntervalGrid(0.0, 1.0, -1)
        with pytest.raises(ValidationError):
            IntervalGrid(0.0, 1.0, 1.5)

    def test_cells(self):
        g = IntervalGrid(-1.0, 3.0, 2)
        assert g.size == 4 and g.cell_mass == 0.25
        np.testing.assert_allclose(g.edges(), [-1, 0, 1, 2, 3])

    def test_covering(self):
        g = IntervalGrid.covering([[0.5, 2.0], [-1.0]], 3, margin=0.25)
        assert (g.a, g.b) == (-1.25, 2.25)


class TestTransportMap:
    def test_rejects_decreasing(self):
        with pytest.raises(ValidationError):
            TransportMap(UNIT, [0.6, 0.4])

    def test_rejects_outside(self):
        with pytest.raises(ValidationError):
            TransportMap(UNIT, [-0.1, 0.4])

    def test_tolerance(self):
        TransportMap(UNIT, [-5e-10, 1 + 5e-10])
        TransportMap(UNIT, [0.5, 0.5 - 5e-10])

    def test_wrong_length(self):
        with pytest.raises(ValidationError):
            TransportMap(UNIT, [0.1, 0.2, 0.3])


class TestEmpiricalQuantile:
    def test_uniform(self):
        t = empirical_quantile_map(np.linspace(0, 1, 100001), UNIT)
        np.testing.assert_allclose(t.values, [0.25, 0.75], atol=1e-5)

    def test_point_mass(self):
        t = empirical_quantile_map([0.3], IntervalGrid(0, 1, 4))
        np.testing.assert_array_equal(t.values, np.full(16, 0.3))

    def test_outside_interval(self):
        with pytest.raises(ValidationError):
            empirical_quantile_map([0.2, 1.2], UNIT)

    def test_cell_average_oracle(self, rng):
        # average of the step quantile function over each cell, by quadrature
        s = rng.standard_normal(37)
        grid = IntervalGrid(-4, 4, 3)
        srt = np.sort(s)

        def q(u):
            return srt[min(int(np.ceil(u * s.size)) - 1, s.size - 1)] if u > 0 else srt[0]

        knots = np.arange(1, s.size) / s.size
        expect = []
        for j in range(grid.size):
            lo, hi = j / grid.size, (j + 1) / grid.size
            pts = [k for k in knots if lo < k < hi]
            val, _ = integrate.quad(q, lo, hi, points=pts or None, limit=200)
            expect.append(val * grid.size)
        np.testing.assert_allclose(empirical_quantile_map(s, grid).values, expect, atol=1e-12)

    def test_nesting(self, rng):
        s = rng.standard_normal(1001)
        g8 = IntervalGrid(-5, 5, 8)
        t8 = empirical_quantile_map(s, g8)
        t4 = empirical_quantile_map(s, g8.at_level(4))
        np.testing.assert_allclose(project_map(t8, 4).values, t4.values, atol=1e-13)

    def test_projection_beats_midpoint_sampling(self, rng):
        s = np.clip(rng.standard_normal(1000), -5, 5)
        grid = IntervalGrid(-5, 5, 6)
        t = empirical_quantile_map(s, grid)
        srt = np.sort(s)
        # common refinement of the 1000 quantile steps and the 64 cells
        fine = np.repeat(srt, grid.size)
        w2_cells = np.sqrt(np.mean((fine - np.repeat(t.values, s.size)) ** 2))
        mid = srt[np.ceil((np.arange(grid.size) + 0.5) / grid.size * s.size).astype(int) - 1]
        w2_mid = np.sqrt(np.mean((fine - np.repeat(mid, s.size)) ** 2))
        assert w2_cells <= w2_mid
        assert np.all(np.diff(t.values) >= 0)


class TestProjectMap:
    def test_example(self):
        g = IntervalGrid(0, 5, 2)
        np.testing.assert_allclose(project_map(TransportMap(g, [1, 2, 3, 4]), 1).values,
                                   [1.5, 3.5])

    def test_constant_and_idempotent(self, rng):
        g = IntervalGrid(0, 1, 5)
        c = TransportMap(g, np.full(32, 0.4))
        np.testing.assert_array_equal(project_map(c, 2).values, np.full(4, 0.4))
        t = random_map(rng, g)
        assert project_map(t, 5) is t

    def test_finer_level_error(self, rng):
        with pytest.raises(ValidationError):
            project_map(random_map(rng, IntervalGrid(0, 1, 3)), 4)

    def test_inner_product_formula(self, rng):
        g = IntervalGrid(0, 1, 8)
        t = random_map(rng, g)
        out = project_map(t, 4)
        # (1 / P0(I_j)) * sum_i t_i P0(I_i cap I_j)
        fine_edges, coarse_edges = g.edges(), g.at_level(4).edges()
        overlap = np.clip(np.minimum(fine_edges[None, 1:], coarse_edges[1:, None])
                          - np.maximum(fine_edges[None, :-1], coarse_edges[:-1, None]), 0, None)
        expect = overlap @ t.values / np.diff(coarse_edges)
        np.testing.assert_allclose(out.values, expect, atol=1e-12)
        assert np.all(np.diff(out.values) >= -1e-12)

    def test_lift(self):
        g = IntervalGrid(0, 1, 1)
        np.testing.assert_array_equal(lift_map(TransportMap(g, [0.2, 0.7]), 2).values,
                                      [0.2, 0.2, 0.7, 0.7])
        with pytest.raises(ValidationError):
            lift_map(TransportMap(g.at_level(2), [0.1, 0.2, 0.3, 0.4]), 1)


class TestDistance:
    def test_examples(self):
        s = TransportMap(UNIT, [0.25, 0.75])
        assert w2_distance(s, s) == 0.0
        t = TransportMap(UNIT, [0.25, 0.25])
        assert w2_distance(s, t) == pytest.approx(np.sqrt(0.125), rel=1e-15)
        g = IntervalGrid(-2, 2, 3)
        assert w2_distance(TransportMap(g, np.full(8, -1.5)),
                           TransportMap(g, np.full(8, 0.5))) == pytest.approx(2.0)

    def test_against_scipy(self, rng):
        # for equal-mass atoms the W2 optimal coupling is the sorted matching
        g = IntervalGrid(0, 1, 4)
        s, t = random_map(rng, g), random_map(rng, g)
        emd1 = stats.wasserstein_distance(s.values, t.values)
        assert emd1 <= w2_distance(s, t) + 1e-15

    def test_metric_axioms(self, rng):
        g = IntervalGrid(0, 1, 6)
        for _ in range(200):
            r, s, t = (random_map(rng, g) for _ in range(3))
            assert w2_distance(r, s) == w2_distance(s, r)
            assert w2_distance(r, t) <= w2_distance(r, s) + w2_distance(s, t) + 1e-12

    def test_grid_mismatch(self, rng):
        with pytest.raises(ValidationError):
            w2_distance(random_map(rng, UNIT), random_map(rng, IntervalGrid(0, 1, 2)))


class TestBarycenter:
    def test_constant_maps(self):
        g = IntervalGrid(0, 4, 2)
        b = barycenter([TransportMap(g, np.full(4, 1.0)), TransportMap(g, np.full(4, 3.0))])
        np.testing.assert_array_equal(b.values, np.full(4, 2.0))

    def test_identical(self, rng):
        t = random_map(rng, IntervalGrid(0, 1, 3))
        np.testing.assert_allclose(barycenter([t, t, t]).values, t.values, rtol=1e-15)

    def test_local_optimality(self, rng):
        g = IntervalGrid(0, 1, 5)
        maps = [random_map(rng, g) for _ in range(10)]
        bar = barycenter(maps)
        np.testing.assert_array_equal(bar.values, np.mean([m.values for m in maps], axis=0))
        cost = sum(w2_distance(bar, m) ** 2 for m in maps)
        for _ in range(50):
            bump = np.sort(rng.uniform(-1e-3, 1e-3, g.size))
            other = TransportMap(g, np.clip(bar.values + bump, 0, 1))
            assert cost <= sum(w2_distance(other, m) ** 2 for m in maps)

    def test_empty(self):
        with pytest.raises(ValidationError):
            barycenter([])


class TestProblemBuild:
    def test_constraints_n1(self):
        X = monotone_domain(UNIT)
        np.testing.assert_array_equal(X.a_matrix, [[1, 0], [-1, 1], [0, -1]])
        np.testing.assert_allclose(X.b_vector / np.sqrt(0.5), [0, 0, -1])

    def test_feasible_and_isometric(self, rng):
        g = IntervalGrid(-1, 2, 8)
        maps = [random_map(rng, g) for _ in range(200)]
        pb, scale = build_cpca_problem(maps)
        assert pb.domain.m == g.size + 1
        assert np.all(pb.domain.contains(pb.data))
        for i in range(100):
            s, t = maps[2 * i], maps[2 * i + 1]
            eu = np.linalg.norm(pb.data[2 * i] - pb.data[2 * i + 1])
            assert abs(w2_distance(s, t) - eu) <= 1e-12
        np.testing.assert_allclose(scale.to_raw(pb.reference), barycenter(maps).values)

    def test_grid_mismatch(self, rng):
        with pytest.raises(ValidationError):
            build_cpca_problem([random_map(rng, UNIT), random_map(rng, IntervalGrid(0, 1, 2))])


class TestFit:
    def test_one_parameter_family(self, rng):
        g = IntervalGrid(-2, 2, 5)
        x = (np.arange(32) + 0.5) / 32 - 0.5
        v = x / np.linalg.norm(x) * np.sqrt(32)  # unit L2 norm as a cell function
        base = 2.5 * x
        maps = [TransportMap(g, base + s * v) for s in rng.uniform(-0.2, 0.2, 25)]
        res = fit_gpca(maps, FitConfig(k=1))
        assert res.basis.ev[0] == pytest.approx(1.0, abs=1e-8)
        # velocity fields have unit L2(P0) norm
        cos = np.mean(res.velocity_fields[0] * v)
        assert abs(cos) >= 1 - 1e-6

    def test_velocity_orthogonal(self, rng):
        g = IntervalGrid(-1.5, 1.5, 5)
        maps = [random_map(rng, IntervalGrid(-1, 1, 5)) for _ in range(20)]
        maps = [TransportMap(g, m.values) for m in maps]
        res = fit_gpca(maps, FitConfig(k=3))
        gram = res.velocity_fields @ res.velocity_fields.T * g.cell_mass
        np.testing.assert_allclose(gram, np.eye(3), atol=1e-8)

    def test_reconstruction_monotone(self, rng):
        g = IntervalGrid(-1.5, 1.5, 5)
        maps = family(rng, g)
        res = fit_gpca(maps, FitConfig(k=2))
        for m in reconstruct(res, 1) + reconstruct(res, 2):
            assert np.all(np.diff(m.values) >= 0)

    def test_needs_two_maps(self, rng):
        with pytest.raises(ValidationError):
            fit_gpca([random_map(rng, UNIT)])


class TestCurves:
    def _result(self, rng):
        g = IntervalGrid(-1.5, 1.5, 5)
        return fit_gpca(family(rng, g), FitConfig(k=2))

    def test_affine_in_t(self, rng):
        res = self._result(rng)
        ts, maps = perturbation_curve(res, 0, 0.05, 11)
        mid = maps[5]
        assert ts[5] == 0.0
        np.testing.assert_array_equal(mid.values, res.barycenter.values)
        for t, m in zip(ts, maps):
            np.testing.assert_allclose(m.values - mid.values, t * res.velocity_fields[0],
                                       atol=1e-14)

    def test_default_epsilon_monotone(self, rng):
        res = self._result(rng)
        eps = default_epsilon(res, 1)
        assert eps == pytest.approx(2 * np.std(res.coefficients[:, 1]))
        _, maps = perturbation_curve(res, 1)
        assert all(np.all(np.diff(m.values) >= 0) for m in maps)

    def test_clamps_with_warning(self, rng):
        res = self._result(rng)
        with pytest.warns(UserWarning, match="clamping"):
            ts, maps = perturbation_curve(res, 0, 50.0, 5)
        assert all(np.all(np.diff(m.values) >= 0) for m in maps)
        assert ts[0] > -50 and ts[-1] < 50

    def test_bad_component(self, rng):
        with pytest.raises(ValidationError):
            perturbation_curve(self._result(rng), 2)


class TestReconstructionError:
    def test_identity(self, rng):
        g = IntervalGrid(0, 1, 4)
        maps = [random_map(rng, g) for _ in range(3)]
        assert reconstruction_error(maps, maps) == 0.0

    def test_block_average_residual(self, rng):
        g = IntervalGrid(0, 1, 8)
        maps = [random_map(rng, g) for _ in range(3)]
        coarse = [project_map(m, 4) for m in maps]
        expect = np.mean([np.sqrt(np.mean((m.values - np.repeat(c.values, 16)) ** 2))
                          for m, c in zip(maps, coarse)])
        assert reconstruction_error(maps, coarse) == pytest.approx(expect, rel=1e-14)

    def test_finer_projection_is_closer(self, rng):
        g = IntervalGrid(0, 1, 9)
        maps = [random_map(rng, g) for _ in range(5)]
        errs = [reconstruction_error(maps, [project_map(m, n) for m in maps]) for n in range(10)]
        assert np.all(np.diff(errs) <= 1e-15)

    def test_length_mismatch(self, rng):
        m = random_map(rng, UNIT)
        with pytest.raises(ValidationError):
            reconstruction_error([m], [m, m])
