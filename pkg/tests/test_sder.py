import numpy as np
import pytest

from reflectolab import (
    CoefficientBoundError,
    DomainError,
    EulerConfig,
    GpsOrthant,
    GpsWeights,
    HalfLine,
    Path,
    SderSpec,
    ValleyDomain,
    brownian_path,
    constant_coefficients,
    constant_drift,
    driftless_identity,
    euler_sder,
    euler_sder_from_increments,
    exit_index,
    gps_esm_2d_exact,
    hitting_time,
    linear_drift,
    occupation_fraction,
    sm_one_dim,
    truncate_at_exit,
    uniform_grid,
    valley_esm,
)
from reflectolab.domains import ValleyEsp
from reflectolab.errors import GridError
from reflectolab.paths import path_csv_string


def half_line_spec(initial=0.0, coefficients=None):
    return SderSpec(HalfLine(), coefficients or driftless_identity(1), (initial,))


def gps_spec(initial=(0.0, 0.0), alpha=(0.5, 0.5), coefficients=None):
    return SderSpec(
        GpsOrthant(GpsWeights(alpha)), coefficients or driftless_identity(len(alpha)), initial
    )


def valley_spec(initial=(0.0, 0.0), domain=None):
    domain = domain or ValleyDomain(1.0, 1.0, 1.0, 1.0)
    return SderSpec(ValleyEsp(domain), driftless_identity(2), initial)


class TestBrownianPath:
    def test_single_point_grid(self):
        p = brownian_path(3, 2, np.array([0.0]))
        assert p.n_points == 1
        assert np.all(p.values == 0.0)

    def test_seed_determinism(self):
        grid = uniform_grid(1.0, 64)
        a = brownian_path(99, 3, grid)
        b = brownian_path(99, 3, grid)
        assert np.array_equal(a.values, b.values)
        c = brownian_path(100, 3, grid)
        assert not np.array_equal(a.values, c.values)

    def test_terminal_moments(self):
        # LLN check on the terminal value at T = 1 over 1e5 paths
        grid = uniform_grid(1.0, 2)
        terminals = np.array([brownian_path(s, 1, grid).values[-1, 0] for s in range(100_000)])
        assert abs(terminals.mean()) < 4.0 / np.sqrt(100_000)
        assert abs(terminals.var() - 1.0) < 0.05


class TestEulerSder:
    def test_frozen_coefficients_keep_interior_start(self):
        spec = gps_spec(initial=(0.3, 0.4), coefficients=constant_coefficients([0.0, 0.0], np.zeros((2, 2))))
        bundle = euler_sder(spec, EulerConfig(1.0, 16, seed=1))
        assert np.all(bundle.z.values == [0.3, 0.4])
        assert np.all(bundle.y.values == 0.0)

    def test_half_line_matches_one_dim_map_exactly(self):
        spec = half_line_spec(0.0)
        config = EulerConfig(1.0, 256, seed=7)
        bundle = euler_sder(spec, config)
        phi, _ = sm_one_dim(bundle.x)
        assert np.array_equal(bundle.z.values, phi.values)

    def test_gps_summed_identity(self):
        spec = gps_spec()
        bundle = euler_sder(spec, EulerConfig(1.0, 512, seed=11))
        phi, _ = sm_one_dim(Path(bundle.x.times, bundle.x.values.sum(axis=1)))
        assert np.max(np.abs(bundle.z.values.sum(axis=1) - phi.values[:, 0])) <= 1e-12

    def test_valley_matches_pathwise_map_exactly(self):
        spec = valley_spec()
        bundle = euler_sder(spec, EulerConfig(1.0, 256, seed=13))
        z, y = valley_esm(bundle.x, spec.esp.domain)
        assert np.array_equal(bundle.z.values, z.values)

    def test_bundle_algebra_exact(self):
        for spec in (half_line_spec(), gps_spec(), valley_spec()):
            bundle = euler_sder(spec, EulerConfig(1.0, 128, seed=3))
            assert np.all(bundle.z.values - bundle.x.values - bundle.y.values == 0.0)
            assert np.all(np.abs(bundle.y.values[0]) == 0.0)
            assert np.all(spec.esp.contains(bundle.z.values))

    def test_driven_by_given_increments(self):
        spec = gps_spec()
        grid = uniform_grid(1.0, 64)
        db = np.random.default_rng(5).standard_normal((64, 2)) * np.sqrt(1.0 / 64)
        a = euler_sder_from_increments(spec, grid, db)
        b = euler_sder_from_increments(spec, grid, db)
        assert np.array_equal(a.z.values, b.z.values)

    def test_state_dependent_drift_runs(self):
        spec = gps_spec(initial=(0.5, 0.5), coefficients=linear_drift(-0.5 * np.eye(2)))
        bundle = euler_sder(spec, EulerConfig(1.0, 128, seed=21))
        assert np.all(spec.esp.contains(bundle.z.values))

    def test_coefficient_bound_enforced(self):
        coeffs = constant_drift([1e7, 0.0])
        spec = gps_spec(initial=(1.0, 1.0), coefficients=coeffs)
        with pytest.raises(CoefficientBoundError):
            euler_sder(spec, EulerConfig(1.0, 4, seed=0))

    def test_determinism_of_serialization(self):
        spec = gps_spec()
        config = EulerConfig(1.0, 64, seed=17)
        a = euler_sder(spec, config)
        b = euler_sder(spec, config)
        assert path_csv_string(a.z) == path_csv_string(b.z)
        assert path_csv_string(a.y) == path_csv_string(b.y)

    def test_drift_pushes_mean_up(self):
        spec = half_line_spec(0.0, coefficients=constant_drift([2.0]))
        bundle = euler_sder(spec, EulerConfig(1.0, 256, seed=23))
        assert bundle.z.values[-1, 0] > 0.5

    def test_rejects_initial_outside_domain(self):
        with pytest.raises(DomainError):
            gps_spec(initial=(-1.0, 0.5))

    def test_config_validation(self):
        with pytest.raises(GridError):
            EulerConfig(1.0, 100, seed=0)  # not a power of two
        with pytest.raises(GridError):
            EulerConfig(-1.0, 64, seed=0)


class TestScaling:
    def test_brownian_scaling_relation(self):
        """eps^{-1} Z(eps^2 t) from x equals Z from x/eps driven by the
        rescaled increments of the same seed; exact for dyadic eps."""
        eps = 0.5
        spec = gps_spec(initial=(0.3, 0.1))
        steps = 256
        grid = uniform_grid(1.0, steps)
        noise = brownian_path(31, 2, grid)
        db = np.diff(noise.values, axis=0)
        base = euler_sder_from_increments(spec, grid, db)

        scaled_spec = gps_spec(initial=(0.3 / eps, 0.1 / eps))
        scaled_grid = uniform_grid(1.0 / eps**2, steps)
        scaled = euler_sder_from_increments(scaled_spec, scaled_grid, db / eps)
        assert np.max(np.abs(scaled.z.values - base.z.values / eps)) <= 1e-12
        assert np.max(np.abs(scaled.y.values - base.y.values / eps)) <= 1e-12


class TestLocalization:
    def test_truncation_consistency(self):
        spec = gps_spec(initial=(0.1, 0.1))
        bundle = euler_sder(spec, EulerConfig(4.0, 1024, seed=41))
        small = truncate_at_exit(bundle, 0.8)
        large = truncate_at_exit(bundle, 1.6)
        n = small.z.n_points
        assert large.z.n_points >= n
        assert np.array_equal(large.z.values[:n], small.z.values)
        assert np.array_equal(large.y.values[:n], small.y.values)

    def test_exit_index_none_when_bounded(self):
        grid = uniform_grid(1.0, 4)
        z = Path(grid, np.full((5, 1), 0.5))
        assert exit_index(z, 10.0) is None


class TestHittingTime:
    def test_immediate_hit(self):
        grid = uniform_grid(1.0, 4)
        z = Path(grid, np.column_stack([np.full(5, 0.25), np.full(5, 0.25)]))
        assert hitting_time(z, 0.5) == 0.0

    def test_never_hit(self):
        grid = uniform_grid(1.0, 4)
        z = Path(grid, np.zeros((5, 1)))
        assert hitting_time(z, 0.5) is None

    def test_ramp_snaps_to_nearest_grid_time(self):
        grid = np.array([0.0, 0.3, 0.6, 1.0])
        z = Path(grid, grid.copy())
        assert hitting_time(z, 0.5) == 0.6
        grid2 = uniform_grid(1.0, 4)
        z2 = Path(grid2, grid2.copy())
        assert hitting_time(z2, 0.5) == 0.5

    def test_rejects_negative_level(self):
        z = Path([0.0, 1.0], [0.0, 1.0])
        with pytest.raises(DomainError):
            hitting_time(z, -0.5)


class TestOccupation:
    def test_interior_constant_is_zero(self):
        grid = uniform_grid(1.0, 8)
        z = Path(grid, np.full((9, 1), 2.0))
        assert occupation_fraction(z, HalfLine(), 1e-3) == 0.0

    def test_pinned_at_origin_is_one(self):
        grid = uniform_grid(1.0, 8)
        z = Path(grid, np.zeros((9, 1)))
        assert occupation_fraction(z, HalfLine(), 1e-3) == 1.0

    def test_rbm_occupation_small_and_decreasing_in_tol(self):
        spec = half_line_spec(0.0)
        bundle = euler_sder(spec, EulerConfig(1.0, 2**14, seed=51))
        esp = spec.esp
        frac = occupation_fraction(bundle.z, esp, 1e-3)
        assert frac < 0.05
        assert occupation_fraction(bundle.z, esp, 5e-4) <= frac


class TestValleyBoundaryDistance:
    @pytest.mark.parametrize("alphas", [(1.0, 1.0), (2.0, 2.0), (0.5, 1.5)])
    def test_matches_dense_minimization(self, alphas):
        esp = ValleyEsp(ValleyDomain(alphas[0], alphas[1], 1.0, 1.0))
        rng = np.random.default_rng(8)
        ys = rng.uniform(0.0, 2.0, 40)
        lo, hi = esp.domain.left(ys), esp.domain.right(ys)
        pts = np.column_stack([lo + (hi - lo) * rng.random(40), ys])
        got = esp.boundary_distance(pts)
        # dense oracle over both curves
        y_grid = np.linspace(0.0, 4.0, 200_001)
        for p, d in zip(pts, got):
            d_left = np.min(np.hypot(esp.domain.left(y_grid) - p[0], y_grid - p[1]))
            d_right = np.min(np.hypot(esp.domain.right(y_grid) - p[0], y_grid - p[1]))
            assert abs(d - min(d_left, d_right)) < 1e-4
