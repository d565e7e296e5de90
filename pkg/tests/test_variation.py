import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from reflectolab import (
    EulerConfig,
    GpsOrthant,
    GpsWeights,
    GridError,
    HalfLine,
    PartitionLadder,
    PartitionError,
    Path,
    SderSpec,
    SpecMismatchError,
    dirichlet_decompose,
    driftless_identity,
    constant_coefficients,
    euler_sder,
    exit_index,
    oscillation,
    p_variation_sum,
    total_variation_ladder,
    truncate_at_exit,
    uniform_grid,
)
from reflectolab.variation import variation_report


def walk_path(seed, n=1024, dim=1, horizon=1.0):
    rng = np.random.default_rng(seed)
    vals = np.vstack(
        [np.zeros(dim), np.cumsum(rng.standard_normal((n, dim)) * np.sqrt(horizon / n), axis=0)]
    )
    return Path(uniform_grid(horizon, n), vals)


class TestLadder:
    def test_meshes_halve(self):
        ladder = PartitionLadder(2.0, 3, 6)
        assert ladder.meshes() == [2.0 * 2.0**-n for n in range(3, 7)]
        for n in ladder.levels:
            part = ladder.partition(n)
            assert part.size == 2**n + 1
            assert part[0] == 0.0 and part[-1] == 2.0

    def test_nesting_is_bitwise(self):
        ladder = PartitionLadder(4.0, 2, 9)
        for n in range(2, 9):
            coarse, fine = ladder.partition(n), ladder.partition(n + 1)
            assert np.array_equal(fine[::2], coarse)

    def test_validation(self):
        with pytest.raises(GridError):
            PartitionLadder(1.0, 5, 3)
        with pytest.raises(GridError):
            PartitionLadder(-1.0, 0, 3)


class TestPVariationSum:
    def test_constant_path_is_zero(self):
        path = Path(uniform_grid(1.0, 16), np.full(17, 3.0))
        ladder = PartitionLadder(1.0, 1, 4)
        for p in (0.5, 1.0, 2.0):
            assert p_variation_sum(path, ladder.partition(3), p) == 0.0

    def test_linear_path_p1(self):
        grid = uniform_grid(1.0, 64)
        path = Path(grid, grid.copy())
        ladder = PartitionLadder(1.0, 1, 6)
        for n in ladder.levels:
            assert p_variation_sum(path, ladder.partition(n), 1.0) == pytest.approx(1.0)

    def test_linear_path_p2_scales_with_mesh(self):
        grid = uniform_grid(1.0, 256)
        path = Path(grid, grid.copy())
        for n in (2, 4, 6, 8):
            expected = 2.0**-n
            got = p_variation_sum(path, PartitionLadder(1.0, n, n).partition(n), 2.0)
            assert got == pytest.approx(expected, rel=1e-12)

    def test_rejects_point_off_grid(self):
        path = Path(uniform_grid(1.0, 8), np.zeros(9))
        with pytest.raises(PartitionError):
            p_variation_sum(path, [0.0, 0.3, 1.0], 1.0)

    def test_rejects_nonpositive_p(self):
        path = Path(uniform_grid(1.0, 8), np.zeros(9))
        with pytest.raises(GridError):
            p_variation_sum(path, [0.0, 1.0], 0.0)


class TestTotalVariationLadder:
    def test_monotone_path_constant_across_levels(self):
        grid = uniform_grid(1.0, 256)
        path = Path(grid, np.sqrt(grid))
        report = total_variation_ladder(path, PartitionLadder(1.0, 2, 8))
        assert np.allclose(report.sums, 1.0)

    def test_sawtooth(self):
        # 2^3 teeth of height h: S_1 = 2^3 * 2h once the level resolves them
        n = 256
        grid = uniform_grid(1.0, n)
        h = 0.25
        tooth = (1 << 3) * grid % 1.0
        vals = h * np.minimum(2 * tooth, 2 - 2 * tooth)
        path = Path(grid, vals)
        report = total_variation_ladder(path, PartitionLadder(1.0, 4, 8))
        assert report.sums[0] == pytest.approx(8 * 2 * h)
        assert report.sums[-1] == pytest.approx(8 * 2 * h)

    @given(st.integers(0, 5_000))
    @settings(max_examples=30, deadline=None)
    def test_s1_nondecreasing_in_level(self, seed):
        path = walk_path(seed, n=256)
        report = total_variation_ladder(path, PartitionLadder(1.0, 1, 8))
        diffs = np.diff(report.sums)
        assert np.all(diffs >= -1e-12)

    @given(st.integers(0, 5_000), st.floats(1.1, 4.0))
    @settings(max_examples=30, deadline=None)
    def test_sp_bounded_by_max_increment_inequality(self, seed, p):
        path = walk_path(seed, n=256)
        ladder = PartitionLadder(1.0, 3, 8)
        for n in ladder.levels:
            part = ladder.partition(n)
            idx = (part * 256).round().astype(int)
            increments = np.abs(np.diff(path.values[idx, 0]))
            s1 = p_variation_sum(path, part, 1.0)
            sp = p_variation_sum(path, part, p)
            assert sp <= increments.max() ** (p - 1) * s1 + 1e-12

    def test_finite_variation_path_sp_vanishes(self):
        grid = uniform_grid(1.0, 2**10)
        path = Path(grid, np.sin(7.3 * grid))
        report = variation_report(path, PartitionLadder(1.0, 2, 10), 2.0)
        assert report.sums[-1] < 0.05 * report.sums[0]


class TestOscillation:
    def test_constant(self):
        path = Path(uniform_grid(1.0, 8), np.full(9, 2.0))
        assert oscillation(path, 0.0, 1.0) == 0.0

    def test_identity_ramp(self):
        grid = uniform_grid(1.0, 64)
        assert oscillation(Path(grid, grid.copy()), 0.0, 1.0) == 1.0

    def test_matches_full_scan_oracle(self):
        path = walk_path(7, n=512)
        vals = path.values[:, 0]
        for (s, t) in [(0.0, 1.0), (0.25, 0.75), (0.1, 0.9)]:
            mask = (path.times >= s) & (path.times <= t)
            window = vals[mask]
            oracle = max(
                abs(window[j] - window[i])
                for i in range(len(window))
                for j in range(i, len(window))
            )
            assert oscillation(path, s, t) == pytest.approx(oracle)

    def test_rejects_reversed_interval(self):
        path = Path(uniform_grid(1.0, 4), np.zeros(5))
        with pytest.raises(GridError):
            oscillation(path, 0.7, 0.2)


class TestDirichletDecompose:
    def test_degenerate_coefficients_vanish(self):
        spec = SderSpec(
            GpsOrthant(GpsWeights((0.5, 0.5))),
            constant_coefficients([0.0, 0.0], np.zeros((2, 2))),
            (0.5, 0.5),
        )
        bundle = euler_sder(spec, EulerConfig(1.0, 64, seed=2))
        report = dirichlet_decompose(bundle, spec, PartitionLadder(1.0, 2, 6))
        assert np.all(np.asarray(report.martingale_sums) == 0.0)
        assert np.all(np.asarray(report.compensator_sums) == 0.0)
        assert report.predicted_martingale_qv == 0.0

    def test_interior_brownian_qv_concentrates(self):
        # started far from the boundary: A = 0, M = B, S_2(M) ~ T
        spec = SderSpec(HalfLine(), driftless_identity(1), (50.0,))
        bundle = euler_sder(spec, EulerConfig(1.0, 2**12, seed=9))
        assert np.all(bundle.y.values == 0.0)
        report = dirichlet_decompose(bundle, spec, PartitionLadder(1.0, 4, 12))
        assert report.predicted_martingale_qv == pytest.approx(1.0)
        assert report.compensator_sums == tuple([0.0] * 9)
        # QV of the driver at the finest level is the sum of squared increments
        db = np.diff(bundle.b.values[:, 0])
        assert report.martingale_sums[-1] == pytest.approx(np.sum(db**2), rel=1e-12)
        assert abs(report.martingale_sums[-1] - 1.0) < 0.15

    def test_gps_compensator_sums_decay(self):
        spec = SderSpec(GpsOrthant(GpsWeights((0.5, 0.5))), driftless_identity(2), (0.0, 0.0))
        bundle = euler_sder(spec, EulerConfig(1.0, 2**14, seed=33))
        report = dirichlet_decompose(bundle, spec, PartitionLadder(1.0, 4, 10))
        sums = np.asarray(report.compensator_sums)
        assert sums[-1] < sums[0]

    def test_spec_mismatch_rejected(self):
        spec = SderSpec(GpsOrthant(GpsWeights((0.5, 0.5))), driftless_identity(2), (0.0, 0.0))
        other = SderSpec(GpsOrthant(GpsWeights((0.3, 0.7))), driftless_identity(2), (0.0, 0.0))
        bundle = euler_sder(spec, EulerConfig(1.0, 64, seed=1))
        with pytest.raises(SpecMismatchError):
            dirichlet_decompose(bundle, other, PartitionLadder(1.0, 2, 4))

    def test_drift_integral_feeds_compensator(self):
        spec = SderSpec(HalfLine(), constant_coefficients([1.0], np.zeros((1, 1))), (1.0,))
        bundle = euler_sder(spec, EulerConfig(1.0, 256, seed=4))
        report = dirichlet_decompose(bundle, spec, PartitionLadder(1.0, 2, 8))
        # A(t) = t exactly: S_1-like S_2 scales with mesh
        assert report.compensator_sums[0] == pytest.approx(2.0**-2)
        assert report.martingale_sums[-1] == pytest.approx(0.0, abs=1e-20)


class TestLocalizationEquivalence:
    def test_reports_agree_on_truncated_and_restricted_paths(self):
        spec = SderSpec(GpsOrthant(GpsWeights((0.5, 0.5))), driftless_identity(2), (0.05, 0.05))
        bundle = euler_sder(spec, EulerConfig(1.0, 2**10, seed=77))
        radius = 0.6
        k = exit_index(bundle.z, radius)
        assert k is not None
        truncated = truncate_at_exit(bundle, radius)
        stop_time = bundle.z.times[k]
        # partitions restricted to t <= zeta^m, on both the truncated and full path
        full_part = [t for t in PartitionLadder(1.0, 5, 5).partition(5) if t <= stop_time]
        s_full = p_variation_sum(bundle.y, full_part, 2.0)
        s_trunc = p_variation_sum(truncated.y, full_part, 2.0)
        assert s_full == s_trunc
