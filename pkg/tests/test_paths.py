import io

import numpy as np
import pytest

from reflectolab import GridError, Path, path_from_csv, path_from_json, uniform_grid
from reflectolab.paths import path_csv_string, path_to_json


def test_path_invariants():
    p = Path([0.0, 1.0, 2.0], [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    assert p.dim == 2
    assert p.n_points == 3
    with pytest.raises(GridError):
        Path([0.0, 0.0, 1.0], [1.0, 2.0, 3.0])  # not strictly increasing
    with pytest.raises(GridError):
        Path([0.0, 1.0], [1.0])  # length mismatch
    with pytest.raises(GridError):
        Path([0.0, 1.0], [1.0, np.nan])


def test_values_are_immutable():
    p = Path([0.0, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        p.values[0, 0] = 9.0


def test_scalar_on_vector_path_rejected():
    p = Path([0.0, 1.0], [[1.0, 2.0], [3.0, 4.0]])
    with pytest.raises(GridError):
        p.scalar()


def test_csv_round_trip_bit_exact():
    rng = np.random.default_rng(5)
    p = Path(np.sort(rng.random(64)) + np.arange(64), rng.standard_normal((64, 3)))
    text = path_csv_string(p)
    back = path_from_csv(io.StringIO(text))
    assert np.array_equal(back.times, p.times)
    assert np.array_equal(back.values, p.values)


def test_json_round_trip_bit_exact():
    rng = np.random.default_rng(6)
    p = Path(np.arange(40) * 0.1, rng.standard_normal((40, 2)))
    back = path_from_json(path_to_json(p))
    assert np.array_equal(back.times, p.times)
    assert np.array_equal(back.values, p.values)


def test_uniform_grid_nesting_is_bitwise():
    fine = uniform_grid(4.0, 2**12)
    coarse = uniform_grid(4.0, 2**8)
    assert np.array_equal(fine[:: 2**4], coarse)


def test_uniform_grid_rejects_bad_args():
    with pytest.raises(GridError):
        uniform_grid(0.0, 8)
    with pytest.raises(GridError):
        uniform_grid(1.0, 0)
