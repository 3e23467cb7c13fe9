import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mvelm.numerics import (
    IndefiniteMatrixError,
    NumericsError,
    SeededRng,
    ShapeError,
    as_matrix,
    mat_mul,
    rand_uniform,
    solve_spd,
)

MASK = (1 << 64) - 1


def splitmix64_reference(seed, n):
    """Textbook sequential SplitMix64 on Python ints."""
    state = seed & MASK
    out = []
    for _ in range(n):
        state = (state + 0x9E3779B97F4A7C15) & MASK
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        out.append(z ^ (z >> 31))
    return out


def test_mat_mul_identity(rng):
    a = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(mat_mul(np.eye(3), a), a)


def test_mat_mul_hand_example():
    out = mat_mul([[1, 2], [3, 4]], [[0, 1], [1, 0]])
    np.testing.assert_array_equal(out, [[2, 1], [4, 3]])


def test_mat_mul_shape_mismatch():
    with pytest.raises(ShapeError, match="2x3 by 4x2"):
        mat_mul(np.ones((2, 3)), np.ones((4, 2)))


def test_as_matrix_rejects_nan():
    with pytest.raises(NumericsError):
        as_matrix([[1.0, np.nan]])


def test_as_matrix_promotes_vector():
    assert as_matrix([1.0, 2.0]).shape == (2, 1)


def test_solve_spd_identity(rng):
    b = rng.normal(size=(4, 3))
    np.testing.assert_allclose(solve_spd(np.eye(4), b), b)


def test_solve_spd_diagonal():
    np.testing.assert_allclose(solve_spd([[4, 0], [0, 9]], [[8], [27]]), [[2], [3]])


def test_solve_spd_indefinite():
    with pytest.raises(IndefiniteMatrixError):
        solve_spd([[1, 2], [2, 1]], [[1], [1]])


def test_solve_spd_vector_rhs():
    x = solve_spd([[2.0, 0.0], [0.0, 4.0]], [2.0, 2.0])
    assert x.shape == (2,)
    np.testing.assert_allclose(x, [1.0, 0.5])


def test_solve_spd_shape_errors():
    with pytest.raises(ShapeError):
        solve_spd(np.ones((2, 3)), np.ones((2, 1)))
    with pytest.raises(ShapeError):
        solve_spd(np.eye(2), np.ones((3, 1)))


@settings(max_examples=50, deadline=None)
@given(n=st.integers(1, 12), m=st.integers(1, 4), seed=st.integers(0, 2**31))
def test_solve_spd_residual(n, m, seed):
    r = np.random.default_rng(seed)
    a = r.normal(size=(n, n))
    spd = a @ a.T + n * np.eye(n)
    b = r.normal(size=(n, m))
    np.testing.assert_allclose(spd @ solve_spd(spd, b), b, atol=1e-9)


def test_splitmix_golden_seed0():
    assert int(SeededRng(0).next_u64(1)[0]) == 0xE220A8397B1DCDAF


@pytest.mark.parametrize("seed", [0, 1, 42, 2**63 + 5])
def test_splitmix_matches_reference(seed):
    rng = SeededRng(seed)
    got = [int(v) for v in rng.next_u64(5)] + [int(v) for v in rng.next_u64(3)]
    assert got == splitmix64_reference(seed, 8)


def test_rng_same_seed_identical():
    a = rand_uniform(SeededRng(9), 5, 7, -1, 1)
    b = rand_uniform(SeededRng(9), 5, 7, -1, 1)
    np.testing.assert_array_equal(a, b)


def test_rand_uniform_mean_and_range():
    x = rand_uniform(SeededRng(1), 100, 100, -1.0, 1.0)
    assert abs(x.mean()) < 0.05
    assert x.min() >= -1.0 and x.max() < 1.0


def test_rand_uniform_rejects_empty_range():
    with pytest.raises(ValueError):
        rand_uniform(SeededRng(0), 2, 2, 1.0, 1.0)


def test_normal_moments():
    z = SeededRng(5).normal(20000)
    assert abs(z.mean()) < 0.03
    assert abs(z.std() - 1.0) < 0.03


def test_spawn_streams_differ():
    root = SeededRng(0)
    a = root.spawn(1).next_u64(4)
    b = root.spawn(2).next_u64(4)
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, SeededRng(0).spawn(1).next_u64(4))
