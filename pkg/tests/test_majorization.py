import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mimotrain import DimensionError, DomainError, majorizes, min_majorizing_vector, schur_horn

from . import oracles


def test_majorizes_examples():
    assert majorizes([2, 0], [1, 1])
    assert not majorizes([1, 1], [2, 0])
    assert majorizes([3, 1, 4], [3, 1, 4])


def test_majorizes_length_mismatch():
    with pytest.raises(DimensionError):
        majorizes([1, 2], [1, 2, 3])


def test_majorizes_tolerates_solver_noise():
    assert majorizes([2 + 1e-12, 0], [1, 1])
    assert not majorizes([2 + 1e-6, 0], [1, 1])


# frozen from oracles.minimal_majorizer_by_search
@pytest.mark.parametrize(
    "y, m, expected",
    [
        ([1, 1, 1, 1], 2, [0, 0, 2, 2]),
        ([1, 2, 10, 20], 1, [0, 3, 10, 20]),
        ([5, 7], 0, [5, 7]),
    ],
)
def test_min_majorizing_examples(y, m, expected):
    np.testing.assert_allclose(min_majorizing_vector(y, m), expected, rtol=0, atol=1e-12)


def test_min_majorizing_matches_search_oracle():
    rng = np.random.default_rng(3)
    for _ in range(5):
        y = rng.exponential(size=4)
        for m in range(4):
            want = oracles.minimal_majorizer_by_search(y, m, samples=3000)
            np.testing.assert_allclose(min_majorizing_vector(y, m), want, rtol=1e-9, atol=1e-12)


def test_min_majorizing_errors():
    with pytest.raises(DomainError):
        min_majorizing_vector([1, 2], 3)
    with pytest.raises(DomainError):
        min_majorizing_vector([1, -2], 1)
    with pytest.raises(DomainError):
        min_majorizing_vector([1, 2], 2)


def test_min_majorizing_all_zero_input():
    np.testing.assert_array_equal(min_majorizing_vector([0, 0, 0], 3), [0, 0, 0])


nonneg = st.lists(st.floats(0, 1e3, allow_nan=False), min_size=1, max_size=6)


@settings(max_examples=200, deadline=None)
@given(nonneg, st.data())
def test_min_majorizing_properties(y, data):
    y = np.array(y)
    m = data.draw(st.integers(0, y.size - 1))
    x = min_majorizing_vector(y, m)
    assert majorizes(x, y)
    assert abs(x.sum() - y.sum()) <= 1e-12 * max(1.0, y.sum())
    assert np.all(np.diff(x) >= 0)
    assert np.all(x[:m] == 0)
    if np.all(y > 0):
        assert np.count_nonzero(x == 0) == m


@settings(max_examples=100, deadline=None)
@given(nonneg, st.data())
def test_min_majorizing_is_minimal(y, data):
    """Any vector with m zeros that majorizes y also majorizes x*."""
    y = np.array(y)
    m = data.draw(st.integers(0, y.size - 1))
    x = min_majorizing_vector(y, m)
    seed = data.draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    if y.size - m < 1 or y.sum() == 0:
        return
    for _ in range(20):
        c = np.concatenate([np.zeros(m), rng.dirichlet(np.full(y.size - m, 0.5)) * y.sum()])
        if majorizes(c, y):
            assert majorizes(c, x)


def _check_sh(eigs, diag, H):
    scale = max(np.max(np.abs(eigs)), 1e-300)
    assert np.max(np.abs(H - H.conj().T)) <= 1e-12 * scale
    np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(H)), np.sort(eigs), rtol=0, atol=1e-8 * scale)
    np.testing.assert_allclose(np.real(np.diag(H)), diag, rtol=0, atol=1e-8 * scale)


def test_schur_horn_examples():
    H = schur_horn([2, 0], [1, 1])
    _check_sh(np.array([2.0, 0]), np.array([1.0, 1]), H)
    np.testing.assert_allclose(np.abs(H), np.ones((2, 2)), atol=1e-12)
    np.testing.assert_allclose(schur_horn([3, 1], [3, 1]), np.diag([3.0, 1.0]), atol=1e-12)
    _check_sh(np.array([3.0, 1, 0]), np.array([2.0, 1, 1]), schur_horn([3, 1, 0], [2, 1, 1]))


def test_schur_horn_rejects_non_majorizing():
    with pytest.raises(DomainError):
        schur_horn([1, 1], [2, 0])


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_schur_horn_random(n, seed):
    rng = np.random.default_rng(seed)
    eigs = rng.standard_normal(n) * 10 ** rng.uniform(-2, 2)
    Z = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    Q, _ = np.linalg.qr(Z)
    diag = np.real(np.diag((Q * eigs) @ Q.conj().T))
    _check_sh(eigs, diag, schur_horn(eigs, diag))
