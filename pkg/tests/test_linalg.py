import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from olinear.errors import ConvergenceError, InputError, ShapeError
from olinear.linalg import (
    matmul,
    orthogonality_error,
    rank_report,
    reconstruction_error,
    symmetric_eigendecomp,
)


def triple_loop(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def pivot_rank(m, tol=1e-9):
    """Row reduction with partial pivoting; counts pivots above tol * max|m|."""
    a = np.array(m, dtype=float)
    rows, cols = a.shape
    thresh = tol * max(np.abs(a).max(), 1e-300)
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = r + int(np.argmax(np.abs(a[r:, c])))
        if abs(a[piv, c]) <= thresh:
            continue
        a[[r, piv]] = a[[piv, r]]
        a[r + 1:] -= np.outer(a[r + 1:, c] / a[r, c], a[r])
        r += 1
    return r


class TestMatmul:
    def test_identity(self, rng):
        a = rng.standard_normal((3, 3))
        np.testing.assert_array_equal(matmul(np.eye(3), a), a)

    def test_hand_case(self):
        np.testing.assert_array_equal(matmul([[1, 2], [3, 4]], [[0], [1]]), [[2], [4]])

    def test_against_triple_loop(self, rng):
        a = rng.standard_normal((5, 7))
        b = rng.standard_normal((7, 3))
        np.testing.assert_allclose(matmul(a, b), triple_loop(a, b), rtol=0, atol=1e-13)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.ones((2, 3)), np.ones((2, 3)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_associativity(self, m, k, l, n, seed):
        r = np.random.default_rng(seed)
        a, b, c = r.standard_normal((m, k)), r.standard_normal((k, l)), r.standard_normal((l, n))
        left = matmul(matmul(a, b), c)
        right = matmul(a, matmul(b, c))
        scale = np.abs(a).max() * np.abs(b).max() * np.abs(c).max() * k * l
        assert np.max(np.abs(left - right)) <= 1e-9 * scale


class TestEigen:
    def test_analytic_2x2(self):
        e = symmetric_eigendecomp([[1, 0.5], [0.5, 1]])
        np.testing.assert_allclose(e.eigenvalues, [1.5, 0.5], atol=1e-15)
        r = 1 / np.sqrt(2)
        np.testing.assert_allclose(e.q, [[r, r], [r, -r]], atol=1e-15)

    @pytest.mark.parametrize("n", [1, 4, 24])
    def test_identity(self, n):
        e = symmetric_eigendecomp(np.eye(n))
        np.testing.assert_array_equal(e.eigenvalues, np.ones(n))
        np.testing.assert_array_equal(e.q, np.eye(n))

    def test_random_reconstruction(self, rng):
        a = rng.standard_normal((8, 8))
        s = (a + a.T) / 2
        e = symmetric_eigendecomp(s)
        assert reconstruction_error(s, e) <= 1e-9
        assert orthogonality_error(e.q) <= 1e-10
        assert np.all(np.diff(e.eigenvalues) <= 0)

    def test_matches_reference_spectrum(self, rng):
        a = rng.standard_normal((12, 12))
        s = a @ a.T
        e = symmetric_eigendecomp(s)
        np.testing.assert_allclose(e.eigenvalues, np.sort(np.linalg.eigvalsh(s))[::-1], atol=1e-10)

    def test_sign_convention(self, rng):
        a = rng.standard_normal((6, 6))
        e = symmetric_eigendecomp(a + a.T)
        for j in range(6):
            col = e.q[:, j]
            first = col[np.flatnonzero(np.abs(col) > 1e-12)[0]]
            assert first > 0

    def test_ties_keep_original_order(self):
        e = symmetric_eigendecomp(np.diag([1.0, 3.0, 1.0, 3.0]))
        np.testing.assert_array_equal(e.eigenvalues, [3, 3, 1, 1])
        np.testing.assert_array_equal(e.q[:, 0], [0, 1, 0, 0])
        np.testing.assert_array_equal(e.q[:, 1], [0, 0, 0, 1])

    def test_deterministic_bytes(self, rng):
        a = rng.standard_normal((16, 16))
        s = a + a.T
        e1, e2 = symmetric_eigendecomp(s), symmetric_eigendecomp(s.copy())
        assert e1.q.tobytes() == e2.q.tobytes()
        assert e1.eigenvalues.tobytes() == e2.eigenvalues.tobytes()

    def test_errors(self):
        with pytest.raises(ShapeError):
            symmetric_eigendecomp(np.ones((2, 3)))
        with pytest.raises(InputError):
            symmetric_eigendecomp([[1.0, 0.1], [0.2, 1.0]])

    def test_iteration_cap(self, rng):
        a = rng.standard_normal((10, 10))
        with pytest.raises(ConvergenceError):
            symmetric_eigendecomp(a + a.T, max_sweeps=1)

    @settings(max_examples=40, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 10), st.integers(1, 10)),
                  elements=st.floats(-100, 100, allow_nan=False, allow_subnormal=False)))
    def test_invariants_property(self, a):
        n = min(a.shape)
        s = a[:n, :n] + a[:n, :n].T
        e = symmetric_eigendecomp(s)
        scale = max(1.0, np.abs(s).max())
        assert orthogonality_error(e.q) <= 1e-10
        assert reconstruction_error(s, e) <= 1e-9 * scale
        assert np.all(np.diff(e.eigenvalues) <= 0)


class TestRank:
    def test_identity(self):
        assert rank_report(np.eye(4), 1e-8) == (4, pytest.approx(4.0, abs=1e-12))

    @pytest.mark.parametrize("n", [1, 2, 7, 33, 64])
    def test_identity_sizes(self, n):
        nr, er = rank_report(np.eye(n), 1e-8)
        assert nr == n
        assert er == pytest.approx(n, rel=1e-12)

    def test_rank_one(self, rng):
        u, v = rng.standard_normal(5), rng.standard_normal(5)
        assert rank_report(np.outer(u, v), 1e-6).numerical_rank == 1

    def test_zero_matrix(self):
        assert rank_report(np.zeros((3, 3)), 1e-8) == (0, 0.0)

    def test_bad_tol(self):
        with pytest.raises(InputError):
            rank_report(np.eye(2), 0.0)

    @pytest.mark.parametrize("true_rank", [6, 5, 3, 1])
    def test_against_row_reduction(self, rng, true_rank):
        m = rng.standard_normal((6, true_rank)) @ rng.standard_normal((true_rank, 6))
        assert rank_report(m, 1e-6).numerical_rank == pivot_rank(m) == true_rank
