import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixnet.netmodel import net2
from mixnet.polyalg import (GcdError, PolyError, PolyMatrix, Polynomial, conv_matrix,
                            exact_div, laplacian_split, poly_gcd, poly_mul, polymat_det,
                            polymat_eval, stable_roots)

coef = st.floats(-5, 5, allow_nan=False).filter(lambda x: abs(x) > 1e-3)
polys = st.lists(coef, min_size=1, max_size=5).map(Polynomial)


def test_poly_mul_examples():
    assert poly_mul([1.0], [1, -0.5]) == Polynomial([1, -0.5])
    assert poly_mul([1, -0.5], [1, 0.5]).allclose(Polynomial([1, 0, -0.25]), 1e-15)
    assert poly_mul([2, 0.5], [1, -0.5]).allclose(Polynomial([2, -0.5, -0.25]), 1e-15)


def test_zero_polynomial():
    z = Polynomial([0.0, 0.0])
    assert z.is_zero() and z.degree == -1
    assert poly_mul(z, [1, 2]).is_zero()
    assert Polynomial([1, 2, 1e-14]).degree == 1


@settings(max_examples=100, deadline=None)
@given(polys, polys, polys)
def test_mul_commutes_and_associates(p, r, s):
    assert np.allclose(poly_mul(p, r).coeffs, poly_mul(r, p).coeffs, rtol=1e-12, atol=1e-12)
    left = poly_mul(poly_mul(p, r), s).coeffs
    right = poly_mul(p, poly_mul(r, s)).coeffs
    assert np.allclose(left, right, rtol=1e-12, atol=1e-12 * np.abs(left).max())


def test_gcd_examples():
    g = poly_gcd([1, -0.5], poly_mul([1, -0.5], [1, 0.2]))
    assert g.allclose(Polynomial([1, -0.5]), 1e-10)
    assert poly_gcd([1, -0.5], [1.0]) == Polynomial([1.0])


def _from_roots(roots):
    # factors (1 - z_k q^-1)
    return Polynomial(np.poly(roots).real)


def test_gcd_random_coprime_pairs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        roots = rng.uniform(-0.9, 0.9, 5)
        p = _from_roots(roots[:2])
        r = _from_roots(roots[2:])
        if np.min(np.abs(roots[:2, None] - roots[None, 2:])) < 0.05:
            continue
        assert poly_gcd(p, r).allclose(Polynomial([1.0]), 1e-9)


def test_gcd_common_factor_divides_both():
    rng = np.random.default_rng(1)
    for _ in range(50):
        roots = rng.uniform(-0.9, 0.9, 4)
        if np.min(np.abs(np.subtract.outer(roots, roots))[~np.eye(4, dtype=bool)]) < 0.05:
            continue
        g = _from_roots(roots[:1])
        p, r = poly_mul(_from_roots(roots[1:2]), g), poly_mul(_from_roots(roots[2:]), g)
        h = poly_gcd(p, r)
        assert exact_div(p, h)[1] < 1e-9 and exact_div(r, h)[1] < 1e-9
        assert h.degree == 1


def test_gcd_of_zeros_raises():
    with pytest.raises(PolyError):
        poly_gcd([0.0], [0.0])


def test_gcd_error_carries_residual():
    err = GcdError("x", 0.5)
    assert err.residual == 0.5


def test_polymat_eval():
    A = net2().A
    assert np.allclose(polymat_eval(A, np.inf), A[0])
    assert np.allclose(polymat_eval(A, 1.0), A[0] + A[1])
    assert np.allclose(polymat_eval(PolyMatrix.identity(3), 0.3 + 0.4j), np.eye(3))


def test_polymat_det_examples():
    assert polymat_det(PolyMatrix.diag([[1, -0.5], [1.0]])).allclose(Polynomial([1, -0.5]))
    M = PolyMatrix.from_entries([[[1.0], [0, 1.0]], [[0, 1.0], [1.0]]])
    assert polymat_det(M).allclose(Polynomial([1, 0, -1]))
    assert polymat_det(PolyMatrix.identity(4)) == Polynomial([1.0])
    with pytest.raises(PolyError):
        polymat_det(PolyMatrix.zeros(2, 3))


def test_polymat_det_matches_pointwise():
    rng = np.random.default_rng(2)
    M = PolyMatrix(rng.standard_normal((3, 3, 3)))
    d = polymat_det(M)
    for z in rng.standard_normal(16) + 1j * rng.standard_normal(16):
        ref = np.linalg.det(polymat_eval(M, z))
        assert abs(d(z) - ref) <= 1e-9 * max(abs(ref), 1.0)


def test_laplacian_split():
    X, Y = laplacian_split(net2().A)
    assert np.allclose(Y[0], [[1, -1], [-1, 1]]) and np.allclose(X[0], np.eye(2))
    assert np.array_equal((X + Y).coefs, net2().A.coefs)
    assert np.all(Y.coefs.sum(axis=2) == 0)
    D = PolyMatrix.diag([[1, 2], [3.0]])
    X, Y = laplacian_split(D)
    assert not np.any(Y.coefs) and X == D
    with pytest.raises(PolyError):
        laplacian_split(PolyMatrix(np.array([[[1.0, 2.0], [0.0, 1.0]]])))


def test_conv_matrix_examples():
    assert np.array_equal(conv_matrix([1.0], 3).matrix, np.eye(4))
    T = conv_matrix([1, -0.5], 2).matrix
    assert np.array_equal(T, [[1, 0, 0], [-0.5, 1, 0], [0, -0.5, 1]])
    with pytest.raises(PolyError):
        conv_matrix([1, 2, 3], 1)


def test_conv_matrix_matches_poly_mul():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = Polynomial(rng.standard_normal(rng.integers(1, 4)))
        r = rng.standard_normal(rng.integers(1, 4))
        out_deg = p.degree + len(r) - 1 + int(rng.integers(0, 3))
        T = conv_matrix(p, out_deg)
        rv = np.zeros(out_deg + 1)
        rv[: len(r)] = r
        assert np.allclose(T @ rv, poly_mul(p, r).padded(out_deg + 1), rtol=0, atol=1e-13)


def test_stable_roots():
    ok, mags = stable_roots([1, -0.5])
    assert ok and np.allclose(mags, [0.5])
    ok, mags = stable_roots([1, -2.0])
    assert not ok and np.allclose(mags, [2.0])
    ok, mags = stable_roots([1.0])
    assert ok and mags.size == 0
    assert not stable_roots([1, -0.95], margin=0.1)[0]


def test_polymatrix_products():
    rng = np.random.default_rng(4)
    X = PolyMatrix(rng.standard_normal((2, 2, 3)))
    Y = PolyMatrix(rng.standard_normal((3, 3, 2)))
    z = 0.7 + 0.2j
    assert np.allclose(polymat_eval(X @ Y, z), polymat_eval(X, z) @ polymat_eval(Y, z))


def test_linear_poly_matrix_products():
    from mixnet.structure import masked_params
    rng = np.random.default_rng(5)
    lpm = masked_params(rng.random((2, 2, 3)) < 0.7, prefix="x")
    x = rng.standard_normal(lpm.nparams)
    X = PolyMatrix(rng.standard_normal((3, 3, 2)))
    Y = PolyMatrix(rng.standard_normal((2, 4, 2)))
    nl = 6
    G, g = lpm.left_mul_matrix(X, nl)
    assert np.allclose(G @ x + g, (lpm(x) @ X).padded(nl).ravel())
    G, g = lpm.right_mul_matrix(Y, nl)
    assert np.allclose(G @ x + g, (Y @ lpm(x)).padded(nl).ravel())
    assert np.allclose(lpm.values(lpm(x)), x)
