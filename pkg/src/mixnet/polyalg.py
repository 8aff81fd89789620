"""Scalar and matrix polynomials in the backward shift ``q^-1``.

Coefficients are stored in ascending powers of ``q^-1``: ``c[0] + c[1] q^-1 + ...``.
A polynomial matrix keeps its coefficients as one array of shape
``(deg + 1, rows, cols)`` so that ``M[l]`` is the lag-``l`` coefficient matrix.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Sequence

import numpy as np

TRIM_TOL = 1e-12
GCD_TOL = 1e-9


class PolyError(ValueError):
    pass


class GcdError(PolyError):
    """Raised when a Euclidean remainder sequence does not close cleanly."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


def _trim(c: np.ndarray, tol: float = TRIM_TOL) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=float))
    nz = np.flatnonzero(np.abs(c) > tol)
    if nz.size == 0:
        return np.zeros(1)
    return c[: nz[-1] + 1].copy()


class Polynomial:
    """Real polynomial in ``q^-1`` with canonical (trimmed) degree.

    The zero polynomial is stored as ``[0.]`` and has degree -1.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs: Sequence[float] | np.ndarray | float = (0.0,)):
        c = _trim(coeffs)
        c.setflags(write=False)
        self._c = c

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def degree(self) -> int:
        if self.is_zero():
            return -1
        return self._c.size - 1

    def is_zero(self) -> bool:
        return self._c.size == 1 and self._c[0] == 0.0

    def is_monic(self) -> bool:
        return self._c[0] == 1.0

    def padded(self, n: int) -> np.ndarray:
        """Coefficients zero-padded (or checked) to length ``n``."""
        if self._c.size > n and np.any(self._c[n:] != 0):
            raise PolyError(f"degree {self.degree} does not fit in {n} coefficients")
        out = np.zeros(n)
        m = min(n, self._c.size)
        out[:m] = self._c[:m]
        return out

    def __call__(self, z):
        """Evaluate at complex ``z`` (substituting ``z^-1`` for ``q^-1``)."""
        zinv = 1.0 / np.asarray(z, dtype=complex)
        return np.polyval(self._c[::-1], zinv)

    def __add__(self, other):
        other = as_poly(other)
        n = max(self._c.size, other._c.size)
        return Polynomial(self.padded(n) + other.padded(n))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self._c)

    def __sub__(self, other):
        return self + (-as_poly(other))

    def __rsub__(self, other):
        return as_poly(other) - self

    def __mul__(self, other):
        if np.isscalar(other):
            return Polynomial(self._c * float(other))
        return poly_mul(self, other)

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, Polynomial):
            try:
                other = as_poly(other)
            except (TypeError, ValueError):
                return NotImplemented
        return self._c.shape == other._c.shape and bool(np.all(self._c == other._c))

    def __hash__(self):
        return hash(self._c.tobytes())

    def allclose(self, other, atol: float = 1e-10) -> bool:
        other = as_poly(other)
        n = max(self._c.size, other._c.size)
        return bool(np.allclose(self.padded(n), other.padded(n), rtol=0, atol=atol))

    def __repr__(self):
        return f"Polynomial({np.array2string(self._c, precision=6)})"


def as_poly(p) -> Polynomial:
    if isinstance(p, Polynomial):
        return p
    return Polynomial(p)


def poly_mul(p, r) -> Polynomial:
    p, r = as_poly(p), as_poly(r)
    if p.is_zero() or r.is_zero():
        return Polynomial()
    return Polynomial(np.convolve(p.coeffs, r.coeffs))


def poly_divmod(num, den) -> tuple[Polynomial, Polynomial]:
    """Division in powers of ``q^-1`` treated as an ordinary variable."""
    num, den = as_poly(num), as_poly(den)
    if den.is_zero():
        raise ZeroDivisionError("division by the zero polynomial")
    if num.degree < den.degree:
        return Polynomial(), num
    q, r = np.polydiv(num.coeffs[::-1], den.coeffs[::-1])
    return Polynomial(q[::-1]), Polynomial(np.atleast_1d(r)[::-1])


def exact_div(num, den, tol: float = 1e-10) -> tuple[Polynomial, float]:
    """Quotient of a division expected to be exact, with its relative residual."""
    num, den = as_poly(num), as_poly(den)
    q, r = poly_divmod(num, den)
    scale = max(np.max(np.abs(num.coeffs)), 1e-300)
    return q, float(np.max(np.abs(r.coeffs)) / scale)


def _normalize_lowest(p: Polynomial) -> Polynomial:
    c = p.coeffs
    nz = np.flatnonzero(c)
    return Polynomial(c / c[nz[0]])


def poly_gcd(p, r, tol: float = GCD_TOL) -> Polynomial:
    """Greatest common divisor normalized so its lowest nonzero coefficient is 1.

    Euclidean remainder sequence in monic-normalized form. Remainder coefficients
    below ``tol`` times the largest input coefficient are dropped.
    """
    p, r = as_poly(p), as_poly(r)
    if p.is_zero() and r.is_zero():
        raise PolyError("gcd of two zero polynomials is undefined")
    if p.is_zero():
        return _normalize_lowest(r)
    if r.is_zero():
        return _normalize_lowest(p)
    scale = max(np.max(np.abs(p.coeffs)), np.max(np.abs(r.coeffs)))

    def lead_monic(x: np.ndarray) -> np.ndarray:
        return x / x[-1]

    a = lead_monic(p.coeffs / scale)
    b = lead_monic(r.coeffs / scale)
    if a.size < b.size:
        a, b = b, a
    while True:
        _, rem = np.polydiv(a[::-1], b[::-1])
        rem = np.atleast_1d(rem)[::-1]
        rem = _trim(rem, tol)
        if rem.size == 1 and abs(rem[0]) <= tol:
            break
        a, b = b, lead_monic(rem)
    g = _normalize_lowest(Polynomial(b))
    if g.degree > 0:
        res = max(exact_div(p, g)[1], exact_div(r, g)[1])
        if res > 1e3 * tol:
            raise GcdError("ill-conditioned remainder sequence near a common root", res)
    return g


def stable_roots(p, margin: float = 0.0) -> tuple[bool, np.ndarray]:
    """Roots (in ``z``) of ``p(z^-1)``; stable iff all satisfy ``|z| < 1 - margin``."""
    p = as_poly(p)
    if p.is_zero():
        raise PolyError("stability of the zero polynomial is undefined")
    if p.degree == 0:
        return True, np.zeros(0)
    c = p.coeffs
    if abs(c[0]) <= TRIM_TOL * np.max(np.abs(c)):
        # leading z-power vanishes: a root escapes to infinity
        return False, np.array([np.inf])
    mags = np.abs(np.roots(c))
    return bool(np.all(mags < 1.0 - margin)), np.sort(mags)


class PolyMatrix:
    """Polynomial matrix with coefficient array of shape ``(deg + 1, rows, cols)``."""

    __slots__ = ("_c",)

    def __init__(self, coefs):
        c = np.asarray(coefs, dtype=float)
        if c.ndim == 2:
            c = c[None]
        if c.ndim != 3:
            raise PolyError(f"coefficient array must be 3-D, got shape {c.shape}")
        nz = [l for l in range(c.shape[0]) if np.any(np.abs(c[l]) > TRIM_TOL)]
        last = nz[-1] if nz else 0
        c = c[: last + 1].copy()
        c[np.abs(c) <= TRIM_TOL] = 0.0
        c.setflags(write=False)
        self._c = c

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "PolyMatrix":
        return cls(np.zeros((1, rows, cols)))

    @classmethod
    def identity(cls, n: int) -> "PolyMatrix":
        return cls(np.eye(n)[None])

    @classmethod
    def from_entries(cls, grid) -> "PolyMatrix":
        grid = [[as_poly(e) for e in row] for row in grid]
        rows, cols = len(grid), len(grid[0])
        deg = max(max(e.coeffs.size for e in row) for row in grid)
        c = np.zeros((deg, rows, cols))
        for i, row in enumerate(grid):
            for j, e in enumerate(row):
                c[: e.coeffs.size, i, j] = e.coeffs
        return cls(c)

    @classmethod
    def diag(cls, polys) -> "PolyMatrix":
        polys = [as_poly(p) for p in polys]
        n = len(polys)
        return cls.from_entries([[polys[i] if i == j else Polynomial() for j in range(n)]
                                 for i in range(n)])

    @property
    def coefs(self) -> np.ndarray:
        return self._c

    @property
    def shape(self) -> tuple[int, int]:
        return self._c.shape[1], self._c.shape[2]

    @property
    def degree(self) -> int:
        if not np.any(self._c):
            return -1
        return self._c.shape[0] - 1

    def __getitem__(self, lag: int) -> np.ndarray:
        if lag < self._c.shape[0]:
            return self._c[lag]
        return np.zeros(self.shape)

    def entry(self, i: int, j: int) -> Polynomial:
        return Polynomial(self._c[:, i, j])

    def padded(self, nlags: int) -> np.ndarray:
        """Coefficient array with exactly ``nlags`` lags (must not truncate nonzeros)."""
        out = np.zeros((nlags,) + self.shape)
        m = min(nlags, self._c.shape[0])
        if self._c.shape[0] > nlags and np.any(self._c[nlags:]):
            raise PolyError(f"degree {self.degree} does not fit in {nlags} lags")
        out[:m] = self._c[:m]
        return out

    def mask(self) -> np.ndarray:
        """Entrywise structural support (any lag nonzero)."""
        return np.any(self._c != 0, axis=0)

    @property
    def T(self) -> "PolyMatrix":
        return PolyMatrix(np.transpose(self._c, (0, 2, 1)))

    def is_symmetric(self, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self._c - np.transpose(self._c, (0, 2, 1))) <= atol))

    def __call__(self, z) -> np.ndarray:
        return polymat_eval(self, z)

    def __add__(self, other):
        other = other if isinstance(other, PolyMatrix) else PolyMatrix(other)
        n = max(self._c.shape[0], other._c.shape[0])
        return PolyMatrix(self.padded(n) + other.padded(n))

    def __neg__(self):
        return PolyMatrix(-self._c)

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, other):
        """Scalar or scalar-polynomial multiplication."""
        if isinstance(other, Polynomial):
            c = np.apply_along_axis(lambda x: np.convolve(x, other.coeffs), 0, self._c)
            return PolyMatrix(c)
        return PolyMatrix(self._c * float(other))

    __rmul__ = __mul__

    def __matmul__(self, other: "PolyMatrix") -> "PolyMatrix":
        a, b = self._c, other._c
        out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1], b.shape[2]))
        for la in range(a.shape[0]):
            for lb in range(b.shape[0]):
                out[la + lb] += a[la] @ b[lb]
        return PolyMatrix(out)

    def allclose(self, other: "PolyMatrix", atol: float = 1e-10) -> bool:
        n = max(self._c.shape[0], other._c.shape[0])
        return bool(np.allclose(self.padded(n), other.padded(n), rtol=0, atol=atol))

    def __eq__(self, other):
        if not isinstance(other, PolyMatrix):
            return NotImplemented
        return self._c.shape == other._c.shape and bool(np.all(self._c == other._c))

    __hash__ = None

    def __repr__(self):
        return f"PolyMatrix(shape={self.shape}, degree={self.degree})"


def polymat_eval(M: PolyMatrix, z) -> np.ndarray:
    """Evaluate ``M(z^-1)``; ``z = inf`` returns the lag-0 coefficient."""
    if np.isinf(z):
        return M[0].astype(complex)
    zinv = 1.0 / complex(z)
    powers = zinv ** np.arange(M.coefs.shape[0])
    return np.tensordot(powers, M.coefs, axes=(0, 0))


def polymat_det(M: PolyMatrix) -> Polynomial:
    """Determinant by permutation expansion (square, at most 6x6)."""
    n, m = M.shape
    if n != m:
        raise PolyError(f"determinant of a non-square {n}x{m} matrix")
    if n > 6:
        raise PolyError("polymat_det supports at most 6x6 matrices")
    entries = [[M.entry(i, j) for j in range(n)] for i in range(n)]
    total = Polynomial()
    for perm in permutations(range(n)):
        sign = _perm_sign(perm)
        term = Polynomial([float(sign)])
        for i, j in enumerate(perm):
            term = poly_mul(term, entries[i][j])
            if term.is_zero():
                break
        total = total + term
    return total


def _perm_sign(perm) -> int:
    perm = list(perm)
    sign = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def polymat_adj(M: PolyMatrix) -> list[list[Polynomial]]:
    """Adjugate matrix as a grid of polynomials."""
    n = M.shape[0]
    if n == 1:
        return [[Polynomial([1.0])]]
    adj = [[Polynomial() for _ in range(n)] for _ in range(n)]
    for i in range(n):
        for j in range(n):
            keep_r = [r for r in range(n) if r != i]
            keep_c = [c for c in range(n) if c != j]
            minor = PolyMatrix(M.coefs[:, keep_r][:, :, keep_c])
            adj[j][i] = polymat_det(minor) * ((-1) ** (i + j))
    return adj


def laplacian_split(A: PolyMatrix) -> tuple[PolyMatrix, PolyMatrix]:
    """Split symmetric ``A`` into diagonal ``X`` (ground links) plus Laplacian ``Y``."""
    if not A.is_symmetric():
        raise PolyError("laplacian_split requires a symmetric polynomial matrix")
    c = A.coefs
    L = A.shape[0]
    off = c * (1 - np.eye(L))[None]
    Y = off.copy()
    idx = np.arange(L)
    Y[:, idx, idx] = -off.sum(axis=2)
    X = np.zeros_like(c)
    X[:, idx, idx] = c[:, idx, idx] - Y[:, idx, idx]
    return PolyMatrix(X), PolyMatrix(Y)


@dataclass(frozen=True)
class ConvMatrix:
    """Dense convolution matrix with maps from rows/cols back to lags.

    ``matrix @ r`` gives the coefficients of ``p * r`` for ``r`` with
    ``deg r <= out_deg - deg p``; ``row_lag[k]`` and ``col_lag[k]`` name the
    lag each row and column stands for.
    """

    matrix: np.ndarray
    row_lag: np.ndarray
    col_lag: np.ndarray

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __matmul__(self, x):
        return self.matrix @ x


def conv_matrix(p, out_deg: int) -> ConvMatrix:
    """Lower-triangular banded Toeplitz matrix of size ``(out_deg+1) x (out_deg+1)``."""
    p = as_poly(p)
    if out_deg < max(p.degree, 0):
        raise PolyError(f"out_deg {out_deg} smaller than deg p = {p.degree}")
    n = out_deg + 1
    T = np.zeros((n, n))
    c = p.coeffs
    for k, ck in enumerate(c):
        if ck != 0.0:
            T += ck * np.eye(n, k=-k)
    lags = np.arange(n)
    return ConvMatrix(T, lags, lags)


class LinearPolyMatrix:
    """Polynomial matrix affine in a parameter vector: ``M(x) = M_const + sum_p x_p E_p``.

    ``basis`` has shape ``(nparams, nlags, rows, cols)``. This is the bookkeeping
    that turns products of polynomial matrices with unknown coefficients into
    ordinary linear least-squares problems.
    """

    def __init__(self, basis: np.ndarray, offset: np.ndarray | None = None, names=None):
        basis = np.asarray(basis, dtype=float)
        if basis.ndim != 4:
            raise PolyError("basis must have shape (nparams, nlags, rows, cols)")
        self.basis = basis
        nl, r, c = basis.shape[1:]
        if offset is None:
            offset = np.zeros((nl, r, c))
        offset = np.asarray(offset, dtype=float)
        if offset.shape[0] < nl:
            offset = np.concatenate([offset, np.zeros((nl - offset.shape[0], r, c))])
        elif offset.shape[0] > nl:
            pad = np.zeros((basis.shape[0], offset.shape[0] - nl, r, c))
            self.basis = np.concatenate([basis, pad], axis=1)
        self.offset = offset
        self.names = list(names) if names is not None else [f"x{k}" for k in range(basis.shape[0])]

    @property
    def nparams(self) -> int:
        return self.basis.shape[0]

    @property
    def nlags(self) -> int:
        return self.basis.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.basis.shape[2], self.basis.shape[3]

    def __call__(self, x) -> PolyMatrix:
        x = np.asarray(x, dtype=float)
        return PolyMatrix(self.offset + np.tensordot(x, self.basis, axes=(0, 0)))

    def coef_matrix(self, nlags: int) -> tuple[np.ndarray, np.ndarray]:
        """``(G, g)`` with ``vec(coefs of M(x), lags < nlags) = G x + g``."""
        b = _fit_lags(self.basis, nlags, axis=1)
        o = _fit_lags(self.offset, nlags, axis=0)
        return b.reshape(self.nparams, o.size).T, o.ravel()

    def left_mul_matrix(self, X: PolyMatrix, nlags: int) -> tuple[np.ndarray, np.ndarray]:
        """``(G, g)`` with ``vec(coefs of M(x) @ X, lags < nlags) = G x + g``.

        Built from ``conv_matrix`` blocks of the entries of ``X``.
        """
        r, m = self.shape
        m2, c = X.shape
        if m != m2:
            raise PolyError("inner dimensions do not agree")
        convs = [[conv_matrix(X.entry(j, k), max(nlags - 1, X.degree)).matrix[:nlags]
                  for k in range(c)] for j in range(m)]
        G = np.zeros((nlags, r, c, self.nparams))
        for p in range(self.nparams):
            for l, i, j in zip(*np.nonzero(self.basis[p])):
                if l >= nlags:
                    continue
                coef = self.basis[p, l, i, j]
                for k in range(c):
                    G[:, i, k, p] += coef * _col(convs[j][k], l)
        const = _fit_lags((PolyMatrix(self.offset) @ X).coefs, nlags, axis=0)
        return G.reshape(const.size, self.nparams), const.ravel()

    def right_mul_matrix(self, X: PolyMatrix, nlags: int) -> tuple[np.ndarray, np.ndarray]:
        """``(G, g)`` with ``vec(coefs of X @ M(x), lags < nlags) = G x + g``."""
        m, c = self.shape
        r, m2 = X.shape
        if m != m2:
            raise PolyError("inner dimensions do not agree")
        convs = [[conv_matrix(X.entry(i, j), max(nlags - 1, X.degree)).matrix[:nlags]
                  for j in range(m)] for i in range(r)]
        G = np.zeros((nlags, r, c, self.nparams))
        for p in range(self.nparams):
            for l, j, k in zip(*np.nonzero(self.basis[p])):
                if l >= nlags:
                    continue
                coef = self.basis[p, l, j, k]
                for i in range(r):
                    G[:, i, k, p] += coef * _col(convs[i][j], l)
        const = _fit_lags((X @ PolyMatrix(self.offset)).coefs, nlags, axis=0)
        return G.reshape(const.size, self.nparams), const.ravel()

    def values(self, M: PolyMatrix) -> np.ndarray:
        """Least-squares read-off of the parameter vector from a concrete matrix."""
        G, g = self.coef_matrix(max(self.nlags, M.coefs.shape[0]))
        target = M.padded(max(self.nlags, M.coefs.shape[0])).ravel() - g
        x, *_ = np.linalg.lstsq(G, target, rcond=None)
        return x


def _col(T: np.ndarray, l: int) -> np.ndarray:
    if l < T.shape[1]:
        return T[:, l]
    return np.zeros(T.shape[0])


def _fit_lags(a: np.ndarray, nlags: int, axis: int) -> np.ndarray:
    n = a.shape[axis]
    if n >= nlags:
        return np.take(a, range(nlags), axis=axis)
    pad = [(0, 0)] * a.ndim
    pad[axis] = (0, nlags - n)
    return np.pad(a, pad)


def hstack_linear(*mats: LinearPolyMatrix) -> LinearPolyMatrix:
    """Column-concatenate parameterized matrices sharing one parameter vector."""
    nl = max(m.nlags for m in mats)
    basis = np.concatenate([_fit_lags(m.basis, nl, axis=1) for m in mats], axis=3)
    offset = np.concatenate([_fit_lags(m.offset, nl, axis=0) for m in mats], axis=2)
    return LinearPolyMatrix(basis, offset, mats[0].names)
