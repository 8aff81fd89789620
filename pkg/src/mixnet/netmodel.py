"""Mixed network models, their polynomial (breve) form and frequency-domain maps."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .polyalg import (
    PolyError,
    PolyMatrix,
    Polynomial,
    exact_div,
    poly_gcd,
    poly_mul,
    polymat_adj,
    polymat_det,
    polymat_eval,
    stable_roots,
)

DIV_TOL = 1e-10
DEFAULT_TS = 0.05


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class MixedModel:
    """``A w = B r + Dg^-1 Ng w + F e`` with symmetric ``A`` and hollow ``Ng``."""

    A: PolyMatrix
    B: PolyMatrix
    Dg: PolyMatrix
    Ng: PolyMatrix
    F: PolyMatrix
    Lambda: np.ndarray

    @property
    def L(self) -> int:
        return self.A.shape[0]

    @property
    def K(self) -> int:
        return self.B.shape[1]

    @property
    def G_inf(self) -> np.ndarray:
        """``lim_{z->inf} Dg^-1 Ng`` (Dg is monic, so this is ``Ng_0``)."""
        return np.linalg.solve(self.Dg[0], self.Ng[0])

    @property
    def Upsilon0(self) -> np.ndarray:
        return self.A[0] - self.G_inf

    def G(self, z) -> np.ndarray:
        return np.linalg.solve(polymat_eval(self.Dg, z), polymat_eval(self.Ng, z))

    def Upsilon(self, z) -> np.ndarray:
        return polymat_eval(self.A, z) - self.G(z)

    def validate(self, margin: float = 0.0) -> "MixedModel":
        """Check every structural and stability invariant; raise ``ModelError``."""
        L, K = self.L, self.K
        if self.A.shape != (L, L) or self.B.shape[0] != L:
            raise ModelError("A must be LxL and B must be LxK")
        if self.Dg.shape != (L, L) or self.Ng.shape != (L, L) or self.F.shape != (L, L):
            raise ModelError("Dg, Ng and F must be LxL")
        if not self.A.is_symmetric():
            raise ModelError("A is not symmetric")
        if np.any(np.diagonal(self.Ng.coefs, axis1=1, axis2=2)):
            raise ModelError("Ng is not hollow")
        off = self.Dg.coefs * (1 - np.eye(L))[None]
        if np.any(off):
            raise ModelError("Dg is not diagonal")
        if not np.array_equal(self.Dg[0], np.eye(L)):
            raise ModelError("Dg is not monic")
        for j in range(L):
            row = [self.Ng.entry(j, k) for k in range(L) if k != j]
            djj = self.Dg.entry(j, j)
            if all(p.is_zero() for p in row):
                if djj.degree > 0:
                    raise ModelError(f"Dg[{j},{j}] must be 1 when row {j} of Ng is zero")
                continue
            g = reduce(poly_gcd, row, djj)
            if g.degree > 0:
                raise ModelError(f"Dg[{j},{j}] and row {j} of Ng share the factor {g}")
        lam = np.asarray(self.Lambda, dtype=float)
        if lam.shape != (L, L) or not np.allclose(lam, lam.T):
            raise ModelError("Lambda must be a symmetric LxL matrix")
        if np.min(np.linalg.eigvalsh(lam)) <= 0:
            raise ModelError("Lambda is not positive definite")
        if not np.array_equal(self.F[0], np.eye(L)):
            raise ModelError("F is not monic")
        ok, mags = stable_roots(polymat_det(self.F), margin)
        if not ok:
            raise ModelError(f"F is not stable and stably invertible (root moduli {mags})")
        if abs(np.linalg.det(self.Upsilon0)) < 1e-12 * max(1.0, np.abs(self.Upsilon0).max()) ** L:
            raise ModelError("network is not well-posed: A0 - G_inf is singular")
        breve = to_breve(self)
        ok, mags = stable_roots(polymat_det(breve.Upsilon), margin)
        if not ok:
            raise ModelError(f"(A - G)^-1 is unstable (root moduli up to {mags.max():.4f})")
        return self


@dataclass(frozen=True)
class BreveModel:
    """Polynomial form ``(Ab - Gb) w = Bb r + Fb e`` with common factor ``dG``."""

    Ab: PolyMatrix
    Bb: PolyMatrix
    Gb: PolyMatrix
    Fb: PolyMatrix
    Lb: np.ndarray
    dG: Polynomial = field(default_factory=lambda: Polynomial([1.0]))

    @property
    def L(self) -> int:
        return self.Ab.shape[0]

    @property
    def K(self) -> int:
        return self.Bb.shape[1]

    @property
    def Upsilon(self) -> PolyMatrix:
        return self.Ab - self.Gb

    @property
    def Upsilon0(self) -> np.ndarray:
        return self.Upsilon[0]

    def scaled(self, alpha: float) -> "BreveModel":
        """Scaled copy ``alpha * (Ab, Bb, Gb)``; the innovation covariance scales by ``alpha**2``."""
        return BreveModel(self.Ab * alpha, self.Bb * alpha, self.Gb * alpha, self.Fb,
                          np.asarray(self.Lb) * alpha**2, self.dG)


def compute_dG(Dg: PolyMatrix) -> Polynomial:
    """``det(Dg) / gcd(det(Dg), adj(Dg))`` for diagonal monic ``Dg``."""
    L = Dg.shape[0]
    if np.any(Dg.coefs * (1 - np.eye(L))[None]):
        raise ModelError("Dg must be diagonal")
    if not np.array_equal(Dg[0], np.eye(L)):
        raise ModelError("Dg must be monic")
    det = polymat_det(Dg)
    adj = polymat_adj(Dg)
    g = det
    for row in adj:
        for a in row:
            if not a.is_zero():
                g = poly_gcd(g, a)
    dG, res = exact_div(det, g)
    if res > DIV_TOL:
        raise ModelError(f"det(Dg) not divisible by its gcd with adj(Dg) (residual {res:.2e})")
    return Polynomial(dG.coeffs / dG.coeffs[0])


def to_breve(m: MixedModel) -> BreveModel:
    """Polynomial form: multiply through by the scalar ``dG``."""
    dG = compute_dG(m.Dg)
    L = m.L
    grid = [[Polynomial() for _ in range(L)] for _ in range(L)]
    for j in range(L):
        cof, res = exact_div(dG, m.Dg.entry(j, j))
        if res > DIV_TOL:
            raise ModelError(f"dG is not divisible by Dg[{j},{j}] (residual {res:.2e}); "
                             "the coprimeness invariant of (Dg, Ng) is violated")
        for k in range(L):
            grid[j][k] = poly_mul(cof, m.Ng.entry(j, k))
    Gb = PolyMatrix.from_entries(grid)
    return BreveModel(m.A * dG, m.B * dG, Gb, m.F * dG, np.array(m.Lambda, dtype=float), dG)


@dataclass(frozen=True)
class FreqResponse:
    grid: np.ndarray
    Twr: np.ndarray   # (n, L, K)
    Twe: np.ndarray   # (n, L, L)
    Phi_v: np.ndarray  # (n, L, L)
    singular: tuple = ()


def default_grid(n: int = 128) -> np.ndarray:
    """``n`` uniform frequencies on ``[0, pi)``."""
    return np.arange(n) * np.pi / n


def freq_response(model, grid=None) -> FreqResponse:
    """``T_wr``, ``T_we`` and the disturbance spectrum on a frequency grid.

    Accepts a ``MixedModel`` (rational form) or a ``BreveModel``.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    if isinstance(model, BreveModel):
        Ups, Bm, Fm, lam = model.Upsilon, model.Bb, model.Fb, model.Lb
        ups_at = lambda z: polymat_eval(Ups, z)
    else:
        Bm, Fm, lam = model.B, model.F, model.Lambda
        ups_at = model.Upsilon
    L, K = Bm.shape
    n = grid.size
    Twr = np.zeros((n, L, K), complex)
    Twe = np.zeros((n, L, L), complex)
    singular = []
    for k, w in enumerate(grid):
        z = np.exp(1j * w)
        U = ups_at(z)
        if np.linalg.cond(U) > 1e14:
            singular.append(int(k))
            Twr[k] = Twe[k] = np.nan
            continue
        rhs = np.concatenate([polymat_eval(Bm, z), polymat_eval(Fm, z)], axis=1)
        X = np.linalg.solve(U, rhs)
        Twr[k], Twe[k] = X[:, :K], X[:, K:]
    Phi = Twe @ np.asarray(lam) @ np.conj(np.transpose(Twe, (0, 2, 1)))
    return FreqResponse(grid, Twr, Twe, Phi, tuple(singular))


class PredictorFilters:
    """One-step predictor ``w_hat = (I - Ww) w + Wr r`` evaluated in frequency.

    ``Ww = (A0 - G_inf)^-1 F^-1 (A - G)`` and ``Wr = (A0 - G_inf)^-1 F^-1 B``.
    """

    def __init__(self, m: MixedModel):
        U0 = m.Upsilon0
        if abs(np.linalg.det(U0)) < 1e-12:
            raise ModelError("A0 - G_inf is singular: predictor undefined")
        self.model = m
        self._U0inv = np.linalg.inv(U0)

    def Ww(self, z) -> np.ndarray:
        m = self.model
        Fz = polymat_eval(m.F, z)
        return self._U0inv @ np.linalg.solve(Fz, m.Upsilon(z))

    def Wr(self, z) -> np.ndarray:
        m = self.model
        return self._U0inv @ np.linalg.solve(polymat_eval(m.F, z), polymat_eval(m.B, z))

    def W(self, z) -> np.ndarray:
        return np.concatenate([np.eye(self.model.L) - self.Ww(z), self.Wr(z)], axis=1)


def predictor_filters(m: MixedModel) -> PredictorFilters:
    return PredictorFilters(m)


def build_msd(masses, dampers, springs, ground_dampers=None, ground_springs=None,
              inputs=None, controllers=None, Ts: float = DEFAULT_TS,
              Lambda=None) -> MixedModel:
    """Backward-difference discretization of a controlled mass-spring-damper network.

    ``dampers`` and ``springs`` are symmetric LxL coupling matrices (zero diagonal);
    ground links come as length-L vectors. ``inputs`` is the constant LxK input
    matrix (default identity). ``controllers`` maps ``(i, j)`` to
    ``(numerator, denominator)`` coefficient sequences in ``q^-1`` for a directed
    link from node ``j`` into node ``i``; a bare number is a constant gain.
    Only one denominator per controlled node is supported, shared by the row.
    """
    M = np.asarray(masses, dtype=float)
    L = M.size
    if np.any(M <= 0):
        raise ModelError("masses must be positive")
    Dc = np.asarray(dampers, dtype=float)
    Kc = np.asarray(springs, dtype=float)
    Dg0 = np.zeros(L) if ground_dampers is None else np.asarray(ground_dampers, float)
    Kg0 = np.zeros(L) if ground_springs is None else np.asarray(ground_springs, float)
    for name, C in (("dampers", Dc), ("springs", Kc)):
        if C.shape != (L, L) or not np.allclose(C, C.T) or np.any(C < 0):
            raise ModelError(f"{name} must be a symmetric nonnegative LxL matrix")
    if np.any(Dg0 < 0) or np.any(Kg0 < 0):
        raise ModelError("ground couplings must be nonnegative")
    adj = ((Dc + Kc) * (1 - np.eye(L))) > 0
    if not _connected(adj):
        raise ModelError("the undirected network is not connected")
    if not np.any(Dg0 + Kg0 > 0):
        raise ModelError("the network needs at least one connection to the ground")

    def lap(C):
        C = C * (1 - np.eye(L))
        return np.diag(C.sum(axis=1)) - C

    Md = np.diag(M)
    Dmat = np.diag(Dg0) + lap(Dc)
    Kmat = np.diag(Kg0) + lap(Kc)
    # s -> (1 - q^-1)/Ts
    A = np.stack([Md / Ts**2 + Dmat / Ts + Kmat, -2 * Md / Ts**2 - Dmat / Ts, Md / Ts**2])
    B = np.eye(L) if inputs is None else np.asarray(inputs, dtype=float)
    if B.ndim != 2 or B.shape[0] != L:
        raise ModelError("inputs must be an LxK matrix")
    ng = [[Polynomial() for _ in range(L)] for _ in range(L)]
    dg = [Polynomial([1.0]) for _ in range(L)]
    for (i, j), spec in (controllers or {}).items():
        if i == j:
            raise ModelError("controllers cannot be self-loops")
        if np.isscalar(spec):
            num, den = [float(spec)], [1.0]
        else:
            num, den = spec
        den = Polynomial(den)
        if den.coeffs[0] == 0:
            raise ModelError("controller denominator must have a nonzero constant term")
        num = Polynomial(np.asarray(Polynomial(num).coeffs) / den.coeffs[0])
        den = Polynomial(den.coeffs / den.coeffs[0])
        if dg[i].degree > 0 and not dg[i].allclose(den):
            raise ModelError(f"node {i} already has a different controller denominator")
        dg[i] = den
        ng[i][j] = num
    lam = np.eye(L) if Lambda is None else np.asarray(Lambda, float)
    m = MixedModel(PolyMatrix(A), PolyMatrix(B), PolyMatrix.diag(dg),
                   PolyMatrix.from_entries(ng), PolyMatrix.identity(L), lam)
    if abs(np.linalg.det(m.Upsilon0)) < 1e-12:
        raise ModelError("A0 - G_inf is rank deficient")
    return m


def _connected(adj: np.ndarray) -> bool:
    L = adj.shape[0]
    seen = {0}
    stack = [0]
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(adj[i]):
            if j not in seen:
                seen.add(int(j))
                stack.append(int(j))
    return len(seen) == L


def net2() -> MixedModel:
    """Two-node running example with one directed first-order link 2 -> 1."""
    A = PolyMatrix(np.array([[[2.0, -1.0], [-1.0, 2.0]], [[0.5, -0.2], [-0.2, 0.4]]]))
    Ng = PolyMatrix.from_entries([[0, [0.0, 0.3]], [0, 0]])
    Dg = PolyMatrix.diag([[1.0, -0.5], [1.0]])
    return MixedModel(A, PolyMatrix.identity(2), Dg, Ng, PolyMatrix.identity(2), 0.01 * np.eye(2))


def random_msd(rng: np.random.Generator, L: int, Ts: float = DEFAULT_TS,
               n_links: int = 1) -> MixedModel:
    """Random connected MSD network with ``B = I`` and ``n_links`` one-directional
    controllers of degree <= 2 (stable denominators, distinct target nodes)."""
    masses = rng.uniform(0.5, 2.0, L)
    D = np.zeros((L, L))
    Kc = np.zeros((L, L))
    edges = [(i, i + 1) for i in range(L - 1)]
    edges += [(i, j) for i in range(L) for j in range(i + 2, L) if rng.random() < 0.5]
    for i, j in edges:
        D[i, j] = D[j, i] = rng.uniform(0.2, 1.5)
        Kc[i, j] = Kc[j, i] = rng.uniform(0.5, 3.0)
    ground = rng.random(L) < 0.5
    ground[rng.integers(L)] = True
    gd = np.where(ground, rng.uniform(0.2, 1.5, L), 0.0)
    gk = np.where(ground, rng.uniform(0.5, 3.0, L), 0.0)
    ctrl = {}
    targets = rng.permutation(L)[:n_links]
    for i in targets:
        j = int(rng.choice([k for k in range(L) if k != i and (k, i) not in ctrl]))
        ddeg = int(rng.integers(1, 3))
        poles = rng.uniform(-0.8, 0.8, ddeg)
        den = np.poly(poles)  # ascending in q^-1 for 1 - p q^-1 factors
        ndeg = int(rng.integers(0, 3))
        num = rng.uniform(0.5, 3.0, ndeg + 1) * rng.choice([-1, 1], ndeg + 1)
        ctrl[(int(i), j)] = (num, den)
    lam_f = rng.standard_normal((L, L)) * 0.05
    Lambda = lam_f @ lam_f.T + 0.01 * np.eye(L)
    return build_msd(masses, D, Kc, gd, gk, None, ctrl, Ts, Lambda)
