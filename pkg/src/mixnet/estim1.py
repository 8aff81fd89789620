"""Polynomial-form estimation from data: high-order ARX, structured reduction,
weighted refinement and the noise model.

Every stage is a linear least-squares or equality-constrained least-squares
solve. The product ``Fb * Upsilon0`` that appears when the ARX model is matched
to the structured one is absorbed into a single free polynomial matrix
``C = Fb Upsilon0`` whose lag-0 coefficient is ``Upsilon0``; this keeps the
matching relations linear in the unknowns.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .estim2 import IdentifiabilityError, solve_kkt
from .netmodel import BreveModel
from .polyalg import LinearPolyMatrix, PolyMatrix, Polynomial
from .simkit import DataSet, SimulationError, innovations, whiteness_test
from .structure import ModelStructure, embed

log = logging.getLogger(__name__)

RANK_TOL = 1e-10
RIDGE = 1e-10


class InformativityError(np.linalg.LinAlgError):
    """The ARX regressors are rank deficient: the data are not informative."""


@dataclass
class ArxEstimate:
    Abar: PolyMatrix
    Bbar: PolyMatrix
    Sigma: np.ndarray
    R: np.ndarray
    n: int
    nobs: int

    @property
    def L(self) -> int:
        return self.Abar.shape[0]

    @property
    def K(self) -> int:
        return self.Bbar.shape[1]

    def delta_params(self) -> LinearPolyMatrix:
        """``[Abar, Bbar]`` as an affine function of the raw LS coefficients.

        Parameters are ordered by output row, then regressor, matching the
        covariance ``Sigma (x) R^-1``.
        """
        L, K, n = self.L, self.K, self.n
        p = n * L + (n + 1) * K
        basis = np.zeros((L * p, n + 1, L, L + K))
        for i in range(L):
            for m in range(p):
                if m < n * L:
                    l, j = divmod(m, L)
                    basis[i * p + m, l + 1, i, j] = -1.0
                else:
                    l, k = divmod(m - n * L, K)
                    basis[i * p + m, l, i, L + k] = 1.0
        offset = np.zeros((n + 1, L, L + K))
        offset[0, :, :L] = np.eye(L)
        return LinearPolyMatrix(basis, offset)

    @property
    def Z(self) -> PolyMatrix:
        nl = self.n + 1
        return PolyMatrix(np.concatenate([self.Abar.padded(nl), self.Bbar.padded(nl)], axis=2))


def arx_regressors(data: DataSet, n: int):
    """``(Phi, Y)`` for ``w(t)`` on ``w(t-1..t-n)`` and ``r(t..t-n)``, lag-major."""
    w, r = data.w, data.r
    N = data.N
    if N <= n + 1:
        raise InformativityError(f"too few samples ({N}) for ARX order {n}")
    cols = [w[n - l: N - l] for l in range(1, n + 1)] + [r[n - l: N - l] for l in range(n + 1)]
    return np.hstack(cols), w[n:]


def fit_arx(data: DataSet, n: int) -> ArxEstimate:
    """Equation-wise least-squares ARX fit of order ``n``."""
    Phi, Y = arx_regressors(data, n)
    scale = np.linalg.norm(Phi, axis=0)
    scale[scale == 0] = 1.0
    sv = np.linalg.svd(Phi / scale, compute_uv=False)
    if sv[-1] <= RANK_TOL * sv[0] or Phi.shape[0] < Phi.shape[1]:
        raise InformativityError(
            f"ARX regressor matrix is rank deficient at order {n} "
            f"(sigma_min/sigma_max = {sv[-1] / sv[0]:.1e}): the data are not informative; "
            "use an excitation whose spectrum is positive definite at enough frequencies")
    Th, *_ = np.linalg.lstsq(Phi, Y, rcond=None)
    E = Y - Phi @ Th
    L, K = data.L, data.K
    nA = n * L
    Abar = np.zeros((n + 1, L, L))
    Abar[0] = np.eye(L)
    for l in range(1, n + 1):
        Abar[l] = -Th[(l - 1) * L: l * L].T
    Bbar = np.zeros((n + 1, L, K))
    for l in range(n + 1):
        Bbar[l] = Th[nA + l * K: nA + (l + 1) * K].T
    return ArxEstimate(PolyMatrix(Abar), PolyMatrix(Bbar), E.T @ E / E.shape[0],
                       Phi.T @ Phi, n, Phi.shape[0])


def default_order(s: ModelStructure) -> int:
    return max(20, 4 * s.breve_degree())


@dataclass
class EtaEstimate:
    eta: np.ndarray
    c: np.ndarray
    structure: ModelStructure
    normalization: dict
    Fb: PolyMatrix | None = None
    Lb: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def breve(self, dG: Polynomial | None = None) -> BreveModel:
        return self.structure.breve_from_eta(self.eta, self.Fb, self.Lb, dG)

    @property
    def index_map(self) -> dict:
        return self.structure.eta_blocks()


class _Reduction:
    """Linear bookkeeping for ``C [Abar, Bbar] - [Upsilon, Bb] = 0`` over ``x = [eta, c]``."""

    def __init__(self, s: ModelStructure, arx: ArxEstimate):
        L, K, n = s.L, s.K, arx.n
        pa, pb, pg = s.eta_params()
        ne = s.n_eta
        self.ne = ne
        self.nC = s.dG_degree + (s.F_mask.shape[0] - 1 if s.F_mask.any() else 0)
        self.nc = self.nC * L * L
        nx = ne + self.nc
        bl = s.eta_blocks()
        Ab = embed(pa, nx, bl["Ab"].start)
        Bb = embed(pb, nx, bl["Bb"].start)
        Gb = embed(pg, nx, bl["Gb"].start)
        nl = max(Ab.nlags, Gb.nlags)
        ups = _pad(Ab, nl).basis - _pad(Gb, nl).basis
        self.Ups = LinearPolyMatrix(ups)
        self.Bb = Bb
        # C: lag 0 equals Upsilon0(eta), lags 1..nC free
        cb = np.zeros((nx, self.nC + 1, L, L))
        cb[:, 0] = ups[:, 0]
        for q in range(self.nc):
            l, rest = divmod(q, L * L)
            i, j = divmod(rest, L)
            cb[ne + q, l + 1, i, j] = 1.0
        self.C = LinearPolyMatrix(cb)
        self.nl = n + 1
        # lag-0 entries of the A columns vanish identically
        keep = np.ones((self.nl, L, L + K), dtype=bool)
        keep[0, :, :L] = False
        self.keep = keep.ravel()
        self.target = LinearPolyMatrix(np.concatenate([_pad(self.Ups, max(nl, Bb.nlags)).basis,
                                                       _pad(Bb, max(nl, Bb.nlags)).basis], axis=3))
        self.L, self.K = L, K

    def Phi(self, arx: ArxEstimate) -> np.ndarray:
        G, _ = self.C.left_mul_matrix(arx.Z, self.nl)
        H, _ = self.target.coef_matrix(self.nl)
        return (G - H)[self.keep]

    def T(self, x: np.ndarray, arx: ArxEstimate) -> np.ndarray:
        """Jacobian of the residual w.r.t. the raw ARX coefficients, at ``C(x)``."""
        G, _ = arx.delta_params().right_mul_matrix(self.C(x), self.nl)
        return G[self.keep]


def _pad(lpm: LinearPolyMatrix, nl: int) -> LinearPolyMatrix:
    if lpm.nlags >= nl:
        return lpm
    b = np.pad(lpm.basis, [(0, 0), (0, nl - lpm.nlags), (0, 0), (0, 0)])
    return LinearPolyMatrix(b, None, lpm.names)


def _normalization(s: ModelStructure, nx: int):
    con = s.eta_constraint()
    if con is not None:
        G, g = con
        rec = {"kind": "theta-constraint", "detail": "lag-0 constraint carried over to eta"}
    else:
        bl = s.eta_blocks()
        idx = bl["Bb"].start if bl["Bb"].stop > bl["Bb"].start else 0
        G = np.zeros((1, s.n_eta))
        G[0, idx] = 1.0
        g = np.ones(1)
        rec = {"kind": "designated-eta", "index": int(idx),
               "detail": "one eta parameter fixed to 1; scale resolved in the mapping step"}
    Gx = np.zeros((G.shape[0], nx))
    Gx[:, : s.n_eta] = G
    return Gx, g, rec


def _solve(Q: np.ndarray, Gx, g):
    nrm = np.linalg.norm(Q)
    Qn = Q / nrm if nrm > 0 else Q
    try:
        return solve_kkt(Qn, Gx, g)
    except IdentifiabilityError as exc:
        raise IdentifiabilityError(f"structured reduction: {exc}") from None


def reduce_to_structured(arx: ArxEstimate, s: ModelStructure, norm=None) -> EtaEstimate:
    """Unweighted constrained least squares on the matching relations."""
    red = _Reduction(s, arx)
    nx = red.ne + red.nc
    if norm is None:
        Gx, g, rec = _normalization(s, nx)
    else:
        Ge, g = norm
        Gx = np.zeros((np.atleast_2d(Ge).shape[0], nx))
        Gx[:, : s.n_eta] = Ge
        g = np.atleast_1d(np.asarray(g, dtype=float))
        rec = {"kind": "user", "detail": "user-supplied eta constraint"}
    x, _, cond = _solve(red.Phi(arx), Gx, g)
    return EtaEstimate(x[: red.ne], x[red.ne:], s, dict(rec, Gamma=Gx[:, : s.n_eta].tolist(),
                                                        gamma=g.tolist()),
                       diagnostics={"1b": {"kkt_cond": cond}})


def _weight_factor(arx: ArxEstimate, weighting: str):
    L = arx.L
    flagged = False
    if weighting == "identity":
        U = np.eye(L)
    elif weighting == "inv-lambda":
        Sig = (arx.Sigma + arx.Sigma.T) / 2
        ridge = RIDGE * max(np.trace(Sig) / L, 1e-300)
        ev = np.linalg.eigvalsh(Sig)
        if ev.min() <= ridge:
            flagged = True
        Sig = Sig + ridge * np.eye(L)
        U = linalg.cholesky(np.linalg.inv(Sig), lower=False)
    else:
        raise ValueError("weighting must be 'identity' or 'inv-lambda'")
    Rm = (arx.R + arx.R.T) / 2
    try:
        V = linalg.cholesky(Rm, lower=False)
    except linalg.LinAlgError:
        flagged = True
        V = linalg.cholesky(Rm + RIDGE * np.trace(Rm) / len(Rm) * np.eye(len(Rm)), lower=False)
    return np.kron(U, V), flagged


def refine(eta: EtaEstimate, arx: ArxEstimate, s: ModelStructure, passes: int = 1,
           weighting: str = "inv-lambda") -> EtaEstimate:
    """Re-solve the matching relations weighted by the inverse residual covariance.

    The residual of the relations at the true parameters is ``T(C) delta`` with
    ``delta`` the ARX estimation error; weighting by ``(T Cov(delta) T')^-1``
    whitens it.
    """
    red = _Reduction(s, arx)
    nx = red.ne + red.nc
    Gx = np.zeros((len(eta.normalization["gamma"]), nx))
    Gx[:, : s.n_eta] = np.asarray(eta.normalization["Gamma"])
    g = np.asarray(eta.normalization["gamma"])
    Phi = red.Phi(arx)
    Wf, flagged = _weight_factor(arx, weighting)
    x = np.concatenate([eta.eta, eta.c])
    history = []
    for _ in range(passes):
        T = red.T(x, arx)
        try:
            Q = Wf @ linalg.solve_triangular(T, Phi, lower=True) if _is_lower(T) else Wf @ np.linalg.solve(T, Phi)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise IdentifiabilityError(f"refinement weighting is singular: {exc}") from None
        x_new, _, cond = _solve(Q, Gx, g)
        history.append(float(np.linalg.norm(x_new[: red.ne] - x[: red.ne])))
        x = x_new
    diag = dict(eta.diagnostics)
    diag["1c"] = {"kkt_cond": cond, "passes": passes, "weighting": weighting,
                  "weight_regularized": flagged, "step_sizes": history}
    return EtaEstimate(x[: red.ne], x[red.ne:], s, eta.normalization, diagnostics=diag)


def _is_lower(T: np.ndarray) -> bool:
    return T.shape[0] == T.shape[1] and not np.any(np.triu(T, 1))


def noise_model(eta: EtaEstimate, data: DataSet, arx: ArxEstimate | None = None) -> EtaEstimate:
    """``Fb = C Upsilon0^-1`` (monic) and ``Lb`` from the filtered innovations."""
    s = eta.structure
    L = s.L
    b = s.breve_from_eta(eta.eta)
    U0 = b.Upsilon0
    U0inv = np.linalg.inv(U0)
    nC = eta.c.size // (L * L)
    C = np.zeros((nC + 1, L, L))
    C[0] = U0
    C[1:] = eta.c.reshape(nC, L, L)
    Fb = np.einsum("lij,jk->lik", C, U0inv)
    Fb[0] = np.eye(L)
    Fb = PolyMatrix(Fb)
    diag = dict(eta.diagnostics)
    info = {}
    skip = max(b.Upsilon.degree, b.Bb.degree, Fb.degree, 0)
    try:
        v = innovations(BreveModel(b.Ab, b.Bb, b.Gb, Fb, np.eye(L), Polynomial([1.0])), data)
        tail = v[skip:]
        Lb = tail.T @ tail / max(tail.shape[0], 1)
        if len(tail) > 20 * L:
            info["whiteness"] = dict(zip(("statistic", "p_value"), whiteness_test(tail @ U0inv.T)))
    except SimulationError:
        if arx is None:
            raise
        Lb = U0 @ arx.Sigma @ U0.T
        info["fallback"] = "noise filter inverse unstable; covariance from ARX residuals"
    Lb = (Lb + Lb.T) / 2
    ev, vec = np.linalg.eigh(Lb)
    if ev.min() < 0:
        info["psd_projected"] = True
        Lb = vec @ np.diag(np.clip(ev, 0, None)) @ vec.T
    diag["1d"] = info
    return EtaEstimate(eta.eta, eta.c, s, eta.normalization, Fb, Lb, diag)


@dataclass
class Step1Result:
    eta: EtaEstimate
    arx: ArxEstimate
    breve: BreveModel
    diagnostics: dict


def estimate_breve(data: DataSet, s: ModelStructure, arx_order: int | None = None,
                   passes: int = 1, weighting: str = "inv-lambda") -> Step1Result:
    """Stages 1a-1d. When the ARX regressors are rank deficient but the excitation
    alone is not, the data carry no noise and the equation error is fitted directly."""
    if data.L != s.L or data.K != s.K:
        raise ValueError(f"dataset has L={data.L}, K={data.K}; structure expects L={s.L}, K={s.K}")
    n = arx_order or default_order(s)
    diag = {"1a": {"order": n}}
    try:
        arx = fit_arx(data, n)
    except InformativityError:
        if not _excitation_full_rank(data, n):
            raise
        log.info("ARX order %d rank deficient with informative excitation; "
                 "fitting the equation error directly (noise-free data)", n)
        return _equation_error_fit(data, s, n)
    diag["1a"]["residual_cov"] = arx.Sigma.tolist()
    eta = reduce_to_structured(arx, s)
    if passes > 0:
        eta = refine(eta, arx, s, passes, weighting)
    eta = noise_model(eta, data, arx)
    diag.update(eta.diagnostics)
    return Step1Result(eta, arx, eta.breve(), diag)


def _excitation_full_rank(data: DataSet, n: int) -> bool:
    Phi, _ = arx_regressors(data, n)
    Pr = Phi[:, n * data.L:]
    sv = np.linalg.svd(Pr / np.maximum(np.linalg.norm(Pr, axis=0), 1e-300), compute_uv=False)
    return bool(sv[-1] > RANK_TOL * sv[0])


def equation_error_matrix(data: DataSet, s: ModelStructure) -> np.ndarray:
    """Columns: contribution of each eta parameter to ``Upsilon(eta) w - Bb(eta) r``."""
    pa, pb, pg = s.eta_params()
    ne, bl = s.n_eta, s.eta_blocks()
    nl = max(pa.nlags, pb.nlags, pg.nlags)
    Ab = _pad(embed(pa, ne, bl["Ab"].start), nl).basis
    Bb = _pad(embed(pb, ne, bl["Bb"].start), nl).basis
    Gb = _pad(embed(pg, ne, bl["Gb"].start), nl).basis
    full = np.concatenate([Ab - Gb, -Bb], axis=3)
    z = np.hstack([data.w, data.r])
    N = data.N
    lagged = np.stack([z[nl - 1 - l: N - l] for l in range(nl)], axis=1)  # (T, nl, L+K)
    cols = np.einsum("tlc,plic->tip", lagged, full)
    return cols.reshape(-1, full.shape[0])


def _equation_error_fit(data: DataSet, s: ModelStructure, n: int) -> Step1Result:
    M = equation_error_matrix(data, s)
    Gx, g, rec = _normalization(s, s.n_eta)
    try:
        x, _, cond = _solve(M, Gx, g)
    except IdentifiabilityError as exc:
        raise InformativityError(f"equation-error fit is singular: {exc}") from None
    res = M @ x
    L = s.L
    resid = res.reshape(-1, L)
    Lb = resid.T @ resid / resid.shape[0]
    eta = EtaEstimate(x, np.zeros(0), s, dict(rec, Gamma=Gx.tolist(), gamma=g.tolist()),
                      PolyMatrix.identity(L), Lb)
    diag = {"1a": {"order": n, "fallback": "equation-error",
                   "reason": "ARX regressors rank deficient with full-rank excitation (noise-free data)"},
            "1b": {"kkt_cond": cond, "residual_rms": float(np.sqrt(np.mean(res ** 2)))},
            "1d": {"note": "noise model not estimable from noise-free data; Fb set to I"}}
    eta.diagnostics = diag
    return Step1Result(eta, None, eta.breve(), diag)
