"""Map an estimated polynomial-form model to physical coefficients.

Three linear solves plus a deconvolution: ``(A, B)`` from the null-space relation
``A Bb - Ab B = 0`` under the scale constraint, then the common factor ``dG``,
then the directed links ``(Dg, Ng)``, then the noise model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .netmodel import BreveModel, MixedModel, ModelError
from .polyalg import ConvMatrix, PolyMatrix, Polynomial, conv_matrix
from .structure import ModelStructure

log = logging.getLogger(__name__)

KKT_COND_LIMIT = 1e14
DECONV_TOL = 1e-6


class IdentifiabilityError(np.linalg.LinAlgError):
    """A linear solve in the mapping is singular; the structure is not identifiable."""


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


def solve_kkt(Q, Gamma, gamma, strict: bool = True):
    """Minimize ``x' Q' Q x`` subject to ``Gamma x = gamma`` via the KKT system.

    Returns ``(x, multipliers, condition_number)``. A singular KKT matrix raises
    ``IdentifiabilityError``; with ``strict=False`` the minimum-norm solution of
    the saddle-point system is returned instead.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    n, m = Q.shape[1], Gamma.shape[0]
    K = np.zeros((n + m, n + m))
    K[:n, :n] = Q.T @ Q
    K[:n, n:] = Gamma.T
    K[n:, :n] = Gamma
    rhs = np.concatenate([np.zeros(n), gamma])
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > KKT_COND_LIMIT:
        if not strict:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            return sol[:n], sol[n:], float(cond)
        raise IdentifiabilityError(
            f"KKT matrix is singular (condition {cond:.2e}); check the identifiability "
            "conditions: coprimeness, the diagonal-permutation condition and the "
            "scale constraint")
    sol = np.linalg.solve(K, rhs)
    return sol[:n], sol[n:], float(cond)


def build_Q(breve: BreveModel, s: ModelStructure) -> ConvMatrix:
    """Matrix with ``Q @ vartheta`` = coefficients of ``A(vartheta) Bb - Ab B(vartheta)``."""
    pa, pb = s.A_params(), s.B_params()
    nl = pa.nlags + breve.Bb.coefs.shape[0] - 1
    nl = max(nl, breve.Ab.coefs.shape[0] + pb.nlags - 1)
    GA, ga = pa.left_mul_matrix(breve.Bb, nl)
    GB, gb = pb.right_mul_matrix(breve.Ab, nl)
    if np.any(ga) or np.any(gb):
        raise StageError("2a", "inconsistent degree bookkeeping in Q")
    Q = np.hstack([GA, -GB])
    L, K = breve.L, breve.K
    row_lag = np.repeat(np.arange(nl), L * K)
    col_lag = np.array([int(np.nonzero(b)[0][0]) for b in pa.basis]
                       + [int(np.nonzero(b)[0][0]) for b in pb.basis], dtype=int)
    return ConvMatrix(Q, row_lag, col_lag)


def solve_theta_AB(Q, Gamma, gamma, strict: bool = True):
    Qm = Q.matrix if isinstance(Q, ConvMatrix) else np.asarray(Q)
    return solve_kkt(Qm, Gamma, gamma, strict)


def resolve_scale(breve: BreveModel, A: PolyMatrix, B: PolyMatrix) -> float:
    """``alpha`` with ``(Ab_0, Bb_0) ~ alpha (A_0, B_0)``; lag-0 terms carry no ``dG``."""
    x = np.concatenate([A[0].ravel(), B[0].ravel()])
    y = np.concatenate([breve.Ab[0].ravel(), breve.Bb[0].ravel()])
    return float(x @ y / (x @ x))


def estimate_dG(A: PolyMatrix, B: PolyMatrix, breve: BreveModel, degree: int):
    """Monic ``dG`` of given degree from ``Ab - dG A = 0`` and ``Bb - dG B = 0``.

    Returns ``(dG, residual_norm)``.
    """
    if degree == 0:
        res = max(np.abs((breve.Ab - A).coefs).max(), np.abs((breve.Bb - B).coefs).max())
        return Polynomial([1.0]), float(res)
    nl = max(A.coefs.shape[0] + degree, breve.Ab.coefs.shape[0],
             B.coefs.shape[0] + degree, breve.Bb.coefs.shape[0])
    cols = []
    for l in range(1, degree + 1):
        shift = Polynomial(np.eye(1, l + 1, l).ravel())
        cols.append(np.concatenate([(A * shift).padded(nl).ravel(), (B * shift).padded(nl).ravel()]))
    P = np.column_stack(cols)
    p = np.concatenate([(breve.Ab - A).padded(nl).ravel(), (breve.Bb - B).padded(nl).ravel()])
    if np.linalg.matrix_rank(P) < degree:
        raise StageError("2b", "P is rank deficient: A and B are degenerate")
    beta, *_ = np.linalg.lstsq(P, p, rcond=None)
    res = float(np.linalg.norm(p - P @ beta))
    return Polynomial(np.concatenate([[1.0], beta])), res


def estimate_G(breve: BreveModel, dG: Polynomial, s: ModelStructure):
    """Row-wise ``Dg_jj Gb_row - dG Ng_row = 0`` solved by least squares.

    Returns ``(Dg, Ng, residual_norms_per_row)``.
    """
    L = s.L
    Gb = breve.Gb
    dg_polys = [Polynomial([1.0]) for _ in range(L)]
    ng_coefs = np.zeros((max(s.Ng_mask.shape[0], 1), L, L))
    residuals = np.zeros(L)
    for j in range(L):
        cols_mask = s.Ng_mask[:, j, :]
        if not cols_mask.any():
            continue
        nd = int(s.Dg_deg[j])
        nl = max(Gb.coefs.shape[0] + nd, dG.coeffs.size + s.Ng_mask.shape[0] - 1)
        grow = [Gb.entry(j, k) for k in range(L)]
        r = np.concatenate([g.padded(nl) for g in grow])
        cols, slots = [], []
        for l in range(1, nd + 1):
            cols.append(-np.concatenate([conv_matrix(g, nl - 1 + l).matrix[:nl, l] if not g.is_zero()
                                         else np.zeros(nl) for g in grow]))
            slots.append(("dg", l, None))
        dconv = conv_matrix(dG, nl - 1).matrix
        for l, k in zip(*np.nonzero(cols_mask)):
            col = np.zeros((L, nl))
            col[k] = dconv[:, l]
            cols.append(col.ravel())
            slots.append(("ng", int(l), int(k)))
        R = np.column_stack(cols)
        if np.linalg.matrix_rank(R) < R.shape[1]:
            raise StageError("2c", f"R is rank deficient for row {j}: the directed link "
                                   "dynamics into this node are not identifiable from Gb")
        th, *_ = np.linalg.lstsq(R, r, rcond=None)
        residuals[j] = np.linalg.norm(r - R @ th)
        dcoef = np.zeros(nd + 1)
        dcoef[0] = 1.0
        for (kind, l, k), v in zip(slots, th):
            if kind == "dg":
                dcoef[l] = v
            else:
                ng_coefs[l, j, k] = v
        dg_polys[j] = Polynomial(dcoef)
    return PolyMatrix.diag(dg_polys), PolyMatrix(ng_coefs), residuals


def recover_noise(Fb: PolyMatrix, dG: Polynomial, Lb, s: ModelStructure):
    """``F`` from ``Fb ~ dG F`` by least-squares deconvolution; ``Lambda = Lb``.

    Returns ``(F, Lambda, relative_residual)``.
    """
    pf = s.F_params()
    nl = max(Fb.coefs.shape[0], pf.nlags + dG.coeffs.size - 1)
    dgI = PolyMatrix(np.eye(s.L)[None]) * dG
    # F(x) dG = dG F(x): multiply the parameterization on the left by dG I
    G, g = pf.right_mul_matrix(dgI, nl)
    target = Fb.padded(nl).ravel()
    if pf.nparams:
        x, *_ = np.linalg.lstsq(G, target - g, rcond=None)
    else:
        x = np.zeros(0)
    res = float(np.linalg.norm(G @ x + g - target) / max(np.linalg.norm(target), 1e-300))
    return pf(x), np.asarray(Lb, dtype=float).copy(), res


@dataclass
class ThetaEstimate:
    model: MixedModel
    theta: np.ndarray
    vartheta: np.ndarray
    multipliers: np.ndarray
    beta: np.ndarray
    alpha: float
    diagnostics: dict = field(default_factory=dict)


def map_to_physical(breve: BreveModel, s: ModelStructure, check: bool = True) -> ThetaEstimate:
    """Polynomial form -> physical mixed-network model (stages 2a-2d)."""
    diag = {}
    if check:
        from .identcheck import check_identifiability
        rep = check_identifiability(s, "original")
        failing = [k for k, v in rep.conditions.items() if v["holds"] is False]
        if failing:
            log.warning("structure fails identifiability conditions %s", failing)
            diag["identifiability_warnings"] = failing
    try:
        Q = build_Q(breve, s)
        vartheta, lam, cond = solve_theta_AB(Q, s.Gamma, s.gamma)
    except (IdentifiabilityError, np.linalg.LinAlgError) as exc:
        raise StageError("2a", str(exc)) from None
    nA = s.A_params().nparams
    A = s.A_params()(vartheta[:nA])
    B = s.B_params()(vartheta[nA:])
    diag["2a"] = {"residual": float(np.linalg.norm(Q.matrix @ vartheta)), "kkt_cond": cond}

    alpha = resolve_scale(breve, A, B)
    if not np.isfinite(alpha) or abs(alpha) < 1e-300:
        raise StageError("2b", "cannot resolve the scale factor")
    unscaled = breve.scaled(1.0 / alpha)
    dG, res_b = estimate_dG(A, B, unscaled, s.dG_degree)
    diag["2b"] = {"residual": res_b, "alpha": alpha}

    Dg, Ng, res_c = estimate_G(unscaled, dG, s)
    diag["2c"] = {"residual": res_c.tolist()}

    F, Lam, res_d = recover_noise(unscaled.Fb, dG, unscaled.Lb, s)
    diag["2d"] = {"residual": res_d, "flag": bool(res_d > DECONV_TOL)}
    if res_d > DECONV_TOL:
        log.info("noise deconvolution residual %.2e exceeds %.0e", res_d, DECONV_TOL)

    model = MixedModel(A, B, Dg, Ng, F, Lam)
    try:
        model.validate()
        diag["valid"] = True
    except (ModelError, ValueError) as exc:
        diag["valid"] = False
        diag["invalid_reason"] = str(exc)
    theta = _theta_of(model, s)
    return ThetaEstimate(model, theta, vartheta, lam, dG.coeffs[1:].copy(), alpha, diag)


def _theta_of(model: MixedModel, s: ModelStructure) -> np.ndarray:
    parts = [(s.A_params(), model.A), (s.B_params(), model.B), (s.Dg_params(), model.Dg),
             (s.Ng_params(), model.Ng), (s.F_params(), model.F)]
    return np.concatenate([lpm.values(M) for lpm, M in parts])
