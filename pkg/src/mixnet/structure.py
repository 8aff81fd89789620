"""Model structures: zero patterns, degrees, parameter maps and the scale constraint."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .netmodel import BreveModel, MixedModel, ModelError
from .polyalg import LinearPolyMatrix, PolyMatrix, Polynomial


def masked_params(mask: np.ndarray, symmetric: bool = False, min_lag: int = 0,
                  offset=None, prefix: str = "x") -> LinearPolyMatrix:
    """One free coefficient per ``True`` entry of ``mask`` (shape ``(nlags, r, c)``).

    With ``symmetric`` the pair ``(i, j)``/``(j, i)`` shares one parameter.
    """
    mask = np.asarray(mask, dtype=bool)
    nl, r, c = mask.shape
    basis, names = [], []
    for l in range(min_lag, nl):
        for i in range(r):
            for j in range(c):
                if not mask[l, i, j] or (symmetric and j < i):
                    continue
                b = np.zeros((nl, r, c))
                b[l, i, j] = 1.0
                if symmetric:
                    b[l, j, i] = 1.0
                basis.append(b)
                names.append(f"{prefix}[{l}][{i},{j}]")
    basis = np.array(basis).reshape(len(basis), nl, r, c)
    return LinearPolyMatrix(basis, offset if offset is not None else np.zeros((nl, r, c)), names)


def embed(lpm: LinearPolyMatrix, total: int, start: int) -> LinearPolyMatrix:
    """Re-express ``lpm`` over a longer parameter vector, occupying ``[start, start+n)``."""
    b = np.zeros((total,) + lpm.basis.shape[1:])
    b[start:start + lpm.nparams] = lpm.basis
    names = [f"p{k}" for k in range(total)]
    return LinearPolyMatrix(b, lpm.offset, names)


def _spread(mask: np.ndarray, extra: int) -> np.ndarray:
    """Lag mask of ``d * M`` for a scalar ``d`` of degree ``extra``."""
    nl = mask.shape[0]
    out = np.zeros((nl + extra,) + mask.shape[1:], dtype=bool)
    for k in range(extra + 1):
        out[k:k + nl] |= mask
    return out


@dataclass
class ModelStructure:
    """Structural description of a mixed-network model set.

    ``Gamma @ theta_AB = gamma`` is the scale constraint on the stacked
    ``(theta_A, theta_B)`` coefficients.
    """

    A_mask: np.ndarray
    B_mask: np.ndarray
    Ng_mask: np.ndarray
    Dg_deg: np.ndarray
    F_mask: np.ndarray
    Gamma: np.ndarray
    gamma: np.ndarray
    dG_degree: int | None = None
    ground: np.ndarray | None = None
    G_known: bool = True
    relaxed_cond6: bool = False
    names: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A_mask = np.asarray(self.A_mask, dtype=bool)
        self.B_mask = np.asarray(self.B_mask, dtype=bool)
        self.Ng_mask = np.asarray(self.Ng_mask, dtype=bool)
        self.F_mask = np.asarray(self.F_mask, dtype=bool)
        self.Dg_deg = np.asarray(self.Dg_deg, dtype=int)
        self.Gamma = np.atleast_2d(np.asarray(self.Gamma, dtype=float))
        self.gamma = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if self.dG_degree is None:
            has_g = self.Ng_mask.any(axis=(0, 2))
            self.dG_degree = int(self.Dg_deg[has_g].sum())
        if self.ground is not None:
            self.ground = np.asarray(self.ground, dtype=bool)

    # -- basic sizes -------------------------------------------------------
    @property
    def L(self) -> int:
        return self.A_mask.shape[1]

    @property
    def K(self) -> int:
        return self.B_mask.shape[2]

    @property
    def G_mask(self) -> np.ndarray:
        """Entrywise support of the directed links."""
        return self.Ng_mask.any(axis=0)

    def validate(self) -> "ModelStructure":
        L = self.L
        A = self.A_mask
        if A.shape[1:] != (L, L) or np.any(A != np.transpose(A, (0, 2, 1))):
            raise ModelError("A mask must be LxL and symmetric")
        if self.B_mask.shape[1] != L:
            raise ModelError("B mask must have L rows")
        if self.Ng_mask.shape[1:] != (L, L) or np.any(np.diagonal(self.Ng_mask, axis1=1, axis2=2)):
            raise ModelError("Ng mask must be LxL and hollow")
        if self.F_mask.shape[1:] != (L, L):
            raise ModelError("F mask must be LxL")
        if self.Dg_deg.shape != (L,) or np.any(self.Dg_deg < 0):
            raise ModelError("Dg degrees must be a nonnegative length-L vector")
        no_g = ~self.G_mask.any(axis=1)
        if np.any(self.Dg_deg[no_g] > 0):
            raise ModelError("Dg entries of rows without directed links must be 1")
        G = self.G_mask
        if not self.relaxed_cond6 and np.any(G & G.T):
            raise ModelError("directed links in both directions between a node pair; "
                             "enable the relaxed condition explicitly")
        if self.Gamma.shape[1] != self.n_vartheta:
            raise ModelError(f"Gamma must have {self.n_vartheta} columns (theta_A, theta_B)")
        if self.Gamma.shape[0] != self.gamma.size:
            raise ModelError("Gamma and gamma sizes disagree")
        s = np.linalg.svd(_row_normalized(self.Gamma), compute_uv=False)
        if np.sum(s > 1e-10 * max(s.max(), 1e-300)) < self.Gamma.shape[0]:
            raise ModelError("Gamma does not have full row rank")
        if not np.any(self.gamma != 0):
            raise ModelError("gamma must be nonzero")
        return self

    # -- physical parameterization theta -----------------------------------
    def A_params(self) -> LinearPolyMatrix:
        return masked_params(self.A_mask, symmetric=True, prefix="a")

    def B_params(self) -> LinearPolyMatrix:
        return masked_params(self.B_mask, prefix="b")

    def Dg_params(self) -> LinearPolyMatrix:
        L = self.L
        nl = int(self.Dg_deg.max()) + 1
        mask = np.zeros((nl, L, L), dtype=bool)
        for j in range(L):
            mask[1:self.Dg_deg[j] + 1, j, j] = True
        return masked_params(mask, min_lag=1, offset=np.eye(L)[None], prefix="dg")

    def Ng_params(self) -> LinearPolyMatrix:
        return masked_params(self.Ng_mask, prefix="ng")

    def F_params(self) -> LinearPolyMatrix:
        return masked_params(self.F_mask, min_lag=1, offset=np.eye(self.L)[None], prefix="f")

    @property
    def n_vartheta(self) -> int:
        return self.A_params().nparams + self.B_params().nparams

    def theta_blocks(self) -> dict[str, slice]:
        sizes = [("A", self.A_params().nparams), ("B", self.B_params().nparams),
                 ("Dg", self.Dg_params().nparams), ("Ng", self.Ng_params().nparams),
                 ("F", self.F_params().nparams)]
        out, k = {}, 0
        for name, n in sizes:
            out[name] = slice(k, k + n)
            k += n
        return out

    def theta_names(self) -> list[str]:
        return (self.A_params().names + self.B_params().names + self.Dg_params().names
                + self.Ng_params().names + self.F_params().names)

    def theta_from_model(self, m: MixedModel) -> np.ndarray:
        parts = [(self.A_params(), m.A), (self.B_params(), m.B), (self.Dg_params(), m.Dg),
                 (self.Ng_params(), m.Ng), (self.F_params(), m.F)]
        vals = []
        for lpm, M in parts:
            x = lpm.values(M)
            if not lpm(x).allclose(M, atol=1e-9 * max(1.0, np.abs(M.coefs).max())):
                raise ModelError("model has nonzero coefficients outside the structure")
            vals.append(x)
        return np.concatenate(vals)

    def model_from_theta(self, theta, Lambda) -> MixedModel:
        b = self.theta_blocks()
        theta = np.asarray(theta, dtype=float)
        return MixedModel(self.A_params()(theta[b["A"]]), self.B_params()(theta[b["B"]]),
                          self.Dg_params()(theta[b["Dg"]]), self.Ng_params()(theta[b["Ng"]]),
                          self.F_params()(theta[b["F"]]), np.asarray(Lambda, dtype=float))

    # -- polynomial (breve) parameterization eta ---------------------------
    def breve_masks(self) -> dict[str, np.ndarray]:
        d = self.dG_degree
        L = self.L
        Gb_rows = []
        for j in range(L):
            row = np.zeros_like(self.Ng_mask)
            row[:, j, :] = self.Ng_mask[:, j, :]
            Gb_rows.append(_spread(row, max(d - int(self.Dg_deg[j]), 0)))
        nl = max(r.shape[0] for r in Gb_rows)
        Gb = np.zeros((nl, L, L), dtype=bool)
        for r in Gb_rows:
            Gb[: r.shape[0]] |= r
        return {"Ab": _spread(self.A_mask, d), "Bb": _spread(self.B_mask, d), "Gb": Gb,
                "Fb": _spread(self.F_mask | np.eye(L, dtype=bool)[None], d)}

    def breve_degree(self) -> int:
        m = self.breve_masks()
        return max(_last_lag(m["Ab"]), _last_lag(m["Gb"]), _last_lag(m["Bb"]))

    def eta_params(self) -> tuple[LinearPolyMatrix, LinearPolyMatrix, LinearPolyMatrix]:
        m = self.breve_masks()
        return (masked_params(m["Ab"], symmetric=True, prefix="ab"),
                masked_params(m["Bb"], prefix="bb"),
                masked_params(m["Gb"], prefix="gb"))

    def eta_blocks(self) -> dict[str, slice]:
        a, b, g = (p.nparams for p in self.eta_params())
        return {"Ab": slice(0, a), "Bb": slice(a, a + b), "Gb": slice(a + b, a + b + g)}

    @property
    def n_eta(self) -> int:
        return sum(p.nparams for p in self.eta_params())

    def eta_from_breve(self, b: BreveModel) -> np.ndarray:
        pa, pb, pg = self.eta_params()
        return np.concatenate([pa.values(b.Ab), pb.values(b.Bb), pg.values(b.Gb)])

    def breve_from_eta(self, eta, Fb=None, Lb=None, dG=None) -> BreveModel:
        pa, pb, pg = self.eta_params()
        s = self.eta_blocks()
        eta = np.asarray(eta, dtype=float)
        L = self.L
        return BreveModel(pa(eta[s["Ab"]]), pb(eta[s["Bb"]]), pg(eta[s["Gb"]]),
                          Fb if Fb is not None else PolyMatrix.identity(L),
                          np.eye(L) if Lb is None else np.asarray(Lb, dtype=float),
                          dG if dG is not None else Polynomial([1.0]))

    def eta_constraint(self):
        """Translate the theta constraint to eta when it only touches lag-0 coefficients.

        Lag-0 coefficients coincide in both forms because ``dG`` is monic.
        Returns ``(Gamma_eta, gamma_eta)`` or ``None``.
        """
        pa, pb = self.A_params(), self.B_params()
        ea, eb, _ = self.eta_params()
        cols = []
        for lpm, elpm in ((pa, ea), (pb, eb)):
            for p in range(lpm.nparams):
                l, i, j = (int(v[0]) for v in np.nonzero(lpm.basis[p]))
                if l != 0:
                    cols.append(None)
                    continue
                hits = [q for q in range(elpm.nparams) if elpm.basis[q, 0, i, j] == 1.0]
                cols.append(hits[0] if hits else None)
        used = np.flatnonzero(np.any(self.Gamma != 0, axis=0))
        if any(cols[u] is None for u in used):
            return None
        na = ea.nparams
        offsets = [0] * pa.nparams + [na] * pb.nparams
        G = np.zeros((self.Gamma.shape[0], self.n_eta))
        for u in used:
            G[:, offsets[u] + cols[u]] += self.Gamma[:, u]
        return G, self.gamma.copy()

    # -- construction --------------------------------------------------------
    @classmethod
    def from_model(cls, m: MixedModel, Gamma=None, gamma=None, **kw) -> "ModelStructure":
        """Masks read from the nonzero pattern of a nominal model.

        Without an explicit constraint, the first free lag-0 coefficient of ``B``
        is fixed to its nominal value.
        """
        L = m.L
        Dg_deg = np.array([m.Dg.entry(j, j).degree for j in range(L)])
        F_mask = m.F.coefs != 0
        F_mask[0] = False
        if F_mask.shape[0] == 1:
            F_mask = np.zeros((1, L, L), dtype=bool)
        from .polyalg import laplacian_split
        X, _ = laplacian_split(m.A)
        ground = np.diagonal(X.coefs, axis1=1, axis2=2).any(axis=0)
        s = cls(m.A.coefs != 0, m.B.coefs != 0, m.Ng.coefs != 0, Dg_deg, F_mask,
                np.zeros((1, 1)), np.ones(1), ground=ground, **kw)
        if Gamma is None:
            nA = s.A_params().nparams
            pb = s.B_params()
            theta_B = pb.values(m.B)
            lag0 = [p for p in range(pb.nparams) if pb.basis[p, 0].any()]
            if not lag0:
                raise ModelError("no lag-0 B coefficient available for the default constraint")
            Gamma = np.zeros((1, s.n_vartheta))
            Gamma[0, nA + lag0[0]] = 1.0
            gamma = np.array([theta_B[lag0[0]]])
        s.Gamma = np.atleast_2d(np.asarray(Gamma, dtype=float))
        s.gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
        return s

    def with_constraint(self, Gamma, gamma) -> "ModelStructure":
        return replace(self, Gamma=np.atleast_2d(Gamma), gamma=np.atleast_1d(gamma))


def _last_lag(mask: np.ndarray) -> int:
    lags = np.flatnonzero(mask.any(axis=(1, 2)))
    return int(lags[-1]) if lags.size else 0


def _row_normalized(G: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(G, axis=1, keepdims=True)
    return G / np.where(n > 0, n, 1.0)
