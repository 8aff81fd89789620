"""Executable identifiability and informativity checks on a model structure."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from .netmodel import MixedModel, to_breve
from .polyalg import PolyMatrix, polymat_det, polymat_eval
from .structure import ModelStructure, _row_normalized

COPRIME_TOL = 1e-8
RANK_TOL = 1e-10
PSD_TOL = 1e-8
INFO_MARGIN = 2


@dataclass
class ConditionReport:
    target: str
    conditions: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        """True when no condition is known to fail (``None`` verdicts do not count)."""
        return all(v["holds"] is not False for v in self.conditions.values())

    def to_dict(self) -> dict:
        return {"target": self.target, "identifiable": self.holds, "conditions": self.conditions}


# -- condition (2): diagonal permutation ------------------------------------
def _stacked_masks(s: ModelStructure, target: str) -> list[np.ndarray]:
    """Per-lag support blocks, first of the ``Upsilon`` part and then of ``B``."""
    if target == "breve":
        m = s.breve_masks()
        ups, bm = m["Ab"], m["Bb"]
        nl = max(ups.shape[0], m["Gb"].shape[0])
        u = np.zeros((nl,) + ups.shape[1:], dtype=bool)
        u[: ups.shape[0]] |= ups
        u[: m["Gb"].shape[0]] |= m["Gb"]
        ups = u
    else:
        nl = max(s.A_mask.shape[0], s.Ng_mask.shape[0])
        ups = np.zeros((nl, s.L, s.L), dtype=bool)
        ups[: s.A_mask.shape[0]] |= s.A_mask
        ups[: s.Ng_mask.shape[0]] |= s.Ng_mask
        bm = s.B_mask
    return [ups[l] for l in range(ups.shape[0])] + [bm[l] for l in range(bm.shape[0])]


def _column_labels(s: ModelStructure, target: str) -> list[str]:
    blocks = _stacked_masks(s, target)
    n_ups = len(blocks) - (s.breve_masks()["Bb"].shape[0] if target == "breve" else s.B_mask.shape[0])
    ups_name = "Upsilon_breve" if target == "breve" else "Upsilon"
    labels = []
    for b, M in enumerate(blocks):
        name, lag = (ups_name, b) if b < n_ups else ("B", b - n_ups)
        labels += [f"{name}[{lag}] col {c + 1}" for c in range(M.shape[1])]
    return labels


def admissible_columns(s: ModelStructure, target: str = "original") -> dict[int, list[int]]:
    """For each row ``j``: indices of stacked columns whose support is exactly ``{j}``."""
    cols = np.hstack(_stacked_masks(s, target))
    out = {j: [] for j in range(s.L)}
    for c in range(cols.shape[1]):
        sup = np.flatnonzero(cols[:, c])
        if sup.size == 1:
            out[int(sup[0])].append(c)
    return out


def diagonal_matching(s: ModelStructure, target: str = "original"):
    """Lexicographically smallest choice of one admissible column per row, or ``None``.

    Admissible columns have singleton support, so distinct rows never compete for
    a column and the matching reduces to picking the first candidate per row.
    """
    adm = admissible_columns(s, target)
    if any(not v for v in adm.values()):
        return None
    return [adm[j][0] for j in range(s.L)]


def brute_force_matching(s: ModelStructure, target: str = "original"):
    """Oracle: enumerate all ``L``-column subsets and orderings (small ``L`` only)."""
    cols = np.hstack(_stacked_masks(s, target)).astype(bool)
    L = s.L
    for combo in itertools.combinations(range(cols.shape[1]), L):
        sub = cols[:, combo]
        for perm in itertools.permutations(range(L)):
            D = sub[:, perm]
            if np.array_equal(D, np.eye(L, dtype=bool)):
                return sorted(combo)
    return None


# -- condition (1): coprimeness -------------------------------------------
def _minors(M: PolyMatrix, L: int):
    """All ``L x L`` polynomial minors of a wide ``L x n`` polynomial matrix."""
    n = M.shape[1]
    for cols in itertools.combinations(range(n), L):
        yield cols, polymat_det(PolyMatrix(M.coefs[:, :, list(cols)]))


def left_coprime(M: PolyMatrix, tol: float = COPRIME_TOL):
    """Numerical left-coprimeness test for a wide polynomial matrix in ``q^-1``.

    Candidate common roots are the roots (in ``lambda = q^-1``) of the lowest-degree
    nonzero maximal minor; ``M`` is coprime iff it keeps full row rank at each.
    Returns ``(verdict, witness)``.
    """
    L = M.shape[0]
    best = None
    for cols, d in _minors(M, L):
        if d.is_zero():
            continue
        if best is None or d.degree < best[1].degree:
            best = (cols, d)
    if best is None:
        return False, {"reason": "all maximal minors vanish (rank deficient)"}
    cols, d = best
    if d.degree <= 0:
        return True, {"minor_columns": list(cols), "reason": "constant nonzero minor"}
    lam_roots = np.roots(d.coeffs[::-1])
    scale = max(np.abs(M.coefs).max(), 1e-300)
    worst = None
    for lam in lam_roots:
        Mv = np.tensordot(lam ** np.arange(M.coefs.shape[0]), M.coefs, axes=(0, 0))
        smin = np.linalg.svd(Mv, compute_uv=False)[-1] / scale
        if worst is None or smin < worst[1]:
            worst = (lam, smin)
        if smin < tol:
            return False, {"common_root_lambda": [float(lam.real), float(lam.imag)],
                           "sigma_min": float(smin)}
    return True, {"minor_columns": list(cols), "min_sigma_at_minor_roots": float(worst[1])}


def coprimeness_matrix(model: MixedModel, target: str = "original") -> PolyMatrix:
    if target == "breve":
        b = to_breve(model)
        return PolyMatrix(np.concatenate([b.Upsilon.padded(max(b.Upsilon.coefs.shape[0], b.Bb.coefs.shape[0])),
                                          b.Bb.padded(max(b.Upsilon.coefs.shape[0], b.Bb.coefs.shape[0]))], axis=2))
    nl = max(model.A.coefs.shape[0], model.Ng.coefs.shape[0], model.B.coefs.shape[0])
    return PolyMatrix(np.concatenate([model.A.padded(nl), model.Ng.padded(nl), model.B.padded(nl)], axis=2))


# -- main report -----------------------------------------------------------
def check_identifiability(s: ModelStructure, target: str = "original",
                          model: MixedModel | None = None) -> ConditionReport:
    if target not in ("original", "breve"):
        raise ValueError("target must be 'original' or 'breve'")
    rep = ConditionReport(target)
    c = rep.conditions

    if model is None:
        c["coprimeness"] = {"holds": None, "witness": "not checkable structurally; supply a nominal model"}
    else:
        ok, wit = left_coprime(coprimeness_matrix(model, target))
        c["coprimeness"] = {"holds": ok, ("witness" if ok else "counterexample"): wit}

    match = diagonal_matching(s, target)
    labels = _column_labels(s, target)
    if match is not None:
        c["diagonal_permutation"] = {"holds": True, "witness": {
            f"row {j + 1}": labels[col] for j, col in enumerate(match)}}
    else:
        adm = admissible_columns(s, target)
        missing = [j + 1 for j, v in adm.items() if not v]
        c["diagonal_permutation"] = {"holds": False, "counterexample": {
            "rows_without_admissible_column": missing}}

    c["excitation"] = ({"holds": True, "witness": {"K": s.K}} if s.K >= 1
                       else {"holds": False, "counterexample": "no excitation (K = 0)"})

    G = _row_normalized(s.Gamma)
    sv = np.linalg.svd(G, compute_uv=False) if G.size else np.zeros(0)
    rank = int(np.sum(sv > RANK_TOL * max(sv.max(initial=0.0), 1e-300)))
    full = rank == s.Gamma.shape[0] and s.Gamma.shape[0] > 0
    nonzero = bool(np.any(s.gamma != 0))
    info = {"rank": rank, "rows": int(s.Gamma.shape[0]), "gamma_nonzero": nonzero}
    c["constraint"] = {"holds": full and nonzero, ("witness" if full and nonzero else "counterexample"): info}

    c["known_G_structure"] = ({"holds": True, "witness": "G mask marked known"} if s.G_known
                              else {"holds": False, "counterexample": "G mask not marked known"})

    Gm = s.G_mask
    pairs = [(int(i) + 1, int(j) + 1) for i, j in zip(*np.nonzero(Gm & Gm.T)) if i < j]
    if not pairs:
        c["one_directional"] = {"holds": True, "witness": "no bidirectional pair"}
    elif s.relaxed_cond6:
        rel = check_relaxed_cond6(s)
        bad = {k: v for k, v in rel.items() if v["clause"] is None}
        c["one_directional"] = {"holds": not bad, "relaxed": True,
                                ("witness" if not bad else "counterexample"): rel}
    else:
        c["one_directional"] = {"holds": False, "counterexample": {"bidirectional_pairs": pairs}}
    return rep


def check_relaxed_cond6(s: ModelStructure) -> dict:
    """Which relaxation clause, if any, admits each structurally nonzero ``G_ij``.

    Clause 1: ``G_ji = 0``. Clause 2: node ``i`` has no ground connection and
    ``G_ik = 0`` for every ``k != j`` with ``G_ki != 0``. Clause 3: the same with
    the roles of ``i`` and ``j`` swapped.
    """
    G = s.G_mask
    L = s.L
    ground = s.ground if s.ground is not None else np.ones(L, dtype=bool)
    out = {}

    def clause_ok(a, b):
        if ground[a]:
            return False
        return all(not G[a, k] for k in range(L) if k != b and G[k, a])

    for i, j in zip(*np.nonzero(G)):
        i, j = int(i), int(j)
        if not G[j, i]:
            clause = 1
        elif clause_ok(i, j):
            clause = 2
        elif clause_ok(j, i):
            clause = 3
        else:
            clause = None
        out[f"G{i + 1}{j + 1}"] = {"clause": clause, "ground_i": bool(ground[i]),
                                   "ground_j": bool(ground[j])}
    return out


# -- informativity ----------------------------------------------------------
def required_frequencies(s: ModelStructure, margin: int = INFO_MARGIN) -> int:
    nparams = int(np.count_nonzero(np.hstack(_stacked_masks(s, "original"))))
    return math.ceil(nparams / (2 * max(s.K, 1))) + margin


def empirical_spectrum(r: np.ndarray, nperseg: int = 256):
    """Welch cross-spectral density matrix of ``r`` (``N x K``) on ``[0, pi]``."""
    r = np.asarray(r, dtype=float)
    N, K = r.shape
    nper = min(nperseg, N)
    freqs, _ = signal.csd(r[:, 0], r[:, 0], nperseg=nper)
    Phi = np.zeros((freqs.size, K, K), dtype=complex)
    for a in range(K):
        for b in range(K):
            _, Phi[:, a, b] = signal.csd(r[:, a], r[:, b], nperseg=nper)
    return 2 * np.pi * freqs, Phi


def check_informativity(excitation, s: ModelStructure, margin: int = INFO_MARGIN,
                        tol: float = PSD_TOL) -> dict:
    """Count frequencies where the excitation spectrum is positive definite.

    ``excitation`` is an ``ExcitationSpec``, an ``N x K`` signal array, or a
    ``(freqs, Phi)`` pair with ``Phi`` of shape ``(nfreq, K, K)``.
    """
    required = required_frequencies(s, margin)
    rule = f"ceil(#free coefficients in [Upsilon, B] / (2K)) + {margin}"
    base = {"required": required, "rule": rule}
    if s.K == 0:
        return dict(base, holds=False, count=0, reason="no excitation (K = 0)")
    kind = getattr(excitation, "kind", None)
    if kind == "white":
        if excitation.variance <= 0:
            return dict(base, holds=False, count=0, reason="zero-variance white excitation")
        return dict(base, holds=True, count="all", reason="white excitation has full-rank spectrum")
    if kind == "multisine":
        # each sinusoid contributes a rank-one spectral line; K independent phases per line
        n = len(excitation.freqs) if excitation.variance > 0 else 0
        count = n if s.K == 1 else 0
        if s.K > 1:
            reason = "multisine with a shared frequency set gives rank-one lines for K > 1"
        else:
            reason = f"{n} spectral lines"
        return dict(base, holds=count >= required, count=count, reason=reason)
    if isinstance(excitation, tuple):
        _, Phi = excitation
    else:
        _, Phi = empirical_spectrum(np.asarray(excitation).reshape(len(excitation), -1))
    scale = max(np.abs(Phi).max(), 1e-300)
    mins = np.array([np.linalg.eigvalsh((P + P.conj().T) / 2).min() for P in Phi])
    count = int(np.sum(mins > tol * scale))
    return dict(base, holds=count >= required, count=count,
                reason=f"{count} of {len(Phi)} grid frequencies with positive definite spectrum")
