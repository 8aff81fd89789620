"""Seeded excitation and noise generation, simulation and prediction errors."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .netmodel import BreveModel, MixedModel, ModelError, to_breve
from .polyalg import PolyMatrix

OVERFLOW = 1e12
DEFAULT_BURN_IN = 200


class SimulationError(RuntimeError):
    pass


@dataclass
class DataSet:
    w: np.ndarray
    r: np.ndarray
    e: np.ndarray | None = None
    Ts: float = 1.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = np.atleast_2d(np.asarray(self.w, dtype=float).T).T
        self.r = np.asarray(self.r, dtype=float).reshape(self.w.shape[0], -1)
        if self.e is not None:
            self.e = np.asarray(self.e, dtype=float).reshape(self.w.shape[0], -1)
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.r))):
            raise ValueError("dataset contains non-finite samples")

    @property
    def N(self) -> int:
        return self.w.shape[0]

    @property
    def L(self) -> int:
        return self.w.shape[1]

    @property
    def K(self) -> int:
        return self.r.shape[1]

    def to_csv(self, path, with_noise: bool = True) -> None:
        """Write ``t, w1..wL, r1..rK[, e1..eL]`` plus a JSON metadata sidecar."""
        path = Path(path)
        cols = [np.arange(self.N) * self.Ts, self.w, self.r]
        header = ["t"] + [f"w{j + 1}" for j in range(self.L)] + [f"r{k + 1}" for k in range(self.K)]
        if with_noise and self.e is not None:
            cols.append(self.e)
            header += [f"e{j + 1}" for j in range(self.L)]
        table = np.column_stack(cols)
        np.savetxt(path, table, delimiter=",", header=",".join(header), comments="", fmt="%.17g")
        meta = dict(self.meta, Ts=self.Ts, N=self.N, L=self.L, K=self.K)
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def from_csv(cls, path) -> "DataSet":
        path = Path(path)
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        idx = {name: k for k, name in enumerate(header)}
        w = table[:, [k for n, k in idx.items() if n.startswith("w")]]
        r = table[:, [k for n, k in idx.items() if n.startswith("r")]]
        ecols = [k for n, k in idx.items() if n.startswith("e")]
        e = table[:, ecols] if ecols else None
        meta = {}
        side = path.with_suffix(".json")
        if side.exists():
            meta = json.loads(side.read_text())
        Ts = float(meta.get("Ts", table[1, 0] - table[0, 0] if len(table) > 1 else 1.0))
        return cls(w, r, e, Ts, meta)


@dataclass
class ExcitationSpec:
    """``kind`` is ``white``, ``multisine`` or ``custom`` (CSV file, one column per input)."""

    kind: str = "white"
    variance: float = 1.0
    freqs: tuple = ()
    seed: int = 0
    path: str | None = None

    @property
    def n_freqs(self) -> int | None:
        return len(self.freqs) if self.kind == "multisine" else None


def gen_excitation(spec: ExcitationSpec, N: int, K: int) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    if spec.kind == "white":
        return np.sqrt(spec.variance) * rng.standard_normal((N, K))
    if spec.kind == "multisine":
        if len(spec.freqs) == 0:
            raise ValueError("multisine excitation needs at least one frequency")
        t = np.arange(N)[:, None]
        amp = np.sqrt(2 * spec.variance / len(spec.freqs))
        r = np.zeros((N, K))
        for w in spec.freqs:
            phase = rng.uniform(0, 2 * np.pi, size=K)
            r += amp * np.cos(w * t + phase)
        return r
    if spec.kind == "custom":
        r = np.loadtxt(spec.path, delimiter=",", ndmin=2)
        if r.shape[0] < N or r.shape[1] != K:
            raise ValueError(f"custom excitation file has shape {r.shape}, need ({N}, {K})")
        return r[:N]
    raise ValueError(f"unknown excitation kind {spec.kind!r}")


def noise_sqrt(Lambda) -> np.ndarray:
    lam = np.asarray(Lambda, dtype=float)
    vals, vecs = np.linalg.eigh((lam + lam.T) / 2)
    if vals.min() <= 0:
        raise ValueError("noise covariance must be positive definite")
    return vecs @ np.diag(np.sqrt(vals)) @ vecs.T


def gen_noise(Lambda, N: int, seed) -> np.ndarray:
    S = noise_sqrt(Lambda)
    rng = np.random.default_rng(seed)
    return rng.standard_normal((N, S.shape[0])) @ S


def _fir(P: PolyMatrix, x: np.ndarray) -> np.ndarray:
    """``y(t) = sum_l P_l x(t - l)`` with zero pre-sample values."""
    N = x.shape[0]
    y = np.zeros((N, P.shape[0]))
    for l in range(P.coefs.shape[0]):
        if l >= N:
            break
        if np.any(P.coefs[l]):
            y[l:] += x[: N - l] @ P.coefs[l].T
    return y


def _ar_solve(P: PolyMatrix, u: np.ndarray) -> np.ndarray:
    """Solve ``P(q^-1) y = u`` recursively with zero initial conditions."""
    N = u.shape[0]
    P0inv = np.linalg.inv(P[0])
    lags = [(l, P0inv @ P.coefs[l]) for l in range(1, P.coefs.shape[0]) if np.any(P.coefs[l])]
    v = u @ P0inv.T
    y = np.zeros_like(v)
    for t in range(N):
        acc = v[t].copy()
        for l, M in lags:
            if t >= l:
                acc -= M @ y[t - l]
        y[t] = acc
        if t % 1000 == 999 and np.abs(y[t - 999:t + 1]).max() > OVERFLOW:
            raise SimulationError(f"simulation diverged near sample {t} (|w| > {OVERFLOW:g}); "
                                  "the model is probably unstable")
    if N and np.abs(y).max() > OVERFLOW:
        raise SimulationError(f"simulation diverged (|w| > {OVERFLOW:g})")
    return y


def simulate(model, r: np.ndarray, e: np.ndarray | None = None, burn_in: int = 0) -> np.ndarray:
    """Time-domain recursion of the breve form from zero initial conditions."""
    b = model if isinstance(model, BreveModel) else to_breve(model)
    r = np.asarray(r, dtype=float).reshape(-1, b.K)
    u = _fir(b.Bb, r)
    if e is not None:
        u += _fir(b.Fb, np.asarray(e, dtype=float).reshape(-1, b.L))
    w = _ar_solve(b.Upsilon, u)
    return w[burn_in:]


def run_seed(seed: int, run: int) -> int:
    """Per-run seed derived from a base seed and a run index."""
    return int(np.random.SeedSequence([int(seed), int(run)]).generate_state(1)[0])


def model_hash(model) -> str:
    b = model if isinstance(model, BreveModel) else to_breve(model)
    h = hashlib.sha256()
    for a in (b.Ab.coefs, b.Bb.coefs, b.Gb.coefs, b.Fb.coefs, np.asarray(b.Lb)):
        h.update(np.ascontiguousarray(a).tobytes())
    return h.hexdigest()[:16]


def generate(model: MixedModel, N: int, excitation: ExcitationSpec, noise_seed: int | None,
             burn_in: int = DEFAULT_BURN_IN, Ts: float = 1.0, noise: bool = True) -> DataSet:
    """Simulate ``N`` post-burn-in samples of ``model`` under seeded excitation and noise."""
    total = N + burn_in
    r = gen_excitation(excitation, total, model.K)
    e = gen_noise(model.Lambda, total, noise_seed) if noise else np.zeros((total, model.L))
    w = simulate(model, r, e)
    meta = {"excitation": excitation.kind, "excitation_seed": excitation.seed,
            "noise_seed": noise_seed if noise else None, "burn_in": burn_in,
            "model_hash": model_hash(model)}
    if excitation.kind == "multisine":
        meta["n_freqs"] = len(excitation.freqs)
    return DataSet(w[burn_in:], r[burn_in:], e[burn_in:], Ts, meta)


def innovations(model, data: DataSet) -> np.ndarray:
    """``Fb^-1 (Upsilon w - Bb r)``: the white noise driving the data under ``model``."""
    b = model if isinstance(model, BreveModel) else to_breve(model)
    v = _fir(b.Upsilon, data.w) - _fir(b.Bb, data.r)
    try:
        return _ar_solve(b.Fb, v)
    except SimulationError as exc:
        raise SimulationError(f"noise filter inverse is unstable: {exc}") from None


def prediction_error(model, data: DataSet, S=None, skip: int | None = None):
    """One-step-ahead prediction errors and the weighted mean-square criterion.

    ``eps = Upsilon0^-1 Fb^-1 (Upsilon w - Bb r)``. The first ``skip`` samples
    (default: the model's breve degree) are excluded from the criterion.
    """
    b = model if isinstance(model, BreveModel) else to_breve(model)
    S = np.eye(b.L) if S is None else np.asarray(S, dtype=float)
    if np.min(np.linalg.eigvalsh((S + S.T) / 2)) <= 0:
        raise ValueError("weighting matrix S must be positive definite")
    eps = innovations(b, data) @ np.linalg.inv(b.Upsilon0).T
    if skip is None:
        skip = max(b.Upsilon.degree, b.Bb.degree, b.Fb.degree)
    tail = eps[skip:]
    crit = float(np.mean(np.einsum("ti,ij,tj->t", tail, S, tail))) if tail.size else 0.0
    return eps, crit


def whiteness_test(eps: np.ndarray, max_lag: int = 20) -> tuple[float, float]:
    """Multivariate portmanteau (Hosking) test; returns ``(statistic, p_value)``."""
    x = np.asarray(eps, dtype=float)
    x = x - x.mean(axis=0)
    N, L = x.shape
    C0 = x.T @ x / N
    C0inv = np.linalg.inv(C0)
    Q = 0.0
    for k in range(1, max_lag + 1):
        Ck = x[k:].T @ x[:-k] / N
        Q += np.trace(Ck.T @ C0inv @ Ck @ C0inv) / (N - k)
    Q *= N**2
    dof = L * L * max_lag
    return float(Q), float(stats.chi2.sf(Q, dof))


def cross_correlation_test(eps: np.ndarray, u: np.ndarray, lags=range(1, 21)) -> tuple[float, float]:
    """Chi-square test that ``eps(t)`` is uncorrelated with ``u(t - k)`` for the given lags."""
    e = np.asarray(eps, float) - np.mean(eps, axis=0)
    u = np.asarray(u, float) - np.mean(u, axis=0)
    N, L = e.shape
    M = u.shape[1]
    Ce = e.T @ e / N
    Cu = u.T @ u / N
    Q = 0.0
    lags = list(lags)
    for k in lags:
        R = e[k:].T @ u[:N - k] / N
        Q += N * np.trace(R.T @ np.linalg.solve(Ce, R) @ np.linalg.inv(Cu))
    return float(Q), float(stats.chi2.sf(Q, L * M * len(lags)))


def check_simulable(model: MixedModel, margin: float = 0.0) -> None:
    """Refuse models whose simulation would diverge."""
    try:
        model.validate(margin)
    except ModelError as exc:
        raise SimulationError(f"model rejected: {exc}") from None
