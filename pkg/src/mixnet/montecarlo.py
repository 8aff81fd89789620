"""Monte Carlo consistency experiments: repeated simulate -> identify runs."""
from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .estim1 import estimate_breve
from .estim2 import map_to_physical
from .netmodel import MixedModel, to_breve
from .simkit import ExcitationSpec, generate, prediction_error
from .structure import ModelStructure

log = logging.getLogger(__name__)


@dataclass
class MonteCarloConfig:
    N_list: tuple = (1000, 4000, 16000)
    runs: int = 50
    seed: int = 0
    excitation: str = "white"
    variance: float = 1.0
    freqs: tuple = ()
    weightings: tuple = ("inv-lambda",)
    arx_order: int | None = None
    passes: int = 1
    noise: bool = True
    burn_in: int = 200
    workers: int = 1


def run_seeds(seed: int, N: int, run: int) -> tuple[int, int]:
    """Excitation and noise seeds for one replication."""
    ss = np.random.SeedSequence([int(seed), int(N), int(run)])
    a, b = ss.spawn(2)
    return int(a.generate_state(1)[0]), int(b.generate_state(1)[0])


def eta_error(eta_hat: np.ndarray, eta0: np.ndarray) -> float:
    """Relative error after removing the best scalar rescaling of the truth."""
    a = float(eta_hat @ eta0 / (eta0 @ eta0))
    return float(np.linalg.norm(eta_hat - a * eta0) / np.linalg.norm(a * eta0))


def theta_error(theta_hat: np.ndarray, theta0: np.ndarray) -> float:
    return float(np.linalg.norm(theta_hat - theta0) / np.linalg.norm(theta0))


def run_one(model: MixedModel, s: ModelStructure, cfg: MonteCarloConfig, N: int, run: int) -> list[dict]:
    ex_seed, noise_seed = run_seeds(cfg.seed, N, run)
    spec = ExcitationSpec(cfg.excitation, cfg.variance, tuple(cfg.freqs), ex_seed)
    theta0 = s.theta_from_model(model)
    eta0 = s.eta_from_breve(to_breve(model))
    out = []
    try:
        data = generate(model, N, spec, noise_seed, cfg.burn_in, noise=cfg.noise)
    except Exception as exc:  # recorded, batch continues
        return [dict(N=N, run=run, weighting=w, ok=False, error=f"simulate: {exc}") for w in cfg.weightings]
    for w in cfg.weightings:
        rec = dict(N=N, run=run, weighting=w)
        try:
            r1 = estimate_breve(data, s, cfg.arx_order, cfg.passes, w)
            est = map_to_physical(r1.breve, s, check=False)
            _, crit = prediction_error(est.model, data)
            rec.update(ok=True, theta_error=theta_error(est.theta, theta0),
                       eta_error=eta_error(r1.eta.eta, eta0), criterion=crit, alpha=est.alpha,
                       residual_2a=est.diagnostics["2a"]["residual"],
                       residual_2b=est.diagnostics["2b"]["residual"],
                       residual_2d=est.diagnostics["2d"]["residual"])
        except Exception as exc:
            rec.update(ok=False, error=f"{type(exc).__name__}: {exc}")
        out.append(rec)
    return out


def _task(args):
    return run_one(*args)


@dataclass
class MonteCarloReport:
    config: dict
    records: list = field(default_factory=list)
    summary: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"config": self.config, "summary": self.summary, "records": self.records}

    def write(self, outdir) -> None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        keys = ["N", "run", "weighting", "ok", "theta_error", "eta_error", "criterion", "alpha",
                "residual_2a", "residual_2b", "residual_2d", "error"]
        with open(outdir / "runs.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, keys, extrasaction="ignore")
            wr.writeheader()
            for r in self.records:
                wr.writerow({k: _fmt(r.get(k, "")) for k in keys})
        skeys = list(self.summary[0]) if self.summary else []
        with open(outdir / "summary.csv", "w", newline="") as fh:
            wr = csv.DictWriter(fh, skeys)
            wr.writeheader()
            for r in self.summary:
                wr.writerow({k: _fmt(v) for k, v in r.items()})


def _fmt(v):
    return repr(v) if isinstance(v, float) else v


def summarize(records: list[dict]) -> list[dict]:
    rows = []
    for key in sorted({(r["N"], r["weighting"]) for r in records}):
        sel = [r for r in records if (r["N"], r["weighting"]) == key]
        ok = [r for r in sel if r["ok"]]
        te = np.array([r["theta_error"] for r in ok]) if ok else np.array([np.nan])
        ee = np.array([r["eta_error"] for r in ok]) if ok else np.array([np.nan])
        rows.append({"N": key[0], "weighting": key[1], "runs": len(sel), "failed": len(sel) - len(ok),
                     "theta_median": float(np.median(te)), "theta_q25": float(np.quantile(te, 0.25)),
                     "theta_q75": float(np.quantile(te, 0.75)), "theta_max": float(te.max()),
                     "eta_median": float(np.median(ee))})
    return rows


def run_montecarlo(model: MixedModel, s: ModelStructure, cfg: MonteCarloConfig) -> MonteCarloReport:
    """All ``(N, run)`` replications; results merged in ``(N, run)`` order."""
    tasks = [(model, s, cfg, int(N), run) for N in cfg.N_list for run in range(cfg.runs)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            chunks = list(pool.map(_task, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
    else:
        chunks = [_task(t) for t in tasks]
    records = sorted((r for c in chunks for r in c), key=lambda r: (r["N"], r["run"], r["weighting"]))
    for r in records:
        if not r["ok"]:
            log.warning("run N=%d #%d (%s) failed: %s", r["N"], r["run"], r["weighting"], r["error"])
    return MonteCarloReport(asdict(cfg), records, summarize(records))
