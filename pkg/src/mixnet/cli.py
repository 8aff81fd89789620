"""``mixnet`` command line: simulate, check, identify, montecarlo, msd-build.

Exit codes: 0 success, 1 validation or condition failure, 2 numerical failure.
Set ``MIXNET_LOG`` (e.g. ``INFO``, ``DEBUG``) for log output on stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .estim1 import InformativityError, estimate_breve
from .estim2 import IdentifiabilityError, StageError, map_to_physical
from .identcheck import check_identifiability, check_informativity
from .montecarlo import MonteCarloConfig, run_montecarlo
from .netmodel import ModelError, build_msd, freq_response
from .simkit import DataSet, ExcitationSpec, SimulationError, check_simulable, generate

log = logging.getLogger("mixnet")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_INVALID):
        super().__init__(message)
        self.code = code


def _read_config(path) -> dict:
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None


def _load(args, need_model: bool = False):
    path = args.model or getattr(args, "structure", None)
    if not path:
        raise CliError("--model or --structure is required")
    model, s = io.load_model(path)
    if args.model and getattr(args, "structure", None):
        _, s = io.load_model(args.structure)
    if need_model and model is None:
        raise CliError(f"{path} holds a structure only; a full model is required")
    return model, s


def _excitation(cfg: dict, seed: int) -> ExcitationSpec:
    ex = cfg.get("excitation", {})
    return ExcitationSpec(ex.get("kind", "white"), float(ex.get("variance", 1.0)),
                          tuple(ex.get("freqs", ())), int(ex.get("seed", seed)), ex.get("path"))


# -- subcommands -------------------------------------------------------------
def cmd_simulate(args) -> int:
    cfg = _read_config(args.config)
    model, _ = _load(args, need_model=True)
    try:
        check_simulable(model)
    except SimulationError as exc:
        raise CliError(str(exc)) from None
    seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
    N = args.N or int(cfg.get("N", 5000))
    spec = _excitation(cfg, seed)
    noise_seed = int(cfg.get("noise_seed", seed + 1))
    data = generate(model, N, spec, noise_seed, int(cfg.get("burn_in", 200)),
                    float(cfg.get("Ts", 1.0)), bool(cfg.get("noise", True)))
    out = Path(args.out or "data.csv")
    data.to_csv(out)
    print(json.dumps({"written": str(out), "N": data.N, "L": data.L, "K": data.K}))
    return EXIT_OK


def cmd_check(args) -> int:
    model, s = _load(args)
    rep = check_identifiability(s, args.target, model)
    doc = rep.to_dict()
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK if rep.holds else EXIT_INVALID


def _write_freqresp(path, model, data_K: int) -> None:
    fr = freq_response(model)
    L = fr.Twr.shape[1]
    header = ["omega"] + [f"Twr_{i + 1}{k + 1}_{p}" for i in range(L) for k in range(data_K)
                          for p in ("re", "im")]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for n, om in enumerate(fr.grid):
            row = [repr(float(om))]
            for i in range(L):
                for k in range(data_K):
                    v = fr.Twr[n, i, k]
                    row += [repr(float(v.real)), repr(float(v.imag))]
            wr.writerow(row)


def cmd_identify(args) -> int:
    model, s = _load(args)
    data = DataSet.from_csv(args.data)
    rep = check_identifiability(s, "original", model)
    info = check_informativity(data.r, s)
    if not rep.holds and not args.force:
        failing = [k for k, v in rep.conditions.items() if v["holds"] is False]
        raise CliError(f"structure fails identifiability conditions {failing}; use --force to override")
    out = Path(args.out or "identify_out")
    out.mkdir(parents=True, exist_ok=True)
    r1 = estimate_breve(data, s, args.arx_order, args.passes, args.weighting)
    io.save_json(out / "breve.json", io.breve_to_dict(r1.breve))
    diag = {"step1": _jsonable(r1.diagnostics), "informativity": info,
            "identifiability": rep.to_dict(), "normalization": _jsonable(r1.eta.normalization)}
    if not args.step1:
        est = map_to_physical(r1.breve, s, check=False)
        io.save_model(out / "model.json", est.model, s)
        diag["step2"] = _jsonable(est.diagnostics)
        diag["alpha"] = est.alpha
        diag["theta"] = dict(zip(s.theta_names(), est.theta.tolist()))
        _write_freqresp(out / "freqresp.csv", est.model, data.K)
    else:
        _write_freqresp(out / "freqresp.csv", r1.breve, data.K)
    io.save_json(out / "diagnostics.json", diag)
    print(json.dumps({"out": str(out), "step": "1" if args.step1 else "1+2"}))
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    cfg_d = _read_config(args.config)
    model, s = _load(args, need_model=True)
    fields = MonteCarloConfig.__dataclass_fields__
    kw = {k: v for k, v in cfg_d.items() if k in fields}
    for k in ("N_list", "freqs", "weightings"):
        if k in kw:
            kw[k] = tuple(kw[k])
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.workers:
        kw["workers"] = args.workers
    if args.weighting:
        kw["weightings"] = (args.weighting,)
    if args.arx_order:
        kw["arx_order"] = args.arx_order
    cfg = MonteCarloConfig(**kw)
    rep = check_identifiability(s, "original", model)
    ex = ExcitationSpec(cfg.excitation, cfg.variance, cfg.freqs)
    info = check_informativity(ex, s)
    if not args.force and (not rep.holds or not info["holds"]):
        raise CliError("identifiability or informativity gate failed; use --force to override")
    report = run_montecarlo(model, s, cfg)
    out = Path(args.out or "montecarlo_out")
    report.write(out)
    io.save_json(out / "report.json", _jsonable(report.to_dict()))
    print(json.dumps(report.summary, indent=2))
    return EXIT_OK


def cmd_msd_build(args) -> int:
    cfg = _read_config(args.config)
    if not cfg:
        raise CliError("msd-build needs --config with masses, dampers, springs")
    ctrl = {}
    for c in cfg.get("controllers", []):
        key = (int(c["to"]) - 1, int(c["from"]) - 1)
        ctrl[key] = (c.get("num", [c.get("gain", 1.0)]), c.get("den", [1.0]))
    model = build_msd(cfg["masses"], cfg["dampers"], cfg["springs"], cfg.get("ground_dampers"),
                      cfg.get("ground_springs"), cfg.get("inputs"), ctrl,
                      float(cfg.get("Ts", 0.05)), cfg.get("Lambda"))
    model.validate()
    out = Path(args.out or "model.json")
    io.save_model(out, model, name=cfg.get("name"), Ts=float(cfg.get("Ts", 0.05)))
    print(json.dumps({"written": str(out), "L": model.L, "K": model.K}))
    return EXIT_OK


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


# -- entry point -------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixnet", description="Identification of mixed linear dynamic networks")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, structure=True):
        sp.add_argument("--model", help="model JSON file")
        if structure:
            sp.add_argument("--structure", help="structure JSON file (overrides the model's)")
        sp.add_argument("--out", help="output path")

    sp = sub.add_parser("simulate", help="simulate a dataset from a model")
    common(sp, structure=False)
    sp.add_argument("--config", help="JSON with N, excitation, noise_seed, burn_in, noise")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--N", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("check", help="check identifiability conditions")
    common(sp)
    sp.add_argument("--target", choices=("original", "breve"), default="original")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("identify", help="estimate a model from data")
    common(sp)
    sp.add_argument("--data", required=True, help="dataset CSV")
    sp.add_argument("--arx-order", type=int)
    sp.add_argument("--passes", type=int, default=1, help="refinement passes")
    sp.add_argument("--weighting", choices=("identity", "inv-lambda"), default="inv-lambda")
    sp.add_argument("--force", action="store_true", help="run even if conditions fail")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--step1", action="store_true", help="polynomial-form model only")
    g.add_argument("--full", action="store_true", help="both steps (default)")
    sp.set_defaults(func=cmd_identify)

    sp = sub.add_parser("montecarlo", help="consistency experiment")
    common(sp)
    sp.add_argument("--config", help="JSON with N_list, runs, excitation, weightings, ...")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--arx-order", type=int)
    sp.add_argument("--weighting", choices=("identity", "inv-lambda"))
    sp.add_argument("--force", action="store_true")
    sp.set_defaults(func=cmd_montecarlo)

    sp = sub.add_parser("msd-build", help="build a mass-spring-damper model file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_msd_build)
    return p


def main(argv=None) -> int:
    level = os.environ.get("MIXNET_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (InformativityError, IdentifiabilityError, StageError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ModelError, SimulationError, ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
