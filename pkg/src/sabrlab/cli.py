"""Command line entry point: ``sabrlab <experiment> [options]``.

Each run writes its artifacts plus ``manifest.json`` (artifact hashes,
config hash, timestamp) into ``--out``. Exit codes: 0 ok, 1 bad
configuration, 2 numerical domain error, 3 ``--check`` failed.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import io
import json
import logging
import math
import pathlib
import sys

import numpy as np

from .asymptotics import (
    absorption_probability,
    drifted_survival_probability,
    feller_boundary_class,
    mass_at_zero,
    race_survival_probability,
)
from .dirichlet import (
    EnergyKind,
    FormSpec,
    HamzaFamily,
    SpeedKind,
    Verdict,
    bump_field,
    classify_symmetrizable,
    hamza_closable,
    random_bump_pair,
    speed_density,
    symmetry_defect,
    witness_search,
)
from .errors import ConfigError, DomainError
from .process_models import ModelParams, State2
from .simulation import SeedSpec, TimeGrid, simulate_sabr_euler, write_paths_csv
from .time_change import equivalence_experiment
from .weights import GAP_TOL, subeigen_audit

log = logging.getLogger("sabrlab")

DEFAULTS = {
    "figure1": {"beta": 0.5, "rho": 0.9, "nu": 1.0, "x0": 1.0, "y0": 1.0, "T": 100.0, "dt": 0.01,
                "n_paths": 1000, "seed": 0, "export_paths": 10, "export_every": 100},
    "equivalence": {"beta": 0.0, "rho": 0.0, "nu": 1.0, "x0": 1.0, "y0": 1.0, "T": 1.0, "dt": 1e-4,
                    "n_paths": 20000, "seeds": [0, 1, 2, 3, 4], "drifted": False, "alpha": 0.01},
    "weights_audit": {"betas": [0.0, 0.5, 0.9], "rhos": [-0.9, 0.0, 0.9], "nu": 1.0, "grid_n": 100,
                      "grid_lo": 1e-3, "grid_hi": 1e3},
    "dirichlet_classify": {"betas": [0.0, 0.25, 0.5, 0.75, 1.0], "rhos": [-0.5, 0.0, 0.5], "nu": 1.0,
                           "trials": 50, "seed": 0, "resolution": 256},
    "closability": {"betas": [0.0, 0.25, 0.49, 0.5, 0.75, 1.0]},
    "absorption": {"beta": 0.5, "rho": 0.0, "nu": 1.0, "x0": 1.0, "y0": 1.0, "n_paths": 4000, "seed": 0,
                   "drifted": False, "dt": 1e-3, "horizon": 1e3},
    "boundary_class": {"betas": [0.0, 0.25, 0.5, 0.75, 0.9, 1.0, 1.5, 2.0]},
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sabrlab", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=sorted(DEFAULTS))
    ap.add_argument("--config", type=pathlib.Path, help="JSON file with experiment settings")
    ap.add_argument("--beta", type=float)
    ap.add_argument("--rho", type=float)
    ap.add_argument("--nu", type=float)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--n-paths", dest="n_paths", type=int)
    ap.add_argument("--out", type=pathlib.Path, default=pathlib.Path("sabrlab-out"))
    ap.add_argument("--check", action="store_true", help="evaluate the acceptance check; exit 3 on failure")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_config(args) -> dict:
    cfg = dict(DEFAULTS[args.experiment])
    if args.config is not None:
        try:
            loaded = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise ConfigError(f"unknown config keys for {args.experiment}: {sorted(unknown)}")
        cfg.update(loaded)
    for key in ("beta", "rho", "nu", "seed", "n_paths"):
        val = getattr(args, key)
        if val is None:
            continue
        if key == "beta" and "betas" in cfg:
            cfg["betas"] = [val]
        elif key == "rho" and "rhos" in cfg:
            cfg["rhos"] = [val]
        elif key == "seed" and "seeds" in cfg:
            cfg["seeds"] = [val]
        elif key in cfg:
            cfg[key] = val
        else:
            raise ConfigError(f"--{key.replace('_', '-')} does not apply to {args.experiment}")
    return cfg


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _params(cfg) -> ModelParams:
    return ModelParams(cfg["beta"], cfg["rho"], cfg.get("nu", 1.0))


# ----------------------------------------------------------- experiments


def run_figure1(cfg):
    p = _params(cfg)
    m = mass_at_zero(p, cfg["x0"], cfg["y0"], cfg["T"], cfg["dt"], cfg["n_paths"], cfg["seed"])
    grid = TimeGrid.from_step(cfg["T"], cfg["dt"])
    init = State2(cfg["x0"], cfg["y0"])
    buf = io.StringIO()
    paths = [simulate_sabr_euler(p, init, grid, SeedSpec(cfg["seed"], i)) for i in range(cfg["export_paths"])]
    write_paths_csv(paths, buf, every=cfg["export_every"])
    summary = {"params": dict(p.as_dict(), x0=cfg["x0"], y0=cfg["y0"], T=cfg["T"], dt=cfg["dt"]),
               "n": m.n, "absorbed_fraction": m.fraction, "ci": list(m.ci)}
    ok = 0.02 < m.fraction < 0.98
    return {"paths.csv": buf.getvalue(), "figure1.json": _dumps(summary)}, ok


def run_equivalence(cfg):
    rep = equivalence_experiment(
        _params(cfg), State2(cfg["x0"], cfg["y0"]), cfg["T"], cfg["dt"], cfg["n_paths"],
        cfg["seeds"], cfg["drifted"], cfg["alpha"],
    )
    return {"equivalence.json": _dumps(rep.to_dict())}, rep.passed


def run_weights_audit(cfg):
    out, ok = [], True
    for b in cfg["betas"]:
        for r in cfg["rhos"]:
            rep = subeigen_audit(ModelParams(b, r, cfg["nu"]), cfg["grid_n"], cfg["grid_lo"], cfg["grid_hi"])
            ok &= rep["min_gap"] >= -GAP_TOL
            out.append(rep)
    return {"weights_audit.json": _dumps(out)}, ok


def run_dirichlet_classify(cfg):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beta", "rho", "nu", "verdict", "defect", "tolerance"])
    ok = True
    rng = np.random.default_rng(cfg["seed"])
    for b in cfg["betas"]:
        for r in cfg["rhos"]:
            p = ModelParams(b, r, cfg["nu"])
            c = classify_symmetrizable(p)
            if c.density is not None:
                b1, b2 = random_bump_pair(rng)
                res = symmetry_defect(FormSpec(EnergyKind.SabrGamma, c.density, p), c.generator,
                                      bump_field(*b1), bump_field(*b2), ((1e-12, math.inf), (1e-12, math.inf)),
                                      cfg["resolution"])
                defect, tol = res.defect, res.tolerance
                ok &= res.small
            else:
                # smallest witness over the natural candidate densities
                wits = [witness_search(FormSpec(EnergyKind.SabrGamma, speed_density(k, p), p), c.generator,
                                       cfg["trials"], cfg["seed"], cfg["resolution"]) for k in (SpeedKind.M0, SpeedKind.M1)]
                wit = min(wits, key=lambda v: v.ratio)
                defect, tol = wit.defect, wit.tolerance
                ok &= wit.ratio >= 10
            w.writerow([repr(b), repr(r), repr(cfg["nu"]), c.verdict.value, repr(defect), repr(tol)])
    return {"classification.csv": buf.getvalue()}, ok


def run_closability(cfg):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["family", "beta", "closable", "singular_set", "radon", "varadhan_valid"])
    expected = {HamzaFamily.CevPower: 0.5, HamzaFamily.M0Slice: 1.0, HamzaFamily.M1Slice: 0.5}
    ok = True
    for fam in HamzaFamily:
        for b in cfg["betas"]:
            v = hamza_closable(fam, b)
            sing = "{0}" if v.singular_set else "{}"
            w.writerow([fam.value, repr(b), v.closable, sing, v.radon, "" if v.varadhan_valid is None else v.varadhan_valid])
            if fam in expected:
                ok &= v.closable == (b < expected[fam])
            else:
                ok &= v.closable and v.varadhan_valid == (b < 0.5)
    return {"closability.csv": buf.getvalue()}, ok


def run_absorption(cfg):
    p = _params(cfg)
    rep = absorption_probability(p, cfg["x0"], cfg["y0"], cfg["n_paths"], cfg["seed"], cfg["drifted"],
                                 dt=cfg["dt"], horizon=cfg["horizon"])
    out = rep.to_dict()
    oracle = None
    if cfg["drifted"] and p.beta < 1:
        oracle = drifted_survival_probability(p, cfg["x0"], cfg["y0"])
    elif not cfg["drifted"] and p.rho == 0 and p.beta < 1:
        oracle = race_survival_probability(p.beta, p.nu, cfg["x0"], cfg["y0"])
    out["oracle"] = oracle
    ok = rep.tail_fraction < 0.05
    if oracle is not None:
        se = math.sqrt(max(rep.p_hat * (1 - rep.p_hat), 1e-12) / max(rep.n, 1))
        ok &= abs(rep.p_hat - oracle) <= 4 * se + 0.02
    return {"absorption.json": _dumps(out)}, ok


def run_boundary_class(cfg):
    rows, ok = [], True
    for b in cfg["betas"]:
        v = feller_boundary_class(b)
        rows.append({"beta": b, "class": v.kind.value, "integral": v.integral if math.isfinite(v.integral) else "inf"})
        ok &= (v.kind.value == "NotEntrance") == (b <= 1)
        if b > 1:
            ok &= abs(v.integral - 1 / (2 * b - 2)) <= 1e-14
    return {"boundary_class.json": _dumps(rows)}, ok


RUNNERS = {
    "figure1": run_figure1,
    "equivalence": run_equivalence,
    "weights_audit": run_weights_audit,
    "dirichlet_classify": run_dirichlet_classify,
    "closability": run_closability,
    "absorption": run_absorption,
    "boundary_class": run_boundary_class,
}


def write_outputs(out_dir: pathlib.Path, experiment: str, cfg: dict, artifacts: dict, ok: bool) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(artifacts):
        data = artifacts[name].encode()
        (out_dir / name).write_bytes(data)
        entries.append({"name": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    manifest = {
        "experiment": experiment,
        "config": cfg,
        "config_hash": hashlib.sha256(canon.encode()).hexdigest(),
        "artifacts": entries,
        "check_passed": ok,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    (out_dir / "manifest.json").write_text(_dumps(manifest))
    return manifest


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        artifacts, ok = RUNNERS[args.experiment](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DomainError as exc:
        print(f"domain error: {exc}", file=sys.stderr)
        return 2
    except (KeyError, TypeError) as exc:
        print(f"config error: missing or malformed setting {exc}", file=sys.stderr)
        return 1
    write_outputs(args.out, args.experiment, cfg, artifacts, ok)
    if args.check:
        print(f"{args.experiment}: {'PASS' if ok else 'FAIL'}")
        if not ok:
            return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
