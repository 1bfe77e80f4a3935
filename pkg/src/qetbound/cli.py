"""Command line entry point: ``qetbound <command> --config FILE``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from .bounds import (
    ClusteringError,
    fit_clustering,
    measure_clustering,
    refined_certificate,
    trace_duality_chain,
    variational_gap,
)
from .config import ConfigError, ExperimentConfig, load_config
from .model import ModelError
from .optimize import instantiate, make_scheme
from .protocol import bookkeeping_check, run_protocol
from .spectral import SpectralError, solve_ground
from .sweep import BOUND_TOL, build_model, cluster, emit, prepare, run_sweep, single_point, to_csv, to_json

log = logging.getLogger("qetbound")


def _override(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = args.out
    if args.format is not None:
        changes["out_format"] = args.format
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _placement(cfg: ExperimentConfig, distance):
    places = cfg.placements()
    if distance is None:
        return places[0]
    for d, B in places:
        if d == distance:
            return d, B
    raise ConfigError(f"--distance {distance} is not among the configured separations {[d for d, _ in places]}")


def _default_params(scheme):
    return tuple(float(np.clip(0.0, lo, hi)) for lo, hi in scheme.parameter_bounds)


def _write(record: dict, args, cfg, stem: str) -> None:
    text = to_json(record)
    sys.stdout.write(text)
    if args.out is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{stem}.json").write_text(text)


def cmd_gap(cfg, args) -> int:
    H = build_model(cfg)
    gs = solve_ground(H)
    _write({"n_sites": H.n_sites, "model": cfg.model_name, "E0": gs.energy_E0, "gap": gs.gap_Delta,
            "degenerate": gs.degeneracy_flag, "solver": gs.method}, args, cfg, "gap")
    return 0


def _single_protocol(cfg, args):
    setup = prepare(cfg)
    d, B = _placement(cfg, args.distance)
    scheme = make_scheme(cfg.scheme, cfg.A, B)
    params = cfg.params if cfg.params is not None else _default_params(scheme)
    K, D = instantiate(scheme, params)
    return setup, d, B, scheme, params, K, D


def cmd_protocol(cfg, args) -> int:
    setup, d, B, scheme, params, K, D = _single_protocol(cfg, args)
    res = run_protocol(setup.H, setup.gs, K, D)
    residual = bookkeeping_check(res, setup.H, setup.gs, K, D)
    checks = [variational_gap(setup.H, setup.gs, r, D) for r in res.outcomes]
    chains = [trace_duality_chain(setup.H, setup.gs, r, D) for r in res.outcomes]
    ok = residual <= 1e-9 and all(c.holds() for c in checks) and all(c.holds() for c in chains)
    _write({
        "d": d, "region_B": list(B.sites), "scheme": scheme.to_record(), "params": list(params),
        "E_A": res.E_A, "E_B": res.E_B, "Delta_E": res.Delta_E, "discarded_probability": res.discarded_probability,
        "outcomes": [{"a": r.outcome_index, "p": r.probability, "injected": r.injected_energy,
                      "final": r.final_energy, "variational_lhs": v.lhs, "variational_rhs": v.rhs,
                      "dropped_term": v.dropped_term, "chain_bound": c.bound}
                     for r, v, c in zip(res.outcomes, checks, chains)],
        "bookkeeping_residual": residual, "checks_passed": ok,
    }, args, cfg, "protocol")
    return 0 if ok else 1


def cmd_clustering(cfg, args) -> int:
    setup = prepare(cfg)
    fit = fit_clustering(measure_clustering(setup.gs), cfg.window, setup.H.range_r)
    _write({"gap": setup.gs.gap_Delta, "fit": fit.to_record()}, args, cfg, "clustering")
    return 0


def cmd_bound(cfg, args) -> int:
    setup, d, B, scheme, params, K, D = _single_protocol(cfg, args)
    fit = cluster(setup, cfg)
    res = run_protocol(setup.H, setup.gs, K, D)
    if fit.degenerate:
        ok = res.Delta_E <= 1e-10
        _write({"d": d, "Delta_E": res.Delta_E, "certificate": None, "fit": fit.to_record(), "checks_passed": ok},
               args, cfg, "bound")
        return 0 if ok else 1
    cert = refined_certificate(fit, K, D, setup.H, cfg.A, B)
    ok = res.Delta_E <= cert.bound() + BOUND_TOL and res.Delta_E <= cert.refined_bound() + BOUND_TOL
    _write({"d": d, "params": list(params), "Delta_E": res.Delta_E, "certificate": cert.to_record(),
            "fit": fit.to_record(), "checks_passed": ok}, args, cfg, "bound")
    return 0 if ok else 1


def cmd_optimize(cfg, args) -> int:
    setup = prepare(cfg)
    d, B = _placement(cfg, args.distance)
    row = single_point(setup, cfg, None, d, B)
    _write(row.to_record(), args, cfg, "optimize")
    return 0


def cmd_sweep(cfg, args) -> int:
    report = run_sweep(cfg)
    path = emit(report, cfg.out_dir, cfg.out_format)
    log.info("wrote %s", path)
    sys.stdout.write(to_csv(report) if cfg.out_format == "csv" else to_json(report.to_record()))
    for w in report.warnings:
        log.warning(w)
    for v in report.violations:
        log.error("invariant violated: %s", v)
    return 0 if report.ok else 1


COMMANDS = {
    "gap": (cmd_gap, "solve the model and report E0 and the spectral gap"),
    "protocol": (cmd_protocol, "run one protocol and check its per-outcome inequalities"),
    "clustering": (cmd_clustering, "measure connected correlators and fit c, xi"),
    "bound": (cmd_bound, "certificates C, mu, C_tilde for one protocol"),
    "optimize": (cmd_optimize, "maximize extracted energy at one separation"),
    "sweep": (cmd_sweep, "full pipeline over all configured separations"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qetbound", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML experiment configuration")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory (overrides output.directory)")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        if name in ("protocol", "bound", "optimize"):
            p.add_argument("--distance", type=int, default=None, help="separation to use from the sweep list")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _override(load_config(args.config), args)
        return COMMANDS[args.command][0](cfg, args)
    except (ConfigError, ModelError, SpectralError, ClusteringError, OSError) as exc:
        print(f"qetbound: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
