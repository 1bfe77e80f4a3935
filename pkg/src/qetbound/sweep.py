"""Distance sweeps: optimize extraction at each separation and certify it."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .bounds import ClusterFit, fit_clustering, main_certificate, measure_clustering, refined_certificate
from .config import ExperimentConfig
from .model import Hamiltonian, Region, build_chain
from .optimize import instantiate, make_scheme, maximize_extraction
from .protocol import run_protocol
from .spectral import GroundState, shift_to_zero, solve_ground

log = logging.getLogger(__name__)

CSV_COLUMNS = ("d", "delta_E_best", "C", "mu", "C_tilde", "bound", "slack", "p_discarded")
BOUND_TOL = 1e-9
PASSIVE_TOL = 1e-10
REPRO_TOL = 1e-10
NOT_APPLICABLE = "NA"


@dataclass
class Setup:
    """Model instance solved once and shared by every sweep point."""

    H: Hamiltonian
    gs: GroundState
    H0: Hamiltonian


def build_model(cfg: ExperimentConfig) -> Hamiltonian:
    return build_chain(cfg.n_sites, cfg.model_name, **cfg.model_params)


def prepare(cfg: ExperimentConfig) -> Setup:
    """Build, solve and shift; raises on a degenerate ground level."""
    H0 = build_model(cfg)
    gs = solve_ground(H0)
    return Setup(shift_to_zero(H0, gs), gs, H0)


def cluster(setup: Setup, cfg: ExperimentConfig) -> ClusterFit:
    samples = measure_clustering(setup.gs)
    return fit_clustering(samples, cfg.window, setup.H.range_r)


@dataclass
class SweepRow:
    d: int
    region_B: tuple[int, ...]
    delta_E_best: float
    best_parameters: tuple[float, ...]
    p_discarded: float
    evaluations: int
    C: float | None = None
    mu: float | None = None
    C_tilde: float | None = None
    bound: float | None = None
    refined_bound: float | None = None

    @property
    def slack(self) -> float | None:
        return None if self.bound is None else self.bound - self.delta_E_best

    def to_record(self) -> dict:
        return {
            "d": self.d,
            "region_B": list(self.region_B),
            "delta_E_best": self.delta_E_best,
            "best_parameters": list(self.best_parameters),
            "evaluations": self.evaluations,
            "C": self.C,
            "mu": self.mu,
            "C_tilde": self.C_tilde,
            "bound": self.bound,
            "refined_bound": self.refined_bound,
            "slack": self.slack,
            "p_discarded": self.p_discarded,
        }


@dataclass
class SweepReport:
    rows: list[SweepRow]
    metadata: dict
    warnings: list[str] = field(default_factory=list)
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_record(self) -> dict:
        return {
            "metadata": self.metadata,
            "rows": [r.to_record() for r in self.rows],
            "warnings": list(self.warnings),
            "violations": list(self.violations),
        }


def single_point(setup: Setup, cfg: ExperimentConfig, fit: ClusterFit | None, d: int, B: Region) -> SweepRow:
    """Optimize at one placement of B and attach the certificates."""
    A = cfg.A
    scheme = make_scheme(cfg.scheme, A, B)
    opt = maximize_extraction(setup.H, setup.gs, A, B, scheme, cfg.budget, cfg.seed, cfg.restarts)
    K, D = instantiate(scheme, opt.best_parameters)
    res = run_protocol(setup.H, setup.gs, K, D)
    row = SweepRow(d, B.sites, opt.best_Delta_E, opt.best_parameters, res.discarded_probability, opt.evaluations)
    if abs(res.Delta_E - opt.best_Delta_E) > REPRO_TOL:
        raise RuntimeError(f"d={d}: re-evaluation gives {res.Delta_E!r}, optimizer reported {opt.best_Delta_E!r}")
    if fit is not None and not fit.degenerate:
        cert = refined_certificate(fit, K, D, setup.H, A, B)
        row.C, row.mu, row.C_tilde = cert.C, cert.mu, cert.C_tilde
        row.bound, row.refined_bound = cert.bound(), cert.refined_bound()
    return row


def run_sweep(cfg: ExperimentConfig) -> SweepReport:
    """Shared clustering fit, then one optimized row per separation."""
    setup = prepare(cfg)
    fit = cluster(setup, cfg)
    report = SweepReport([], metadata(cfg, setup, fit))
    if fit.quality_warning:
        report.warnings.append(f"clustering fit: {fit.quality_warning}")
    for d, B in cfg.placements():
        log.info("separation d=%d, B=%s", d, B.sites)
        row = single_point(setup, cfg, fit, d, B)
        report.rows.append(row)
        if fit.degenerate:
            if row.delta_E_best > PASSIVE_TOL:
                report.violations.append(f"d={d}: zero-correlation model extracted {row.delta_E_best:.3e}")
            continue
        if row.slack < -BOUND_TOL:
            report.violations.append(f"d={d}: Delta_E {row.delta_E_best:.6e} exceeds C*exp(-mu*d) = {row.bound:.6e}")
        if row.refined_bound - row.delta_E_best < -BOUND_TOL:
            report.violations.append(f"d={d}: Delta_E {row.delta_E_best:.6e} exceeds C_tilde*exp(-mu*d) = {row.refined_bound:.6e}")
    report.rows.sort(key=lambda r: r.d)
    return report


def metadata(cfg: ExperimentConfig, setup: Setup, fit: ClusterFit) -> dict:
    return {
        "tool": "qetbound",
        "version": __version__,
        "model": cfg.model_name,
        "model_params": cfg.model_params,
        "n_sites": cfg.n_sites,
        "region_A": list(cfg.region_A),
        "J": setup.H.J,
        "range_r": setup.H.range_r,
        "E0": setup.gs.energy_E0,
        "gap": setup.gs.gap_Delta,
        "solver": setup.gs.method,
        "scheme": cfg.scheme,
        "budget": cfg.budget,
        "restarts": cfg.restarts,
        "seed": cfg.seed,
        "clustering": fit.to_record(),
    }


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x) if math.isfinite(x) else str(x)
    return str(x)


def to_csv(report: SweepReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    degenerate = report.metadata["clustering"]["degenerate"]
    for r in report.rows:
        na = NOT_APPLICABLE if degenerate else None
        w.writerow([
            r.d, _cell(r.delta_E_best), _cell(r.C) or na, _cell(r.mu) or na, _cell(r.C_tilde) or na,
            _cell(r.bound) or na, _cell(r.slack) or na, _cell(r.p_discarded),
        ])
    return buf.getvalue()


def _clean(obj):
    """Replace non-finite floats so the JSON record stays standard."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def to_json(record: dict) -> str:
    return json.dumps(_clean(record), indent=2, sort_keys=True) + "\n"


def emit(report: SweepReport, out_dir, fmt: str = "csv", stem: str = "sweep") -> Path:
    """Write the report as ``<stem>.csv`` or ``<stem>.json`` under ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    if fmt == "csv":
        path, text = out / f"{stem}.csv", to_csv(report)
    elif fmt == "json":
        path, text = out / f"{stem}.json", to_json(report.to_record())
    else:
        raise ValueError(f"unknown format {fmt!r}")
    path.write_text(text)
    return path
