"""Inequality checks and certificates for the exponential bound on QET.

The pipeline is: per-outcome variational inequality, the trace-duality chain
over boundary terms, local trace-norm decay, a fitted clustering envelope
``c * exp(-dist / xi)``, and finally the certificates ``C * exp(-mu * d)``
(crude operator-norm route) and ``C_tilde * exp(-mu * d)`` (commutator route).
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as sl

from .linalg import PAULI, apply_local, embed_sparse, op_norm
from .model import Hamiltonian, Lattice, Region, boundary_sum, boundary_terms, region_distance
from .protocol import DISCARD_THRESHOLD, Decoder, KrausSet, OutcomeRecord, ProtocolError
from .spectral import DegenerateGroundState, GroundState, reduce, trace_norm

log = logging.getLogger(__name__)

ZERO_CORRELATION = 1e-12
MIN_R_SQUARED = 0.99
MIN_EFOLDS = 2.0


class ClusteringError(ValueError):
    pass


def _on_union(mat: np.ndarray, sites: Sequence[int], union: Region) -> np.ndarray:
    """Express a local matrix on the tensor factor of ``union``."""
    pos = [union.sites.index(s) for s in sites]
    return embed_sparse(mat, pos, len(union)).toarray()


# -- per-outcome inequalities -------------------------------------------------


@dataclass(frozen=True)
class VariationalCheck:
    lhs: float
    rhs: float
    dropped_term: float

    @property
    def slack(self) -> float:
        return self.rhs - self.lhs

    def holds(self, tol: float = 1e-9, dropped_tol: float = 1e-10) -> bool:
        return self.lhs <= self.rhs + tol and self.dropped_term <= dropped_tol


def _decoded(record: OutcomeRecord, D: Decoder, n: int) -> np.ndarray:
    if not 0 <= record.outcome_index < len(D):
        raise ProtocolError(f"outcome {record.outcome_index} has no decoder unitary")
    u = D.unitaries[record.outcome_index]
    phi = apply_local(u, D.region_B.sites, record.post_measurement, n)
    if not np.allclose(phi, record.post_decoding, rtol=0, atol=1e-10):
        raise ProtocolError("record was not produced with this decoder")
    return u


def variational_gap(H: Hamiltonian, gs: GroundState, record: OutcomeRecord, D: Decoder) -> VariationalCheck:
    """Compare ``Delta E_a`` with ``tr[(H - U^dag H U)(rho_a - omega)]``.

    The dropped term ``tr[(H - U^dag H U) omega]`` is returned too; ground-state
    minimality makes it non-positive.
    """
    n = gs.n_sites
    u = _decoded(record, D, n)
    B = D.region_B.sites
    udag = u.conj().T

    def conj_gap(v):
        return H.apply(v) - apply_local(udag, B, H.apply(apply_local(u, B, v, n)), n)

    psi, g = record.post_measurement, gs.state
    on_rho = float(np.vdot(psi, conj_gap(psi)).real)
    dropped = float(np.vdot(g, conj_gap(g)).real)
    lhs = record.injected_energy - record.final_energy
    return VariationalCheck(lhs, on_rho - dropped, dropped)


@dataclass(frozen=True)
class ChainTerm:
    label: str
    support: Region
    conjugation_norm: float
    trace_norm: float


@dataclass(frozen=True)
class ChainCheck:
    delta_E_a: float
    terms: tuple[ChainTerm, ...]

    @property
    def bound(self) -> float:
        return float(sum(t.conjugation_norm * t.trace_norm for t in self.terms))

    def holds(self, tol: float = 1e-9) -> bool:
        return self.delta_E_a <= self.bound + tol


def trace_duality_chain(H: Hamiltonian, gs: GroundState, record: OutcomeRecord, D: Decoder) -> ChainCheck:
    """Per boundary term: ``||U^dag h_X U - h_X||`` times ``||(rho_a - omega)_S||_1``.

    ``S = X u B`` is the support of ``U^dag h_X U - h_X``; for single-site B
    it coincides with X. Norms are taken on the local factor only, and the
    reductions come from partial traces of the full states.
    """
    n = gs.n_sites
    u = _decoded(record, D, n)
    B = D.region_B
    out = []
    for t in boundary_terms(H, B):
        S = t.support.union(B)
        h = _on_union(t.matrix, t.sites, S)
        uu = _on_union(u, B.sites, S)
        conj = op_norm(uu.conj().T @ h @ uu - h)
        diff = reduce(record.post_measurement, S, n).matrix - reduce(gs.state, S, n).matrix
        out.append(ChainTerm(t.label, S, conj, trace_norm(diff)))
    return ChainCheck(record.delta_E, tuple(out))


def local_trace_norm_profile(
    gs: GroundState, K: KrausSet, outcome: int, targets: Sequence[Region]
) -> list[tuple[int, float]]:
    """``(dist(A, X), ||(rho_a - omega)_X||_1)`` for each target region X."""
    lat = Lattice(gs.n_sites)
    A = K.region_A
    raw = apply_local(K.elements[outcome], A.sites, gs.state, gs.n_sites)
    p = float(np.vdot(raw, raw).real)
    if p < DISCARD_THRESHOLD:
        raise ProtocolError(f"outcome {outcome} has probability {p:.3e} below the discard threshold")
    psi = raw / math.sqrt(p)
    out = []
    for X in targets:
        if X.intersects(A):
            raise ValueError(f"target {X.sites} overlaps the measured region {A.sites}")
        diff = reduce(psi, X, gs.n_sites).matrix - reduce(gs.state, X, gs.n_sites).matrix
        out.append((region_distance(lat, A, X), trace_norm(diff)))
    return out


# -- clustering ---------------------------------------------------------------


def default_family() -> list[np.ndarray]:
    """Unit-norm single-site Hermitian basis (X, Y, Z); the identity has zero connected part."""
    return [PAULI["X"], PAULI["Y"], PAULI["Z"]]


def measure_clustering(
    gs: GroundState, distances: Sequence[int] | None = None, family: Sequence[np.ndarray] | None = None
) -> list[tuple[int, float]]:
    """Maximal single-site connected correlator at each separation.

    The maximum runs over all site pairs at that separation and all family
    pairs.
    """
    if gs.degeneracy_flag:
        raise DegenerateGroundState("clustering needs a unique gapped ground state")
    n = gs.n_sites
    family = default_family() if family is None else [np.asarray(f) for f in family]
    if distances is None:
        distances = range(1, n)
    g = gs.state
    applied = [[apply_local(o, [i], g, n) for o in family] for i in range(n)]
    adj = [[apply_local(o.conj().T, [i], g, n) for o in family] for i in range(n)]
    means = [[np.vdot(g, v) for v in row] for row in applied]
    out = []
    for d in distances:
        if not 1 <= d < n:
            raise ValueError(f"separation {d} impossible on {n} sites")
        best = 0.0
        for i in range(n - d):
            j = i + d
            for a in range(len(family)):
                for b in range(len(family)):
                    val = abs(np.vdot(adj[i][a], applied[j][b]) - means[i][a] * means[j][b])
                    best = max(best, float(val))
        out.append((int(d), best))
    return out


@dataclass(frozen=True)
class ClusterFit:
    """Envelope ``c * exp(-d / xi)`` dominating every windowed sample.

    A degenerate fit (all correlators zero) has ``c = 0`` and ``xi = nan``;
    callers branch on ``degenerate``.
    """

    c: float
    xi: float
    fit_window: tuple[int, int]
    r_squared: float
    samples: tuple[tuple[int, float], ...]
    regression_c: float = float("nan")
    degenerate: bool = False
    quality_warning: str | None = None

    @property
    def mu(self) -> float:
        return 1.0 / self.xi

    def envelope(self, d: float) -> float:
        return self.c * math.exp(-d / self.xi)

    def windowed(self) -> list[tuple[int, float]]:
        lo, hi = self.fit_window
        return [(d, v) for d, v in self.samples if lo <= d <= hi]

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["samples"] = [list(s) for s in self.samples]
        rec["fit_window"] = list(self.fit_window)
        return rec


def default_window(samples: Sequence[tuple[int, float]], range_r: int) -> tuple[int, int]:
    """Skip distances below ``range_r + 1`` and the two largest distances."""
    ds = sorted(d for d, _ in samples)
    if len(ds) < 3:
        raise ClusteringError("need at least 3 samples to choose a window")
    return (range_r + 1, ds[-3])


def fit_clustering(samples: Sequence[tuple[int, float]], window: tuple[int, int] | None = None, range_r: int = 1) -> ClusterFit:
    """Log-linear least squares, then inflate ``c`` until the envelope holds."""
    samples = tuple((int(d), float(v)) for d, v in samples)
    if window is None:
        window = default_window(samples, range_r)
    window = (int(window[0]), int(window[1]))
    inside = [(d, v) for d, v in samples if window[0] <= d <= window[1]]
    if inside and all(v <= ZERO_CORRELATION for _, v in inside):
        return ClusterFit(0.0, float("nan"), window, float("nan"), samples, 0.0, True, "all correlators vanish")
    usable = [(d, v) for d, v in inside if v > ZERO_CORRELATION]
    if len(usable) < 3:
        raise ClusteringError(f"only {len(usable)} positive samples in window {window}; need 3")
    ds = np.array([d for d, _ in usable], dtype=float)
    ys = np.log([v for _, v in usable])
    slope, intercept = (float(x) for x in np.polyfit(ds, ys, 1))
    if slope >= 0:
        raise ClusteringError(f"correlators do not decay in window {window} (slope {slope:.3g})")
    xi = -1.0 / slope
    pred = slope * ds + intercept
    ss_res = float(((ys - pred) ** 2).sum())
    ss_tot = float(((ys - ys.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    c0 = math.exp(intercept)
    ratio = max(v / (c0 * math.exp(-d / xi)) for d, v in inside)
    c = c0 * max(1.0, ratio)
    warning = None
    efolds = float(ds.max() - ds.min()) / xi
    if r2 < MIN_R_SQUARED:
        warning = f"poor log-linear fit (r^2 = {r2:.4f})"
    elif efolds < MIN_EFOLDS:
        warning = f"correlation length {xi:.3g} not resolved: {efolds:.2f} e-folds across window"
    if warning:
        log.warning("clustering fit: %s", warning)
    return ClusterFit(c, xi, window, r2, samples, c0, False, warning)


# -- certificates -------------------------------------------------------------


@dataclass(frozen=True)
class BoundCertificate:
    S_A: float
    S_B: float
    c: float
    xi: float
    range_r: int
    separation_d: int
    C: float
    mu: float
    C_tilde: float | None = None
    commutator_sums: tuple[float, ...] | None = None
    duhamel_pairs: tuple[tuple[int, str, float, float], ...] | None = field(default=None, repr=False)

    def bound(self, d: float | None = None) -> float:
        d = self.separation_d if d is None else d
        return self.C * math.exp(-self.mu * d)

    def refined_bound(self, d: float | None = None) -> float | None:
        if self.C_tilde is None:
            return None
        d = self.separation_d if d is None else d
        return self.C_tilde * math.exp(-self.mu * d)

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["commutator_sums"] = None if self.commutator_sums is None else list(self.commutator_sums)
        rec["duhamel_pairs"] = None if self.duhamel_pairs is None else [list(p) for p in self.duhamel_pairs]
        rec["bound"] = self.bound()
        rec["refined_bound"] = self.refined_bound()
        return rec


def kraus_effect_sum(K: KrausSet) -> float:
    """``S_A = sum_a ||M_a^dag M_a||``."""
    return float(sum(op_norm(e) for e in K.effects))


def main_certificate(fit: ClusterFit, K: KrausSet, H: Hamiltonian, A: Region, B: Region) -> BoundCertificate:
    """``C = 2 c S_A S_B exp(r / xi)`` and ``mu = 1 / xi``."""
    if fit.degenerate:
        raise ClusteringError("degenerate clustering fit: no certificate (correlators vanish)")
    if A.intersects(B):
        raise ValueError("regions A and B overlap")
    S_A = kraus_effect_sum(K)
    S_B = boundary_sum(H, B)
    d = region_distance(H.lattice, A, B)
    r = H.range_r
    C = 2.0 * fit.c * S_A * S_B * math.exp(r / fit.xi)
    return BoundCertificate(S_A, S_B, fit.c, fit.xi, r, d, C, 1.0 / fit.xi)


def duhamel_pair(G: np.ndarray, g_sites: Sequence[int], h: np.ndarray, h_sites: Sequence[int]) -> tuple[float, float]:
    """``(||U^dag h U - h||, ||[G, h]||)`` with ``U = exp(iG)``, on the joint support."""
    S = Region(tuple(g_sites) + tuple(h_sites))
    GG = _on_union(G, g_sites, S)
    hh = _on_union(h, h_sites, S)
    U = sl.expm(1j * GG)
    return op_norm(U.conj().T @ hh @ U - hh), op_norm(GG @ hh - hh @ GG)


def refined_certificate(
    fit: ClusterFit, K: KrausSet, D: Decoder, H: Hamiltonian, A: Region, B: Region
) -> BoundCertificate:
    """Main certificate plus ``C_tilde = c exp(r/xi) sum_a ||M_a^dag M_a|| sum_X ||[G_a, h_X]||``."""
    if D.generators is None:
        raise ValueError("refined certificate needs decoder generators")
    base = main_certificate(fit, K, H, A, B)
    terms = boundary_terms(H, B)
    sums, pairs = [], []
    for a, G in enumerate(D.generators):
        total = 0.0
        for t in terms:
            diff, comm = duhamel_pair(G, D.region_B.sites, t.matrix, t.sites)
            pairs.append((a, t.label, diff, comm))
            total += comm
        sums.append(total)
    weight = sum(op_norm(e) * s for e, s in zip(K.effects, sums))
    C_tilde = fit.c * math.exp(H.range_r / fit.xi) * weight
    return BoundCertificate(
        base.S_A, base.S_B, base.c, base.xi, base.range_r, base.separation_d, base.C, base.mu,
        C_tilde, tuple(sums), tuple(pairs),
    )


def geometric_margin(H: Hamiltonian, A: Region, B: Region, xi: float) -> float:
    """Smallest ``exp(r/xi - d/xi) - exp(-dist(A, X)/xi)`` over boundary terms X."""
    d = region_distance(H.lattice, A, B)
    cap = math.exp((H.range_r - d) / xi)
    return min(cap - math.exp(-region_distance(H.lattice, A, t.support) / xi) for t in boundary_terms(H, B))
