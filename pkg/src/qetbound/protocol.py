"""Measurement at A, classical communication, conditional unitary at B.

The ground state is pure and every Kraus map sends pure states to pure
states, so outcome records carry state vectors. Density operators are built
only on request (``OutcomeRecord.rho`` / ``sigma``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
import scipy.linalg as sl

from .linalg import apply_local, is_hermitian, op_norm
from .model import Hamiltonian, Region, boundary_terms
from .spectral import GroundState

DISCARD_THRESHOLD = 1e-12
COMPLETENESS_TOL = 1e-10
UNITARY_TOL = 1e-10
DENSITY_MAX_SITES = 12


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class KrausSet:
    """Alice's measurement: Kraus matrices on the tensor factor of ``region_A``."""

    region_A: Region
    elements: tuple[np.ndarray, ...] = field(repr=False)

    def __init__(self, region_A: Region, elements: Sequence[np.ndarray]):
        object.__setattr__(self, "region_A", region_A)
        object.__setattr__(self, "elements", tuple(np.asarray(m) for m in elements))

    def __len__(self):
        return len(self.elements)

    @cached_property
    def effects(self) -> tuple[np.ndarray, ...]:
        """POVM effects ``M_a^dag M_a``."""
        return tuple(m.conj().T @ m for m in self.elements)

    @cached_property
    def norm_bound_m(self) -> float:
        return max(op_norm(m) for m in self.elements)


@dataclass(frozen=True)
class Decoder:
    """Bob's outcome-indexed unitaries on ``region_B``, optionally with generators."""

    region_B: Region
    unitaries: tuple[np.ndarray, ...] = field(repr=False)
    generators: tuple[np.ndarray, ...] | None = field(default=None, repr=False)

    def __init__(self, region_B: Region, unitaries: Sequence[np.ndarray], generators=None, check: bool = True):
        object.__setattr__(self, "region_B", region_B)
        object.__setattr__(self, "unitaries", tuple(np.asarray(u) for u in unitaries))
        object.__setattr__(self, "generators", None if generators is None else tuple(np.asarray(g) for g in generators))
        if check:
            self._check()

    def _check(self):
        dim = 2 ** len(self.region_B)
        for u in self.unitaries:
            if u.shape != (dim, dim):
                raise ProtocolError(f"unitary shape {u.shape} does not match region of dimension {dim}")
            if not np.allclose(u.conj().T @ u, np.eye(dim), rtol=0, atol=UNITARY_TOL):
                raise ProtocolError("decoder matrix is not unitary")
        if self.generators is not None:
            if len(self.generators) != len(self.unitaries):
                raise ProtocolError("generator count differs from unitary count")
            for g, u in zip(self.generators, self.unitaries):
                if not is_hermitian(g, 1e-12):
                    raise ProtocolError("generator is not Hermitian")
                if not np.allclose(sl.expm(1j * g), u, rtol=0, atol=1e-9):
                    raise ProtocolError("exp(iG) does not reproduce the unitary")

    @classmethod
    def from_generators(cls, region_B: Region, generators: Sequence[np.ndarray]) -> "Decoder":
        gens = [np.asarray(g, dtype=complex) for g in generators]
        dim = 2 ** len(region_B)
        for g in gens:
            if g.shape != (dim, dim) or not is_hermitian(g, 1e-12):
                raise ProtocolError(f"generator must be a Hermitian {dim}x{dim} matrix")
        # exp(iG) is unitary by construction
        return cls(region_B, [sl.expm(1j * g) for g in gens], gens, check=False)

    @classmethod
    def identity(cls, region_B: Region, outcomes: int = 1) -> "Decoder":
        dim = 2 ** len(region_B)
        return cls.from_generators(region_B, [np.zeros((dim, dim))] * outcomes)

    def __len__(self):
        return len(self.unitaries)


@dataclass(frozen=True)
class OutcomeRecord:
    """One retained outcome: Born weight and the pure states before/after decoding."""

    outcome_index: int
    probability: float
    post_measurement: np.ndarray = field(repr=False)
    post_decoding: np.ndarray = field(repr=False)
    injected_energy: float
    final_energy: float

    @property
    def delta_E(self) -> float:
        return self.injected_energy - self.final_energy

    def _density(self, vec):
        n = int(round(np.log2(vec.shape[0])))
        if n > DENSITY_MAX_SITES:
            raise ProtocolError(f"full density operators are only built for n <= {DENSITY_MAX_SITES}")
        return np.outer(vec, vec.conj())

    def rho(self) -> np.ndarray:
        return self._density(self.post_measurement)

    def sigma(self) -> np.ndarray:
        return self._density(self.post_decoding)


@dataclass(frozen=True)
class ProtocolResult:
    outcomes: tuple[OutcomeRecord, ...]
    E_A: float
    E_B: float
    Delta_E: float
    discarded_probability: float

    @property
    def probabilities(self) -> list[float]:
        return [r.probability for r in self.outcomes]


def validate_kraus(K: KrausSet) -> None:
    """Check dimensions and completeness ``sum_a M_a^dag M_a = 1_A``."""
    if not len(K):
        raise ProtocolError("Kraus set is empty")
    dim = 2 ** len(K.region_A)
    for m in K.elements:
        if m.shape != (dim, dim):
            raise ProtocolError(f"Kraus element shape {m.shape} does not match region of dimension {dim}")
    dev = op_norm(sum(K.effects) - np.eye(dim))
    if dev > COMPLETENESS_TOL:
        raise ProtocolError(f"completeness violated: ||sum M^dag M - 1|| = {dev:.3e}")
    K.norm_bound_m  # cache


def _check_shifted(H: Hamiltonian, gs: GroundState) -> None:
    e = H.expectation(gs.state)
    if abs(e) > 1e-8 * max(1.0, H.J * H.n_sites):
        raise ProtocolError(f"Hamiltonian is not shifted to zero ground energy (<G|H|G> = {e:.3e})")


def run_protocol(
    H: Hamiltonian,
    gs: GroundState,
    K: KrausSet,
    D: Decoder,
    discard_threshold: float = DISCARD_THRESHOLD,
) -> ProtocolResult:
    """Execute measurement, communication and extraction exactly.

    ``H`` must be shifted so the ground energy is zero; E_A and E_B are then
    the averaged excess energies before and after Bob's unitaries.
    """
    if K.region_A.intersects(D.region_B):
        raise ProtocolError("regions A and B overlap")
    if len(K) != len(D):
        raise ProtocolError(f"{len(K)} measurement outcomes but {len(D)} decoder unitaries")
    validate_kraus(K)
    _check_shifted(H, gs)
    n = gs.n_sites
    A, B = list(K.region_A.sites), list(D.region_B.sites)
    records = []
    discarded = 0.0
    for a, (m, u) in enumerate(zip(K.elements, D.unitaries)):
        raw = apply_local(m, A, gs.state, n)
        p = float(np.vdot(raw, raw).real)
        if p < discard_threshold:
            discarded += p
            continue
        psi = raw / np.sqrt(p)
        phi = apply_local(u, B, psi, n)
        records.append(OutcomeRecord(a, p, psi, phi, H.expectation(psi), H.expectation(phi)))
    if not records:
        raise ProtocolError("every outcome fell below the discard threshold")
    E_A = float(sum(r.probability * r.injected_energy for r in records))
    E_B = float(sum(r.probability * r.final_energy for r in records))
    return ProtocolResult(tuple(records), E_A, E_B, E_A - E_B, discarded)


def energy_injection(gs: GroundState, H: Hamiltonian, K: KrausSet) -> float:
    """``sum_a <G|M_a^dag H M_a|G>`` from unnormalized post-measurement vectors."""
    validate_kraus(K)
    A = list(K.region_A.sites)
    out = 0.0
    for m in K.elements:
        v = apply_local(m, A, gs.state, gs.n_sites)
        out += float(np.vdot(v, H.apply(v)).real)
    return out


def bookkeeping_check(result: ProtocolResult, H: Hamiltonian, gs: GroundState, K: KrausSet, D: Decoder) -> float:
    """Residual of ``E_fin = E_A + sum_a <G|M_a^dag O_a M_a|G>``.

    ``O_a = U_a^dag [H, U_a]`` is assembled only from the terms touching B,
    so a small residual also confirms the locality of the flux operator.
    """
    if len(K) != len(D) or D.region_B.intersects(K.region_A):
        raise ProtocolError("inputs do not describe the protocol that produced the result")
    n = gs.n_sites
    A, B = list(K.region_A.sites), list(D.region_B.sites)
    retained = {r.outcome_index for r in result.outcomes}
    bterms = boundary_terms(H, D.region_B)
    e_fin = sum(r.probability * r.final_energy for r in result.outcomes)
    e_a = 0.0
    corr = 0.0
    for a, (m, u) in enumerate(zip(K.elements, D.unitaries)):
        if a not in retained:
            continue
        v = apply_local(m, A, gs.state, n)
        e_a += float(np.vdot(v, H.apply(v)).real)
        uv = apply_local(u, B, v, n)
        flux = np.zeros_like(uv)
        for t in bterms:
            # U^dag [h, U] v = U^dag h U v - h v
            hu = apply_local(t.matrix, t.sites, uv, n)
            flux = flux + apply_local(u.conj().T, B, hu, n) - apply_local(t.matrix, t.sites, v, n)
        corr += float(np.vdot(v, flux).real)
    return abs(e_fin - (e_a + corr))
