"""Lattices, regions and finite-range local Hamiltonians on open chains."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .linalg import embed_sparse, is_hermitian, maybe_real, op_norm, pauli_string

MODELS = ("tfim", "field_only", "terms")


class ModelError(ValueError):
    """Raised for an invalid model definition."""


@dataclass(frozen=True)
class Lattice:
    """Open chain of ``n_sites`` sites with the path-graph metric."""

    n_sites: int
    local_dimension: int = 2

    def __post_init__(self):
        if self.n_sites < 1:
            raise ModelError(f"lattice needs at least one site, got {self.n_sites}")

    @property
    def sites(self) -> tuple[int, ...]:
        return tuple(range(self.n_sites))

    @property
    def dim(self) -> int:
        return self.local_dimension**self.n_sites

    def distance(self, i: int, j: int) -> int:
        return abs(i - j)

    def contains(self, region: "Region") -> bool:
        return all(0 <= s < self.n_sites for s in region.sites)


@dataclass(frozen=True)
class Region:
    """A nonempty set of lattice sites, stored sorted."""

    sites: tuple[int, ...]

    def __init__(self, sites: Iterable[int]):
        if isinstance(sites, (int, np.integer)):
            sites = (sites,)
        s = tuple(sorted({int(x) for x in sites}))
        if not s:
            raise ModelError("region must be nonempty")
        object.__setattr__(self, "sites", s)

    def __iter__(self):
        return iter(self.sites)

    def __len__(self):
        return len(self.sites)

    def __contains__(self, site) -> bool:
        return site in self.sites

    @property
    def diameter(self) -> int:
        return self.sites[-1] - self.sites[0]

    def intersects(self, other: "Region") -> bool:
        return bool(set(self.sites) & set(other.sites))

    def union(self, other: "Region") -> "Region":
        return Region(self.sites + other.sites)


def region_distance(lat: Lattice, A: Region, B: Region) -> int:
    """Minimal metric distance between two regions (0 iff they intersect)."""
    if not len(A) or not len(B):
        raise ModelError("region must be nonempty")
    if not (lat.contains(A) and lat.contains(B)):
        raise ModelError("region outside lattice")
    return min(lat.distance(i, j) for i in A for j in B)


@dataclass(frozen=True)
class LocalTerm:
    """Hermitian operator acting on ``support``; ``norm`` is its operator norm."""

    support: Region
    matrix: np.ndarray = field(repr=False, compare=False)
    label: str = ""

    def __post_init__(self):
        dim = 2 ** len(self.support)
        if self.matrix.shape != (dim, dim):
            raise ModelError(f"term on {self.support.sites} needs a {dim}x{dim} matrix, got {self.matrix.shape}")
        if not is_hermitian(self.matrix, 1e-12):
            raise ModelError(f"term {self.label or self.support.sites} is not Hermitian")

    @cached_property
    def norm(self) -> float:
        return op_norm(self.matrix)

    @property
    def sites(self) -> tuple[int, ...]:
        return self.support.sites

    @property
    def diameter(self) -> int:
        return self.support.diameter


@dataclass(frozen=True)
class Hamiltonian:
    """Sum of local terms on a chain.

    ``energy_shift`` is added on application only; term matrices always hold
    the unshifted local operators.
    """

    lattice: Lattice
    terms: tuple[LocalTerm, ...]
    J: float
    range_r: int
    energy_shift: float = 0.0
    name: str = "terms"
    params: Mapping = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for t in self.terms:
            if not self.lattice.contains(t.support):
                raise ModelError(f"term {t.label} outside lattice")
            if t.diameter > self.range_r:
                raise ModelError(f"term {t.label} diameter {t.diameter} exceeds range {self.range_r}")
            if t.norm > self.J * (1 + 1e-12) + 1e-15:
                raise ModelError(f"term {t.label} norm {t.norm} exceeds J={self.J}")

    @property
    def n_sites(self) -> int:
        return self.lattice.n_sites

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @cached_property
    def _sparse_unshifted(self) -> sp.csr_matrix:
        n = self.n_sites
        acc = sp.csr_matrix((self.dim, self.dim), dtype=complex)
        for t in self.terms:
            acc = acc + embed_sparse(t.matrix, t.sites, n)
        if np.all(acc.data.imag == 0):
            acc = acc.real.tocsr()
        acc.eliminate_zeros()
        return acc

    def sparse(self, shifted: bool = True) -> sp.csr_matrix:
        h = self._sparse_unshifted
        if shifted and self.energy_shift:
            h = (h + self.energy_shift * sp.identity(self.dim, format="csr")).tocsr()
        return h

    def dense(self, shifted: bool = True) -> np.ndarray:
        return self.sparse(shifted).toarray()

    def apply(self, vec: np.ndarray) -> np.ndarray:
        out = self._sparse_unshifted @ vec
        if self.energy_shift:
            out = out + self.energy_shift * vec
        return out

    def expectation(self, vec: np.ndarray) -> float:
        return float(np.vdot(vec, self.apply(vec)).real)

    @property
    def is_shifted(self) -> bool:
        return self.energy_shift != 0.0

    def with_shift(self, shift: float) -> "Hamiltonian":
        return replace(self, energy_shift=float(shift))


def _pauli_term(sites: Sequence[int], label: str, coeff: float) -> LocalTerm:
    return LocalTerm(Region(sites), maybe_real(coeff * pauli_string(label)), f"{coeff:g}*{label}{tuple(sites)}")


def _finish(lat: Lattice, terms: list[LocalTerm], name: str, params: dict, J=None, range_r=None) -> Hamiltonian:
    if J is None:
        J = max((t.norm for t in terms), default=0.0)
    if range_r is None:
        range_r = max((t.diameter for t in terms), default=0)
    return Hamiltonian(lat, tuple(terms), float(J), int(range_r), name=name, params=dict(params))


def build_chain(n: int, model: str = "tfim", **params) -> Hamiltonian:
    """Build a catalog Hamiltonian on an open chain of ``n`` sites.

    Models:
        ``tfim``: ``-coupling * Z_i Z_{i+1} - g * X_i``.
        ``field_only``: ``g * (1 - X_i) / 2``, a product model with E_0 = 0.
        ``terms``: user list ``params["terms"]`` of mappings with ``sites`` and
        either ``pauli`` (+ optional ``coeff``) or ``matrix``. Optional
        ``range_r`` and ``J`` are enforced as declared bounds.
    """
    if n < 2:
        raise ModelError(f"chain models need n >= 2, got {n}")
    lat = Lattice(n)
    if model == "tfim":
        g = float(params.get("g", params.get("field", 1.0)))
        coupling = float(params.get("coupling", 1.0))
        terms = [_pauli_term((i, i + 1), "ZZ", -coupling) for i in range(n - 1) if coupling]
        terms += [_pauli_term((i,), "X", -g) for i in range(n) if g]
        return _finish(lat, terms, model, {"g": g, "coupling": coupling})
    if model == "field_only":
        g = float(params.get("g", params.get("field", 1.0)))
        m = g * (np.eye(2) - pauli_string("X").real) / 2
        terms = [LocalTerm(Region((i,)), m, f"{g:g}*(1-X)/2({i},)") for i in range(n)]
        return _finish(lat, terms, model, {"g": g})
    if model == "terms":
        spec = params.get("terms")
        if not spec:
            raise ModelError("model 'terms' needs a nonempty 'terms' list")
        terms = []
        for item in spec:
            sites = tuple(item["sites"])
            if "pauli" in item:
                label = item["pauli"]
                if len(label) != len(sites):
                    raise ModelError(f"pauli word {label!r} does not match sites {sites}")
                terms.append(_pauli_term(sites, label, float(item.get("coeff", 1.0))))
            else:
                mat = maybe_real(np.asarray(item["matrix"], dtype=complex))
                terms.append(LocalTerm(Region(sites), mat, item.get("label", f"user{sites}")))
        return _finish(lat, terms, model, {"terms": list(spec)}, params.get("J"), params.get("range_r"))
    raise ModelError(f"unknown model {model!r}; expected one of {MODELS}")


def boundary_terms(H: Hamiltonian, B: Region) -> list[LocalTerm]:
    """Terms whose support meets ``B``, ordered by (first site, diameter)."""
    if not H.lattice.contains(B):
        raise ModelError("region outside lattice")
    hit = [t for t in H.terms if t.support.intersects(B)]
    return sorted(hit, key=lambda t: (t.sites[0], t.diameter))


def boundary_sum(H: Hamiltonian, B: Region) -> float:
    """Total operator norm of the terms touching ``B``."""
    return float(sum(t.norm for t in boundary_terms(H, B)))
