"""Exact diagonalization backbone: ground state, gap, reductions, norms."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
import scipy.sparse.linalg as spla

from .linalg import apply_local, is_hermitian, partial_trace_matrix, partial_trace_vector
from .model import Hamiltonian, Region

log = logging.getLogger(__name__)

DENSE_LIMIT = 2**14
ITERATIVE_LIMIT = 2**20
DEGENERACY_TOL = 1e-8


class SpectralError(RuntimeError):
    """Solver limits exceeded or a hypothesis of the bound (unique ground state) fails."""


class DegenerateGroundState(SpectralError):
    pass


@dataclass(frozen=True)
class GroundState:
    """Lowest eigenpair of a Hamiltonian plus the gap above it.

    ``energy_E0`` is the unshifted ground energy; ``state`` is normalized with
    its largest-magnitude amplitude made real positive so repeated solves
    agree exactly.
    """

    state: np.ndarray = field(repr=False)
    energy_E0: float
    gap_Delta: float
    degeneracy_flag: bool
    n_sites: int
    method: str = "dense"

    @property
    def dim(self) -> int:
        return self.state.shape[0]

    def expectation(self, mat: np.ndarray, sites) -> complex:
        """``<G| O_sites |G>`` for a local operator."""
        return complex(np.vdot(self.state, apply_local(mat, list(sites), self.state, self.n_sites)))


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    vec = vec / np.linalg.norm(vec)
    k = int(np.argmax(np.abs(vec) > np.abs(vec).max() * (1 - 1e-9)))
    return vec * (abs(vec[k]) / vec[k])


def lowest_eigs(H: Hamiltonian, k: int = 2, method: str = "auto", shifted: bool = False):
    """Lowest ``k`` eigenvalues and vectors of ``H`` by the dense or iterative path."""
    dim = H.dim
    if method == "auto":
        method = "dense" if dim <= DENSE_LIMIT else "iterative"
    if method == "dense":
        if dim > DENSE_LIMIT:
            raise SpectralError(f"dimension {dim} exceeds dense limit {DENSE_LIMIT}")
        w, v = sl.eigh(H.dense(shifted), subset_by_index=[0, min(k, dim) - 1])
        return w, v, method
    if method != "iterative":
        raise ValueError(f"unknown method {method!r}")
    if dim > ITERATIVE_LIMIT:
        raise SpectralError(f"dimension {dim} exceeds iterative limit {ITERATIVE_LIMIT}")
    rng = np.random.default_rng(12345)
    v0 = rng.standard_normal(dim)
    try:
        w, v = spla.eigsh(H.sparse(shifted), k=k, which="SA", v0=v0, tol=1e-13, maxiter=dim * 10)
    except spla.ArpackNoConvergence as exc:
        raise SpectralError(f"eigensolver did not converge: {exc}") from exc
    order = np.argsort(w)
    return w[order], v[:, order], method


def solve_ground(H: Hamiltonian, method: str = "auto", degeneracy_tol: float = DEGENERACY_TOL) -> GroundState:
    """Ground state and gap of the unshifted ``H``.

    The degeneracy flag is raised when the gap falls below
    ``degeneracy_tol * J``.
    """
    if H.n_sites < 2:
        raise SpectralError("model minimum size is 2 sites")
    w, v, used = lowest_eigs(H, 2, method, shifted=False)
    gap = float(w[1] - w[0])
    flag = gap < degeneracy_tol * max(H.J, 1e-300)
    if flag:
        log.warning("ground level of %s(n=%d) is degenerate (gap %.3e)", H.name, H.n_sites, gap)
    return GroundState(_fix_phase(v[:, 0]), float(w[0]), gap, bool(flag), H.n_sites, used)


def shift_to_zero(H: Hamiltonian, gs: GroundState) -> Hamiltonian:
    """Return ``H`` shifted so that ``H|G> = 0`` and ``H >= 0``.

    Refuses degenerate ground levels, for which the uniqueness hypothesis
    behind every bound fails.
    """
    if gs.degeneracy_flag:
        raise DegenerateGroundState(f"ground level is degenerate (gap {gs.gap_Delta:.3e}); refusing to shift")
    return H.with_shift(-gs.energy_E0)


@dataclass(frozen=True)
class ReducedOperator:
    support: Region
    matrix: np.ndarray = field(repr=False)

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))


def reduce(obj: np.ndarray, X: Region, n_sites: int | None = None) -> ReducedOperator:
    """Partial trace of a state vector (as ``|v><v|``) or full operator onto ``X``."""
    obj = np.asarray(obj)
    dim = obj.shape[0]
    if n_sites is None:
        n_sites = int(round(np.log2(dim)))
    if 2**n_sites != dim:
        raise ValueError(f"dimension {dim} is not 2**{n_sites}")
    if not all(0 <= s < n_sites for s in X.sites):
        raise ValueError(f"region {X.sites} outside {n_sites}-site lattice")
    if obj.ndim == 1:
        mat = partial_trace_vector(obj, X.sites, n_sites)
    else:
        mat = partial_trace_matrix(obj, X.sites, n_sites)
    return ReducedOperator(X, mat)


def trace_norm(R) -> float:
    """Sum of absolute eigenvalues of a Hermitian operator."""
    mat = R.matrix if isinstance(R, ReducedOperator) else np.asarray(R)
    if not is_hermitian(mat, 1e-9 * max(1.0, float(np.abs(mat).max(initial=0.0)))):
        raise ValueError("trace_norm expects a Hermitian operator")
    return float(np.abs(np.linalg.eigvalsh((mat + mat.conj().T) / 2)).sum())


def connected_correlator(gs: GroundState, Y: Region, O_Y: np.ndarray, Z: Region, O_Z: np.ndarray) -> float:
    """``|<O_Y O_Z> - <O_Y><O_Z>|`` in the ground state, for disjoint ``Y`` and ``Z``."""
    if Y.intersects(Z):
        raise ValueError(f"supports {Y.sites} and {Z.sites} overlap")
    n = gs.n_sites
    g = gs.state
    zg = apply_local(O_Z, Z.sites, g, n)
    yg = apply_local(O_Y.conj().T, Y.sites, g, n)
    joint = np.vdot(yg, zg)
    ey = np.vdot(g, apply_local(O_Y, Y.sites, g, n))
    ez = np.vdot(g, zg)
    return float(abs(joint - ey * ez))
