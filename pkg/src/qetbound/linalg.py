"""Tensor-product helpers for spin chains.

Site 0 is the most significant tensor factor throughout, so a basis index
``k`` of an ``n``-site chain reads its site bits from left to right. Every
local operator in the package is embedded with this ordering.
"""
from __future__ import annotations

from functools import reduce as _fold
from typing import Sequence

import numpy as np
import scipy.sparse as sp

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli_string(label: str) -> np.ndarray:
    """Dense matrix of a Pauli word such as ``"ZZ"`` or ``"X"``."""
    return _fold(np.kron, [PAULI[ch] for ch in label.upper()])


def maybe_real(mat: np.ndarray, tol: float = 0.0) -> np.ndarray:
    if np.iscomplexobj(mat) and np.all(np.abs(mat.imag) <= tol):
        return np.ascontiguousarray(mat.real)
    return mat


def op_norm(mat: np.ndarray) -> float:
    """Operator (spectral) norm."""
    mat = np.asarray(mat)
    if mat.size == 0:
        return 0.0
    return float(np.linalg.norm(mat, 2))


def is_hermitian(mat: np.ndarray, tol: float = 1e-12) -> bool:
    mat = np.asarray(mat)
    return mat.ndim == 2 and mat.shape[0] == mat.shape[1] and np.allclose(mat, mat.conj().T, rtol=0, atol=tol)


def embed_sparse(mat: np.ndarray, sites: Sequence[int], n: int, d: int = 2) -> sp.csr_matrix:
    """Embed ``mat`` acting on ``sites`` (ascending) into the ``n``-site space.

    Sites need not be contiguous; a permutation of the kron product is used
    for gaps.
    """
    sites = list(sites)
    k = len(sites)
    if k == 0:
        raise ValueError("empty support")
    if sites == list(range(sites[0], sites[0] + k)):
        left = sp.identity(d ** sites[0], format="csr")
        right = sp.identity(d ** (n - sites[-1] - 1), format="csr")
        return sp.kron(sp.kron(left, sp.csr_matrix(mat)), right, format="csr")
    # non-contiguous support: build column by column through apply_local
    dim = d**n
    cols = apply_local(mat, sites, np.eye(dim, dtype=np.result_type(mat, float)), n, d)
    return sp.csr_matrix(cols)


def apply_local(mat: np.ndarray, sites: Sequence[int], vec: np.ndarray, n: int, d: int = 2) -> np.ndarray:
    """Apply a local matrix to a state vector (or to each column of a matrix)."""
    sites = list(sites)
    k = len(sites)
    extra = vec.shape[1:]
    psi = vec.reshape((d,) * n + extra)
    psi = np.moveaxis(psi, sites, range(k))
    front = psi.shape
    psi = psi.reshape(d**k, -1)
    psi = np.asarray(mat) @ psi
    psi = psi.reshape(front)
    psi = np.moveaxis(psi, range(k), sites)
    return psi.reshape((d**n,) + extra)


def partial_trace_vector(vec: np.ndarray, keep: Sequence[int], n: int, d: int = 2) -> np.ndarray:
    """Reduced density matrix of the pure state ``vec`` on ``keep``."""
    keep = sorted(keep)
    psi = np.moveaxis(vec.reshape((d,) * n), keep, range(len(keep)))
    psi = psi.reshape(d ** len(keep), -1)
    return psi @ psi.conj().T


def partial_trace_matrix(rho: np.ndarray, keep: Sequence[int], n: int, d: int = 2) -> np.ndarray:
    """Partial trace of a full-space operator over the complement of ``keep``."""
    keep = sorted(keep)
    k = len(keep)
    t = rho.reshape((d,) * (2 * n))
    rest = [s for s in range(n) if s not in keep]
    order = keep + rest + [n + s for s in keep] + [n + s for s in rest]
    t = t.transpose(order).reshape(d**k, d ** (n - k), d**k, d ** (n - k))
    return np.einsum("ajbj->ab", t)


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_hermitian(dim: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return scale * (z + z.conj().T) / 2
