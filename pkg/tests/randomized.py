"""Random protocol ingredients for property tests."""
import numpy as np

from qetbound.linalg import random_hermitian, random_unitary
from qetbound.model import Region
from qetbound.protocol import Decoder, KrausSet


def random_kraus(A: Region, outcomes: int, rng: np.random.Generator) -> KrausSet:
    """Kraus set from blocks of a random isometry, so completeness is exact."""
    d = 2 ** len(A)
    z = rng.standard_normal((outcomes * d, d)) + 1j * rng.standard_normal((outcomes * d, d))
    q, _ = np.linalg.qr(z)
    return KrausSet(A, [q[a * d:(a + 1) * d] for a in range(outcomes)])


def random_decoder(B: Region, outcomes: int, rng: np.random.Generator, scale: float = 1.0) -> Decoder:
    d = 2 ** len(B)
    return Decoder.from_generators(B, [random_hermitian(d, rng, scale) for _ in range(outcomes)])


def random_unitary_decoder(B: Region, outcomes: int, rng: np.random.Generator) -> Decoder:
    d = 2 ** len(B)
    return Decoder(B, [random_unitary(d, rng) for _ in range(outcomes)])


def random_regions(n: int, rng: np.random.Generator, max_width: int = 2):
    """Disjoint A (left) and B (right) intervals on an n-site chain."""
    wa = int(rng.integers(1, max_width + 1))
    wb = int(rng.integers(1, max_width + 1))
    a0 = int(rng.integers(0, n - wa - wb + 1))
    b0 = int(rng.integers(a0 + wa, n - wb + 1))
    return Region(range(a0, a0 + wa)), Region(range(b0, b0 + wb))


def random_density(dim: int, rng: np.random.Generator) -> np.ndarray:
    rank = int(rng.integers(1, dim + 1))
    z = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = z @ z.conj().T
    return rho / np.trace(rho).real
