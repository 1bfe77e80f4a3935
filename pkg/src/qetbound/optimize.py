"""Searching parametrized protocol families for the largest extracted energy."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .linalg import PAULI
from .model import Hamiltonian, Region
from .protocol import Decoder, KrausSet, run_protocol
from .spectral import GroundState

SCHEMES = ("projective_pair", "projective_full", "sqrt_povm", "identity_kraus")
DEFAULT_RESTARTS = 8
ORACLE_MAX_POINTS = 10**7
ORACLE_MAX_SITES = 6

_ANGLE = (0.0, math.pi)
_AZIMUTH = (-math.pi, math.pi)
_COEFF = (-math.pi, math.pi)


@dataclass(frozen=True)
class ProtocolScheme:
    """A box-constrained family of (Kraus set, decoder) pairs.

    The measurement acts on the site of A nearest to B, the decoder generator
    on the site of B nearest to A; both are padded with identities on the
    rest of their regions.
    """

    scheme_name: str
    region_A: Region
    region_B: Region
    kraus_family: str
    generator_axes: tuple[str, ...]
    outcomes: int
    param_names: tuple[str, ...]
    parameter_bounds: tuple[tuple[float, float], ...]

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    @property
    def measure_site(self) -> int:
        return min(self.region_A.sites, key=lambda s: min(abs(s - b) for b in self.region_B.sites))

    @property
    def act_site(self) -> int:
        return min(self.region_B.sites, key=lambda s: min(abs(s - a) for a in self.region_A.sites))

    def to_record(self) -> dict:
        return {
            "scheme_name": self.scheme_name,
            "region_A": list(self.region_A.sites),
            "region_B": list(self.region_B.sites),
            "param_names": list(self.param_names),
            "parameter_bounds": [list(b) for b in self.parameter_bounds],
        }


def make_scheme(name: str, A: Region, B: Region, generator_axes: Sequence[str] | None = None) -> ProtocolScheme:
    """Catalog of protocol families.

    ``projective_pair``: rank-1 projective pair along a Bloch axis
    (theta, phi), one generator axis per outcome (default Y).
    ``projective_full``: same measurement, X/Y/Z generator per outcome.
    ``sqrt_povm``: two-outcome POVM ``sqrt((1 +- s n.sigma)/2)`` with
    strength ``s`` in [0, 1].
    ``identity_kraus``: trivial measurement, one outcome, X/Y/Z generator.
    """
    if A.intersects(B):
        raise ValueError("regions A and B overlap")
    if name == "projective_pair":
        family, axes, outcomes = "projective", tuple(generator_axes or ("Y",)), 2
        head = [("theta", _ANGLE), ("phi", _AZIMUTH)]
    elif name == "projective_full":
        family, axes, outcomes = "projective", tuple(generator_axes or ("X", "Y", "Z")), 2
        head = [("theta", _ANGLE), ("phi", _AZIMUTH)]
    elif name == "sqrt_povm":
        family, axes, outcomes = "sqrt_povm", tuple(generator_axes or ("Y",)), 2
        head = [("theta", _ANGLE), ("phi", _AZIMUTH), ("strength", (0.0, 1.0))]
    elif name == "identity_kraus":
        family, axes, outcomes = "identity", tuple(generator_axes or ("X", "Y", "Z")), 1
        head = []
    else:
        raise ValueError(f"unknown scheme {name!r}; expected one of {SCHEMES}")
    for ax in axes:
        if ax not in ("X", "Y", "Z"):
            raise ValueError(f"generator axis must be X, Y or Z, got {ax!r}")
    tail = [(f"g{a}_{ax.lower()}", _COEFF) for a in range(outcomes) for ax in axes]
    items = head + tail
    return ProtocolScheme(
        name, A, B, family, axes, outcomes,
        tuple(n for n, _ in items), tuple(b for _, b in items),
    )


def _pad(mat: np.ndarray, site: int, region: Region) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for s in region.sites:
        out = np.kron(out, mat if s == site else np.eye(2))
    return out


def _bloch_projectors(theta: float, phi: float) -> tuple[np.ndarray, np.ndarray]:
    n = (math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta))
    ns = n[0] * PAULI["X"] + n[1] * PAULI["Y"] + n[2] * PAULI["Z"]
    return (PAULI["I"] + ns) / 2, (PAULI["I"] - ns) / 2


def instantiate(scheme: ProtocolScheme, params: Sequence[float]) -> tuple[KrausSet, Decoder]:
    """Build the Kraus set and decoder (with generators) at ``params``."""
    params = np.asarray(params, dtype=float)
    if params.shape != (scheme.n_params,):
        raise ValueError(f"{scheme.scheme_name} takes {scheme.n_params} parameters, got {params.shape}")
    for name, x, (lo, hi) in zip(scheme.param_names, params, scheme.parameter_bounds):
        if not lo <= x <= hi:
            raise ValueError(f"parameter {name}={x} outside [{lo}, {hi}]")
    A, B = scheme.region_A, scheme.region_B
    if scheme.kraus_family == "identity":
        local = [PAULI["I"]]
        rest = params
    elif scheme.kraus_family == "projective":
        local = list(_bloch_projectors(params[0], params[1]))
        rest = params[2:]
    else:
        up, down = _bloch_projectors(params[0], params[1])
        s = params[2]
        hi, lo = math.sqrt((1 + s) / 2), math.sqrt((1 - s) / 2)
        local = [hi * up + lo * down, lo * up + hi * down]
        rest = params[3:]
    K = KrausSet(A, [_pad(m, scheme.measure_site, A) for m in local])
    k = len(scheme.generator_axes)
    gens = []
    for a in range(scheme.outcomes):
        coeffs = rest[a * k:(a + 1) * k]
        g = sum(c * PAULI[ax] for c, ax in zip(coeffs, scheme.generator_axes))
        gens.append(_pad(np.asarray(g, dtype=complex), scheme.act_site, B))
    return K, Decoder.from_generators(B, gens)


def evaluate(H: Hamiltonian, gs: GroundState, scheme: ProtocolScheme, params: Sequence[float]) -> float:
    K, D = instantiate(scheme, params)
    return run_protocol(H, gs, K, D).Delta_E


@dataclass(frozen=True)
class OptResult:
    best_parameters: tuple[float, ...]
    best_Delta_E: float
    evaluations: int
    seed: int
    restarts: int
    trace: tuple[tuple[int, float], ...] = field(repr=False)

    def to_record(self) -> dict:
        return {
            "best_parameters": list(self.best_parameters),
            "best_Delta_E": self.best_Delta_E,
            "evaluations": self.evaluations,
            "seed": self.seed,
            "restarts": self.restarts,
        }


class _BudgetSpent(Exception):
    pass


def _resolve(scheme, A: Region, B: Region) -> ProtocolScheme:
    if isinstance(scheme, str):
        return make_scheme(scheme, A, B)
    if scheme.region_A != A or scheme.region_B != B:
        raise ValueError("scheme regions differ from the requested A, B")
    return scheme


def maximize_extraction(
    H: Hamiltonian,
    gs: GroundState,
    A: Region,
    B: Region,
    scheme: ProtocolScheme | str = "projective_pair",
    budget: int = 2000,
    seed: int = 0,
    restarts: int | None = None,
) -> OptResult:
    """Multi-start bounded Nelder-Mead on ``Delta E``.

    The budget is split over the restarts up front; a restart stops the
    moment its share is spent, so the total number of protocol evaluations
    never exceeds ``budget``. Restarts start from uniform random points drawn
    from ``seed``. Ties keep the earliest point.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    scheme = _resolve(scheme, A, B)
    n_restarts = min(budget, DEFAULT_RESTARTS if restarts is None else int(restarts))
    shares = [budget // n_restarts + (1 if i < budget % n_restarts else 0) for i in range(n_restarts)]
    rng = np.random.default_rng(seed)
    bounds = np.array(scheme.parameter_bounds, dtype=float).reshape(-1, 2)
    starts = [rng.uniform(bounds[:, 0], bounds[:, 1]) for _ in range(n_restarts)]

    best_x: tuple[float, ...] = ()
    best_f = -math.inf
    trace: list[tuple[int, float]] = []
    count = 0

    for x0, share in zip(starts, shares):
        used = 0

        def objective(x):
            nonlocal used, count, best_f, best_x
            if used >= share:
                raise _BudgetSpent
            used += 1
            count += 1
            x = np.clip(x, bounds[:, 0], bounds[:, 1])
            val = evaluate(H, gs, scheme, x)
            if val > best_f:
                best_f, best_x = val, tuple(float(v) for v in x)
            trace.append((count, best_f))
            return -val

        if scheme.n_params == 0:
            try:
                objective(x0)
            except _BudgetSpent:
                pass
            continue
        try:
            minimize(
                objective, x0, method="Nelder-Mead", bounds=bounds,
                options={"maxfev": share + scheme.n_params + 2, "xatol": 1e-10, "fatol": 1e-15, "adaptive": True},
            )
        except _BudgetSpent:
            pass
    return OptResult(best_x, best_f, count, seed, n_restarts, tuple(trace))


@dataclass(frozen=True)
class OracleResult:
    best_Delta_E: float
    best_parameters: tuple[float, ...]
    points: int


def brute_force_oracle(
    H: Hamiltonian,
    gs: GroundState,
    A: Region,
    B: Region,
    scheme: ProtocolScheme | str,
    grid_resolution: int,
) -> OracleResult:
    """Exhaustive ``run_protocol`` over a uniform grid spanning the parameter box."""
    scheme = _resolve(scheme, A, B)
    if H.n_sites > ORACLE_MAX_SITES:
        raise ValueError(f"oracle limited to n <= {ORACLE_MAX_SITES}")
    points = grid_resolution**scheme.n_params
    if points > ORACLE_MAX_POINTS:
        raise ValueError(f"grid of {points} points exceeds {ORACLE_MAX_POINTS}")
    axes = [np.linspace(lo, hi, grid_resolution) for lo, hi in scheme.parameter_bounds]
    best_f, best_x = -math.inf, ()
    for x in itertools.product(*axes):
        K, D = instantiate(scheme, x)
        val = run_protocol(H, gs, K, D).Delta_E
        if val > best_f:
            best_f, best_x = val, tuple(float(v) for v in x)
    return OracleResult(best_f, best_x, points)
