import math

import numpy as np
import pytest
import scipy.linalg as sl
from hypothesis import given, settings
from hypothesis import strategies as st

from qetbound.bounds import (
    ClusterFit,
    ClusteringError,
    duhamel_pair,
    fit_clustering,
    geometric_margin,
    local_trace_norm_profile,
    main_certificate,
    measure_clustering,
    refined_certificate,
    trace_duality_chain,
    variational_gap,
)
from qetbound.linalg import PAULI, random_hermitian
from qetbound.model import Region, build_chain
from qetbound.protocol import Decoder, KrausSet, ProtocolError, run_protocol
from qetbound.linalg import partial_trace_matrix
from qetbound.spectral import DegenerateGroundState

from randomized import random_decoder, random_kraus, random_regions, random_unitary_decoder
from test_model import kron_chain

ZK = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]


def fake_fit(c=1.0, xi=2.0):
    return ClusterFit(c, xi, (2, 8), 1.0, ((2, c * math.exp(-2 / xi)),))


# -- variational inequality ---------------------------------------------------


def test_variational_identity_unitary(solved):
    s = solved(8, "tfim", g=2.0)
    D = Decoder.identity(Region([4]), 2)
    res = run_protocol(s.H, s.gs, KrausSet(Region([0]), ZK), D)
    for r in res.outcomes:
        chk = variational_gap(s.H, s.gs, r, D)
        assert chk.lhs == pytest.approx(0, abs=1e-12)
        assert chk.rhs == pytest.approx(0, abs=1e-12)


def test_variational_identity_kraus(solved):
    s = solved(8, "tfim", g=2.0)
    rng = np.random.default_rng(0)
    D = random_unitary_decoder(Region([3]), 1, rng)
    res = run_protocol(s.H, s.gs, KrausSet(Region([0]), [np.eye(2)]), D)
    chk = variational_gap(s.H, s.gs, res.outcomes[0], D)
    assert chk.rhs == pytest.approx(0, abs=1e-12)
    assert chk.lhs == pytest.approx(-s.H.expectation(res.outcomes[0].post_decoding), abs=1e-12)
    assert chk.lhs <= 1e-12


def test_variational_random(solved):
    s = solved(8, "tfim", g=2.0)
    rng = np.random.default_rng(1)
    for _ in range(60):
        A, B = random_regions(8, rng)
        k = int(rng.integers(1, 4))
        K, D = random_kraus(A, k, rng), random_decoder(B, k, rng, scale=1.5)
        for r in run_protocol(s.H, s.gs, K, D).outcomes:
            chk = variational_gap(s.H, s.gs, r, D)
            assert chk.holds()
            assert chk.lhs == pytest.approx(chk.rhs + chk.dropped_term, abs=1e-10)


def test_variational_mismatch(solved):
    s = solved(6, "tfim", g=2.0)
    rng = np.random.default_rng(2)
    D = random_decoder(Region([4]), 2, rng)
    res = run_protocol(s.H, s.gs, KrausSet(Region([0]), ZK), D)
    with pytest.raises(ProtocolError):
        variational_gap(s.H, s.gs, res.outcomes[0], random_decoder(Region([4]), 2, rng))
    with pytest.raises(ProtocolError):
        variational_gap(s.H, s.gs, res.outcomes[1], Decoder.identity(Region([4]), 1))


# -- trace duality chain ------------------------------------------------------


def test_chain_random_with_dense_reductions(solved):
    s = solved(6, "tfim", g=2.0)
    rng = np.random.default_rng(3)
    omega = np.outer(s.gs.state, s.gs.state.conj())
    for _ in range(30):
        A, B = random_regions(6, rng)
        k = int(rng.integers(1, 4))
        K, D = random_kraus(A, k, rng), random_decoder(B, k, rng, scale=2.0)
        for r in run_protocol(s.H, s.gs, K, D).outcomes:
            chain = trace_duality_chain(s.H, s.gs, r, D)
            assert chain.holds()
            # cross-check one factor through dense density operators
            t = chain.terms[0]
            diff = partial_trace_matrix(r.rho() - omega, t.support.sites, 6)
            assert t.trace_norm == pytest.approx(np.abs(np.linalg.eigvalsh(diff)).sum(), abs=1e-10)
            assert 0 <= t.trace_norm <= 2 + 1e-12


def test_chain_conjugation_norm_on_full_space(solved):
    s = solved(6, "tfim", g=2.0)
    rng = np.random.default_rng(4)
    B = Region([3])
    D = random_decoder(B, 2, rng)
    res = run_protocol(s.H, s.gs, KrausSet(Region([0]), ZK), D)
    chain = trace_duality_chain(s.H, s.gs, res.outcomes[0], D)
    U = kron_chain([np.eye(8), D.unitaries[0], np.eye(4)])
    for t in chain.terms:
        term = next(x for x in s.H.terms if x.label == t.label)
        h = kron_chain([np.eye(2 ** term.sites[0]), term.matrix, np.eye(2 ** (6 - term.sites[-1] - 1))])
        assert t.conjugation_norm == pytest.approx(np.linalg.norm(U.conj().T @ h @ U - h, 2), abs=1e-10)
        assert t.conjugation_norm <= 2 * term.norm + 1e-12


# -- trace-norm profile -------------------------------------------------------


def test_profile_product_state(solved):
    s = solved(8, "field_only", g=1.0)
    rng = np.random.default_rng(5)
    K = random_kraus(Region([0, 1]), 3, rng)
    for a in range(3):
        prof = local_trace_norm_profile(s.gs, K, a, [Region([j]) for j in range(2, 8)] + [Region([3, 4])])
        assert all(v <= 1e-12 for _, v in prof)


def test_profile_identity_kraus(solved):
    s = solved(8, "tfim", g=2.0)
    prof = local_trace_norm_profile(s.gs, KrausSet(Region([0]), [np.eye(2)]), 0, [Region([j]) for j in range(1, 8)])
    assert all(v <= 1e-12 for _, v in prof)
    assert [d for d, _ in prof] == list(range(1, 8))


def test_profile_rejects_overlap(solved):
    s = solved(6, "tfim", g=2.0)
    with pytest.raises(ValueError):
        local_trace_norm_profile(s.gs, KrausSet(Region([0]), ZK), 0, [Region([0, 1])])


@pytest.mark.slow
def test_profile_nonincreasing_tfim12(solved):
    s = solved(12, "tfim", g=2.0)
    for a in range(2):
        prof = local_trace_norm_profile(s.gs, KrausSet(Region([0]), ZK), a, [Region([j]) for j in range(1, 12)])
        vals = [v for _, v in prof]
        assert all(0 < v <= 2 for v in vals)
        assert all(b <= a_ * (1 + 1e-9) + 1e-14 for a_, b in zip(vals, vals[1:]))


# -- clustering ---------------------------------------------------------------


def test_clustering_product_state(solved):
    s = solved(8, "field_only", g=1.0)
    samples = measure_clustering(s.gs)
    assert all(v <= 1e-12 for _, v in samples)
    fit = fit_clustering(samples, range_r=0)
    assert fit.degenerate and fit.c == 0 and math.isnan(fit.xi)


@pytest.mark.slow
def test_clustering_tfim12_decays(solved):
    s = solved(12, "tfim", g=2.0)
    samples = dict(measure_clustering(s.gs, range(2, 10)))
    vals = [samples[d] for d in range(2, 10)]
    assert all(v > 0 for v in vals)
    assert all(a > b for a, b in zip(vals, vals[1:]))
    fit = fit_clustering(measure_clustering(s.gs), range_r=1)
    assert fit.fit_window == (2, 9)
    assert fit.quality_warning is None and fit.r_squared > 0.99


@pytest.mark.slow
def test_clustering_critical_flagged(solved):
    s = solved(12, "tfim", g=1.0)
    fit = fit_clustering(measure_clustering(s.gs), range_r=1)
    assert fit.quality_warning is not None


def test_clustering_degenerate_refused(solved):
    s = solved(6, "tfim", g=0.0)
    with pytest.raises(DegenerateGroundState):
        measure_clustering(s.gs)


def test_clustering_brute_force_small(solved):
    """Max over pairs and Pauli families agrees with a dense-matrix enumeration."""
    s = solved(5, "tfim", g=1.5)
    g = s.gs.state
    paulis = [PAULI[k] for k in "XYZ"]
    emb = lambda o, i: kron_chain([o if k == i else np.eye(2) for k in range(5)])
    for d, val in measure_clustering(s.gs):
        best = 0.0
        for i in range(5 - d):
            for a in paulis:
                for b in paulis:
                    A, B = emb(a, i), emb(b, i + d)
                    best = max(best, abs(np.vdot(g, A @ B @ g) - np.vdot(g, A @ g) * np.vdot(g, B @ g)))
        assert val == pytest.approx(best, abs=1e-12)


def test_fit_exact_synthetic():
    samples = [(d, math.exp(-d / 2)) for d in (2, 4, 6, 8)]
    fit = fit_clustering(samples, window=(2, 8))
    assert fit.c == pytest.approx(1.0, abs=1e-9)
    assert fit.xi == pytest.approx(2.0, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_bump_inflates():
    samples = [(d, math.exp(-d / 2)) for d in (2, 3, 4, 5, 6, 7, 8)]
    samples[3] = (5, samples[3][1] * 1.5)
    fit = fit_clustering(samples, window=(2, 8))
    assert fit.c > fit.regression_c
    assert all(v <= fit.envelope(d) * (1 + 1e-9) for d, v in samples)


def test_fit_errors():
    with pytest.raises(ClusteringError):
        fit_clustering([(2, 0.1), (3, 0.05), (9, 0.01)], window=(2, 3))
    with pytest.raises(ClusteringError, match="decay"):
        fit_clustering([(2, 0.1), (3, 0.2), (4, 0.4)], window=(2, 4))
    assert fit_clustering([(2, 0.0), (3, 0.0), (4, 0.0)], window=(2, 4)).degenerate


@settings(max_examples=80)
@given(
    st.floats(0.05, 5.0), st.floats(0.3, 4.0),
    st.lists(st.floats(-0.5, 0.5), min_size=8, max_size=8),
)
def test_fit_is_envelope(c, xi, noise):
    samples = [(d, c * math.exp(-d / xi + e)) for d, e in zip(range(1, 9), noise)]
    fit = fit_clustering(samples, window=(2, 6))
    assert fit.c > 0 and fit.xi > 0
    for d, v in fit.windowed():
        assert v <= fit.envelope(d) * (1 + 1e-9)


# -- certificates -------------------------------------------------------------


def test_main_certificate_arithmetic():
    H = build_chain(10, "tfim", g=2.0)
    cert = main_certificate(fake_fit(1.0, 2.0), KrausSet(Region([0]), ZK), H, Region([0]), Region([5]))
    assert cert.S_A == pytest.approx(2.0)
    assert cert.S_B == pytest.approx(4.0)
    assert cert.C == pytest.approx(2 * 1 * 2 * 4 * math.exp(0.5))
    assert cert.C == pytest.approx(26.38, abs=5e-3)
    assert cert.mu == pytest.approx(0.5)
    assert cert.separation_d == 5
    assert cert.bound() == pytest.approx(cert.C * math.exp(-2.5))


def test_main_certificate_identity_kraus():
    H = build_chain(10, "tfim", g=2.0)
    cert = main_certificate(fake_fit(), KrausSet(Region([0]), [np.eye(2)]), H, Region([0]), Region([5]))
    assert cert.S_A == pytest.approx(1.0) and cert.C > 0


def test_certificate_refuses_degenerate_fit():
    H = build_chain(6, "field_only", g=1.0)
    fit = fit_clustering([(2, 0.0), (3, 0.0), (4, 0.0)], window=(2, 4))
    with pytest.raises(ClusteringError):
        main_certificate(fit, KrausSet(Region([0]), ZK), H, Region([0]), Region([3]))


def test_duhamel_analytic():
    diff, comm = duhamel_pair(0.1 * PAULI["Z"], [0], PAULI["X"], [0])
    assert diff == pytest.approx(2 * math.sin(0.1), abs=1e-12)
    assert diff == pytest.approx(0.19966, abs=1e-5)
    assert comm == pytest.approx(0.2, abs=1e-12)


def test_duhamel_disjoint_and_zero():
    assert duhamel_pair(PAULI["Y"], [3], PAULI["X"], [1]) == pytest.approx((0.0, 0.0), abs=1e-12)
    assert duhamel_pair(np.zeros((2, 2)), [0], PAULI["X"], [0]) == pytest.approx((0.0, 0.0), abs=1e-15)


def test_duhamel_random_pairs():
    rng = np.random.default_rng(6)
    for _ in range(100):
        G = random_hermitian(2, rng, float(rng.uniform(0.01, 2)))
        h = random_hermitian(4, rng)
        diff, comm = duhamel_pair(G, [1], h, [0, 1])
        GG, hh = np.kron(np.eye(2), G), h
        assert diff <= comm + 1e-9
        assert comm <= 2 * np.linalg.norm(GG, 2) * np.linalg.norm(hh, 2) + 1e-9


def test_duhamel_integral_identity():
    """Midpoint quadrature: U^dag h U - h = -i int_0^1 e^{-isG} [G, h] e^{isG} ds for U = e^{iG}."""
    rng = np.random.default_rng(7)
    G, h = random_hermitian(2, rng), random_hermitian(2, rng)
    U = sl.expm(1j * G)
    lhs = U.conj().T @ h @ U - h
    comm = G @ h - h @ G
    m = 4000
    acc = sum(sl.expm(-1j * s * G) @ comm @ sl.expm(1j * s * G) for s in (np.arange(m) + 0.5) / m) / m
    assert np.abs(lhs - (-1j) * acc).max() < 1e-7
    assert np.linalg.norm(lhs, 2) <= np.linalg.norm(comm, 2) + 1e-12


def test_refined_certificate():
    H = build_chain(10, "tfim", g=2.0)
    K = KrausSet(Region([0]), ZK)
    zero = refined_certificate(fake_fit(), K, Decoder.identity(Region([5]), 2), H, Region([0]), Region([5]))
    assert zero.C_tilde == pytest.approx(0.0, abs=1e-15)
    assert zero.commutator_sums == pytest.approx((0.0, 0.0), abs=1e-15)
    D = Decoder.from_generators(Region([5]), [0.1 * PAULI["Y"], -0.2 * PAULI["Y"]])
    cert = refined_certificate(fake_fit(), K, D, H, Region([0]), Region([5]))
    # [Y, ZZ] and [Y, X] have norm 2 each; three boundary terms of norms 1, 1, 2
    expected_sums = [t * (2 + 2 + 2 * 2) for t in (0.1, 0.2)]
    assert cert.commutator_sums == pytest.approx(expected_sums, abs=1e-12)
    assert cert.C_tilde == pytest.approx(math.exp(0.5) * sum(expected_sums), abs=1e-12)
    assert all(diff <= comm + 1e-9 for _, _, diff, comm in cert.duhamel_pairs)
    with pytest.raises(ValueError):
        refined_certificate(fake_fit(), K, Decoder(Region([5]), [np.eye(2)] * 2), H, Region([0]), Region([5]))


@given(st.integers(0, 4), st.integers(1, 7), st.floats(0.2, 10.0))
def test_geometric_step(a, d, xi):
    H = build_chain(14, "tfim", g=2.0)
    assert geometric_margin(H, Region([a]), Region([a + d]), xi) >= -1e-15
