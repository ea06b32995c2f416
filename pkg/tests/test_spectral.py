import math

import numpy as np
import pytest

from rdobserver.spectral import (HurwitzError, LiftingError, StabilityModel, build_stability_model,
                                 input_coefficients, lifting_coefficients, lifting_denominator,
                                 lifting_profiles, tail_constants, tail_mphi, tail_norms)
from rdobserver.sturm_liouville import OperatorSpec, closed_form_basis, trace_spectrum
from rdobserver.synthesis import GainSet


def test_lifting_norms(ref_lifting):
    # a = 2 + 3 x^2, b = -x^2
    assert ref_lifting.a_norm_sq == pytest.approx(9.8, rel=1e-10)
    assert ref_lifting.b_norm_sq == pytest.approx(0.2, rel=1e-10)


def test_profiles_closed_form(ref_spec):
    x = np.linspace(0, 1, 7)
    a, b = lifting_profiles(ref_spec, x)
    np.testing.assert_allclose(a, 2 + 3 * x**2)
    np.testing.assert_allclose(b, -(x**2))
    assert lifting_denominator(math.pi / 2) == pytest.approx(2.0)


def test_beta_identity(ref_basis, ref_lifting):
    lam = ref_basis.lambdas[:20]
    rel = ref_lifting.identity_residual[:20] / (1 + lam)
    assert rel.max() <= 1e-6


def test_beta_reference(ref_lifting):
    k = (2 * np.arange(1, 6) - 1) * math.pi / 2
    expect = math.sqrt(2) * k * (-1.0) ** np.arange(2, 7)
    np.testing.assert_allclose(ref_lifting.beta_n[:5], expect, rtol=1e-7)
    assert ref_lifting.beta_n[0] == pytest.approx(2.221441469, rel=1e-8)


def test_identity_other_angles():
    spec = OperatorSpec(0.9, 0.7, 1.5, -1.0, 2.0)
    b = closed_form_basis(spec, 40)
    lf = lifting_coefficients(spec, b)
    assert np.max(lf.identity_residual[:20] / (1 + b.lambdas[:20])) < 1e-6


def test_identity_failure_detected(ref_spec, ref_basis):
    # a wrong q_c breaks the beta identity
    bad = OperatorSpec(ref_spec.theta1, ref_spec.theta2, ref_spec.p, ref_spec.q_tilde, 5.0)
    with pytest.raises(LiftingError, match="mode"):
        lifting_coefficients(bad, ref_basis)


def test_parseval_tails(ref_lifting):
    ra, rb = tail_norms(ref_lifting, 3)
    assert ra == pytest.approx(9.8 - np.sum(ref_lifting.a_n[:3] ** 2))
    assert 0 <= rb < ra
    # tails decrease in N
    vals = [tail_norms(ref_lifting, n)[0] for n in range(1, 10)]
    assert np.all(np.diff(vals) <= 0)
    with pytest.raises(ValueError):
        tail_norms(ref_lifting, 1000)


@pytest.mark.parametrize("N,exponent", [(3, 1.0), (3, 0.75), (16, 1.0), (16, 0.75)])
def test_tail_sum_against_brute_force(ref_spec, N, exponent):
    m1, m34, _ = tail_constants(ref_spec, N)
    got = m1 if exponent == 1.0 else m34
    # brute force with far more closed-form modes, plus the integral tail
    ts = trace_spectrum(ref_spec, 400_000)
    brute = float(np.sum(ts.phi0[N:] ** 2 / ts.lambdas[N:] ** exponent))
    assert got.value >= brute * (1 - 1e-12)
    assert got.value <= brute * 1.1


def test_tail_sum_exact_exponent_one(ref_spec):
    # sum_{n>N} 2 / (((2n-1) pi/2)^2 + 1) has no closed form; check against a long direct sum
    m1, _, _ = tail_constants(ref_spec, 3)
    n = np.arange(4, 5_000_001, dtype=float)
    direct = np.sum(2.0 / (((2 * n - 1) * math.pi / 2) ** 2 + 1))
    assert m1.value == pytest.approx(direct, rel=0.1)
    assert m1.value >= direct


def test_tail_mphi_errors(ref_spec):
    ts = trace_spectrum(ref_spec, 100)
    with pytest.raises(ValueError):
        tail_mphi(ts, 3, 0.5, ref_spec)
    with pytest.raises(Exception):
        tail_mphi(ts, 3, 1.0, ref_spec)


def test_input_coefficients_dirichlet(ref_spec, ref_basis):
    np.testing.assert_allclose(input_coefficients(ref_spec, ref_basis), -ref_basis.dphi1)


def test_F_block_spectrum(model_factory, ref_basis):
    for N in (3, 8, 16):
        m = model_factory(N)
        ev = np.sort(np.linalg.eigvals(m.F).real)
        blocks = np.concatenate([
            np.linalg.eigvals(m.A0 + m.k_phi * m.B0 @ m.K).real,
            np.linalg.eigvals(m.A0 - m.L @ m.C0).real,
            np.diag(m.A1), np.diag(m.A1),
        ])
        np.testing.assert_allclose(ev, np.sort(blocks), atol=1e-8 * (1 + np.abs(blocks).max()))
        assert m.dim == 2 * N


def test_model_shapes(model_factory):
    m = model_factory(5)
    assert m.F.shape == (10, 10)
    assert m.L_cal.shape == m.L_psi.shape == (10, 1)
    assert m.E.shape == (1, 12)
    lin = model_factory(5, sector=False)
    assert lin.E.shape == (1, 11)
    assert m.lambda_next == pytest.approx(((11 * math.pi / 2) ** 2) + 1, rel=1e-9)


def test_model_roundtrip(model_factory):
    m = model_factory(4)
    m2 = StabilityModel.from_dict(m.to_dict())
    np.testing.assert_array_equal(m.F, m2.F)
    assert m2.m_tail == m.m_tail


def test_hurwitz_error(ref_spec, ref_basis, ref_lifting):
    bad = GainSet(1, 3, np.array([[-0.1]]), np.array([[1.3]]), 0.3)
    with pytest.raises(HurwitzError, match="A0 \\+ k_phi B0 K"):
        build_stability_model(ref_spec, ref_basis, ref_lifting, bad, tails=(0.0, 0.0))
    bad = GainSet(1, 3, np.array([[-0.82]]), np.array([[0.01]]), 0.3)
    with pytest.raises(HurwitzError, match="A0 - L C0"):
        build_stability_model(ref_spec, ref_basis, ref_lifting, bad, tails=(0.0, 0.0))
