import dataclasses

import numpy as np
import pytest

from rdobserver.feasibility import (FeasibilityCertificate, SectorSpec, TheoremId, assemble_theta,
                                    compute_margins, constructive_certificate, max_sector_size,
                                    min_feasible_N, search_certificate, verify_certificate)
from rdobserver.synthesis import solve_shifted_lyapunov


@pytest.fixture(scope="module")
def t3_cert(model_factory, ref_sector):
    return search_certificate(model_factory(3), "t3", ref_sector)


def test_theorem_parse():
    assert TheoremId.parse("T3") is TheoremId.T3_H1_sector
    assert TheoremId.parse("c4_l2_sector") is TheoremId.C4_L2_sector
    assert TheoremId.C4_L2_sector.sector and TheoremId.C4_L2_sector.l2
    assert TheoremId.T3_H1_sector.alpha_min == 1.5
    with pytest.raises(ValueError):
        TheoremId.parse("t9")


def test_sector_spec_validation():
    with pytest.raises(ValueError):
        SectorSpec(1.0, 1.0, 9.0)
    with pytest.raises(ValueError):
        SectorSpec(1.0, 0.5, 0.0)


def test_pairing_errors(model_factory, ref_sector):
    with pytest.raises(ValueError, match="needs a SectorSpec"):
        assemble_theta(model_factory(3), "t3", np.eye(6), 2, 1, 1, 1)
    with pytest.raises(ValueError, match="linear model"):
        assemble_theta(model_factory(3), "t1", np.eye(6), 2, 1, 1)
    with pytest.raises(ValueError, match="shape"):
        assemble_theta(model_factory(3, False), "t1", np.eye(5), 2, 1, 1)


def test_trivial_reduction(model_factory):
    # without lifting tails Theta1 is the Lyapunov block bordered by P L_cal
    m = dataclasses.replace(model_factory(3, False), r_a=0.0, r_b=0.0)
    P = solve_shifted_lyapunov(m.F, m.delta)
    blocks = assemble_theta(m, "t1", P, 2.0, 1.0, 1.0)
    np.testing.assert_allclose(blocks.theta1[:6, :6], -np.eye(6), atol=1e-10)
    np.testing.assert_allclose(blocks.theta1[:6, 6], (P @ m.L_cal).ravel())
    assert blocks.theta1[6, 6] == -1.0


def test_theta2_sign_flips_with_alpha(model_factory):
    m = model_factory(3, False)
    P = np.eye(6)
    near = assemble_theta(m, "t1", P, 1.0 + 1e-6, 0.1, 1.0).theta2
    far = assemble_theta(m, "t1", P, 10.0, 0.1, 1.0).theta2
    assert near > 0 > far


def test_theta2_theta3_l2_closed_form(model_factory):
    m = model_factory(4, False)
    lam = m.lambda_next
    b = assemble_theta(m, "t2", np.eye(8), 2.0, 0.5, 1.0)
    assert b.theta2 == pytest.approx(2 * (-lam + m.q_c + m.delta + 0.5) + 0.5 * m.m_tail34 * lam**0.75)
    assert b.theta3 == pytest.approx(2 - 0.5 * m.m_tail34 / lam**0.25)


def test_t3_search_reference(t3_cert):
    assert t3_cert.feasible
    assert t3_cert.search_margin == pytest.approx(1.0, abs=1e-5)
    assert t3_cert.alpha > 1.5
    assert t3_cert.margins.lambda_max_theta1 <= 1e-9


def test_t3_infeasible_at_two(model_factory, ref_sector):
    cert = search_certificate(model_factory(2), "t3", ref_sector)
    assert not cert.feasible
    assert cert.search_margin < 0


def test_min_feasible_n_t3(ref_spec, ref_basis, ref_lifting, ref_gains, ref_sector):
    res = min_feasible_N(ref_spec, ref_basis, ref_lifting, ref_gains, "t3", ref_sector, N_max=6)
    assert res.N == 3
    assert [h["feasible"] for h in res.history] == [False, True]


def test_linear_theorems_feasible(model_factory):
    for th in ("t1", "t2"):
        assert search_certificate(model_factory(3, False), th).feasible


def test_t1_constructive_large_n(model_factory):
    cert = constructive_certificate(model_factory(25, False), "t1")
    assert cert.feasible
    assert cert.alpha == 2.0 and cert.gamma == pytest.approx(1 / 25)


def test_constructive_t1_threshold(model_factory):
    assert not constructive_certificate(model_factory(2, False), "t1").feasible
    assert constructive_certificate(model_factory(3, False), "t1").feasible


def test_constructive_tau(model_factory, ref_sector):
    cert = constructive_certificate(model_factory(5), "t3", ref_sector)
    assert cert.tau > 1
    assert cert.tau >= 1 + model_factory(5).a_norm_sq


def test_gamma_rescaling(t3_cert, model_factory):
    m = model_factory(3)
    base = assemble_theta(m, "t3", t3_cert.P, t3_cert.alpha, t3_cert.beta, 1.0, t3_cert.tau, t3_cert.sector)
    for g in (0.1, 3.7):
        r = t3_cert.rescaled(g)
        blk = assemble_theta(m, "t3", r.P, r.alpha, r.beta, r.gamma, r.tau, r.sector)
        np.testing.assert_allclose(blk.theta1, g * base.theta1, atol=1e-9 * g)
        assert blk.theta2 == pytest.approx(g * base.theta2)
        assert verify_certificate(r, m).feasible


def test_monotone_in_sector(t3_cert, model_factory):
    m = model_factory(3)
    c = t3_cert
    for dk, M in ((0.3, 9.02), (0.5, 5.0), (0.1, 1.0)):
        s = SectorSpec(1.0, dk, M)
        assert compute_margins(m, "t3", c.P, c.alpha, c.beta, 1.0, c.tau, s).feasible
    # the derivative bound enters through r_b M^2 E^T E, which is PSD
    lm = [compute_margins(m, "t3", c.P, c.alpha, c.beta, 1.0, c.tau, SectorSpec(1.0, 0.5, M)).lambda_max_theta1
          for M in (1.0, 5.0, 9.02, 20.0)]
    assert np.all(np.diff(lm) >= -1e-12)


def test_tampered_certificate(t3_cert, model_factory):
    bad = dataclasses.replace(t3_cert, P=-t3_cert.P)
    assert not verify_certificate(bad, model_factory(3)).feasible
    asym = t3_cert.P.copy()
    asym[0, 1] += 1.0
    assert verify_certificate(dataclasses.replace(t3_cert, P=asym), model_factory(3)).min_eig_P == -np.inf
    with pytest.raises(ValueError, match="N=3"):
        verify_certificate(t3_cert, model_factory(4))


def test_certificate_json_roundtrip(t3_cert, model_factory):
    c = FeasibilityCertificate.from_json(t3_cert.to_json())
    np.testing.assert_array_equal(c.P, t3_cert.P)
    assert c.theorem is TheoremId.T3_H1_sector
    assert c.sector == t3_cert.sector
    assert verify_certificate(c, model_factory(3)).feasible
    d = t3_cert.to_dict()
    d["schema_version"] = 99
    with pytest.raises(ValueError, match="schema_version"):
        FeasibilityCertificate.from_dict(d)


def test_fixed_alpha_search(model_factory, ref_sector, t3_cert):
    cert = search_certificate(model_factory(3), "t3", ref_sector, alpha=round(t3_cert.alpha, 3))
    assert cert.feasible
    assert cert.info["alpha_mode"] == "fixed"


@pytest.mark.slow
def test_max_sector_size_reference(model_factory):
    pt = max_sector_size(model_factory(15), 1.0, 9.02, resolution=1e-3)
    assert pt.dk_max == pytest.approx(0.5434, abs=2e-3)
    assert pt.certificate.feasible
    assert pt.upper - pt.lower <= 1e-3


def test_linear_scans(ref_spec, ref_basis, ref_lifting, ref_gains):
    n1 = min_feasible_N(ref_spec, ref_basis, ref_lifting, ref_gains, "t1", N_max=10).N
    n2 = min_feasible_N(ref_spec, ref_basis, ref_lifting, ref_gains, "t2", N_max=10).N
    assert n1 == 2 and n2 == 2


def test_fixed_alpha_side_by_side(model_factory, ref_sector):
    m = model_factory(3)
    got = {a: search_certificate(m, "t3", ref_sector, alpha=a).feasible for a in (1.6, 2.0, 5.0)}
    assert got == {1.6: False, 2.0: True, 5.0: True}
