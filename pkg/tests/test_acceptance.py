"""Acceptance criteria A1 to A10 for the reference configuration.

Every test prints one ``A<k> ... PASS/FAIL`` line (also collected into the
pytest terminal summary).  Run directly for the lines alone::

    python3 tests/test_acceptance.py
"""

import math
import time

import numpy as np
import pytest

from rdobserver.feasibility import (SectorSpec, assemble_theta, max_sector_size, min_feasible_N,
                                    search_certificate)
from rdobserver.nonlinearity import linear_phi, make_default_phi, rescale_sector, validate_sector
from rdobserver.simulator import SimConfig, decay_rate_fit, lyapunov_trace, simulate_closed_loop
from rdobserver.spectral import build_stability_model, lifting_coefficients, tail_constants, tail_norms
from rdobserver.sturm_liouville import OperatorSpec, closed_form_basis, solve_eigenproblem
from rdobserver.synthesis import lemma1_bound_study, solve_shifted_lyapunov, synthesize_gains

RESULTS = []

DELTA = 0.3
POLES = [-1.3]
SECTOR = SectorSpec(1.0, 0.5, 9.02)
# oracle for the bounded Lyapunov norm: max ||P^N|| / min ||P^N|| over N = 2..20 on the first run
LEMMA1_RATIO = 1.0000100
LEMMA1_LIMIT = 10.0


def report(tag, title, passed, detail, elapsed):
    line = f"{tag:4s} {title:32s} {'PASS' if passed else 'FAIL'}  {detail}  [{elapsed:.2f} s]"
    RESULTS.append(line)
    print(line)
    return passed


def _setup(q_tilde=-3.0, q_c=4.0, n_modes=64):
    spec = OperatorSpec(math.pi / 2, 0.0, 1.0, q_tilde, q_c)
    basis = solve_eigenproblem(spec, n_modes)
    lf = lifting_coefficients(spec, basis)
    g = synthesize_gains(spec, basis, lf.beta_n, DELTA, 3, poles=POLES)
    return spec, basis, lf, g


def _model(spec, basis, lf, g, N, sector=True):
    m1, m34, _ = tail_constants(spec, N)
    return build_stability_model(spec, basis, lf, g.with_N(N), includes_psi=sector,
                                 tails=(m1.value, m34.value))


@pytest.fixture(scope="module")
def ref():
    return _setup()


@pytest.fixture(scope="module")
def t3_cert(ref):
    return search_certificate(_model(*ref, 3), "t3", SECTOR)


def test_A1_eigen_oracle():
    t0 = time.perf_counter()
    spec = OperatorSpec(math.pi / 2, 0.0, 1.0, -3.0, 4.0)
    basis = solve_eigenproblem(spec, 30)
    el = time.perf_counter() - t0
    n = np.arange(1, 31)
    exact = ((2 * n - 1) * math.pi / 2) ** 2 + 1
    err = float(np.max(np.abs(basis.lambdas - exact) / exact))
    ok = err <= 1e-8 and el < 5
    assert report("A1", "eigenvalue oracle", ok, f"max rel err {err:.2e}", el)


def test_A2_gains():
    t0 = time.perf_counter()
    spec, basis, lf, g = _setup()
    el = time.perf_counter() - t0
    K, L = float(g.K[0, 0]), float(g.L[0, 0])
    ok = abs(K + 0.8250) <= 5e-4 and abs(L - 1.2958) <= 5e-4
    assert report("A2", "gain reproduction", ok, f"K={K:.6f} L={L:.6f}", el)
    # the time limit covers the synthesis step itself
    t0 = time.perf_counter()
    synthesize_gains(spec, basis, lf.beta_n, DELTA, 3, poles=POLES)
    assert time.perf_counter() - t0 < 1


def test_A3_h1_sector_feasibility(ref):
    t0 = time.perf_counter()
    scan = min_feasible_N(*ref, "t3", SECTOR, N_max=6)
    el = time.perf_counter() - t0
    ok = scan.N is not None and scan.N <= 6 and el < 60
    flag = "" if scan.N == 3 else " (differs from reference N=3)"
    alpha = scan.certificate.alpha if scan.certificate else float("nan")
    assert report("A3", "H1 sector certificate", ok, f"smallest N={scan.N}, alpha={alpha:.3f}{flag}", el)


def test_A4_l2_sector_feasibility(ref):
    t0 = time.perf_counter()
    cert = search_certificate(_model(*ref, 16), "c4", SECTOR)
    scan = min_feasible_N(*ref, "c4", SECTOR, N_max=20)
    el = time.perf_counter() - t0
    ok = cert.feasible and el < 300
    assert report("A4", "L2 sector certificate", ok,
                  f"feasible at N=16: {cert.feasible}; smallest N={scan.N} (reference 16, flagged)", el)


@pytest.mark.slow
def test_A5_sector_sweep():
    t0 = time.perf_counter()
    ref_vals = {-3.0: 0.54, -5.0: 0.24, -7.0: 0.12, -9.0: 0.03}
    dks = []
    for qt in ref_vals:
        q_c = float(math.ceil(-qt) + 1)
        spec, basis, lf, g = _setup(qt, q_c)
        pt = max_sector_size(_model(spec, basis, lf, g, 15), 1.0, 9.02, resolution=1e-3)
        dks.append(pt.dk_max)
    el = time.perf_counter() - t0
    dec = all(a > b for a, b in zip(dks, dks[1:]))
    band = all(abs(d - r) <= 0.15 for d, r in zip(dks, ref_vals.values()))
    ok = dec and el < 900
    vals = ", ".join(f"{d:.4f}" for d in dks)
    assert report("A5", "sector width sweep", ok,
                  f"dk_max=[{vals}] decreasing={dec} soft band={band}", el)
    assert band


def test_A6_certified_decay(ref, t3_cert):
    spec, basis, lf, g = ref
    t0 = time.perf_counter()
    tr = simulate_closed_loop(spec, basis, g, make_default_phi(), SimConfig(t_final=10), lf)
    fit = decay_rate_fit(tr, (1.0, 8.0))
    lyap = lyapunov_trace(tr, t3_cert, _model(*ref, 3), basis)
    el = time.perf_counter() - t0
    ok = fit.rate >= 0.9 * DELTA and el < 120
    assert report("A6", "certified decay", ok,
                  f"rate {fit.rate:.4f} >= 0.27, Lyapunov violations {lyap.violations}", el)


def test_A7_divergence_demo(ref):
    spec, basis, lf, g = ref
    t0 = time.perf_counter()
    phi = rescale_sector(make_default_phi(), 0.72)
    tr = simulate_closed_loop(spec, basis, g, phi, SimConfig(t_final=20), lf)
    el = time.perf_counter() - t0
    ratio = float(np.max(tr.state_norm) / tr.initial_norm)
    ok = tr.diverged and el < 120
    assert report("A7", "divergence at dk=0.72", ok,
                  f"diverged={tr.diverged}, max norm ratio {ratio:.3g} (needs 1e3)", el)


def test_A8_linear_equivalence(ref):
    spec, basis, lf, g = ref
    t0 = time.perf_counter()
    cfg = SimConfig(t_final=10)
    a = simulate_closed_loop(spec, basis, g, linear_phi(1.0), cfg, lf)
    b = simulate_closed_loop(spec, basis, g, None, cfg, lf)
    el = time.perf_counter() - t0
    rel = max(float(np.max(np.abs(getattr(a, k) - getattr(b, k)) / np.abs(getattr(b, k))))
              for k in ("l2", "h1", "state_norm"))
    ok = rel <= 1e-10 and el < 60
    assert report("A8", "linear-phi equivalence", ok, f"max rel diff {rel:.2e}", el)


def test_A9_structural_identities(ref, t3_cert):
    spec, basis, lf, g = ref
    t0 = time.perf_counter()
    checks = {}
    lam = basis.lambdas
    checks["beta"] = float(np.max(lf.identity_residual[:30] / (1 + lam[:30]))) <= 1e-6
    ra, rb = tail_norms(lf, 3)
    checks["parseval"] = abs(ra - (9.8 - np.sum(lf.a_n[:3] ** 2))) <= 1e-10 and abs(
        rb - (0.2 - np.sum(lf.b_n[:3] ** 2))) <= 1e-10
    md = _model(*ref, 16)
    ev = np.sort(np.linalg.eigvals(md.F).real)
    blocks = np.sort(np.concatenate([np.linalg.eigvals(md.A0 + md.B0 @ md.K).real,
                                     np.linalg.eigvals(md.A0 - md.L @ md.C0).real,
                                     np.diag(md.A1), np.diag(md.A1)]))
    checks["block_spectrum"] = float(np.max(np.abs(ev - blocks) / (1 + np.abs(blocks)))) <= 1e-8
    P = solve_shifted_lyapunov(md.F, DELTA)
    checks["lyapunov"] = float(np.linalg.norm(md.F.T @ P + P @ md.F + 2 * DELTA * P + np.eye(md.dim))) <= 1e-10
    m3 = _model(*ref, 3)
    c = t3_cert
    base = assemble_theta(m3, "t3", c.P, c.alpha, c.beta, 1.0, c.tau, SECTOR)
    r = c.rescaled(0.25)
    sc = assemble_theta(m3, "t3", r.P, r.alpha, r.beta, r.gamma, r.tau, SECTOR)
    checks["rescaling"] = bool(np.allclose(sc.theta1, 0.25 * base.theta1, atol=1e-10)
                               and abs(sc.theta2 - 0.25 * base.theta2) <= 1e-9)
    rep = validate_sector(make_default_phi())
    checks["sector_forms"] = rep.forms_agree and rep.passed
    resid = []
    for m in (51, 101):
        tr = simulate_closed_loop(spec, basis, g, make_default_phi(), SimConfig(mesh_nodes=m, t_final=2), lf)
        resid.append(float(tr.link_residual.max()))
    checks["modal_link"] = resid[0] <= 10 * (1 / 50) ** 2 and resid[1] <= resid[0] / 3.5
    el = time.perf_counter() - t0
    ok = all(checks.values())
    bad = [k for k, v in checks.items() if not v]
    assert report("A9", "structural identities", ok,
                  f"{len(checks) - len(bad)}/{len(checks)} hold" + (f", failing {bad}" if bad else ""), el)


def test_A10_lemma1(ref):
    spec, basis, lf, g = ref
    t0 = time.perf_counter()
    st = lemma1_bound_study(spec, basis, lf, g, range(2, 21))
    el = time.perf_counter() - t0
    ok = st.ratio <= LEMMA1_LIMIT and st.ratio == pytest.approx(LEMMA1_RATIO, abs=1e-6)
    assert report("A10", "bounded Lyapunov norm", ok,
                  f"max/min ||P^N|| = {st.ratio:.7f} (N=2..20, limit 10)", el)


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
