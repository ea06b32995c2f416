import math

import numpy as np
import pytest

from rdobserver.nonlinearity import linear_phi, make_default_phi
from rdobserver.simulator import (SimConfig, boundary_residuals, compatible_profile, decay_rate_fit,
                                  default_initial_profile, mesh_convergence, simulate_closed_loop,
                                  simulate_linear, write_plot_script)
from rdobserver.spectral import lifting_coefficients
from rdobserver.sturm_liouville import OperatorSpec, closed_form_basis
from rdobserver.synthesis import synthesize_gains


@pytest.fixture(scope="module")
def heat():
    spec = OperatorSpec(math.pi / 2, 0.0, 1.0, 0.0, 1.0)
    b = closed_form_basis(spec, 20)
    lf = lifting_coefficients(spec, b)
    g = synthesize_gains(spec, b, lf.beta_n, 0.3, 3)
    return spec, b, lf, g


def test_default_profile_unit_h1():
    x = np.linspace(0, 1, 20001)
    z = default_initial_profile(x)
    dz = np.gradient(z, x, edge_order=2)
    h1 = math.sqrt(np.trapezoid(z**2 + dz**2, x))
    assert h1 == pytest.approx(1.0, abs=1e-6)


def test_zero_initial_state_stays_zero(ref_spec, ref_basis, ref_lifting, ref_gains):
    tr = simulate_closed_loop(ref_spec, ref_basis, ref_gains, make_default_phi(),
                              SimConfig(z0=lambda x: 0 * x, t_final=1), ref_lifting)
    assert np.max(np.abs(tr.l2)) == 0.0
    assert np.max(np.abs(tr.u)) == 0.0


def test_heat_open_loop_rate(heat):
    spec, b, lf, g = heat
    tr = simulate_closed_loop(spec, b, g, None, SimConfig(open_loop=True, t_final=3), lf)
    fit = decay_rate_fit(tr, (0.5, 3), "l2")
    assert fit.rate == pytest.approx((math.pi / 2) ** 2, rel=1e-4)


def test_heat_mesh_order(heat):
    spec, b, lf, g = heat
    z0n = math.sqrt(0.5) / math.sqrt(0.5 + 0.5 * (math.pi / 2) ** 2)

    def ref(t):
        return z0n * np.exp(-((math.pi / 2) ** 2) * t)

    cfg = SimConfig(open_loop=True, t_final=1, dt=2e-4, record_stride=50)
    study = mesh_convergence(spec, b, g, None, cfg, [21, 41, 81, 161], lf, reference=ref)
    np.testing.assert_allclose(study.orders, 2.0, atol=0.05)


def test_linear_phi_matches_linear_path(ref_spec, ref_basis, ref_lifting, ref_gains):
    cfg = SimConfig(t_final=3)
    a = simulate_closed_loop(ref_spec, ref_basis, ref_gains, linear_phi(1.0), cfg, ref_lifting)
    c = simulate_linear(ref_spec, ref_basis, ref_gains, cfg, ref_lifting)
    for name in ("l2", "h1"):
        rel = np.abs(getattr(a, name) - getattr(c, name)) / np.abs(getattr(c, name))
        assert rel.max() <= 1e-10
    assert c.meta["linear_path"] and not a.meta["linear_path"]


def test_link_residual_small_and_shrinking(ref_spec, ref_basis, ref_lifting, ref_gains):
    res = []
    for m in (51, 101):
        tr = simulate_closed_loop(ref_spec, ref_basis, ref_gains, make_default_phi(),
                                  SimConfig(mesh_nodes=m, t_final=2), ref_lifting)
        res.append(tr.link_residual.max())
    h = 1 / 50
    assert res[0] <= 10 * h**2
    assert res[1] <= res[0] / 3.5


def test_coarse_mesh_still_decays(ref_spec, ref_basis, ref_lifting, ref_gains):
    tr = simulate_closed_loop(ref_spec, ref_basis, ref_gains, make_default_phi(),
                              SimConfig(mesh_nodes=51, t_final=8), ref_lifting)
    assert not tr.diverged
    assert decay_rate_fit(tr).rate > 0.27


def test_compatibility_correction(ref_spec):
    f, amp = compatible_profile(ref_spec, lambda x: 1.0 + 0 * x, 0.5)
    assert amp == pytest.approx(0.5)
    r0, r1 = boundary_residuals(ref_spec, f, 0.5)
    assert abs(r0) < 1e-8 and abs(r1) < 1e-8
    # general angles: both layers engage
    spec = OperatorSpec(0.8, 0.6, 1.0, 0.0, 1.0)
    f, _ = compatible_profile(spec, lambda x: np.cos(x), 0.2)
    # the residual check itself differentiates with h = 1e-4 across a cubic layer
    assert max(map(abs, boundary_residuals(spec, f, 0.2))) < 1e-6


def test_incompatible_start_is_corrected(ref_spec, ref_basis, ref_lifting, ref_gains):
    tr = simulate_closed_loop(ref_spec, ref_basis, ref_gains, make_default_phi(),
                              SimConfig(z0=lambda x: 1.0 + 0 * x, t_final=0.5), ref_lifting)
    assert tr.compat_correction == pytest.approx(1.0)
    assert np.all(np.isfinite(tr.h1))


def test_csv_and_summary(ref_spec, ref_basis, ref_lifting, ref_gains):
    tr = simulate_closed_loop(ref_spec, ref_basis, ref_gains, make_default_phi(),
                              SimConfig(t_final=0.5), ref_lifting)
    lines = tr.to_csv().strip().splitlines()
    assert lines[0] == "t,l2,h1,state_norm,u,u_phi"
    assert len(lines) == tr.times.size + 1
    assert float(lines[1].split(",")[3]) == pytest.approx(tr.initial_norm)
    s = tr.summary()
    assert s["samples"] == 51 and s["schema_version"] == 1
    assert "semilogy" in write_plot_script("traj.csv")


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(mesh_nodes=5)
    with pytest.raises(ValueError):
        SimConfig(dt=0)


def test_decay_fit_errors(ref_spec, ref_basis, ref_lifting, ref_gains):
    tr = simulate_linear(ref_spec, ref_basis, ref_gains, SimConfig(t_final=0.5), ref_lifting)
    with pytest.raises(ValueError, match="fewer than two"):
        decay_rate_fit(tr, (5, 6))
    with pytest.raises(ValueError, match="quantity"):
        decay_rate_fit(tr, (0, 0.5), "energy")
