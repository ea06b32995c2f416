import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rdobserver import ReactionDiffusionController, SimConfig


@pytest.fixture(scope="module")
def ctrl():
    return ReactionDiffusionController().fit()


def test_params_and_clone():
    est = ReactionDiffusionController(N=5, delta=0.2)
    p = est.get_params()
    assert p["N"] == 5 and p["delta"] == 0.2
    c = clone(est)
    assert c.get_params() == p and not hasattr(c, "gains_")
    est.set_params(N=4)
    assert est.N == 4


def test_fit_predict(ctrl):
    assert ctrl.spec_.q_c == 4.0
    assert ctrl.gains_.K[0, 0] == pytest.approx(-0.82495935, abs=1e-7)
    X = np.array([[1.0, 5.0, 7.0], [-2.0, 0.0, 0.0]])
    np.testing.assert_allclose(ctrl.predict(X), [-0.82495935, 1.6499187], atol=1e-6)
    with pytest.raises(ValueError):
        ctrl.predict(np.zeros((2, 0)))


def test_not_fitted():
    with pytest.raises(NotFittedError):
        ReactionDiffusionController().predict([[1.0]])


def test_invalid_params():
    with pytest.raises(ValueError, match="theta1"):
        ReactionDiffusionController(theta1=2.0).fit()
    with pytest.raises(ValueError, match="method"):
        ReactionDiffusionController(method="spline").fit()


def test_closed_form_matches_numeric(ctrl):
    cf = ReactionDiffusionController(method="closed-form").fit()
    assert cf.gains_.K[0, 0] == pytest.approx(ctrl.gains_.K[0, 0], rel=1e-9)


def test_certify_and_simulate(ctrl):
    cert = ctrl.certify("t3")
    assert cert.feasible and cert.N == 3
    assert not ctrl.certify("t3", N=2).feasible
    assert ctrl.certify("t1").feasible
    tr = ctrl.simulate(config=SimConfig(t_final=3.0, mesh_nodes=51))
    assert tr.state_norm[-1] < tr.state_norm[0]


def test_module_doctest():
    import doctest

    import rdobserver.estimator as mod

    res = doctest.testmod(mod)
    assert res.attempted >= 1 and res.failed == 0
