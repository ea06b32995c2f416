import math

import pytest

from rdobserver.feasibility import SectorSpec
from rdobserver.spectral import build_stability_model, lifting_coefficients, tail_constants
from rdobserver.sturm_liouville import OperatorSpec, closed_form_basis, solve_eigenproblem
from rdobserver.synthesis import synthesize_gains

# reference plant: Neumann at 0, Dirichlet at 1, p = 1, q_tilde = -3, q_c = 4
REF = dict(theta1=math.pi / 2, theta2=0.0, p=1.0, q_tilde=-3.0, q_c=4.0)


@pytest.fixture(scope="session")
def ref_spec():
    return OperatorSpec(**REF)


@pytest.fixture(scope="session")
def ref_basis(ref_spec):
    return solve_eigenproblem(ref_spec, 64)


@pytest.fixture(scope="session")
def ref_closed(ref_spec):
    return closed_form_basis(ref_spec, 64)


@pytest.fixture(scope="session")
def ref_lifting(ref_spec, ref_basis):
    return lifting_coefficients(ref_spec, ref_basis)


@pytest.fixture(scope="session")
def ref_gains(ref_spec, ref_basis, ref_lifting):
    return synthesize_gains(ref_spec, ref_basis, ref_lifting.beta_n, 0.3, 3, poles=[-1.3])


@pytest.fixture(scope="session")
def ref_sector():
    return SectorSpec(1.0, 0.5, 9.02)


@pytest.fixture(scope="session")
def model_factory(ref_spec, ref_basis, ref_lifting, ref_gains):
    cache = {}

    def make(N, sector=True):
        key = (N, sector)
        if key not in cache:
            m1, m34, _ = tail_constants(ref_spec, N)
            cache[key] = build_stability_model(ref_spec, ref_basis, ref_lifting, ref_gains.with_N(N),
                                               includes_psi=sector, tails=(m1.value, m34.value))
        return cache[key]

    return make


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
