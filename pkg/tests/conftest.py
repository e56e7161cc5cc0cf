import pytest

from extsnyder.fock_core import FockBasis, ModelParams

# generic parameters: no accidental equalities between masses and frequencies
GENERIC = dict(beta=0.7, tensor_mass=1.3, omega=1.1, omega_tensor=2.3)


@pytest.fixture
def generic_params():
    def make(d=2, n_max=4, **kw):
        return ModelParams(d=d, n_max=n_max, **{**GENERIC, **kw})
    return make


@pytest.fixture
def basis_for():
    cache = {}

    def make(params):
        key = (params.d, params.n_max)
        if key not in cache:
            cache[key] = FockBasis(params)
        return cache[key]
    return make


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in RESULTS:
        terminalreporter.write_line(line)
