import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("repo", derandomize=True, deadline=None)
settings.load_profile("repo")

from dwellcert.system import SwitchedSystem, benchmark_system


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def bench():
    return benchmark_system()


def random_spd(rng, n, lo=0.5):
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return q @ np.diag(rng.uniform(lo, lo + 5.0, n)) @ q.T


def common_lyapunov_pair(rng, n=2, N=2):
    """Modes that share the quadratic Lyapunov function x^T P x by construction.

    A = P^{-1} (S - Q) with S skew and Q > 0 gives A^T P + P A = -2 Q < 0.
    """
    p = random_spd(rng, n)
    modes = []
    for _ in range(N):
        s = rng.standard_normal((n, n))
        s = s - s.T
        q = random_spd(rng, n, lo=0.2)
        modes.append(np.linalg.solve(p, s - q))
    return SwitchedSystem(tuple(modes)), p


def write_system(path, modes, names=None):
    from dwellcert.io import save_system

    sys = SwitchedSystem(tuple(np.asarray(a, float) for a in modes), tuple(names or ()))
    save_system(sys, path)
    return sys


PRINTED_P = np.array([
    [[[196.665, 17.322], [17.322, 25.408]], [[196.502, 38.442], [38.442, 12.137]],
     [[187.555, 4.997], [4.997, 19.280]], [[196.502, 38.455], [38.455, 11.973]]],
    [[[137.512, 177.991], [177.991, 360.358]]] * 4,
])


@pytest.fixture(scope="session")
def cert_m1(bench):
    from dwellcert.certifier import check_tau_feasible

    cert = check_tau_feasible(bench, 3.0, 1)
    assert cert is not None
    return cert


@pytest.fixture(scope="session")
def cert_m2(bench, cert_m1):
    from dwellcert.certifier import check_tau_feasible

    cert = check_tau_feasible(bench, 2.73, 2, warm=cert_m1)
    assert cert is not None
    return cert


def svec_assignment(prob, values: dict):
    """Unknown vector for ``prob`` with the named variables set to the given values."""
    x = np.zeros(prob.num_scalars)
    for name, val in values.items():
        var = prob.variables[name]
        if var.kind == "scalar":
            x[var.indices[0]] = val
            continue
        k = 0
        for i in range(var.n):
            for j in range(i, var.n):
                x[var.indices[k]] = val[i, j]
                k += 1
    return x


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        ok, detail = RESULTS[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
