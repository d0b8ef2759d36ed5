import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def random_matrix(rng, m, n, rank):
    """m x n matrix of the given rank with singular values in [0.1, 10]."""
    if rank == 0:
        return np.zeros((m, n))
    u, _ = np.linalg.qr(rng.standard_normal((m, m)))
    v, _ = np.linalg.qr(rng.standard_normal((n, n)))
    s = np.exp(rng.uniform(np.log(0.1), np.log(10.0), rank))
    return (u[:, :rank] * s) @ v[:, :rank].T


def exact_rank_matrix(rng, m, n, rank):
    """Product of dyadic factors; entries are exact, so the rank is exact too."""
    b = rng.integers(-8, 9, size=(m, rank)) / 4.0
    c = rng.integers(-8, 9, size=(n, rank)) / 4.0
    return (b @ c.T) * 2.0 ** int(rng.integers(-3, 4))


def matrix_corpus(count=1000, seed=0, max_dim=6, exact=True):
    rng = np.random.default_rng(seed)
    make = exact_rank_matrix if exact else random_matrix
    out = []
    for _ in range(count):
        m, n = rng.integers(1, max_dim + 1, size=2)
        rank = int(rng.integers(0, min(m, n) + 1))
        out.append(make(rng, int(m), int(n), rank))
    return out


@pytest.fixture(scope="session")
def corpus():
    return matrix_corpus()


@pytest.fixture(scope="session")
def float_corpus():
    return matrix_corpus(exact=False)


CATALOG_FIELDS = ("euclidean", "euclidean:3", "grushin", "heisenberg", "cc_example", "seq_example:3",
                  "seq_example_limit", "degenerate_pair")
CATALOG_EUCLIDEAN = (("p_dirichlet", {"p": 2}), ("p_dirichlet", {"p": 3}), ("weighted_dirichlet", {}),
                     ("dirichlet_plus_u", {}), ("area", {}), ("zero", {}), ("euclidean_norm_sq", {}))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
