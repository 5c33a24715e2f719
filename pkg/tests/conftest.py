import numpy as np
import pytest

from malmit import topology, virus


def charpoly_roots(M):
    """Independent eigenvalue oracle: characteristic polynomial by the
    Faddeev-LeVerrier trace recursion, roots via the companion matrix."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    Mk = np.eye(n)
    for k in range(1, n + 1):
        Mk = M @ Mk
        coeffs[k] = -np.trace(Mk) / k
        Mk += coeffs[k] * np.eye(n)
    return np.sort(np.roots(coeffs).real)


@pytest.fixture
def edge2():
    return topology.from_edge_list(2, [(0, 1)])


@pytest.fixture
def path3():
    return topology.from_edge_list(3, [(0, 1), (1, 2)])


@pytest.fixture
def triangle():
    return topology.from_edge_list(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def coex2():
    """Two coexisting viruses with arrival rates 1 and 2 (mu 2/4, p 0.5)."""
    return virus.coexisting([1.0, 2.0], mu=[2.0, 4.0])


@pytest.fixture
def comp2():
    """Two competing viruses with arrival rates 1 and 2."""
    return virus.competing([1.0, 2.0], mu=[2.0, 4.0])


@pytest.fixture
def single():
    return virus.coexisting([1.5], mu=[3.0])
