"""Shared, session-scoped fixtures (the dense solves are the expensive part)."""
import numpy as np
import pytest

from local_lagrange import (
    KernelSpec,
    NeighborIndex,
    assemble,
    build_local_basis,
    gen_fibonacci,
    gen_icosahedral,
    lagrange_all,
    mesh_stats,
)


@pytest.fixture(scope="session")
def tps2():
    return KernelSpec.sphere(2)


@pytest.fixture(scope="session")
def fib400(tps2):
    nodes = gen_fibonacci(400)
    system = assemble(tps2, nodes)
    return nodes, system, lagrange_all(system)


@pytest.fixture(scope="session")
def fib900(tps2):
    nodes = gen_fibonacci(900)
    return nodes, mesh_stats(nodes), lagrange_all(assemble(tps2, nodes))


@pytest.fixture(scope="session")
def ico12(tps2):
    nodes = gen_icosahedral(0)
    system = assemble(tps2, nodes)
    return nodes, system, lagrange_all(system)


@pytest.fixture(scope="session")
def ico642(tps2):
    nodes = gen_icosahedral(3)
    return nodes, build_local_basis(tps2, nodes, NeighborIndex(nodes))


@pytest.fixture(scope="session")
def ico2562(tps2):
    nodes = gen_icosahedral(4)
    return nodes, build_local_basis(tps2, nodes, NeighborIndex(nodes))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
