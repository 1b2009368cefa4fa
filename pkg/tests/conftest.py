import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import finslereig as fe
from finslereig.eigensolver import SolverOpts


@pytest.fixture(scope="session")
def euclid():
    return fe.EuclideanNorm()


@pytest.fixture(scope="session")
def ellipse41():
    return fe.EllipseNorm(4.0, 0.0, 1.0)


@pytest.fixture(scope="session")
def lq4():
    return fe.LqNorm(4.0)


@pytest.fixture(scope="session")
def all_models():
    return [
        fe.EuclideanNorm(),
        fe.EllipseNorm(4.0, 0.0, 1.0),
        fe.EllipseNorm(2.0, 0.6, 1.5),
        fe.LqNorm(2.0),
        fe.LqNorm(4.0),
        fe.LqNorm(6.0),
        fe.RegularizedNorm(fe.LqNorm(4.0), 0.01),
        fe.RegularizedNorm(fe.EuclideanNorm(), 0.5),
    ]


@pytest.fixture(scope="session")
def disk_mesh():
    return fe.generate(fe.Disk(1.0), 0.1)


@pytest.fixture(scope="session")
def disk_pair(disk_mesh, euclid):
    return fe.solve_first(disk_mesh, euclid, 2.0, SolverOpts(tol=1e-13))


@pytest.fixture(scope="session")
def square_mesh():
    return fe.generate(fe.Square(1.0), 0.05)


@pytest.fixture(scope="session")
def square_pair(square_mesh, euclid):
    return fe.solve_first(square_mesh, euclid, 2.0, SolverOpts(tol=1e-13))
