import numpy as np
import pytest

from switchyard.grid import Grid, build_grid
from switchyard.power_flow import InjectionProfile


@pytest.fixture
def triangle_grid() -> Grid:
    return build_grid("tri", 3,
                      [(0, 1, 1.0, 1.0), (0, 2, 1.0, 1.0), (2, 1, 1.0, 1.0)],
                      [(0, 1.0)], [1, 2])


@pytest.fixture
def path_grid() -> Grid:
    return build_grid("path", 3,
                      [(0, 1, 1.0, 1.0), (1, 2, 1.0, 1.0)],
                      [(0, 1.0)], [2])


@pytest.fixture
def two_node_grid() -> Grid:
    return build_grid("pair", 2, [(0, 1, 1.0, 0.5)], [(0, 1.0)], [1])


def random_connected_grid(rng: np.random.Generator, max_sub: int = 5) -> Grid:
    """Small random grid: a spanning tree plus extra chords, gens and loads."""
    n_sub = int(rng.integers(2, max_sub + 1))
    lines = []
    for s in range(1, n_sub):
        other = int(rng.integers(0, s))
        lines.append((other, s, float(rng.uniform(0.05, 1.0)),
                      float(rng.uniform(0.4, 2.0))))
    n_extra = int(rng.integers(0, n_sub))
    for _ in range(n_extra):
        a, b = rng.choice(n_sub, size=2, replace=False)
        lines.append((int(a), int(b), float(rng.uniform(0.05, 1.0)),
                      float(rng.uniform(0.4, 2.0))))
    n_gen = int(rng.integers(1, 3))
    gens = [(int(rng.integers(0, n_sub)), float(rng.uniform(0.5, 2.0)))
            for _ in range(n_gen)]
    n_load = int(rng.integers(1, 3))
    loads = [int(rng.integers(0, n_sub)) for _ in range(n_load)]
    return build_grid("rand", n_sub, lines, gens, loads)


def random_injections(grid: Grid, rng: np.random.Generator) -> InjectionProfile:
    p_load = rng.uniform(0.0, 1.0, grid.n_loads)
    p_gen = rng.uniform(0.0, 1.0, grid.n_generators)
    return InjectionProfile(p_gen, p_load)
