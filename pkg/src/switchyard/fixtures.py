"""Shipped fixture grids and scenario suites.

Three desk-scale networks exercise every code path: a four-substation
illustration grid, a five-substation training grid whose middle substations
reward bus splits under stress, and a fourteen-substation evaluation grid
with the classic 14-bus interconnection pattern.  Thermal limits are tuned
so nominal operation sits well below the 0.95 safety threshold while single
line losses near the daily peak push some line above 1.0 unless the topology
is adapted.
"""

from __future__ import annotations

from datetime import datetime

import numpy as np

from .grid import Grid, build_grid
from .scenario import (Chronic, ChronicProfile, MaintenanceEvent,
                       OpponentSchedule, generate_chronic)


def fig_grid() -> Grid:
    """Four substations, five lines, two generators, two loads."""
    lines = [
        # origin, extremity, reactance, thermal_limit
        (0, 1, 0.20, 1.20),
        (0, 2, 0.20, 0.90),
        (1, 2, 0.25, 0.90),
        (1, 3, 0.20, 1.00),
        (2, 3, 0.25, 0.90),
    ]
    generators = [(0, 1.6), (1, 1.2)]
    loads = [2, 3]
    layout = [(0.0, 1.0), (1.0, 1.0), (0.0, 0.0), (1.0, 0.0)]
    return build_grid("fig4", 4, lines, generators, loads, layout)


def training_grid() -> Grid:
    """Five substations, nine lines, two generators, three loads.

    Limits are sized so a single loss of line 1, 2, 5 or 6 near the daily
    peak overloads a neighbour, while a bus split at substation 1, 2 or 3
    brings the worst ratio back under 0.93.
    """
    lines = [
        (0, 1, 0.20, 0.80),
        (0, 2, 0.20, 1.20),
        (1, 2, 0.25, 0.70),
        (1, 3, 0.20, 0.68),
        (2, 3, 0.25, 0.36),
        (2, 4, 0.20, 0.36),
        (3, 4, 0.20, 0.36),
        (0, 3, 0.30, 1.26),
        (1, 4, 0.35, 0.80),
    ]
    generators = [(0, 3.2), (1, 1.8, True)]
    loads = [2, 3, 4]
    layout = [(0.0, 2.0), (2.0, 2.0), (0.5, 1.0), (1.5, 1.0), (1.0, 0.0)]
    return build_grid("train5", 5, lines, generators, loads, layout)


def eval_grid() -> Grid:
    """Fourteen substations with the standard 14-bus line pattern."""
    lines = [
        (0, 1, 0.06, 2.44), (0, 4, 0.22, 1.39), (1, 2, 0.20, 0.44),
        (1, 3, 0.18, 1.35), (1, 4, 0.17, 1.33), (2, 3, 0.17, 0.74),
        (3, 4, 0.04, 0.33), (3, 6, 0.21, 0.82), (3, 8, 0.56, 0.75),
        (4, 5, 0.25, 1.45), (5, 10, 0.20, 0.54), (5, 11, 0.26, 0.49),
        (5, 12, 0.13, 0.84), (6, 7, 0.18, 0.80), (6, 8, 0.11, 1.52),
        (8, 9, 0.08, 0.83), (8, 13, 0.27, 0.56), (9, 10, 0.19, 0.23),
        (11, 12, 0.20, 0.16), (12, 13, 0.35, 0.19),
    ]
    generators = [(0, 3.5), (1, 1.5), (2, 1.2), (5, 1.2, True), (7, 1.0)]
    loads = [1, 2, 3, 4, 5, 8, 9, 10, 11, 12, 13]
    layout = [(0.0, 4.0), (1.5, 3.5), (3.0, 4.0), (2.5, 2.5), (1.0, 2.5),
              (1.0, 1.0), (3.5, 2.0), (4.5, 2.5), (3.5, 1.0), (3.0, 0.0),
              (2.0, 0.5), (0.0, 0.0), (1.0, 0.0), (2.5, -0.5)]
    return build_grid("eval14", 14, lines, generators, loads, layout)


def easy_chronic(grid: Grid, steps: int = 288, seed: int = 7,
                 base_load: float | None = None) -> Chronic:
    """Attack-free, noise-free daily cycle well inside the safe region."""
    profile = ChronicProfile(base_load=base_load if base_load is not None
                             else _nominal_base_load(grid),
                             daily_amplitude=0.15, noise_level=0.0)
    return generate_chronic(grid, profile, steps, seed,
                            chronic_id=f"{grid.name}-easy-{seed}")


ATTACK_TARGETS = {
    "fig4": (1, 2, 3),
    "train5": (1, 2, 5, 6),
    "eval14": (3, 5, 8, 17),
}

_BASE_LOAD = {"fig4": 0.78, "train5": 0.78, "eval14": 0.40}


def _nominal_base_load(grid: Grid) -> float:
    return _BASE_LOAD.get(grid.name, 0.6)


def adversarial_chronic(grid: Grid, seed: int, steps: int = 288,
                        with_maintenance: bool = False) -> Chronic:
    """One day with random attacks on stressed lines and optional maintenance."""
    targets = ATTACK_TARGETS.get(grid.name, tuple(range(grid.n_lines)))
    rng = np.random.default_rng(seed ^ 0x5EED)
    opponent = OpponentSchedule(
        targets=targets,
        probability=0.04,
        budget=4,
        duration=24,
        cooldown=36,
    )
    maintenance = ()
    if with_maintenance:
        line = int(rng.choice(np.array(targets)))
        start = int(rng.integers(low=steps // 3, high=steps // 2))
        maintenance = (MaintenanceEvent(line, start, 12),)
    profile = ChronicProfile(base_load=_nominal_base_load(grid),
                             daily_amplitude=0.22, noise_level=0.015,
                             renewable_variability=0.004)
    start_day = datetime(2026, 3, 2) if seed % 2 == 0 else datetime(2026, 9, 7)
    return generate_chronic(grid, profile, steps, seed,
                            chronic_id=f"{grid.name}-adv-{seed:03d}",
                            maintenance=maintenance, opponent=opponent,
                            start=start_day)


def adversarial_suite(grid: Grid, count: int = 20, steps: int = 288,
                      base_seed: int = 100) -> list[Chronic]:
    """The evaluation/training suite: varied seeds, every third with maintenance."""
    return [adversarial_chronic(grid, base_seed + k, steps,
                                with_maintenance=(k % 3 == 2))
            for k in range(count)]
