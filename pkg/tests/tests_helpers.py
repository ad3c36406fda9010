"""Helpers shared by test modules (importable, unlike conftest fixtures)."""

import numpy as np

from switchyard.scenario import Chronic, OpponentSchedule


def constant_chronic(grid, load, steps, opponent=OpponentSchedule(),
                     maintenance=(), cid="const"):
    p_load = np.full((steps, grid.n_loads), float(load))
    share = np.array([g.p_max for g in grid.generators], dtype=float)
    share = share / share.sum()
    p_gen = np.outer(p_load.sum(axis=1), share)
    return Chronic(cid, p_gen, p_load, tuple(maintenance), opponent)
