"""Randomised step problems shared by several test modules."""
import numpy as np

from wavobstacle import FieldP1, OperatorSet, StepProblem, build_grid


def random_obstacle_problem(seed, s=1.0, max_interior=12):
    rng = np.random.default_rng(seed)
    n_cells = int(rng.integers(3, max_interior + 2))
    grid = build_grid(0.0, float(rng.uniform(0.5, 3.0)), n_cells)
    ops = OperatorSet(grid, s)
    n = grid.n_interior
    tau = float(rng.uniform(0.05, 0.5))
    bc = 0.0 if s < 1 else float(rng.uniform(0.0, 1.0))
    g_int = rng.uniform(-0.5, 0.3, n)
    g = FieldP1(grid, g_int, bc - 1.0, bc - 1.0)
    # u_prev sits on the obstacle at some nodes, and the target may push below it
    u_prev = g_int + np.where(rng.random(n) < 0.4, 0.0, rng.uniform(0.0, 0.5, n))
    u_prev2 = u_prev + rng.uniform(-0.3, 0.8, n)
    return StepProblem(ops, tau, FieldP1(grid, u_prev, bc, bc), FieldP1(grid, u_prev2, bc, bc), g)


def random_free_problem(seed, n_cells=6, s=1.0, tau=0.1):
    rng = np.random.default_rng(seed)
    grid = build_grid(0.0, 1.0, n_cells)
    ops = OperatorSet(grid, s)
    bc = (0.0, 0.0) if s < 1 else tuple(rng.uniform(-1, 1, 2))
    n = grid.n_interior
    up = FieldP1(grid, rng.standard_normal(n), *bc)
    up2 = FieldP1(grid, rng.standard_normal(n), *bc)
    return StepProblem(ops, tau, up, up2)
