"""Time stepping of the (obstacle) wave problem and the resulting trajectory."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .errors import IncompatibleFieldError, OutOfRangeTimeError, StepFailure, WavObstacleError
from .grid_fem import FieldP1, Grid1D, OperatorSet, check_order
from .step_solver import (
    ACTIVE_TOL,
    SolverConfig,
    StepProblem,
    active_nodes,
    kkt_residual,
    solve_step,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Scenario:
    grid: Grid1D
    s: float
    T: float
    n_steps: int
    u0: FieldP1
    v0: FieldP1
    lower: Optional[FieldP1] = None
    upper: Optional[FieldP1] = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    name: str = ""
    # optional analytic sources {"u0": f, "v0": f, "lower": f, "upper": f}
    # used to re-interpolate on refined grids
    sources: Optional[dict] = None

    def __post_init__(self):
        check_order(self.s)
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be an integer >= 1, got {self.n_steps}")
        for f in (self.u0, self.v0, self.lower, self.upper):
            if f is not None and f.grid != self.grid:
                raise IncompatibleFieldError("all scenario fields must share the grid")
        if self.s < 1 and not (self.u0.has_zero_bc and self.v0.has_zero_bc):
            raise ValueError("s < 1 requires zero exterior data: boundary values must be 0")
        if self.upper is not None and self.lower is None:
            raise ValueError("an upper obstacle needs a lower one")
        if self.lower is not None:
            g = self.lower
            if not (g.bc_left < self.u0.bc_left and g.bc_right < self.u0.bc_right):
                raise ValueError("lower obstacle must lie strictly below the boundary data")
            if np.any(self.u0.interior_values < g.interior_values):
                raise ValueError("initial datum u0 violates the lower obstacle")
        if self.upper is not None:
            if np.any(self.lower.full >= self.upper.full):
                raise ValueError("need lower < upper at every node")
            if np.any(self.u0.interior_values > self.upper.interior_values):
                raise ValueError("initial datum u0 violates the upper obstacle")

    @property
    def tau(self) -> float:
        return self.T / self.n_steps

    @property
    def has_obstacle(self) -> bool:
        return self.lower is not None

    def refined(self, level: int) -> "Scenario":
        """Same problem with h and tau divided by ``2**level``."""
        f = 2**level
        grid = Grid1D(self.grid.a, self.grid.b, self.grid.n_cells * f)
        src = self.sources or {}

        def transfer(name, fld):
            if fld is None:
                return None
            if name in src:
                vals = np.asarray(src[name](grid.nodes), dtype=float) * np.ones(grid.n_cells + 1)
                out = FieldP1.from_full(grid, vals)
            else:
                out = FieldP1.from_full(grid, np.interp(grid.nodes, self.grid.nodes, fld.full))
            bl, br = fld.bc_left, fld.bc_right
            return FieldP1(grid, out.interior_values, bl, br)

        return replace(
            self,
            grid=grid,
            n_steps=self.n_steps * f,
            u0=transfer("u0", self.u0),
            v0=transfer("v0", self.v0),
            lower=transfer("lower", self.lower),
            upper=transfer("upper", self.upper),
        )


@dataclass(eq=False)
class TrajectoryRecord:
    """Everything produced by one run.

    ``snapshots[k]`` holds the nodal values of u_{k-1} (k = 0 is the
    auxiliary u_{-1}); ``velocities[i]`` holds v_i = (u_i - u_{i-1}) / tau
    for i = 0..n.  ``energies[0]`` is built from the velocity datum v0.
    """

    scenario: Scenario
    ops: OperatorSet
    snapshots: np.ndarray
    velocities: np.ndarray
    kinetic: np.ndarray
    seminorm_sq: np.ndarray
    iterations: np.ndarray
    residuals: np.ndarray
    contacts: list

    @property
    def grid(self) -> Grid1D:
        return self.scenario.grid

    @property
    def tau(self) -> float:
        return self.scenario.tau

    @property
    def n_steps(self) -> int:
        return self.scenario.n_steps

    @property
    def times(self) -> np.ndarray:
        """t_i for i = 0..n."""
        return self.tau * np.arange(self.n_steps + 1)

    @property
    def energies(self) -> np.ndarray:
        return self.kinetic + self.seminorm_sq

    def u(self, i: int) -> FieldP1:
        if not -1 <= i <= self.n_steps:
            raise IndexError(f"snapshot index {i} outside -1..{self.n_steps}")
        return FieldP1.from_full(self.grid, self.snapshots[i + 1])

    def v(self, i: int) -> FieldP1:
        if not 0 <= i <= self.n_steps:
            raise IndexError(f"velocity index {i} outside 0..{self.n_steps}")
        return FieldP1.from_full(self.grid, self.velocities[i])


def energy(u: FieldP1, v: FieldP1, ops: OperatorSet) -> float:
    """|v|^2 in the L2 (mass) norm plus [u]_s^2."""
    return ops.mass_norm_sq(v) + ops.seminorm_sq(u)


def contact_set(u: FieldP1, g: Optional[FieldP1], tol: float = ACTIVE_TOL) -> np.ndarray:
    return active_nodes(u, g, tol)


def run_evolution(scenario: Scenario, ops: Optional[OperatorSet] = None) -> TrajectoryRecord:
    sc = scenario
    grid = sc.grid
    if ops is None:
        ops = OperatorSet(grid, sc.s)
    elif ops.grid != grid or ops.s != sc.s:
        raise IncompatibleFieldError("operator set does not match the scenario")
    tau, n = sc.tau, sc.n_steps
    N = grid.n_cells + 1

    U = np.empty((n + 2, N))
    U[1] = sc.u0.full
    # the boundary does not move: v0 counts as zero there
    U[0] = U[1]
    U[0, 1:-1] -= tau * sc.v0.interior_values

    iterations = np.zeros(n + 1, dtype=int)
    residuals = np.zeros((n + 1, 3))
    contacts = [contact_set(sc.u0, sc.lower)]
    prev2 = FieldP1.from_full(grid, U[0])
    prev = sc.u0
    for i in range(1, n + 1):
        problem = StepProblem(ops, tau, prev, prev2, sc.lower, sc.upper)
        try:
            res = solve_step(problem, sc.solver)
        except WavObstacleError as exc:
            raise StepFailure(i, exc) from exc
        u = res.u_new
        U[i + 1] = u.full
        iterations[i] = res.iterations
        residuals[i] = kkt_residual(problem, u)
        contacts.append(contact_set(u, sc.lower))
        prev2, prev = prev, u
    log.debug("run %s finished: %d steps, %d solver iterations", sc.name, n, iterations.sum())

    V = np.diff(U, axis=0) / tau
    kinetic = np.empty(n + 1)
    semi = np.empty(n + 1)
    kinetic[0] = ops.mass_norm_sq(sc.v0)
    for i in range(n + 1):
        if i > 0:
            kinetic[i] = ops.mass_norm_sq(FieldP1.from_full(grid, V[i]))
        semi[i] = ops.seminorm_sq(FieldP1.from_full(grid, U[i + 1]))
    for arr in (U, V, kinetic, semi, iterations, residuals):
        arr.setflags(write=False)
    return TrajectoryRecord(sc, ops, U, V, kinetic, semi, iterations, residuals, contacts)


def interpolant_eval(record: TrajectoryRecord, t: float, kind: str = "piecewise_linear") -> FieldP1:
    """Piecewise constant or piecewise linear in time reconstruction at ``t``."""
    tau, n = record.tau, record.n_steps
    if kind not in ("piecewise_constant", "piecewise_linear"):
        raise ValueError(f"unknown interpolant kind {kind!r}")
    eps = 1e-12 * tau
    if not (-tau - eps <= t <= record.scenario.T + eps):
        raise OutOfRangeTimeError(f"t = {t} outside [-tau, T]")
    x = t / tau
    i = int(np.ceil(x - 1e-9))
    if i <= -1:
        return record.u(-1)
    i = min(i, n)
    if kind == "piecewise_constant":
        return record.u(i)
    lam = min(max(x - (i - 1), 0.0), 1.0)
    vals = lam * record.snapshots[i + 1] + (1.0 - lam) * record.snapshots[i]
    return FieldP1.from_full(record.grid, vals)
