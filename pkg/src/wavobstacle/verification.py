"""Discrete checks of the scheme's estimates and a few diagnostic studies.

Every check is a pure function of a finished :class:`TrajectoryRecord`.
L2 quantities use the consistent mass matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .evolution import Scenario, TrajectoryRecord, run_evolution
from .grid_fem import FieldP1
from .step_solver import ACTIVE_TOL, StepProblem, kkt_residual, _residual_vector


@dataclass
class CheckResult:
    passed: bool
    first_violation: Optional[int] = None
    worst: float = 0.0

    def __bool__(self):
        return self.passed


def energy_tolerance(record: TrajectoryRecord, rel: float = 1e-8) -> float:
    return rel * max(float(record.energies[0]), 1.0)


def check_energy_monotone(record: TrajectoryRecord, tol: float) -> CheckResult:
    """Pass iff E_i <= E_{i-1} + tol for every i >= 1."""
    inc = np.diff(record.energies)
    bad = np.flatnonzero(inc > tol)
    worst = float(inc.max(initial=-np.inf)) if inc.size else 0.0
    if bad.size:
        return CheckResult(False, int(bad[0]) + 1, worst)
    return CheckResult(True, None, worst)


def check_key_estimate(record: TrajectoryRecord, tol: float) -> CheckResult:
    """Pass iff max_i E_i <= E_0 + tol."""
    E = record.energies
    excess = E - E[0]
    bad = np.flatnonzero(excess > tol)
    return CheckResult(not bad.size, int(bad[0]) if bad.size else None, float(excess.max()))


def step_problem(record: TrajectoryRecord, i: int) -> StepProblem:
    sc = record.scenario
    return StepProblem(record.ops, record.tau, record.u(i - 1), record.u(i - 2), sc.lower, sc.upper)


def variational_tolerance(record: TrajectoryRecord, factor: float = 100.0) -> float:
    """factor * grad_tol * (1/tau^2 + ||A||_inf)."""
    return (
        factor
        * record.scenario.solver.grad_tol
        * (1.0 / record.tau**2 + record.ops.stiffness_inf_norm)
    )


@dataclass
class VariationalReport:
    stationarity: np.ndarray
    infeasibility: np.ndarray
    complementarity: np.ndarray
    free_residual: np.ndarray
    tol: float
    failing_steps: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failing_steps

    def __bool__(self):
        return self.passed


def check_variational_inequality(
    record: TrajectoryRecord, tol: float, snapshots: Optional[np.ndarray] = None
) -> VariationalReport:
    """Per-step sign, feasibility and complementarity of the step residual.

    Steps without contact must also satisfy the free equation
    ``|r_i|_inf <= tol``.  ``snapshots`` replaces the recorded ones, which is
    handy for negative tests.
    """
    sc = record.scenario
    if sc.lower is None:
        raise ValueError("variational inequality check needs an obstacle run")
    U = record.snapshots if snapshots is None else np.asarray(snapshots)
    grid = record.grid
    n = record.n_steps
    stat = np.zeros(n + 1)
    infeas = np.zeros(n + 1)
    comp = np.zeros(n + 1)
    free = np.zeros(n + 1)
    failing = []
    for i in range(1, n + 1):
        u = FieldP1.from_full(grid, U[i + 1])
        try:
            problem = StepProblem(
                record.ops,
                record.tau,
                FieldP1.from_full(grid, U[i]),
                FieldP1.from_full(grid, U[i - 1]),
                sc.lower,
                None,
            )
        except ValueError:
            # an infeasible earlier snapshot makes this step ill-posed
            infeas[i] = float(np.max(sc.lower.interior_values - U[i, 1:-1], initial=0.0))
            failing.append(i)
            continue
        stat[i], infeas[i], comp[i] = kkt_residual(problem, u)
        in_contact = np.any(u.interior_values - sc.lower.interior_values <= ACTIVE_TOL * (1 + np.abs(sc.lower.interior_values)))
        if not in_contact:
            free[i] = float(np.max(np.abs(_residual_vector(problem, u)), initial=0.0))
        if stat[i] > tol or infeas[i] > ACTIVE_TOL or comp[i] > tol or free[i] > tol:
            failing.append(i)
    return VariationalReport(stat, infeas, comp, free, tol, failing)


def _space_profile(record: TrajectoryRecord, phi) -> np.ndarray:
    grid = record.grid
    if isinstance(phi, FieldP1):
        if phi.grid != grid or not phi.has_zero_bc:
            raise ValueError("test function must live on the run's grid with zero boundary values")
        return phi.interior_values
    vals = np.asarray(phi, dtype=float) if not callable(phi) else np.asarray(phi(grid.interior_nodes), float)
    if vals.shape != (grid.n_interior,):
        raise ValueError("test function has the wrong number of interior values")
    return vals


@dataclass
class WeakFormReport:
    residuals: np.ndarray
    scales: np.ndarray

    @property
    def max_residual(self) -> float:
        return float(np.max(np.abs(self.residuals), initial=0.0))

    @property
    def max_relative(self) -> float:
        return float(np.max(np.abs(self.residuals) / self.scales, initial=0.0))


def check_weak_form_free(record: TrajectoryRecord, test_functions) -> WeakFormReport:
    """Discrete space-time residual for separable test functions phi(x) eta(t).

    For each pair the residual is
    sum_i (v_i - v_{i-1}).M phi eta(t_i) + tau [u_i, phi]_s eta(t_i), i = 1..n,
    and the matching scale is the sum of the absolute values of the terms.
    """
    ops = record.ops
    t = record.times
    V = record.velocities[:, 1:-1]
    dV = np.diff(V, axis=0)
    stiff = np.array([ops.apply_stiffness(record.u(i)) for i in range(1, record.n_steps + 1)])
    res, scales = [], []
    for phi, eta in test_functions:
        p = _space_profile(record, phi)
        e = np.asarray(eta(t[1:]), dtype=float) * np.ones(record.n_steps)
        Mp = ops.mass @ p
        inertial = (dV @ Mp) * e
        elastic = record.tau * (stiff @ p) * e
        res.append(float(np.sum(inertial + elastic)))
        scales.append(max(float(np.sum(np.abs(inertial) + np.abs(elastic))), np.finfo(float).tiny))
    return WeakFormReport(np.array(res), np.array(scales))


def momentum_series(record: TrajectoryRecord, phi) -> np.ndarray:
    """F_i = int v_i phi dx for i = 0..n; diagnostic output only."""
    p = _space_profile(record, phi)
    return record.velocities[:, 1:-1] @ (record.ops.mass @ p)


@dataclass
class ConvergenceRow:
    n_cells: int
    n_steps: int
    error_max: float
    error_l2_space_time: float
    error_at_T: float
    rate: Optional[float] = None


@dataclass
class ConvergenceTable:
    rows: list
    reference: str

    def ratios(self) -> list:
        e = [r.error_max for r in self.rows]
        return [e[k] / e[k + 1] for k in range(len(e) - 1)]

    def rates(self) -> list:
        return [r.rate for r in self.rows[1:]]


def _l2_errors(record: TrajectoryRecord, targets: np.ndarray) -> np.ndarray:
    d = record.snapshots[1:] - targets
    M = record.ops.mass_full
    return np.sqrt(np.maximum(np.einsum("ij,ij->i", d, (M @ d.T).T), 0.0))


def convergence_study(
    base: Callable[[int], Scenario] | Scenario,
    exact: Optional[Callable] = None,
    levels: int = 3,
) -> ConvergenceTable:
    """Run ``levels`` refinements, halving h and tau each time.

    ``base`` is either a callable ``level -> Scenario`` or a Scenario whose
    ``refined`` method is used.  ``exact(t, x)`` gives the reference; without
    it one extra, finer level is run and serves as the reference (nested
    grids, so coarse nodes and times are a subset of the fine ones).
    """
    if levels < 1 or (exact is None and levels < 2):
        raise ValueError("need levels >= 2 (or >= 1 with an exact solution)")
    make = base if callable(base) and not isinstance(base, Scenario) else base.refined
    n_runs = levels if exact is not None else levels + 1
    records = [run_evolution(make(k)) for k in range(n_runs)]
    rows = []
    for k in range(levels):
        rec = records[k]
        t = rec.times
        x = rec.grid.nodes
        if exact is not None:
            targets = np.array([np.asarray(exact(ti, x), dtype=float) * np.ones_like(x) for ti in t])
        else:
            ref = records[-1]
            f = 2 ** (n_runs - 1 - k)
            if ref.n_steps != rec.n_steps * f or ref.grid.n_cells != rec.grid.n_cells * f:
                raise ValueError("reference level is not a nested refinement")
            targets = ref.snapshots[1::f][:, ::f]
        err = _l2_errors(rec, targets)
        row = ConvergenceRow(
            rec.grid.n_cells,
            rec.n_steps,
            float(err.max()),
            float(np.sqrt(rec.tau * np.sum(err[1:] ** 2))),
            float(err[-1]),
        )
        if rows and row.error_max > 0 and rows[-1].error_max > 0:
            row.rate = float(np.log2(rows[-1].error_max / row.error_max))
        rows.append(row)
    return ConvergenceTable(rows, "exact" if exact is not None else "finest level")


@dataclass
class Impact:
    i_start: int
    i_end: int
    t_start: float
    t_end: float
    energy_drop: float


@dataclass
class StabilizationReport:
    t_bar: Optional[float]
    index: Optional[int]
    osc_tol: float
    post_t_bar_energy_oscillation: float
    impacts: list

    def to_dict(self) -> dict:
        return {
            "t_bar": self.t_bar,
            "index": self.index,
            "osc_tol": self.osc_tol,
            "post_t_bar_energy_oscillation": self.post_t_bar_energy_oscillation,
            "impacts": [vars(imp).copy() for imp in self.impacts],
        }


def impact_intervals(record: TrajectoryRecord) -> list:
    """Maximal runs of steps with a nonempty contact set.

    The energy drop of a run is measured from the last step before contact to
    the first step after detachment (clipped to the recorded range).
    """
    E = record.energies
    t = record.times
    n = record.n_steps
    flags = [c.size > 0 for c in record.contacts]
    out = []
    i = 0
    while i <= n:
        if flags[i]:
            j = i
            while j + 1 <= n and flags[j + 1]:
                j += 1
            before, after = max(i - 1, 0), min(j + 1, n)
            out.append(Impact(i, j, float(t[i]), float(t[j]), float(E[before] - E[after])))
            i = j + 1
        else:
            i += 1
    return out


def detect_stabilization(record: TrajectoryRecord, osc_tol: float) -> StabilizationReport:
    """Smallest t_k with max_{i >= k} |E_i - E_k| <= osc_tol * E_0.

    The last step alone is no evidence, so t_bar is reported absent when
    only k = n qualifies.
    """
    E = record.energies
    n = record.n_steps
    thr = osc_tol * E[0]
    sufmax = np.maximum.accumulate(E[::-1])[::-1]
    sufmin = np.minimum.accumulate(E[::-1])[::-1]
    osc = np.maximum(sufmax - E, E - sufmin)
    ok = np.flatnonzero(osc[:n] <= thr) if n > 0 else np.array([0])
    impacts = impact_intervals(record)
    if not ok.size:
        return StabilizationReport(None, None, osc_tol, float("nan"), impacts)
    k = int(ok[0])
    return StabilizationReport(float(record.times[k]), k, osc_tol, float(osc[k]), impacts)


def bump(t0: float, t1: float):
    """Smooth nonnegative time profile supported in [t0, t1]."""

    def eta(t):
        t = np.asarray(t, dtype=float)
        inside = (t > t0) & (t < t1)
        return np.where(inside, np.sin(np.pi * (t - t0) / (t1 - t0)) ** 2, 0.0)

    return eta


def random_test_functions(record: TrajectoryRecord, count: int = 20, seed: int = 0, nonnegative: bool = False):
    """Separable test functions: random interior nodal profiles times bumps inside (0, T)."""
    rng = np.random.default_rng(seed)
    T = record.scenario.T
    out = []
    for _ in range(count):
        p = rng.uniform(0.0, 1.0, record.grid.n_interior)
        if not nonnegative:
            p = p * 2.0 - 1.0
        t0, t1 = np.sort(rng.uniform(0.0, T, 2))
        if t1 - t0 < 2 * record.tau:
            t0, t1 = 0.0, T
        out.append((FieldP1(record.grid, p), bump(t0, t1)))
    return out
