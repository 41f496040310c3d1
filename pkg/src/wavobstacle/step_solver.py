"""One time step of the minimizing-movement scheme.

Each step minimizes

    J(u) = |u - (2 u_prev - u_prev2)|^2_M / (2 tau^2) + 1/2 [u]_s^2

over P1 fields with the Dirichlet data of ``u_prev``, either freely or over
the box ``lower <= u (<= upper)``.  On interior coefficients this is the
SPD quadratic ``1/2 w.H w - c.w`` with ``H = M/tau^2 + A``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    IncompatibleFieldError,
    MaxIterationsExceeded,
    NoValidActiveSetError,
    SingularSystemError,
)
from .grid_fem import FieldP1, OperatorSet

ACTIVE_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    """Projected-gradient settings.

    ``grad_tol`` is relative: iteration stops once the projected gradient's
    max-norm falls below ``grad_tol * (1/tau^2 + ||A||_inf)``.  ``step_init``
    defaults to ``1 / (||M||_inf/tau^2 + ||A||_inf)`` when left as None.
    """

    grad_tol: float = 1e-10
    max_iters: int = 100_000
    step_init: Optional[float] = None
    step_grow: float = 1.2
    step_shrink: float = 0.5
    refine: bool = True
    refine_every: int = 25
    record_history: bool = False

    def __post_init__(self):
        if not self.grad_tol > 0:
            raise ValueError("grad_tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.step_grow > 1:
            raise ValueError("step_grow must exceed 1")
        if not 0 < self.step_shrink < 1:
            raise ValueError("step_shrink must lie in (0, 1)")
        if self.step_init is not None and not self.step_init > 0:
            raise ValueError("step_init must be positive")


@dataclass(frozen=True, eq=False)
class StepProblem:
    ops: OperatorSet
    tau: float
    u_prev: FieldP1
    u_prev2: FieldP1
    lower: Optional[FieldP1] = None
    upper: Optional[FieldP1] = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        for f in (self.u_prev, self.u_prev2):
            self.ops.check_field(f)
        if (self.u_prev.bc_left, self.u_prev.bc_right) != (
            self.u_prev2.bc_left,
            self.u_prev2.bc_right,
        ):
            raise IncompatibleFieldError("u_prev and u_prev2 carry different boundary values")
        for ob in (self.lower, self.upper):
            if ob is not None and ob.grid != self.ops.grid:
                raise IncompatibleFieldError("obstacle lives on a different grid")
        if self.lower is not None:
            g = self.lower
            if not (g.bc_left < self.u_prev.bc_left and g.bc_right < self.u_prev.bc_right):
                raise ValueError("lower obstacle must lie strictly below the boundary data")
            gap = self.u_prev.interior_values - g.interior_values
            if np.any(gap < -ACTIVE_TOL * (1 + np.abs(g.interior_values))):
                raise ValueError("u_prev violates the lower obstacle")
        if self.upper is not None:
            if self.lower is None:
                raise ValueError("an upper obstacle needs a lower one")
            if np.any(self.lower.full >= self.upper.full):
                raise ValueError("need lower < upper at every node")

    @property
    def grid(self):
        return self.ops.grid

    @cached_property
    def target(self) -> np.ndarray:
        """Interior values of 2 u_prev - u_prev2."""
        return 2 * self.u_prev.interior_values - self.u_prev2.interior_values

    @cached_property
    def hessian(self):
        return self.ops.step_matrix(self.tau)

    @cached_property
    def linear_term(self) -> np.ndarray:
        ops = self.ops
        c = ops.mass @ self.target / self.tau**2
        # move the Dirichlet coupling of the lifted field to the right-hand side
        boundary_only = FieldP1(
            self.grid, np.zeros(self.grid.n_interior), self.u_prev.bc_left, self.u_prev.bc_right
        )
        return c - ops.apply_stiffness(boundary_only)

    @cached_property
    def scale(self) -> float:
        return 1.0 / self.tau**2 + self.ops.stiffness_inf_norm

    def field(self, w) -> FieldP1:
        return self.u_prev.with_interior(w)

    def gradient(self, w) -> np.ndarray:
        return np.asarray(self.hessian @ w).reshape(-1) - self.linear_term

    def bounds(self):
        n = self.grid.n_interior
        lo = self.lower.interior_values if self.lower is not None else np.full(n, -np.inf)
        hi = self.upper.interior_values if self.upper is not None else np.full(n, np.inf)
        return lo, hi


@dataclass
class StepResult:
    u_new: FieldP1
    iterations: int
    final_residual: float
    active_set: np.ndarray
    objective_history: list = field(default_factory=list)


def objective(problem: StepProblem, u: FieldP1) -> float:
    problem.ops.check_field(u)
    if (u.bc_left, u.bc_right) != (problem.u_prev.bc_left, problem.u_prev.bc_right):
        raise IncompatibleFieldError("u does not carry the step's boundary data")
    ops = problem.ops
    d = u.interior_values - problem.target
    return float(d @ (ops.mass @ d)) / (2 * problem.tau**2) + 0.5 * ops.seminorm_sq(u)


def _residual_vector(problem: StepProblem, u: FieldP1) -> np.ndarray:
    ops = problem.ops
    d = u.interior_values - problem.target
    return np.asarray(ops.mass @ d).reshape(-1) / problem.tau**2 + ops.apply_stiffness(u)


def active_nodes(u: FieldP1, g: Optional[FieldP1], tol: float = ACTIVE_TOL) -> np.ndarray:
    """Grid node indices (1..n_cells-1) where ``u`` sits on ``g``."""
    if g is None:
        return np.array([], dtype=int)
    gi = g.interior_values
    hit = u.interior_values - gi <= tol * (1 + np.abs(gi))
    return np.flatnonzero(hit) + 1


def solve_unconstrained(problem: StepProblem) -> StepResult:
    if problem.lower is not None or problem.upper is not None:
        raise ValueError("solve_unconstrained takes an obstacle-free problem")
    c = problem.linear_term
    w = problem.ops.solve_step_system(problem.tau, c)
    res = float(np.max(np.abs(problem.gradient(w)), initial=0.0))
    if not np.all(np.isfinite(w)) or res > 1e-10 * problem.scale * (1 + np.max(np.abs(w), initial=0.0)):
        raise SingularSystemError(f"linear solve left residual {res:.3e}")
    return StepResult(problem.field(w), 0, res, np.array([], dtype=int))


def _projected_gradient(x, g, lo, hi):
    pg = g.copy()
    at_lo = x <= lo
    at_hi = x >= hi
    pg[at_lo] = np.minimum(g[at_lo], 0.0)
    pg[at_hi] = np.maximum(g[at_hi], 0.0)
    return pg


def _submatrix(H, rows, cols):
    if sp.issparse(H):
        return H[rows][:, cols]
    return H[np.ix_(rows, cols)]


def _refine(problem: StepProblem, x, g, lo, hi, thresh):
    """Fix the identified active bounds and solve the reduced system exactly.

    Returns the refined point, or None when it is infeasible or violates the
    multiplier signs.
    """
    at_lo = (x <= lo) & (g > 0)
    at_hi = (x >= hi) & (g < 0)
    fixed = at_lo | at_hi
    free = ~fixed
    y = x.copy()
    y[at_lo] = lo[at_lo]
    y[at_hi] = hi[at_hi]
    if free.any():
        H = problem.hessian
        fi, fx = np.flatnonzero(free), np.flatnonzero(fixed)
        rhs = problem.linear_term[fi]
        if fx.size:
            rhs = rhs - np.asarray(_submatrix(H, fi, fx) @ y[fx]).reshape(-1)
        Hff = _submatrix(H, fi, fi)
        if sp.issparse(Hff):
            y[fi] = spla.spsolve(Hff.tocsc(), rhs)
        else:
            y[fi] = np.linalg.solve(Hff, rhs)
        if np.any(y[fi] < lo[fi]) or np.any(y[fi] > hi[fi]):
            return None
    gy = problem.gradient(y)
    if np.max(np.abs(_projected_gradient(y, gy, lo, hi)), initial=0.0) > thresh:
        return None
    return y, gy


def solve_constrained(
    problem: StepProblem, config: SolverConfig = SolverConfig(), start: Optional[FieldP1] = None
) -> StepResult:
    """Projected gradient descent with multiplicative step adaptation.

    Starts from ``start`` (default ``u_prev``) clamped into the box.  Every accepted step lowers
    the objective.  With ``config.refine`` the identified active set is
    periodically handed to an exact reduced solve; its answer is kept only if
    it is feasible and meets the same projected-gradient tolerance.
    """
    if problem.lower is None:
        raise ValueError("solve_constrained needs a lower obstacle")
    lo, hi = problem.bounds()
    thresh = config.grad_tol * problem.scale
    alpha = config.step_init
    if alpha is None:
        alpha = 1.0 / (problem.ops.mass_inf_norm / problem.tau**2 + problem.ops.stiffness_inf_norm)
    alpha_min = alpha * 1e-30

    x0 = problem.u_prev if start is None else start
    if x0.grid != problem.grid:
        raise IncompatibleFieldError("start lives on a different grid")
    x = np.clip(x0.interior_values, lo, hi)
    g = problem.gradient(x)
    c = problem.linear_term
    f = 0.5 * float(x @ (g - c))
    history = [f] if config.record_history else []
    res = float(np.max(np.abs(_projected_gradient(x, g, lo, hi)), initial=0.0))
    it = 0
    converged = res <= thresh
    while not converged and it < config.max_iters:
        it += 1
        while True:
            xt = np.clip(x - alpha * g, lo, hi)
            d = xt - x
            gt = problem.gradient(xt)
            # exact change of the quadratic, free of cancellation in f itself
            df = float(d @ (0.5 * (g + gt)))
            if df <= 0.0:
                x, g, f = xt, gt, f + df
                alpha *= config.step_grow
                break
            alpha *= config.step_shrink
            if alpha < alpha_min:
                break
        if config.record_history:
            history.append(f)
        res = float(np.max(np.abs(_projected_gradient(x, g, lo, hi)), initial=0.0))
        converged = res <= thresh
        stalled = alpha < alpha_min
        if config.refine and (converged or stalled or it % config.refine_every == 0):
            out = _refine(problem, x, g, lo, hi, thresh)
            if out is not None:
                y, gy = out
                d = y - x
                df = float(d @ (0.5 * (g + gy)))
                if df <= 1e-13 * (1 + abs(f)):
                    x, g, f = y, gy, f + df
                    if config.record_history:
                        history.append(f)
                    res = float(np.max(np.abs(_projected_gradient(x, g, lo, hi)), initial=0.0))
                    converged = True
        if stalled and not converged:
            break
    u = problem.field(x)
    if not converged:
        raise MaxIterationsExceeded(
            f"projected gradient stopped at residual {res:.3e} > {thresh:.3e} after {it} iterations",
            best=u,
            residual=res,
        )
    return StepResult(u, it, res, active_nodes(u, problem.lower), history)


def solve_step(problem: StepProblem, config: SolverConfig = SolverConfig()) -> StepResult:
    if problem.lower is None:
        return solve_unconstrained(problem)
    return solve_constrained(problem, config)


def kkt_residual(problem: StepProblem, u: FieldP1):
    """(stationarity, infeasibility, complementarity) of ``u`` for the step.

    With a lower obstacle ``g`` the residual ``r = M(u - b)/tau^2 + A u`` must
    be nonnegative and vanish where ``u > g``; stationarity is the max-norm of
    its negative part and complementarity is ``|r.(u - g)| / (1 + |u - g|_1)``.
    Without an obstacle stationarity is simply ``|r|_inf``.  An upper obstacle
    only enters the infeasibility measure.
    """
    problem.ops.check_field(u)
    r = _residual_vector(problem, u)
    if problem.lower is None:
        return float(np.max(np.abs(r), initial=0.0)), 0.0, 0.0
    gap = u.interior_values - problem.lower.interior_values
    stationarity = float(np.max(np.maximum(-r, 0.0), initial=0.0))
    infeas = np.maximum(-gap, 0.0)
    if problem.upper is not None:
        infeas = np.maximum(infeas, u.interior_values - problem.upper.interior_values)
    complementarity = abs(float(r @ gap)) / (1.0 + float(np.abs(gap).sum()))
    return stationarity, float(np.max(infeas, initial=0.0)), complementarity


def oracle_active_set_solve(problem: StepProblem, max_nodes: int = 12) -> FieldP1:
    """Brute force over every active set; only for tiny lower-obstacle problems."""
    n = problem.grid.n_interior
    if n > max_nodes:
        raise ValueError(f"oracle limited to {max_nodes} interior nodes, got {n}")
    if problem.lower is None or problem.upper is not None:
        raise ValueError("oracle handles a single lower obstacle only")
    H = problem.hessian
    H = H.toarray() if sp.issparse(H) else np.asarray(H)
    c = problem.linear_term
    g = problem.lower.interior_values
    mag = 1.0 + np.max(np.abs(g)) + np.max(np.abs(problem.target))
    r_tol = 1e-11 * problem.scale * mag
    feas_tol = 1e-12 * mag
    idx = np.arange(n)
    for k in range(n + 1):
        for S in itertools.combinations(idx, k):
            S = np.array(S, dtype=int)
            F = np.setdiff1d(idx, S)
            w = np.empty(n)
            w[S] = g[S]
            if F.size:
                w[F] = np.linalg.solve(H[np.ix_(F, F)], c[F] - H[np.ix_(F, S)] @ g[S])
                if np.any(w[F] < g[F] - feas_tol):
                    continue
            r = H @ w - c
            if np.all(r[S] >= -r_tol):
                return problem.field(w)
    raise NoValidActiveSetError("no active set gives a feasible stationary point")
