"""Uniform 1D grids, P1 fields and the mass/stiffness operators.

For ``s = 1`` the stiffness is the usual Dirichlet form on hats.  For
``0 < s < 1`` it is the Gagliardo double integral over R x R (normalising
constant 1) of interior hats extended by zero outside the interval.  On a
uniform grid that form is translation invariant, so the matrix is
symmetric Toeplitz and only one value per offset ``|j - k|`` is computed.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import (
    IncompatibleFieldError,
    InvalidDomainError,
    NonFiniteValueError,
    OrderOutOfRangeError,
    SingularSystemError,
)

# Offsets at or beyond this use quadrature of a smooth integrand instead of
# the fourth difference, which cancels badly for large offsets.
_FAR_OFFSET = 4
_GAUSS_X, _GAUSS_W = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class Grid1D:
    a: float
    b: float
    n_cells: int

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or not self.b > self.a:
            raise InvalidDomainError(f"need finite a < b, got a={self.a}, b={self.b}")
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise InvalidDomainError(f"n_cells must be an integer >= 2, got {self.n_cells}")
        object.__setattr__(self, "a", float(self.a))
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "n_cells", int(self.n_cells))

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_cells

    @property
    def n_interior(self) -> int:
        return self.n_cells - 1

    @cached_property
    def nodes(self) -> np.ndarray:
        x = self.a + self.h * np.arange(self.n_cells + 1)
        x[-1] = self.b
        x.setflags(write=False)
        return x

    @property
    def interior_nodes(self) -> np.ndarray:
        return self.nodes[1:-1]


def build_grid(a: float, b: float, n_cells: int) -> Grid1D:
    return Grid1D(a, b, n_cells)


@dataclass(frozen=True, eq=False)
class FieldP1:
    """Piecewise-linear field stored as interior nodal values plus boundary values."""

    grid: Grid1D
    interior_values: np.ndarray
    bc_left: float = 0.0
    bc_right: float = 0.0

    def __post_init__(self):
        vals = np.array(self.interior_values, dtype=float).reshape(-1)
        if vals.size != self.grid.n_interior:
            raise IncompatibleFieldError(
                f"expected {self.grid.n_interior} interior values, got {vals.size}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "interior_values", vals)
        object.__setattr__(self, "bc_left", float(self.bc_left))
        object.__setattr__(self, "bc_right", float(self.bc_right))

    @classmethod
    def from_full(cls, grid: Grid1D, values) -> "FieldP1":
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n_cells + 1,):
            raise IncompatibleFieldError(
                f"expected {grid.n_cells + 1} nodal values, got shape {values.shape}"
            )
        return cls(grid, values[1:-1], values[0], values[-1])

    @classmethod
    def zeros(cls, grid: Grid1D) -> "FieldP1":
        return cls(grid, np.zeros(grid.n_interior))

    @property
    def full(self) -> np.ndarray:
        return np.concatenate(([self.bc_left], self.interior_values, [self.bc_right]))

    @property
    def has_zero_bc(self) -> bool:
        return self.bc_left == 0.0 and self.bc_right == 0.0

    def with_interior(self, values) -> "FieldP1":
        return FieldP1(self.grid, values, self.bc_left, self.bc_right)

    def __eq__(self, other):
        if not isinstance(other, FieldP1):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.full, other.full)

    __hash__ = None


def interpolate_function(grid: Grid1D, f, bc_left: float = 0.0, bc_right: float = 0.0) -> FieldP1:
    """Nodal interpolant of ``f`` at the interior nodes with the given boundary values."""
    x = grid.interior_nodes
    try:
        vals = np.asarray(f(x), dtype=float)
        if vals.shape != x.shape:
            vals = np.broadcast_to(vals, x.shape).astype(float)
    except (TypeError, ValueError):
        vals = np.array([float(f(xi)) for xi in x])
    if not np.all(np.isfinite(vals)) or not (np.isfinite(bc_left) and np.isfinite(bc_right)):
        raise NonFiniteValueError("interpolated values must be finite")
    return FieldP1(grid, vals, bc_left, bc_right)


def check_order(s: float) -> float:
    s = float(s)
    if not (0.0 < s <= 1.0):
        raise OrderOutOfRangeError(f"fractional order must lie in (0, 1], got {s}")
    return s


def _tridiag(n: int, diag: float, off: float) -> sp.csr_matrix:
    return sp.diags(
        [np.full(n - 1, off), np.full(n, diag), np.full(n - 1, off)], [-1, 0, 1], format="csr"
    )


def assemble_mass(grid: Grid1D, full: bool = False) -> sp.csr_matrix:
    """P1 mass matrix on interior nodes (or on all nodes when ``full``)."""
    h = grid.h
    if not full:
        return _tridiag(grid.n_interior, 2 * h / 3, h / 6)
    m = _tridiag(grid.n_cells + 1, 2 * h / 3, h / 6).tolil()
    m[0, 0] = m[-1, -1] = h / 3
    return m.tocsr()


def assemble_stiffness_local(grid: Grid1D, full: bool = False) -> sp.csr_matrix:
    """P1 stiffness for -u'' on interior nodes (or on all nodes when ``full``)."""
    h = grid.h
    if not full:
        return _tridiag(grid.n_interior, 2 / h, -1 / h)
    k = _tridiag(grid.n_cells + 1, 2 / h, -1 / h).tolil()
    k[0, 0] = k[-1, -1] = 1 / h
    return k.tocsr()


def _bspline3(w):
    """Centred cubic B-spline; the autocorrelation of a unit hat."""
    w = np.abs(w)
    return np.where(
        w < 1, 2.0 / 3.0 - w**2 + 0.5 * w**3, np.where(w < 2, (2.0 - w) ** 3 / 6.0, 0.0)
    )


def _fourth_diff_potential(x, s):
    # G with G'''' = |x|^(-1-2s) in the distributional sense, up to cubics.
    # x^2 is subtracted before dividing by (1 - 2s) so s near 1/2 stays stable.
    x = np.abs(np.asarray(x, dtype=float))
    out = np.zeros_like(x)
    nz = x > 0
    lx = np.log(x[nz])
    e = 1.0 - 2.0 * s
    if s == 0.5:
        ratio = lx
    else:
        ratio = np.expm1(e * lx) / e
    out[nz] = x[nz] ** 2 * ratio / ((3.0 - 2.0 * s) * (2.0 - 2.0 * s) * (-2.0 * s))
    return out


def fractional_offset_values(n: int, s: float) -> np.ndarray:
    """Unit-spacing Gagliardo form of two hats whose centres are ``m`` cells apart, m = 0..n-1."""
    s = check_order(s)
    if s == 1.0:
        raise OrderOutOfRangeError("s = 1 is handled by the local stiffness")
    m = np.arange(n, dtype=float)
    near = m[:_FAR_OFFSET]
    G = lambda x: _fourth_diff_potential(x, s)
    vals = np.empty(n)
    vals[: near.size] = -2.0 * (
        G(near + 2) - 4 * G(near + 1) + 6 * G(near) - 4 * G(near - 1) + G(near - 2)
    )
    far = m[_FAR_OFFSET:]
    if far.size:
        # -2 * int_{-2}^{2} B3(w) (m + w)^(-1-2s) dw, one Gauss rule per unit piece
        pieces = np.arange(-2.0, 2.0)
        w = (pieces[:, None] + 0.5 + 0.5 * _GAUSS_X[None, :]).ravel()
        wt = np.tile(0.5 * _GAUSS_W, pieces.size) * _bspline3(w)
        vals[_FAR_OFFSET:] = -2.0 * ((far[:, None] + w[None, :]) ** (-1.0 - 2.0 * s) @ wt)
    return vals


def assemble_stiffness_fractional(grid: Grid1D, s: float) -> np.ndarray:
    """Dense Toeplitz Gagliardo stiffness on interior hats, zero exterior extension."""
    s = check_order(s)
    if s == 1.0:
        raise OrderOutOfRangeError("use assemble_stiffness_local for s = 1")
    col = grid.h ** (1.0 - 2.0 * s) * fractional_offset_values(grid.n_interior, s)
    return sla.toeplitz(col)


class OperatorSet:
    """Mass and stiffness operators for one grid and fractional order.

    For ``s = 1`` the full-node stiffness is kept as well so fields with
    constant Dirichlet data are handled by lifting.  For ``s < 1`` fields
    must vanish on the boundary.
    """

    def __init__(self, grid: Grid1D, s: float = 1.0):
        self.grid = grid
        self.s = check_order(s)
        self.mass = assemble_mass(grid)
        self.mass_full = assemble_mass(grid, full=True)
        if self.s == 1.0:
            self.stiffness = assemble_stiffness_local(grid)
            self.stiffness_full = assemble_stiffness_local(grid, full=True)
        else:
            self.stiffness = assemble_stiffness_fractional(grid, self.s)
            self.stiffness_full = None
        self._factors = {}

    @property
    def is_local(self) -> bool:
        return self.s == 1.0

    @cached_property
    def mass_inf_norm(self) -> float:
        return float(abs(self.mass).sum(axis=1).max())

    @cached_property
    def stiffness_inf_norm(self) -> float:
        return float(np.abs(self.stiffness).sum(axis=1).max())

    def check_field(self, u: FieldP1) -> None:
        if u.grid != self.grid:
            raise IncompatibleFieldError("field lives on a different grid")
        if not self.is_local and not u.has_zero_bc:
            raise IncompatibleFieldError(
                "fractional order s < 1 requires zero exterior (boundary) values"
            )

    def apply_stiffness(self, u: FieldP1) -> np.ndarray:
        """Interior rows of the stiffness applied to the lifted field."""
        self.check_field(u)
        r = self.stiffness @ u.interior_values
        if self.is_local and not u.has_zero_bc:
            h = self.grid.h
            r = r.copy()
            r[0] -= u.bc_left / h
            r[-1] -= u.bc_right / h
        return np.asarray(r).reshape(-1)

    def seminorm_sq(self, u: FieldP1) -> float:
        self.check_field(u)
        if self.is_local:
            U = u.full
            return float(U @ (self.stiffness_full @ U))
        w = u.interior_values
        return float(w @ (self.stiffness @ w))

    def mass_norm_sq(self, u: FieldP1) -> float:
        if u.grid != self.grid:
            raise IncompatibleFieldError("field lives on a different grid")
        U = u.full
        return float(U @ (self.mass_full @ U))

    def step_matrix(self, tau: float):
        if self.is_local:
            return (self.mass / tau**2 + self.stiffness).tocsr()
        return self.mass.toarray() / tau**2 + self.stiffness

    def solve_step_system(self, tau: float, rhs: np.ndarray) -> np.ndarray:
        """Solve (M/tau^2 + A) x = rhs with a factorisation cached per tau."""
        fac = self._factors.get(tau)
        if fac is None:
            fac = self._factorize(tau)
            self._factors[tau] = fac
        return fac(rhs)

    def _factorize(self, tau: float):
        n = self.grid.n_interior
        try:
            if self.is_local:
                h = self.grid.h
                ab = np.empty((2, n))
                ab[0, :] = h / (6 * tau**2) - 1 / h
                ab[1, :] = 2 * h / (3 * tau**2) + 2 / h
                cb = sla.cholesky_banded(ab)
                return lambda rhs: sla.cho_solve_banded((cb, False), rhs)
            cf = sla.cho_factor(self.step_matrix(tau))
            return lambda rhs: sla.cho_solve(cf, rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SingularSystemError(f"step matrix is not SPD: {exc}") from exc


def build_operators(grid: Grid1D, s: float = 1.0) -> OperatorSet:
    return OperatorSet(grid, s)


def gagliardo_seminorm_sq(u: FieldP1, ops: OperatorSet) -> float:
    return ops.seminorm_sq(u)
