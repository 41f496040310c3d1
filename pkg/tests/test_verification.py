import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavobstacle import (
    FieldP1,
    Scenario,
    build_grid,
    interpolate_function,
    run_evolution,
)
from wavobstacle.verification import (
    bump,
    check_energy_monotone,
    check_key_estimate,
    check_variational_inequality,
    check_weak_form_free,
    convergence_study,
    detect_stabilization,
    energy_tolerance,
    impact_intervals,
    momentum_series,
    random_test_functions,
    variational_tolerance,
)


@pytest.fixture(scope="module")
def rest_record():
    g = build_grid(0, 1, 8)
    z = FieldP1.zeros(g)
    low = FieldP1(g, -np.ones(7), -1, -1)
    return run_evolution(Scenario(g, 1.0, 1.0, 10, z, z, low))


def free_scenario(n_cells, s=1.0, T=1.0):
    g = build_grid(0, math.pi, n_cells)
    return Scenario(
        g, s, T, n_cells, interpolate_function(g, np.sin), FieldP1.zeros(g),
        sources={"u0": np.sin},
    )


class TestEnergyChecks:
    def test_fig1_passes(self, fig1_record):
        tol = energy_tolerance(fig1_record)
        assert check_energy_monotone(fig1_record, tol)
        assert check_key_estimate(fig1_record, tol)

    def test_rest(self, rest_record):
        r = check_energy_monotone(rest_record, 0.0)
        assert r.passed and r.worst == 0.0
        assert check_key_estimate(rest_record, 0.0)

    @pytest.mark.parametrize("k", [1, 17, 90])
    def test_perturbation_located(self, free_sine_record, k):
        rec = free_sine_record
        kin = rec.kinetic.copy()
        kin[k] += rec.energies[0] - rec.energies[k] + 1e-3
        bad = replace(rec, kinetic=kin)
        r = check_energy_monotone(bad, energy_tolerance(rec))
        assert not r.passed and r.first_violation == k
        r = check_key_estimate(bad, energy_tolerance(rec))
        assert not r.passed and r.first_violation == k

    def test_fractional(self, fractional_free_record):
        tol = energy_tolerance(fractional_free_record)
        assert check_energy_monotone(fractional_free_record, tol)
        assert check_key_estimate(fractional_free_record, tol)


class TestVariational:
    def test_fig1(self, fig1_record):
        rep = check_variational_inequality(fig1_record, variational_tolerance(fig1_record))
        assert rep.passed, rep.failing_steps[:5]
        assert rep.infeasibility.max() <= 1e-9

    def test_infeasible_snapshot_fails(self, fig1_record):
        U = fig1_record.snapshots.copy()
        U[60, 50] = -0.1
        rep = check_variational_inequality(fig1_record, variational_tolerance(fig1_record), U)
        assert 59 in rep.failing_steps

    def test_shifted_snapshot_fails(self, fig1_record):
        U = fig1_record.snapshots.copy()
        U[300, 1:-1] += 1e-3
        rep = check_variational_inequality(fig1_record, variational_tolerance(fig1_record), U)
        assert 299 in rep.failing_steps

    def test_needs_obstacle(self, free_sine_record):
        with pytest.raises(ValueError):
            check_variational_inequality(free_sine_record, 1.0)


class TestWeakForm:
    def test_rest(self, rest_record):
        rep = check_weak_form_free(rest_record, random_test_functions(rest_record, 5))
        assert rep.max_residual == 0.0

    def test_free(self, free_sine_record):
        rep = check_weak_form_free(free_sine_record, random_test_functions(free_sine_record, 20))
        assert rep.max_relative <= 1e-8

    def test_fractional(self, fractional_free_record):
        rep = check_weak_form_free(fractional_free_record, random_test_functions(fractional_free_record, 20, seed=3))
        assert rep.max_relative <= 1e-8

    def test_callable_and_array_profiles(self, free_sine_record):
        rec = free_sine_record
        eta = bump(0.5, 2.5)
        rep = check_weak_form_free(rec, [(np.sin, eta), (np.sin(rec.grid.interior_nodes), eta)])
        assert rep.residuals[0] == rep.residuals[1]

    def test_obstacle_residual_nonnegative(self, fig1_record):
        # against nonnegative test functions the contact force only pushes up
        rep = check_weak_form_free(fig1_record, random_test_functions(fig1_record, 20, seed=1, nonnegative=True))
        assert np.all(rep.residuals >= -1e-8 * rep.scales)
        assert rep.max_relative > 1e-3

    def test_bad_profile(self, free_sine_record):
        with pytest.raises(ValueError):
            check_weak_form_free(free_sine_record, [(np.ones(3), bump(0, 1))])

    def test_momentum_series_shape(self, free_sine_record):
        F = momentum_series(free_sine_record, np.sin)
        assert F.shape == (free_sine_record.n_steps + 1,)
        assert F[0] == 0.0


class TestConvergence:
    def test_exact_rates(self):
        tab = convergence_study(free_scenario(20), lambda t, x: np.sin(x) * np.cos(t), levels=3)
        assert [r.n_cells for r in tab.rows] == [20, 40, 80]
        assert all(r >= 1.6 for r in tab.ratios())
        assert tab.reference == "exact"

    def test_self_reference_single_level(self):
        sc = free_scenario(10)
        # a run compared with itself has zero error
        rec = run_evolution(sc)
        tab = convergence_study(lambda k: sc, lambda t, x: rec.snapshots[round(t / sc.tau) + 1], levels=1)
        assert tab.rows[0].error_max == 0.0

    def test_fractional_self_convergence(self):
        tab = convergence_study(free_scenario(16, s=0.5), levels=3)
        e = [r.error_max for r in tab.rows]
        assert e[0] > e[1] > e[2] > 0
        assert tab.reference == "finest level"

    def test_levels_validated(self):
        with pytest.raises(ValueError):
            convergence_study(free_scenario(10), levels=1)


class TestStabilization:
    def test_rest(self, rest_record):
        rep = detect_stabilization(rest_record, 0.02)
        assert rep.t_bar == 0.0 and rep.impacts == []

    def test_fig1(self, fig1_record):
        rep = detect_stabilization(fig1_record, 0.02)
        assert rep.t_bar is not None and rep.t_bar <= 10
        assert len(rep.impacts) == 1
        assert rep.impacts[0].energy_drop > 0
        assert rep.post_t_bar_energy_oscillation <= 0.02 * fig1_record.energies[0]
        d = rep.to_dict()
        assert d["impacts"][0]["i_start"] == rep.impacts[0].i_start

    def test_free_has_no_impacts(self, free_sine_record):
        assert impact_intervals(free_sine_record) == []

    def test_oscillating_energy_never_settles(self, fig1_record):
        rec = fig1_record
        kin = rec.kinetic.copy()
        kin[-1] += rec.energies[0]
        rep = detect_stabilization(replace(rec, kinetic=kin), 0.02)
        assert rep.t_bar is None

    @settings(max_examples=30, deadline=None)
    @given(a=st.floats(0.0, 0.2), b=st.floats(0.0, 0.2))
    def test_monotone_in_tolerance(self, fig1_record, a, b):
        lo, hi = sorted((a, b))
        t_lo = detect_stabilization(fig1_record, lo).t_bar
        t_hi = detect_stabilization(fig1_record, hi).t_bar
        if t_lo is not None:
            assert t_hi is not None and t_hi <= t_lo
