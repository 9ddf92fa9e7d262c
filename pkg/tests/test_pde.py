"""
Tests voor pde.py - Upwind HJB solvers
"""
import math
from dataclasses import replace

import numpy as np
import pytest

from coefficients import Affine, Constant, Sine
from exceptions import DivergenceError, ModelFileError, ParameterError
from model import ControlModel, bounded_discount_kappa, constant_model, truncate
from pde import (
    Boundary,
    Grid1D,
    PolicyField,
    TimeGrid,
    ValueField,
    fields_to_csv,
    gradient_bound_check,
    minimal_steps,
    policy_horizon_convergence,
    read_fields_csv,
    report_to_json,
    residual,
    solve_finite_horizon,
    solve_infinite_horizon,
    stable_dt,
    time_derivative_check,
)


@pytest.fixture
def small_grid():
    return Grid1D(-3.0, 3.0, 31)


@pytest.mark.unit
class TestGrids:
    """Test grid en field types"""

    def test_spacing_and_points(self):
        grid = Grid1D(-5.0, 5.0, 201)
        assert grid.spacing == pytest.approx(0.05)
        assert grid.points[0] == -5.0
        assert grid.points[-1] == 5.0
        assert grid.boundary == Boundary.ONE_SIDED

    def test_too_few_nodes(self):
        with pytest.raises(ParameterError):
            Grid1D(0.0, 1.0, 2)

    def test_unknown_boundary(self):
        with pytest.raises(ParameterError):
            Grid1D(0.0, 1.0, 5, 'periodic')

    def test_time_grid(self):
        assert TimeGrid(1.0, 4).dt == 0.25
        with pytest.raises(ParameterError):
            TimeGrid(0.0, 4)

    def test_value_field_rejects_nan(self, small_grid):
        values = np.zeros(small_grid.nodes)
        values[3] = np.nan
        with pytest.raises(ParameterError):
            ValueField(small_grid, values, [0.0])

    def test_policy_layer_lookup(self, small_grid):
        controls = np.zeros((3, small_grid.nodes, 1))
        controls[1] = 1.0
        controls[2] = 2.0
        policy = PolicyField(small_grid, controls, np.zeros((3, small_grid.nodes)), [0.0, 0.5, 1.0])
        assert policy.layer_for_time(0.0) == 0
        assert policy.layer_for_time(0.7) == 1
        assert policy.layer_for_time(5.0) == 2
        np.testing.assert_array_equal(policy.controls_at(np.array([0.05, 10.0]), 0.5)[:, 0], [1.0, 1.0])


@pytest.mark.unit
class TestFiniteHorizon:
    """Test de achterwaartse sweep"""

    def test_constant_rate_closed_form(self, constant_rate_model):
        grid = Grid1D(-5.0, 5.0, 201)
        value, policy, report = solve_finite_horizon(constant_rate_model, grid, TimeGrid(1.0, 4000))
        error = np.max(np.abs(value.initial[1:-1] - (1.0 - math.exp(-1.0))))
        assert error <= 1e-4
        assert report.cfl_ratio <= 1.0
        assert report.converged is True
        assert np.all(policy.indices == 0)

    def test_retained_slices_follow_closed_form(self, constant_rate_model):
        grid = Grid1D(-1.0, 1.0, 11)
        steps = 1000
        value, _, _ = solve_finite_horizon(constant_rate_model, grid, TimeGrid(1.0, steps), retain_stride=250)
        np.testing.assert_allclose(value.time_stamps, [0.0, 0.25, 0.5, 0.75, 1.0])
        expected = 1.0 - np.exp(-(1.0 - value.time_stamps))
        np.testing.assert_allclose(value.values[:, 5], expected, atol=1e-3)
        assert value.values[-1, 5] == 0.0

    def test_cfl_violation_names_minimal_steps(self, constant_rate_model):
        grid = Grid1D(-5.0, 5.0, 201)
        with pytest.raises(ParameterError, match='at least') as excinfo:
            solve_finite_horizon(constant_rate_model, grid, TimeGrid(1.0, 300))
        assert excinfo.value.min_steps == minimal_steps(constant_rate_model, grid, 1.0)

    def test_minimal_steps_satisfy_cfl(self, ou_model, small_grid):
        steps = minimal_steps(ou_model, small_grid, 2.0)
        _, _, report = solve_finite_horizon(ou_model, small_grid, TimeGrid(2.0, steps))
        assert report.cfl_ratio <= 1.0 + 1e-12
        assert stable_dt(ou_model, small_grid) >= report.dt * (1 - 1e-12)

    def test_semigroup(self, ou_model, small_grid):
        steps = 2 * minimal_steps(ou_model, small_grid, 0.5)
        direct, _, _ = solve_finite_horizon(ou_model, small_grid, TimeGrid(1.0, 2 * steps))
        first, _, _ = solve_finite_horizon(ou_model, small_grid, TimeGrid(0.5, steps))
        second, _, _ = solve_finite_horizon(ou_model, small_grid, TimeGrid(0.5, steps), terminal=first.initial)
        np.testing.assert_array_equal(second.initial, direct.initial)

    def test_terminal_shift_is_monotone(self, ou_model, small_grid):
        steps = minimal_steps(ou_model, small_grid, 1.0)
        base, _, _ = solve_finite_horizon(ou_model, small_grid, TimeGrid(1.0, steps))
        raised, _, _ = solve_finite_horizon(ou_model, small_grid, TimeGrid(1.0, steps),
                                            terminal=np.ones(small_grid.nodes))
        assert np.all(raised.initial >= base.initial)
        np.testing.assert_allclose(raised.initial - base.initial, math.exp(-1.0), atol=1e-2)

    def test_terminal_layer_size_checked(self, ou_model, small_grid):
        with pytest.raises(ParameterError):
            solve_finite_horizon(ou_model, small_grid, TimeGrid(1.0, 200), terminal=np.ones(3))

    def test_controlled_policy_uses_drift_direction(self, controlled_model, small_grid):
        steps = minimal_steps(controlled_model, small_grid, 1.0)
        _, policy, _ = solve_finite_horizon(
            controlled_model.with_terminal(Constant(0.0)), small_grid, TimeGrid(1.0, steps))
        assert np.all(np.isin(policy.controls[0][:, 0], [-1.0, 0.0, 1.0]))

    def test_linear_extrapolation_boundary(self, ou_model):
        grid = Grid1D(-3.0, 3.0, 31, 'linear_extrapolation')
        value, _, report = solve_finite_horizon(ou_model, grid, TimeGrid(1.0, minimal_steps(ou_model, grid, 1.0)))
        v = value.initial
        assert v[0] == pytest.approx(2 * v[1] - v[2])
        assert v[-1] == pytest.approx(2 * v[-2] - v[-3])
        assert report.boundary == 'linear_extrapolation'


@pytest.mark.unit
class TestInfiniteHorizon:
    """Test de voorwaartse march naar de stationaire oplossing"""

    def test_constant_rate_converges_to_one(self, constant_rate_model):
        grid = Grid1D(-1.0, 1.0, 21)
        value, _, report = solve_infinite_horizon(constant_rate_model, grid, tol_dt=1e-8)
        assert report.converged is True
        assert np.max(np.abs(value.initial - 1.0)) < 1e-7
        assert report.residual_norm < 1e-8
        assert value.stationary

    def test_zero_discount_does_not_converge(self):
        model = constant_model(rate=0.0, reward=1.0)
        value, _, report = solve_infinite_horizon(model, Grid1D(-1.0, 1.0, 11), t_max=2.0)
        assert report.converged is False
        assert value.initial[5] == pytest.approx(2.0, rel=2e-2)

    def test_growing_discount_hits_overflow_guard(self):
        model = constant_model(rate=1.0, reward=1.0)
        with pytest.raises(DivergenceError, match='overflow guard'):
            solve_infinite_horizon(model, Grid1D(-1.0, 1.0, 11), t_max=100.0, overflow_guard=1e3)

    def test_explicit_dt_must_respect_cfl(self, ou_model, small_grid):
        with pytest.raises(ParameterError, match='dt <='):
            solve_infinite_horizon(ou_model, small_grid, dt=1.0)

    def test_residual_matches_solver_operator(self, ou_model, small_grid):
        value, _, report = solve_infinite_horizon(ou_model, small_grid, tol_dt=1e-7)
        upwind = residual(ou_model, value, stencil='upwind')
        assert np.max(np.abs(upwind)) < 1e-7
        assert residual(ou_model, value).shape == (small_grid.nodes - 2,)
        assert report.residual_norm == pytest.approx(float(np.max(np.abs(upwind))))

    def test_residual_needs_stationary_field(self, ou_model, small_grid):
        value, _, _ = solve_finite_horizon(ou_model, small_grid, TimeGrid(1.0, 200), retain_stride=100)
        with pytest.raises(ParameterError):
            residual(ou_model, value)

    def test_time_derivative_decays(self, constant_rate_model):
        _, _, report = solve_infinite_horizon(constant_rate_model, Grid1D(-1.0, 1.0, 21))
        kappa = bounded_discount_kappa(constant_rate_model, [[-1.0, 1.0]], np.linspace(0.0, 20.0, 41),
                                       samples=20, seed=1)
        result = time_derivative_check(report, kappa)
        assert result['non_increasing'] is True
        assert result['within_kappa'] is True


@pytest.mark.unit
class TestBounds:
    """Test waarde- en gradient bounds tegen kappa"""

    def test_ou_finite_horizon_bounds_met(self, ou_model, small_grid):
        steps = minimal_steps(ou_model, small_grid, 1.0)
        value, _, _ = solve_finite_horizon(ou_model, small_grid, TimeGrid(1.0, steps), retain_stride=steps // 4)
        kappa = bounded_discount_kappa(ou_model, [[-3.0, 3.0]], np.linspace(0.0, 1.0, 11), samples=200, seed=1)
        result = gradient_bound_check(value, kappa, ou_model.lip_L1, ou_model.lip_L2)
        assert result['status'] == 'met'
        assert result['layers_checked'] == value.values.shape[0]

    def test_constant_rate_value_bound_nearly_tight(self, constant_rate_model):
        grid = Grid1D(-1.0, 1.0, 11)
        value, _, _ = solve_finite_horizon(constant_rate_model, grid, TimeGrid(1.0, 2000))
        kappa = bounded_discount_kappa(constant_rate_model, [[-1.0, 1.0]], np.linspace(0.0, 1.0, 201),
                                       samples=20, seed=1)
        result = gradient_bound_check(value, kappa, 1.0, -1.0, include_terminal=False)
        assert result['status'] == 'met'
        assert result['worst_value_slack'] < 1e-3

    def test_halved_kappa_is_inconclusive(self, constant_rate_model):
        grid = Grid1D(-1.0, 1.0, 11)
        value, _, _ = solve_finite_horizon(constant_rate_model, grid, TimeGrid(1.0, 2000))
        kappa = bounded_discount_kappa(constant_rate_model, [[-1.0, 1.0]], np.linspace(0.0, 1.0, 201),
                                       samples=20, seed=1)
        halved = replace(kappa, kappa=0.5 * kappa.kappa, p_terminal=0.5 * kappa.p_terminal)
        result = gradient_bound_check(value, halved, 1.0, -1.0, include_terminal=False)
        assert result['status'] == 'inconclusive'
        assert result['worst_value_slack'] < 0
        assert result['worst_value_at']['tau'] == pytest.approx(1.0)

    def test_short_kappa_table_rejected(self, constant_rate_model):
        grid = Grid1D(-1.0, 1.0, 11)
        value, _, _ = solve_finite_horizon(constant_rate_model, grid, TimeGrid(2.0, 400))
        kappa = bounded_discount_kappa(constant_rate_model, [[-1.0, 1.0]], [0.0, 1.0], samples=20, seed=1)
        with pytest.raises(ParameterError):
            gradient_bound_check(value, kappa, 1.0, -1.0)


@pytest.mark.integration
class TestPolicyHorizonConvergence:
    """Eindige horizon policies en waarden naderen de oneindige horizon"""

    def test_ou_value_gaps_shrink(self, ou_model, small_grid):
        result = policy_horizon_convergence(ou_model, small_grid, [1.0, 2.0, 4.0])
        gaps = [row['value_gap'] for row in result['rows']]
        assert gaps[0] > gaps[1] > gaps[2]
        assert result['cauchy'] is True
        assert all(row['policy_mismatch_fraction'] == 0.0 for row in result['rows'])

    def test_horizons_must_increase(self, ou_model, small_grid):
        with pytest.raises(ParameterError):
            policy_horizon_convergence(ou_model, small_grid, [2.0, 1.0])


@pytest.mark.unit
class TestArtifacts:
    """Test CSV en JSON artifacts"""

    def test_field_csv_round_trip(self, ou_model, small_grid, tmp_path):
        value, policy, _ = solve_finite_horizon(ou_model, small_grid, TimeGrid(1.0, 200), retain_stride=100)
        path = tmp_path / 'field.csv'
        fields_to_csv(value, policy, str(path), {'config_digest': 'abc', 'seed': 1})
        text = path.read_text(encoding='utf-8')
        assert text.startswith('# config_digest=abc\n# seed=1\n')
        loaded, loaded_policy = read_fields_csv(str(path))
        np.testing.assert_array_equal(loaded.values, value.values)
        np.testing.assert_array_equal(loaded.time_stamps, value.time_stamps)
        np.testing.assert_array_equal(loaded_policy.indices, policy.indices)
        assert loaded.kind == 'finite'
        assert loaded.horizon == 1.0

    def test_corrupted_csv(self, tmp_path):
        path = tmp_path / 'field.csv'
        path.write_text('a,b\n1,2\n', encoding='utf-8')
        with pytest.raises(ModelFileError):
            read_fields_csv(str(path))

    def test_non_numeric_csv(self, tmp_path):
        path = tmp_path / 'field.csv'
        path.write_text('y,t,u,control_index,delta_star_0\n0,0,x,0,0\n', encoding='utf-8')
        with pytest.raises(ModelFileError):
            read_fields_csv(str(path))

    def test_report_json_has_no_wall_time(self, constant_rate_model, tmp_path):
        _, _, report = solve_finite_horizon(constant_rate_model, Grid1D(-1.0, 1.0, 11), TimeGrid(1.0, 100))
        path = tmp_path / 'report.json'
        report_to_json(report, str(path), {'seed': 3})
        text = path.read_text(encoding='utf-8')
        assert 'wall_time' not in text
        assert '"seed": 3' in text


def _linear_reward_model(rate=0.0):
    """OU drift -y, reward f = y, g = 0: u(y, t) = y (1 - e^{-(T - t)}) bij h = 0"""
    return ControlModel(
        dim=1,
        drift=(Affine(0.0, [-1.0]),),
        discount_rate=Constant(rate),
        running_reward=Affine(0.0, [1.0]),
        terminal_reward=Constant(0.0),
        controls=[[0.0]],
        lip_L1=1.0,
        lip_L2=-1.0,
        name='ou-linear-reward',
    )


@pytest.mark.unit
class TestKnownSolutions:
    """Oplossingen met een bekende vorm"""

    def test_ou_linear_reward(self):
        grid = Grid1D(-5.0, 5.0, 201)
        value, _, _ = solve_finite_horizon(_linear_reward_model(), grid, TimeGrid(1.0, 2000))
        assert value.value_at(1.0) == pytest.approx(1.0 - math.exp(-1.0), abs=1e-3)
        assert value.value_at(0.0) == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(value.initial, grid.points * value.value_at(1.0), atol=1e-9)

    def test_raised_reward_keeps_order(self, ou_model, small_grid):
        steps = minimal_steps(ou_model, small_grid, 1.0)
        base, _, _ = solve_finite_horizon(ou_model, small_grid, TimeGrid(1.0, steps))
        raised_model = replace(ou_model, running_reward=Sine(amplitude=1.0, offset=2.5))
        raised, _, _ = solve_finite_horizon(raised_model, small_grid, TimeGrid(1.0, steps))
        assert np.all(raised.initial > base.initial)
        np.testing.assert_allclose(raised.initial - base.initial, 0.5 * (1.0 - math.exp(-1.0)), atol=1e-2)

    def test_local_perturbation_has_local_residual(self, constant_rate_model):
        grid = Grid1D(-1.0, 1.0, 21)
        values = np.ones(grid.nodes)
        assert np.all(residual(constant_rate_model, ValueField(grid, values, [0.0])) == 0.0)
        values[10] += 1.0
        result = residual(constant_rate_model, ValueField(grid, values, [0.0]))
        nonzero = np.flatnonzero(result) + 1
        np.testing.assert_array_equal(nonzero, [9, 10, 11])
        assert result[9] < 0 < result[8]

    def test_infinite_horizon_half_rate(self):
        model = constant_model(rate=-0.5, reward=1.0)
        value, _, report = solve_infinite_horizon(model, Grid1D(-1.0, 1.0, 21), tol_dt=1e-8)
        assert report.converged is True
        assert np.max(np.abs(value.initial - 2.0)) < 1e-6

    def test_infinite_matches_long_finite_horizon(self, ou_model, small_grid):
        stationary, _, report = solve_infinite_horizon(ou_model, small_grid, tol_dt=1e-7)
        assert report.converged is True
        finite, _, _ = solve_finite_horizon(ou_model, small_grid,
                                            TimeGrid(16.0, minimal_steps(ou_model, small_grid, 16.0)))
        probes = np.linspace(-1.0, 1.0, 5)
        gap = np.abs(stationary.value_at(probes) - finite.value_at(probes))
        assert np.max(gap) <= 2e-3


@pytest.mark.integration
class TestTruncationLadder:
    """Oplossingen onder truncate(model, k) naderen het originele model"""

    def test_solutions_converge_in_k(self):
        model = _linear_reward_model(rate=-1.0)
        grid = Grid1D(-5.0, 5.0, 51)
        time_grid = TimeGrid(1.0, minimal_steps(model, grid, 1.0))
        reference, _, _ = solve_finite_horizon(model, grid, time_grid)
        gaps = []
        for k in (2.0, 3.0, 5.0):
            truncated, _, _ = solve_finite_horizon(truncate(model, k), grid, time_grid)
            gaps.append(float(np.max(np.abs(truncated.initial - reference.initial))))
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] == 0.0

    def test_tables_coincide_once_grid_is_inside(self):
        model = _linear_reward_model(rate=-1.0)
        grid = Grid1D(-5.0, 5.0, 51)
        time_grid = TimeGrid(1.0, minimal_steps(model, grid, 1.0))
        for table, truncated_table in zip(model.control_tables(grid.points),
                                          truncate(model, 5.0).control_tables(grid.points)):
            np.testing.assert_array_equal(truncated_table, table)
        reference, _, _ = solve_finite_horizon(model, grid, time_grid)
        truncated, _, _ = solve_finite_horizon(truncate(model, 5.0), grid, time_grid)
        np.testing.assert_array_equal(truncated.values, reference.values)

    def test_small_k_changes_tables_outside_ball(self):
        model = _linear_reward_model(rate=-1.0)
        points = Grid1D(-5.0, 5.0, 51).points
        _, _, reward = model.control_tables(points)
        _, _, truncated = truncate(model, 2.0).control_tables(points)
        inside = np.abs(points) <= 2.0
        np.testing.assert_array_equal(truncated[inside], reward[inside])
        assert np.all(truncated[np.abs(points) >= 4.0] == 0.0)
