"""
Tests voor model.py - Control model, assumption checks, truncatie en kappa
"""
import math

import numpy as np
import pytest

from coefficients import Affine, Constant, Sine
from exceptions import EvaluationError, ModelFileError, ParameterError
from model import (
    KAPPA_LABEL,
    ControlModel,
    KappaTable,
    ball_mesh,
    bounded_discount_kappa,
    check_assumption1,
    constant_model,
    empirical_lipschitz,
    estimate_kappa,
    load_model,
    model_from_dict,
    model_to_dict,
    read_kappa_csv,
    save_model,
    truncate,
    truncate_drift,
)
from simulate import MonteCarloConfig, default_policy_family


def _model(**changes):
    params = dict(
        dim=1, drift=(Affine(0.0, [-1.0]),), discount_rate=Constant(-1.0),
        running_reward=Constant(1.0), terminal_reward=Constant(0.0),
        controls=[[0.0]], lip_L1=1.0, lip_L2=-1.0,
    )
    params.update(changes)
    return ControlModel(**params)


@pytest.mark.unit
class TestControlModel:
    """Test constructie en evaluatie"""

    def test_controls_become_matrix(self):
        model = _model(controls=[0.0, 1.0])
        assert model.controls.shape == (2, 1)
        assert model.n_controls == 2
        assert model.control_dim == 1

    def test_empty_controls(self):
        with pytest.raises(ParameterError):
            _model(controls=np.zeros((0, 1)))

    def test_duplicate_controls(self):
        with pytest.raises(ParameterError, match='duplicate'):
            _model(controls=[[1.0], [1.0]])

    def test_nonpositive_l1(self):
        with pytest.raises(ParameterError):
            _model(lip_L1=0.0)

    def test_zero_l2(self):
        with pytest.raises(ParameterError):
            _model(lip_L2=0.0)

    def test_drift_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            _model(dim=2)

    def test_controls_are_read_only(self):
        model = _model(controls=[[0.0], [1.0]])
        with pytest.raises(ValueError):
            model.controls[0, 0] = 5.0

    def test_non_finite_evaluation_names_coefficient(self):
        model = _model(running_reward=Sine(amplitude=math.inf))
        with pytest.raises(EvaluationError) as excinfo:
            model.f(np.array([[0.0]]), np.array([[0.0]]))
        assert excinfo.value.coefficient == 'running_reward'
        assert excinfo.value.point == [0.0]

    def test_control_tables_shape(self, controlled_model):
        drift, h, f = controlled_model.control_tables(np.linspace(-1, 1, 5))
        assert drift.shape == (5, 3)
        assert h.shape == (5, 3)
        np.testing.assert_allclose(f[0], [0.5, 1.0, 0.5])
        np.testing.assert_allclose(drift[:, 2], 1.0 - np.linspace(-1, 1, 5))


@pytest.mark.unit
class TestAssumptionCheck:
    """Test de Lipschitz assumption screen"""

    def test_ou_model_passes(self, ou_model):
        report = check_assumption1(ou_model, samples=200, seed=1)
        assert report.passed is True
        assert report.worst_ratio <= 1.0 + 1e-9

    def test_expanding_drift_fails_with_witness(self):
        model = _model(drift=(Affine(0.0, [1.0]),), domain_box=[[-2.0, 2.0]])
        report = check_assumption1(model, samples=100, seed=3)
        assert report.passed is False
        assert report.drift_ratio == pytest.approx(3.0)
        assert report.witness['coefficient'] == 'i_one_sided'

    def test_understated_lipschitz_fails(self):
        model = _model(running_reward=Affine(0.0, [2.0]), domain_box=[[-1.0, 1.0]])
        report = check_assumption1(model, samples=100, seed=3)
        assert report.passed is False
        assert report.witness['coefficient'] == 'f'
        assert report.lipschitz_ratio == pytest.approx(2.0)

    def test_deterministic_for_fixed_seed(self, ou_model):
        first = check_assumption1(ou_model, samples=50, seed=11)
        second = check_assumption1(ou_model, samples=50, seed=11)
        assert first.to_dict() == second.to_dict()

    def test_needs_box(self):
        with pytest.raises(ParameterError):
            check_assumption1(_model())

    def test_empirical_lipschitz(self, ou_model):
        l1, l2 = empirical_lipschitz(ou_model, [[-3.0, 3.0]], samples=100, seed=5)
        assert l1 == pytest.approx(1.0)
        assert l2 == pytest.approx(-1.0)


@pytest.mark.unit
class TestTruncation:
    """Test truncatie operatoren"""

    def test_truncate_updates_constants(self, ou_model):
        truncated = truncate(ou_model, 2.0)
        assert truncated.lip_L1 == pytest.approx(3.0)
        assert truncated.lip_L2 == ou_model.lip_L2
        assert '[k=2]' in truncated.name

    def test_truncate_exact_inside_ball(self, ou_model):
        truncated = truncate(ou_model, 2.0)
        y = np.linspace(-2.0, 2.0, 9)
        d = np.zeros((9, 1))
        np.testing.assert_array_equal(truncated.f(y, d), ou_model.f(y, d))
        np.testing.assert_array_equal(truncated.h(y, d), ou_model.h(y, d))

    def test_truncate_vanishes_outside(self, ou_model):
        truncated = truncate(ou_model, 1.0)
        y = np.array([2.5, -3.0])
        np.testing.assert_array_equal(truncated.f(y, np.zeros((2, 1))), [0.0, 0.0])
        # negatieve discount blijft: -h^-
        np.testing.assert_array_equal(truncated.h(y, np.zeros((2, 1))), [-1.0, -1.0])

    def test_truncated_model_passes_check(self, ou_model):
        report = check_assumption1(truncate(ou_model, 1.0), box=[[-3.0, 3.0]], samples=200, seed=2)
        assert report.passed is True

    def test_truncate_rejects_nonpositive_level(self, ou_model):
        with pytest.raises(ParameterError):
            truncate(ou_model, 0.0)

    def test_truncate_drift_keeps_rewards(self, ou_model):
        truncated = truncate_drift(ou_model, 1.0)
        y = np.array([0.5, 3.0])
        d = np.zeros((2, 1))
        np.testing.assert_allclose(truncated.drift_values(y, d)[:, 0], [-0.5, 0.0])
        np.testing.assert_array_equal(truncated.f(y, d), ou_model.f(y, d))


@pytest.mark.unit
class TestKappaTable:
    """Test kappa tabellen en integralen"""

    def _table(self, kappa, decay=0.0):
        times = np.array([0.0, 1.0, 2.0])
        return KappaTable(times=times, radius=1.0, kappa=kappa, p_terminal=kappa,
                          kappa_se=np.zeros(3), p_se=np.zeros(3), policy_ids=['a'] * 3,
                          policies_probed=['a'], lip_L2=-1.0, decay_rate=decay)

    def test_integral_of_constant(self):
        assert self._table(np.ones(3)).integral(0.0, 2.0) == pytest.approx(2.0)

    def test_weighted_integral_floor(self):
        table = self._table(np.ones(3))
        assert table.integral(0.0, 2.0, rate=-1.0, floor_one=True) == pytest.approx(2.0)

    def test_exponential_tail(self):
        table = self._table(np.ones(3), decay=0.5)
        assert float(table.kappa_at(4.0)) == pytest.approx(math.exp(-1.0))

    def test_rejects_negative_values(self):
        with pytest.raises(ParameterError):
            self._table(np.array([1.0, -1.0, 0.0]))

    def test_csv_carries_provenance(self, tmp_path):
        path = tmp_path / 'kappa.csv'
        self._table(np.ones(3)).to_csv(str(path), {'config_digest': 'abc', 'seed': 4})
        lines = path.read_text(encoding='utf-8').splitlines()
        assert lines[0] == '# config_digest=abc'
        assert lines[1] == '# seed=4'
        assert lines[2] == '# radius=1.0'
        assert lines[5] == 't,kappa,p,policy_id'

    def test_csv_read_back(self, tmp_path):
        path = tmp_path / 'kappa.csv'
        table = self._table(np.array([1.0, 0.5, 0.25]), decay=0.5)
        table.to_csv(str(path), {'seed': 4})
        loaded = read_kappa_csv(str(path))
        np.testing.assert_array_equal(loaded.times, table.times)
        np.testing.assert_array_equal(loaded.kappa, table.kappa)
        assert loaded.radius == 1.0
        assert loaded.decay_rate == 0.5
        assert loaded.integral(0.0, 2.0) == pytest.approx(table.integral(0.0, 2.0))
        assert loaded.integrable is True

    def test_csv_without_radius(self, tmp_path):
        path = tmp_path / 'kappa.csv'
        path.write_text('t,kappa,p,policy_id\n0.0,1.0,1.0,a\n', encoding='utf-8')
        with pytest.raises(ModelFileError, match='radius'):
            read_kappa_csv(str(path))

    def test_csv_with_negative_kappa(self, tmp_path):
        path = tmp_path / 'kappa.csv'
        path.write_text('# radius=1.0\nt,kappa,p,policy_id\n0.0,-1.0,1.0,a\n', encoding='utf-8')
        with pytest.raises(ModelFileError):
            read_kappa_csv(str(path))


@pytest.mark.integration
class TestKappaEstimation:
    """Test Monte Carlo kappa envelope"""

    def test_constant_discount_gives_exponential(self, constant_rate_model):
        mc = MonteCarloConfig(paths=20, dt=0.01, seed=3)
        table = estimate_kappa(constant_rate_model, 1.0, 2.0, default_policy_family(constant_rate_model),
                               mc, n_times=4, mesh_points=3)
        np.testing.assert_allclose(table.kappa, np.exp(-table.times), rtol=1e-9)
        np.testing.assert_allclose(table.p_terminal, np.exp(-table.times), rtol=1e-9)
        assert table.integrable is True
        assert table.label == KAPPA_LABEL
        assert table.policy_ids[0] == 'const[0]'

    def test_growing_discount_is_not_integrable(self):
        model = constant_model(rate=0.5)
        mc = MonteCarloConfig(paths=10, dt=0.05, seed=3)
        table = estimate_kappa(model, 0.5, 2.0, default_policy_family(model), mc, n_times=4, mesh_points=1)
        assert table.integrable is False

    def test_empty_policy_family(self, constant_rate_model, small_mc):
        with pytest.raises(ParameterError):
            estimate_kappa(constant_rate_model, 1.0, 1.0, [], small_mc)

    def test_ball_mesh_contains_origin(self):
        mesh = ball_mesh(2, 1.0, 4)
        assert np.any(np.all(mesh == 0.0, axis=1))
        assert np.all(np.linalg.norm(mesh, axis=1) <= 1.0 + 1e-12)

    def test_bounded_discount_kappa(self, ou_model):
        table = bounded_discount_kappa(ou_model, [[-3.0, 3.0]], [0.0, 1.0, 2.0], samples=200, seed=1)
        assert 2.9 < table.kappa[0] <= 3.0
        assert table.kappa[2] == pytest.approx(table.kappa[0] * math.exp(-2.0))
        assert table.decay_rate == pytest.approx(1.0)
        assert table.integrable is True

    def test_bounded_discount_kappa_needs_negative_rate(self):
        with pytest.raises(ParameterError):
            bounded_discount_kappa(constant_model(rate=0.0), [[-1.0, 1.0]], [0.0, 1.0])


@pytest.mark.unit
class TestModelFiles:
    """Test model bestanden"""

    def test_round_trip(self, ou_model, tmp_path):
        path = tmp_path / 'model.json'
        save_model(ou_model, str(path), {'seed': 1})
        loaded = load_model(str(path))
        assert model_to_dict(loaded) == model_to_dict(ou_model)

    def test_single_drift_descriptor(self):
        model = model_from_dict({
            'dim': 1, 'controls': [[0.0]], 'drift': {'kind': 'affine', 'y_coef': [-1.0]},
            'discount_rate': -1.0, 'running_reward': 1.0, 'L1': 1.0, 'L2': -1.0,
        })
        assert model.dim == 1
        assert model.g(np.array([3.0]))[0] == 0.0

    def test_missing_field(self):
        with pytest.raises(ModelFileError, match='missing field'):
            model_from_dict({'dim': 1})

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelFileError):
            load_model(str(tmp_path / 'absent.json'))

    def test_invalid_json(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{not json', encoding='utf-8')
        with pytest.raises(ModelFileError):
            load_model(str(path))

    @pytest.mark.parametrize('changes', [
        {'L2': 0.0},
        {'L1': -1.0},
        {'controls': [[0.0], [0.0]]},
    ])
    def test_invalid_values_raise_model_file_error(self, changes):
        data = {
            'dim': 1, 'controls': [[0.0]], 'drift': 0.0,
            'discount_rate': -1.0, 'running_reward': 1.0, 'L1': 1.0, 'L2': -1.0,
        }
        data.update(changes)
        with pytest.raises(ModelFileError, match='invalid model file') as excinfo:
            model_from_dict(data)
        assert isinstance(excinfo.value.__cause__, ParameterError)
