"""
Tests voor hamiltonian.py - Hamiltonian evaluatie
"""
import math

import numpy as np
import pytest

from coefficients import Affine, Constant, ControlPower, Sine, Sum
from exceptions import EvaluationError, ParameterError
from hamiltonian import candidate_values, empirical_constants, eval_H, maximize
from model import ControlModel, constant_model


@pytest.fixture
def linear_model():
    """i = delta, h = -1, f = -delta^2: H = max(delta p - u - delta^2)"""
    return ControlModel(
        dim=1,
        drift=(Affine(0.0, [], [1.0]),),
        discount_rate=Constant(-1.0),
        running_reward=ControlPower(index=0, power=2.0, coef=-1.0),
        terminal_reward=Constant(0.0),
        controls=np.linspace(-2.0, 2.0, 9).reshape(-1, 1),
        lip_L1=1.0,
        lip_L2=-1.0,
    )


@pytest.mark.unit
class TestEvalH:
    """Test exacte scan over de control lijst"""

    def test_singleton_control(self):
        model = constant_model(rate=-1.0, reward=1.0)
        result = eval_H(model, [0.3], 2.0, [5.0])
        assert result.value == pytest.approx(-1.0)
        assert result.argmax_index == 0
        assert result.runner_up_gap == math.inf

    def test_argmax_follows_gradient(self, linear_model):
        # delta p - delta^2 is maximaal in delta = p / 2
        result = eval_H(linear_model, [0.0], 0.0, [2.0])
        assert result.argmax[0] == pytest.approx(1.0)
        assert result.value == pytest.approx(1.0)
        assert result.runner_up_gap == pytest.approx(1.0 - 0.75)

    def test_ties_break_to_lowest_index(self, linear_model):
        # p = 0: alleen delta = 0 haalt het maximum
        result = eval_H(linear_model, [0.0], 0.0, [0.0])
        assert result.argmax_index == 4
        values, indices = maximize(np.array([[1.0, 3.0, 3.0, 2.0]]))
        assert indices[0] == 1
        assert values[0] == 3.0

    def test_dimension_mismatch(self, linear_model):
        with pytest.raises(ParameterError):
            eval_H(linear_model, [0.0, 1.0], 0.0, [1.0])

    def test_non_finite_u(self, linear_model):
        with pytest.raises(ParameterError):
            eval_H(linear_model, [0.0], math.nan, [1.0])

    def test_evaluation_error_names_control(self):
        model = ControlModel(
            dim=1, drift=(Constant(0.0),), discount_rate=Constant(-1.0),
            running_reward=Sine(amplitude=math.inf), terminal_reward=Constant(0.0),
            controls=[[0.0], [1.0]], lip_L1=1.0, lip_L2=-1.0,
        )
        with pytest.raises(EvaluationError) as excinfo:
            eval_H(model, [0.0], 1.0, [0.0])
        assert excinfo.value.coefficient == 'running_reward'
        assert excinfo.value.control == [0.0]

    def test_candidate_values_vector(self, linear_model):
        values = candidate_values(linear_model, [0.0], 1.0, [0.0])
        np.testing.assert_allclose(values, -1.0 - linear_model.controls[:, 0] ** 2)


@pytest.mark.unit
class TestHamiltonianProperties:
    """Monotonie in u, Lipschitz in p en argmax invariantie"""

    @pytest.fixture
    def model(self):
        return ControlModel(
            dim=1,
            drift=(Affine(0.0, [-1.0], [1.0]),),
            discount_rate=Sum([Constant(-0.5), ControlPower(index=0, power=1.0, coef=0.2)]),
            running_reward=Sum([Sine(), ControlPower(index=0, power=2.0, coef=-0.5)]),
            terminal_reward=Constant(0.0),
            controls=np.linspace(-1.0, 1.0, 5).reshape(-1, 1),
            lip_L1=1.2,
            lip_L2=-1.0,
        )

    def test_monotone_difference_bound(self, model, rng):
        constants = empirical_constants(model, rng.uniform(-3, 3, 1000))
        k = constants['monotone']
        for _ in range(1000):
            y = [rng.uniform(-3, 3)]
            p = [rng.uniform(-5, 5)]
            u, v = sorted(rng.uniform(-5, 5, 2))
            difference = eval_H(model, y, v, p).value - eval_H(model, y, u, p).value
            assert difference <= k * (v - u) + 1e-12

    def test_lipschitz_in_p(self, model, rng):
        constants = empirical_constants(model, rng.uniform(-3, 3, 1000))
        for _ in range(1000):
            y = rng.uniform(-3, 3)
            u = rng.uniform(-5, 5)
            p, q = rng.uniform(-5, 5, 2)
            gap = abs(eval_H(model, [y], u, [p]).value - eval_H(model, [y], u, [q]).value)
            assert gap <= constants['gradient'] * (1 + abs(y)) * abs(p - q) + 1e-12

    def test_argmax_invariant_under_reward_shift(self, model, rng):
        shifted = ControlModel(
            dim=1, drift=model.drift, discount_rate=model.discount_rate,
            running_reward=Sum([model.running_reward, Constant(3.0)]),
            terminal_reward=model.terminal_reward, controls=model.controls,
            lip_L1=model.lip_L1, lip_L2=model.lip_L2,
        )
        for _ in range(1000):
            y, u, p = [rng.uniform(-3, 3)], rng.uniform(-5, 5), [rng.uniform(-5, 5)]
            base = eval_H(model, y, u, p)
            moved = eval_H(shifted, y, u, p)
            assert moved.argmax_index == base.argmax_index
            assert moved.value == pytest.approx(base.value + 3.0)

    def test_empirical_constants_of_constant_model(self):
        constants = empirical_constants(constant_model(rate=0.4), np.linspace(-1, 1, 11))
        assert constants['monotone'] == pytest.approx(0.4)
        assert constants['gradient'] == 0.0
