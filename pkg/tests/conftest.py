"""
HJB Discount Lab - Test Fixtures & Configuration
Shared fixtures voor alle test modules
"""
import json
import os
import sys

import numpy as np
import pytest

# Voeg project root toe aan sys.path
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

# Stel test environment in VOOR imports
os.environ['HJBLAB_ENV'] = 'testing'

from coefficients import Affine, Constant, Sine  # noqa: E402
from finance import MarketModel  # noqa: E402
from model import ControlModel, constant_model  # noqa: E402
from simulate import MonteCarloConfig  # noqa: E402


@pytest.fixture
def constant_rate_model():
    """f = 1, h = -1, g = 0: u(y, t) = 1 - e^{-(T - t)}"""
    return constant_model(rate=-1.0, reward=1.0, terminal=0.0)


@pytest.fixture
def ou_model():
    """OU drift -y, h = -1, begrensde reward 2 + sin(y), een control"""
    return ControlModel(
        dim=1,
        drift=(Affine(0.0, [-1.0]),),
        discount_rate=Constant(-1.0),
        running_reward=Sine(amplitude=1.0, offset=2.0),
        terminal_reward=Constant(0.0),
        controls=[[0.0]],
        lip_L1=1.0,
        lip_L2=-1.0,
        name='ou-bounded',
        domain_box=[[-3.0, 3.0]],
    )


@pytest.fixture
def controlled_model():
    """Drift -y + delta met controls {-1, 0, 1}, reward 1 - delta^2 / 2"""
    from coefficients import ControlPower, Sum
    return ControlModel(
        dim=1,
        drift=(Affine(0.0, [-1.0], [1.0]),),
        discount_rate=Constant(-1.0),
        running_reward=Sum([Constant(1.0), ControlPower(index=0, power=2.0, coef=-0.5)]),
        terminal_reward=Constant(0.0),
        controls=[[-1.0], [0.0], [1.0]],
        lip_L1=1.0,
        lip_L2=-1.0,
        name='controlled',
        domain_box=[[-3.0, 3.0]],
    )


@pytest.fixture
def merton_market():
    """r = 0.02, b = 0.04, sigma = 0.2, gamma = 0.5, w = 0.1"""
    return MarketModel(
        short_rate=Constant(0.02),
        excess_drift=Constant(0.04),
        volatility=Constant(0.2),
        factor_drift=Affine(0.0, [-1.0]),
        correlation=0.0,
        risk_aversion=0.5,
        discount=0.1,
        position_cap=3.0,
        consumption_cap=2.0,
        box=(-2.0, 2.0),
        name='merton',
    )


@pytest.fixture
def small_mc():
    return MonteCarloConfig(paths=2000, dt=0.01, seed=7)


@pytest.fixture
def write_json(tmp_path):
    """Schrijf een JSON bestand in tmp_path en geef het pad terug"""
    def _write(name, data):
        path = tmp_path / name
        path.write_text(json.dumps(data), encoding='utf-8')
        return str(path)
    return _write


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
