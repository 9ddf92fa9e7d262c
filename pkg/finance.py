"""
HJB Discount Lab - Finance Module
Consumptie-investering met factor model: reductie naar de scalaire HJB,
closed-form maximizers, discount screening en Merton benchmark
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from coefficients import Coefficient, Constant, ControlPower, Product, Sum, coefficient_from_dict
from config import Config
from exceptions import DomainError, ModelFileError, ParameterError
from logging_config import LogEvents, get_logger
from model import ControlModel, empirical_lipschitz

logger = get_logger(__name__)


# ═══════════════════════════════════════════════════════
# MARKT
# ═══════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class MarketModel:
    """
    Markt primitives

    r(y) short rate, b(y) excess drift, sigma(y) volatiliteit, i(y) factor drift,
    rho correlatie, gamma risk aversion in (0, 1), w discount, R positie cap, m consumptie cap.
    """
    short_rate: Coefficient
    excess_drift: Coefficient
    volatility: Coefficient
    factor_drift: Coefficient
    correlation: float
    risk_aversion: float
    discount: float
    position_cap: float
    consumption_cap: float
    box: Tuple[float, float] = Config.MARKET_BOX
    lip_L1: Optional[float] = None
    lip_L2: Optional[float] = None
    name: str = 'market'

    def __post_init__(self):
        for name in ('short_rate', 'excess_drift', 'volatility', 'factor_drift'):
            object.__setattr__(self, name, coefficient_from_dict(getattr(self, name)))
        if not 0.0 < self.risk_aversion < 1.0:
            raise ParameterError(f'risk aversion must lie strictly inside (0, 1), got {self.risk_aversion}')
        if not -1.0 <= self.correlation <= 1.0:
            raise ParameterError(f'correlation must lie in [-1, 1], got {self.correlation}')
        if not self.discount > 0:
            raise ParameterError('discount w must be positive')
        if not (self.position_cap > 0 and self.consumption_cap > 0):
            raise ParameterError('position and consumption caps must be positive')
        box = tuple(float(b) for b in self.box)
        if len(box) != 2 or not box[0] < box[1]:
            raise ParameterError('market box must be (low, high) with low < high')
        object.__setattr__(self, 'box', box)
        sigma = self.sigma(np.linspace(box[0], box[1], 201))
        if not np.all(np.isfinite(sigma)) or float(np.min(sigma)) <= 0:
            raise DomainError('volatility must stay positive on the market box')

    def r(self, y) -> np.ndarray:
        return self.short_rate(np.asarray(y, dtype=float).reshape(-1))

    def b(self, y) -> np.ndarray:
        return self.excess_drift(np.asarray(y, dtype=float).reshape(-1))

    def sigma(self, y) -> np.ndarray:
        return self.volatility(np.asarray(y, dtype=float).reshape(-1))

    def i(self, y) -> np.ndarray:
        return self.factor_drift(np.asarray(y, dtype=float).reshape(-1))

    @property
    def is_constant(self) -> bool:
        return all(isinstance(c, Constant) for c in (self.short_rate, self.excess_drift, self.volatility))


def market_from_dict(data: Dict) -> MarketModel:
    try:
        return MarketModel(
            short_rate=coefficient_from_dict(data['short_rate']),
            excess_drift=coefficient_from_dict(data['excess_drift']),
            volatility=coefficient_from_dict(data['volatility']),
            factor_drift=coefficient_from_dict(data.get('factor_drift', 0.0)),
            correlation=float(data.get('correlation', 0.0)),
            risk_aversion=float(data['risk_aversion']),
            discount=float(data['discount']),
            position_cap=float(data['position_cap']),
            consumption_cap=float(data['consumption_cap']),
            box=tuple(data.get('box', Config.MARKET_BOX)),
            lip_L1=data.get('L1'),
            lip_L2=data.get('L2'),
            name=data.get('name', 'market'),
        )
    except KeyError as exc:
        raise ModelFileError(f'market file is missing field {exc}') from exc
    except ModelFileError:
        raise
    except (ParameterError, DomainError) as exc:
        raise ModelFileError(f'invalid market file: {exc}') from exc
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f'malformed market file: {exc}') from exc


def market_to_dict(market: MarketModel) -> Dict:
    data = {
        'name': market.name,
        'short_rate': market.short_rate.to_dict(),
        'excess_drift': market.excess_drift.to_dict(),
        'volatility': market.volatility.to_dict(),
        'factor_drift': market.factor_drift.to_dict(),
        'correlation': market.correlation,
        'risk_aversion': market.risk_aversion,
        'discount': market.discount,
        'position_cap': market.position_cap,
        'consumption_cap': market.consumption_cap,
        'box': list(market.box),
    }
    if market.lip_L1 is not None:
        data['L1'] = market.lip_L1
    if market.lip_L2 is not None:
        data['L2'] = market.lip_L2
    return data


def load_market(path: str) -> MarketModel:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ModelFileError(f"cannot read market file '{path}': {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"market file '{path}' is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelFileError(f"market file '{path}' must hold a JSON object")
    return market_from_dict(data)


# ═══════════════════════════════════════════════════════
# REDUCTIE NAAR CONTROL MODEL
# ═══════════════════════════════════════════════════════

def check_market_assumptions(market: MarketModel, samples: int = None) -> Dict:
    """Sampled Lipschitz constants van r, b, sigma^2 en de one-sided constante van i"""
    samples = Config.ASSUMPTION_SAMPLES if samples is None else int(samples)
    ys = np.linspace(market.box[0], market.box[1], max(samples, 3))
    dy = np.diff(ys)

    def slope(values):
        return np.diff(values) / dy

    sigma = market.sigma(ys)
    constants = {
        'short_rate': float(np.max(np.abs(slope(market.r(ys))))),
        'excess_drift': float(np.max(np.abs(slope(market.b(ys))))),
        'variance': float(np.max(np.abs(slope(sigma ** 2)))),
        'factor_drift': float(np.max(np.abs(slope(market.i(ys))))),
        'factor_drift_one_sided': float(np.max(slope(market.i(ys)))),
        'sigma_min': float(np.min(sigma)),
    }
    warnings: List[str] = []
    if constants['factor_drift_one_sided'] >= 0:
        warnings.append(
            f"factor drift is not contractive on the box (one-sided constant "
            f"{constants['factor_drift_one_sided']:.4g} >= 0)"
        )
    return {'constants': constants, 'warnings': warnings}


def control_grid(market: MarketModel, control_resolution: Sequence[int]) -> np.ndarray:
    n_pi, n_c = (int(n) for n in control_resolution)
    if n_pi < 2 or n_c < 2:
        raise ParameterError('control resolution must be at least 2 in each direction')
    pis = np.linspace(-market.position_cap, market.position_cap, n_pi)
    cs = np.linspace(0.0, market.consumption_cap, n_c)
    return np.array([(p, c) for p in pis for c in cs], dtype=float)


def to_control_model(market: MarketModel, control_resolution: Optional[Sequence[int]] = None,
                     samples: int = None, seed: int = None) -> ControlModel:
    """
    Gereduceerd 1-D model met controls (pi, c)

    drift    i(y) + rho pi sigma(y)
    discount gamma [r + b pi - 1/2 (1 - gamma) sigma^2 pi^2 - c] - w
    reward   c^gamma, terminal 1
    """
    if control_resolution is None:
        control_resolution = (Config.CONTROL_RESOLUTION_PI, Config.CONTROL_RESOLUTION_C)
    controls = control_grid(market, control_resolution)
    gamma, rho = market.risk_aversion, market.correlation
    pi = ControlPower(index=0, power=1.0)

    drift = Sum([market.factor_drift, Product([Constant(rho), pi, market.volatility])])
    discount = Sum([
        Product([Constant(gamma), market.short_rate]),
        Product([Constant(gamma), market.excess_drift, pi]),
        Product([Constant(-0.5 * gamma * (1.0 - gamma)), market.volatility, market.volatility,
                 ControlPower(index=0, power=2.0)]),
        ControlPower(index=1, power=1.0, coef=-gamma),
        Constant(-market.discount),
    ])
    reward = ControlPower(index=1, power=gamma)
    box = [list(market.box)]

    provisional = ControlModel(
        dim=1, drift=(drift,), discount_rate=discount, running_reward=reward,
        terminal_reward=Constant(1.0), controls=controls, lip_L1=1.0, lip_L2=-1.0,
        name=f'{market.name}-reduced', domain_box=box,
    )
    l1, l2 = market.lip_L1, market.lip_L2
    if l1 is None or l2 is None:
        l1_hat, l2_hat = empirical_lipschitz(provisional, box, samples=samples, seed=seed)
        l1 = l1_hat if l1 is None else l1
        l2 = l2_hat if l2 is None else l2
    l1 = max(float(l1), Config.MIN_LIPSCHITZ)
    l2 = float(l2)

    warnings = list(check_market_assumptions(market, samples)['warnings'])
    if l2 >= 0:
        warnings.append(f'one-sided drift constant L2={l2:.4g} is not negative (contraction screen failed)')
        if l2 == 0:
            l2 = Config.MIN_LIPSCHITZ
    for message in warnings:
        logger.warning(LogEvents.MARKET_SCREEN_WARNING, market=market.name, warning=message)

    return ControlModel(
        dim=1, drift=(drift,), discount_rate=discount, running_reward=reward,
        terminal_reward=Constant(1.0), controls=controls, lip_L1=l1, lip_L2=l2,
        name=f'{market.name}-reduced', domain_box=box, warnings=tuple(warnings),
    )


# ═══════════════════════════════════════════════════════
# CLOSED-FORM MAXIMIZERS
# ═══════════════════════════════════════════════════════

def _closed_form(market: MarketModel, y: np.ndarray, u: np.ndarray, u_y: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    gamma, rho = market.risk_aversion, market.correlation
    sigma = market.sigma(y)
    b = market.b(y)
    pi = (rho * sigma * u_y + gamma * b * u) / ((gamma - gamma ** 2) * sigma ** 2 * u)
    pi = np.clip(pi, -market.position_cap, market.position_cap)
    c = np.clip(np.power(u, 1.0 / (gamma - 1.0)), 0.0, market.consumption_cap)
    return pi, c


def closed_form_controls(y: float, u: float, u_y: float, market: MarketModel) -> Tuple[float, float]:
    """(pi*, c*) van de gereduceerde HJB, geclipt op [-R, R] x [0, m]"""
    if not u > 0:
        raise DomainError(f'closed-form controls need u > 0, got {u}')
    pi, c = _closed_form(market, np.array([float(y)]), np.array([float(u)]), np.array([float(u_y)]))
    return float(pi[0]), float(c[0])


class ClosedFormMaximizer:
    """Maximizer override voor de PDE solver; nodes met u <= 0 vallen terug op de scan"""

    def __init__(self, market: MarketModel):
        self.market = market

    def __call__(self, y, u, u_y):
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        u_y = np.asarray(u_y, dtype=float)
        valid = np.isfinite(u) & (u > 0) & np.isfinite(u_y)
        controls = np.zeros((y.size, 2))
        if np.any(valid):
            pi, c = _closed_form(self.market, y[valid], u[valid], u_y[valid])
            controls[valid, 0] = pi
            controls[valid, 1] = c
        return controls, valid


# ═══════════════════════════════════════════════════════
# MERTON BENCHMARK
# ═══════════════════════════════════════════════════════

@dataclass
class MertonBenchmark:
    value: float
    pi_star: float
    c_star: float
    pi_clipped: bool
    c_clipped: bool
    A: float
    A_effective: float

    @property
    def clipped(self) -> bool:
        return self.pi_clipped or self.c_clipped

    def to_dict(self) -> Dict:
        return {
            'value': self.value,
            'pi_star': self.pi_star,
            'c_star': self.c_star,
            'pi_clipped': self.pi_clipped,
            'c_clipped': self.c_clipped,
            'A': self.A,
            'A_effective': self.A_effective,
        }


def _constant_primitives(market: MarketModel) -> Tuple[float, float, float]:
    if not market.is_constant:
        raise ParameterError('Merton benchmark needs constant r, b and sigma')
    return market.short_rate.value, market.excess_drift.value, market.volatility.value


def _consumption_term(u: float, market: MarketModel) -> Tuple[float, float]:
    """max over c in [0, m] van -gamma c u + c^gamma, met de maximizer"""
    gamma, m = market.risk_aversion, market.consumption_cap
    c = min(u ** (1.0 / (gamma - 1.0)), m) if u > 0 else m
    return -gamma * c * u + c ** gamma, c


def merton_benchmark(market: MarketModel) -> MertonBenchmark:
    """
    Constante oplossing van A u + max_c(-gamma c u + c^gamma) = 0

    Interieur: u = ((1 - gamma)/(-A))^(1 - gamma). Bij clipping van c op m volgt
    u = m^gamma / (gamma m - A_eff); bij clipping van pi gebruikt A_eff de vertex op +-R.
    """
    r, b, sigma = _constant_primitives(market)
    gamma, w = market.risk_aversion, market.discount
    big_r = market.position_cap
    A = gamma * r - w + gamma * b ** 2 / (2.0 * (1.0 - gamma) * sigma ** 2)

    pi_raw = b / ((1.0 - gamma) * sigma ** 2)
    pi_clipped = abs(pi_raw) > big_r
    pi = float(np.clip(pi_raw, -big_r, big_r))
    A_eff = gamma * r - w + gamma * b * pi - 0.5 * gamma * (1.0 - gamma) * sigma ** 2 * pi ** 2
    if A_eff >= 0:
        raise DomainError(f'discount too small for finite value (A={A_eff:.6g} >= 0)')

    value = ((1.0 - gamma) / (-A_eff)) ** (1.0 - gamma)
    c_raw = value ** (1.0 / (gamma - 1.0))
    c_clipped = c_raw > market.consumption_cap
    if c_clipped:
        m = market.consumption_cap
        value = m ** gamma / (gamma * m - A_eff)
        c = m
    else:
        c = c_raw

    result = MertonBenchmark(value=float(value), pi_star=pi, c_star=float(c), pi_clipped=bool(pi_clipped),
                             c_clipped=bool(c_clipped), A=float(A), A_effective=float(A_eff))
    logger.info(LogEvents.MERTON_BENCHMARK, market=market.name, **result.to_dict())
    return result


def merton_finite_benchmark(market: MarketModel, horizon: float) -> float:
    """u(0) voor horizon T: du/dtau = A_eff u + max_c(...), u(tau = 0) = 1"""
    if not horizon > 0:
        raise ParameterError('horizon must be positive')
    r, b, sigma = _constant_primitives(market)
    gamma, w, big_r = market.risk_aversion, market.discount, market.position_cap
    pi = float(np.clip(b / ((1.0 - gamma) * sigma ** 2), -big_r, big_r))
    A_eff = gamma * r - w + gamma * b * pi - 0.5 * gamma * (1.0 - gamma) * sigma ** 2 * pi ** 2

    def rhs(_, state):
        consumption, _ = _consumption_term(float(state[0]), market)
        return [A_eff * state[0] + consumption]

    solution = solve_ivp(rhs, (0.0, float(horizon)), [1.0], method='RK45', rtol=1e-10, atol=1e-12)
    if not solution.success:
        raise ParameterError(f'finite-horizon benchmark integration failed: {solution.message}')
    return float(solution.y[0, -1])


# ═══════════════════════════════════════════════════════
# DISCOUNT SCREENING
# ═══════════════════════════════════════════════════════

@dataclass
class AdmissibilityReport:
    linear_rate: float
    prefactor_exponent: float
    psi_max: float
    psi_argmax: Dict
    martingale_correction: float
    total_rate: float
    admissible: bool
    witnesses: List[Dict] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            'linear_rate': self.linear_rate,
            'prefactor_exponent': self.prefactor_exponent,
            'psi_max': self.psi_max,
            'psi_argmax': self.psi_argmax,
            'martingale_correction': self.martingale_correction,
            'total_rate': self.total_rate,
            'admissible': self.admissible,
            'witnesses': self.witnesses,
        }


def discount_admissible(market: MarketModel, alpha: float, beta: float, P: float, Q: float,
                        samples: int = None, theta_points: int = 21, max_witnesses: int = 10) -> AdmissibilityReport:
    """
    Exponentiele rate van de discount factor onder de gereduceerde dynamiek

    total = (gamma Q beta/alpha - gamma P) + sup psi + 1/2 (gamma Q/alpha)^2
    psi   = max_pi [a pi - 1/2 q pi^2] - w, a = (gamma Q rho theta/alpha + gamma b) sigma,
            q = (gamma - gamma^2) sigma^2, theta in [0, 1]
    """
    if not alpha > 0:
        raise ParameterError('alpha must be positive')
    samples = Config.ASSUMPTION_SAMPLES if samples is None else int(samples)
    gamma, rho, w, big_r = market.risk_aversion, market.correlation, market.discount, market.position_cap
    ys = np.linspace(market.box[0], market.box[1], max(samples, 2))

    witnesses: List[Dict] = []
    drift_rhs = -alpha * ys + beta
    drift_lhs = market.i(ys)
    rate_lhs = gamma * market.r(ys) - w
    rate_rhs = -P + Q * ys
    for y, lhs, rhs in zip(ys, drift_lhs, drift_rhs):
        if lhs > rhs + 1e-12 and len(witnesses) < max_witnesses:
            witnesses.append({'condition': 'drift', 'y': float(y), 'lhs': float(lhs), 'rhs': float(rhs)})
    for y, lhs, rhs in zip(ys, rate_lhs, rate_rhs):
        if lhs > rhs + 1e-12 and len(witnesses) < 2 * max_witnesses:
            witnesses.append({'condition': 'rate', 'y': float(y), 'lhs': float(lhs), 'rhs': float(rhs)})

    theta = np.linspace(0.0, 1.0, max(int(theta_points), 2))
    sigma = market.sigma(ys)[:, None]
    b = market.b(ys)[:, None]
    a = (gamma * Q * rho * theta[None, :] / alpha + gamma * b) * sigma
    q = (gamma - gamma ** 2) * sigma ** 2
    pi = np.clip(a / q, -big_r, big_r)
    psi = a * pi - 0.5 * q * pi ** 2 - w
    flat = int(np.argmax(psi))
    i_y, i_t = np.unravel_index(flat, psi.shape)
    psi_max = float(psi[i_y, i_t])

    linear_rate = gamma * Q * beta / alpha - gamma * P
    correction = 0.5 * (gamma * Q / alpha) ** 2
    total = linear_rate + psi_max + correction
    report = AdmissibilityReport(
        linear_rate=float(linear_rate),
        prefactor_exponent=float(gamma * Q * max(market.box[1], 0.0) / alpha),
        psi_max=psi_max,
        psi_argmax={'y': float(ys[i_y]), 'theta': float(theta[i_t]), 'pi': float(pi[i_y, i_t])},
        martingale_correction=float(correction),
        total_rate=float(total),
        admissible=bool(total < 0 and not witnesses),
        witnesses=witnesses,
    )
    if witnesses:
        logger.warning(LogEvents.MARKET_SCREEN_WARNING, market=market.name, witnesses=len(witnesses))
    return report


def wealth_value(x: float, market: MarketModel, u: float) -> float:
    """x^gamma / gamma * u"""
    if not x > 0:
        raise DomainError(f'wealth must be positive, got {x}')
    gamma = market.risk_aversion
    return x ** gamma / gamma * u
