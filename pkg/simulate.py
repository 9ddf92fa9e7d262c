"""
HJB Discount Lab - Simulation Module
Euler-Maruyama paden, Monte Carlo schatters en statistische verificatie van de pad-bounds
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from exceptions import ParameterError, SimulationError
from logging_config import LogEvents, get_logger
from model import ControlModel, KappaTable, truncate_drift

logger = get_logger(__name__)

_SEED_MASK = (1 << 64) - 1


# ═══════════════════════════════════════════════════════
# CONFIGURATIE EN POLICIES
# ═══════════════════════════════════════════════════════

@dataclass(frozen=True)
class MonteCarloConfig:
    paths: int = Config.MC_PATHS
    dt: float = Config.MC_DT
    seed: int = Config.DEFAULT_SEED
    antithetic: bool = Config.MC_ANTITHETIC
    block_size: int = Config.PHILOX_BLOCK_SIZE
    exclusion_budget: float = Config.EXCLUSION_BUDGET

    def __post_init__(self):
        if int(self.paths) < 1:
            raise ParameterError('paths must be at least 1')
        if not self.dt > 0:
            raise ParameterError('simulation step must be positive')
        if int(self.block_size) < 2 or int(self.block_size) % 2:
            raise ParameterError('block_size must be an even integer >= 2')
        if self.antithetic and int(self.paths) % 2:
            raise ParameterError('antithetic sampling needs an even number of paths')
        object.__setattr__(self, 'paths', int(self.paths))
        object.__setattr__(self, 'seed', int(self.seed) & _SEED_MASK)
        object.__setattr__(self, 'block_size', int(self.block_size))

    def to_dict(self) -> Dict:
        return {'paths': self.paths, 'dt': self.dt, 'seed': self.seed, 'antithetic': self.antithetic,
                'block_size': self.block_size, 'exclusion_budget': self.exclusion_budget}


class Policy:
    """Feedback policy: (states (P, N), t) -> controls (P, k)"""

    policy_id = 'policy'

    def __call__(self, states: np.ndarray, t: float) -> np.ndarray:
        raise NotImplementedError


class ConstantPolicy(Policy):
    def __init__(self, control, policy_id: Optional[str] = None):
        self.control = np.asarray(control, dtype=float).reshape(-1)
        self.policy_id = policy_id or 'const[' + ','.join(f'{c:g}' for c in self.control) + ']'

    def __call__(self, states, t):
        return np.broadcast_to(self.control, (states.shape[0], self.control.size))


class FeedbackPolicy(Policy):
    def __init__(self, rule: Callable[[np.ndarray, float], np.ndarray], policy_id: str):
        self.rule = rule
        self.policy_id = policy_id

    def __call__(self, states, t):
        out = np.asarray(self.rule(states, t), dtype=float)
        if out.ndim == 1:
            out = out.reshape(states.shape[0], -1)
        return out


class FieldPolicy(Policy):
    """
    Policy uit een PolicyField (N = 1)

    t_offset verschuift simulatietijd naar veldtijd; voor een stationair veld speelt t geen rol.
    """

    def __init__(self, policy_field, policy_id: str = 'pde-policy', t_offset: float = 0.0):
        self.field = policy_field
        self.policy_id = policy_id
        self.t_offset = float(t_offset)

    def __call__(self, states, t):
        return self.field.controls_at(states[:, 0], t + self.t_offset)


def default_policy_family(model: ControlModel, extra: Sequence[Policy] = ()) -> List[Policy]:
    """Constante policies op elk control punt plus eigen feedback regels"""
    return [ConstantPolicy(c, policy_id=f'const[{i}]') for i, c in enumerate(model.controls)] + list(extra)


# ═══════════════════════════════════════════════════════
# RANDOM STREAMS
# ═══════════════════════════════════════════════════════

def derive_seed(seed: int, *indices: int) -> int:
    """Onafhankelijke 64-bit seed per cel (seed, i, j, ...)"""
    sequence = np.random.SeedSequence([int(seed) & _SEED_MASK, *[int(i) for i in indices]])
    words = sequence.generate_state(2, np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


class _NoiseSource:
    """
    Counter-based Philox streams, een per blok van block_size paden

    Blok b gebruikt key = seed | b << 64, dus de trekkingen van een pad hangen alleen
    af van (seed, pad index) en niet van de volgorde van uitvoering.
    """

    def __init__(self, mc: MonteCarloConfig, dim: int):
        self.dim = dim
        self.antithetic = mc.antithetic
        self.sizes = []
        self.generators = []
        remaining = mc.paths
        block = 0
        while remaining > 0:
            size = min(mc.block_size, remaining)
            self.sizes.append(size)
            key = mc.seed | (block << 64)
            self.generators.append(np.random.Generator(np.random.Philox(key=key)))
            remaining -= size
            block += 1

    def draw(self) -> np.ndarray:
        chunks = []
        for size, generator in zip(self.sizes, self.generators):
            if self.antithetic:
                z = generator.standard_normal((size // 2, self.dim))
                chunks.append(z)
                chunks.append(-z)
            else:
                chunks.append(generator.standard_normal((size, self.dim)))
        return np.concatenate(chunks, axis=0)

    def pair_groups(self) -> np.ndarray:
        """(P/2, 2) indices van antithetische paren"""
        pairs = []
        offset = 0
        for size in self.sizes:
            half = size // 2
            first = np.arange(offset, offset + half)
            pairs.append(np.column_stack([first, first + half]))
            offset += size
        return np.concatenate(pairs, axis=0)


# ═══════════════════════════════════════════════════════
# PADEN
# ═══════════════════════════════════════════════════════

@dataclass
class PathBatch:
    """Opgenomen paden: states (R, P, N), log_discount (R, P), reward (R, P)"""
    times: np.ndarray
    states: np.ndarray
    log_discount: np.ndarray
    reward: np.ndarray
    valid: np.ndarray
    excluded: int
    steps: int
    dt: float
    mc: MonteCarloConfig
    policy_id: str
    pairs: Optional[np.ndarray] = None

    @property
    def paths(self) -> int:
        return self.valid.size

    def estimate(self, samples: np.ndarray) -> Tuple[float, float]:
        """Gemiddelde en standaardfout over geldige paden (antithetisch: over paar-gemiddelden)"""
        samples = np.asarray(samples, dtype=float)
        if self.pairs is not None:
            keep = self.valid[self.pairs[:, 0]] & self.valid[self.pairs[:, 1]]
            pairs = self.pairs[keep]
            values = 0.5 * (samples[pairs[:, 0]] + samples[pairs[:, 1]])
        else:
            values = samples[self.valid]
        count = values.size
        if count == 0:
            return float('nan'), float('nan')
        mean = float(np.sum(values) / count)
        if count < 2:
            return mean, 0.0
        std = float(np.sqrt(np.sum((values - mean) ** 2) / (count - 1)))
        return mean, std / math.sqrt(count)


def _record_steps(record_times, t0: float, horizon: float, steps: int, dt: float) -> Tuple[np.ndarray, np.ndarray]:
    if record_times is None:
        return np.array([steps]), np.array([t0 + horizon])
    times = np.asarray(record_times, dtype=float).reshape(-1)
    if np.any(np.diff(times) <= 0):
        raise ParameterError('record times must be strictly increasing')
    if times[0] < t0 - 1e-12 or times[-1] > t0 + horizon + 1e-9:
        raise ParameterError('record times must lie inside the simulated window')
    idx = np.rint((times - t0) / dt).astype(int)
    idx = np.clip(idx, 0, steps)
    if idx[-1] != steps:
        idx = np.append(idx, steps)
        times = np.append(times, t0 + horizon)
    return idx, times


def _march(model: ControlModel, policy: Policy, starts: np.ndarray, t0: float, horizon: float,
           mc: MonteCarloConfig, record_times=None, observer: Optional[Callable] = None) -> Dict:
    """
    Gedeelde Euler-Maruyama kern: S startpunten delen dezelfde ruis

    Links-eindpunt quadratuur: reward += D f dt, D *= exp(h dt), Y += i dt + sqrt(dt) Z.
    """
    if not horizon > 0:
        raise ParameterError('simulation horizon must be positive')
    starts = np.asarray(starts, dtype=float).reshape(-1, model.dim)
    n_starts, n_paths, dim = starts.shape[0], mc.paths, model.dim
    steps = max(1, int(round(horizon / mc.dt)))
    dt = horizon / steps
    sqrt_dt = math.sqrt(dt)
    record_idx, record_t = _record_steps(record_times, t0, horizon, steps, dt)
    n_rec = record_idx.size

    noise = _NoiseSource(mc, dim)
    y = np.repeat(starts[:, None, :], n_paths, axis=1)
    discount = np.ones((n_starts, n_paths))
    log_discount = np.zeros((n_starts, n_paths))
    reward = np.zeros((n_starts, n_paths))
    valid = np.ones((n_starts, n_paths), dtype=bool)

    rec_states = np.empty((n_rec, n_starts, n_paths, dim))
    rec_log = np.empty((n_rec, n_starts, n_paths))
    rec_reward = np.empty((n_rec, n_starts, n_paths))
    cursor = 0

    def record(step):
        nonlocal cursor
        while cursor < n_rec and record_idx[cursor] == step:
            rec_states[cursor] = y
            rec_log[cursor] = log_discount
            rec_reward[cursor] = reward
            cursor += 1

    with np.errstate(over='ignore', invalid='ignore'):
        for j in range(steps):
            record(j)
            t = t0 + j * dt
            flat = y.reshape(-1, dim)
            controls = np.asarray(policy(flat, t), dtype=float)
            if controls.ndim != 2 or controls.shape[0] != flat.shape[0]:
                raise ParameterError(f"policy '{policy.policy_id}' returned controls of shape {controls.shape}")
            drift = model.drift_values(flat, controls, check=False).reshape(n_starts, n_paths, dim)
            h = model.h(flat, controls, check=False).reshape(n_starts, n_paths)
            f = model.f(flat, controls, check=False).reshape(n_starts, n_paths)
            reward = reward + discount * f * dt
            log_discount = log_discount + h * dt
            discount = discount * np.exp(h * dt)
            z = noise.draw()
            y = y + drift * dt + sqrt_dt * z[None, :, :]

            bad = ~(np.all(np.isfinite(y), axis=2) & np.isfinite(discount) & np.isfinite(reward))
            # Uitgesloten paden worden op nul gezet zodat ze de policy niet vergiftigen
            if np.any(bad):
                valid &= ~bad
                y[bad] = 0.0
                discount[bad] = 0.0
                log_discount[bad] = 0.0
                reward[bad] = 0.0
            if observer is not None:
                observer(j + 1, t0 + (j + 1) * dt, y, valid)
        record(steps)

    return {
        'times': record_t,
        'states': rec_states,
        'log_discount': rec_log,
        'reward': rec_reward,
        'valid': valid,
        'steps': steps,
        'dt': dt,
        'pairs': noise.pair_groups() if mc.antithetic else None,
    }


def _finish_batch(raw: Dict, index: int, mc: MonteCarloConfig, policy: Policy, model: ControlModel) -> PathBatch:
    valid = raw['valid'][index]
    excluded = int(np.sum(~valid))
    if excluded:
        logger.warning(LogEvents.PATHS_EXCLUDED, model=model.name, excluded=excluded, paths=mc.paths)
    if excluded > mc.exclusion_budget * mc.paths:
        raise SimulationError(
            f'{excluded} of {mc.paths} paths became non-finite (budget {mc.exclusion_budget:.3%})',
            excluded=excluded, paths=mc.paths,
        )
    return PathBatch(
        times=raw['times'],
        states=raw['states'][:, index],
        log_discount=raw['log_discount'][:, index],
        reward=raw['reward'][:, index],
        valid=valid,
        excluded=excluded,
        steps=raw['steps'],
        dt=raw['dt'],
        mc=mc,
        policy_id=policy.policy_id,
        pairs=raw['pairs'],
    )


def simulate_paths(model: ControlModel, policy: Policy, y0, T: float, mc: MonteCarloConfig,
                   record_times=None, t0: float = 0.0) -> PathBatch:
    """
    Simuleer paden op [t0, T] vanuit y0

    Aantal stappen max(1, round((T - t0)/dt)); record_times worden op het stapgrid afgerond.
    """
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    if y0.size != model.dim:
        raise ParameterError(f'start state must have length {model.dim}')
    raw = _march(model, policy, y0[None, :], float(t0), float(T) - float(t0), mc, record_times)
    return _finish_batch(raw, 0, mc, policy, model)


# ═══════════════════════════════════════════════════════
# SCHATTERS
# ═══════════════════════════════════════════════════════

@dataclass
class EstimatorResult:
    mean: float
    std_error: float
    paths: int
    seed: int
    horizon: float
    excluded: int = 0
    label: str = ''
    discount_log: Optional[np.ndarray] = None

    def to_dict(self) -> Dict:
        data = {
            'mean': self.mean,
            'std_error': self.std_error,
            'paths': self.paths,
            'seed': self.seed,
            'horizon': self.horizon,
            'excluded': self.excluded,
        }
        if self.label:
            data['label'] = self.label
        return data


def _functional(model: ControlModel, batch: PathBatch, index: int) -> np.ndarray:
    with np.errstate(over='ignore', invalid='ignore'):
        terminal = model.g(batch.states[index], check=False)
        samples = batch.reward[index] + np.exp(batch.log_discount[index]) * terminal
    samples = np.where(batch.valid, samples, 0.0)
    return samples


def estimate_value(model: ControlModel, policy: Policy, y0, t: float, T: float, mc: MonteCarloConfig,
                   keep_discount_log: bool = False) -> EstimatorResult:
    """E_{y,t}[ int_t^T e^{int h} f ds + e^{int h} g(Y_T) ]"""
    if not T > t:
        raise ParameterError('estimate_value needs T > t')
    batch = simulate_paths(model, policy, y0, T, mc, t0=t)
    samples = _functional(model, batch, -1)
    bad = ~np.isfinite(samples) & batch.valid
    if np.any(bad):
        batch.valid = batch.valid & ~bad
        batch.excluded = int(np.sum(~batch.valid))
        if batch.excluded > mc.exclusion_budget * mc.paths:
            raise SimulationError('terminal reward overflowed on too many paths',
                                  excluded=batch.excluded, paths=mc.paths)
    mean, se = batch.estimate(samples)
    logger.debug(LogEvents.SIMULATION_FINISHED, model=model.name, policy=policy.policy_id,
                 mean=mean, std_error=se, paths=mc.paths)
    return EstimatorResult(
        mean=mean, std_error=se, paths=mc.paths, seed=mc.seed, horizon=float(T - t),
        excluded=batch.excluded, label=policy.policy_id,
        discount_log=batch.log_discount[-1].copy() if keep_discount_log else None,
    )


# ═══════════════════════════════════════════════════════
# COUPLING (GRONWALL)
# ═══════════════════════════════════════════════════════

@dataclass
class CouplingReport:
    times: np.ndarray
    max_distance: np.ndarray
    max_ratio: np.ndarray
    max_ratio_discrete: np.ndarray
    lip_L2: float
    dt: float

    @property
    def overall_max_ratio(self) -> float:
        return float(np.max(self.max_ratio))

    @property
    def overall_max_ratio_discrete(self) -> float:
        return float(np.max(self.max_ratio_discrete))

    def to_dict(self) -> Dict:
        return {
            'L2': self.lip_L2,
            'dt': self.dt,
            'overall_max_ratio': self.overall_max_ratio,
            'overall_max_ratio_discrete': self.overall_max_ratio_discrete,
            'max_distance': float(np.max(self.max_distance)),
            'final_ratio': float(self.max_ratio[-1]),
        }


def coupled_contraction(model: ControlModel, policy: Policy, y0, ybar0, T: float,
                        mc: MonteCarloConfig) -> CouplingReport:
    """
    Beide starts met dezelfde ruis; per tijdstap max over paden van
    |Y_t(y0) - Y_t(ybar0)| / (|y0 - ybar0| e^{L2 t})

    max_ratio_discrete gebruikt de Euler envelope |1 + L2 dt|^j.
    """
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    ybar0 = np.asarray(ybar0, dtype=float).reshape(-1)
    initial = float(np.linalg.norm(y0 - ybar0))
    steps = max(1, int(round(T / mc.dt)))
    times = np.zeros(steps + 1)
    distance = np.zeros(steps + 1)
    distance[0] = initial

    def observe(step, t, states, valid):
        both = valid[0] & valid[1]
        gap = np.linalg.norm(states[0] - states[1], axis=1)
        times[step] = t
        distance[step] = float(np.max(gap[both])) if np.any(both) else 0.0

    raw = _march(model, policy, np.vstack([y0, ybar0]), 0.0, float(T), mc, observer=observe)
    for index in (0, 1):
        _finish_batch(raw, index, mc, policy, model)
    dt = raw['dt']
    steps_idx = np.arange(steps + 1)
    if initial > 0:
        ratio = distance / (initial * np.exp(model.lip_L2 * times))
        ratio_discrete = distance / (initial * np.abs(1.0 + model.lip_L2 * dt) ** steps_idx)
    else:
        ratio = np.zeros(steps + 1)
        ratio_discrete = np.zeros(steps + 1)
    return CouplingReport(times=times, max_distance=distance, max_ratio=ratio,
                          max_ratio_discrete=ratio_discrete, lip_L2=model.lip_L2, dt=dt)


# ═══════════════════════════════════════════════════════
# BOUND VERIFICATIE
# ═══════════════════════════════════════════════════════

@dataclass(frozen=True)
class BoundSpec:
    """
    kind 'growth':   alpha, beta, P, Q    (E e^{int h} <= e^{Q y+/alpha} e^{(-P + Q beta/alpha + Q^2/2alpha^2) t})
    kind 'decay':    w, L1, L2, ito       (E e^{int h} f <= L1 e^{-wt} (1 + m(t)))
    kind 'envelope': K, M                 (elke factor <= K e^{M |y|})
    """
    kind: str
    params: Dict = field(default_factory=dict)
    times: Tuple[float, ...] = (0.5, 1.0, 2.0)

    @classmethod
    def from_dict(cls, data: Dict) -> 'BoundSpec':
        data = dict(data)
        kind = data.pop('kind', None)
        times = tuple(float(t) for t in data.pop('times', (0.5, 1.0, 2.0)))
        return cls(kind=kind, params=data, times=times)


@dataclass
class BoundReport:
    kind: str
    met: bool
    worst_margin: float
    rows: List[Dict]
    joint: Optional[Dict] = None

    def to_dict(self) -> Dict:
        data = {'kind': self.kind, 'status': 'met' if self.met else 'violated',
                'worst_margin': self.worst_margin, 'rows': self.rows}
        if self.joint is not None:
            data['joint'] = self.joint
        return data


def _growth_bound(spec: BoundSpec, y0: np.ndarray, t: float) -> float:
    p = spec.params
    alpha, beta, big_p, q = float(p['alpha']), float(p['beta']), float(p['P']), float(p['Q'])
    if not alpha > 0:
        raise ParameterError('growth bound needs alpha > 0')
    y_plus = max(float(y0[0]), 0.0)
    rate = -big_p + q * beta / alpha + q * q / (2.0 * alpha * alpha)
    return math.exp(q * y_plus / alpha) * math.exp(rate * t)


def _decay_bound(spec: BoundSpec, y0: np.ndarray, t: float, dim: int) -> float:
    p = spec.params
    w, l1, l2 = float(p['w']), float(p.get('L1', 1.0)), float(p['L2'])
    if not w > max(0.0, l2):
        raise ParameterError('decay bound needs w > max(0, L2)')
    radius = float(np.linalg.norm(y0))
    if p.get('ito', True):
        # sqrt(E|Y_t|^2) voor dY = i dt + dW met y.i(y) <= L2 |y|^2
        spread = dim * math.expm1(2.0 * l2 * t) / (2.0 * l2)
        moment = math.sqrt(radius ** 2 * math.exp(2.0 * l2 * t) + spread)
    else:
        moment = radius * math.exp(l2 * t)
    return l1 * math.exp(-w * t) * (1.0 + moment)


def verify_bounds(model: ControlModel, bound_spec, y0, T: float, mc: MonteCarloConfig,
                  rtol: Optional[float] = None) -> BoundReport:
    """
    Schat de linkerkant op de tijdgrid van bound_spec voor elke constante control

    Criterium: schatting <= bound (1 + 3 relatieve SE) (+ rtol voor afronding).
    """
    spec = bound_spec if isinstance(bound_spec, BoundSpec) else BoundSpec.from_dict(bound_spec)
    rtol = Config.BOUND_RTOL if rtol is None else float(rtol)
    if spec.kind not in ('growth', 'decay', 'envelope'):
        raise ParameterError(f'unknown bound kind: {spec.kind}')
    if spec.kind == 'growth' and model.dim != 1:
        raise ParameterError('growth bound is stated for dimension 1')
    y0 = np.asarray(y0, dtype=float).reshape(-1)
    times = np.asarray(spec.times, dtype=float)
    if np.any(times <= 0) or times[-1] > T + 1e-12:
        raise ParameterError('bound times must lie in (0, T]')

    rows: List[Dict] = []
    joint_rows: List[Dict] = []
    for c_idx, control in enumerate(model.controls):
        policy = ConstantPolicy(control, policy_id=f'const[{c_idx}]')
        cell_mc = replace(mc, seed=derive_seed(mc.seed, c_idx))
        batch = simulate_paths(model, policy, y0, T, cell_mc, record_times=times)
        for j, t in enumerate(batch.times[:times.size]):
            states = batch.states[j]
            with np.errstate(over='ignore', invalid='ignore'):
                discount = np.exp(batch.log_discount[j])
                ds = np.broadcast_to(control, (states.shape[0], control.size))
                if spec.kind == 'growth':
                    factors = {'discount': discount}
                    bound = _growth_bound(spec, y0, float(t))
                elif spec.kind == 'decay':
                    factors = {'discount_f': discount * model.f(states, ds, check=False)}
                    bound = _decay_bound(spec, y0, float(t), model.dim)
                else:
                    f_abs = np.abs(model.f(states, ds, check=False))
                    g_abs = np.abs(model.g(states, check=False))
                    factors = {
                        'discount_abs_f': discount * f_abs,
                        'discount_abs_g': discount * g_abs,
                        'discount': discount,
                    }
                    bound = float(spec.params['K']) * math.exp(float(spec.params['M']) * float(np.linalg.norm(y0)))
                    joint_mean, joint_se = batch.estimate(discount * np.maximum(np.maximum(f_abs, g_abs), 1.0))
                    joint_rows.append({'control': c_idx, 't': float(t), 'estimate': joint_mean,
                                       'std_error': joint_se, 'bound': bound,
                                       'met': bool(joint_mean <= bound * (1.0 + rtol) + 3.0 * joint_se)})
            for name, samples in factors.items():
                mean, se = batch.estimate(samples)
                relative = se / abs(mean) if mean != 0 else 0.0
                allowed = bound * (1.0 + 3.0 * relative) * (1.0 + rtol)
                rows.append({
                    'control': c_idx,
                    'factor': name,
                    't': float(t),
                    'estimate': mean,
                    'std_error': se,
                    'bound': bound,
                    'margin': allowed - mean,
                    'met': bool(np.isfinite(mean) and mean <= allowed),
                })

    worst = min(row['margin'] for row in rows)
    met = all(row['met'] for row in rows)
    joint = None
    if joint_rows:
        joint = {'met': all(r['met'] for r in joint_rows), 'rows': joint_rows}
    logger.info(LogEvents.BOUND_CHECK, kind=spec.kind, model=model.name, met=met, worst_margin=worst)
    return BoundReport(kind=spec.kind, met=met, worst_margin=worst, rows=rows, joint=joint)


# ═══════════════════════════════════════════════════════
# HORIZON CONVERGENTIE
# ═══════════════════════════════════════════════════════

@dataclass
class HorizonReport:
    estimates: List[EstimatorResult]
    differences: List[float]
    difference_se: List[float]
    shrinking: bool
    tail_integral: Optional[float] = None
    tail_met: Optional[bool] = None

    @property
    def converged(self) -> bool:
        return self.shrinking and self.tail_met is not False

    def to_dict(self) -> Dict:
        return {
            'estimates': [e.to_dict() for e in self.estimates],
            'differences': self.differences,
            'difference_se': self.difference_se,
            'shrinking': self.shrinking,
            'tail_integral': self.tail_integral,
            'tail_met': self.tail_met,
            'converged': self.converged,
        }


def horizon_convergence(model: ControlModel, policy: Policy, y0, horizons: Sequence[float],
                        mc: MonteCarloConfig, kappa: Optional[KappaTable] = None) -> HorizonReport:
    """Een run tot T_m met gemeenschappelijke ruis; schattingen op elke horizon"""
    horizons = np.asarray(horizons, dtype=float)
    if horizons.size < 2 or np.any(np.diff(horizons) <= 0) or horizons[0] <= 0:
        raise ParameterError('horizons must be positive and strictly increasing (at least two)')
    batch = simulate_paths(model, policy, y0, float(horizons[-1]), mc, record_times=horizons)
    samples = [_functional(model, batch, j) for j in range(horizons.size)]
    estimates = []
    for j, T in enumerate(horizons):
        mean, se = batch.estimate(samples[j])
        estimates.append(EstimatorResult(mean=mean, std_error=se, paths=mc.paths, seed=mc.seed,
                                         horizon=float(T), excluded=batch.excluded, label=policy.policy_id))
    differences, difference_se = [], []
    for j in range(1, horizons.size):
        mean, se = batch.estimate(samples[j] - samples[j - 1])
        differences.append(mean)
        difference_se.append(se)
    magnitudes = [abs(d) for d in differences]
    shrinking = all(b < a for a, b in zip(magnitudes, magnitudes[1:]))

    tail = None
    tail_met = None
    if kappa is not None:
        tail = kappa.integral(float(horizons[-2]), float(horizons[-1]))
        tail_met = bool(magnitudes[-1] <= tail + 3.0 * difference_se[-1])
    report = HorizonReport(estimates=estimates, differences=differences, difference_se=difference_se,
                           shrinking=shrinking, tail_integral=tail, tail_met=tail_met)
    logger.info(LogEvents.HORIZON_CONVERGENCE, model=model.name, shrinking=shrinking,
                tail_met=tail_met, horizons=horizons.tolist())
    return report


# ═══════════════════════════════════════════════════════
# DRIFT TRUNCATIE STABILITEIT
# ═══════════════════════════════════════════════════════

def truncation_path_stability(model: ControlModel, policy: Policy, y0, T: float,
                              radii: Sequence[float], mc: MonteCarloConfig) -> List[Dict]:
    """
    Paden onder de afgekapte drift i_n tegen de originele drift, met dezelfde ruis

    Tot de eerste exit uit B(0, n) zijn de paden identiek; sup-afstand daalt met n.
    """
    steps = max(1, int(round(T / mc.dt)))
    grid = np.linspace(0.0, T, steps + 1)
    reference = simulate_paths(model, policy, y0, T, mc, record_times=grid)
    rows = []
    for radius in radii:
        truncated = simulate_paths(truncate_drift(model, radius), policy, y0, T, mc, record_times=grid)
        both = reference.valid & truncated.valid
        gap = np.linalg.norm(reference.states - truncated.states, axis=2)[:, both]
        norms = np.linalg.norm(reference.states, axis=2)[:, both]
        outside = norms > radius
        exited = np.any(outside, axis=0)
        first_exit = np.where(exited, np.argmax(outside, axis=0), gap.shape[0])
        before_exit = np.arange(gap.shape[0])[:, None] <= first_exit[None, :]
        rows.append({
            'radius': float(radius),
            'sup_distance': float(np.max(gap)) if gap.size else 0.0,
            'identical_before_exit': bool(np.all(gap[before_exit] == 0.0)),
            'exit_fraction': float(np.mean(exited)) if exited.size else 0.0,
        })
    return rows


def dump_paths_csv(batch: PathBatch, path: str, provenance: Optional[Dict] = None):
    """Per-pad debug dump: eindtoestand, log discount en reward"""
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        for key, value in (provenance or {}).items():
            handle.write(f'# {key}={value}\n')
        writer = csv.writer(handle, lineterminator='\n')
        dim = batch.states.shape[2]
        writer.writerow(['path', 'valid'] + [f'y_{d}' for d in range(dim)] + ['log_discount', 'reward'])
        for p in range(batch.paths):
            writer.writerow([p, int(batch.valid[p])]
                            + [repr(float(x)) for x in batch.states[-1, p]]
                            + [repr(float(batch.log_discount[-1, p])), repr(float(batch.reward[-1, p]))])
