"""
HJB Discount Lab - Model Module
Control problemen, assumption checks, truncatie en kappa envelopes
"""
from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from coefficients import (
    Coefficient,
    Constant,
    Truncated,
    TruncatedDrift,
    as_controls,
    as_states,
    coefficient_from_dict,
)
from config import Config
from exceptions import EvaluationError, ModelFileError, ParameterError
from logging_config import LogEvents, get_logger

logger = get_logger(__name__)


# ═══════════════════════════════════════════════════════
# CONTROL MODEL
# ═══════════════════════════════════════════════════════

@dataclass(frozen=True, eq=False)
class ControlModel:
    """
    Discounted control probleem (i, h, f, g, D, L1, L2, N)

    dY = i(Y, delta) dt + dW, discount exp(int h), reward f, terminal g.
    """
    dim: int
    drift: Tuple[Coefficient, ...]
    discount_rate: Coefficient
    running_reward: Coefficient
    terminal_reward: Coefficient
    controls: np.ndarray
    lip_L1: float
    lip_L2: float
    name: str = 'model'
    domain_box: Optional[np.ndarray] = None
    warnings: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ParameterError('model dimension must be a positive integer')
        drift = tuple(self.drift)
        if len(drift) != self.dim:
            raise ParameterError(f'drift has {len(drift)} components for dimension {self.dim}')
        controls = np.array(self.controls, dtype=float)
        if controls.ndim == 1:
            controls = controls.reshape(-1, 1)
        if controls.ndim != 2 or controls.shape[0] == 0:
            raise ParameterError('control list must be a nonempty list of control points')
        if not np.all(np.isfinite(controls)):
            raise ParameterError('control points must be finite')
        if np.unique(controls, axis=0).shape[0] != controls.shape[0]:
            raise ParameterError('control list contains duplicate points')
        controls.setflags(write=False)
        if not (math.isfinite(self.lip_L1) and self.lip_L1 > 0):
            raise ParameterError(f'L1 must be positive, got {self.lip_L1}')
        if not math.isfinite(self.lip_L2) or self.lip_L2 == 0:
            raise ParameterError(f'L2 must be finite and nonzero, got {self.lip_L2}')
        box = None
        if self.domain_box is not None:
            box = _as_box(self.domain_box, self.dim)
            box.setflags(write=False)
        object.__setattr__(self, 'dim', int(self.dim))
        object.__setattr__(self, 'drift', drift)
        object.__setattr__(self, 'controls', controls)
        object.__setattr__(self, 'lip_L1', float(self.lip_L1))
        object.__setattr__(self, 'lip_L2', float(self.lip_L2))
        object.__setattr__(self, 'domain_box', box)
        object.__setattr__(self, 'warnings', tuple(self.warnings))

    @property
    def control_dim(self) -> int:
        return self.controls.shape[1]

    @property
    def n_controls(self) -> int:
        return self.controls.shape[0]

    # ── evaluatie ───────────────────────────────────────

    def drift_values(self, y, delta, check=True) -> np.ndarray:
        ys = as_states(y)
        ds = as_controls(delta, ys.shape[0])
        out = np.column_stack([component(ys, ds) for component in self.drift])
        if check:
            _check_finite('drift', out, ys, ds)
        return out

    def h(self, y, delta, check=True) -> np.ndarray:
        return self._scalar('discount_rate', self.discount_rate, y, delta, check)

    def f(self, y, delta, check=True) -> np.ndarray:
        return self._scalar('running_reward', self.running_reward, y, delta, check)

    def g(self, y, check=True) -> np.ndarray:
        return self._scalar('terminal_reward', self.terminal_reward, y, None, check)

    def _scalar(self, label, coef, y, delta, check):
        ys = as_states(y)
        ds = as_controls(delta, ys.shape[0])
        out = coef(ys, ds)
        if check:
            _check_finite(label, out, ys, ds)
        return out

    def control_tables(self, nodes) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Drift, discount en reward over nodes x controls

        Returns:
            (I, H, F) met vorm (n_nodes, n_controls); I alleen voor dim 1
        """
        ys = as_states(nodes)
        n, c = ys.shape[0], self.n_controls
        y_rep = np.repeat(ys, c, axis=0)
        d_rep = np.tile(self.controls, (n, 1))
        drift = self.drift_values(y_rep, d_rep)
        h = self.h(y_rep, d_rep)
        f = self.f(y_rep, d_rep)
        if self.dim == 1:
            drift = drift[:, 0].reshape(n, c)
        else:
            drift = drift.reshape(n, c, self.dim)
        return drift, h.reshape(n, c), f.reshape(n, c)

    def with_terminal(self, terminal: Coefficient) -> 'ControlModel':
        return replace(self, terminal_reward=terminal)


def _check_finite(label, values, ys, ds):
    values = np.asarray(values)
    bad = ~np.isfinite(values)
    if bad.ndim > 1:
        bad = bad.any(axis=1)
    if np.any(bad):
        idx = int(np.argmax(bad))
        control = ds[idx] if ds.shape[1] else None
        raise EvaluationError(label, ys[idx], control)


def _as_box(box, dim) -> np.ndarray:
    arr = np.array(box, dtype=float)
    if arr.shape == (2,) and dim == 1:
        arr = arr.reshape(1, 2)
    if arr.shape != (dim, 2):
        raise ParameterError(f'domain box must have shape ({dim}, 2)')
    if not np.all(np.isfinite(arr)) or np.any(arr[:, 0] >= arr[:, 1]):
        raise ParameterError('domain box must be bounded with lower < upper on every axis')
    return arr


# ═══════════════════════════════════════════════════════
# ASSUMPTION CHECK
# ═══════════════════════════════════════════════════════

@dataclass
class AssumptionReport:
    passed: bool
    worst_ratio: float
    lipschitz_ratio: float
    drift_ratio: float
    witness: Dict
    ratios: Dict[str, float]
    tolerance: float
    samples: int
    seed: int
    pairs_checked: int

    def to_dict(self) -> Dict:
        return {
            'passed': self.passed,
            'worst_ratio': self.worst_ratio,
            'lipschitz_ratio': self.lipschitz_ratio,
            'drift_ratio': self.drift_ratio,
            'witness': self.witness,
            'ratios': dict(self.ratios),
            'tolerance': self.tolerance,
            'samples': self.samples,
            'seed': self.seed,
            'pairs_checked': self.pairs_checked,
        }


def _sample_pairs(box: np.ndarray, samples: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    low, high = box[:, 0], box[:, 1]
    y = rng.uniform(low, high, size=(samples, box.shape[0]))
    ybar = rng.uniform(low, high, size=(samples, box.shape[0]))
    corners = np.array(list(itertools.product(*box)), dtype=float)
    if corners.shape[0] > 1:
        idx = np.array(list(itertools.combinations(range(corners.shape[0]), 2)))
        y = np.vstack([y, corners[idx[:, 0]]])
        ybar = np.vstack([ybar, corners[idx[:, 1]]])
    keep = np.linalg.norm(y - ybar, axis=1) > 0
    return y[keep], ybar[keep]


def sampled_ratios(model: ControlModel, y: np.ndarray, ybar: np.ndarray,
                   lip_L1: float, lip_L2: float, coefficients: Sequence[str] = ('f', 'g', 'h', 'i')) -> Dict:
    """
    Lipschitz en one-sided drift ratios over paren x controls

    De drift ratio is 1 + (s - L2 d^2) / (|L2| d^2) met s = (y - ybar).(i(y) - i(ybar)),
    zodat ratio <= 1 precies de one-sided conditie is.
    """
    n_pairs = y.shape[0]
    dist = np.linalg.norm(y - ybar, axis=1)
    best = {'lipschitz': (-np.inf, None), 'drift': (-np.inf, None)}
    per_coef: Dict[str, float] = {}

    def track(kind, name, ratios, control):
        idx = int(np.argmax(ratios))
        value = float(ratios[idx])
        per_coef[name] = max(per_coef.get(name, -np.inf), value)
        if value > best[kind][0]:
            best[kind] = (value, {
                'coefficient': name,
                'y': y[idx].tolist(),
                'ybar': ybar[idx].tolist(),
                'control': None if control is None else np.asarray(control).tolist(),
                'ratio': value,
            })

    if 'g' in coefficients:
        diff = np.abs(model.g(y) - model.g(ybar))
        track('lipschitz', 'g', diff / (lip_L1 * dist), None)

    for control in model.controls:
        ds = np.broadcast_to(control, (n_pairs, control.size))
        if 'f' in coefficients:
            diff = np.abs(model.f(y, ds) - model.f(ybar, ds))
            track('lipschitz', 'f', diff / (lip_L1 * dist), control)
        if 'h' in coefficients:
            diff = np.abs(model.h(y, ds) - model.h(ybar, ds))
            track('lipschitz', 'h', diff / (lip_L1 * dist), control)
        if 'i' in coefficients:
            iy = model.drift_values(y, ds)
            iybar = model.drift_values(ybar, ds)
            delta_i = iy - iybar
            track('lipschitz', 'i', np.linalg.norm(delta_i, axis=1) / (lip_L1 * dist), control)
            inner = np.einsum('ij,ij->i', y - ybar, delta_i)
            d2 = dist ** 2
            track('drift', 'i_one_sided', 1.0 + (inner - lip_L2 * d2) / (abs(lip_L2) * d2), control)

    return {'best': best, 'per_coefficient': per_coef}


def check_assumption1(model: ControlModel, box=None, samples: int = None, seed: int = None,
                      tolerance: float = None) -> AssumptionReport:
    """
    Lipschitz screen op gesamplede paren (y, ybar) x alle controls

    Naast uniforme samples worden alle paren van box hoekpunten meegenomen.
    Deterministisch voor vaste (model, box, samples, seed).
    """
    samples = Config.ASSUMPTION_SAMPLES if samples is None else int(samples)
    seed = Config.DEFAULT_SEED if seed is None else int(seed)
    tolerance = Config.ASSUMPTION_TOLERANCE if tolerance is None else float(tolerance)
    if samples < 2:
        raise ParameterError('assumption check needs at least 2 samples')
    if box is None:
        box = model.domain_box
    if box is None:
        raise ParameterError('no domain box given and model declares none')
    box = _as_box(box, model.dim)

    y, ybar = _sample_pairs(box, samples, seed)
    result = sampled_ratios(model, y, ybar, model.lip_L1, model.lip_L2)
    lip_value, lip_witness = result['best']['lipschitz']
    drift_value, drift_witness = result['best']['drift']
    worst = max(lip_value, drift_value)
    witness = lip_witness if lip_value >= drift_value else drift_witness
    passed = bool(worst <= 1.0 + tolerance)

    report = AssumptionReport(
        passed=passed,
        worst_ratio=float(worst),
        lipschitz_ratio=float(lip_value),
        drift_ratio=float(drift_value),
        witness=witness,
        ratios=result['per_coefficient'],
        tolerance=tolerance,
        samples=samples,
        seed=seed,
        pairs_checked=int(y.shape[0]),
    )
    log = logger.info if passed else logger.warning
    log(LogEvents.ASSUMPTION_CHECK if passed else LogEvents.ASSUMPTION_VIOLATED,
        model=model.name, worst_ratio=report.worst_ratio, passed=passed)
    return report


def empirical_lipschitz(model: ControlModel, box, samples: int = None, seed: int = None) -> Tuple[float, float]:
    """Gesamplede (L1, L2) schatting: grootste Lipschitz quotient en one-sided drift quotient"""
    samples = Config.ASSUMPTION_SAMPLES if samples is None else int(samples)
    seed = Config.DEFAULT_SEED if seed is None else int(seed)
    y, ybar = _sample_pairs(_as_box(box, model.dim), samples, seed)
    # Tegen L1 = 1 is de ratio de quotient zelf; tegen L2 = -1 is de drift ratio 2 + s/d^2
    result = sampled_ratios(model, y, ybar, 1.0, -1.0)
    l1 = result['best']['lipschitz'][0]
    l2 = result['best']['drift'][0] - 2.0
    return float(l1), float(l2)


# ═══════════════════════════════════════════════════════
# TRUNCATIE
# ═══════════════════════════════════════════════════════

def truncate(model: ControlModel, k: float) -> ControlModel:
    """
    Vervang h, f, g door h_k, f_k, g_k

    Binnen |y| <= k ongewijzigd, lineaire taper op [k, 2k], daarbuiten
    nul reward en alleen -h^- als discount. L1 wordt 2 L1 (1 + 1/k).
    """
    if not k > 0:
        raise ParameterError(f'truncation level must be positive, got {k}')
    k = float(k)
    return replace(
        model,
        discount_rate=Truncated(model.discount_rate, k, mode='discount'),
        running_reward=Truncated(model.running_reward, k, mode='taper'),
        terminal_reward=Truncated(model.terminal_reward, k, mode='taper'),
        lip_L1=2.0 * model.lip_L1 * (1.0 + 1.0 / k),
        name=f'{model.name}[k={k:g}]',
    )


def truncate_drift(model: ControlModel, n: float) -> ControlModel:
    """Drift afgekapt op B(0, n); h, f, g ongewijzigd"""
    if not n > 0:
        raise ParameterError(f'drift truncation radius must be positive, got {n}')
    return replace(
        model,
        drift=tuple(TruncatedDrift(component, float(n)) for component in model.drift),
        name=f'{model.name}[drift n={float(n):g}]',
    )


# ═══════════════════════════════════════════════════════
# KAPPA ENVELOPE
# ═══════════════════════════════════════════════════════

KAPPA_LABEL = 'lower envelope of the true kappa over the probed policy family'


@dataclass
class KappaTable:
    """Empirische kappa(t, n) en p(t, n) envelopes"""
    times: np.ndarray
    radius: float
    kappa: np.ndarray
    p_terminal: np.ndarray
    kappa_se: np.ndarray
    p_se: np.ndarray
    policy_ids: List[str]
    policies_probed: List[str]
    lip_L2: float
    K_T: float = float('nan')
    M_T: float = float('nan')
    decay_rate: float = 0.0
    integral_kappa: float = float('inf')
    integral_weighted: float = float('inf')
    integrable: bool = False
    offending: Optional[Dict] = None
    label: str = KAPPA_LABEL

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.kappa = np.asarray(self.kappa, dtype=float)
        self.p_terminal = np.asarray(self.p_terminal, dtype=float)
        self.kappa_se = np.asarray(self.kappa_se, dtype=float)
        self.p_se = np.asarray(self.p_se, dtype=float)
        if self.times.ndim != 1 or self.times.size < 1:
            raise ParameterError('kappa table needs a nonempty time grid')
        if np.any(np.diff(self.times) <= 0):
            raise ParameterError('kappa time grid must be strictly increasing')
        for name in ('kappa', 'p_terminal'):
            values = getattr(self, name)
            if values.shape != self.times.shape:
                raise ParameterError(f'{name} must have one value per time')
            if np.any(values < 0) or not np.all(np.isfinite(values)):
                raise ParameterError(f'{name} values must be finite and nonnegative')

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def kappa_at(self, t) -> np.ndarray:
        """Lineaire interpolatie; voorbij het grid exponentiele staart met decay_rate"""
        t = np.asarray(t, dtype=float)
        inside = np.interp(np.minimum(t, self.horizon), self.times, self.kappa)
        tail = self.kappa[-1] * np.exp(-self.decay_rate * np.maximum(t - self.horizon, 0.0))
        return np.where(t <= self.horizon, inside, tail)

    def p_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return np.interp(t, self.times, self.p_terminal)

    def integral(self, t0: float, t1: float, rate: float = 0.0, floor_one: bool = False) -> float:
        """int_{t0}^{t1} w(s) kappa(s) ds met w = e^{rate s}, optioneel max(1, .)"""
        if t1 <= t0:
            return 0.0
        inner = self.times[(self.times > t0) & (self.times < t1)]
        points = np.concatenate([[t0], inner, [t1]])
        if t1 > self.horizon:
            points = np.union1d(points, np.linspace(max(t0, self.horizon), t1, 257))
        weight = np.exp(rate * points)
        if floor_one:
            weight = np.maximum(weight, 1.0)
        return float(trapezoid(weight * self.kappa_at(points), points))

    def to_dict(self) -> Dict:
        return {
            'label': self.label,
            'radius': self.radius,
            'times': self.times.tolist(),
            'kappa': self.kappa.tolist(),
            'kappa_se': self.kappa_se.tolist(),
            'p_terminal': self.p_terminal.tolist(),
            'p_se': self.p_se.tolist(),
            'policy_ids': list(self.policy_ids),
            'policies_probed': list(self.policies_probed),
            'K_T': self.K_T,
            'M_T': self.M_T,
            'decay_rate': self.decay_rate,
            'integral_kappa': self.integral_kappa,
            'integral_weighted': self.integral_weighted,
            'L2': self.lip_L2,
            'integrable': self.integrable,
            'offending': self.offending,
        }

    def to_csv(self, path: str, provenance: Optional[Dict] = None):
        with open(path, 'w', newline='', encoding='utf-8') as handle:
            for key, value in (provenance or {}).items():
                handle.write(f'# {key}={value}\n')
            handle.write(f'# radius={self.radius!r}\n')
            handle.write(f'# decay_rate={self.decay_rate!r}\n')
            handle.write(f'# L2={self.lip_L2!r}\n')
            writer = csv.writer(handle, lineterminator='\n')
            writer.writerow(['t', 'kappa', 'p', 'policy_id'])
            for t, kappa, p, policy_id in zip(self.times, self.kappa, self.p_terminal, self.policy_ids):
                writer.writerow([repr(float(t)), repr(float(kappa)), repr(float(p)), policy_id])


def ball_mesh(dim: int, radius: float, points: int) -> np.ndarray:
    """Cartesisch mesh van [-n, n]^N gefilterd op de bal B(0, n); bevat altijd 0"""
    axis = np.linspace(-radius, radius, int(points)) if points > 1 else np.zeros(1)
    mesh = np.array(list(itertools.product(axis, repeat=dim)), dtype=float)
    mesh = mesh[np.linalg.norm(mesh, axis=1) <= radius * (1 + 1e-12)]
    if not np.any(np.all(mesh == 0.0, axis=1)):
        mesh = np.vstack([np.zeros((1, dim)), mesh])
    return mesh


def _fit_envelope(starts: np.ndarray, sup_values: np.ndarray) -> Tuple[float, float]:
    """K e^{M|y|} fit: log-lineaire regressie, M >= 0, K opgehoogd tot dominantie"""
    radii = np.linalg.norm(starts, axis=1)
    logs = np.log(np.maximum(sup_values, 1e-300))
    if np.unique(radii).size >= 2:
        slope, _ = np.polyfit(radii, logs, 1)
        m = max(float(slope), 0.0)
    else:
        m = 0.0
    k = float(np.max(sup_values / np.exp(m * radii)))
    return k, m


def _tail_decay_rate(times: np.ndarray, values: np.ndarray) -> float:
    """Exponentiele decay over het laatste derde van het grid (0 als er geen decay is)"""
    if times.size < 3:
        return 0.0
    start = max(0, times.size - max(3, times.size // 3))
    t, v = times[start:], values[start:]
    if np.any(v <= 0):
        return float('inf') if np.all(v[-1:] == 0) else 0.0
    slope, _ = np.polyfit(t, np.log(v), 1)
    return max(float(-slope), 0.0)


def estimate_kappa(model: ControlModel, radius_n: float, horizon: float, policy_family: Sequence,
                   mc, n_times: int = None, mesh_points: int = None, overflow_guard: float = None,
                   times: Optional[Sequence[float]] = None) -> KappaTable:
    """
    Schat kappa(t, n) = max over policies en y in B(0, n) van E_y[e^{int h} max(|f|, 1)]

    Analoog p(t, n) met max(|g|, 1). Elke (policy, start) cel krijgt een eigen seed.
    """
    from simulate import derive_seed, simulate_paths

    if not horizon > 0:
        raise ParameterError('kappa horizon must be positive')
    policy_family = list(policy_family)
    if not policy_family:
        raise ParameterError('kappa estimation needs a nonempty policy family')
    n_times = Config.KAPPA_TIMES if n_times is None else int(n_times)
    mesh_points = Config.KAPPA_MESH_POINTS if mesh_points is None else int(mesh_points)
    guard = Config.KAPPA_OVERFLOW_GUARD if overflow_guard is None else float(overflow_guard)

    if times is None:
        grid = np.linspace(0.0, horizon, n_times + 1)
    else:
        grid = np.asarray(times, dtype=float)
        if np.any(np.diff(grid) <= 0) or grid[0] < 0 or grid[-1] > horizon + 1e-12:
            raise ParameterError('kappa times must be strictly increasing within [0, horizon]')
    starts = ball_mesh(model.dim, radius_n, mesh_points)

    n_t = grid.size
    kappa = np.zeros(n_t)
    kappa_se = np.zeros(n_t)
    p_env = np.zeros(n_t)
    p_se = np.zeros(n_t)
    owner = [''] * n_t
    sup_by_start = np.zeros(starts.shape[0])
    offending = None

    for p_idx, policy in enumerate(policy_family):
        for s_idx, y0 in enumerate(starts):
            cell_mc = replace(mc, seed=derive_seed(mc.seed, p_idx, s_idx))
            batch = simulate_paths(model, policy, y0, horizon, cell_mc, record_times=grid)
            discount = np.exp(batch.log_discount)
            for j in range(n_t):
                states = batch.states[j]
                controls = policy(states, float(batch.times[j]))
                with np.errstate(over='ignore', invalid='ignore'):
                    f_factor = np.maximum(np.abs(model.f(states, controls, check=False)), 1.0)
                    g_factor = np.maximum(np.abs(model.g(states, check=False)), 1.0)
                    est_k, se_k = batch.estimate(discount[j] * f_factor)
                    est_p, se_p = batch.estimate(discount[j] * g_factor)
                if not (np.isfinite(est_k) and np.isfinite(est_p)) or max(est_k, est_p) > guard:
                    if offending is None:
                        offending = {'t': float(grid[j]), 'policy': policy.policy_id, 'y0': y0.tolist()}
                        logger.warning(LogEvents.KAPPA_DIVERGENCE, t=float(grid[j]),
                                       policy=policy.policy_id, guard=guard)
                    est_k = guard if not np.isfinite(est_k) else min(est_k, guard)
                    est_p = guard if not np.isfinite(est_p) else min(est_p, guard)
                if est_k > kappa[j]:
                    kappa[j], kappa_se[j], owner[j] = est_k, se_k, policy.policy_id
                if est_p > p_env[j]:
                    p_env[j], p_se[j] = est_p, se_p
                sup_by_start[s_idx] = max(sup_by_start[s_idx], est_k, est_p)

    k_fit, m_fit = _fit_envelope(starts, sup_by_start)
    decay = _tail_decay_rate(grid, kappa)

    table = KappaTable(
        times=grid, radius=float(radius_n), kappa=kappa, p_terminal=p_env,
        kappa_se=kappa_se, p_se=p_se, policy_ids=owner,
        policies_probed=[p.policy_id for p in policy_family],
        lip_L2=model.lip_L2, K_T=k_fit, M_T=m_fit, decay_rate=decay, offending=offending,
    )
    table.integral_kappa = _integral_with_tail(table, 0.0)
    table.integral_weighted = _integral_with_tail(table, model.lip_L2)
    table.integrable = bool(offending is None and np.isfinite(table.integral_kappa)
                            and np.isfinite(table.integral_weighted))

    logger.info(LogEvents.KAPPA_ESTIMATED, model=model.name, radius=float(radius_n),
                policies=len(policy_family), starts=int(starts.shape[0]),
                integrable=table.integrable, K_T=k_fit, M_T=m_fit)
    return table


def _integral_with_tail(table: KappaTable, rate: float) -> float:
    """Grid integraal van e^{rate t} kappa plus de geextrapoleerde staart"""
    body = float(trapezoid(np.exp(rate * table.times) * table.kappa, table.times))
    last = table.kappa[-1] * math.exp(rate * table.horizon)
    if last == 0.0:
        return body
    effective = table.decay_rate - rate
    if not effective > 0:
        return float('inf')
    return body + float(last / effective)


def read_kappa_csv(path: str) -> KappaTable:
    """Inverse van KappaTable.to_csv; standaardfouten en de K, M fit gaan niet mee"""
    meta: Dict[str, str] = {}
    lines: List[str] = []
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            for line in handle:
                if line.startswith('#'):
                    key, _, item = line[1:].strip().partition('=')
                    meta[key.strip()] = item.strip()
                else:
                    lines.append(line)
    except OSError as exc:
        raise ModelFileError(f"cannot read kappa file '{path}': {exc}") from exc
    rows = [row for row in csv.reader(lines) if row]
    if not rows or rows[0][:3] != ['t', 'kappa', 'p']:
        raise ModelFileError(f"kappa file '{path}' has unexpected columns")
    if 'radius' not in meta:
        raise ModelFileError(f"kappa file '{path}' does not name its radius")
    body = rows[1:]
    try:
        table = KappaTable(
            times=[float(row[0]) for row in body],
            radius=float(meta['radius']),
            kappa=[float(row[1]) for row in body],
            p_terminal=[float(row[2]) for row in body],
            kappa_se=np.zeros(len(body)),
            p_se=np.zeros(len(body)),
            policy_ids=[row[3] if len(row) > 3 else '' for row in body],
            policies_probed=sorted({row[3] for row in body if len(row) > 3}),
            lip_L2=float(meta.get('L2', -1.0)),
            decay_rate=float(meta.get('decay_rate', 0.0)),
        )
    except (ValueError, IndexError) as exc:
        raise ModelFileError(f"kappa file '{path}' is invalid: {exc}") from exc
    table.integral_kappa = _integral_with_tail(table, 0.0)
    table.integral_weighted = _integral_with_tail(table, table.lip_L2)
    table.integrable = bool(np.isfinite(table.integral_kappa) and np.isfinite(table.integral_weighted))
    return table


def bounded_discount_kappa(model: ControlModel, box, times: Sequence[float], samples: int = None,
                           seed: int = None, radius: float = None) -> KappaTable:
    """
    Analytische kappa voor begrensde modellen met sup h < 0

    kappa(t) = max(sup|f|, 1) e^{t sup h}, p(t) = max(sup|g|, 1) e^{t sup h}
    """
    samples = Config.ASSUMPTION_SAMPLES if samples is None else int(samples)
    seed = Config.DEFAULT_SEED if seed is None else int(seed)
    box = _as_box(box, model.dim)
    rng = np.random.default_rng(seed)
    ys = rng.uniform(box[:, 0], box[:, 1], size=(samples, model.dim))
    ys = np.vstack([ys, np.array(list(itertools.product(*box)), dtype=float)])
    h_sup, f_sup = -np.inf, 0.0
    for control in model.controls:
        ds = np.broadcast_to(control, (ys.shape[0], control.size))
        h_sup = max(h_sup, float(np.max(model.h(ys, ds))))
        f_sup = max(f_sup, float(np.max(np.abs(model.f(ys, ds)))))
    g_sup = float(np.max(np.abs(model.g(ys))))
    if h_sup >= 0:
        raise ParameterError(f'bounded kappa needs sup h < 0, sampled sup h = {h_sup}')
    grid = np.asarray(times, dtype=float)
    decay = np.exp(h_sup * grid)
    table = KappaTable(
        times=grid,
        radius=float(radius if radius is not None else np.max(np.abs(box))),
        kappa=max(f_sup, 1.0) * decay,
        p_terminal=max(g_sup, 1.0) * decay,
        kappa_se=np.zeros(grid.size), p_se=np.zeros(grid.size),
        policy_ids=['sup'] * grid.size, policies_probed=['sup over sampled box'],
        lip_L2=model.lip_L2, K_T=max(f_sup, g_sup, 1.0), M_T=0.0, decay_rate=-h_sup,
        label='analytic envelope for bounded coefficients',
    )
    table.integral_kappa = _integral_with_tail(table, 0.0)
    table.integral_weighted = _integral_with_tail(table, model.lip_L2)
    table.integrable = bool(np.isfinite(table.integral_kappa) and np.isfinite(table.integral_weighted))
    return table


# ═══════════════════════════════════════════════════════
# MODEL FILES
# ═══════════════════════════════════════════════════════

def model_from_dict(data: Dict, name: Optional[str] = None) -> ControlModel:
    try:
        dim = int(data['dim'])
        drift_desc = data['drift']
        if isinstance(drift_desc, dict) or not isinstance(drift_desc, list):
            drift_desc = [drift_desc]
        drift = tuple(coefficient_from_dict(d) for d in drift_desc)
        return ControlModel(
            dim=dim,
            drift=drift,
            discount_rate=coefficient_from_dict(data['discount_rate']),
            running_reward=coefficient_from_dict(data['running_reward']),
            terminal_reward=coefficient_from_dict(data.get('terminal_reward', 0.0)),
            controls=np.asarray(data['controls'], dtype=float),
            lip_L1=float(data['L1']),
            lip_L2=float(data['L2']),
            name=name or data.get('name', 'model'),
            domain_box=data.get('domain_box'),
            warnings=tuple(data.get('warnings', ())),
        )
    except KeyError as exc:
        raise ModelFileError(f'model file is missing field {exc}') from exc
    except ModelFileError:
        raise
    except ParameterError as exc:
        raise ModelFileError(f'invalid model file: {exc}') from exc
    except (TypeError, ValueError) as exc:
        raise ModelFileError(f'malformed model file: {exc}') from exc


def model_to_dict(model: ControlModel) -> Dict:
    data = {
        'name': model.name,
        'dim': model.dim,
        'controls': model.controls.tolist(),
        'drift': [component.to_dict() for component in model.drift],
        'discount_rate': model.discount_rate.to_dict(),
        'running_reward': model.running_reward.to_dict(),
        'terminal_reward': model.terminal_reward.to_dict(),
        'L1': model.lip_L1,
        'L2': model.lip_L2,
    }
    if model.domain_box is not None:
        data['domain_box'] = model.domain_box.tolist()
    if model.warnings:
        data['warnings'] = list(model.warnings)
    return data


def load_model(path: str) -> ControlModel:
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ModelFileError(f"cannot read model file '{path}': {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file '{path}' is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ModelFileError(f"model file '{path}' must hold a JSON object")
    model = model_from_dict(data)
    logger.debug(LogEvents.MODEL_LOADED, path=path, model=model.name, dim=model.dim,
                 controls=model.n_controls)
    return model


def save_model(model: ControlModel, path: str, provenance: Optional[Dict] = None):
    data = model_to_dict(model)
    if provenance:
        data['provenance'] = provenance
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write('\n')


def constant_model(rate: float, reward: float = 1.0, terminal: float = 0.0, drift: Optional[Coefficient] = None,
                   lip_L1: float = 1.0, lip_L2: float = -1.0, name: str = 'constant-rate') -> ControlModel:
    """Eendimensionaal model met constante h, f, g en een enkele control"""
    return ControlModel(
        dim=1,
        drift=(drift if drift is not None else Constant(0.0),),
        discount_rate=Constant(rate),
        running_reward=Constant(reward),
        terminal_reward=Constant(terminal),
        controls=np.zeros((1, 1)),
        lip_L1=lip_L1,
        lip_L2=lip_L2,
        name=name,
    )

