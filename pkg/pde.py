"""
HJB Discount Lab - PDE Module
Expliciete upwind finite-difference solvers (N = 1) voor de eindige en oneindige horizon HJB
"""
from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from config import Config
from exceptions import DivergenceError, ModelFileError, ParameterError
from hamiltonian import maximize
from logging_config import LogEvents, get_logger
from model import ControlModel, KappaTable

logger = get_logger(__name__)

# maximizer(y, u, u_y) -> (controls (n, k), valid (n,))
Maximizer = Callable[[np.ndarray, np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]

CFL_SLACK = 1e-12


class Boundary(str, Enum):
    ONE_SIDED = 'one_sided'
    LINEAR_EXTRAPOLATION = 'linear_extrapolation'


# ═══════════════════════════════════════════════════════
# GRIDS EN FIELDS
# ═══════════════════════════════════════════════════════

@dataclass(frozen=True)
class Grid1D:
    y_min: float
    y_max: float
    nodes: int
    boundary: Boundary = Boundary.ONE_SIDED

    def __post_init__(self):
        try:
            boundary = Boundary(self.boundary)
        except ValueError as exc:
            raise ParameterError(f'unknown boundary treatment: {self.boundary}') from exc
        if not (math.isfinite(self.y_min) and math.isfinite(self.y_max)) or self.y_min >= self.y_max:
            raise ParameterError('grid needs finite y_min < y_max')
        if int(self.nodes) < 3:
            raise ParameterError('grid needs at least 3 nodes')
        object.__setattr__(self, 'boundary', boundary)
        object.__setattr__(self, 'nodes', int(self.nodes))
        object.__setattr__(self, 'y_min', float(self.y_min))
        object.__setattr__(self, 'y_max', float(self.y_max))

    @property
    def spacing(self) -> float:
        return (self.y_max - self.y_min) / (self.nodes - 1)

    @property
    def points(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.nodes)


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if not self.horizon > 0:
            raise ParameterError('time horizon must be positive')
        if int(self.steps) < 1:
            raise ParameterError('time grid needs at least one step')
        object.__setattr__(self, 'steps', int(self.steps))

    @property
    def dt(self) -> float:
        return self.horizon / self.steps


@dataclass(frozen=True, eq=False)
class ValueField:
    """
    u op het grid, een laag per bewaarde tijd (oplopend)

    kind 'finite': stamps zijn kalendertijd t in [0, horizon]
    kind 'infinite': een laag, stamp is de totale march tijd
    """
    grid: Grid1D
    values: np.ndarray
    time_stamps: np.ndarray
    kind: str = 'finite'
    horizon: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values.reshape(1, -1)
        stamps = np.array(self.time_stamps, dtype=float).reshape(-1)
        if values.shape != (stamps.size, self.grid.nodes):
            raise ParameterError('value layers must match time stamps and grid nodes')
        if not np.all(np.isfinite(values)):
            raise ParameterError('value field contains non-finite values')
        values.setflags(write=False)
        stamps.setflags(write=False)
        object.__setattr__(self, 'values', values)
        object.__setattr__(self, 'time_stamps', stamps)

    @property
    def stationary(self) -> bool:
        return self.values.shape[0] == 1

    @property
    def initial(self) -> np.ndarray:
        """Laag op t = 0 (eindig) of de enige laag (oneindig)"""
        return self.values[0]

    def remaining(self) -> np.ndarray:
        """Resterende horizon per laag (eindig: T - t, oneindig: march tijd)"""
        if self.kind == 'finite':
            return self.horizon - self.time_stamps
        return self.time_stamps.copy()

    def layer(self, index: int) -> 'ValueField':
        return ValueField(self.grid, self.values[index:index + 1], self.time_stamps[index:index + 1],
                          kind=self.kind, horizon=self.horizon)

    def value_at(self, y, index: int = 0) -> np.ndarray:
        return np.interp(np.asarray(y, dtype=float), self.grid.points, self.values[index])


@dataclass(frozen=True, eq=False)
class PolicyField:
    """Maximaliserende control per node en bewaarde tijd; index -1 voor closed-form nodes"""
    grid: Grid1D
    controls: np.ndarray
    indices: np.ndarray
    time_stamps: np.ndarray

    def __post_init__(self):
        controls = np.array(self.controls, dtype=float)
        indices = np.array(self.indices, dtype=int)
        stamps = np.array(self.time_stamps, dtype=float).reshape(-1)
        if controls.ndim != 3 or controls.shape[:2] != (stamps.size, self.grid.nodes):
            raise ParameterError('policy controls must have shape (layers, nodes, control_dim)')
        if indices.shape != controls.shape[:2]:
            raise ParameterError('policy indices must have shape (layers, nodes)')
        for arr in (controls, indices, stamps):
            arr.setflags(write=False)
        object.__setattr__(self, 'controls', controls)
        object.__setattr__(self, 'indices', indices)
        object.__setattr__(self, 'time_stamps', stamps)

    def layer_for_time(self, t: float) -> int:
        """Laatste bewaarde laag met stamp <= t (eerste laag als t ervoor ligt)"""
        idx = int(np.searchsorted(self.time_stamps, t + 1e-12, side='right')) - 1
        return min(max(idx, 0), self.time_stamps.size - 1)

    def controls_at(self, y: np.ndarray, t: float) -> np.ndarray:
        """Nearest-node lookup; buiten het grid de rand node"""
        y = np.asarray(y, dtype=float).reshape(-1)
        dy = self.grid.spacing
        nodes = np.clip(np.rint((y - self.grid.y_min) / dy), 0, self.grid.nodes - 1).astype(int)
        return self.controls[self.layer_for_time(t)][nodes]


@dataclass
class SolveReport:
    mode: str
    boundary: str
    dy: float
    dt: float
    steps: int
    horizon: float
    cfl_ratio: float
    residual_norm: float
    dt_norm: float
    converged: bool
    wall_time: float
    closed_form: bool = False
    tol_dt: Optional[float] = None
    t_max: Optional[float] = None
    scheme: str = 'explicit-upwind'
    dt_norm_history: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self, include_timing: bool = False) -> Dict:
        data = {
            'mode': self.mode,
            'scheme': self.scheme,
            'boundary': self.boundary,
            'dy': self.dy,
            'dt': self.dt,
            'steps': self.steps,
            'horizon': self.horizon,
            'cfl_ratio': self.cfl_ratio,
            'residual_norm': self.residual_norm,
            'dt_norm': self.dt_norm,
            'converged': self.converged,
            'closed_form': self.closed_form,
            'tol_dt': self.tol_dt,
            't_max': self.t_max,
            'dt_norm_history': [list(pair) for pair in self.dt_norm_history],
        }
        if include_timing:
            data['wall_time'] = self.wall_time
        return data


# ═══════════════════════════════════════════════════════
# DISCRETE OPERATOR
# ═══════════════════════════════════════════════════════

class _Operator:
    """
    L v = 1/2 D2 v + max_d ( i p_up + h v + f )

    p_up: voorwaartse differentie waar i > 0, achterwaartse waar i < 0.
    """

    def __init__(self, model: ControlModel, grid: Grid1D, maximizer: Optional[Maximizer] = None):
        if model.dim != 1:
            raise ParameterError(f'grid solver supports dimension 1 only, model has {model.dim}')
        self.model = model
        self.grid = grid
        self.points = grid.points
        self.dy = grid.spacing
        self.maximizer = maximizer
        self.I, self.H, self.F = model.control_tables(self.points)
        self.I_forward = self.I > 0

    @property
    def rate(self) -> float:
        """1/dy^2 + max|i|/dy + max h^+ over grid x controls"""
        return (1.0 / self.dy ** 2 + float(np.max(np.abs(self.I))) / self.dy
                + float(np.max(np.maximum(self.H, 0.0))))

    def differences(self, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        dy = self.dy
        forward = np.empty_like(v)
        backward = np.empty_like(v)
        forward[:-1] = (v[1:] - v[:-1]) / dy
        forward[-1] = (v[-1] - v[-2]) / dy
        backward[1:] = (v[1:] - v[:-1]) / dy
        backward[0] = (v[1] - v[0]) / dy
        second = np.empty_like(v)
        second[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / dy ** 2
        second[0] = second[1]
        second[-1] = second[-2]
        return forward, backward, second

    def centered_gradient(self, v: np.ndarray) -> np.ndarray:
        grad = np.empty_like(v)
        grad[1:-1] = (v[2:] - v[:-2]) / (2.0 * self.dy)
        grad[0] = (v[1] - v[0]) / self.dy
        grad[-1] = (v[-1] - v[-2]) / self.dy
        return grad

    def hamiltonian(self, v: np.ndarray, stencil: str = 'upwind',
                    differences: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]] = None
                    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        (H waarden, control indices, controls) per node

        Met een maximizer wordt alleen gescand op nodes die de closed form afwijst.
        """
        forward, backward, _ = differences if differences is not None else self.differences(v)
        if stencil == 'upwind':
            gradients = (forward, backward)
        elif stencil == 'centered':
            gradients = (self.centered_gradient(v),)
        else:
            raise ParameterError(f'unknown stencil: {stencil}')

        values = np.empty(v.size)
        indices = np.full(v.size, -1, dtype=int)
        controls = np.empty((v.size, self.model.control_dim))
        if self.maximizer is None:
            scan = None
        else:
            scan = self._closed_form(v, forward, backward, gradients, values, controls)
            if not np.any(scan):
                return values, indices, controls

        rows = slice(None) if scan is None else np.flatnonzero(scan)
        if stencil == 'upwind':
            p = np.where(self.I_forward[rows], forward[rows, None], backward[rows, None])
        else:
            p = gradients[0][rows, None]
        candidates = self.I[rows] * p + self.H[rows] * v[rows, None] + self.F[rows]
        scan_values, scan_indices = maximize(candidates)
        values[rows] = scan_values
        indices[rows] = scan_indices
        controls[rows] = self.model.controls[scan_indices]
        return values, indices, controls

    def _closed_form(self, v, forward, backward, gradients, values, controls) -> np.ndarray:
        """
        Closed-form controls per kandidaat gradient, elk gescoord met de eigen upwind richting

        Vult values/controls op geaccepteerde nodes; geeft het masker van nodes voor de scan.
        """
        best = np.full(v.size, -np.inf)
        accepted = np.ones(v.size, dtype=bool)
        for gradient in gradients:
            proposed, valid = self.maximizer(self.points, v, gradient)
            accepted &= valid
            if not np.any(valid):
                break
            ys, ds = self.points[valid], proposed[valid]
            with np.errstate(invalid='ignore', over='ignore'):
                drift = self.model.drift_values(ys, ds, check=False)[:, 0]
                if len(gradients) == 2:
                    p = np.where(drift > 0, forward[valid], backward[valid])
                else:
                    p = gradient[valid]
                score = np.full(v.size, -np.inf)
                score[valid] = (drift * p + self.model.h(ys, ds, check=False) * v[valid]
                                + self.model.f(ys, ds, check=False))
            better = score > best
            best[better] = score[better]
            controls[better] = proposed[better]
        accepted &= np.isfinite(best)
        values[accepted] = best[accepted]
        return ~accepted

    def generator(self, v: np.ndarray, stencil: str = 'upwind'):
        differences = self.differences(v)
        values, indices, controls = self.hamiltonian(v, stencil, differences)
        return 0.5 * differences[2] + values, indices, controls

    def apply_boundary(self, v: np.ndarray):
        if self.grid.boundary == Boundary.LINEAR_EXTRAPOLATION:
            v[0] = 2.0 * v[1] - v[2]
            v[-1] = 2.0 * v[-2] - v[-3]


def stable_dt(model: ControlModel, grid: Grid1D) -> float:
    """Grootste dt die de CFL voorwaarde haalt"""
    return 1.0 / _Operator(model, grid).rate


def minimal_steps(model: ControlModel, grid: Grid1D, horizon: float) -> int:
    return max(1, int(math.ceil(horizon * _Operator(model, grid).rate * (1.0 - CFL_SLACK))))


def _check_cfl(op: _Operator, dt: float, horizon: Optional[float]) -> float:
    ratio = dt * op.rate
    if ratio > 1.0 + CFL_SLACK:
        min_steps = int(math.ceil(horizon * op.rate)) if horizon else None
        logger.error(LogEvents.CFL_VIOLATION, cfl_ratio=ratio, dt=dt, min_steps=min_steps)
        if min_steps is not None:
            message = f'CFL condition violated (ratio {ratio:.4g} > 1); need at least {min_steps} steps'
        else:
            message = f'CFL condition violated (ratio {ratio:.4g} > 1); need dt <= {1.0 / op.rate:.6g}'
        raise ParameterError(message, min_steps=min_steps)
    return ratio


def _interior_sup(values: np.ndarray) -> float:
    return float(np.max(np.abs(values[1:-1])))


def _check_update(v: np.ndarray, step: int, points: np.ndarray):
    bad = ~np.isfinite(v)
    if np.any(bad):
        node = int(np.argmax(bad))
        logger.error(LogEvents.SOLVER_DIVERGENCE, node=node, y=float(points[node]), step=step)
        raise DivergenceError(f'non-finite value at node {node} (y={points[node]:.6g}) in step {step}',
                              node=node, step=step)


# ═══════════════════════════════════════════════════════
# SOLVERS
# ═══════════════════════════════════════════════════════

def solve_finite_horizon(model: ControlModel, grid: Grid1D, time_grid: TimeGrid,
                         terminal: Optional[np.ndarray] = None, retain_stride: Optional[int] = None,
                         maximizer: Optional[Maximizer] = None) -> Tuple[ValueField, PolicyField, SolveReport]:
    """
    Achterwaartse sweep vanaf u(., T) = g

    Bewaart altijd de t = 0 laag; met retain_stride ook elke stride-de stap vanaf T.
    """
    started = time.perf_counter()
    op = _Operator(model, grid, maximizer)
    dt, steps, horizon = time_grid.dt, time_grid.steps, time_grid.horizon
    ratio = _check_cfl(op, dt, horizon)
    if retain_stride is not None and int(retain_stride) < 1:
        raise ParameterError('retain_stride must be a positive integer')

    if terminal is None:
        v = model.g(op.points).astype(float)
    else:
        v = np.array(terminal, dtype=float).reshape(-1)
        if v.size != grid.nodes:
            raise ParameterError('terminal layer must have one value per grid node')
    logger.debug(LogEvents.SOLVE_STARTED, mode='finite', model=model.name, steps=steps, dt=dt)

    kept_t, kept_v, kept_idx, kept_ctrl = [], [], [], []
    history: List[Tuple[float, float]] = []
    sample_every = max(1, steps // 1000)
    dt_norm = 0.0
    for n in range(steps):
        lv, idx, ctrl = op.generator(v)
        if retain_stride is not None and n % int(retain_stride) == 0:
            kept_t.append(horizon - n * dt)
            kept_v.append(v.copy())
            kept_idx.append(idx)
            kept_ctrl.append(ctrl)
        v = v + dt * lv
        op.apply_boundary(v)
        _check_update(v, n + 1, op.points)
        dt_norm = _interior_sup(lv)
        if n % sample_every == 0 or n == steps - 1:
            history.append(((n + 1) * dt, dt_norm))

    lv, idx, ctrl = op.generator(v)
    kept_t.append(0.0)
    kept_v.append(v.copy())
    kept_idx.append(idx)
    kept_ctrl.append(ctrl)

    order = np.argsort(np.asarray(kept_t), kind='stable')
    stamps = np.asarray(kept_t)[order]
    value = ValueField(grid, np.asarray(kept_v)[order], stamps, kind='finite', horizon=horizon)
    policy = PolicyField(grid, np.asarray(kept_ctrl)[order], np.asarray(kept_idx)[order], stamps)

    residual_norm = _interior_sup(residual(model, value.layer(0), stencil='upwind', maximizer=maximizer,
                                          boundary_rows=True))
    report = SolveReport(
        mode='finite', boundary=grid.boundary.value, dy=grid.spacing, dt=dt, steps=steps,
        horizon=horizon, cfl_ratio=ratio, residual_norm=residual_norm, dt_norm=dt_norm,
        converged=True, wall_time=time.perf_counter() - started,
        closed_form=maximizer is not None, dt_norm_history=history,
    )
    logger.info(LogEvents.SOLVE_FINISHED, mode='finite', model=model.name, steps=steps,
                cfl_ratio=ratio, wall_time=report.wall_time)
    return value, policy, report


def solve_infinite_horizon(model: ControlModel, grid: Grid1D, dt: Optional[float] = None,
                           tol_dt: Optional[float] = None, t_max: Optional[float] = None,
                           maximizer: Optional[Maximizer] = None,
                           overflow_guard: Optional[float] = None) -> Tuple[ValueField, PolicyField, SolveReport]:
    """
    Voorwaartse march van v_t = L v vanaf v(., 0) = 0

    Stopt zodra sup |L v| over interieure nodes onder tol_dt zakt, of bij t_max
    (dan converged = False).
    """
    started = time.perf_counter()
    tol_dt = Config.TOL_DT if tol_dt is None else float(tol_dt)
    t_max = Config.T_MAX if t_max is None else float(t_max)
    guard = Config.OVERFLOW_GUARD if overflow_guard is None else float(overflow_guard)
    if not tol_dt > 0:
        raise ParameterError('tol_dt must be positive')
    if not t_max > 0:
        raise ParameterError('t_max must be positive')

    op = _Operator(model, grid, maximizer)
    if dt is None:
        dt = Config.CFL_SAFETY / op.rate
    dt = float(dt)
    if not dt > 0:
        raise ParameterError('dt must be positive')
    ratio = _check_cfl(op, dt, None)
    max_steps = int(math.ceil(t_max / dt - CFL_SLACK))
    logger.debug(LogEvents.SOLVE_STARTED, mode='infinite', model=model.name, dt=dt, tol_dt=tol_dt, t_max=t_max)

    v = np.zeros(grid.nodes)
    history: List[Tuple[float, float]] = []
    sample_every = max(1, max_steps // 1000)
    converged = False
    step = 0
    while True:
        lv, idx, ctrl = op.generator(v)
        dt_norm = _interior_sup(lv)
        if step % sample_every == 0:
            history.append((step * dt, dt_norm))
        if dt_norm < tol_dt:
            converged = True
            break
        if step >= max_steps:
            break
        v = v + dt * lv
        op.apply_boundary(v)
        step += 1
        _check_update(v, step, op.points)
        if float(np.max(np.abs(v))) > guard:
            logger.error(LogEvents.SOLVER_DIVERGENCE, step=step, t=step * dt, guard=guard)
            raise DivergenceError(
                f'value exceeded overflow guard {guard:g} at t={step * dt:.6g}; '
                'the discount moments are likely not integrable for this model (kappa condition)',
                step=step,
            )

    if not history or history[-1][0] != step * dt:
        history.append((step * dt, dt_norm))
    t_final = step * dt
    value = ValueField(grid, v[None, :], [t_final], kind='infinite', horizon=t_final)
    policy = PolicyField(grid, ctrl[None, :, :], idx[None, :], [t_final])
    residual_norm = _interior_sup(residual(model, value, stencil='upwind', maximizer=maximizer,
                                          boundary_rows=True))
    report = SolveReport(
        mode='infinite', boundary=grid.boundary.value, dy=grid.spacing, dt=dt, steps=step,
        horizon=t_final, cfl_ratio=ratio, residual_norm=residual_norm, dt_norm=dt_norm,
        converged=converged, wall_time=time.perf_counter() - started,
        closed_form=maximizer is not None, tol_dt=tol_dt, t_max=t_max, dt_norm_history=history,
    )
    event = LogEvents.SOLVE_FINISHED if converged else LogEvents.SOLVE_NOT_CONVERGED
    logger.info(event, mode='infinite', model=model.name, steps=step, t=t_final,
                dt_norm=dt_norm, converged=converged)
    return value, policy, report


def residual(model: ControlModel, field: ValueField, stencil: str = 'centered',
             maximizer: Optional[Maximizer] = None, boundary_rows: bool = False) -> np.ndarray:
    """
    1/2 D2 v + H(y, v, Dv) per interieure node

    stencil 'centered' (standaard) of 'upwind' (zelfde operator als de solver).
    """
    if not field.stationary:
        raise ParameterError('residual needs a stationary (single layer) field')
    op = _Operator(model, field.grid, maximizer)
    with np.errstate(invalid='ignore', over='ignore'):
        lv, _, _ = op.generator(np.array(field.values[0], dtype=float), stencil=stencil)
    return lv if boundary_rows else lv[1:-1]


# ═══════════════════════════════════════════════════════
# CHECKS
# ═══════════════════════════════════════════════════════

def gradient_bound_check(field: ValueField, kappa: KappaTable, lip_L1: float, lip_L2: float,
                         include_terminal: bool = True, rtol: Optional[float] = None) -> Dict:
    """
    Waarde- en gradient bounds per node binnen B(0, n)

    |u| <= int_0^tau kappa + p(tau)
    |Du| <= (L1 + L1/|L2|) (int_0^tau max(1, e^{L2 s}) kappa ds + max(1, e^{L2 tau}) p(tau))
    Een overschrijding is 'inconclusive': kappa is een gesamplede ondergrens.
    """
    rtol = Config.GRADIENT_BOUND_RTOL if rtol is None else float(rtol)
    remaining = field.remaining()
    if kappa.horizon < float(np.max(remaining)) - 1e-12:
        raise ParameterError(f'kappa table ends at t={kappa.horizon:g}, field needs {float(np.max(remaining)):g}')
    points = field.grid.points
    mask = np.abs(points) <= kappa.radius + 1e-12
    if not np.any(mask):
        raise ParameterError('no grid nodes inside the kappa ball')
    factor = lip_L1 + lip_L1 / abs(lip_L2)
    terminal = 1.0 if include_terminal else 0.0

    worst_value = (math.inf, None)
    worst_gradient = (math.inf, None)
    for index, tau in enumerate(remaining):
        tau = float(tau)
        p_tau = float(kappa.p_at(tau))
        value_bound = kappa.integral(0.0, tau) + terminal * p_tau
        gradient_bound = factor * (kappa.integral(0.0, tau, rate=lip_L2, floor_one=True)
                                   + terminal * max(1.0, math.exp(lip_L2 * tau)) * p_tau)
        layer = field.values[index]
        gradient = np.gradient(layer, field.grid.spacing)
        value_slack = value_bound * (1.0 + rtol) - np.abs(layer[mask])
        gradient_slack = gradient_bound * (1.0 + rtol) - np.abs(gradient[mask])
        i_v = int(np.argmin(value_slack))
        i_g = int(np.argmin(gradient_slack))
        if value_slack[i_v] < worst_value[0]:
            worst_value = (float(value_slack[i_v]), {'y': float(points[mask][i_v]), 'tau': tau,
                                                      'bound': value_bound})
        if gradient_slack[i_g] < worst_gradient[0]:
            worst_gradient = (float(gradient_slack[i_g]), {'y': float(points[mask][i_g]), 'tau': tau,
                                                            'bound': gradient_bound})

    met = worst_value[0] >= 0 and worst_gradient[0] >= 0
    return {
        'status': 'met' if met else 'inconclusive',
        'worst_value_slack': worst_value[0],
        'worst_value_at': worst_value[1],
        'worst_gradient_slack': worst_gradient[0],
        'worst_gradient_at': worst_gradient[1],
        'worst_slack': min(worst_value[0], worst_gradient[0]),
        'layers_checked': int(remaining.size),
        'nodes_checked': int(np.sum(mask)),
        'include_terminal': include_terminal,
        'rtol': rtol,
        'kappa_label': kappa.label,
    }


def time_derivative_check(report: SolveReport, kappa: Optional[KappaTable] = None,
                          transient: float = 0.1) -> Dict:
    """Sup-norm van dv/dt: niet stijgend na de transient en onder kappa op de eindtijd"""
    history = np.asarray(report.dt_norm_history, dtype=float).reshape(-1, 2)
    result = {'non_increasing': True, 'increases': 0, 'final_dt_norm': report.dt_norm}
    if history.shape[0] >= 2:
        start = int(math.floor(transient * history.shape[0]))
        norms = history[start:, 1]
        rises = norms[1:] > norms[:-1] * (1.0 + 1e-9) + 1e-15
        result['increases'] = int(np.sum(rises))
        result['non_increasing'] = not bool(np.any(rises))
    if kappa is not None:
        bound = float(kappa.kappa_at(report.horizon))
        result['kappa_at_final'] = bound
        result['within_kappa'] = bool(report.dt_norm <= bound)
    return result


def policy_horizon_convergence(model: ControlModel, grid: Grid1D, horizons: Sequence[float],
                               dt: Optional[float] = None, tol_dt: Optional[float] = None,
                               t_max: Optional[float] = None,
                               maximizer: Optional[Maximizer] = None) -> Dict:
    """Eindige horizon t = 0 lagen en policies tegen de oneindige horizon oplossing"""
    horizons = [float(T) for T in horizons]
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ParameterError('horizons must be strictly increasing')
    stationary, stationary_policy, report = solve_infinite_horizon(
        model, grid, dt=dt, tol_dt=tol_dt, t_max=t_max, maximizer=maximizer)
    rows = []
    previous = None
    for T in horizons:
        steps = minimal_steps(model, grid, T)
        finite, finite_policy, _ = solve_finite_horizon(model, grid, TimeGrid(T, steps), maximizer=maximizer)
        u0 = finite.initial
        if maximizer is None:
            mismatch = finite_policy.indices[0][1:-1] != stationary_policy.indices[0][1:-1]
        else:
            mismatch = ~np.all(np.isclose(finite_policy.controls[0][1:-1],
                                          stationary_policy.controls[0][1:-1], atol=1e-6), axis=1)
        rows.append({
            'horizon': T,
            'steps': steps,
            'value_gap': _interior_sup(u0 - stationary.initial),
            'step_difference': None if previous is None else _interior_sup(u0 - previous),
            'policy_mismatch_fraction': float(np.mean(mismatch)),
        })
        previous = u0
    differences = [row['step_difference'] for row in rows[1:]]
    return {
        'infinite_converged': report.converged,
        'rows': rows,
        'cauchy': all(b < a for a, b in zip(differences, differences[1:])),
    }


# ═══════════════════════════════════════════════════════
# ARTIFACTS
# ═══════════════════════════════════════════════════════

def fields_to_csv(value: ValueField, policy: PolicyField, path: str, provenance: Optional[Dict] = None):
    """CSV met kolommen y, t, u, control_index, delta_star_0, ..."""
    k = policy.controls.shape[2]
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        for key, item in (provenance or {}).items():
            handle.write(f'# {key}={item}\n')
        handle.write(f'# kind={value.kind}\n')
        handle.write(f'# horizon={value.horizon!r}\n')
        handle.write(f'# boundary={value.grid.boundary.value}\n')
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(['y', 't', 'u', 'control_index'] + [f'delta_star_{j}' for j in range(k)])
        points = value.grid.points
        for layer, t in enumerate(value.time_stamps):
            for node, y in enumerate(points):
                writer.writerow(
                    [repr(float(y)), repr(float(t)), repr(float(value.values[layer, node])),
                     int(policy.indices[layer, node])]
                    + [repr(float(c)) for c in policy.controls[layer, node]]
                )


def read_fields_csv(path: str) -> Tuple[ValueField, PolicyField]:
    """Inverse van fields_to_csv"""
    meta: Dict[str, str] = {}
    rows: List[List[str]] = []
    try:
        with open(path, 'r', encoding='utf-8') as handle:
            lines = []
            for line in handle:
                if line.startswith('#'):
                    key, _, item = line[1:].strip().partition('=')
                    meta[key.strip()] = item.strip()
                else:
                    lines.append(line)
        reader = csv.reader(lines)
        header = next(reader)
        rows = [row for row in reader if row]
    except OSError as exc:
        raise ModelFileError(f"cannot read field file '{path}': {exc}") from exc
    except StopIteration as exc:
        raise ModelFileError(f"field file '{path}' has no header") from exc
    if header[:4] != ['y', 't', 'u', 'control_index']:
        raise ModelFileError(f"field file '{path}' has unexpected columns {header}")
    try:
        table = np.array([[float(x) for x in row] for row in rows], dtype=float)
    except ValueError as exc:
        raise ModelFileError(f"field file '{path}' holds non-numeric data: {exc}") from exc
    if table.ndim != 2 or table.shape[0] == 0 or table.shape[1] != len(header):
        raise ModelFileError(f"field file '{path}' is empty or ragged")

    stamps, first = np.unique(table[:, 1], return_index=True)
    stamps = stamps[np.argsort(first)]
    layers = [table[table[:, 1] == t] for t in stamps]
    nodes = layers[0].shape[0]
    if any(layer.shape[0] != nodes for layer in layers):
        raise ModelFileError(f"field file '{path}' has layers of different sizes")
    y = layers[0][:, 0]
    try:
        grid = Grid1D(float(y[0]), float(y[-1]), nodes, meta.get('boundary', Boundary.ONE_SIDED.value))
        if not np.allclose(y, grid.points, rtol=0, atol=1e-9 * max(1.0, grid.spacing)):
            raise ModelFileError(f"field file '{path}' nodes are not uniformly spaced")
        order = np.argsort(stamps)
        values = np.array([layer[:, 2] for layer in layers])[order]
        value = ValueField(grid, values, stamps[order], kind=meta.get('kind', 'finite'),
                           horizon=float(meta.get('horizon', float(np.max(stamps)))))
        policy = PolicyField(grid, np.array([layer[:, 4:] for layer in layers])[order],
                             np.array([layer[:, 3] for layer in layers]).astype(int)[order], stamps[order])
    except ParameterError as exc:
        raise ModelFileError(f"field file '{path}' is invalid: {exc}") from exc
    return value, policy


def report_to_json(report: SolveReport, path: str, provenance: Optional[Dict] = None):
    data = report.to_dict(include_timing=False)
    if provenance:
        data['provenance'] = provenance
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(data, handle, indent=2, sort_keys=True)
        handle.write('\n')
