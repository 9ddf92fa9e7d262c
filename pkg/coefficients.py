"""
HJB Discount Lab - Coefficients Module
Serialiseerbare coefficient functies van toestand y en control delta

Alle coefficients werken op batches:
    y:     (P, N) toestanden
    delta: (P, k) controls
    resultaat: (P,)
"""
from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np

from exceptions import ModelFileError, ParameterError


def as_states(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 0:
        return y.reshape(1, 1)
    if y.ndim == 1:
        return y.reshape(-1, 1)
    return y


def as_controls(delta, rows: int) -> np.ndarray:
    if delta is None:
        return np.zeros((rows, 0))
    delta = np.asarray(delta, dtype=float)
    if delta.ndim == 0:
        delta = delta.reshape(1, 1)
    if delta.ndim == 1:
        delta = delta.reshape(1, -1)
    if delta.shape[0] == 1 and rows > 1:
        delta = np.broadcast_to(delta, (rows, delta.shape[1]))
    return delta


class Coefficient:
    """Basis voor alle coefficients"""

    kind = 'abstract'

    def __call__(self, y, delta=None) -> np.ndarray:
        ys = as_states(y)
        ds = as_controls(delta, ys.shape[0])
        return np.asarray(self.evaluate(ys, ds), dtype=float).reshape(ys.shape[0])

    def evaluate(self, y: np.ndarray, delta: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> Dict:
        raise NotImplementedError

    def to_dict(self) -> Dict:
        return {'kind': self.kind, **self.params()}

    def __repr__(self):
        return f'{type(self).__name__}({self.params()})'


class Constant(Coefficient):
    kind = 'constant'

    def __init__(self, value: float):
        self.value = float(value)

    def evaluate(self, y, delta):
        return np.full(y.shape[0], self.value)

    def params(self):
        return {'value': self.value}


class Affine(Coefficient):
    """c + a . y + b . delta"""

    kind = 'affine'

    def __init__(self, const: float = 0.0, y_coef: Sequence[float] = (), delta_coef: Sequence[float] = ()):
        self.const = float(const)
        self.y_coef = np.asarray(y_coef, dtype=float).reshape(-1)
        self.delta_coef = np.asarray(delta_coef, dtype=float).reshape(-1)

    def evaluate(self, y, delta):
        out = np.full(y.shape[0], self.const)
        if self.y_coef.size:
            if y.shape[1] != self.y_coef.size:
                raise ParameterError(f'affine coefficient expects {self.y_coef.size} state axes, got {y.shape[1]}')
            out = out + y @ self.y_coef
        if self.delta_coef.size:
            if delta.shape[1] != self.delta_coef.size:
                raise ParameterError(f'affine coefficient expects {self.delta_coef.size} control axes, got {delta.shape[1]}')
            out = out + delta @ self.delta_coef
        return out

    def params(self):
        return {'const': self.const, 'y_coef': self.y_coef.tolist(), 'delta_coef': self.delta_coef.tolist()}


class Polynomial(Coefficient):
    """const + sum(coef * y[axis] ** power)"""

    kind = 'polynomial'

    def __init__(self, terms: Sequence[Dict], const: float = 0.0):
        self.const = float(const)
        self.terms = [
            {'coef': float(t['coef']), 'power': int(t['power']), 'axis': int(t.get('axis', 0))}
            for t in terms
        ]

    def evaluate(self, y, delta):
        out = np.full(y.shape[0], self.const)
        for term in self.terms:
            out = out + term['coef'] * y[:, term['axis']] ** term['power']
        return out

    def params(self):
        return {'const': self.const, 'terms': [dict(t) for t in self.terms]}


class Norm(Coefficient):
    """const + slope * |y|"""

    kind = 'norm'

    def __init__(self, const: float = 0.0, slope: float = 1.0):
        self.const = float(const)
        self.slope = float(slope)

    def evaluate(self, y, delta):
        return self.const + self.slope * np.linalg.norm(y, axis=1)

    def params(self):
        return {'const': self.const, 'slope': self.slope}


class Sine(Coefficient):
    """offset + amplitude * sin(frequency * y[axis] + phase)"""

    kind = 'sine'

    def __init__(self, amplitude: float = 1.0, frequency: float = 1.0, phase: float = 0.0,
                 offset: float = 0.0, axis: int = 0):
        self.amplitude = float(amplitude)
        self.frequency = float(frequency)
        self.phase = float(phase)
        self.offset = float(offset)
        self.axis = int(axis)

    def evaluate(self, y, delta):
        return self.offset + self.amplitude * np.sin(self.frequency * y[:, self.axis] + self.phase)

    def params(self):
        return {'amplitude': self.amplitude, 'frequency': self.frequency, 'phase': self.phase,
                'offset': self.offset, 'axis': self.axis}


class Tabulated(Coefficient):
    """Lineaire interpolatie in y[axis], vlak buiten de knopen"""

    kind = 'tabulated'

    def __init__(self, knots: Sequence[float], values: Sequence[float], axis: int = 0):
        self.knots = np.asarray(knots, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.axis = int(axis)
        if self.knots.ndim != 1 or self.knots.shape != self.values.shape or self.knots.size < 2:
            raise ParameterError('tabulated coefficient needs matching 1-D knots and values (at least 2)')
        if np.any(np.diff(self.knots) <= 0):
            raise ParameterError('tabulated knots must be strictly increasing')

    def evaluate(self, y, delta):
        return np.interp(y[:, self.axis], self.knots, self.values)

    def params(self):
        return {'knots': self.knots.tolist(), 'values': self.values.tolist(), 'axis': self.axis}


class ControlPower(Coefficient):
    """coef * delta[index] ** power"""

    kind = 'control_power'

    def __init__(self, index: int = 0, power: float = 1.0, coef: float = 1.0):
        self.index = int(index)
        self.power = float(power)
        self.coef = float(coef)

    def evaluate(self, y, delta):
        if delta.shape[1] <= self.index:
            raise ParameterError(f'control_power needs control axis {self.index}, controls have {delta.shape[1]}')
        base = delta[:, self.index]
        if self.power == 1.0:
            return self.coef * base
        if self.power == 2.0:
            return self.coef * base * base
        return self.coef * np.power(base, self.power)

    def params(self):
        return {'index': self.index, 'power': self.power, 'coef': self.coef}


class Sum(Coefficient):
    kind = 'sum'

    def __init__(self, terms: Sequence[Coefficient]):
        self.terms = list(terms)

    def evaluate(self, y, delta):
        out = np.zeros(y.shape[0])
        for term in self.terms:
            out = out + term.evaluate(y, delta)
        return out

    def params(self):
        return {'terms': [t.to_dict() for t in self.terms]}


class Product(Coefficient):
    kind = 'product'

    def __init__(self, factors: Sequence[Coefficient]):
        self.factors = list(factors)

    def evaluate(self, y, delta):
        out = np.ones(y.shape[0])
        for factor in self.factors:
            out = out * factor.evaluate(y, delta)
        return out

    def params(self):
        return {'factors': [f.to_dict() for f in self.factors]}


class Truncated(Coefficient):
    """
    Afkapping buiten de bal B(0, radius)

    mode 'taper':    zeta * clip(2 - |y|/k, 0, 1)      (nul buiten 2k)
    mode 'discount': h+ * clip(2 - |y|/k, 0, 1) - h-
    Binnen |y| <= k is de waarde exact gelijk aan de basis coefficient.
    """

    kind = 'truncated'
    MODES = ('taper', 'discount')

    def __init__(self, base: Coefficient, radius: float, mode: str = 'taper'):
        if mode not in self.MODES:
            raise ParameterError(f'unknown truncation mode: {mode}')
        if not radius > 0:
            raise ParameterError('truncation radius must be positive')
        self.base = base
        self.radius = float(radius)
        self.mode = mode

    def evaluate(self, y, delta):
        base = self.base.evaluate(y, delta)
        r = np.linalg.norm(y, axis=1)
        weight = np.clip(2.0 - r / self.radius, 0.0, 1.0)
        inside = r <= self.radius
        with np.errstate(invalid='ignore'):
            if self.mode == 'taper':
                tapered = np.where(weight > 0, base * weight, 0.0)
            else:
                tapered = np.maximum(base, 0.0) * weight - np.maximum(-base, 0.0)
        return np.where(inside, base, tapered)

    def params(self):
        return {'base': self.base.to_dict(), 'radius': self.radius, 'mode': self.mode}


class TruncatedDrift(Coefficient):
    """
    Drift component afgekapt op de bal B(0, n)

    i_n(y) = i(y)                      voor |y| <= n
           = i(n y/|y|) (2 - |y|/n)    voor n < |y| <= 2n
           = 0                         daarbuiten
    """

    kind = 'truncated_drift'

    def __init__(self, base: Coefficient, radius: float):
        if not radius > 0:
            raise ParameterError('truncation radius must be positive')
        self.base = base
        self.radius = float(radius)

    def evaluate(self, y, delta):
        r = np.linalg.norm(y, axis=1)
        inside = r <= self.radius
        scale = np.where(inside, 1.0, self.radius / np.maximum(r, self.radius))
        projected = y * scale[:, None]
        base_inside = self.base.evaluate(y, delta)
        base_projected = self.base.evaluate(projected, delta)
        weight = np.clip(2.0 - r / self.radius, 0.0, 1.0)
        return np.where(inside, base_inside, base_projected * weight)

    def params(self):
        return {'base': self.base.to_dict(), 'radius': self.radius}


# ═══════════════════════════════════════════════════════
# REGISTRY
# ═══════════════════════════════════════════════════════

COEFFICIENT_KINDS = {
    'constant': lambda d: Constant(d['value']),
    'affine': lambda d: Affine(d.get('const', 0.0), d.get('y_coef', ()), d.get('delta_coef', ())),
    'polynomial': lambda d: Polynomial(d.get('terms', ()), d.get('const', 0.0)),
    'norm': lambda d: Norm(d.get('const', 0.0), d.get('slope', 1.0)),
    'sine': lambda d: Sine(d.get('amplitude', 1.0), d.get('frequency', 1.0), d.get('phase', 0.0),
                           d.get('offset', 0.0), d.get('axis', 0)),
    'tabulated': lambda d: Tabulated(d['knots'], d['values'], d.get('axis', 0)),
    'control_power': lambda d: ControlPower(d.get('index', 0), d.get('power', 1.0), d.get('coef', 1.0)),
    'sum': lambda d: Sum([coefficient_from_dict(t) for t in d['terms']]),
    'product': lambda d: Product([coefficient_from_dict(f) for f in d['factors']]),
    'truncated': lambda d: Truncated(coefficient_from_dict(d['base']), d['radius'], d.get('mode', 'taper')),
    'truncated_drift': lambda d: TruncatedDrift(coefficient_from_dict(d['base']), d['radius']),
}


def coefficient_from_dict(descriptor) -> Coefficient:
    """Bouw een coefficient uit een descriptor (dict met 'kind', of een getal)"""
    if isinstance(descriptor, Coefficient):
        return descriptor
    if isinstance(descriptor, (int, float)) and not isinstance(descriptor, bool):
        return Constant(descriptor)
    if not isinstance(descriptor, dict) or 'kind' not in descriptor:
        raise ModelFileError(f'coefficient descriptor must be a number or an object with a kind: {descriptor!r}')
    builder = COEFFICIENT_KINDS.get(descriptor['kind'])
    if builder is None:
        raise ModelFileError(f"unknown coefficient kind: {descriptor['kind']}")
    try:
        return builder(descriptor)
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"malformed '{descriptor['kind']}' coefficient: {exc}") from exc


def affine_lipschitz(drift: Sequence[Coefficient], others: Sequence[Coefficient] = ()) -> Tuple[float, float]:
    """
    Exacte constanten voor affiene modellen

    L1 = grootste gradient norm over alle coefficients (drift als matrix norm)
    L2 = grootste eigenwaarde van het symmetrische deel van de drift matrix
    """
    rows: List[np.ndarray] = []
    n = len(drift)
    for component in drift:
        if isinstance(component, Constant):
            rows.append(np.zeros(n))
        elif isinstance(component, Affine):
            coef = component.y_coef if component.y_coef.size else np.zeros(n)
            rows.append(coef)
        else:
            raise ParameterError(f'affine_lipschitz needs constant or affine drift, got {component.kind}')
    matrix = np.vstack(rows) if rows else np.zeros((0, 0))
    l1 = float(np.linalg.norm(matrix, 2)) if matrix.size else 0.0
    for coef in others:
        if isinstance(coef, Constant):
            continue
        if isinstance(coef, Affine):
            l1 = max(l1, float(np.linalg.norm(coef.y_coef)))
        else:
            raise ParameterError(f'affine_lipschitz needs constant or affine coefficients, got {coef.kind}')
    l2 = float(np.max(np.linalg.eigvalsh(0.5 * (matrix + matrix.T)))) if matrix.size else 0.0
    return l1, l2
