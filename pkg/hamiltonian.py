"""
HJB Discount Lab - Hamiltonian Module
H(y, u, p) = max over controls van i.p + h u + f
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from exceptions import EvaluationError, ParameterError
from model import ControlModel


@dataclass(frozen=True, eq=False)
class HamiltonianValue:
    value: float
    argmax: np.ndarray
    argmax_index: int
    runner_up_gap: float


def maximize(candidates: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rij-gewijze max over de laatste as; gelijke waarden gaan naar de laagste control index"""
    indices = np.argmax(candidates, axis=-1)
    values = np.take_along_axis(candidates, indices[..., None], axis=-1)[..., 0]
    return values, indices


def candidate_values(model: ControlModel, y, u: float, p) -> np.ndarray:
    """i(y, d).p + h(y, d) u + f(y, d) voor elke control d"""
    y = np.asarray(y, dtype=float).reshape(-1)
    p = np.asarray(p, dtype=float).reshape(-1)
    if y.size != model.dim or p.size != model.dim:
        raise ParameterError(f'y and p must have length {model.dim}')
    if not np.isfinite(u):
        raise ParameterError('u must be finite')
    ys = np.broadcast_to(y, (model.n_controls, model.dim))
    ds = model.controls
    try:
        drift = model.drift_values(ys, ds)
        h = model.h(ys, ds)
        f = model.f(ys, ds)
    except EvaluationError as exc:
        raise EvaluationError(exc.coefficient, exc.point, exc.control,
                              message=f'{exc} (control point {exc.control})') from exc
    values = drift @ p + h * u + f
    bad = ~np.isfinite(values)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise EvaluationError('hamiltonian', y, ds[idx])
    return values


def eval_H(model: ControlModel, y, u: float, p) -> HamiltonianValue:
    """Exacte scan over model.controls"""
    values = candidate_values(model, y, u, p)
    best, index = maximize(values[None, :])
    index = int(index[0])
    if values.size > 1:
        rest = np.delete(values, index)
        gap = float(best[0] - np.max(rest))
    else:
        gap = float('inf')
    return HamiltonianValue(
        value=float(best[0]),
        argmax=model.controls[index].copy(),
        argmax_index=index,
        runner_up_gap=gap,
    )


def empirical_constants(model: ControlModel, ys) -> Dict[str, float]:
    """
    Monotonie- en gradient constants over gesamplede toestanden

    monotone: max h^+ over controls en y
    gradient: max |i(y, d)| / (1 + |y|)
    """
    ys = np.asarray(ys, dtype=float)
    if ys.ndim == 1:
        ys = ys.reshape(-1, model.dim)
    monotone = 0.0
    gradient = 0.0
    for control in model.controls:
        ds = np.broadcast_to(control, (ys.shape[0], control.size))
        monotone = max(monotone, float(np.max(np.maximum(model.h(ys, ds), 0.0))))
        drift = np.linalg.norm(model.drift_values(ys, ds), axis=1)
        gradient = max(gradient, float(np.max(drift / (1.0 + np.linalg.norm(ys, axis=1)))))
    return {'monotone': monotone, 'gradient': gradient}
