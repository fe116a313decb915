"""Central-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class GradCheckReport:
    max_rel_err: float
    tol: float
    per_input: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_rel_err) and self.max_rel_err < self.tol)


def numeric_grad(f: Callable[[], float], x: np.ndarray, h: float) -> np.ndarray:
    """Central differences of a scalar function of ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray, zero_tol: float = 1e-7) -> float:
    """||a - b|| / (||a|| + ||b||), or the plain difference when both are ~0.

    Some gradients are structurally zero (e.g. a key bias under softmax);
    there the finite difference is pure rounding noise and a ratio is
    meaningless.
    """
    num = float(np.linalg.norm(a - b))
    den = float(np.linalg.norm(a) + np.linalg.norm(b))
    if den <= zero_tol:
        return num
    return num / den


def grad_check(op: Callable[[dict], tuple[float, dict]], inputs: dict[str, np.ndarray],
               h: float = 1e-5, tol: float = 1e-6,
               loss: Callable[[dict], float] | None = None) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    ``op(inputs)`` returns ``(loss, grads)`` with one gradient per input name;
    ``loss`` optionally evaluates the loss alone for the perturbed calls.
    The report keeps the worst per-input ``rel_error``.
    """
    _, analytic = op(inputs)
    f = loss if loss is not None else (lambda inp: float(op(inp)[0]))
    per = {}
    for name, x in inputs.items():
        num = numeric_grad(lambda: float(f(inputs)), x, h)
        per[name] = rel_error(np.asarray(analytic[name]), num)
    return GradCheckReport(max_rel_err=max(per.values()) if per else 0.0, tol=tol, per_input=per)
