"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

STEP = 1e-5


@dataclass
class GradCheckReport:
    max_rel_error: float
    per_input: dict[str, float] = field(default_factory=dict)
    compared: int = 0

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def numeric_gradient(f: Callable[[], float], x: np.ndarray, step: float = STEP, mask=None) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x``, perturbed in place.

    Entries where ``mask`` is False are skipped (left at 0).
    """
    grad = np.zeros(x.shape, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        if mask is not None and not mask[idx]:
            continue
        orig = x[idx]
        x[idx] = orig + step
        fp = f()
        x[idx] = orig - step
        fm = f()
        x[idx] = orig
        grad[idx] = (fp - fm) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def grad_check(
    f: Callable[[], float],
    inputs: Mapping[str, np.ndarray],
    analytic: Mapping[str, np.ndarray],
    step: float = STEP,
    exclude: Mapping[str, np.ndarray] | None = None,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare analytic gradients of ``f`` against central differences.

    ``inputs`` are float64 arrays read by ``f``; they are perturbed in
    place and restored. ``exclude`` maps an input name to a boolean mask
    of entries to leave out (e.g. ReLU inputs at the kink).
    """
    report = GradCheckReport(0.0)
    for name, x in inputs.items():
        if x.dtype != np.float64:
            raise TypeError(f"gradient checks need float64 inputs, {name} is {x.dtype}")
        keep = None
        if exclude is not None and name in exclude:
            keep = ~np.asarray(exclude[name], dtype=bool)
        num = numeric_gradient(f, x, step, keep)
        err = relative_error(np.asarray(analytic[name], dtype=np.float64), num, floor)
        if keep is not None:
            err = err[keep]
        worst = float(err.max()) if err.size else 0.0
        report.per_input[name] = worst
        report.compared += int(err.size)
        report.max_rel_error = max(report.max_rel_error, worst)
    return report
