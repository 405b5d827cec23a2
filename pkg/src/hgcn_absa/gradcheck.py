"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Tape, Tensor


class NonDeterministicFunction(RuntimeError):
    """The function under test returned different values on identical calls."""


@dataclass
class GradCheckReport:
    """Per-parameter relative errors between analytic and numeric gradients."""

    tolerance: float
    per_param: dict[str, float] = field(default_factory=dict)

    @property
    def max_relative_error(self) -> float:
        return max(self.per_param.values()) if self.per_param else 0.0

    @property
    def passed(self) -> bool:
        return self.max_relative_error < self.tolerance

    def worst(self) -> str:
        if not self.per_param:
            return "<no parameters>"
        name = max(self.per_param, key=self.per_param.get)
        return f"{name}={self.per_param[name]:.3e}"


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    # Denominator floored so finite-difference noise on genuinely-zero
    # gradients does not register as a large relative error.
    denom = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), 1e-6)
    return float(np.max(np.abs(analytic - numeric)) / denom)


def grad_check(fn: Callable[[], Tensor],
               params: Sequence[tuple[str, Tensor]],
               step: float = 1e-5,
               tolerance: float = 1e-6) -> GradCheckReport:
    """Compare tape gradients of a scalar-valued `fn` against central differences.

    `fn` is called with no arguments and must read the supplied parameter
    tensors; it is evaluated twice up front and must reproduce its value
    bitwise, otherwise `NonDeterministicFunction` is raised. Parameter
    gradients are zeroed before the analytic pass and left populated.
    """
    v1 = fn().item()
    v2 = fn().item()
    if v1 != v2:
        raise NonDeterministicFunction(
            f"function returned {v1!r} then {v2!r} on identical evaluations")

    for _, p in params:
        p.zero_grad()
    with Tape() as tape:
        out = fn()
        if out.size != 1:
            raise ValueError(f"grad_check: function must be scalar-valued, got {out.shape}")
        tape.backward(out)

    report = GradCheckReport(tolerance=tolerance)
    for name, p in params:
        analytic = np.zeros_like(p.data) if p.grad is None else np.array(p.grad)
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        nflat = numeric.reshape(-1)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + step
            f_plus = fn().item()
            flat[i] = saved - step
            f_minus = fn().item()
            flat[i] = saved
            nflat[i] = (f_plus - f_minus) / (2.0 * step)
        report.per_param[name] = _relative_error(analytic, numeric)
    return report
