"""Scalar C^2 functions with declared derivative bounds.

The Young-drift solvers need ``|g|``, ``|Dg|`` and ``|D^2 g|`` bounds to size
their cells; lemma checks need the same numbers.  Bounds are declared, not
computed, and may be ``inf`` for functions that are only locally bounded
(e.g. linear fields used in closed-form tests).
"""

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ValidationError

_TANH_D2 = 4.0 / (3.0 * math.sqrt(3.0))


@dataclass(frozen=True)
class C2Function:
    fn: Callable
    sup: float
    dsup: float
    d2sup: float
    name: str = "g"

    def __call__(self, y):
        return self.fn(y)

    @property
    def lipschitz(self):
        return self.dsup

    @property
    def lemma_constant(self):
        return max(self.dsup, self.d2sup)


def zero():
    return C2Function(lambda y: np.zeros_like(np.asarray(y, dtype=float)),
                      0.0, 0.0, 0.0, "zero")


def constant(c):
    c = float(c)
    return C2Function(lambda y: np.full_like(np.asarray(y, dtype=float), c),
                      abs(c), 0.0, 0.0, f"const({c!r})")


def linear(beta, offset=0.0):
    beta, offset = float(beta), float(offset)
    sup = abs(offset) if beta == 0 else math.inf
    return C2Function(lambda y: beta * np.asarray(y, dtype=float) + offset,
                      sup, abs(beta), 0.0,
                      f"linear({beta!r},{offset!r})")


def tanh(scale=1.0, amplitude=1.0):
    """``amplitude * tanh(scale * y)``."""
    s, a = float(scale), float(amplitude)
    return C2Function(lambda y: a * np.tanh(s * np.asarray(y, dtype=float)),
                      abs(a), abs(a * s), abs(a) * s * s * _TANH_D2,
                      f"tanh({s!r},{a!r})")


def sin(scale=1.0, amplitude=1.0):
    s, a = float(scale), float(amplitude)
    return C2Function(lambda y: a * np.sin(s * np.asarray(y, dtype=float)),
                      abs(a), abs(a * s), abs(a) * s * s, f"sin({s!r},{a!r})")


REGISTRY = {
    "zero": zero,
    "const": constant,
    "linear": linear,
    "tanh": tanh,
    "sin": sin,
}


def from_config(cfg):
    """Build a :class:`C2Function` from ``"tanh"`` or ``{"kind": ..., **params}``."""
    if isinstance(cfg, C2Function):
        return cfg
    if isinstance(cfg, str):
        cfg = {"kind": cfg}
    if not isinstance(cfg, dict) or "kind" not in cfg:
        raise ValidationError(f"function spec needs a 'kind': {cfg!r}")
    params = {k: v for k, v in cfg.items() if k != "kind"}
    try:
        factory = REGISTRY[cfg["kind"]]
    except KeyError:
        raise ValidationError(
            f"unknown function kind {cfg['kind']!r}; choose from {sorted(REGISTRY)}"
        ) from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ValidationError(f"bad parameters for {cfg['kind']!r}: {exc}") from None


def stack(fields):
    """Vectorised evaluation of several fields: ``y (M,) -> (M, e)``."""
    fields = [from_config(f) for f in fields]

    def evaluate(y):
        y = np.asarray(y, dtype=float)
        return np.stack([np.broadcast_to(f(y), y.shape) for f in fields], axis=-1)

    return evaluate
