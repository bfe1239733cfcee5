"""Potentials evaluated along orbits (vectorized over point batches).

A potential may carry a dedicated `birkhoff` implementation when its orbit
sums admit a cheaper-but-identical evaluation; `orbits.birkhoff_sums`
dispatches on it. The stable potential uses cocycle propagation this way.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import ConfigInvalid
from .stable_structure import HORIZON_DEFAULT, stable_log_derivatives


@dataclass(frozen=True)
class Potential:
    tag: str
    fn: Callable
    birkhoff: Optional[Callable] = None  # (pts, n) -> n-term orbit sums

    def __call__(self, pts):
        return self.fn(np.asarray(pts, dtype=float))


def zero_potential():
    return Potential("zero", lambda pts: np.zeros(pts.shape[:-1]),
                     birkhoff=lambda pts, n: np.zeros(np.atleast_2d(pts).shape[0]))


def constant_potential(c):
    c = float(c)
    return Potential(f"const:{c:g}", lambda pts: np.full(pts.shape[:-1], c),
                     birkhoff=lambda pts, n: np.full(np.atleast_2d(pts).shape[0], n * c))


def stable_potential(model, horizon=HORIZON_DEFAULT):
    """log|Df_s|, the log of the one-step stable derivative norm."""
    tag = "stable" if horizon == HORIZON_DEFAULT else f"stable@h{horizon}"
    return Potential(tag, lambda pts: stable_log_derivatives(model, pts, horizon))


def scaled_potential(base, t):
    t = float(t)
    birkhoff = None
    if base.birkhoff is not None:
        birkhoff = lambda pts, n: t * base.birkhoff(pts, n)
    return Potential(f"{t:.12g}*{base.tag}", lambda pts: t * base.fn(pts), birkhoff)


def shifted_potential(base, c):
    c = float(c)
    birkhoff = None
    if base.birkhoff is not None:
        birkhoff = lambda pts, n: base.birkhoff(pts, n) + n * c
    return Potential(f"{base.tag}+{c:g}", lambda pts: base.fn(pts) + c, birkhoff)


def parse_potential(spec, model, horizon=HORIZON_DEFAULT):
    """Parse a CLI potential name: 'stable', 'zero', or 'const:C'."""
    if spec == "stable":
        return stable_potential(model, horizon)
    if spec == "zero":
        return zero_potential()
    if spec.startswith("const:"):
        try:
            return constant_potential(float(spec.split(":", 1)[1]))
        except ValueError as exc:
            raise ConfigInvalid(f"bad constant potential {spec!r}") from exc
    raise ConfigInvalid(f"unknown potential {spec!r}; use stable|zero|const:C")
