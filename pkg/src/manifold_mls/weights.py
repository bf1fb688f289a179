"""Compactly supported radial weights.

Both profiles depend on ``t`` only through ``s = t / h`` so they are
consistent across scales.  The base bump is

    phi(s) = exp(-(s / b)**2 / (1 - (s / c1)**2))   for s < c1, else 0,

which is C-infinity, equals 1 at the origin and decays monotonically to
zero at ``s = c1``.  The bandwidth ``b`` (default 1) narrows the bump
without touching its support.  The interpolatory profile divides by
``max(s, guard)**2`` so it blows up (up to the guard) at the origin.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

SMOOTH_BUMP = "smooth_bump"
INTERPOLATORY = "interpolatory_singular"
_SHAPES = (SMOOTH_BUMP, INTERPOLATORY)
_ALIASES = {"bump": SMOOTH_BUMP, "interp": INTERPOLATORY}

FLUSH_BELOW = 1e-300


def bump(s, c1: float, bandwidth: float = 1.0):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = s < c1
    si = s[inside]
    out[inside] = np.exp(-((si / bandwidth) ** 2) / (1.0 - (si / c1) ** 2))
    out[out < FLUSH_BELOW] = 0.0
    return out


@dataclass(frozen=True)
class WeightProfile:
    """Radial weight theta_h(t) = Phi(t / h).

    ``support_factor`` is c1 (support is [0, c1*h)); ``floor_point`` and
    ``floor_value`` are the (c2, c3) pair with theta_h(c2*h) > c3 > 0.
    ``floor_value`` defaults to half the bump at ``floor_point``.
    """

    shape: str = SMOOTH_BUMP
    support_factor: float = 3.5
    floor_point: float = 1.0
    floor_value: float | None = None
    guard: float = 1e-8
    bandwidth: float = 1.0

    def __post_init__(self):
        shape = _ALIASES.get(self.shape, self.shape)
        if shape not in _SHAPES:
            raise ValidationError(f"unknown weight shape {self.shape!r}")
        object.__setattr__(self, "shape", shape)
        if not self.support_factor > 0:
            raise ValidationError("support factor must be positive")
        if not self.bandwidth > 0:
            raise ValidationError("bandwidth must be positive")
        if not 0 < self.guard < 1:
            raise ValidationError("singularity guard must lie in (0, 1)")
        if self.floor_value is None:
            c3 = 0.5 * float(bump(self.floor_point, self.support_factor, self.bandwidth))
            object.__setattr__(self, "floor_value", c3)

    @property
    def interpolatory(self) -> bool:
        return self.shape == INTERPOLATORY

    def phi(self, s):
        """Scale-free profile Phi(s)."""
        s = np.asarray(s, dtype=float)
        base = bump(s, self.support_factor, self.bandwidth)
        if self.shape == INTERPOLATORY:
            base = base / np.maximum(s, self.guard) ** 2
        return base

    def __call__(self, t, h: float):
        return eval_weight(self, t, h)

    def support(self, h: float) -> float:
        return self.support_factor * h

    def check_injectivity(self) -> None:
        """Raise unless c1 > 3, c2 < c1 and theta(c2*h) > c3 > 0."""
        c1, c2, c3 = self.support_factor, self.floor_point, self.floor_value
        if c1 <= 3:
            raise ValidationError(f"support factor c1={c1} must exceed 3")
        if not 0 < c2 < c1:
            raise ValidationError(f"floor point c2={c2} must lie in (0, c1)")
        if not c3 > 0:
            raise ValidationError("floor value c3 must be positive")
        if not float(self.phi(c2)) > c3:
            raise ValidationError(f"floor condition fails: theta(c2 h)={float(self.phi(c2)):.3g} <= c3={c3:.3g}")


def eval_weight(profile: WeightProfile, t, h: float):
    """theta_h(t) for scalar or array ``t`` (returns the same shape)."""
    if not h > 0:
        raise ValidationError("h must be positive")
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValidationError("weights are defined for nonnegative distances only")
    out = profile.phi(t / h)
    return float(out) if out.ndim == 0 else out

