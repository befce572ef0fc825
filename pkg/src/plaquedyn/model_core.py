"""Parameters, state vectors and closed-form rates of the plaque-formation model.

The full model tracks monocytes ``m``, macrophages ``M``, oxidized LDL ``L``
and foam cells ``F``. Eliminating ``L`` through its quasi-steady state gives
the planar system in ``(m, M)`` that the rest of the package analyses.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "ModelParams",
    "FullState",
    "ReducedState",
    "Jacobian2",
    "rhs_full",
    "qssa_L",
    "rhs_reduced",
    "jacobian_reduced",
    "jacobian_entries",
    "divergence",
    "foam_accumulation",
    "reduced_rates",
]

# Round-off band below zero that is silently clamped.
NEG_CLAMP = 1e-12


class DomainError(ValueError):
    """Raised for non-finite or meaningfully negative model inputs."""


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless rate constants. Defaults are the baseline parameter set."""

    a: float = 1.0
    b: float = 0.2
    c: float = 0.05
    d: float = 3.0
    e: float = 1.0
    f: float = 1.0
    epsilon: float = 0.01
    sigma: float = 1.0

    def __post_init__(self):
        for fld in fields(self):
            v = getattr(self, fld.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise DomainError(f"parameter {fld.name!r} must be a real number, got {v!r}")
            if not math.isfinite(v):
                raise DomainError(f"parameter {fld.name!r} is not finite")
            if v < 0:
                raise DomainError(f"parameter {fld.name!r} must be >= 0, got {v}")
            object.__setattr__(self, fld.name, float(v))
        if self.f <= 0:
            raise DomainError("saturation constant f must be > 0")

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        unknown = set(data) - set(cls.keys())
        if unknown:
            raise KeyError(f"unknown parameter key(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        """Parse a flat JSON object; missing keys keep their default values."""
        data = json.loads(text)
        if not isinstance(data, dict):
            raise DomainError("parameter JSON must be an object")
        return cls.from_dict(data)


class ReducedState(NamedTuple):
    m: float
    M: float


class FullState(NamedTuple):
    m: float
    M: float
    L: float
    F: float = 0.0


class Jacobian2(NamedTuple):
    psi11: float
    psi12: float
    psi21: float
    psi22: float

    @property
    def trace(self) -> float:
        return self.psi11 + self.psi22

    @property
    def det(self) -> float:
        return self.psi11 * self.psi22 - self.psi12 * self.psi21

    def as_array(self) -> np.ndarray:
        return np.array([[self.psi11, self.psi12], [self.psi21, self.psi22]])


def _checked(values: Iterable[float], names: Sequence[str]) -> list[float]:
    out = []
    for name, v in zip(names, values):
        v = float(v)
        if not math.isfinite(v):
            raise DomainError(f"state component {name} is not finite")
        if v < 0:
            if v < -NEG_CLAMP:
                raise DomainError(f"state component {name} is negative ({v})")
            v = 0.0
        out.append(v)
    return out


def qssa_L(m: float, M: float, p: ModelParams) -> float:
    """Quasi-steady oxidized LDL level, ``d m / ((f + m)(e M + 1))``."""
    m, M = _checked((m, M), ("m", "M"))
    return p.d * m / ((p.f + m) * (p.e * M + 1.0))


def rhs_full(state: Sequence[float], p: ModelParams) -> FullState:
    """Rates ``(dm/dt, dM/dt, dL/dt, dF/dt)`` of the four-species model."""
    if len(state) == 3:
        state = (*state, 0.0)
    m, M, L, _F = _checked(state, ("m", "M", "L", "F"))
    uptake = L / (1.0 + L)
    dm = (p.a * uptake / (1.0 + p.sigma) - p.epsilon - p.c) * m
    dM = p.c * m - p.b * M * uptake
    dL = p.d * m / (p.f + m) - p.e * L * M - L
    dF = p.b * M * uptake
    return FullState(dm, dM, dL, dF)


def reduced_rates(m, M, p: ModelParams):
    """Unchecked, array-friendly reduced rates; used inside integrators.

    Written over the common denominator ``(f + m)(e M + 1) + d m`` so the
    QSSA factor ``L_s / (1 + L_s)`` collapses to ``d m / den``.
    """
    den = (p.f + m) * (p.e * M + 1.0) + p.d * m
    uptake = p.d * m / den
    dm = (p.a * uptake / (1.0 + p.sigma) - p.epsilon - p.c) * m
    dM = p.c * m - p.b * M * uptake
    return dm, dM


def rhs_reduced(state: Sequence[float], p: ModelParams) -> ReducedState:
    """Rates of the planar QSSA-reduced system."""
    m, M = _checked(state, ("m", "M"))
    dm, dM = reduced_rates(m, M, p)
    return ReducedState(dm, dM)


def jacobian_entries(m, M, p: ModelParams) -> Jacobian2:
    """Unchecked closed-form Jacobian of the reduced rates."""
    a, b, c, d, e, f = p.a, p.b, p.c, p.d, p.e, p.f
    den = (f + m) * (M * e + 1.0) + d * m
    den2 = den * den
    s1 = 1.0 + p.sigma
    psi11 = a * d * m * (2 * M * e * f + M * e * m + d * m + 2 * f + m) / (den2 * s1) - p.epsilon - c
    psi12 = -a * d * m * m * e * (f + m) / (s1 * den2)
    psi21 = c - b * M * d * f * (M * e + 1.0) / den2
    psi22 = -b * d * m * (d * m + f + m) / den2
    return Jacobian2(psi11, psi12, psi21, psi22)


def jacobian_reduced(state: Sequence[float], p: ModelParams) -> Jacobian2:
    m, M = _checked(state, ("m", "M"))
    return jacobian_entries(m, M, p)


def divergence(state: Sequence[float], p: ModelParams) -> float:
    """Phase-space divergence of the reduced flow (trace of its Jacobian)."""
    return jacobian_reduced(state, p).trace


def foam_accumulation(times, states, p: ModelParams, F0: float = 0.0) -> np.ndarray:
    """Integrate the decoupled foam-cell rate ``b L M / (1 + L)`` along a trajectory.

    Parameters
    ----------
    times : array of shape (n,)
        Strictly increasing sample times.
    states : array of shape (n, k), k >= 3
        Columns ``m, M, L[, ...]``.
    F0 : float
        Foam-cell level at ``times[0]``.

    Returns
    -------
    ndarray of shape (n,)
        Cumulative trapezoidal integral, nondecreasing.
    """
    t = np.asarray(times, dtype=float)
    x = np.asarray(states, dtype=float)
    if t.ndim != 1 or x.ndim != 2 or x.shape[0] != t.size or x.shape[1] < 3:
        raise ValueError("states must have shape (len(times), >=3)")
    if t.size and np.any(np.diff(t) <= 0):
        raise ValueError("timestamps must be strictly increasing")
    if not np.all(np.isfinite(x)):
        raise DomainError("trajectory contains non-finite values")
    M = np.clip(x[:, 1], 0.0, None)
    L = np.clip(x[:, 2], 0.0, None)
    rate = p.b * L * M / (1.0 + L)
    F = np.empty_like(t)
    if t.size:
        F[0] = F0
        F[1:] = F0 + np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(t))
    return F
