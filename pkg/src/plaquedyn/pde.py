"""One-dimensional reaction-diffusion extension of the reduced model.

Both cell populations diffuse on ``[-L, L]`` with zero-flux boundaries. The
system is discretized by the method of lines (second-order central
differences, mirror ghost nodes at the walls) and integrated with the
adaptive stepper from :mod:`plaquedyn.integrate`.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .equilibria import E2_MINUS, E2_PLUS, solve_E2
from .integrate import IntegrationError, solve_ode
from .model_core import DomainError, ModelParams, ReducedState, reduced_rates

__all__ = [
    "PdeConfig",
    "FieldState",
    "SpaceTimeRecord",
    "Outcome",
    "PdeBlowUpError",
    "base_state",
    "gaussian_ic",
    "homogeneous_ic",
    "laplacian_neumann",
    "pde_rhs",
    "pde_run",
    "classify_spacetime",
    "spacetime_diagnostics",
    "first_arrival_time",
    "boundary_arrival_stop",
]


@dataclass(frozen=True)
class PdeConfig:
    params: ModelParams = field(default_factory=ModelParams)
    d1: float = 1e-4
    d2: float = 1e-5
    half_length: float = 1.0
    nx: int = 401
    t_end: float = 2000.0
    output_dt: float = 10.0
    psi: float = 0.3
    sigma_ic: float = 0.1
    base: str = E2_MINUS
    reaction: bool = True
    rtol: float = 1e-6
    atol: float = 1e-9
    max_step: float = math.inf

    def __post_init__(self):
        if not (self.d1 >= 0 and self.d2 >= 0):
            raise ValueError("diffusion coefficients must be >= 0")
        if int(self.nx) != self.nx or self.nx < 3:
            raise ValueError("nx must be an integer >= 3")
        object.__setattr__(self, "nx", int(self.nx))
        if not self.half_length > 0:
            raise ValueError("half_length must be > 0")
        if not (self.t_end > 0 and self.output_dt > 0 and self.max_step > 0):
            raise ValueError("t_end, output_dt and max_step must be > 0")
        if self.base not in (E2_PLUS, E2_MINUS):
            raise ValueError(f"base must be {E2_PLUS!r} or {E2_MINUS!r}")

    @property
    def x(self) -> np.ndarray:
        # built from symmetric offsets so that x[::-1] == -x exactly
        x = (np.arange(self.nx) - 0.5 * (self.nx - 1)) * self.dx
        x[0], x[-1] = -self.half_length, self.half_length
        return x

    @property
    def dx(self) -> float:
        return 2.0 * self.half_length / (self.nx - 1)

    def with_(self, **changes) -> "PdeConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["params"] = self.params.to_dict()
        return out

    @classmethod
    def keys(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls) if f.name != "params")

    @classmethod
    def from_dict(cls, data: dict) -> "PdeConfig":
        data = dict(data)
        unknown = set(data) - set(cls.keys()) - {"params"}
        if unknown:
            raise KeyError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        params = ModelParams.from_dict(data.pop("params", {}))
        return cls(params=params, **data)


@dataclass
class FieldState:
    x: np.ndarray
    m: np.ndarray
    M: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.m = np.asarray(self.m, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        if not (self.x.shape == self.m.shape == self.M.shape) or self.x.ndim != 1:
            raise ValueError("x, m and M must be 1-D arrays of equal length")
        if not (np.all(np.isfinite(self.m)) and np.all(np.isfinite(self.M))):
            raise DomainError("field contains non-finite values")


@dataclass
class SpaceTimeRecord:
    times: np.ndarray
    x: np.ndarray
    m: np.ndarray  # (n_times, nx)
    M: np.ndarray
    config: PdeConfig

    def __post_init__(self):
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")

    def __len__(self):
        return self.times.size

    def snapshot(self, i: int) -> FieldState:
        return FieldState(self.x, self.m[i], self.M[i], float(self.times[i]))

    def rows(self):
        for k, t in enumerate(self.times):
            for j, xv in enumerate(self.x):
                yield (t, xv, self.m[k, j], self.M[k, j])


SPACETIME_CSV_HEADER = ("t", "x", "m", "M")


class PdeBlowUpError(IntegrationError):
    """Non-finite solution; ``field`` and ``node`` locate the first bad value."""

    def __init__(self, message, t, node, field_name):
        super().__init__(message, t, node)
        self.node = node
        self.field = field_name


class Outcome(str, Enum):
    RETURN_TO_HOMOGENEOUS = "ReturnToHomogeneous"
    SUSTAINED_OSCILLATION = "SustainedOscillation"
    DECAYING_OSCILLATION = "DecayingOscillation"
    PROPAGATING_PULSES = "PropagatingPulses"


def base_state(cfg: PdeConfig) -> ReducedState:
    """The homogeneous steady state selected by ``cfg.base``."""
    for q in solve_E2(cfg.params):
        if q.branch == cfg.base and q.physical:
            return q.point
    raise DomainError(f"no physical {cfg.base} equilibrium for these parameters")


def gaussian_ic(cfg: PdeConfig, base: Optional[ReducedState] = None,
                psi: Optional[float] = None, sigma_ic: Optional[float] = None) -> FieldState:
    """Steady state plus ``psi * exp(-x^2 / (2 sigma_ic^2))`` in both fields."""
    base = base_state(cfg) if base is None else ReducedState(*base)
    psi = cfg.psi if psi is None else psi
    sigma_ic = cfg.sigma_ic if sigma_ic is None else sigma_ic
    if psi < 0 or not sigma_ic > 0:
        raise ValueError("psi must be >= 0 and sigma_ic > 0")
    dm, dM = reduced_rates(base.m, base.M, cfg.params)
    if not max(abs(dm), abs(dM)) < 1e-8:
        raise DomainError("base is not a homogeneous steady state")
    x = cfg.x
    bump = psi * np.exp(-x * x / (2.0 * sigma_ic * sigma_ic))
    return FieldState(x, base.m + bump, base.M + bump, 0.0)


def homogeneous_ic(cfg: PdeConfig, state) -> FieldState:
    x = cfg.x
    return FieldState(x, np.full_like(x, float(state[0])), np.full_like(x, float(state[1])))


def laplacian_neumann(u, dx: float) -> np.ndarray:
    """Second difference with mirror ghosts ``u[-1] = u[1]``, ``u[n] = u[n-2]``."""
    u = np.asarray(u, dtype=float)
    if u.size < 3:
        raise ValueError("need at least 3 nodes")
    out = np.empty_like(u)
    out[1:-1] = u[:-2] - 2.0 * u[1:-1] + u[2:]
    out[0] = 2.0 * (u[1] - u[0])
    out[-1] = 2.0 * (u[-2] - u[-1])
    return out / (dx * dx)


def _make_rhs(cfg: PdeConfig) -> Callable:
    nx, dx, p = cfg.nx, cfg.dx, cfg.params
    d1, d2, reaction = cfg.d1, cfg.d2, cfg.reaction

    def rhs(t, y):
        m, M = y[:nx], y[nx:]
        out = np.empty_like(y)
        if reaction:
            rm, rM = reduced_rates(m, M, p)
            out[:nx], out[nx:] = rm, rM
        else:
            out[:] = 0.0
        if d1:
            out[:nx] += d1 * laplacian_neumann(m, dx)
        if d2:
            out[nx:] += d2 * laplacian_neumann(M, dx)
        return out

    return rhs


def pde_rhs(state: FieldState, cfg: PdeConfig) -> tuple[np.ndarray, np.ndarray]:
    """Nodewise reduced reaction plus diffusion of each field."""
    if state.m.size != cfg.nx:
        raise ValueError("field length does not match cfg.nx")
    for name, arr in (("m", state.m), ("M", state.M)):
        if np.any(arr < -1e-12):
            raise DomainError(f"state component {name} is negative")
    y = np.concatenate([np.clip(state.m, 0, None), np.clip(state.M, 0, None)])
    out = _make_rhs(cfg)(state.t, y)
    return out[:cfg.nx], out[cfg.nx:]


def pde_run(cfg: PdeConfig, ic: Optional[FieldState] = None,
            stop: Optional[Callable[[float, np.ndarray, np.ndarray], bool]] = None) -> SpaceTimeRecord:
    """Integrate the method-of-lines system and record snapshots every ``output_dt``.

    ``stop(t, m, M)`` is checked after each accepted step; returning True ends
    the run early (the record then holds the snapshots reached so far).
    """
    ic = gaussian_ic(cfg) if ic is None else ic
    if ic.m.size != cfg.nx:
        raise ValueError("initial field length does not match cfg.nx")
    nx = cfg.nx
    n_out = int(math.floor(cfg.t_end / cfg.output_dt + 1e-9))
    t_eval = np.arange(n_out + 1) * cfg.output_dt
    if t_eval[-1] < cfg.t_end * (1 - 1e-12):
        t_eval = np.append(t_eval, cfg.t_end)
    dmax = max(cfg.d1, cfg.d2)
    first_step = 0.2 * cfg.dx ** 2 / dmax if dmax > 0 else None
    callback = None
    if stop is not None:
        def callback(solver):
            return bool(stop(solver.t, solver.y[:nx], solver.y[nx:]))
    y0 = np.concatenate([ic.m, ic.M])
    try:
        times, states, _ = solve_ode(_make_rhs(cfg), y0, cfg.t_end, t_eval, rtol=cfg.rtol,
                                     atol=cfg.atol, first_step=first_step, max_step=cfg.max_step,
                                     callback=callback)
    except IntegrationError as exc:
        idx = exc.index
        if idx is None:
            raise
        node, name = (idx, "m") if idx < nx else (idx - nx, "M")
        raise PdeBlowUpError(f"non-finite {name} at node {node} (x={cfg.x[node]:.6g}), t={exc.t:.9g}",
                             exc.t, node, name) from exc
    return SpaceTimeRecord(times, cfg.x, states[:, :nx].copy(), states[:, nx:].copy(), cfg)


# --------------------------------------------------------------------------
# qualitative reading of a run

SUSTAINED_AMPLITUDE = 1e-3
HOMOGENEOUS_VARIANCE = 1e-6
HOMOGENEOUS_FLOOR = 1e-12
MIN_SNAPSHOTS = 5


def _count_pulses(profile: np.ndarray) -> int:
    """Humps of ``profile`` above the midpoint of its range."""
    lo, hi = float(np.min(profile)), float(np.max(profile))
    if hi - lo <= 1e-9 * max(1.0, abs(hi)):
        return 0
    above = profile > 0.5 * (lo + hi)
    return int(np.count_nonzero(above[1:] & ~above[:-1]) + int(above[0]))


def spacetime_diagnostics(rec: SpaceTimeRecord) -> dict:
    if len(rec) < MIN_SNAPSHOTS:
        raise ValueError(f"record too short: {len(rec)} snapshots, need {MIN_SNAPSHOTS}")
    n = len(rec)
    tail = rec.m[int(math.floor(0.8 * (n - 1))):]
    boundary_amp = float(max(np.ptp(tail[:, 0]), np.ptp(tail[:, -1])))
    final = rec.m[-1]
    mid = rec.m[n // 2]
    return {
        "boundary_amplitude": boundary_amp,
        "final_variance": float(np.var(final)),
        "final_mean": float(np.mean(final)),
        "mid_pulses": _count_pulses(mid),
    }


def classify_spacetime(rec: SpaceTimeRecord) -> Outcome:
    """Qualitative outcome of a run.

    Checked in order: oscillation of the boundary nodes over the last fifth of
    the record, spatial flatness of the final snapshot, and the number of
    humps in the middle snapshot.
    """
    diag = spacetime_diagnostics(rec)
    if diag["boundary_amplitude"] > SUSTAINED_AMPLITUDE:
        return Outcome.SUSTAINED_OSCILLATION
    if diag["final_variance"] <= HOMOGENEOUS_VARIANCE * abs(diag["final_mean"]) + HOMOGENEOUS_FLOOR:
        return Outcome.RETURN_TO_HOMOGENEOUS
    if diag["mid_pulses"] >= 2:
        return Outcome.PROPAGATING_PULSES
    return Outcome.DECAYING_OSCILLATION


def first_arrival_time(rec: SpaceTimeRecord, threshold: float = 1e-2) -> float:
    """First snapshot time at which a boundary node's m departs from its start by ``threshold``."""
    dev = np.maximum(np.abs(rec.m[:, 0] - rec.m[0, 0]), np.abs(rec.m[:, -1] - rec.m[0, -1]))
    hit = np.nonzero(dev > threshold)[0]
    return float(rec.times[hit[0]]) if hit.size else math.inf


def boundary_arrival_stop(ic: FieldState, threshold: float = 1e-2, margin: float = 0.0):
    """``stop`` hook for :func:`pde_run` ending the run ``margin`` after the boundary moves.

    Pass ``margin`` of at least one output interval so the crossing is
    captured by a recorded snapshot.
    """
    m_left, m_right = float(ic.m[0]), float(ic.m[-1])
    hit = []

    def stop(t, m, M):
        if not hit and max(abs(m[0] - m_left), abs(m[-1] - m_right)) > threshold:
            hit.append(t)
        return bool(hit) and t >= hit[0] + margin

    return stop
