"""Time integration of the full and reduced systems.

The stepper is an embedded Dormand-Prince 5(4) pair with a PI step-size
controller and cubic Hermite dense output. It is deliberately small: the
model is non-stiff at the parameters of interest, and the PDE solver reuses
the same stepper on the method-of-lines system.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .equilibria import StabilityClass, solve_E2
from .model_core import ModelParams, foam_accumulation, jacobian_entries, reduced_rates

__all__ = [
    "IntegrationError",
    "DormandPrince45",
    "Trajectory",
    "LimitCycle",
    "integrate",
    "solve_ode",
    "average_divergence",
    "find_unstable_limit_cycle",
]

# Butcher tableau of the Dormand-Prince pair.
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_BETA = 0.04  # PI controller: integral exponent 0.2 - 0.75*beta, proportional beta
_ALPHA = 0.2 - 0.75 * _BETA
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0


class IntegrationError(RuntimeError):
    """Step-size underflow or non-finite solution.

    Attributes
    ----------
    t : float
        Time at which the integrator gave up.
    index : int or None
        First state component that became non-finite, when known.
    """

    def __init__(self, message: str, t: float, index: Optional[int] = None):
        super().__init__(message)
        self.t = t
        self.index = index


class DormandPrince45:
    """Single-direction (increasing time) adaptive stepper."""

    def __init__(self, fun: Callable, t0: float, y0, t_bound: float, rtol: float = 1e-8,
                 atol: Optional[float] = None, first_step: Optional[float] = None,
                 max_step: float = math.inf):
        if not t_bound > t0:
            raise ValueError("t_bound must exceed t0")
        self.fun = fun
        self.t = float(t0)
        self.y = np.array(y0, dtype=float)
        self.t_bound = float(t_bound)
        self.rtol = float(rtol)
        self.atol = self.rtol * 1e-3 if atol is None else float(atol)
        self.max_step = max_step
        self.f = np.asarray(fun(self.t, self.y), dtype=float)
        self.nfev = 1
        self.naccept = 0
        self.nreject = 0
        self._err_prev = 1e-4
        self.t_old = self.t
        self.y_old = self.y.copy()
        self.f_old = self.f.copy()
        self.h = first_step if first_step is not None else self._initial_step()
        self.h = min(self.h, self.max_step, self.t_bound - self.t)

    def _scale(self, y0, y1=None):
        mag = np.abs(y0) if y1 is None else np.maximum(np.abs(y0), np.abs(y1))
        return self.atol + self.rtol * mag

    @staticmethod
    def _rms(x) -> float:
        return float(np.sqrt(np.mean(np.square(x))))

    def _initial_step(self) -> float:
        sc = self._scale(self.y)
        d0 = self._rms(self.y / sc)
        d1 = self._rms(self.f / sc)
        h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
        h0 = min(h0, self.t_bound - self.t)
        y1 = self.y + h0 * self.f
        f1 = np.asarray(self.fun(self.t + h0, y1), dtype=float)
        self.nfev += 1
        d2 = self._rms((f1 - self.f) / sc) / h0
        if d1 <= 1e-15 and d2 <= 1e-15:
            h1 = max(1e-6, h0 * 1e-3)
        else:
            h1 = (0.01 / max(d1, d2)) ** 0.2
        return min(100 * h0, h1)

    def _attempt(self, h: float):
        t, y, f = self.t, self.y, self.f
        K = np.empty((7,) + y.shape)
        K[0] = f
        for i in range(1, 7):
            dy = np.tensordot(_A[i], K[:i], axes=(0, 0)) * h
            K[i] = self.fun(t + _C[i] * h, y + dy)
        self.nfev += 6
        y_new = y + h * np.tensordot(_B5[:6], K[:6], axes=(0, 0))
        err = h * np.tensordot(_E, K, axes=(0, 0))
        return y_new, K[6], err

    def step(self) -> bool:
        """Take one accepted step. Returns False once ``t_bound`` is reached."""
        if self.t >= self.t_bound:
            return False
        h = min(self.h, self.max_step)
        while True:
            if self.t_bound - self.t - h < 1e-12 * max(1.0, abs(self.t)):
                h = self.t_bound - self.t
            h_min = 16 * np.spacing(max(abs(self.t), 1.0))
            if h < h_min:
                raise IntegrationError(f"step size underflow at t={self.t:.9g}", self.t,
                                       self._bad_index)
            y_new, f_new, err = self._attempt(h)
            if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
                bad = ~(np.isfinite(y_new) & np.isfinite(f_new))
                self._bad_index = int(np.argmax(bad))
                self.nreject += 1
                h *= 0.25
                continue
            self._bad_index = None
            en = self._rms(err / self._scale(self.y, y_new))
            if en <= 1.0:
                en = max(en, 1e-10)
                factor = _SAFETY * en ** (-_ALPHA) * self._err_prev ** _BETA
                factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
                if self.nreject and self._just_rejected:
                    factor = min(factor, 1.0)
                self._err_prev = en
                self._just_rejected = False
                break
            self.nreject += 1
            self._just_rejected = True
            h *= max(_MIN_FACTOR, _SAFETY * en ** (-_ALPHA))
        self.t_old, self.y_old, self.f_old = self.t, self.y, self.f
        self.t = self.t + h if h != self.t_bound - self.t_old else self.t_bound
        self.y, self.f = y_new, f_new
        self.h = h * factor
        self.naccept += 1
        return True

    _bad_index: Optional[int] = None
    _just_rejected: bool = False

    def dense(self, t):
        """Cubic Hermite interpolant on the last accepted step."""
        h = self.t - self.t_old
        s = (np.asarray(t, dtype=float) - self.t_old) / h
        s = s[..., None] if np.ndim(s) and self.y.ndim else s
        h00 = (1 + 2 * s) * (1 - s) ** 2
        h10 = s * (1 - s) ** 2
        h01 = s * s * (3 - 2 * s)
        h11 = s * s * (s - 1)
        return h00 * self.y_old + h10 * h * self.f_old + h01 * self.y + h11 * h * self.f


def solve_ode(fun: Callable, y0, t_end: float, t_eval: Sequence[float], rtol: float = 1e-8,
              atol: Optional[float] = None, first_step: Optional[float] = None,
              max_step: float = math.inf, callback: Optional[Callable] = None):
    """Integrate ``y' = fun(t, y)`` from 0 to ``t_end`` sampling at ``t_eval``.

    ``callback(stepper)`` is invoked after every accepted step; returning True
    stops the integration early. Returns ``(times, states, stepper)`` for the
    samples actually reached.
    """
    t_eval = np.asarray(t_eval, dtype=float)
    if np.any(np.diff(t_eval) <= 0):
        raise ValueError("t_eval must be strictly increasing")
    solver = DormandPrince45(fun, 0.0, y0, t_end, rtol=rtol, atol=atol,
                             first_step=first_step, max_step=max_step)
    y0 = solver.y.copy()
    out = np.empty((t_eval.size,) + y0.shape)
    k = 0
    while k < t_eval.size and t_eval[k] <= 0.0:
        out[k] = y0
        k += 1
    while k < t_eval.size:
        solver.step()
        j = k
        while j < t_eval.size and t_eval[j] <= solver.t:
            j += 1
        if j > k:
            out[k:j] = solver.dense(t_eval[k:j])
            if t_eval[j - 1] == solver.t:
                out[j - 1] = solver.y
            k = j
        if callback is not None and callback(solver):
            break
        if solver.t >= solver.t_bound:
            break
    return t_eval[:k], out[:k], solver


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    system: str
    params: ModelParams
    ic: tuple
    tol: float
    columns: tuple = ()
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.times.ndim != 1 or self.states.shape[0] != self.times.size:
            raise ValueError("state count must equal timestamp count")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not self.columns:
            self.columns = ("m", "M", "L", "F")[: self.states.shape[1]]

    def __len__(self):
        return self.times.size

    def header(self) -> dict:
        return {"system": self.system, "params": self.params.to_dict(), "ic": list(self.ic),
                "tol": self.tol, **self.metadata}

    def rows(self):
        for t, s in zip(self.times, self.states):
            yield (t, *s)


def integrate(system: str, ic: Sequence[float], p: ModelParams, t_end: float,
              tol: float = 1e-8, dt_out: Optional[float] = None,
              t_eval: Optional[Sequence[float]] = None) -> Trajectory:
    """Integrate the ``"reduced"`` (m, M) or ``"full"`` (m, M, L[, F]) system.

    For the full system the foam-cell column is obtained afterwards by
    quadrature of its decoupled rate along the sampled trajectory.
    """
    if system not in ("reduced", "full"):
        raise ValueError(f"unknown system {system!r}")
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not 1e-13 < tol < 1e-2:
        raise ValueError("tol must lie in (1e-13, 1e-2)")
    ic = tuple(float(v) for v in ic)
    if any(not math.isfinite(v) or v < 0 for v in ic):
        raise ValueError("initial condition must be finite and nonnegative")
    if t_eval is None:
        dt_out = t_end / 1000 if dt_out is None else dt_out
        n = int(round(t_end / dt_out))
        t_eval = np.linspace(0.0, t_end, n + 1) if abs(n * dt_out - t_end) < 1e-9 * t_end \
            else np.append(np.arange(0.0, t_end, dt_out), t_end)

    if system == "reduced":
        if len(ic) != 2:
            raise ValueError("reduced system needs (m, M)")
        y0 = ic

        def fun(t, y):
            return np.array(reduced_rates(y[0], y[1], p))
    else:
        if len(ic) not in (3, 4):
            raise ValueError("full system needs (m, M, L[, F])")
        y0 = ic[:3]

        def fun(t, y):
            m, M, L = y
            uptake = L / (1.0 + L)
            return np.array([
                (p.a * uptake / (1.0 + p.sigma) - p.epsilon - p.c) * m,
                p.c * m - p.b * M * uptake,
                p.d * m / (p.f + m) - p.e * L * M - L,
            ])

    # cap the step so that an orbit resting on an equilibrium cannot grow the
    # step past the explicit stability limit while the error estimate is ~0
    times, states, solver = solve_ode(fun, y0, t_end, t_eval, rtol=tol, max_step=t_end / 100)
    if system == "full":
        F0 = ic[3] if len(ic) == 4 else 0.0
        F = foam_accumulation(times, states, p, F0=F0)
        states = np.column_stack([states, F])
    return Trajectory(times, states, system, p, ic, tol,
                      metadata={"steps": solver.naccept, "rejected": solver.nreject})


def average_divergence(traj: Trajectory, p: Optional[ModelParams] = None) -> float:
    """Time average of the local divergence along a reduced trajectory (trapezoidal)."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    p = traj.params if p is None else p
    m, M = traj.states[:, 0], traj.states[:, 1]
    J = jacobian_entries(np.clip(m, 0.0, None), np.clip(M, 0.0, None), p)
    div = np.asarray(J.trace, dtype=float)
    if len(traj) == 1:
        return float(div[0])
    t = traj.times
    return float(np.sum(0.5 * (div[1:] + div[:-1]) * np.diff(t)) / (t[-1] - t[0]))


@dataclass
class LimitCycle:
    orbit: np.ndarray  # (n, 2) samples over one period, first == last up to closure
    times: np.ndarray
    period: float
    amplitude: float
    stability: str
    section_point: tuple
    crossings: list = field(default_factory=list)

    @property
    def closure(self) -> float:
        return float(np.linalg.norm(self.orbit[-1] - self.orbit[0]))


class _Escaped(Exception):
    pass


def _return_map(fun, p, m0, M_sec, scale, tol, t_max, sign_fun):
    """Follow ``fun`` from (m0, M_sec) to the next valid section crossing.

    A crossing is valid when ``sign_fun`` (the forward-time dm/dt) is positive
    there. Returns (m1, return time, solver trace of accepted steps).
    """
    y0 = np.array([m0, M_sec])
    solver = DormandPrince45(fun, 0.0, y0, t_max, rtol=tol, atol=tol * scale)
    steps = [(0.0, y0.copy())]
    while solver.step():
        y = solver.y
        steps.append((solver.t, y.copy()))
        if y[0] < -1e-6 * scale or y[1] < -1e-6 * scale or np.max(np.abs(y)) > 1e3 * scale:
            raise _Escaped()
        g_old = solver.y_old[1] - M_sec
        g_new = y[1] - M_sec
        if solver.t_old > 0 and g_old != 0 and g_old * g_new <= 0:
            t_hit = _refine_crossing(solver, fun, M_sec)
            y_hit = _step_to(solver, fun, t_hit)
            if sign_fun(y_hit) > 0:
                return float(y_hit[0]), t_hit, steps, y_hit
    raise _Escaped()


def _step_to(solver, fun, t):
    """Fresh Dormand-Prince step from the start of the last step to ``t``."""
    h = t - solver.t_old
    if h == 0:
        return solver.y_old.copy()
    y, f = solver.y_old, solver.f_old
    K = [f]
    for i in range(1, 6):
        dy = sum(a * k for a, k in zip(_A[i], K)) * h
        K.append(np.asarray(fun(solver.t_old + _C[i] * h, y + dy)))
    return y + h * sum(b * k for b, k in zip(_B5[:6], K))


def _refine_crossing(solver, fun, M_sec) -> float:
    """Section time: bisection on the Hermite interpolant, then one Newton step in time."""
    lo, hi = solver.t_old, solver.t
    g_lo = solver.y_old[1] - M_sec
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        g_mid = solver.dense(mid)[1] - M_sec
        if g_mid == 0:
            lo = hi = mid
            break
        if (g_mid > 0) == (g_lo > 0):
            lo, g_lo = mid, g_mid
        else:
            hi = mid
    t_star = 0.5 * (lo + hi)
    y_star = _step_to(solver, fun, t_star)
    dM = fun(t_star, y_star)[1]
    if dM != 0:
        t_star -= (y_star[1] - M_sec) / dM
    return min(max(t_star, solver.t_old), solver.t)


def find_unstable_limit_cycle(p: ModelParams, seed: Optional[Sequence[float]] = None,
                              tol: float = 1e-10, t_max: float = 2.0e5,
                              n_samples: int = 400) -> Optional[LimitCycle]:
    """Locate the unstable cycle around the stable focus ``E2+`` by reversing time.

    Under time reversal the focus repels and the unstable cycle attracts, so a
    reversed trajectory started just outside the focus winds onto the cycle.
    The cycle is then pinned down as a fixed point of the Poincare return map
    on the section ``M = M_p`` (branch with forward ``dm/dt > 0``), using
    successive crossings first and a secant iteration to finish.

    Returns None when no cycle is found within the time budget, which is the
    expected outcome beyond the homoclinic termination.
    """
    eqs = [q for q in solve_E2(p) if q.branch == "E2+" and q.physical]
    if not eqs:
        raise ValueError("no physical E2+ equilibrium at these parameters")
    focus = eqs[0]
    if focus.stability is not StabilityClass.STABLE_FOCUS:
        raise ValueError(f"E2+ is {focus.stability.value}, expected a stable focus")
    m_p, M_p = focus.point
    scale = max(m_p, M_p, 1.0)

    def reverse(t, y):
        dm, dM = reduced_rates(y[0], y[1], p)
        return np.array([-dm, -dM])

    def forward_mdot(y):
        return reduced_rates(y[0], y[1], p)[0]

    if seed is None:
        m0 = m_p + 1e-3 * scale
    else:
        # project the seed onto the section on the valid side
        m0 = m_p + max(abs(seed[0] - m_p), float(np.hypot(seed[0] - m_p, seed[1] - M_p)))
    if forward_mdot((m0, M_p)) <= 0:
        m0 = 2 * m_p - m0
    # nudge to the side where forward dm/dt > 0
    if forward_mdot((m0, M_p)) <= 0:
        raise ValueError("could not place the seed on the Poincare section")

    budget = [t_max]
    crossings = []

    def gap(r):
        """P(m) - m at m = m_p + r; None if the reversed orbit escapes."""
        if budget[0] <= 0:
            raise _Escaped()
        try:
            m1, T, _, _ = _return_map(reverse, p, m_p + r, M_p, scale, tol, budget[0], forward_mdot)
        except _Escaped:
            return None, None
        budget[0] -= T
        crossings.append((m_p + r, m1, T))
        return m1 - (m_p + r), T

    try:
        # bracket: inside the cycle the reversed map expands (gap > 0)
        r = m0 - m_p
        g, T = gap(r)
        lo = hi = None
        while g is not None and g < 0 and r > 1e-9 * scale:
            hi, g_hi = r, g
            r *= 0.5
            g, T = gap(r)
        if g is None or g < 0:
            return None
        lo, g_lo = r, g
        if hi is None:
            r_up = lo
            while True:
                r_up *= 2.0
                g, T = gap(r_up)
                if g is None:
                    # escaped: shrink toward the last expanding radius
                    while g is None and r_up - lo > 1e-9 * scale:
                        r_up = 0.5 * (lo + r_up)
                        g, T = gap(r_up)
                    if g is None:
                        return None
                if g > 0:
                    lo, g_lo = r_up, g
                    continue
                hi, g_hi = r_up, g
                break
        # Illinois regula falsi on the bracket
        side = 0
        x, gx = lo, g_lo
        for _ in range(200):
            x = (lo * g_hi - hi * g_lo) / (g_hi - g_lo)
            gx, T = gap(x)
            if gx is None:
                hi, g_hi = x, -abs(g_lo)
                continue
            if abs(gx) < 1e-11 * scale or hi - lo < 1e-12 * scale:
                break
            if gx > 0:
                lo, g_lo = x, gx
                if side == 1:
                    g_hi *= 0.5
                side = 1
            else:
                hi, g_hi = x, gx
                if side == -1:
                    g_lo *= 0.5
                side = -1
        else:
            return None
    except (_Escaped, IntegrationError):
        return None
    if gx is None or abs(gx) > 1e-7 * scale:
        return None
    x1, T1 = m_p + x, T
    period = T1
    t_eval = np.linspace(0.0, period, n_samples)
    _, orbit, _ = solve_ode(reverse, [x1, M_p], period, t_eval, rtol=tol, atol=tol * scale)
    orbit = orbit[::-1].copy()  # forward-time ordering
    times = t_eval.copy()
    amplitude = float(np.ptp(orbit[:, 0]))
    return LimitCycle(orbit, times, float(period), amplitude, "unstable", (float(x1), float(M_p)),
                      crossings)


def trajectory_header_json(traj: Trajectory) -> str:
    return json.dumps(traj.header(), sort_keys=True)
