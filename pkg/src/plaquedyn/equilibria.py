"""Equilibria of the reduced system and their linear stability."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence

from .model_core import ModelParams, ReducedState, jacobian_entries, jacobian_reduced, reduced_rates

__all__ = [
    "QuadraticCoeffs",
    "StabilityClass",
    "Equilibrium",
    "NotAnEquilibriumError",
    "quadratic_coeffs",
    "solve_E2",
    "e1_equilibrium",
    "classify",
    "classify_jacobian",
    "eigenvalues",
    "m_from_M",
    "theorem2_conditions",
    "equilibrium_csv_rows",
    "EQUILIBRIUM_CSV_HEADER",
]

E1 = "E1"
E2_PLUS = "E2+"
E2_MINUS = "E2-"

# Residual allowed by classify() before a point is rejected.
EQUILIBRIUM_TOL = 1e-8


class NotAnEquilibriumError(ValueError):
    pass


class StabilityClass(str, Enum):
    STABLE_NODE = "StableNode"
    STABLE_FOCUS = "StableFocus"
    UNSTABLE_NODE = "UnstableNode"
    UNSTABLE_FOCUS = "UnstableFocus"
    SADDLE = "Saddle"
    NON_HYPERBOLIC = "NonHyperbolic"

    @property
    def is_stable(self) -> bool:
        return self in (StabilityClass.STABLE_NODE, StabilityClass.STABLE_FOCUS)

    @property
    def is_unstable(self) -> bool:
        return self in (StabilityClass.UNSTABLE_NODE, StabilityClass.UNSTABLE_FOCUS)


class QuadraticCoeffs(NamedTuple):
    """``A M^2 + B M + C = 0`` satisfied by the M-coordinate of interior equilibria."""

    A: float
    B: float
    C: float

    @property
    def discriminant(self) -> float:
        return self.B * self.B - 4.0 * self.A * self.C

    def __call__(self, M: float) -> float:
        return (self.A * M + self.B) * M + self.C


@dataclass(frozen=True)
class Equilibrium:
    point: ReducedState
    branch: str
    eigenvalues: tuple[complex, complex]
    stability: StabilityClass
    physical: bool = True

    @property
    def m(self) -> float:
        return self.point.m

    @property
    def M(self) -> float:
        return self.point.M


def quadratic_coeffs(p: ModelParams) -> QuadraticCoeffs:
    a, b, c, d, e, f, eps, s = p.a, p.b, p.c, p.d, p.e, p.f, p.epsilon, p.sigma
    A = b * c * e * s + b * e * eps * s + b * c * e + b * e * eps
    B = (a * c * e * f + b * c * d * s + b * d * eps * s - a * b * d + b * c * d
         + b * c * s + b * d * eps + b * eps * s + b * c + b * eps)
    C = a * c * f
    return QuadraticCoeffs(A, B, C)


def eigenvalues(trace: float, det: float) -> tuple[complex, complex]:
    """Eigenvalues of a real 2x2 matrix from its trace and determinant.

    The first entry has the larger real part (or positive imaginary part).
    """
    half = 0.5 * trace
    disc = half * half - det
    if disc >= 0:
        r = math.sqrt(disc)
        # avoid cancellation for the smaller-magnitude root
        big = half + math.copysign(r, half) if half != 0 else r
        if big == 0.0:
            return complex(0.0), complex(0.0)
        small = det / big
        lo, hi = sorted((big, small))
        return complex(hi), complex(lo)
    w = math.sqrt(-disc)
    return complex(half, w), complex(half, -w)


def classify_jacobian(trace: float, det: float, scale: float = 1.0) -> StabilityClass:
    """Planar classification from trace and determinant.

    ``scale`` is a magnitude for the Jacobian entries; trace or determinant
    below round-off relative to it count as zero.
    """
    tiny = 1e-13 * max(scale, 1e-300)
    if det < -tiny * tiny:
        return StabilityClass.SADDLE
    if abs(det) <= tiny * tiny or abs(trace) <= tiny:
        return StabilityClass.NON_HYPERBOLIC
    focus = trace * trace - 4.0 * det < 0
    if trace < 0:
        return StabilityClass.STABLE_FOCUS if focus else StabilityClass.STABLE_NODE
    return StabilityClass.UNSTABLE_FOCUS if focus else StabilityClass.UNSTABLE_NODE


def _jacobian_scale(J) -> float:
    return max(abs(J.psi11), abs(J.psi12), abs(J.psi21), abs(J.psi22))


def _residual(point: Sequence[float], p: ModelParams) -> float:
    dm, dM = reduced_rates(float(point[0]), float(point[1]), p)
    return max(abs(dm), abs(dM))


def _make(point: ReducedState, branch: str, p: ModelParams, physical: bool) -> Equilibrium:
    # unchecked: non-physical roots have negative coordinates
    J = jacobian_entries(point[0], point[1], p)
    ev = eigenvalues(J.trace, J.det)
    cls = classify_jacobian(J.trace, J.det, _jacobian_scale(J))
    return Equilibrium(point, branch, ev, cls, physical)


def m_from_M(M: float, p: ModelParams) -> float:
    """m-coordinate of an interior equilibrium from its M-coordinate (NaN where undefined)."""
    c, e, f = p.c, p.e, p.f
    den = c * (M * e + p.d + 1.0)
    if den == 0.0:
        return math.nan
    return (-M * c * e * f + M * p.b * p.d - c * f) / den


def solve_E2(p: ModelParams) -> list[Equilibrium]:
    """Interior equilibria ``(m2, M2)``.

    Returns up to two equilibria, ``E2+`` (root with ``+sqrt``) first.
    Roots with a negative coordinate are kept with ``physical=False``.
    """
    if p.c <= 0:
        raise ValueError("solve_E2 requires c > 0")
    A, B, C = quadratic_coeffs(p)
    roots: list[tuple[float, str]] = []
    if A == 0.0:
        if B != 0.0:
            roots.append((-C / B, E2_PLUS))
    else:
        disc = B * B - 4.0 * A * C
        if disc < 0:
            return []
        if disc == 0.0:
            roots.append((-B / (2.0 * A), E2_PLUS))
        else:
            sq = math.sqrt(disc)
            q = -0.5 * (B + math.copysign(sq, B))
            r_big, r_small = q / A, C / q
            # q has the sign of -B: for B < 0 q/A is the "+sqrt" root
            if B < 0:
                roots += [(r_big, E2_PLUS), (r_small, E2_MINUS)]
            else:
                roots += [(r_small, E2_PLUS), (r_big, E2_MINUS)]
    out = []
    for M, label in roots:
        m = m_from_M(M, p)
        if math.isnan(m):
            continue  # root sits on the pole of the m-formula: no finite equilibrium
        physical = m >= 0 and M >= 0
        out.append(_make(ReducedState(m, M), label, p, physical))
    return out


def e1_equilibrium(M1: float, p: ModelParams) -> Equilibrium:
    """Point ``(0, M1)`` on the invariant M-axis; eigenvalues ``-(eps + c)`` and 0."""
    if not M1 >= 0:
        raise ValueError("M1 must be >= 0")
    ev = (complex(0.0), complex(-p.epsilon - p.c))
    return Equilibrium(ReducedState(0.0, float(M1)), E1, ev, StabilityClass.NON_HYPERBOLIC)


def classify(point: Sequence[float], p: ModelParams) -> StabilityClass:
    res = _residual(point, p)
    if not res < EQUILIBRIUM_TOL:
        raise NotAnEquilibriumError(f"not an equilibrium: residual {res:.3e}")
    J = jacobian_reduced(point, p)
    return classify_jacobian(J.trace, J.det, _jacobian_scale(J))


def theorem2_conditions(point: Sequence[float], p: ModelParams) -> tuple[bool, bool]:
    """Sufficient conditions for local asymptotic stability of an interior equilibrium.

    Condition 1 makes ``psi11`` negative; condition 2 makes ``psi21`` positive.
    Together with the sign-definite ``psi12, psi22 < 0`` they give trace < 0
    and det > 0.
    """
    res = _residual(point, p)
    if not res < EQUILIBRIUM_TOL:
        raise NotAnEquilibriumError(f"not an equilibrium: residual {res:.3e}")
    m2, M2 = float(point[0]), float(point[1])
    a, b, c, d, e, f = p.a, p.b, p.c, p.d, p.e, p.f
    den = M2 * e * f + M2 * e * m2 + d * m2 + f + m2
    lhs1 = d * a * m2 * (2 * M2 * e * f + M2 * e * m2 + d * m2 + 2 * f + m2) / (den ** 2 * (1 + p.sigma))
    cond1 = lhs1 < p.epsilon + c
    rhs2 = M2 * b * d * f * (M2 * e + 1) / (e * (f + m2) * M2 + f + (d + 1) * m2) ** 2
    cond2 = c > rhs2
    return cond1, cond2


EQUILIBRIUM_CSV_HEADER = ("branch", "m", "M", "re_lambda1", "im_lambda1",
                          "re_lambda2", "im_lambda2", "class", "physical")


def equilibrium_csv_rows(eqs: Sequence[Equilibrium]) -> list[tuple]:
    rows = []
    for q in eqs:
        l1, l2 = q.eigenvalues
        rows.append((q.branch, q.m, q.M, l1.real, l1.imag, l2.real, l2.imag,
                     q.stability.value, int(q.physical)))
    return rows

