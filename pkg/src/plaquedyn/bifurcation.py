"""Local bifurcations of the reduced system.

Fold points come from the closed-form discriminant of the equilibrium
quadratic; Hopf and neutral-saddle points from sign changes of the Jacobian
trace along each equilibrium branch. Codimension-two points are located by
bisection along the fold curve (Bogdanov-Takens) and along the Hopf curve
(generalized Hopf, where the first Lyapunov coefficient changes sign).
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np

from .equilibria import (
    E2_MINUS,
    E2_PLUS,
    Equilibrium,
    StabilityClass,
    m_from_M,
    quadratic_coeffs,
    solve_E2,
)
from .model_core import ModelParams, jacobian_entries, reduced_rates

__all__ = [
    "Kind",
    "BifurcationPoint",
    "Branch",
    "StabilityMap",
    "Codim2Result",
    "continue_branch",
    "detect_fold",
    "detect_hopf",
    "detect_neutral_saddle",
    "lyapunov_coefficient",
    "first_lyapunov",
    "criticality",
    "stability_map_2d",
    "codim2_curves",
    "NONEXISTENT",
    "NONPHYSICAL",
    "LYAPUNOV_NOISE_FLOOR",
]

NONEXISTENT = "Nonexistent"
NONPHYSICAL = "NonPhysical"

# |l1| below this is indistinguishable from zero after extrapolation.
LYAPUNOV_NOISE_FLOOR = 1e-10

_BISECT_TOL = 1e-12
_SCAN_POINTS = 400


class Kind(str, Enum):
    FOLD = "Fold"
    HOPF = "Hopf"
    NEUTRAL_SADDLE = "NeutralSaddle"
    BOGDANOV_TAKENS = "BogdanovTakens"
    GENERALIZED_HOPF = "GeneralizedHopf"


@dataclass(frozen=True)
class BifurcationPoint:
    kind: Kind
    b: float
    d: Optional[float] = None
    branch: str = ""
    lyapunov: Optional[float] = None
    state: Optional[tuple] = None
    residual: float = 0.0
    param: str = "b"
    value: Optional[float] = None  # location in `param` when it is not b

    @property
    def is_bifurcation(self) -> bool:
        return self.kind is not Kind.NEUTRAL_SADDLE


# --------------------------------------------------------------------------
# scalar root finding


def _bisect(fun: Callable[[float], float], lo: float, hi: float, f_lo: float,
            xtol: float = _BISECT_TOL) -> float:
    """Plain bisection; ``fun`` may return NaN only outside the bracket."""
    for _ in range(200):
        if hi - lo <= xtol * max(1.0, abs(lo)):
            break
        mid = 0.5 * (lo + hi)
        f_mid = fun(mid)
        if f_mid == 0.0:
            return mid
        if not math.isfinite(f_mid):
            raise ArithmeticError("test function undefined inside the bracket")
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _sign_changes(fun: Callable[[float], float], lo: float, hi: float, n: int, extra=()):
    xs = np.unique(np.concatenate([np.linspace(lo, hi, n), [x for x in extra if lo < x < hi]]))
    vals = np.array([fun(x) for x in xs])
    out = []
    for i in range(len(xs) - 1):
        v0, v1 = vals[i], vals[i + 1]
        if math.isfinite(v0) and math.isfinite(v1) and (v0 == 0 or v0 * v1 < 0):
            out.append((xs[i], xs[i + 1], v0))
    return out


def _check_range(rng: Sequence[float], name: str = "b_range") -> tuple[float, float]:
    lo, hi = float(rng[0]), float(rng[1])
    if not (math.isfinite(lo) and math.isfinite(hi) and 0 <= lo < hi):
        raise ValueError(f"{name} must be an increasing interval in [0, inf)")
    return lo, hi


# --------------------------------------------------------------------------
# test functions along the two E2 branches


def _branch_point(p: ModelParams, branch: str) -> Optional[Equilibrium]:
    for q in solve_E2(p):
        if q.branch == branch and q.physical:
            return q
    return None


def _trace_det(p: ModelParams, branch: str):
    q = _branch_point(p, branch)
    if q is None:
        return math.nan, math.nan, None
    J = jacobian_entries(q.m, q.M, p)
    return J.trace, J.det, q


def _discriminant(p: ModelParams) -> float:
    return quadratic_coeffs(p).discriminant


# --------------------------------------------------------------------------
# one-parameter detection


def detect_fold(p: ModelParams, b_range: Sequence[float], param: str = "b",
                n_scan: int = _SCAN_POINTS) -> Optional[BifurcationPoint]:
    """First zero of the quadratic discriminant in ``param`` where B < 0.

    ``B < 0`` selects the collision of the two positive roots. Returns None
    when the discriminant does not change sign over the range.
    """
    lo, hi = _check_range(b_range)

    def disc(v):
        return _discriminant(p.with_(**{param: v}))

    for x0, x1, f0 in _sign_changes(disc, lo, hi, n_scan):
        # the root separation scales like sqrt(disc), so bisect to full precision
        root = _bisect(disc, x0, x1, f0, xtol=1e-16)
        pr = p.with_(**{param: root})
        A, B, C = quadratic_coeffs(pr)
        if B >= 0:
            continue
        M = -B / (2.0 * A)
        m = m_from_M(M, pr)
        if m < 0:
            continue
        return BifurcationPoint(Kind.FOLD, pr.b, pr.d, branch="E2+/E2-", state=(m, M),
                                residual=abs(disc(root)), param=param, value=root)
    return None


def _existence_edges(p: ModelParams, param: str, lo: float, hi: float, n: int) -> list[float]:
    """Samples just either side of each discriminant zero.

    A trace zero squeezed between a fold and the next grid node would
    otherwise be missed, since the branch is absent on one side of it.
    """
    def disc(v):
        return _discriminant(p.with_(**{param: v}))

    out = []
    for x0, x1, f0 in _sign_changes(disc, lo, hi, n):
        root = _bisect(disc, x0, x1, f0)
        delta = 1e-9 * max(abs(root), 1.0)
        out += [root - delta, root + delta]
    return out


def _trace_zero(p: ModelParams, b_range, branch: str, want_det_positive: bool,
                param: str, n_scan: int) -> Optional[BifurcationPoint]:
    lo, hi = _check_range(b_range)

    def trace(v):
        return _trace_det(p.with_(**{param: v}), branch)[0]

    for x0, x1, f0 in _sign_changes(trace, lo, hi, n_scan, _existence_edges(p, param, lo, hi, n_scan)):
        try:
            root = _bisect(trace, x0, x1, f0)
        except ArithmeticError:
            continue
        pr = p.with_(**{param: root})
        tr, det, q = _trace_det(pr, branch)
        if (det > 0) != want_det_positive:
            continue
        kind = Kind.HOPF if det > 0 else Kind.NEUTRAL_SADDLE
        l1 = None
        if kind is Kind.HOPF:
            l1 = _lyapunov_at(pr, q)
        return BifurcationPoint(kind, pr.b, pr.d, branch=branch, lyapunov=l1,
                                state=(q.m, q.M), residual=abs(tr), param=param, value=root)
    return None


def detect_hopf(p: ModelParams, b_range: Sequence[float], param: str = "b",
                n_scan: int = _SCAN_POINTS) -> Optional[BifurcationPoint]:
    """Hopf point on the upper branch ``E2+``, with its first Lyapunov coefficient.

    A zero of the trace with negative determinant is not a Hopf point; if that
    is the only zero in range it is returned as a neutral saddle instead.
    """
    hit = _trace_zero(p, b_range, E2_PLUS, True, param, n_scan)
    if hit is None:
        hit = _trace_zero(p, b_range, E2_PLUS, False, param, n_scan)
    return hit


def detect_neutral_saddle(p: ModelParams, b_range: Sequence[float], param: str = "b",
                          n_scan: int = _SCAN_POINTS) -> Optional[BifurcationPoint]:
    """Zero-trace saddle on the lower branch ``E2-``; not a bifurcation."""
    return _trace_zero(p, b_range, E2_MINUS, False, param, n_scan)


# --------------------------------------------------------------------------
# first Lyapunov coefficient


def _multilinear_fd(fun: Callable, x0: np.ndarray, scale: np.ndarray, h2: float, h3: float):
    """Second and third derivative forms of ``fun`` at ``x0`` by finite differences.

    Directional derivatives use central stencils with one Richardson step
    (error O(h^4)); mixed forms follow from polarization.
    """
    f0 = np.asarray(fun(x0), dtype=float)

    def step_for(w, h):
        return h / max(np.max(np.abs(w) / scale), 1e-300)

    def d2(w, h):
        t = step_for(w, h)
        return (np.asarray(fun(x0 + t * w)) - 2 * f0 + np.asarray(fun(x0 - t * w))) / (t * t)

    def d3(w, h):
        t = step_for(w, h)
        return (np.asarray(fun(x0 + 2 * t * w)) - 2 * np.asarray(fun(x0 + t * w))
                + 2 * np.asarray(fun(x0 - t * w)) - np.asarray(fun(x0 - 2 * t * w))) / (2 * t ** 3)

    def rich(D, w, h):
        if not np.any(w):
            return np.zeros_like(f0)
        return (4.0 * D(w, 0.5 * h) - D(w, h)) / 3.0

    def B_real(u, v):
        return (rich(d2, u + v, h2) - rich(d2, u - v, h2)) / 4.0

    def C_real(x, y, z):
        return (rich(d3, x + y + z, h3) - rich(d3, x + y - z, h3)
                - rich(d3, x - y + z, h3) + rich(d3, x - y - z, h3)) / 24.0

    def B(u, v):
        ur, ui, vr, vi = u.real, u.imag, v.real, v.imag
        return (B_real(ur, vr) - B_real(ui, vi)) + 1j * (B_real(ur, vi) + B_real(ui, vr))

    def C(x, y, z):
        total = np.zeros(f0.shape, dtype=complex)
        for px, xx in ((1, x.real), (1j, x.imag)):
            for py, yy in ((1, y.real), (1j, y.imag)):
                for pz, zz in ((1, z.real), (1j, z.imag)):
                    if np.any(xx) and np.any(yy) and np.any(zz):
                        total += px * py * pz * C_real(xx, yy, zz)
        return total

    return B, C


def _fd_jacobian(fun, x0, scale, h=1e-6):
    n = x0.size
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        t = h * scale[j]
        e[j] = t
        J[:, j] = (np.asarray(fun(x0 + e)) - np.asarray(fun(x0 - e))) / (2 * t)
    return J


def lyapunov_coefficient(fun: Callable, x0: Sequence[float], jac=None,
                         h2: float = 1e-3, h3: float = 1e-2) -> tuple[float, float]:
    """First Lyapunov coefficient of a planar vector field at a Hopf equilibrium.

    Uses the invariant formula with eigenvectors ``A q = i w q``,
    ``A^T p = -i w p`` normalized by ``<p, q> = 1`` and ``|q| = 1``.

    Parameters
    ----------
    fun : callable
        ``fun(x) -> dx/dt`` for ``x`` of shape (2,).
    x0 : sequence
        Equilibrium with a purely imaginary eigenvalue pair.
    jac : array, optional
        Exact Jacobian at ``x0``; finite differences otherwise.
    h2, h3 : float
        Relative steps for the second- and third-order stencils.

    Returns
    -------
    (l1, omega)
        The coefficient and the imaginary part of the critical eigenvalue.
    """
    x0 = np.asarray(x0, dtype=float)
    scale = np.maximum(np.abs(x0), 1.0)
    A = _fd_jacobian(fun, x0, scale) if jac is None else np.asarray(jac, dtype=float)
    w, V = np.linalg.eig(A)
    i = int(np.argmax(w.imag))
    omega = float(w[i].imag)
    if not omega > 0:
        raise ValueError("Jacobian has no complex eigenvalue pair")
    q = V[:, i] / np.linalg.norm(V[:, i])
    wl, W = np.linalg.eig(A.T)
    p = W[:, int(np.argmin(wl.imag))]
    p = p / np.conj(np.vdot(p, q))
    B, C = _multilinear_fd(fun, x0, scale, h2, h3)
    qb = q.conj()
    term1 = np.vdot(p, C(q, q, qb))
    term2 = np.vdot(p, B(q, np.linalg.solve(A, B(q, qb))))
    term3 = np.vdot(p, B(qb, np.linalg.solve(2j * omega * np.eye(2) - A, B(q, q))))
    l1 = (term1 - 2 * term2 + term3).real / (2 * omega)
    return float(l1), omega


def _lyapunov_at(p: ModelParams, q: Equilibrium) -> Optional[float]:
    J = jacobian_entries(q.m, q.M, p)

    def fun(x):
        return np.array(reduced_rates(x[0], x[1], p))

    try:
        return lyapunov_coefficient(fun, (q.m, q.M), jac=J.as_array())[0]
    except ValueError:
        return None


def first_lyapunov(p: ModelParams, hopf: BifurcationPoint) -> float:
    """First Lyapunov coefficient of the reduced system at a located Hopf point."""
    if hopf.kind is not Kind.HOPF:
        raise ValueError(f"expected a Hopf point, got {hopf.kind.value}")
    pr = p.with_(b=hopf.b) if hopf.d is None else p.with_(b=hopf.b, d=hopf.d)
    q = _branch_point(pr, hopf.branch or E2_PLUS)
    if q is None:
        raise ValueError("no equilibrium at the Hopf parameters")
    l1 = _lyapunov_at(pr, q)
    if l1 is None:
        raise ValueError("eigenvalues at the Hopf point are not complex")
    return l1


def criticality(l1: Optional[float]) -> str:
    if l1 is None or not math.isfinite(l1) or abs(l1) < LYAPUNOV_NOISE_FLOOR:
        return "indeterminate"
    return "subcritical" if l1 > 0 else "supercritical"


# --------------------------------------------------------------------------
# branches


@dataclass
class Branch:
    """Equilibria along a parameter sweep, split into two continuous tracks.

    ``points[k]`` has shape (n, 2) with NaN where track ``k`` does not exist.
    """

    param: str
    values: np.ndarray
    points: np.ndarray  # (2, n, 2)
    eigenvalues: np.ndarray  # (2, n, 2) complex
    classes: list  # 2 lists of n class strings
    labels: list  # 2 lists of n branch labels ("" when absent)
    empty: bool = False

    def rows(self):
        for i, v in enumerate(self.values):
            for k in range(2):
                if not self.labels[k][i]:
                    continue
                (m, M), (l1, l2) = self.points[k, i], self.eigenvalues[k, i]
                yield (v, self.labels[k][i], m, M, l1.real, l1.imag, l2.real, l2.imag,
                       self.classes[k][i])


BRANCH_CSV_HEADER = ("b", "branch", "m", "M", "re_lambda1", "im_lambda1",
                     "re_lambda2", "im_lambda2", "class")


def continue_branch(p: ModelParams, b_range: Sequence[float], n: int,
                    param: str = "b") -> Branch:
    """Sample both interior equilibria over ``param`` and keep tracks continuous.

    Tracks are matched between samples by nearest Euclidean distance; a jump
    larger than ten times the previous step re-seeds the tracks from the
    branch labels of ``solve_E2``.
    """
    lo, hi = _check_range(b_range)
    if n < 2:
        raise ValueError("n must be >= 2")
    values = np.linspace(lo, hi, n)
    pts = np.full((2, n, 2), np.nan)
    evs = np.full((2, n, 2), np.nan, dtype=complex)
    classes = [[""] * n for _ in range(2)]
    labels = [[""] * n for _ in range(2)]
    prev = [None, None]
    prev_step = [0.0, 0.0]
    for i, v in enumerate(values):
        eqs = [q for q in solve_E2(p.with_(**{param: v})) if q.physical]
        by_label = {q.branch: q for q in eqs}
        seeded = [by_label.get(E2_PLUS), by_label.get(E2_MINUS)]
        assign = seeded
        if len(eqs) == 2 and prev[0] is not None and prev[1] is not None:
            a0 = np.array(eqs[0].point)
            a1 = np.array(eqs[1].point)
            p0, p1 = np.array(prev[0]), np.array(prev[1])
            keep = np.linalg.norm(a0 - p0) + np.linalg.norm(a1 - p1)
            swap = np.linalg.norm(a1 - p0) + np.linalg.norm(a0 - p1)
            cand = [eqs[0], eqs[1]] if keep <= swap else [eqs[1], eqs[0]]
            jumps = [np.linalg.norm(np.array(cand[k].point) - np.array(prev[k])) for k in range(2)]
            if all(prev_step[k] == 0 or jumps[k] <= 10 * prev_step[k] for k in range(2)):
                assign = cand
        elif len(eqs) == 1 and prev[0] is not None and prev[1] is not None:
            only = eqs[0]
            d0 = np.linalg.norm(np.array(only.point) - np.array(prev[0]))
            d1 = np.linalg.norm(np.array(only.point) - np.array(prev[1]))
            assign = [only, None] if d0 <= d1 else [None, only]
        for k, q in enumerate(assign):
            if q is None:
                prev[k] = None
                prev_step[k] = 0.0
                continue
            pts[k, i] = q.point
            evs[k, i] = q.eigenvalues
            classes[k][i] = q.stability.value
            labels[k][i] = q.branch
            prev_step[k] = 0.0 if prev[k] is None else float(np.linalg.norm(np.array(q.point) - np.array(prev[k])))
            prev[k] = q.point
    empty = not any(labels[0]) and not any(labels[1])
    return Branch(param, values, pts, evs, classes, labels, empty)


# --------------------------------------------------------------------------
# two-parameter stability map


@dataclass
class StabilityMap:
    b: np.ndarray
    d: np.ndarray
    class_p: np.ndarray  # (nd, nb) of class strings
    class_n: np.ndarray

    def rows(self):
        for j, dv in enumerate(self.d):
            for i, bv in enumerate(self.b):
                yield (bv, dv, self.class_p[j, i], self.class_n[j, i])


MAP_CSV_HEADER = ("b", "d", "class_p", "class_n")


def _cell_classes(p: ModelParams) -> tuple[str, str]:
    eqs = {q.branch: q for q in solve_E2(p)}
    out = []
    for label in (E2_PLUS, E2_MINUS):
        q = eqs.get(label)
        if q is None:
            out.append(NONEXISTENT)
        elif not q.physical:
            out.append(NONPHYSICAL)
        else:
            out.append(q.stability.value)
    return out[0], out[1]


def _map_row(args):
    p, d, bs = args
    return [_cell_classes(p.with_(b=float(bv), d=float(d))) for bv in bs]


def _pool_map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))  # order-preserving


def stability_map_2d(p: ModelParams, b_range: Sequence[float], d_range: Sequence[float],
                     nb: int, nd: int, workers: int = 1) -> StabilityMap:
    """Classify both interior equilibria on a rectangular (b, d) grid."""
    if nb < 1 or nd < 1:
        raise ValueError("grid must be nonempty")
    bs = np.linspace(float(b_range[0]), float(b_range[1]), nb)
    ds = np.linspace(float(d_range[0]), float(d_range[1]), nd)
    rows = _pool_map(_map_row, [(p, d, bs) for d in ds], workers)
    cp = np.array([[c[0] for c in row] for row in rows], dtype=object)
    cn = np.array([[c[1] for c in row] for row in rows], dtype=object)
    return StabilityMap(bs, ds, cp, cn)


# --------------------------------------------------------------------------
# codimension two


@dataclass
class Codim2Result:
    fold_curve: np.ndarray  # (k, 2) rows of (b, d)
    hopf_curve: np.ndarray  # (k, 3) rows of (b, d, l1)
    points: list = field(default_factory=list)

    def rows(self):
        for pt in self.points:
            yield (pt.kind.value, pt.b, pt.d, pt.lyapunov)


POINTS_CSV_HEADER = ("kind", "b", "d", "lyapunov")
CURVE_CSV_HEADER = ("curve", "b", "d", "lyapunov")


def _fold_b(p: ModelParams, b_range, d: float) -> Optional[float]:
    pt = detect_fold(p.with_(d=d), b_range, n_scan=200)
    return None if pt is None else pt.b


def _trace_at_fold(p: ModelParams, b_range, d: float) -> float:
    """Trace at the double equilibrium on the fold; its zero is the BT point."""
    b = _fold_b(p, b_range, d)
    if b is None:
        return math.nan
    pr = p.with_(b=b, d=d)
    A, B, _ = quadratic_coeffs(pr)
    M = -B / (2.0 * A)
    return jacobian_entries(m_from_M(M, pr), M, pr).trace


def _hopf_bs(p: ModelParams, b_range, d: float) -> list[float]:
    pd = p.with_(d=d)
    lo, hi = b_range

    def trace(v):
        return _trace_det(pd.with_(b=v), E2_PLUS)[0]

    out = []
    for x0, x1, f0 in _sign_changes(trace, lo, hi, 200):
        try:
            r = _bisect(trace, x0, x1, f0)
        except ArithmeticError:
            continue
        if _trace_det(pd.with_(b=r), E2_PLUS)[1] > 0:
            out.append(r)
    return out


def _hopf_slice(args):
    p, b_range, d = args
    rows = []
    for b in _hopf_bs(p, b_range, d):
        pr = p.with_(b=b, d=d)
        rows.append((b, d, _lyapunov_at(pr, _branch_point(pr, E2_PLUS))))
    return rows


def _fold_slice(args):
    p, b_range, d = args
    return _fold_b(p, b_range, d)


def _nearest_hopf(p: ModelParams, b_range, d: float, b_guess: float) -> Optional[float]:
    bs = _hopf_bs(p, b_range, d)
    if not bs:
        return None
    return min(bs, key=lambda b: abs(b - b_guess))


def codim2_curves(p: ModelParams, e_value: Optional[float] = None,
                  b_range: Sequence[float] = (0.01, 3.0),
                  d_range: Sequence[float] = (0.2, 6.0), nd: int = 120,
                  workers: int = 1) -> Codim2Result:
    """Fold and Hopf curves in the (b, d) plane with BT and GH points.

    Each curve is traced slice by slice in d. Bogdanov-Takens points are zeros
    of the trace at the double root along the fold curve; generalized Hopf
    points are sign changes of the first Lyapunov coefficient along the Hopf
    curve, refined by bisection in d.
    """
    if e_value is not None:
        p = p.with_(e=e_value)
    b_range = _check_range(b_range)
    d_lo, d_hi = _check_range(d_range, "d_range")
    ds = np.linspace(d_lo, d_hi, nd)
    fold_bs = _pool_map(_fold_slice, [(p, b_range, d) for d in ds], workers)
    fold_curve = np.array([(b, d) for b, d in zip(fold_bs, ds) if b is not None]).reshape(-1, 2)
    hopf_rows = [r for rows in _pool_map(_hopf_slice, [(p, b_range, d) for d in ds], workers)
                 for r in rows]
    hopf_curve = np.array([(b, d, np.nan if l1 is None else l1) for b, d, l1 in hopf_rows]).reshape(-1, 3)
    points: list[BifurcationPoint] = []

    # BT: trace at the fold changes sign between consecutive slices
    tr = [(_trace_at_fold(p, b_range, d) if b is not None else math.nan) for b, d in zip(fold_bs, ds)]
    for i in range(nd - 1):
        t0, t1 = tr[i], tr[i + 1]
        if math.isfinite(t0) and math.isfinite(t1) and t0 * t1 < 0:
            def g(dv):
                return _trace_at_fold(p, b_range, dv)
            try:
                d_bt = _bisect(g, ds[i], ds[i + 1], t0, xtol=1e-10)
            except ArithmeticError:
                continue
            b_bt = _fold_b(p, b_range, d_bt)
            pr = p.with_(b=b_bt, d=d_bt)
            A, B, _ = quadratic_coeffs(pr)
            M = -B / (2 * A)
            points.append(BifurcationPoint(Kind.BOGDANOV_TAKENS, b_bt, d_bt, branch="E2+/E2-",
                                           state=(m_from_M(M, pr), M), residual=abs(g(d_bt))))

    # GH: l1 sign change between neighbouring Hopf-curve points of consecutive slices
    for i in range(len(hopf_rows) - 1):
        b0, d0, l0 = hopf_rows[i]
        b1, d1, l1v = hopf_rows[i + 1]
        if d1 == d0 or l0 is None or l1v is None or l0 * l1v >= 0:
            continue
        if abs(b1 - b0) > 0.1 * max(1.0, abs(b0)):
            continue  # different components of the Hopf locus

        state = {"b": b0}

        def l1_of(dv):
            bh = _nearest_hopf(p, b_range, dv, state["b"])
            if bh is None:
                return math.nan
            state["b"] = bh
            pr = p.with_(b=bh, d=dv)
            val = _lyapunov_at(pr, _branch_point(pr, E2_PLUS))
            return math.nan if val is None else val

        try:
            d_gh = _bisect(l1_of, d0, d1, l0, xtol=1e-9)
        except ArithmeticError:
            continue
        b_gh = _nearest_hopf(p, b_range, d_gh, state["b"])
        pr = p.with_(b=b_gh, d=d_gh)
        q = _branch_point(pr, E2_PLUS)
        l1_gh = _lyapunov_at(pr, q)
        points.append(BifurcationPoint(Kind.GENERALIZED_HOPF, b_gh, d_gh, branch=E2_PLUS,
                                       lyapunov=l1_gh, state=(q.m, q.M),
                                       residual=abs(jacobian_entries(q.m, q.M, pr).trace)))
    return Codim2Result(fold_curve, hopf_curve, points)
