"""Independent reference computations used only by the test-suite.

The symbolic oracles differentiate the model written with the quasi-steady
LDL level substituted literally (not the common-denominator form used by the
package), so agreement is a genuine cross-check.
"""

from __future__ import annotations

import functools
import math

import numpy as np
import sympy as sp

_a, _b, _c, _d, _e, _f, _eps, _sig, _m, _M = sp.symbols("a b c d e f epsilon sigma m M")
_L = _d * _m / ((_f + _m) * (_e * _M + 1))
_U = _L / (1 + _L)
_F = sp.Matrix([(_a * _U / (1 + _sig) - _eps - _c) * _m, _c * _m - _b * _M * _U])
_X = (_m, _M)
_ARGS = (_a, _b, _c, _d, _e, _f, _eps, _sig, _m, _M)


@functools.lru_cache(maxsize=None)
def _lambdified():
    J = _F.jacobian(_X)
    H = [[[sp.diff(_F[i], _X[j], _X[k]) for k in range(2)] for j in range(2)] for i in range(2)]
    T = [[[[sp.diff(_F[i], _X[j], _X[k], _X[l]) for l in range(2)] for k in range(2)]
          for j in range(2)] for i in range(2)]
    return sp.lambdify(_ARGS, J), sp.lambdify(_ARGS, H), sp.lambdify(_ARGS, T)


def _vals(p, m, M):
    return (p.a, p.b, p.c, p.d, p.e, p.f, p.epsilon, p.sigma, m, M)


def symbolic_jacobian(p, m, M) -> np.ndarray:
    return np.array(_lambdified()[0](*_vals(p, m, M)), dtype=float)


def symbolic_l1(p, m, M) -> tuple[float, float]:
    """First Lyapunov coefficient from exact symbolic derivative tensors."""
    fJ, fH, fT = _lambdified()
    A = np.array(fJ(*_vals(p, m, M)), dtype=float)
    H = np.array(fH(*_vals(p, m, M)), dtype=float)
    T = np.array(fT(*_vals(p, m, M)), dtype=float)
    w, V = np.linalg.eig(A)
    i = int(np.argmax(w.imag))
    om = w[i].imag
    q = V[:, i] / np.linalg.norm(V[:, i])
    wl, W = np.linalg.eig(A.T)
    pv = W[:, int(np.argmin(wl.imag))]
    pv = pv / np.conj(np.vdot(pv, q))

    def B(x, y):
        return np.einsum("ijk,j,k->i", H, x, y)

    def C(x, y, z):
        return np.einsum("ijkl,j,k,l->i", T, x, y, z)

    qb = q.conj()
    val = (np.vdot(pv, C(q, q, qb)) - 2 * np.vdot(pv, B(q, np.linalg.solve(A, B(q, qb))))
           + np.vdot(pv, B(qb, np.linalg.solve(2j * om * np.eye(2) - A, B(q, q)))))
    return float(val.real / (2 * om)), float(om)


def nullcline_equilibria(p, m_min=1e-6, m_max=1e4, n=200_000) -> list[tuple[float, float]]:
    """Interior equilibria by brute force along the M-nullcline.

    On dM/dt = 0 the macrophage level is explicit in m; equilibria are the
    sign changes of the per-capita monocyte rate along that curve, located on
    a dense log grid and polished by bisection.
    """

    def M_of(m):
        den = p.b * p.d - p.c * p.e * (p.f + m)
        return p.c * (p.f + m + p.d * m) / den if den > 0 else math.nan

    def g(m):
        M = M_of(m)
        if not (M >= 0):
            return math.nan
        L = p.d * m / ((p.f + m) * (p.e * M + 1))
        return p.a * (L / (1 + L)) / (1 + p.sigma) - p.epsilon - p.c

    grid = np.geomspace(m_min, m_max, n)
    vals = np.array([g(x) for x in grid])
    out = []
    for i in range(n - 1):
        v0, v1 = vals[i], vals[i + 1]
        if np.isfinite(v0) and np.isfinite(v1) and v0 * v1 < 0:
            lo, hi = grid[i], grid[i + 1]
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                if (g(mid) > 0) == (v0 > 0):
                    lo = mid
                else:
                    hi = mid
            m = 0.5 * (lo + hi)
            out.append((m, M_of(m)))
    return out


def grid_equilibrium_count(p, box=25.0, n=200) -> int:
    """Number of interior equilibria in (0, box]^2 seen on an n x n grid.

    Both rates are divided by m so the invariant axis m = 0 drops out. In
    each grid column the M-nullcline is located by linear interpolation
    between the rows where dM/dt changes sign; equilibria are the sign
    changes of the monocyte rate sampled along that polyline.
    """
    m = np.linspace(0.0, box, n)[:, None]
    M = np.linspace(0.0, box, n)[None, :]
    L = p.d * m / ((p.f + m) * (p.e * M + 1))
    g1 = p.a * (L / (1 + L)) / (1 + p.sigma) - p.epsilon - p.c
    g2 = p.c - p.b * M * p.d / ((p.f + m) * (p.e * M + 1) + p.d * m)

    along = np.full(n, np.nan)
    for i in range(n):
        cross = np.nonzero(np.sign(g2[i, :-1]) != np.sign(g2[i, 1:]))[0]
        if cross.size:
            j = cross[0]
            t = g2[i, j] / (g2[i, j] - g2[i, j + 1])
            along[i] = g1[i, j] + t * (g1[i, j + 1] - g1[i, j])
    ok = np.isfinite(along[:-1]) & np.isfinite(along[1:])
    return int(np.count_nonzero(ok & (np.sign(along[:-1]) != np.sign(along[1:]))))
