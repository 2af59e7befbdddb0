"""Tabulated scale function built from adaptive Chebyshev panels.

Starting at the anchor ``c`` the domain is cut at the doubling points of
:func:`diffinv.core._cut_points`.  Each piece is split until the Chebyshev
series of ``2 b / sigma^2`` and of ``s' = exp(-phi)`` are resolved to
rounding level; ``phi`` and ``s`` are their exact series antiderivatives.
Pieces are built lazily, outward from ``c``, as far as queries reach.
"""

from __future__ import annotations

import bisect
import math
import threading

import numpy as np
from numpy.polynomial import Chebyshev
from scipy import optimize

from .errors import QuadratureFailure, RangeError

DEGREE = 32
TAIL_TOL = 1e-13
MAX_DEPTH = 60


class _Side:
    """Panels on one side of the anchor, ordered outward."""

    def __init__(self, cuts, direction: int):
        self.cuts = cuts
        self.direction = direction
        self.next_cut = 1
        self.edges = [cuts[0]]        # outward edge positions
        self.s_edges = [0.0]          # s at the edges
        self.polys = []               # (phi, sp, s) per leaf
        self.diverged = False

    @property
    def exhausted(self) -> bool:
        return self.diverged or self.next_cut >= len(self.cuts)


class PanelScale:
    """``s``, ``s'`` and ``s^-1`` of ``s(x) = int_c^x exp(-int_c^z 2b/sigma^2)``.

    ``ratio(z)`` must return ``b(z) / sigma(z)^2`` for arrays ``z``.
    """

    def __init__(self, ratio, c: float, right_cuts, left_cuts):
        self.ratio = ratio
        self.c = float(c)
        self.right = _Side(right_cuts, +1)
        self.left = _Side(left_cuts, -1)
        self._phi_end = {+1: 0.0, -1: 0.0}
        # lazy growth mutates the table; readers and builders share one lock
        self._lock = threading.RLock()

    # -- construction --------------------------------------------------------

    def _g(self, z):
        v = 2.0 * np.asarray(self.ratio(z), dtype=float)
        if not np.all(np.isfinite(v)):
            raise QuadratureFailure("2b/sigma^2 is not finite on the quadrature nodes")
        return v

    @staticmethod
    def _resolved(p: Chebyshev) -> bool:
        c = np.abs(p.coef)
        top = c.max()
        return top == 0 or c[-4:].max() <= TAIL_TOL * top

    def _leaves(self, a: float, b: float, phi0: float, s0: float, depth: int = 0):
        """Resolved leaves from ``a`` (values known) to ``b``, in that order."""
        lo, hi = min(a, b), max(a, b)
        g = Chebyshev.interpolate(self._g, DEGREE, domain=[lo, hi])
        ok = self._resolved(g)
        if ok:
            phi = g.integ(lbnd=a) + phi0
            with np.errstate(over="ignore"):
                sp = Chebyshev.interpolate(lambda z: np.exp(-phi(z)), DEGREE, domain=[lo, hi])
            if not np.all(np.isfinite(sp.coef)):
                return None
            ok = self._resolved(sp)
        if not ok:
            if depth >= MAX_DEPTH or (hi - lo) <= 1e-14 * max(1.0, abs(lo), abs(hi)):
                raise QuadratureFailure(f"scale integrand not resolved on [{lo}, {hi}]")
            m = 0.5 * (a + b)
            first = self._leaves(a, m, phi0, s0, depth + 1)
            if first is None or first[-1] is None:
                return first
            end_phi, end_s = float(first[-1][0](m)), float(first[-1][2](m))
            second = self._leaves(m, b, end_phi, end_s, depth + 1)
            if second is None:
                return first + [None]
            return first + second
        s = sp.integ(lbnd=a) + s0
        return [(phi, sp, s)]

    def _extend(self, side: _Side) -> bool:
        """Build the next piece on ``side``; False when nothing is left."""
        if side.exhausted:
            return False
        a = side.cuts[side.next_cut - 1]
        b = side.cuts[side.next_cut]
        phi0 = self._phi_end[side.direction]
        s0 = side.s_edges[-1]
        leaves = self._leaves(a, b, phi0, s0)
        if leaves is None:
            side.diverged = True
            return False
        for leaf in leaves:
            if leaf is None:
                side.diverged = True
                return False
            lo, hi = leaf[2].domain
            edge = hi if side.direction > 0 else lo
            side.polys.append(leaf)
            side.edges.append(float(edge))
            side.s_edges.append(float(leaf[2](edge)))
            self._phi_end[side.direction] = float(leaf[0](edge))
            if not (math.isfinite(side.s_edges[-1]) and math.isfinite(self._phi_end[side.direction])):
                side.diverged = True
                return False
        side.next_cut += 1
        return True

    def _cover(self, side: _Side, x: float) -> None:
        d = side.direction
        while d * (x - side.edges[-1]) > 0:
            if not self._extend(side):
                raise QuadratureFailure(f"scale table cannot reach {x}")

    def _cover_value(self, side: _Side, y: float) -> None:
        d = side.direction
        while d * (y - side.s_edges[-1]) > 0:
            if not self._extend(side):
                raise RangeError(f"{y} is beyond the tabulated range of s")

    # -- evaluation ----------------------------------------------------------

    def _leaf(self, side: _Side, x: float) -> int:
        if side.direction > 0:
            return max(bisect.bisect_left(side.edges, x) - 1, 0)
        neg = [-e for e in side.edges]
        return max(bisect.bisect_left(neg, -x) - 1, 0)

    def _eval(self, x, which: int):
        with self._lock:
            return self._eval_locked(x, which)

    def _eval_locked(self, x, which: int):
        arr = np.asarray(x, dtype=float)
        flat = arr.ravel()
        out = np.empty(flat.shape)
        for i, v in enumerate(flat):
            if v == self.c:
                out[i] = (0.0, 1.0, 0.0)[which]
                continue
            side = self.right if v > self.c else self.left
            self._cover(side, v)
            out[i] = side.polys[self._leaf(side, v)][which](v)
        return out.reshape(arr.shape) if arr.ndim else float(out[0])

    def s(self, x):
        return self._eval(x, 2)

    def s_prime(self, x):
        return self._eval(x, 1)

    def increment(self, a: float, b: float) -> float:
        """``s(b) - s(a)``; infinite once the side diverges before ``b``."""
        try:
            return float(self.s(b)) - float(self.s(a))
        except QuadratureFailure:
            side = self.right if b > self.c else self.left
            if side.diverged:
                return math.copysign(math.inf, b - a)
            raise

    def inverse(self, y):
        with self._lock:
            return self._inverse_locked(y)

    def _inverse_locked(self, y):
        arr = np.asarray(y, dtype=float)
        flat = arr.ravel()
        out = np.empty(flat.shape)
        for i, v in enumerate(flat):
            if v == 0.0:
                out[i] = self.c
                continue
            side = self.right if v > 0 else self.left
            self._cover_value(side, v)
            s_e = side.s_edges if side.direction > 0 else [-e for e in side.s_edges]
            k = max(bisect.bisect_left(s_e, side.direction * v) - 1, 0)
            k = min(k, len(side.polys) - 1)
            s_poly = side.polys[k][2]
            lo, hi = s_poly.domain
            f_lo, f_hi = float(s_poly(lo)) - v, float(s_poly(hi)) - v
            if f_lo == 0:
                out[i] = lo
            elif f_hi == 0:
                out[i] = hi
            elif f_lo * f_hi > 0:
                out[i] = lo if abs(f_lo) < abs(f_hi) else hi
            else:
                out[i] = optimize.brentq(lambda z: float(s_poly(z)) - v, lo, hi,
                                         xtol=1e-300, rtol=4 * np.finfo(float).eps)
        return out.reshape(arr.shape) if arr.ndim else float(out[0])
