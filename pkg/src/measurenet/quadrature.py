"""Small quadrature kit: Gauss-Legendre panels and adaptive Simpson tables."""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np


@lru_cache(maxsize=None)
def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def gauss_nodes(a, b, n: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights mapped onto each interval ``[a_i, b_i]``.

    ``a`` and ``b`` broadcast together; the returned arrays have a trailing
    axis of length ``n``.
    """
    x, w = _leggauss(n)
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def composite_gauss(
    f: Callable[[np.ndarray], np.ndarray],
    a: np.ndarray,
    b: np.ndarray,
    tol: float = 1e-10,
    n: int = 8,
    max_depth: int = 30,
) -> float:
    """Sum of integrals of a vectorised ``f`` over the panels ``[a_i, b_i]``.

    Each panel is compared against its two halves and bisected until the
    discrepancy drops below ``tol`` (absolute, per panel). All panels of one
    sweep are evaluated in a single call of ``f``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    keep = b > a
    a, b = a[keep], b[keep]
    if a.size == 0:
        return 0.0

    def panel(lo, hi):
        x, w = gauss_nodes(lo, hi, n)
        return np.sum(f(x.ravel()).reshape(x.shape) * w, axis=-1)

    total = 0.0
    coarse = panel(a, b)
    for _ in range(max_depth):
        mid = 0.5 * (a + b)
        left, right = panel(a, mid), panel(mid, b)
        fine = left + right
        done = np.abs(fine - coarse) <= tol
        total += float(np.sum(fine[done]))
        if done.all():
            return total
        todo = ~done
        a, mid, b = a[todo], mid[todo], b[todo]
        a, b = np.concatenate([a, mid]), np.concatenate([mid, b])
        coarse = np.concatenate([left[todo], right[todo]])
    return total + float(np.sum(coarse))


def simpson_table(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float = 1e-12,
    max_depth: int = 40,
) -> tuple[np.ndarray, np.ndarray]:
    """Adaptive Simpson nodes and cumulative integrals of ``f`` on ``[a, b]``.

    A panel is accepted once the Richardson error estimate ``|S2 - S1| / 15``
    is below ``tol``. Returns the sorted panel endpoints and the running
    integral at each of them (starting from zero).
    """
    fa, fm, fb = (float(v) for v in f(np.array([a, 0.5 * (a + b), b])))
    stack = [(a, b, fa, fm, fb, (b - a) * (fa + 4 * fm + fb) / 6.0, 0)]
    panels: list[tuple[float, float, float]] = []
    while stack:
        lo, hi, flo, fmid, fhi, whole, depth = stack.pop()
        mid = 0.5 * (lo + hi)
        fl, fr = (float(v) for v in f(np.array([0.5 * (lo + mid), 0.5 * (mid + hi)])))
        left = (mid - lo) * (flo + 4 * fl + fmid) / 6.0
        right = (hi - mid) * (fmid + 4 * fr + fhi) / 6.0
        err = (left + right - whole) / 15.0
        if abs(err) <= tol or depth >= max_depth:
            panels.append((lo, hi, left + right + err))
        else:
            stack.append((mid, hi, fmid, fr, fhi, right, depth + 1))
            stack.append((lo, mid, flo, fl, fmid, left, depth + 1))
    panels.sort()
    nodes = np.array([panels[0][0]] + [p[1] for p in panels])
    cumulative = np.concatenate([[0.0], np.cumsum([p[2] for p in panels])])
    return nodes, cumulative
