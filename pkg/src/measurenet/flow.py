"""Characteristics of an autonomous, strictly positive velocity on the unit arc.

Everything is driven by the travel-time function

    theta(x) = integral_0^x dz / v(z),

so the flow map from an interior point is ``theta^-1(theta(x) + t)`` and the
exit times are ``tau(x) = theta(1) - theta(x)`` and ``sigma(s) = s + theta(1)``.
No ODE stepping is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .quadrature import gauss_nodes, simpson_table

_SAMPLED_LIPSCHITZ_POINTS = 4097


class Exited(NamedTuple):
    """A characteristic that reached ``x = 1`` at ``time``."""

    time: float


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


class VelocityField:
    """Strictly positive Lipschitz velocity on ``[0, 1]``.

    Use the constructors :meth:`constant`, :meth:`affine`, :meth:`samples`
    (piecewise-linear interpolation) or :meth:`function` (any vectorised
    callable; bounds and Lipschitz constant are then estimated on a dense grid).
    """

    def __init__(self, kind: str, knots=None, speeds=None, func=None):
        self.kind = kind
        self.func = func
        if kind == "function":
            xs = np.linspace(0.0, 1.0, _SAMPLED_LIPSCHITZ_POINTS)
            vs = np.asarray(func(xs), dtype=float)
            self.knots, self.speeds = _frozen(xs), _frozen(vs)
        else:
            self.knots, self.speeds = _frozen(knots), _frozen(speeds)
        if self.knots.ndim != 1 or self.knots.shape != self.speeds.shape or self.knots.size < 2:
            raise ValueError("velocity samples must be matching 1-D arrays with at least two points")
        if abs(self.knots[0]) > 0 or abs(self.knots[-1] - 1.0) > 0:
            raise ValueError("velocity samples must span exactly [0, 1]")
        if np.any(np.diff(self.knots) <= 0):
            raise ValueError("velocity sample positions must be strictly increasing")
        if not np.all(np.isfinite(self.speeds)):
            raise ValueError("velocity must be finite")
        if np.min(self.speeds) <= 0:
            raise ValueError(f"velocity must be strictly positive, got minimum {np.min(self.speeds)!r}")
        slopes = np.diff(self.speeds) / np.diff(self.knots)
        self.slopes = _frozen(slopes)
        self.v_min = float(np.min(self.speeds))
        self.v_max = float(np.max(self.speeds))
        self.lipschitz = float(np.max(np.abs(slopes))) if slopes.size else 0.0

    @classmethod
    def constant(cls, c: float) -> "VelocityField":
        c = float(c)
        return cls("constant", [0.0, 1.0], [c, c])

    @classmethod
    def affine(cls, a: float, b: float) -> "VelocityField":
        """``v(x) = a + b x``."""
        a, b = float(a), float(b)
        return cls("affine", [0.0, 1.0], [a, a + b])

    @classmethod
    def samples(cls, points) -> "VelocityField":
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ValueError("velocity samples must be a list of (x, v) pairs")
        return cls("samples", pts[:, 0], pts[:, 1])

    @classmethod
    def function(cls, func: Callable[[np.ndarray], np.ndarray]) -> "VelocityField":
        return cls("function", func=func)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "function":
            return np.asarray(self.func(x), dtype=float)
        return np.interp(x, self.knots, self.speeds)

    @property
    def params(self) -> dict:
        """Scenario-file representation (not available for ``function``)."""
        if self.kind == "constant":
            return {"constant": float(self.speeds[0])}
        if self.kind == "affine":
            a = float(self.speeds[0])
            return {"affine": [a, float(self.speeds[1]) - a]}
        if self.kind == "samples":
            return {"samples": [[float(x), float(v)] for x, v in zip(self.knots, self.speeds)]}
        raise ValueError("function velocities have no file representation")

    def __eq__(self, other):
        if not isinstance(other, VelocityField) or self.kind != other.kind:
            return NotImplemented if not isinstance(other, VelocityField) else False
        if self.kind == "function":
            return self.func is other.func
        return np.array_equal(self.knots, other.knots) and np.array_equal(self.speeds, other.speeds)

    def __hash__(self):
        return hash((self.kind, self.knots.tobytes(), self.speeds.tobytes()))

    def __repr__(self):
        if self.kind == "function":
            return f"VelocityField.function({self.func!r})"
        return f"VelocityField({self.params!r})"


def _log1p_over(m, dx, v):
    """``log(1 + m dx / v) / m`` with the ``m -> 0`` limit ``dx / v``."""
    z = m * dx / v
    small = np.abs(z) < 1e-8
    safe_m = np.where(small, 1.0, m)
    exact = np.log1p(np.where(small, 0.0, z)) / safe_m
    series = dx / v * (1.0 - z / 2.0 + z * z / 3.0)
    return np.where(small, series, exact)


def _expm1_over(m, d, v):
    """``v (exp(m d) - 1) / m`` with the ``m -> 0`` limit ``v d``."""
    z = m * d
    small = np.abs(z) < 1e-8
    safe_m = np.where(small, 1.0, m)
    exact = v * np.expm1(np.where(small, 0.0, z)) / safe_m
    series = v * d * (1.0 + z / 2.0 + z * z / 6.0)
    return np.where(small, series, exact)


@dataclass(frozen=True, eq=False)
class ArcClock:
    """Cumulative travel time ``theta`` on one arc, with its inverse.

    Piecewise-linear velocities (including constant and affine ones) are
    integrated in closed form segment by segment. General callables use a
    table built by adaptive Simpson quadrature of ``1/v``.
    """

    velocity: VelocityField
    nodes: np.ndarray
    cumulative: np.ndarray
    analytic: bool

    @property
    def total(self) -> float:
        """``theta(1) = tau(0)``, the time to cross the whole arc."""
        return float(self.cumulative[-1])

    def _segment(self, x):
        k = np.searchsorted(self.nodes, x, side="right") - 1
        return np.clip(k, 0, self.nodes.size - 2)

    def theta(self, x):
        x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
        k = self._segment(x)
        dx = x - self.nodes[k]
        if self.analytic:
            v = self.velocity
            inc = _log1p_over(v.slopes[k], dx, v.speeds[k])
        else:
            xs, ws = gauss_nodes(self.nodes[k], x, 6)
            inc = np.sum(ws / self.velocity(xs), axis=-1)
        return self.cumulative[k] + inc

    def theta_inv(self, u):
        """Position reached after travel time ``u`` from ``x = 0`` (clamped to [0, 1])."""
        u = np.asarray(u, dtype=float)
        out_shape = u.shape
        u = np.atleast_1d(u)
        k = np.searchsorted(self.cumulative, u, side="right") - 1
        k = np.clip(k, 0, self.nodes.size - 2)
        d = np.maximum(u - self.cumulative[k], 0.0)
        if self.analytic:
            v = self.velocity
            x = self.nodes[k] + _expm1_over(v.slopes[k], d, v.speeds[k])
        else:
            x = self._newton_inverse(u, k)
        x = np.where(u >= self.total, 1.0, x)
        x = np.where(u <= 0.0, 0.0, x)
        x = np.clip(x, self.nodes[k], self.nodes[k + 1])
        return x.reshape(out_shape) if out_shape else float(x[0])

    def _newton_inverse(self, u, k):
        lo, hi = self.nodes[k].copy(), self.nodes[k + 1].copy()
        span = self.cumulative[k + 1] - self.cumulative[k]
        frac = np.where(span > 0, (u - self.cumulative[k]) / np.where(span > 0, span, 1.0), 0.0)
        x = lo + np.clip(frac, 0.0, 1.0) * (hi - lo)
        for _ in range(60):
            g = self.theta(x) - u
            lo = np.where(g < 0, x, lo)
            hi = np.where(g > 0, x, hi)
            step = x - g * self.velocity(x)
            inside = (step > lo) & (step < hi)
            new = np.where(inside, step, 0.5 * (lo + hi))
            if np.all(np.abs(new - x) <= 1e-15):
                return new
            x = new
        return x

    def tau(self, x):
        """Exit time of the characteristic starting at ``(x, 0)``."""
        return self.total - self.theta(x)

    def sigma(self, s):
        """Exit time of the characteristic entering at ``(0, s)``."""
        return np.asarray(s, dtype=float) + self.total

    def tau_inv(self, t: float) -> float:
        """Starting position whose exit time is ``t``; ``-inf`` once ``t > tau(0)``."""
        if t > self.total:
            return -math.inf
        return float(self.theta_inv(self.total - t))

    def sigma_inv(self, t: float) -> float:
        return float(t) - self.total

    def advance(self, x, t):
        """Vectorised ``Phi_t(x, 0)`` clamped at the exit ``x = 1``."""
        return self.theta_inv(self.theta(x) + np.asarray(t, dtype=float))


def build_clock(v: VelocityField, tol: float = 1e-12) -> ArcClock:
    """Tabulate the travel time of ``v`` on ``[0, 1]``."""
    if v.v_min <= 0:
        raise ValueError("velocity must be strictly positive")
    if v.kind != "function":
        dx = np.diff(v.knots)
        inc = _log1p_over(v.slopes, dx, v.speeds[:-1])
        cumulative = np.concatenate([[0.0], np.cumsum(inc)])
        return ArcClock(v, v.knots, _frozen(cumulative), True)
    nodes, cumulative = simpson_table(lambda x: 1.0 / v(x), 0.0, 1.0, tol)
    return ArcClock(v, _frozen(nodes), _frozen(cumulative), False)


def _check_unit(x: float, name: str = "x") -> float:
    x = float(x)
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"{name}={x!r} is outside [0, 1]")
    return x


def flow_from_interior(clock: ArcClock, x: float, t: float) -> float | Exited:
    """``Phi_t(x, 0)``, or :class:`Exited` with the exit time ``tau(x)``."""
    x = _check_unit(x)
    if t < 0:
        raise ValueError(f"t={t!r} must be non-negative")
    theta_x = float(clock.theta(x))
    if theta_x + t <= clock.total:
        return float(clock.theta_inv(theta_x + t))
    return Exited(clock.total - theta_x)


def flow_from_boundary(clock: ArcClock, s: float, t: float) -> float | Exited:
    """``Phi_t(0, s)`` for a characteristic entering at time ``s``."""
    if s < 0:
        raise ValueError(f"s={s!r} must be non-negative")
    if t < s:
        raise ValueError(f"t={t!r} precedes the entry time s={s!r}")
    if t - s <= clock.total:
        return float(clock.theta_inv(t - s))
    return Exited(float(clock.sigma(s)))


def invert_exit_times(clock: ArcClock, T: float) -> tuple[float, float]:
    """``(tau^-1(T), sigma^-1(T))``; the first is ``-inf`` when ``T > tau(0)``."""
    if T < 0:
        raise ValueError(f"T={T!r} must be non-negative")
    return clock.tau_inv(T), clock.sigma_inv(T)
