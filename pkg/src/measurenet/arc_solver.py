"""Exact characteristic solution of linear transport on a single arc.

Mass that starts on the arc (``mu0``, a space measure on ``[0, 1]``) or
enters through ``x = 0`` (``nu0``, a time measure on ``[0, T]``) moves along
the characteristics of :mod:`measurenet.flow`. The solution is described by
its space traces ``mu_t`` and its outflow ``nu1`` through ``x = 1``:

* an initial atom at ``x`` is still on the arc at time ``t`` iff
  ``x <= tau^-1(t)``, otherwise it left at time ``tau(x)``;
* a boundary atom entering at ``s`` is on the arc at time ``t`` iff
  ``sigma^-1(t) <= s <= t``, otherwise (``s < sigma^-1(T)``) it left at
  ``sigma(s)``.

Densities are pushed forward cell by cell with exact preimage masses, so the
resampled step density conserves mass to round-off.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .flow import ArcClock
from .measure import DEFAULT_LP_CELLS, HybridMeasure, bl_distance, sum_measures
from .quadrature import gauss_nodes

# Bound on the W1 error of a resampled density, per unit of output width.
RESAMPLE_TOL = 1e-8
MAX_REFINE = 4096
# per time panel; resampled traces carry noise near RESAMPLE_TOL
BALANCE_TOL = 1e-10
_TRACE_CACHE = 64


@dataclass(frozen=True, eq=False)
class ArcProblem:
    """Initial data ``mu0`` on ``[0, 1]`` and inflow ``nu0`` on ``[0, T]``."""

    clock: ArcClock
    mu0: HybridMeasure
    nu0: HybridMeasure
    horizon: float

    def __post_init__(self):
        T = float(self.horizon)
        if not T > 0:
            raise ValueError(f"horizon must be positive, got {T!r}")
        object.__setattr__(self, "horizon", T)
        if self.mu0.domain != (0.0, 1.0):
            raise ValueError(f"initial measure must live on [0, 1], got {self.mu0.domain}")
        if self.nu0.domain != (0.0, T):
            raise ValueError(f"inflow measure must live on [0, {T!r}], got {self.nu0.domain}")

    @classmethod
    def empty(cls, clock: ArcClock, horizon: float) -> "ArcProblem":
        return cls(clock, HybridMeasure.zero((0.0, 1.0)), HybridMeasure.zero((0.0, horizon)), horizon)


def _refinement(c: np.ndarray, width: np.ndarray, jac_a, jac_m, jac_b) -> np.ndarray:
    """Sub-cells per output cell so that a step density is W1-close to the true one."""
    variation = np.abs(jac_m - jac_a) + np.abs(jac_b - jac_m)
    n = np.sqrt(c * variation * width / (12.0 * RESAMPLE_TOL))
    return np.clip(np.ceil(n), 1, MAX_REFINE).astype(int)


def _push_density(
    u_edges: np.ndarray,
    c: np.ndarray,
    forward: Callable,
    inverse: Callable,
    jacobian: Callable | None,
) -> tuple[np.ndarray, np.ndarray]:
    """Push the step density ``c`` on ``u_edges`` through a monotone map.

    ``forward`` maps input to output coordinates and ``inverse`` undoes it;
    ``jacobian(y) = |d inverse / dy|`` drives the refinement and may be
    ``None`` when it is constant. Returns contiguous output edges (ascending)
    and values, each output cell carrying its exact preimage mass.
    """
    if c.size == 0:
        return np.empty(0), np.empty(0)
    y = np.asarray(forward(u_edges), dtype=float)
    if y.size > 1 and y[-1] < y[0]:
        y, u_edges, c = y[::-1], u_edges[::-1], c[::-1]
    ya, yb = y[:-1], y[1:]
    if jacobian is None:
        n = np.ones(c.size, dtype=int)
    else:
        ym = 0.5 * (ya + yb)
        n = _refinement(c, yb - ya, jacobian(ya), jacobian(ym), jacobian(yb))
    n = np.where(c > 0, n, 1)
    if np.all(n == 1):
        out_edges = y
        masses = c * np.abs(np.diff(u_edges))
    else:
        cell = np.repeat(np.arange(c.size), n)
        offset = np.arange(cell.size) - np.repeat(np.cumsum(n) - n, n)
        frac = offset / n[cell]
        starts = ya[cell] + frac * (yb - ya)[cell]
        out_edges = np.concatenate([starts, [y[-1]]])
        pre = np.asarray(inverse(out_edges), dtype=float)
        # keep the exact input breakpoints where they are known
        first = offset == 0
        pre[:-1][first] = u_edges[:-1][cell[first]]
        pre[-1] = u_edges[-1]
        masses = c[cell] * np.abs(np.diff(pre))
    width = np.diff(out_edges)
    ok = width > 0
    values = np.zeros(width.size)
    values[ok] = masses[ok] / width[ok]
    # an image cell squeezed to zero width by round-off keeps its mass
    if not ok.all() and ok.any():
        lost = masses[~ok].sum()
        k = int(np.argmax(np.where(ok, width, -1.0)))
        values[k] += lost / width[k]
    return out_edges, values


def _clip_edges(edges: np.ndarray, values: np.ndarray, lo: float, hi: float):
    """Input breakpoints and values restricted to ``[lo, hi]``."""
    inner = edges[(edges > lo) & (edges < hi)]
    e = np.concatenate([[lo], inner, [hi]])
    mid = 0.5 * (e[:-1] + e[1:])
    k = np.clip(np.searchsorted(edges, mid, side="right") - 1, 0, values.size - 1)
    return e, values[k]


class ArcSolution:
    """Lazily evaluated solution of an :class:`ArcProblem`.

    Traces are recomputed from the stored inputs on demand (a small cache
    avoids repeated work); the object is safe to share between threads.
    """

    def __init__(self, problem: ArcProblem):
        self.problem = problem
        self._lock = threading.Lock()
        self._traces: OrderedDict[float, HybridMeasure] = OrderedDict()
        self._outflow: HybridMeasure | None = None

    @property
    def clock(self) -> ArcClock:
        return self.problem.clock

    @property
    def horizon(self) -> float:
        return self.problem.horizon

    def _velocity_is_uniform(self) -> bool:
        v = self.clock.velocity
        return v.kind != "function" and v.v_min == v.v_max

    # -- space traces ---------------------------------------------------------

    def trace_space(self, t: float) -> HybridMeasure:
        """The space measure ``mu_t`` on ``[0, 1]``."""
        t = float(t)
        if not (0.0 <= t <= self.horizon):
            raise ValueError(f"t={t!r} outside [0, {self.horizon!r}]")
        with self._lock:
            hit = self._traces.get(t)
            if hit is not None:
                self._traces.move_to_end(t)
                return hit
        mu = self._compute_trace(t)
        with self._lock:
            self._traces[t] = mu
            while len(self._traces) > _TRACE_CACHE:
                self._traces.popitem(last=False)
        return mu

    def terminal(self) -> HybridMeasure:
        return self.trace_space(self.horizon)

    def _compute_trace(self, t: float) -> HybridMeasure:
        clock, mu0, nu0 = self.clock, self.problem.mu0, self.problem.nu0
        tau_inv, sigma_inv = clock.tau_inv(t), clock.sigma_inv(t)
        uniform = self._velocity_is_uniform()

        keep = mu0.positions <= tau_inv
        pos_a = clock.advance(mu0.positions[keep], t)
        mass_a = mu0.masses[keep]

        s = nu0.positions
        keep = (s >= sigma_inv) & (s <= t)
        pos_b = clock.theta_inv(t - s[keep]) if keep.any() else np.empty(0)
        mass_b = nu0.masses[keep]

        pieces = []
        if tau_inv >= 0.0 and np.any(mu0.values > 0):
            e, c = _clip_edges(mu0.edges, mu0.values, 0.0, tau_inv)
            if t == 0.0:
                pieces.append((e, c))
            else:
                v = clock.velocity
                inverse = lambda y: clock.theta_inv(clock.theta(y) - t)
                jac = None if uniform else (lambda y: v(inverse(y)) / v(y))
                pieces.append(_push_density(e, c, lambda x: clock.advance(x, t), inverse, jac))
        s_lo = max(0.0, sigma_inv)
        if t > s_lo and np.any(nu0.values > 0):
            e, c = _clip_edges(nu0.edges, nu0.values, s_lo, t)
            v = clock.velocity
            jac = None if uniform else (lambda y: 1.0 / v(y))
            pieces.append(
                _push_density(e, c, lambda r: clock.theta_inv(t - r), lambda y: t - clock.theta(y), jac)
            )
        parts = [
            HybridMeasure.from_arrays((0.0, 1.0), edges=e, values=c)
            for e, c in pieces
            if e.size
        ]
        atoms = HybridMeasure.from_arrays(
            (0.0, 1.0), np.concatenate([pos_a, pos_b]), np.concatenate([mass_a, mass_b])
        )
        return sum_measures((0.0, 1.0), [atoms, *parts])

    # -- outflow -----------------------------------------------------------

    def outflow(self) -> HybridMeasure:
        """Time measure ``nu1`` on ``[0, T]`` of the mass leaving through ``x = 1``."""
        with self._lock:
            if self._outflow is not None:
                return self._outflow
        nu1 = self._compute_outflow()
        with self._lock:
            self._outflow = nu1
        return nu1

    def _compute_outflow(self) -> HybridMeasure:
        clock, mu0, nu0, T = self.clock, self.problem.mu0, self.problem.nu0, self.horizon
        tau_inv, sigma_inv = clock.tau_inv(T), clock.sigma_inv(T)
        total = clock.total
        dom = (0.0, T)

        keep = mu0.positions > tau_inv
        times_a = clock.tau(mu0.positions[keep]) if keep.any() else np.empty(0)
        mass_a = mu0.masses[keep]
        keep = nu0.positions < sigma_inv
        times_b = nu0.positions[keep] + total
        mass_b = nu0.masses[keep]

        parts = []
        x_lo = max(0.0, tau_inv)
        if x_lo < 1.0 and np.any(mu0.values > 0):
            e, c = _clip_edges(mu0.edges, mu0.values, x_lo, 1.0)
            v = clock.velocity
            inverse = lambda r: clock.theta_inv(total - r)
            jac = None if self._velocity_is_uniform() else (lambda r: v(inverse(r)))
            parts.append(_push_density(e, c, clock.tau, inverse, jac))
        if sigma_inv > 0.0 and np.any(nu0.values > 0):
            e, c = _clip_edges(nu0.edges, nu0.values, 0.0, sigma_inv)
            parts.append(_push_density(e, c, lambda r: r + total, lambda r: r - total, None))
        dens = [HybridMeasure.from_arrays(dom, edges=e, values=c) for e, c in parts if e.size]
        atoms = HybridMeasure.from_arrays(dom, np.concatenate([times_a, times_b]), np.concatenate([mass_a, mass_b]))
        return sum_measures(dom, [atoms, *dens])

    # -- structure ---------------------------------------------------------

    def event_times(self) -> np.ndarray:
        """Times in ``[0, T]`` where an atom or a density breakpoint enters or leaves."""
        jumps, kinks = self._events()
        return np.union1d(jumps, kinks)

    def _events(self) -> tuple[np.ndarray, np.ndarray]:
        """Atom entry/exit times (jumps of ``t -> mu_t``) and density edge ones (kinks)."""
        clock, mu0, nu0, T = self.clock, self.problem.mu0, self.problem.nu0, self.horizon
        jumps = [np.array([0.0, T])]
        kinks = [np.empty(0)]
        if mu0.masses.size:
            jumps.append(clock.tau(mu0.positions))
        nz = np.flatnonzero(mu0.values > 0)
        if nz.size:
            kinks.append(clock.tau(np.union1d(mu0.edges[nz], mu0.edges[nz + 1])))
        if nu0.masses.size:
            jumps += [nu0.positions, nu0.positions + clock.total]
        nz = np.flatnonzero(nu0.values > 0)
        if nz.size:
            s = np.union1d(nu0.edges[nz], nu0.edges[nz + 1])
            kinks += [s, s + clock.total]

        def clip(parts):
            times = np.unique(np.concatenate(parts))
            return times[(times >= 0.0) & (times <= T)]

        return clip(jumps), clip(kinks)

    def restarted(self, t: float) -> "ArcSolution":
        """The same dynamics restarted at time ``t`` from ``mu_t``.

        The new inflow is ``nu0`` restricted to ``(t, T]`` and shifted to
        start at zero.
        """
        T = self.horizon
        if not 0.0 <= t < T:
            raise ValueError(f"restart time {t!r} must lie in [0, {T!r})")
        rest = self.problem.nu0.restrict(t, T, closed_left=False).shifted(-t, (0.0, T - t))
        return ArcSolution(ArcProblem(self.clock, self.trace_space(t), rest, T - t))


def solve_arc(problem: ArcProblem) -> ArcSolution:
    return ArcSolution(problem)


# -- weak balance --------------------------------------------------------------


class SmoothTestFunction:
    """A C1 test function ``phi(x, t)`` given with its partial derivatives.

    All three callables must be vectorised over broadcastable ``x`` and ``t``.
    """

    __test__ = False

    def __init__(self, value, dx, dt, label: str = "phi", coeffs: np.ndarray | None = None):
        self.value, self.dx, self.dt, self.label = value, dx, dt, label
        # monomial coefficients c[a, b] of x^a t^b when the function is a polynomial
        self.coeffs = coeffs

    def __repr__(self):
        return f"SmoothTestFunction({self.label})"

    @classmethod
    def polynomial(cls, coeffs) -> "SmoothTestFunction":
        """``sum_ab coeffs[a][b] x^a t^b``."""
        c = np.atleast_2d(np.asarray(coeffs, dtype=float))
        cx = np.polynomial.polynomial.polyder(c, axis=0) if c.shape[0] > 1 else np.zeros((1, c.shape[1]))
        ct = np.polynomial.polynomial.polyder(c, axis=1) if c.shape[1] > 1 else np.zeros((c.shape[0], 1))
        pv = np.polynomial.polynomial.polyval2d
        terms = [f"{c[a, b]:g} x^{a} t^{b}" for a in range(c.shape[0]) for b in range(c.shape[1]) if c[a, b]]
        return cls(
            lambda x, t: pv(*np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float)), c),
            lambda x, t: pv(*np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float)), cx),
            lambda x, t: pv(*np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float)), ct),
            " + ".join(terms) or "0",
            c,
        )

    @classmethod
    def monomial(cls, a: int, b: int, scale: float = 1.0) -> "SmoothTestFunction":
        c = np.zeros((a + 1, b + 1))
        c[a, b] = scale
        return cls.polynomial(c)

    @classmethod
    def separable(cls, f, df, g, dg, label: str = "f(x)g(t)") -> "SmoothTestFunction":
        """``f(x) g(t)`` from the factors and their derivatives."""
        return cls(
            lambda x, t: f(x) * g(t),
            lambda x, t: df(x) * g(t),
            lambda x, t: f(x) * dg(t),
            label,
        )

    @classmethod
    def constant(cls, c: float = 1.0) -> "SmoothTestFunction":
        return cls.polynomial([[c]])

    def transport(self, v, x, t):
        """``d_t phi + v(x) d_x phi``."""
        return self.dt(x, t) + v(x) * self.dx(x, t)


def _require_smooth(phis) -> list[SmoothTestFunction]:
    phis = list(phis)
    for p in phis:
        if not isinstance(p, SmoothTestFunction):
            raise TypeError(
                f"balance checks need C1 test functions with derivatives (SmoothTestFunction), got {type(p).__name__}"
            )
    return phis


def _family_pairing(mu: HybridMeasure, fields: Sequence[Callable], knots: np.ndarray) -> np.ndarray:
    """``<mu, f>`` for several vectorised ``f(x)`` at once.

    The density cells are split at ``knots`` and integrated by 8-point Gauss
    rule, which is exact for polynomial integrands up to degree 15.
    """
    out = np.zeros(len(fields))
    if mu.masses.size:
        for i, f in enumerate(fields):
            out[i] += float(np.dot(mu.masses, f(mu.positions)))
    nz = mu.values > 0
    if nz.any():
        a, b, c = mu.edges[:-1][nz], mu.edges[1:][nz], mu.values[nz]
        if knots.size:
            cuts = np.union1d(mu.edges, knots)
            mid = 0.5 * (cuts[:-1] + cuts[1:])
            cv = mu.density_at(mid)
            use = cv > 0
            a, b, c = cuts[:-1][use], cuts[1:][use], cv[use]
        x, w = gauss_nodes(a, b, 8)
        w = w * c[:, None]
        for i, f in enumerate(fields):
            out[i] += float(np.sum(f(x) * w))
    return out


def _velocity_cuts(clock: ArcClock) -> np.ndarray:
    v = clock.velocity
    if v.kind == "function":
        return np.linspace(0.0, 1.0, 17)[1:-1]
    return np.asarray(v.knots[1:-1])


def _adaptive_family(F: Callable[[float], np.ndarray], breaks: np.ndarray, size: int, tol: float, max_depth: int = 16):
    """Adaptive composite Gauss for a vector-valued ``F(t)``, one call per node."""
    def panel(lo, hi):
        x, w = gauss_nodes(lo, hi, 8)
        vals = np.array([F(float(xi)) for xi in x])
        return w @ vals

    total = np.zeros(size)
    work = [(float(a), float(b), None, 0) for a, b in zip(breaks[:-1], breaks[1:]) if b > a]
    while work:
        lo, hi, coarse, depth = work.pop()
        if coarse is None:
            coarse = panel(lo, hi)
        mid = 0.5 * (lo + hi)
        left, right = panel(lo, mid), panel(mid, hi)
        if depth >= max_depth or np.max(np.abs(left + right - coarse), initial=0.0) <= tol:
            total += left + right
        else:
            work.append((lo, mid, left, depth + 1))
            work.append((mid, hi, right, depth + 1))
    return total


def _moments(mu: HybridMeasure, v, degree: int, knots: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``<mu, x^a>`` and ``<mu, v x^a>`` for ``a = 0..degree``."""
    powers = np.arange(degree + 1)
    m = np.zeros(degree + 1)
    mv = np.zeros(degree + 1)
    if mu.masses.size:
        xp = mu.positions[:, None] ** powers
        m += mu.masses @ xp
        mv += (mu.masses * v(mu.positions)) @ xp
    nz = mu.values > 0
    if not nz.any():
        return m, mv
    cuts = np.union1d(mu.edges, knots) if knots.size else mu.edges
    mid = 0.5 * (cuts[:-1] + cuts[1:])
    c = mu.density_at(mid)
    use = c > 0
    lo, hi, c = cuts[:-1][use], cuts[1:][use], c[use]
    if v.kind == "function":
        x, w = gauss_nodes(lo, hi, 8)
        x, w = x.ravel(), (w * c[:, None]).ravel()
        xp = x[:, None] ** powers
        return m + w @ xp, mv + (w * v(x)) @ xp
    # closed form: v is affine on every cell once the cells are cut at the knots
    up = np.arange(degree + 2)
    integrals = (hi[:, None] ** (up + 1) - lo[:, None] ** (up + 1)) / (up + 1)
    slope = v.slopes[np.clip(np.searchsorted(v.knots, mid[use], side="right") - 1, 0, v.slopes.size - 1)]
    intercept = v(mid[use]) - slope * mid[use]
    m += c @ integrals[:, :-1]
    mv += (c * intercept) @ integrals[:, :-1] + (c * slope) @ integrals[:, 1:]
    return m, mv


def _polynomial_integrand(sol: ArcSolution, phis, knots) -> Callable[[float], np.ndarray]:
    """``t -> <mu_t, d_t phi + v d_x phi>`` for polynomial ``phi`` via moments of ``mu_t``."""
    shape = (max(p.coeffs.shape[0] for p in phis), max(p.coeffs.shape[1] for p in phis))
    c = np.zeros((len(phis), *shape))
    for i, p in enumerate(phis):
        c[i, : p.coeffs.shape[0], : p.coeffs.shape[1]] = p.coeffs
    A, B = shape
    a = np.arange(A)[:, None]
    b = np.arange(B)[None, :]
    v = sol.clock.velocity

    def integrand(t: float) -> np.ndarray:
        m, mv = _moments(sol.trace_space(t), v, A - 1, knots)
        tb = t ** b.astype(float)
        tb1 = np.where(b > 0, b * t ** np.maximum(b - 1, 0).astype(float), 0.0)
        # d_t phi pairs x^a with b t^(b-1); v d_x phi pairs v x^(a-1) with a t^b
        mv_shift = np.concatenate([[0.0], mv[:-1]])[:, None]
        kernel = m[:, None] * tb1 + a * mv_shift * tb
        return np.einsum("iab,ab->i", c, kernel)

    return integrand


def _panel_breaks(sol: ArcSolution, max_kinks: int = 16) -> np.ndarray:
    """Time panel boundaries: every atom event, and density events thinned to a grid."""
    jumps, kinks = sol._events()
    if kinks.size > max_kinks + 1:
        grid = np.linspace(0.0, sol.horizon, max_kinks + 1)
        kinks = np.union1d(grid, kinks[np.searchsorted(kinks, grid).clip(0, kinks.size - 1)])
    return np.union1d(jumps, kinks)


def balance_terms(sol: ArcSolution, phis, tol: float = BALANCE_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Both sides of the weak balance on one arc for each test function.

    The left side is the space-time pairing of the solution with
    ``d_t phi + v d_x phi``, integrated over time panels bounded by the
    event times. The right side collects terminal, initial, outflow and
    inflow pairings.
    """
    phis = _require_smooth(phis)
    n = len(phis)
    T = sol.horizon
    v = sol.clock.velocity
    knots = _velocity_cuts(sol.clock)
    problem = sol.problem
    if problem.mu0.is_zero() and problem.nu0.is_zero():
        return np.zeros(n), np.zeros(n)

    if all(p.coeffs is not None for p in phis):
        integrand = _polynomial_integrand(sol, phis, knots)
    else:

        def integrand(t: float) -> np.ndarray:
            mu = sol.trace_space(t)
            return _family_pairing(mu, [lambda x, p=p: p.transport(v, x, t) for p in phis], knots)

    breaks = _panel_breaks(sol)
    lhs = _adaptive_family(integrand, breaks, n, tol)
    rhs = _family_pairing(sol.terminal(), [lambda x, p=p: p.value(x, T) for p in phis], knots)
    rhs -= _family_pairing(problem.mu0, [lambda x, p=p: p.value(x, 0.0) for p in phis], knots)
    none = np.empty(0)
    rhs += _family_pairing(sol.outflow(), [lambda s, p=p: p.value(1.0, s) for p in phis], none)
    rhs -= _family_pairing(problem.nu0, [lambda s, p=p: p.value(0.0, s) for p in phis], none)
    return lhs, rhs


def check_balance(sol: ArcSolution, phis) -> float:
    """Largest weak-balance residual ``|LHS - RHS|`` over the test family."""
    lhs, rhs = balance_terms(sol, phis)
    return float(np.max(np.abs(lhs - rhs), initial=0.0))


def mass_defect(sol: ArcSolution) -> float:
    p = sol.problem
    return abs(sol.terminal().total_mass() + sol.outflow().total_mass() - p.mu0.total_mass() - p.nu0.total_mass())


# -- stability estimates -------------------------------------------------------------


def _as_solution(x) -> ArcSolution:
    return x if isinstance(x, ArcSolution) else ArcSolution(x)


def estimate_continuity(a, b, cells: int = DEFAULT_LP_CELLS) -> tuple[float, float]:
    """Output and input distances of two problems on the same arc.

    Returns ``(lhs, rhs)`` with ``lhs = d(mu_T) + d(nu1)`` and
    ``rhs = d(mu0) + d(nu0)`` in the BL distance.
    """
    sa, sb = _as_solution(a), _as_solution(b)
    if sa.clock is not sb.clock and sa.clock.velocity != sb.clock.velocity:
        raise ValueError("continuity estimate needs both problems on the same arc velocity")
    if sa.horizon != sb.horizon:
        raise ValueError("continuity estimate needs the same horizon")
    pa, pb = sa.problem, sb.problem
    lhs = bl_distance(sa.terminal(), sb.terminal(), cells) + bl_distance(sa.outflow(), sb.outflow(), cells)
    rhs = bl_distance(pa.mu0, pb.mu0, cells) + bl_distance(pa.nu0, pb.nu0, cells)
    return lhs, rhs


def estimate_time_regularity(
    sol: ArcSolution, t: float, t_prev: float, cells: int = DEFAULT_LP_CELLS
) -> tuple[float, tuple[float, float]]:
    """Change of the solution between ``t_prev < t``.

    Returns ``(lhs, (t - t_prev, nu0([t_prev, t])))`` where ``lhs`` adds the
    BL distances of the space traces and of the outflows restricted to
    ``[0, t]`` and ``[0, t_prev]``.
    """
    if not t_prev < t:
        raise ValueError(f"need t_prev < t, got {t_prev!r} and {t!r}")
    T = sol.horizon
    if t_prev < 0 or t > T:
        raise ValueError(f"times must lie in [0, {T!r}]")
    if sol.problem.mu0.is_zero() and sol.problem.nu0.is_zero():
        return 0.0, (t - t_prev, 0.0)
    nu1 = sol.outflow()
    lhs = bl_distance(sol.trace_space(t), sol.trace_space(t_prev), cells)
    lhs += bl_distance(nu1.restrict(0.0, t), nu1.restrict(0.0, t_prev), cells)
    return lhs, (t - t_prev, sol.problem.nu0.masses_in(t_prev, t))
