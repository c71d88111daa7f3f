"""Finite positive measures on an interval: Dirac atoms plus a step density.

A :class:`HybridMeasure` stores

* atoms as sorted, merged ``(position, mass)`` arrays, all masses ``> 0``;
* a piecewise-constant density on cells ``[edges[l], edges[l+1])`` that
  cover the whole domain, all values ``>= 0``.

The same type is used for space traces on ``[0, 1]`` and for time measures
(inflows, outflows, well aggregates) on ``[0, T]``.
"""

from __future__ import annotations

import math
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from .quadrature import composite_gauss

POSITION_MERGE_TOL = 1e-12
DEFAULT_LP_CELLS = 2048
# above this many distinct atoms, atoms are split linearly onto the LP grid
MAX_ATOM_NODES = 20000
_DOMAIN_SLACK = 1e-9


def _readonly(a) -> np.ndarray:
    arr = np.ascontiguousarray(a, dtype=float)
    arr.setflags(write=False)
    return arr


def _merge_atoms(pos: np.ndarray, mass: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    keep = mass > 0
    pos, mass = pos[keep], mass[keep]
    if pos.size == 0:
        return pos, mass
    order = np.argsort(pos, kind="stable")
    pos, mass = pos[order], mass[order]
    if pos.size == 1:
        return pos, mass
    new_group = np.concatenate([[True], np.diff(pos) > POSITION_MERGE_TOL])
    if new_group.all():
        return pos, mass
    gid = np.cumsum(new_group) - 1
    return pos[new_group], np.bincount(gid, weights=mass)


def _compact_density(lo, hi, edges, values):
    """Cover ``[lo, hi]``, drop empty cells, merge equal neighbours."""
    edges = np.asarray(edges, dtype=float)
    values = np.asarray(values, dtype=float)
    if edges.size < 2:
        return np.array([lo, hi]), np.array([0.0])
    edges = np.clip(edges, lo, hi)
    if edges[0] > lo:
        edges = np.concatenate([[lo], edges])
        values = np.concatenate([[0.0], values])
    if edges[-1] < hi:
        edges = np.concatenate([edges, [hi]])
        values = np.concatenate([values, [0.0]])
    edges[0], edges[-1] = lo, hi
    width = np.diff(edges)
    keep = width > 0
    if not keep.all():
        values = values[keep]
        edges = np.concatenate([[edges[0]], edges[1:][keep]])
    if values.size == 0:
        return np.array([lo, hi]), np.array([0.0])
    change = np.concatenate([[True], values[1:] != values[:-1]])
    values = values[change]
    edges = np.concatenate([edges[:-1][change], [edges[-1]]])
    return edges, values


class HybridMeasure:
    """Positive measure on ``domain = (lo, hi)``.

    Parameters
    ----------
    domain : (float, float)
        Closed interval carrying the measure.
    atoms : sequence of (position, mass)
        Dirac masses; equal positions (within ``1e-12``) are merged and
        zero masses dropped.
    density : sequence of (lo, hi, value)
        Constant density pieces; overlapping pieces add up.
    """

    __slots__ = ("lo", "hi", "positions", "masses", "edges", "values")

    def __init__(self, domain, atoms: Iterable = (), density: Iterable = ()):
        lo, hi = (float(d) for d in domain)
        if not hi > lo:
            raise ValueError(f"empty domain [{lo!r}, {hi!r}]")
        atoms = np.asarray(list(atoms), dtype=float).reshape(-1, 2)
        if np.any(atoms[:, 1] < 0):
            raise ValueError("atom masses must be non-negative")
        pieces = np.asarray(list(density), dtype=float).reshape(-1, 3)
        if np.any(pieces[:, 2] < 0):
            raise ValueError("density values must be non-negative")
        if np.any(pieces[:, 1] < pieces[:, 0]):
            raise ValueError("density pieces need lo <= hi")
        for a, b, _ in pieces:
            self._check_inside(lo, hi, np.array([a, b]), "density piece")
        edges = np.unique(np.concatenate([[lo, hi], np.clip(pieces[:, :2].ravel(), lo, hi)]))
        values = np.zeros(edges.size - 1)
        for a, b, c in pieces:
            i, j = np.searchsorted(edges, [max(a, lo), min(b, hi)])
            values[i:j] += c
        self._set(lo, hi, atoms[:, 0], atoms[:, 1], edges, values)

    @staticmethod
    def _check_inside(lo, hi, x, what):
        slack = _DOMAIN_SLACK * max(1.0, hi - lo)
        if x.size and (np.min(x) < lo - slack or np.max(x) > hi + slack):
            raise ValueError(f"{what} outside the domain [{lo!r}, {hi!r}]")

    def _set(self, lo, hi, pos, mass, edges, values):
        pos = np.asarray(pos, dtype=float)
        self._check_inside(lo, hi, pos, "atom")
        pos, mass = _merge_atoms(np.clip(pos, lo, hi), np.asarray(mass, dtype=float))
        edges, values = _compact_density(lo, hi, edges, values)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "positions", _readonly(pos))
        object.__setattr__(self, "masses", _readonly(mass))
        object.__setattr__(self, "edges", _readonly(edges))
        object.__setattr__(self, "values", _readonly(values))

    def __setattr__(self, name, value):
        raise AttributeError("HybridMeasure is immutable")

    @classmethod
    def from_arrays(cls, domain, positions=(), masses=(), edges=(), values=()) -> "HybridMeasure":
        """Build from atom arrays and sorted, non-overlapping density cells.

        Cells need not cover the domain; uncovered parts get zero density.
        Tiny negative densities from round-off are clipped to zero.
        """
        self = cls.__new__(cls)
        lo, hi = (float(d) for d in domain)
        masses = np.asarray(masses, dtype=float)
        if np.any(masses < 0):
            raise ValueError("atom masses must be non-negative")
        values = np.asarray(values, dtype=float)
        if values.size and np.min(values) < -1e-12 * max(1.0, float(np.max(np.abs(values)))):
            raise ValueError("density values must be non-negative")
        self._set(lo, hi, positions, masses, edges, np.maximum(values, 0.0))
        return self

    @classmethod
    def zero(cls, domain) -> "HybridMeasure":
        return cls.from_arrays(domain)

    # -- inspection -------------------------------------------------------

    @property
    def domain(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def atom_mass(self) -> float:
        return float(np.sum(self.masses))

    @property
    def density_mass(self) -> float:
        return float(np.sum(self.values * np.diff(self.edges)))

    def total_mass(self) -> float:
        return self.atom_mass + self.density_mass

    def is_zero(self) -> bool:
        return self.masses.size == 0 and not np.any(self.values > 0)

    def density_at(self, x):
        k = np.searchsorted(self.edges, x, side="right") - 1
        return self.values[np.clip(k, 0, self.values.size - 1)]

    def cumulative_density(self, x):
        """Density mass on ``[lo, x]`` (exact, piecewise linear in ``x``)."""
        cum = np.concatenate([[0.0], np.cumsum(self.values * np.diff(self.edges))])
        return np.interp(x, self.edges, cum)

    def support_pieces(self) -> list[tuple[float, float, float]]:
        nz = self.values > 0
        return [(float(a), float(b), float(c)) for a, b, c in zip(self.edges[:-1][nz], self.edges[1:][nz], self.values[nz])]

    def atoms(self) -> list[tuple[float, float]]:
        return [(float(x), float(m)) for x, m in zip(self.positions, self.masses)]

    def masses_in(self, a: float, b: float) -> float:
        """Mass of the closed interval ``[a, b]``."""
        return self.restrict(a, b).total_mass()

    # -- pairing ------------------------------------------------------------

    def pair(self, phi, tol: float = 1e-10) -> float:
        """``<mu, phi>`` for a :class:`TestFunction` (exact) or a vectorised callable."""
        if isinstance(phi, TestFunction):
            atoms = float(np.dot(self.masses, phi(self.positions))) if self.masses.size else 0.0
            grid = np.union1d(self.edges, np.clip(phi.breakpoints, self.lo, self.hi))
            left, right = grid[:-1], grid[1:]
            c = self.density_at(0.5 * (left + right))
            dens = float(np.sum(c * (right - left) * 0.5 * (phi(left) + phi(right))))
            return atoms + dens
        f = _vectorised(phi)
        atoms = float(np.dot(self.masses, f(self.positions))) if self.masses.size else 0.0
        nz = self.values > 0
        if not nz.any():
            return atoms
        a, b, c = self.edges[:-1][nz], self.edges[1:][nz], self.values[nz]
        dens = composite_gauss(lambda x: f(x) * self.density_at(x), a, b, tol / max(1, a.size))
        return atoms + dens

    # -- cone algebra -------------------------------------------------------

    def scale(self, c: float) -> "HybridMeasure":
        c = float(c)
        if not c >= 0 or not math.isfinite(c):
            raise ValueError(f"scale factor must be finite and non-negative, got {c!r}")
        return HybridMeasure.from_arrays(self.domain, self.positions, self.masses * c, self.edges, self.values * c)

    def add(self, other: "HybridMeasure") -> "HybridMeasure":
        _same_domain(self, other)
        edges = np.union1d(self.edges, other.edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        values = self.density_at(mid) + other.density_at(mid)
        return HybridMeasure.from_arrays(
            self.domain,
            np.concatenate([self.positions, other.positions]),
            np.concatenate([self.masses, other.masses]),
            edges,
            values,
        )

    __add__ = add

    def restrict(self, a: float, b: float, closed_left: bool = True, closed_right: bool = True) -> "HybridMeasure":
        """``mu`` restricted to ``[a, b]`` (endpoint inclusion for atoms only)."""
        if a > b:
            raise ValueError(f"restrict needs a <= b, got [{a!r}, {b!r}]")
        x = self.positions
        keep = (x >= a if closed_left else x > a) & (x <= b if closed_right else x < b)
        edges = np.union1d(self.edges, np.clip([a, b], self.lo, self.hi))
        mid = 0.5 * (edges[:-1] + edges[1:])
        values = np.where((mid > a) & (mid < b), self.density_at(mid), 0.0)
        return HybridMeasure.from_arrays(self.domain, x[keep], self.masses[keep], edges, values)

    def shifted(self, offset: float, domain) -> "HybridMeasure":
        """Translate by ``offset`` onto ``domain``, which must contain the image."""
        lo, hi = (float(d) for d in domain)
        pos = self.positions + offset
        edges = self.edges + offset
        nz = self.values > 0
        inner = np.concatenate([edges[:-1][nz], edges[1:][nz]])
        self._check_inside(lo, hi, inner, "shifted density")
        return HybridMeasure.from_arrays((lo, hi), pos, self.masses, edges, self.values)

    # -- comparison / serialisation ----------------------------------------------

    def to_dict(self) -> dict:
        return {
            "domain": [self.lo, self.hi],
            "atoms": [[x, m] for x, m in self.atoms()],
            "density": [list(p) for p in self.support_pieces()],
        }

    @classmethod
    def from_dict(cls, domain, data: dict) -> "HybridMeasure":
        return cls(domain, data.get("atoms", ()) or (), data.get("density", ()) or ())

    def same_as(self, other: "HybridMeasure") -> bool:
        return (
            self.domain == other.domain
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.masses, other.masses)
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.values, other.values)
        )

    def __repr__(self):
        return (
            f"HybridMeasure(domain={self.domain}, atoms={self.atoms()}, "
            f"density={self.support_pieces()})"
        )

    # -- LP weights -------------------------------------------------------

    def hat_weights(self, grid: np.ndarray) -> np.ndarray:
        """Pairings of the measure with the hat functions of ``grid``.

        Exact: atoms are split linearly between their neighbouring nodes and
        the density is integrated against each hat in closed form.
        """
        n = grid.size
        w = np.zeros(n)
        width = np.diff(grid)
        if self.masses.size:
            k = np.clip(np.searchsorted(grid, self.positions, side="right") - 1, 0, n - 2)
            alpha = np.clip((self.positions - grid[k]) / width[k], 0.0, 1.0)
            np.add.at(w, k, self.masses * (1.0 - alpha))
            np.add.at(w, k + 1, self.masses * alpha)
        nz = self.values > 0
        if nz.any():
            pts = np.union1d(grid, self.edges[1:-1])
            p, q = pts[:-1], pts[1:]
            mid = 0.5 * (p + q)
            c = self.density_at(mid)
            use = c > 0
            p, q, mid, c = p[use], q[use], mid[use], c[use]
            k = np.clip(np.searchsorted(grid, mid, side="right") - 1, 0, n - 2)
            m = c * (q - p)
            np.add.at(w, k, m * (grid[k + 1] - mid) / width[k])
            np.add.at(w, k + 1, m * (mid - grid[k]) / width[k])
        return w


def _vectorised(phi: Callable) -> Callable[[np.ndarray], np.ndarray]:
    def f(x):
        x = np.asarray(x, dtype=float)
        try:
            out = np.asarray(phi(x), dtype=float)
            if out.shape == x.shape:
                return out
            return np.broadcast_to(out, x.shape).astype(float)
        except (TypeError, ValueError):
            return np.array([float(phi(float(v))) for v in x.ravel()]).reshape(x.shape)

    return f


def _same_domain(mu: HybridMeasure, nu: HybridMeasure) -> None:
    if mu.domain != nu.domain:
        raise ValueError(f"domain mismatch: {mu.domain} vs {nu.domain}")


def sum_measures(domain, measures: Sequence[HybridMeasure]) -> HybridMeasure:
    """Sum of many measures on the same domain in one pass."""
    measures = list(measures)
    if not measures:
        return HybridMeasure.zero(domain)
    for m in measures:
        if m.domain != tuple(float(d) for d in domain):
            raise ValueError(f"domain mismatch: {m.domain} vs {tuple(domain)}")
    if len(measures) == 1:
        return measures[0]
    edges = np.unique(np.concatenate([m.edges for m in measures]))
    mid = 0.5 * (edges[:-1] + edges[1:])
    values = np.zeros(mid.size)
    for m in measures:
        values += m.density_at(mid)
    return HybridMeasure.from_arrays(
        domain,
        np.concatenate([m.positions for m in measures]),
        np.concatenate([m.masses for m in measures]),
        edges,
        values,
    )


class TestFunction:
    """Piecewise-linear function given by breakpoints and nodal values."""

    __test__ = False  # not a pytest class

    def __init__(self, breakpoints, values):
        self.breakpoints = _readonly(breakpoints)
        self.values = _readonly(values)
        if self.breakpoints.ndim != 1 or self.breakpoints.shape != self.values.shape or self.breakpoints.size < 1:
            raise ValueError("breakpoints and values must be matching 1-D arrays")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        self.sup_norm = float(np.max(np.abs(self.values)))
        if self.breakpoints.size > 1:
            self.lipschitz = float(np.max(np.abs(np.diff(self.values) / np.diff(self.breakpoints))))
        else:
            self.lipschitz = 0.0

    @classmethod
    def constant(cls, c: float, domain=(0.0, 1.0)) -> "TestFunction":
        return cls(list(domain), [c, c])

    @property
    def bl_norm(self) -> float:
        return self.sup_norm + self.lipschitz

    def __call__(self, x):
        return np.interp(x, self.breakpoints, self.values)


class StepWeight:
    """Step function ``t -> w(t)`` with right-open pieces (last piece closed)."""

    def __init__(self, breakpoints, values):
        self.breakpoints = _readonly(breakpoints)
        self.values = _readonly(values)
        if self.breakpoints.size != self.values.size + 1 or self.values.size < 1:
            raise ValueError("need one more breakpoint than values")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ValueError("breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, c: float, domain) -> "StepWeight":
        return cls(list(domain), [c])

    def __call__(self, t):
        k = np.searchsorted(self.breakpoints, t, side="right") - 1
        return self.values[np.clip(k, 0, self.values.size - 1)]


def weight_by(mu: HybridMeasure, w) -> HybridMeasure:
    """The measure with density ``w(t)`` against ``mu``, for a step function ``w``.

    ``w`` needs ``breakpoints``, ``values`` (each in ``[0, 1]``) and a
    vectorised call with right-open pieces, like :class:`StepWeight`.
    """
    vals = np.asarray(w.values, dtype=float)
    if np.any(vals < 0) or np.any(vals > 1):
        raise ValueError("distribution weights must lie in [0, 1]")
    masses = mu.masses * w(mu.positions) if mu.masses.size else mu.masses
    inner = np.asarray(w.breakpoints, dtype=float)
    inner = inner[(inner > mu.lo) & (inner < mu.hi)]
    edges = np.union1d(mu.edges, inner)
    mid = 0.5 * (edges[:-1] + edges[1:])
    values = mu.density_at(mid) * w(mid)
    return HybridMeasure.from_arrays(mu.domain, mu.positions, masses, edges, values)


def _lp_grid(lo: float, hi: float, cells: int, atom_positions: np.ndarray) -> np.ndarray:
    grid = np.linspace(lo, hi, cells + 1)
    if atom_positions.size <= MAX_ATOM_NODES:
        grid = np.union1d(grid, atom_positions)
    tol = POSITION_MERGE_TOL * max(1.0, hi - lo)
    keep = np.concatenate([[True], np.diff(grid) > tol])
    grid = grid[keep]
    if grid[-1] != hi:
        if hi - grid[-1] <= tol:
            grid[-1] = hi
        else:
            grid = np.append(grid, hi)
    return grid


def bl_norm_of_weights(grid: np.ndarray, w: np.ndarray) -> float:
    """``max <w, phi>`` over grid functions with ``sup|phi| + Lip(phi) <= 1``."""
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if scale == 0.0:
        return 0.0
    if np.all(w >= 0) or np.all(w <= 0):
        return float(abs(np.sum(w)))
    n = grid.size
    h = np.diff(grid)
    eye = sparse.identity(n, format="csr")
    ones = sparse.csr_matrix(np.ones((n, 1)))
    zeros_n = sparse.csr_matrix((n, 1))
    diff = sparse.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n), format="csr")
    zeros_e = sparse.csr_matrix((n - 1, 1))
    hcol = sparse.csr_matrix(h[:, None])
    a_ub = sparse.vstack(
        [
            sparse.hstack([eye, -ones, zeros_n]),
            sparse.hstack([-eye, -ones, zeros_n]),
            sparse.hstack([diff, zeros_e, -hcol]),
            sparse.hstack([-diff, zeros_e, -hcol]),
            sparse.csr_matrix(np.concatenate([np.zeros(n), [1.0, 1.0]])[None, :]),
        ],
        format="csr",
    )
    b_ub = np.concatenate([np.zeros(2 * n + 2 * (n - 1)), [1.0]])
    cost = np.concatenate([-w / scale, [0.0, 0.0]])
    bounds = [(-1.0, 1.0)] * n + [(0.0, 1.0), (0.0, 1.0)]
    res = linprog(
        cost,
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        raise RuntimeError(f"BL linear program failed: {res.message}")
    return max(0.0, -float(res.fun) * scale)


def bl_distance(
    mu: HybridMeasure,
    nu: HybridMeasure,
    cells: int = DEFAULT_LP_CELLS,
    h: float | None = None,
) -> float:
    """Bounded-Lipschitz distance ``||mu - nu||*_BL`` by linear programming.

    The supremum is taken over continuous piecewise-linear test functions on
    a uniform grid of ``cells`` intervals (or spacing ``h``) refined by the
    atom positions of both measures, so the value is a lower bound within
    ``O(h * mass)`` of the exact one.
    """
    _same_domain(mu, nu)
    lo, hi = mu.domain
    if h is not None:
        if h <= 0:
            raise ValueError("grid spacing must be positive")
        cells = max(1, math.ceil((hi - lo) / h - 1e-9))
    atom_positions = np.union1d(mu.positions, nu.positions)
    grid = _lp_grid(lo, hi, int(cells), atom_positions)
    w = mu.hat_weights(grid) - nu.hat_weights(grid)
    return bl_norm_of_weights(grid, w)
