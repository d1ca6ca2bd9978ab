"""Discrete probability measures on R^d, d in {1, 2}.

Two parametrizations are supported:

* Lagrangian: :class:`AtomicMeasure` (weighted atoms) and
  :class:`QuantileMeasure` (1D inverse-CDF samples on a uniform quantile
  grid, the state representation used by the JKO solver).
* Eulerian: :class:`GridDensity` (piecewise-constant density on a uniform
  grid, mass per unit length / area).

A QuantileMeasure has a dual reading that the rest of the package relies on:

* for transport purposes it is the atomic measure with mass ``cell_mass[i]``
  at ``positions[i]`` (so the 1D W2 between two states on the same quantile
  grid is exactly ``sum(m_i (x_i - y_i)^2)``),
* for density purposes (Lp norms, internal energies) it is the histogram
  with cell widths given by :meth:`QuantileMeasure.gaps` -- midpoints between
  neighboring nodes in the interior, one-sided at the two ends.  With this
  convention the spacing constraints ``x_{i+1} - x_i >= cell_mass_i / M``
  used by the JKO inner solver enforce ``||mu||_inf <= M`` exactly.

All measure objects are immutable after construction (arrays are marked
read-only), so they are safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MeasureError",
    "AtomicMeasure",
    "QuantileMeasure",
    "GridDensity",
    "make_atomic",
    "to_quantile",
    "quantile_function",
    "second_moment",
    "lp_norm",
    "push_forward",
    "measure_to_json",
    "measure_from_json",
]

MASS_TOL = 1e-10
GAP_FLOOR = 1e-12


class MeasureError(ValueError):
    """Invalid measure construction or an operation outside its domain."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise MeasureError(f"{what} contains NaN or infinite entries")


@dataclass(frozen=True)
class AtomicMeasure:
    """Finitely supported probability measure sum_i w_i delta_{x_i}.

    ``points`` has shape (n,) in 1D and (n, 2) in 2D; 1D points are stored
    sorted ascending with weights co-sorted.  Zero weights are allowed.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim == 1:
            dim = 1
        elif pts.ndim == 2 and pts.shape[1] in (1, 2):
            dim = pts.shape[1]
            if dim == 1:
                pts = pts[:, 0]
        else:
            raise MeasureError(f"unsupported point array shape {pts.shape}")
        if len(pts) == 0:
            raise MeasureError("empty support")
        if len(pts) != len(w):
            raise MeasureError("points and weights must have equal length")
        _check_finite(pts, "points")
        _check_finite(w, "weights")
        if np.any(w < -1e-15):
            raise MeasureError("negative weights")
        w = np.maximum(w, 0.0)
        if abs(w.sum() - 1.0) > 1e-12:
            raise MeasureError(f"weights sum to {w.sum()}, expected 1 within 1e-12")
        if dim == 1 and np.any(np.diff(pts) < 0):
            raise MeasureError("1D atoms must be sorted ascending (use make_atomic)")
        object.__setattr__(self, "points", _freeze(pts))
        object.__setattr__(self, "weights", _freeze(w))

    @property
    def dim(self) -> int:
        return 1 if self.points.ndim == 1 else self.points.shape[1]

    def __len__(self) -> int:
        return len(self.weights)

    def points_2d(self) -> np.ndarray:
        """Points as an (n, d) array regardless of dimension."""
        return self.points[:, None] if self.dim == 1 else self.points

    def total_mass(self) -> float:
        return float(self.weights.sum())


@dataclass(frozen=True)
class QuantileMeasure:
    """1D measure parametrized by inverse-CDF samples.

    ``q_nodes`` are strictly increasing in (0, 1) (midpoints of a uniform
    grid in the default construction), ``positions`` is the nondecreasing
    vector of quantile positions, and ``cell_mass`` the mass of the quantile
    cell around each node (differences of the underlying q grid).
    """

    q_nodes: np.ndarray
    positions: np.ndarray
    cell_mass: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q_nodes, dtype=float)
        x = np.asarray(self.positions, dtype=float)
        c = np.asarray(self.cell_mass, dtype=float)
        if q.ndim != 1 or len(q) < 1 or len(q) != len(x) or len(q) != len(c):
            raise MeasureError("q_nodes, positions, cell_mass must be equal-length 1D")
        _check_finite(q, "q_nodes")
        _check_finite(x, "positions")
        _check_finite(c, "cell_mass")
        if np.any(q <= 0.0) or np.any(q >= 1.0) or np.any(np.diff(q) <= 0):
            raise MeasureError("q_nodes must be strictly increasing inside (0,1)")
        if np.any(np.diff(x) < -1e-12):
            raise MeasureError("positions must be nondecreasing")
        x = np.maximum.accumulate(x)  # clean up -1e-13 scale noise
        if np.any(c <= 0.0):
            raise MeasureError("cell_mass must be positive")
        if abs(c.sum() - 1.0) > MASS_TOL:
            raise MeasureError(f"cell_mass sums to {c.sum()}, expected 1")
        object.__setattr__(self, "q_nodes", _freeze(q))
        object.__setattr__(self, "positions", _freeze(x))
        object.__setattr__(self, "cell_mass", _freeze(c))

    @property
    def dim(self) -> int:
        return 1

    def __len__(self) -> int:
        return len(self.q_nodes)

    def gaps(self) -> np.ndarray:
        """Spatial width of each quantile cell (midpoint convention)."""
        x = self.positions
        n = len(x)
        if n == 1:
            return np.zeros(1)
        g = np.empty(n)
        g[1:-1] = 0.5 * (x[2:] - x[:-2])
        g[0] = x[1] - x[0]
        g[-1] = x[-1] - x[-2]
        return g

    def densities(self) -> np.ndarray:
        """Cell densities cell_mass / gap; +inf on zero-width cells."""
        g = self.gaps()
        with np.errstate(divide="ignore"):
            d = np.where(g > 0, self.cell_mass / np.where(g > 0, g, 1.0), np.inf)
        return d

    def to_atomic(self) -> AtomicMeasure:
        return make_atomic(self.positions, self.cell_mass)

    def with_positions(self, x: np.ndarray) -> "QuantileMeasure":
        return QuantileMeasure(self.q_nodes, x, self.cell_mass)


@dataclass(frozen=True)
class GridDensity:
    """Piecewise-constant probability density on a uniform grid.

    1D: ``values[i]`` is the density on ``[origin + i*spacing,
    origin + (i+1)*spacing)``.  2D: ``values[iy, ix]`` on the corresponding
    square cell, ``origin`` is the lower-left corner (pair).
    """

    origin: object
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        sp = float(self.spacing)
        if sp <= 0:
            raise MeasureError("spacing must be positive")
        if v.ndim not in (1, 2):
            raise MeasureError("values must be a 1D or 2D array")
        _check_finite(v, "values")
        if np.any(v < 0):
            raise MeasureError("density values must be nonnegative")
        cell = sp ** v.ndim
        total = cell * v.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise MeasureError(f"grid mass {total}, expected 1 within 1e-10")
        if v.ndim == 1:
            org = float(np.asarray(self.origin, dtype=float))
        else:
            org = _freeze(np.asarray(self.origin, dtype=float).reshape(2))
        object.__setattr__(self, "origin", org)
        object.__setattr__(self, "spacing", sp)
        object.__setattr__(self, "values", _freeze(v))

    @property
    def dim(self) -> int:
        return self.values.ndim

    def cell_volume(self) -> float:
        return self.spacing ** self.dim

    def midpoints(self) -> np.ndarray:
        if self.dim == 1:
            n = len(self.values)
            return self.origin + (np.arange(n) + 0.5) * self.spacing
        ny, nx = self.values.shape
        xs = self.origin[0] + (np.arange(nx) + 0.5) * self.spacing
        ys = self.origin[1] + (np.arange(ny) + 0.5) * self.spacing
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def cell_masses(self) -> np.ndarray:
        return self.values.ravel() * self.cell_volume()

    def to_atomic(self) -> AtomicMeasure:
        """Midpoint atomization (drops empty cells)."""
        m = self.cell_masses()
        pts = self.midpoints()
        keep = m > 0
        return make_atomic(pts[keep], m[keep])


def make_atomic(points, weights) -> AtomicMeasure:
    """Build an atomic measure: renormalize weights, co-sort 1D supports."""
    pts = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if pts.size == 0:
        raise MeasureError("empty support")
    _check_finite(pts, "points")
    _check_finite(w, "weights")
    if pts.ndim == 2 and pts.shape[1] == 1:
        pts = pts[:, 0]
    if w.ndim != 1 or len(w) != (len(pts) if pts.ndim >= 1 else 1):
        raise MeasureError("points and weights must have equal length")
    if np.any(w < 0):
        raise MeasureError("negative weights")
    s = w.sum()
    if s <= 0:
        raise MeasureError("weights must have positive sum")
    w = w / s
    if pts.ndim == 1:
        order = np.argsort(pts, kind="stable")
        pts, w = pts[order], w[order]
    return AtomicMeasure(pts, w)


def quantile_function(measure, q: np.ndarray) -> np.ndarray:
    """Generalized inverse CDF of a 1D measure at quantile levels ``q``."""
    q = np.asarray(q, dtype=float)
    if isinstance(measure, AtomicMeasure):
        if measure.dim != 1:
            raise MeasureError("quantile function requires a 1D measure")
        cum = np.cumsum(measure.weights)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, q, side="left")
        idx = np.clip(idx, 0, len(cum) - 1)
        return measure.points[idx]
    if isinstance(measure, QuantileMeasure):
        return quantile_function(measure.to_atomic(), q)
    if isinstance(measure, GridDensity):
        if measure.dim != 1:
            raise MeasureError("quantile function requires a 1D measure")
        m = measure.cell_masses()
        edges_mass = np.concatenate([[0.0], np.cumsum(m)])
        edges_mass[-1] = 1.0
        n = len(m)
        idx = np.searchsorted(edges_mass, q, side="left") - 1
        idx = np.clip(idx, 0, n - 1)
        # skip forward over empty cells so the inverse is the infimum
        while np.any(m[idx] <= 0):
            idx = np.where((m[idx] <= 0) & (idx < n - 1), idx + 1, idx)
            if np.all((m[idx] > 0) | (idx == n - 1)):
                break
        left = measure.origin + idx * measure.spacing
        frac = (q - edges_mass[idx]) / np.where(m[idx] > 0, m[idx], 1.0)
        frac = np.clip(frac, 0.0, 1.0)
        return left + frac * measure.spacing
    raise MeasureError(f"unsupported measure type {type(measure)!r}")


def to_quantile(measure, n_nodes: int = 256) -> QuantileMeasure:
    """Quantile (inverse-CDF) representation on midpoint nodes (i+1/2)/n."""
    if getattr(measure, "dim", None) != 1:
        raise MeasureError("to_quantile requires a 1D measure")
    if n_nodes < 2:
        raise MeasureError("n_nodes must be >= 2")
    q = (np.arange(n_nodes) + 0.5) / n_nodes
    x = quantile_function(measure, q)
    c = np.full(n_nodes, 1.0 / n_nodes)
    return QuantileMeasure(q, x, c)


def second_moment(measure) -> float:
    """integral |x|^2 dmu, by atom sums or cell-midpoint quadrature."""
    if isinstance(measure, AtomicMeasure):
        p = measure.points_2d()
        return float(np.sum(measure.weights * np.sum(p * p, axis=1)))
    if isinstance(measure, QuantileMeasure):
        return float(np.sum(measure.cell_mass * measure.positions**2))
    if isinstance(measure, GridDensity):
        pts = measure.midpoints()
        sq = pts**2 if measure.dim == 1 else np.sum(pts * pts, axis=1)
        return float(np.sum(measure.cell_masses() * sq))
    raise MeasureError(f"unsupported measure type {type(measure)!r}")


def lp_norm(measure, p) -> float:
    """Discrete L^p norm of the density; math.inf where undefined.

    Atomic measures have no density: the norm is +inf for p > 1 (and 1 for
    p = 1).  Quantile measures with zero-width cells likewise report +inf
    for p > 1.
    """
    if p == 1:
        return 1.0
    if isinstance(measure, AtomicMeasure):
        return math.inf if p > 1 else 1.0
    if isinstance(measure, QuantileMeasure):
        g = measure.gaps()
        c = measure.cell_mass
        if np.any(g <= 0):
            return math.inf
        dens = c / g
        if p == math.inf or p == "inf":
            return float(dens.max())
        return float(np.sum(g * dens ** float(p)) ** (1.0 / float(p)))
    if isinstance(measure, GridDensity):
        v = measure.values.ravel()
        if p == math.inf or p == "inf":
            return float(v.max())
        return float(np.sum(measure.cell_volume() * v ** float(p)) ** (1.0 / float(p)))
    raise MeasureError(f"unsupported measure type {type(measure)!r}")


def push_forward(measure: AtomicMeasure, mapping) -> AtomicMeasure:
    """Image measure under a pointwise map; weights are carried over."""
    if not isinstance(measure, AtomicMeasure):
        raise MeasureError("push_forward is defined for atomic measures")
    pts = measure.points_2d()
    img = np.asarray([np.asarray(mapping(x), dtype=float) for x in
                      (pts[:, 0] if measure.dim == 1 else pts)], dtype=float)
    if not np.all(np.isfinite(img)):
        raise MeasureError("map produced NaN or infinite image points")
    if measure.dim == 1:
        img = img.reshape(len(measure))
    return make_atomic(img, measure.weights)


# ---------------------------------------------------------------------------
# JSON serialization (plain decimal arrays, no binary format)
# ---------------------------------------------------------------------------

def measure_to_json(measure) -> str:
    if isinstance(measure, AtomicMeasure):
        payload = {
            "kind": "atomic",
            "dim": measure.dim,
            "points": measure.points.tolist(),
            "weights": measure.weights.tolist(),
        }
    elif isinstance(measure, QuantileMeasure):
        payload = {
            "kind": "quantile",
            "q_nodes": measure.q_nodes.tolist(),
            "positions": measure.positions.tolist(),
            "cell_mass": measure.cell_mass.tolist(),
        }
    elif isinstance(measure, GridDensity):
        payload = {
            "kind": "grid",
            "dim": measure.dim,
            "origin": measure.origin if measure.dim == 1 else list(measure.origin),
            "spacing": measure.spacing,
            "values": measure.values.tolist(),
        }
    else:
        raise MeasureError(f"unsupported measure type {type(measure)!r}")
    return json.dumps(payload)


def measure_from_json(text):
    data = json.loads(text) if isinstance(text, str) else text
    kind = data.get("kind")
    if kind == "atomic":
        return AtomicMeasure(np.asarray(data["points"], dtype=float),
                             np.asarray(data["weights"], dtype=float))
    if kind == "quantile":
        return QuantileMeasure(np.asarray(data["q_nodes"], dtype=float),
                               np.asarray(data["positions"], dtype=float),
                               np.asarray(data["cell_mass"], dtype=float))
    if kind == "grid":
        return GridDensity(data["origin"], data["spacing"],
                           np.asarray(data["values"], dtype=float))
    raise MeasureError(f"unknown measure kind {kind!r}")
