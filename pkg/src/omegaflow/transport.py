"""Exact optimal transport for squared Euclidean cost on finite supports.

Provides the 1D monotone (CDF-matching) coupling, an exact LP solver
(transportation network simplex with deterministic pivoting), Wasserstein
geodesics, plan gluing over a common base measure, generalized geodesics,
and the plan-level pseudo-metric measured through the glued structure.

Cost convention throughout: squared Euclidean distance  c(x, y) = |x - y|^2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .measures import (
    AtomicMeasure,
    GridDensity,
    QuantileMeasure,
    make_atomic,
    to_quantile,
)

__all__ = [
    "TransportError",
    "TransportPlan",
    "GluedPlan",
    "w2_1d",
    "w2_exact",
    "geodesic",
    "glue",
    "generalized_geodesic",
    "pseudo_distance",
]

MARGINAL_TOL = 1e-10
DEFAULT_SUPPORT_CAP = 512
_RC_TOL = 1e-11  # reduced-cost optimality threshold


class TransportError(ValueError):
    """Invalid transport inputs (dimension mismatch, cap exceeded, ...)."""


def _as_atomic_1d(mu) -> AtomicMeasure:
    if isinstance(mu, AtomicMeasure):
        if mu.dim != 1:
            raise TransportError("w2_1d requires 1D measures")
        return mu
    if isinstance(mu, QuantileMeasure):
        return mu.to_atomic()
    if isinstance(mu, GridDensity):
        if mu.dim != 1:
            raise TransportError("w2_1d requires 1D measures")
        return to_quantile(mu, max(1024, 8 * len(mu.values))).to_atomic()
    raise TransportError(f"unsupported measure type {type(mu)!r}")


def _sq_cost_matrix(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    diff = xs[:, None, :] - ys[None, :, :]
    return np.sum(diff * diff, axis=2)


@dataclass(frozen=True)
class TransportPlan:
    """Coupling matrix between two atomic measures.

    Row sums reproduce the source weights and column sums the target
    weights, each within 1e-10.
    """

    source: AtomicMeasure
    target: AtomicMeasure
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.shape != (len(self.source), len(self.target)):
            raise TransportError("plan matrix shape does not match supports")
        if np.any(m < -1e-14):
            raise TransportError("negative coupling mass")
        m = np.maximum(m, 0.0)
        if np.max(np.abs(m.sum(axis=1) - self.source.weights)) > MARGINAL_TOL:
            raise TransportError("row sums do not match source weights")
        if np.max(np.abs(m.sum(axis=0) - self.target.weights)) > MARGINAL_TOL:
            raise TransportError("column sums do not match target weights")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def cost(self) -> float:
        """Total squared-distance cost of the coupling."""
        c = _sq_cost_matrix(self.source.points_2d(), self.target.points_2d())
        return float(np.sum(self.matrix * c))

    def pairs(self):
        """Nonzero entries as (x, y, mass) arrays of shape (k,d),(k,d),(k,)."""
        i, j = np.nonzero(self.matrix)
        return (self.source.points_2d()[i], self.target.points_2d()[j],
                self.matrix[i, j])

    def to_csv(self, path) -> None:
        xs, ys, ms = self.pairs()
        d = xs.shape[1]
        cols = [f"x{k}" for k in range(d)] + [f"y{k}" for k in range(d)] + ["mass"]
        lines = ["# cost convention: squared Euclidean distance |x-y|^2",
                 ",".join(cols)]
        for a, b, m in zip(xs, ys, ms):
            vals = [format(v, ".17g") for v in (*a, *b, m)]
            lines.append(",".join(vals))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def to_json(self) -> str:
        xs, ys, ms = self.pairs()
        return json.dumps({
            "cost": "squared Euclidean distance |x-y|^2",
            "x": xs.tolist(), "y": ys.tolist(), "mass": ms.tolist(),
        })


# ---------------------------------------------------------------------------
# 1D monotone coupling
# ---------------------------------------------------------------------------

def w2_1d(mu, nu, return_plan: bool = True):
    """W2 between 1D measures via the monotone CDF-matching coupling.

    Returns ``(distance, plan)`` (or just the distance when
    ``return_plan=False``).  Optimality of the monotone coupling in 1D is
    cross-checked against :func:`w2_exact` in the test suite.
    """
    a = _as_atomic_1d(mu)
    b = _as_atomic_1d(nu)
    wa = a.weights.copy()
    wb = b.weights.copy()
    xs, ys = a.points, b.points
    i = j = 0
    entries = []
    cost = 0.0
    m, n = len(wa), len(wb)
    while i < m and j < n:
        t = min(wa[i], wb[j])
        if t > 0:
            d = xs[i] - ys[j]
            cost += t * d * d
            entries.append((i, j, t))
        wa[i] -= t
        wb[j] -= t
        # min() zeroes at least one side exactly, so this always advances
        if wa[i] <= 0.0:
            i += 1
        if j < n and wb[j] <= 0.0:
            j += 1
    dist = float(np.sqrt(max(cost, 0.0)))
    if not return_plan:
        return dist
    mat = np.zeros((m, n))
    for i, j, t in entries:
        mat[i, j] += t
    return dist, TransportPlan(a, b, mat)


# ---------------------------------------------------------------------------
# Exact LP: transportation network simplex
# ---------------------------------------------------------------------------

def _northwest_corner(a, b):
    """Deterministic initial basic feasible solution (spanning tree)."""
    m, n = len(a), len(b)
    flow = np.zeros((m, n))
    basis = []
    ra, rb = a.copy(), b.copy()
    i = j = 0
    while True:
        t = min(ra[i], rb[j])
        flow[i, j] = t
        basis.append((i, j))
        ra[i] -= t
        rb[j] -= t
        if i == m - 1 and j == n - 1:
            break
        if ra[i] <= rb[j] and i < m - 1:
            i += 1
        elif j < n - 1:
            j += 1
        else:
            i += 1
    return flow, basis


def _potentials(basis, C, m, n):
    """Node potentials u, v on the basis spanning tree (root u_0 = 0)."""
    adj = [[] for _ in range(m + n)]
    for k, (i, j) in enumerate(basis):
        adj[i].append((m + j, k))
        adj[m + j].append((i, k))
    u = np.zeros(m)
    v = np.zeros(n)
    seen = np.zeros(m + n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        node = stack.pop()
        for nbr, k in adj[node]:
            if seen[nbr]:
                continue
            seen[nbr] = True
            i, j = basis[k]
            if nbr >= m:
                v[j] = C[i, j] - u[i]
            else:
                u[i] = C[i, j] - v[j]
            stack.append(nbr)
    if not seen.all():
        raise RuntimeError("basis is not a spanning tree")
    return u, v


def _tree_path(basis, m, n, start, goal):
    """Node path from ``start`` to ``goal`` along the basis tree."""
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    parent = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for nbr in adj[node]:
            if nbr not in parent:
                parent[nbr] = node
                stack.append(nbr)
    path = [goal]
    while path[-1] != start:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def _network_simplex(a, b, C):
    """Optimal flow for the dense transportation problem.

    Entering arc: most negative reduced cost, lexicographic (row-major)
    tie-breaking; after a pivot budget, Bland's rule (first negative arc
    in row-major order) guarantees termination under degeneracy.  The
    leaving arc is the first minimum-flow backward arc along the cycle.
    """
    m, n = C.shape
    flow, basis = _northwest_corner(a, b)
    in_basis = np.zeros((m, n), dtype=bool)
    for i, j in basis:
        in_basis[i, j] = True
    bland_after = 60 * (m + n)
    max_pivots = 400 * (m + n) + 10000
    pivots = 0
    while True:
        u, v = _potentials(basis, C, m, n)
        R = C - u[:, None] - v[None, :]
        if pivots < bland_after:
            idx = int(np.argmin(R))
            if R.flat[idx] >= -_RC_TOL:
                break
        else:
            neg = np.flatnonzero(R.ravel() < -_RC_TOL)
            if len(neg) == 0:
                break
            idx = int(neg[0])
        pivots += 1
        if pivots > max_pivots:
            raise RuntimeError("network simplex pivot budget exceeded")
        ei, ej = divmod(idx, n)
        path = _tree_path(basis, m, n, ei, m + ej)
        # cycle = entering arc (+) then alternating -,+,... along the path
        arcs = []
        for s, t in zip(path[:-1], path[1:]):
            i, j = (s, t - m) if s < m else (t, s - m)
            arcs.append((i, j))
        signs = [-1 if k % 2 == 0 else +1 for k in range(len(arcs))]
        theta = np.inf
        leave_idx = -1
        for k, ((i, j), s) in enumerate(zip(arcs, signs)):
            if s < 0 and flow[i, j] < theta - 1e-18:
                theta = flow[i, j]
                leave_idx = k
        theta = max(theta, 0.0)
        flow[ei, ej] += theta
        for (i, j), s in zip(arcs, signs):
            flow[i, j] += s * theta
            flow[i, j] = max(flow[i, j], 0.0)
        li, lj = arcs[leave_idx]
        basis.remove((li, lj))
        in_basis[li, lj] = False
        basis.append((ei, ej))
        in_basis[ei, ej] = True
    return flow


def w2_exact(mu: AtomicMeasure, nu: AtomicMeasure, return_plan: bool = True,
             support_cap: int = DEFAULT_SUPPORT_CAP):
    """Exact W2 between atomic measures by linear programming."""
    if not isinstance(mu, AtomicMeasure):
        mu = _as_atomic_1d(mu)
    if not isinstance(nu, AtomicMeasure):
        nu = _as_atomic_1d(nu)
    if mu.dim != nu.dim:
        raise TransportError("dimension mismatch between measures")
    if len(mu) > support_cap or len(nu) > support_cap:
        raise TransportError(
            f"support size exceeds cap {support_cap} (got {len(mu)}x{len(nu)})")
    C = _sq_cost_matrix(mu.points_2d(), nu.points_2d())
    flow = _network_simplex(mu.weights.copy(), nu.weights.copy(), C)
    dist = float(np.sqrt(max(np.sum(flow * C), 0.0)))
    if not return_plan:
        return dist
    return dist, TransportPlan(mu, nu, flow)


def geodesic(mu0: AtomicMeasure, mu1: AtomicMeasure, alpha: float,
             plan: TransportPlan | None = None) -> AtomicMeasure:
    """Displacement interpolant ((1-a) pi_1 + a pi_2) # gamma at a=alpha."""
    if not 0.0 <= alpha <= 1.0:
        raise TransportError(f"alpha = {alpha} outside [0, 1]")
    if plan is None:
        if mu0.dim == 1 and mu1.dim == 1:
            _, plan = w2_1d(mu0, mu1)
        else:
            _, plan = w2_exact(mu0, mu1)
    xs, ys, ms = plan.pairs()
    pts = (1.0 - alpha) * xs + alpha * ys
    if pts.shape[1] == 1:
        pts = pts[:, 0]
    return make_atomic(pts, ms)


# ---------------------------------------------------------------------------
# Gluing and generalized geodesics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GluedPlan:
    """Three-point plan coupling mu0 and mu1 through a common base.

    Built by disintegrating two optimal plans over the base marginal and
    taking the product coupling of the conditionals (the canonical gluing).
    ``xs``/``ys``/``zs`` are (k, d) arrays; ``mass`` sums to 1.
    """

    xs: np.ndarray
    ys: np.ndarray
    zs: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        for name in ("xs", "ys", "zs"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        m = np.ascontiguousarray(self.mass, dtype=float)
        if np.any(m < 0):
            raise TransportError("negative glued mass")
        if abs(m.sum() - 1.0) > MARGINAL_TOL:
            raise TransportError("glued plan mass does not sum to 1")
        m.flags.writeable = False
        object.__setattr__(self, "mass", m)

    @property
    def dim(self) -> int:
        return self.xs.shape[1]

    def _collapse(self, pts: np.ndarray) -> AtomicMeasure:
        if self.dim == 1:
            return make_atomic(pts[:, 0], self.mass)
        return make_atomic(pts, self.mass)

    def interpolate(self, alpha: float) -> AtomicMeasure:
        """Generalized geodesic mu_alpha = ((1-a) pi^1 + a pi^2) # nu."""
        if not 0.0 <= alpha <= 1.0:
            raise TransportError(f"alpha = {alpha} outside [0, 1]")
        return self._collapse((1.0 - alpha) * self.xs + alpha * self.ys)

    def squared_pseudo_distance(self) -> float:
        """W^2_{2,nu}(mu0, mu1) = int |pi_1 - pi_2|^2 d nu."""
        d = self.xs - self.ys
        return float(np.sum(self.mass * np.sum(d * d, axis=1)))

    def squared_pseudo_distance_to_base(self, alpha: float) -> float:
        """W^2_{2,nu}(mu_alpha, base), through this same glued structure."""
        d = (1.0 - alpha) * self.xs + alpha * self.ys - self.zs
        return float(np.sum(self.mass * np.sum(d * d, axis=1)))

    def pair_marginal(self, which: int) -> dict:
        """Aggregated (point, base) marginal ``which`` in {0, 1} as a dict."""
        pts = self.xs if which == 0 else self.ys
        agg: dict = {}
        for p, z, m in zip(pts, self.zs, self.mass):
            key = (tuple(p), tuple(z))
            agg[key] = agg.get(key, 0.0) + m
        return agg


def glue(plan0: TransportPlan, plan1: TransportPlan) -> GluedPlan:
    """Glue two optimal plans sharing the same base (target) marginal.

    ``plan0``: coupling mu0 <-> base, ``plan1``: coupling mu1 <-> base.
    Disintegration over the base atoms with product coupling of the
    conditionals; the two pair-marginals of the result reproduce the
    inputs exactly in finite arithmetic.
    """
    base0, base1 = plan0.target, plan1.target
    if len(base0) != len(base1) or base0.dim != base1.dim:
        raise TransportError("plans do not share a common base marginal")
    if np.max(np.abs(base0.points_2d() - base1.points_2d())) > 1e-12 or \
            np.max(np.abs(base0.weights - base1.weights)) > MARGINAL_TOL:
        raise TransportError("base marginals differ by more than 1e-10")
    x_pts = plan0.source.points_2d()
    y_pts = plan1.source.points_2d()
    z_pts = base0.points_2d()
    identical = (plan0.matrix.shape == plan1.matrix.shape
                 and np.array_equal(plan0.matrix, plan1.matrix)
                 and np.array_equal(x_pts, y_pts))
    xs, ys, zs, mass = [], [], [], []
    if identical:
        # identical plans glue diagonally: (x, x, z) triples
        for i, k in zip(*np.nonzero(plan0.matrix)):
            xs.append(x_pts[i])
            ys.append(x_pts[i])
            zs.append(z_pts[k])
            mass.append(plan0.matrix[i, k])
        return GluedPlan(np.array(xs), np.array(ys), np.array(zs), np.array(mass))
    for k in range(len(base0)):
        nu_k = base0.weights[k]
        if nu_k <= 0:
            continue
        col0 = plan0.matrix[:, k]
        col1 = plan1.matrix[:, k]
        ii = np.nonzero(col0)[0]
        jj = np.nonzero(col1)[0]
        for i in ii:
            for j in jj:
                m = col0[i] * col1[j] / nu_k
                if m <= 0:
                    continue
                xs.append(x_pts[i])
                ys.append(y_pts[j])
                zs.append(z_pts[k])
                mass.append(m)
    return GluedPlan(np.array(xs), np.array(ys), np.array(zs), np.array(mass))


def generalized_geodesic(glued: GluedPlan, alpha: float) -> AtomicMeasure:
    return glued.interpolate(alpha)


def pseudo_distance(glued: GluedPlan) -> float:
    """(2, nu)-transport pseudo-metric between the glued endpoints."""
    return float(np.sqrt(glued.squared_pseudo_distance()))
