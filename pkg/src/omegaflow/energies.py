"""Composable energy functionals on discrete measures.

An :class:`Energy` is a sum of optional terms

* potential        int V(x) dmu
* interaction      1/2 int (W * mu)(x) dmu(x)   (kernel W, radial)
* internal         entropy  int mu log mu,  or power  1/(m-1) int mu^m
                   (m = inf means the hard indicator ||mu||_inf <= 1)
* constraint       +inf whenever ||mu||_p > C_p

together with value, Lagrangian gradient in quantile coordinates,
directional derivatives along couplings, the above-tangent convexity
certificate, and a sampled estimate of the metric slope.

Interaction kernels follow the desk-scale conventions: the 1D "Newtonian"
kernel is W(x) = |x|/2 (fundamental solution of d^2/dx^2, convex in 1D);
singular kernels on atomic supports exclude the diagonal i = j term.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .measures import (
    AtomicMeasure,
    GridDensity,
    QuantileMeasure,
    lp_norm,
)
from .moduli import Modulus, psi
from .transport import GluedPlan, TransportPlan, w2_1d, w2_exact

__all__ = [
    "EnergyError",
    "Kernel",
    "Potential",
    "Energy",
    "kernel_gradient",
    "directional_derivative",
    "above_tangent_slack",
    "metric_slope_estimate",
    "calibrate_interaction_constant",
    "parse_energy",
    "POTENTIALS",
]

GAP_FLOOR = 1e-12
CONSTRAINT_SLACK = 1e-9


class EnergyError(ValueError):
    """Invalid energy construction or evaluation outside the domain."""


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def _ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


@dataclass(frozen=True)
class Kernel:
    """Radial interaction kernel W(x) = w(|x|).

    kinds: ``newtonian`` (d), ``riesz`` (alpha, d, sign, c), ``log`` (c),
    ``smooth`` (user radial profile with derivative).
    """

    kind: str
    d: int = 1
    alpha: float = 2.0
    sign: int = 1
    c: float = 1.0
    profile: object = field(default=None, compare=False)   # w(r)
    dprofile: object = field(default=None, compare=False)  # w'(r)

    def __post_init__(self):
        if self.kind == "riesz":
            if not (2.0 <= self.alpha < self.d):
                raise EnergyError(
                    "riesz kernel requires 2 <= alpha < d "
                    f"(got alpha={self.alpha}, d={self.d})")
            if self.sign not in (+1, -1):
                raise EnergyError("riesz sign must be +1 or -1")
        elif self.kind == "newtonian":
            if self.d < 1:
                raise EnergyError("newtonian kernel requires d >= 1")
        elif self.kind == "log":
            pass
        elif self.kind == "smooth":
            if self.profile is None or self.dprofile is None:
                raise EnergyError("smooth kernel needs profile and dprofile")
        else:
            raise EnergyError(f"unknown kernel kind {self.kind!r}")

    @property
    def singular(self) -> bool:
        """True when W(0) or grad W(0) is undefined (diagonal excluded)."""
        if self.kind == "newtonian":
            return True  # |x|/2 has a gradient kink at 0; log/|x|^(2-d) blow up
        if self.kind in ("riesz", "log"):
            return True
        return False

    @property
    def convex_1d(self) -> bool:
        """True for kernels convex as functions on R (1D attraction)."""
        return self.kind == "newtonian" and self.d == 1 and self.c >= 0

    def value(self, r):
        """w(r) for r = |x - y| >= 0."""
        r = np.asarray(r, dtype=float)
        if self.kind == "newtonian":
            if self.d == 1:
                out = 0.5 * r * self.c
            elif self.d == 2:
                with np.errstate(divide="ignore"):
                    out = self.c * np.where(r > 0, np.log(np.where(r > 0, r, 1.0)),
                                            -np.inf) / (2.0 * math.pi)
            else:
                d = self.d
                coef = self.c / (d * (2.0 - d) * _ball_volume(d))
                with np.errstate(divide="ignore"):
                    out = coef * np.where(r > 0, r, np.nan) ** (2.0 - d)
                    out = np.where(r > 0, out, -np.inf * np.sign(coef))
        elif self.kind == "riesz":
            expo = self.alpha - self.d  # in [2-d, 0)
            with np.errstate(divide="ignore"):
                out = self.sign * self.c * np.where(r > 0, r, np.nan) ** expo
            # lsc convention: +c|x|^(a-d) takes 0 at x=0, -c|x|^(a-d) is -inf
            out = np.where(r > 0, out, 0.0 if self.sign > 0 else -np.inf)
        elif self.kind == "log":
            with np.errstate(divide="ignore"):
                out = self.c * np.where(r > 0, np.log(np.where(r > 0, r, 1.0)),
                                        -np.inf)
        else:
            out = np.asarray(self.profile(r), dtype=float)
        return out if out.ndim else float(out)

    def dvalue(self, r):
        """w'(r) for r > 0."""
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, 1.0)
        if self.kind == "newtonian":
            if self.d == 1:
                out = np.full_like(r, 0.5 * self.c)
            elif self.d == 2:
                out = self.c / (2.0 * math.pi * safe)
            else:
                d = self.d
                coef = self.c / (d * (2.0 - d) * _ball_volume(d))
                out = coef * (2.0 - d) * safe ** (1.0 - d)
        elif self.kind == "riesz":
            expo = self.alpha - self.d
            out = self.sign * self.c * expo * safe ** (expo - 1.0)
        elif self.kind == "log":
            out = self.c / safe
        else:
            out = np.asarray(self.dprofile(r), dtype=float)
        out = np.where(r > 0, out, 0.0)
        return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """Scalar potential V with gradient; 1D or radial-in-2D evaluators.

    ``convex`` marks potentials known convex on R^d (enables single-start
    inner solves; unknown potentials default to False and get multi-start).
    """

    name: str
    value: object
    grad: object
    convex: bool = False


def _radius_sq(x):
    """|x|^2 pointwise: scalars and (n,) are 1D points, (n,d) are d-dim."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 2:
        return np.sum(x * x, axis=1)
    return x * x


def _quadratic():
    return Potential("quadratic", lambda x: 0.5 * _radius_sq(x),
                     lambda x: np.asarray(x, dtype=float), convex=True)


def _granular(b: float, beta: float):
    # beta/(b+2) |x|^(b+2); gradient beta |x|^b x
    def val(x):
        return beta / (b + 2.0) * _radius_sq(x) ** ((b + 2.0) / 2.0)

    def grd(x):
        x = np.asarray(x, dtype=float)
        r = np.sqrt(_radius_sq(x))
        scale = beta * np.where(r > 0, r, 0.0) ** b
        return scale[..., None] * x if x.ndim == 2 else scale * x

    return Potential(f"granular(b={b})", val, grd, convex=True)


def _log_pinch(strength: float):
    """1D potential whose gradient is log-Lipschitz but not Lipschitz.

    V'(x) = -(strength/2) * omega(x^2)/x with omega(u) = u|log u| on the
    lower branch, so two symmetric Diracs at +-a satisfy d(a^2)/dt =
    strength * omega(a^2): the flow expands at exactly the Osgood rate.
    Closed form below the branch junction: V(x) = -(s/4) x^2 (1 - 2 log|x|).
    """
    s = float(strength)
    j = math.sqrt(math.exp(-1.0 - math.sqrt(2.0)))

    def val(x):
        x = np.abs(np.asarray(x, dtype=float))
        xc = np.minimum(x, j)
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(xc > 0, np.log(np.where(xc > 0, xc, 1.0)), 0.0)
        core = -(s / 4.0) * xc**2 * (1.0 - 2.0 * lg)
        # continue linearly in the (unused) far region to keep V C^1
        slope_j = -(s / 2.0) * j * (-2.0 * math.log(j))
        out = np.where(x <= j, core,
                       core + slope_j * (x - xc))
        return out if out.ndim else float(out)

    def grd(x):
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        xc = np.minimum(ax, j)
        with np.errstate(divide="ignore", invalid="ignore"):
            lg = np.where(xc > 0, np.log(np.where(xc > 0, xc, 1.0)), 0.0)
        mag = np.where(ax <= j, -s * xc * (-lg), -s * j * (-math.log(j)))
        out = np.sign(x) * mag
        return out if out.ndim else float(out)

    return Potential(f"log_pinch({s})", val, grd)


def _zero():
    def val(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:1] if x.ndim else ())
        return out if out.ndim else 0.0

    return Potential("zero", val,
                     lambda x: np.zeros_like(np.asarray(x, dtype=float)),
                     convex=True)


POTENTIALS = {
    "quadratic": lambda params: _quadratic(),
    "granular": lambda params: _granular(params.get("b", 2.0), params.get("beta", 1.0)),
    "log_pinch": lambda params: _log_pinch(params.get("strength", 1.0)),
    "zero": lambda params: _zero(),
}


# ---------------------------------------------------------------------------
# the energy functional
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Energy:
    """Sum of potential + interaction + internal terms with an Lp cap."""

    potential: Potential | None = None
    kernel: Kernel | None = None
    internal: tuple | None = None          # ("entropy",) or ("power", m)
    constraint: tuple | None = None        # (p, cap); p may be math.inf
    time_tag: str | None = None

    def __post_init__(self):
        if self.internal is not None:
            kind = self.internal[0]
            if kind == "power":
                m = self.internal[1]
                if not (m > 1):
                    raise EnergyError("power internal term requires m > 1")
            elif kind != "entropy":
                raise EnergyError(f"unknown internal term {kind!r}")
        if self.constraint is not None:
            p, cap = self.constraint
            if not (p > 1):
                raise EnergyError("constraint requires p > 1")
            if cap <= 0:
                raise EnergyError("constraint cap must be positive")

    # -- pieces ---------------------------------------------------------------

    def _atoms(self, mu):
        if isinstance(mu, AtomicMeasure):
            return mu.points_2d(), mu.weights
        if isinstance(mu, QuantileMeasure):
            return mu.positions[:, None], mu.cell_mass
        if isinstance(mu, GridDensity):
            a = mu.to_atomic()
            return a.points_2d(), a.weights
        raise EnergyError(f"unsupported measure type {type(mu)!r}")

    def potential_value(self, mu) -> float:
        pts, w = self._atoms(mu)
        x = pts[:, 0] if pts.shape[1] == 1 else pts
        return float(np.sum(w * np.asarray(self.potential.value(x), dtype=float)))

    def interaction_value(self, mu) -> float:
        pts, w = self._atoms(mu)
        diff = pts[:, None, :] - pts[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=2))
        vals = self.kernel.value(r)
        pair = np.outer(w, w) * vals
        if self.kernel.singular:
            np.fill_diagonal(pair, 0.0)
        return 0.5 * float(pair.sum())

    def internal_value(self, mu) -> float:
        kind = self.internal[0]
        if isinstance(mu, QuantileMeasure):
            g = np.maximum(mu.gaps(), GAP_FLOOR)
            c = mu.cell_mass
            if kind == "entropy":
                return float(np.sum(c * np.log(c / g)))
            m = self.internal[1]
            if m == math.inf:
                return 0.0 if np.all(c / g <= 1.0 + 1e-9) else math.inf
            return float(np.sum(c**m * g ** (1.0 - m)) / (m - 1.0))
        if isinstance(mu, GridDensity):
            v = mu.values.ravel()
            cell = mu.cell_volume()
            if kind == "entropy":
                pos = v > 0
                return float(np.sum(cell * v[pos] * np.log(v[pos])))
            m = self.internal[1]
            if m == math.inf:
                return 0.0 if v.max() <= 1.0 + 1e-9 else math.inf
            return float(np.sum(cell * v**m) / (m - 1.0))
        if isinstance(mu, AtomicMeasure):
            return math.inf  # atoms have no density
        raise EnergyError(f"unsupported measure type {type(mu)!r}")

    # -- evaluation -----------------------------------------------------------

    def constraint_ok(self, mu) -> bool:
        if self.constraint is None:
            return True
        p, cap = self.constraint
        return lp_norm(mu, p) <= cap * (1.0 + CONSTRAINT_SLACK)

    def convex_in_quantile(self) -> bool:
        """True when the 1D quantile-coordinate inner problem is convex
        (internal terms and spacing constraints always are)."""
        if self.potential is not None and not self.potential.convex:
            return False
        if self.kernel is not None and not self.kernel.convex_1d:
            return False
        return True

    def eval(self, mu) -> float:
        """Energy value; +inf exactly on constraint violation."""
        if not self.constraint_ok(mu):
            return math.inf
        total = 0.0
        if self.potential is not None:
            total += self.potential_value(mu)
        if self.kernel is not None:
            total += self.interaction_value(mu)
        if self.internal is not None:
            v = self.internal_value(mu)
            if v == math.inf:
                return math.inf
            total += v
        return total

    def __call__(self, mu) -> float:
        return self.eval(mu)

    # -- Lagrangian gradient in 1D quantile coordinates ------------------------

    def quantile_grad(self, q: QuantileMeasure) -> np.ndarray:
        """d/dx_i of the discretized energy (constraint terms excluded)."""
        x = q.positions
        c = q.cell_mass
        n = len(x)
        g = np.zeros(n)
        if self.potential is not None:
            g += c * np.asarray(self.potential.grad(x), dtype=float)
        if self.kernel is not None:
            diff = x[:, None] - x[None, :]
            r = np.abs(diff)
            dv = self.kernel.dvalue(r)
            contrib = dv * np.sign(diff) * c[None, :]
            np.fill_diagonal(contrib, 0.0)
            g += c * contrib.sum(axis=1)
        if self.internal is not None:
            g += self._internal_gap_grad(q)
        return g

    def _du_dgap(self, q: QuantileMeasure) -> np.ndarray:
        """Derivative of the internal term w.r.t. each cell gap."""
        gaps = np.maximum(q.gaps(), GAP_FLOOR)
        c = q.cell_mass
        kind = self.internal[0]
        if kind == "entropy":
            return -c / gaps
        m = self.internal[1]
        if m == math.inf:
            return np.zeros(len(c))  # indicator handled by the constraint set
        return -((c / gaps) ** m)

    def _internal_gap_grad(self, q: QuantileMeasure) -> np.ndarray:
        du = self._du_dgap(q)
        n = len(du)
        g = np.zeros(n)
        if n == 1:
            return g
        # gaps: g_0 = x_1 - x_0, g_i = (x_{i+1} - x_{i-1})/2, g_last one-sided
        g[0] += -du[0]
        g[1] += du[0]
        g[-2] += -du[-1]
        g[-1] += du[-1]
        if n > 2:
            g[2:] += 0.5 * du[1:-1]
            g[:-2] += -0.5 * du[1:-1]
        return g


# ---------------------------------------------------------------------------
# fields, derivatives, certificates
# ---------------------------------------------------------------------------

def kernel_gradient(kernel: Kernel, mu, x, exclude_diagonal: bool = True):
    """Convolution gradient (grad W * mu)(x) at one or many points.

    Singular kernels skip atoms coinciding with the evaluation point when
    ``exclude_diagonal`` is set; otherwise such a hit raises.
    """
    if isinstance(mu, (QuantileMeasure, GridDensity)):
        pts, w = (mu.positions[:, None], mu.cell_mass) \
            if isinstance(mu, QuantileMeasure) else \
            (mu.to_atomic().points_2d(), mu.to_atomic().weights)
    elif isinstance(mu, AtomicMeasure):
        pts, w = mu.points_2d(), mu.weights
    else:
        raise EnergyError(f"unsupported measure type {type(mu)!r}")
    d = pts.shape[1]
    xq = np.atleast_2d(np.asarray(x, dtype=float))
    if xq.shape[1] != d:
        xq = xq.reshape(-1, d)
    out = np.zeros((len(xq), d))
    for k, xx in enumerate(xq):
        diff = xx[None, :] - pts
        r = np.sqrt(np.sum(diff * diff, axis=1))
        hit = r == 0.0
        if kernel.singular and np.any(hit & (w > 0)):
            if not exclude_diagonal:
                raise EnergyError(
                    "field of a singular kernel evaluated exactly at an atom")
        dv = kernel.dvalue(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[:, None] > 0, diff / np.where(r[:, None] > 0,
                                                            r[:, None], 1.0), 0.0)
        out[k] = np.sum(w[:, None] * dv[:, None] * unit, axis=0)
    if np.ndim(x) == 0 or (np.ndim(x) == 1 and len(np.atleast_1d(x)) == d and d > 1):
        return out[0] if d > 1 else float(out[0, 0])
    return out[:, 0] if d == 1 else out


def _coupling_pairs(curve):
    if isinstance(curve, TransportPlan):
        return curve.pairs()
    if isinstance(curve, GluedPlan):
        return curve.xs, curve.ys, curve.mass
    raise EnergyError("curve must be a TransportPlan or GluedPlan")


def directional_derivative(energy: Energy, curve, at: float = 0.0) -> float:
    """d/dalpha E(mu_alpha) along the coupling's displacement interpolation.

    Potential and interaction terms use the coupling integrals
    (< grad V(pi_a), y - x > and < grad W * mu_a (pi_a), y - x >); internal
    terms require a node-to-node 1D coupling and differentiate the cell-gap
    formulas directly.
    """
    xs, ys, ms = _coupling_pairs(curve)
    pa = (1.0 - at) * xs + at * ys
    vel = ys - xs
    total = 0.0
    if energy.potential is not None:
        x_in = pa[:, 0] if pa.shape[1] == 1 else pa
        grad = np.asarray(energy.potential.grad(x_in), dtype=float)
        grad = grad.reshape(pa.shape)
        total += float(np.sum(ms * np.sum(grad * vel, axis=1)))
    if energy.kernel is not None:
        diff = pa[:, None, :] - pa[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=2))
        dv = energy.kernel.dvalue(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            unit = np.where(r[:, :, None] > 0,
                            diff / np.where(r[:, :, None] > 0, r[:, :, None], 1.0),
                            0.0)
        field_at = np.einsum("j,ijk->ik", ms, dv[:, :, None] * unit)
        total += float(np.sum(ms * np.sum(field_at * vel, axis=1)))
    if energy.internal is not None:
        total += _internal_directional(energy, curve, at)
    return total


def _internal_directional(energy: Energy, curve, at: float) -> float:
    xs, ys, ms = _coupling_pairs(curve)
    if xs.shape[1] != 1:
        raise EnergyError("internal terms support 1D quantile couplings only")
    n = len(ms)
    if not np.allclose(ms, ms[0]):
        raise EnergyError("internal directional derivative needs a "
                          "node-to-node coupling with equal masses")
    x0 = np.sort(xs[:, 0])
    x1 = ys[np.argsort(xs[:, 0], kind="stable"), 0]
    if np.any(np.diff(x1) < -1e-12):
        raise EnergyError("coupling is not monotone node-to-node")
    qn = (np.arange(n) + 0.5) / n
    qa = QuantileMeasure(qn, (1.0 - at) * x0 + at * x1, ms)
    du = energy._du_dgap(qa)
    # gap velocities under linear node interpolation
    v = x1 - x0
    dg = np.zeros(n)
    if n > 1:
        dg[0] = v[1] - v[0]
        dg[-1] = v[-1] - v[-2]
        if n > 2:
            dg[1:-1] = 0.5 * (v[2:] - v[:-2])
    return float(np.sum(du * dg))


def coupling_cost(curve) -> float:
    """Squared transport cost of the coupling (W2^2 when optimal)."""
    xs, ys, ms = _coupling_pairs(curve)
    d = xs - ys
    return float(np.sum(ms * np.sum(d * d, axis=1)))


def above_tangent_slack(energy: Energy, mu0, mu1, coupling, modulus: Modulus) -> float:
    """E(mu1) - E(mu0) - dE/da|_0 - (lam/2) omega(cost^2): the omega-convexity
    certificate (nonnegative when the energy is omega-convex along the curve)."""
    e0 = energy.eval(mu0)
    e1 = energy.eval(mu1)
    if not (math.isfinite(e0) and math.isfinite(e1)):
        raise EnergyError("above-tangent certificate needs finite endpoints")
    dd = directional_derivative(energy, coupling, at=0.0)
    w2sq = coupling_cost(coupling)
    return e1 - e0 - dd - 0.5 * modulus.lam * modulus.omega(w2sq)


def metric_slope_estimate(energy: Energy, mu, samples, modulus: Modulus) -> float:
    """Lower estimate of the metric slope |dE|(mu) from a sample set.

    max over nu of ((E(mu) - E(nu))/W2 + (lam/2) omega(W2^2)/W2)^+ ; the
    estimate is monotone nondecreasing as the sample set grows.
    """
    if not samples:
        raise EnergyError("metric slope estimate needs a nonempty sample set")
    e_mu = energy.eval(mu)
    if not math.isfinite(e_mu):
        raise EnergyError("metric slope requires E(mu) < inf")
    best = 0.0
    for nu in samples:
        w = _w2_generic(mu, nu)
        if w <= 0:
            continue
        e_nu = energy.eval(nu)
        if not math.isfinite(e_nu):
            continue
        val = (e_mu - e_nu) / w + 0.5 * modulus.lam * modulus.omega(w * w) / w
        best = max(best, val)
    return best


def _w2_generic(mu, nu) -> float:
    dim = getattr(mu, "dim", 1)
    if dim == 1:
        return w2_1d(mu, nu, return_plan=False)
    return w2_exact(mu, nu, return_plan=False)


def calibrate_interaction_constant(kernel: Kernel, measures, rng,
                                   n_pairs: int = 100,
                                   span: float = 3.0) -> float:
    """Empirical constant C of the log-Lipschitz field estimate.

    Samples point pairs, measures |grad W * mu(x) - grad W * mu(y)|^2 /
    psi(|x - y|^2) over the calibration measures, and returns 1.05 times
    the max observed ratio's square root.
    """
    worst = 0.0
    for mu in measures:
        pts = rng.uniform(-span, span, size=(n_pairs, 2))
        fx = kernel_gradient(kernel, mu, pts[:, 0])
        fy = kernel_gradient(kernel, mu, pts[:, 1])
        num = np.abs(np.asarray(fx) - np.asarray(fy)) ** 2
        den = psi((pts[:, 0] - pts[:, 1]) ** 2)
        ok = den > 0
        if np.any(ok):
            worst = max(worst, float(np.max(num[ok] / den[ok])))
    return 1.05 * math.sqrt(worst)


# ---------------------------------------------------------------------------
# config JSON
# ---------------------------------------------------------------------------

def parse_energy(data) -> Energy:
    """Energy from config JSON, e.g.
    {"potential":"quadratic","kernel":{"kind":"newtonian","d":1},
     "constraint":{"p":"inf","cap":1.0},"internal":{"power":2}}"""
    if isinstance(data, str):
        data = json.loads(data)
    pot = None
    if "potential" in data and data["potential"] is not None:
        spec = data["potential"]
        if isinstance(spec, str):
            name, params = spec, {}
        else:
            name, params = spec["name"], {k: v for k, v in spec.items() if k != "name"}
        if name not in POTENTIALS:
            raise EnergyError(f"unknown potential {name!r}")
        pot = POTENTIALS[name](params)
    ker = None
    if "kernel" in data and data["kernel"] is not None:
        kd = dict(data["kernel"])
        kind = kd.pop("kind")
        ker = Kernel(kind=kind, **kd)
    internal = None
    if "internal" in data and data["internal"] is not None:
        idata = data["internal"]
        if idata == "entropy" or (isinstance(idata, dict)
                                  and idata.get("kind") == "entropy"):
            internal = ("entropy",)
        elif isinstance(idata, dict) and "power" in idata:
            m = idata["power"]
            internal = ("power", math.inf if m in ("inf", None) else float(m))
        else:
            raise EnergyError(f"unknown internal term {idata!r}")
    constraint = None
    if "constraint" in data and data["constraint"] is not None:
        cd = data["constraint"]
        p = cd["p"]
        p = math.inf if p in ("inf", None) else float(p)
        constraint = (p, float(cd["cap"]))
    return Energy(potential=pot, kernel=ker, internal=internal,
                  constraint=constraint, time_tag=data.get("time_dependence"))
