"""Curve networks (finite unions of C^2 arcs meeting at endpoints), their junction
vectors and curvature, sharp-interface energies, and Taylor/Minkowski diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, optimize
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .anisotropy import Anisotropy
from .phase_energy import EnergyBreakdown

INCIDENCE_TOL = 1e-9
ZERO_JUNCTION_TOL = 1e-9

# 16-point Gauss-Legendre rule on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class Curve:
    """C^2 map gamma: [0, 1] -> R^2 given by vectorised position and derivatives.

    ``periodic`` curves are smooth loops without endpoints.
    """

    pos: Callable
    d1: Callable
    d2: Callable
    periodic: bool = False
    name: str = "curve"

    def speed(self, t):
        return np.linalg.norm(self.d1(t), axis=-1)

    def tangent(self, t):
        g = self.d1(t)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def curvature(self, t):
        """Curvature vector d/ds(T) = (gamma'' - (gamma''.T) T) / |gamma'|^2."""
        g1, g2 = self.d1(t), self.d2(t)
        sp2 = np.sum(g1 * g1, axis=-1, keepdims=True)
        return (g2 - np.sum(g2 * g1, axis=-1, keepdims=True) * g1 / sp2) / sp2

    def integrate(self, f, panels=256, a=0.0, b=1.0):
        """Composite Gauss-Legendre integral of f(t) |gamma'(t)| over [a, b]."""
        edges = np.linspace(a, b, panels + 1)
        t = (edges[:-1, None] + np.diff(edges)[:, None] * _GL_X[None, :]).ravel()
        w = (np.diff(edges)[:, None] * _GL_W[None, :]).ravel()
        return float(np.sum(w * f(t) * self.speed(t)))

    def length(self, a=0.0, b=1.0, panels=256):
        return self.integrate(lambda t: np.ones_like(t), panels, a, b)


def _vec(x, y):
    return np.stack([np.broadcast_to(x, np.shape(y)), np.broadcast_to(y, np.shape(x))], axis=-1)


# --- catalog -----------------------------------------------------------------

TWO_PI = 2.0 * np.pi


def circle_curve(R=1.0, center=(0.0, 0.0)) -> Curve:
    cx, cy = center
    w = TWO_PI
    return Curve(
        lambda t: _vec(cx + R * np.cos(w * np.asarray(t)), cy + R * np.sin(w * np.asarray(t))),
        lambda t: _vec(-R * w * np.sin(w * np.asarray(t)), R * w * np.cos(w * np.asarray(t))),
        lambda t: _vec(-R * w * w * np.cos(w * np.asarray(t)), -R * w * w * np.sin(w * np.asarray(t))),
        periodic=True, name=f"circle(R={R})")


def ellipse_curve(a=2.0, b=1.0, center=(0.0, 0.0)) -> Curve:
    cx, cy = center
    w = TWO_PI
    return Curve(
        lambda t: _vec(cx + a * np.cos(w * np.asarray(t)), cy + b * np.sin(w * np.asarray(t))),
        lambda t: _vec(-a * w * np.sin(w * np.asarray(t)), b * w * np.cos(w * np.asarray(t))),
        lambda t: _vec(-a * w * w * np.cos(w * np.asarray(t)), -b * w * w * np.sin(w * np.asarray(t))),
        periodic=True, name=f"ellipse(a={a},b={b})")


def limacon_curve(a=1.0, b=1.5) -> Curve:
    """r = b + a cos(theta); simple and nonconvex for a < b < 2a."""
    if not a < b:
        raise ValueError("limacon needs b > a to avoid the inner loop")
    w = TWO_PI

    def pos(t):
        th = w * np.asarray(t)
        r = b + a * np.cos(th)
        return _vec(r * np.cos(th), r * np.sin(th))

    def d1(t):
        th = w * np.asarray(t)
        r, dr = b + a * np.cos(th), -a * np.sin(th)
        return w * _vec(dr * np.cos(th) - r * np.sin(th), dr * np.sin(th) + r * np.cos(th))

    def d2(t):
        th = w * np.asarray(t)
        r, dr, ddr = b + a * np.cos(th), -a * np.sin(th), -a * np.cos(th)
        return w * w * _vec(ddr * np.cos(th) - 2 * dr * np.sin(th) - r * np.cos(th),
                            ddr * np.sin(th) + 2 * dr * np.cos(th) - r * np.sin(th))

    return Curve(pos, d1, d2, periodic=True, name=f"limacon(a={a},b={b})")


def segment_curve(p0, p1) -> Curve:
    p0, p1 = np.asarray(p0, dtype=float), np.asarray(p1, dtype=float)
    d = p1 - p0
    if np.linalg.norm(d) == 0:
        raise ValueError("degenerate segment")
    return Curve(
        lambda t: p0 + np.asarray(t)[..., None] * d,
        lambda t: np.broadcast_to(d, np.shape(t) + (2,)).copy(),
        lambda t: np.zeros(np.shape(t) + (2,)),
        name="segment")


def arc_curve(R, theta0, theta1, center=(0.0, 0.0)) -> Curve:
    cx, cy = center
    w = theta1 - theta0
    return Curve(
        lambda t: _vec(cx + R * np.cos(theta0 + w * np.asarray(t)), cy + R * np.sin(theta0 + w * np.asarray(t))),
        lambda t: _vec(-R * w * np.sin(theta0 + w * np.asarray(t)), R * w * np.cos(theta0 + w * np.asarray(t))),
        lambda t: _vec(-R * w * w * np.cos(theta0 + w * np.asarray(t)), -R * w * w * np.sin(theta0 + w * np.asarray(t))),
        name=f"arc(R={R})")


def spline_curve(points, name="spline") -> Curve:
    """Cubic spline through samples, periodic when the first and last points coincide."""
    pts = np.asarray(points, dtype=float)
    closed = np.allclose(pts[0], pts[-1], atol=INCIDENCE_TOL)
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(seg == 0):
        raise ValueError("repeated consecutive samples in polyline")
    t = np.concatenate([[0.0], np.cumsum(seg)])
    t /= t[-1]
    if closed:
        pts = pts.copy()
        pts[-1] = pts[0]
    cs = CubicSpline(t, pts, axis=0, bc_type="periodic" if closed else "not-a-knot")
    c1, c2 = cs.derivative(1), cs.derivative(2)
    return Curve(lambda s: cs(np.asarray(s)), lambda s: c1(np.asarray(s)), lambda s: c2(np.asarray(s)),
                 periodic=closed, name=name)


# --- networks ----------------------------------------------------------------


@dataclass
class CurveNetwork:
    """Finite union of C^2 curves that may meet only at endpoints.

    ``points`` is the endpoint set P and ``incidence[k]`` lists (curve index,
    end) pairs with end 0 for gamma(0) and 1 for gamma(1).
    """

    curves: list
    name: str = "network"
    check_samples: int = 2000
    points: np.ndarray = field(init=False)
    incidence: list = field(init=False)
    _trees: dict = field(init=False, default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.curves:
            raise ValueError("empty curve network")
        pts, inc = [], []
        for i, c in enumerate(self.curves):
            if c.periodic:
                continue
            for end in (0, 1):
                x = np.asarray(c.pos(np.array(float(end))), dtype=float)
                for k, p in enumerate(pts):
                    if np.linalg.norm(p - x) <= INCIDENCE_TOL:
                        inc[k].append((i, end))
                        break
                else:
                    pts.append(x)
                    inc.append([(i, end)])
        self.points = np.array(pts).reshape(-1, 2)
        self.incidence = inc
        self._validate()

    def _validate(self):
        n = self.check_samples
        t = np.linspace(0.0, 1.0, n)
        clouds = []
        for i, c in enumerate(self.curves):
            if np.any(c.speed(t) <= 0):
                raise ValueError(f"curve {i} ({c.name}) has vanishing velocity")
            clouds.append(c.pos(t))
        # curves may only touch near shared endpoints
        scale = max(float(np.ptp(np.vstack(clouds), axis=0).max()), 1e-12)
        step = max(float(np.max(np.linalg.norm(np.diff(cl, axis=0), axis=1))) for cl in clouds)
        excl = 4.0 * step
        trees = [cKDTree(cl) for cl in clouds]
        for i in range(len(clouds)):
            for j in range(i + 1, len(clouds)):
                # transversal crossings leave samples within a step of each other
                hits = trees[i].query_ball_tree(trees[j], r=step)
                for a, lst in enumerate(hits):
                    if not lst:
                        continue
                    x = clouds[i][a]
                    if len(self.points) and np.min(np.linalg.norm(self.points - x, axis=1)) < excl:
                        continue
                    raise ValueError(f"curves {i} and {j} intersect away from endpoints near {x}")
        self._scale = scale

    # topology

    @property
    def has_points(self) -> bool:
        return len(self.points) > 0

    @property
    def is_closed(self) -> bool:
        """Every endpoint has even incidence, so the network bounds regions."""
        return all(len(lst) % 2 == 0 for lst in self.incidence)

    def point_index(self, p) -> int:
        p = np.asarray(p, dtype=float)
        if not self.has_points:
            raise ValueError("network has no endpoints")
        d = np.linalg.norm(self.points - p, axis=1)
        k = int(np.argmin(d))
        if d[k] > INCIDENCE_TOL:
            raise ValueError(f"{tuple(p)} is not an endpoint of the network")
        return k

    def length(self) -> float:
        return math.fsum(c.length() for c in self.curves)

    def max_curvature(self, n=4001) -> float:
        t = np.linspace(0.0, 1.0, n)
        return max(float(np.max(np.linalg.norm(c.curvature(t), axis=1))) for c in self.curves)

    def sample_tree(self, spacing):
        """Cached (k-d tree, curve ids, parameters) of :meth:`samples`."""
        if spacing not in self._trees:
            pts, cid, par = self.samples(spacing)
            self._trees[spacing] = (cKDTree(pts), cid, par)
        return self._trees[spacing]

    def samples(self, spacing):
        """Points at arc spacing at most ``spacing`` with (curve, parameter) labels."""
        pts, cid, par = [], [], []
        for i, c in enumerate(self.curves):
            vmax = float(np.max(c.speed(np.linspace(0, 1, 2049))))
            m = max(int(math.ceil(vmax / spacing)), 8)
            t = np.linspace(0.0, 1.0, m + 1)
            if c.periodic:
                t = t[:-1]
            pts.append(c.pos(t))
            cid.append(np.full(t.shape, i))
            par.append(t)
        return np.vstack(pts), np.concatenate(cid), np.concatenate(par)


# catalog networks

def circle(R=1.0, center=(0.0, 0.0)):
    return CurveNetwork([circle_curve(R, center)], f"circle(R={R})")


def ellipse(a=2.0, b=1.0, center=(0.0, 0.0)):
    return CurveNetwork([ellipse_curve(a, b, center)], f"ellipse(a={a},b={b})")


def limacon(a=1.0, b=1.5):
    return CurveNetwork([limacon_curve(a, b)], f"limacon(a={a},b={b})")


def segment(p0=(-0.5, 0.0), p1=(0.5, 0.0)):
    return CurveNetwork([segment_curve(p0, p1)], "segment")


def arc(R=1.0, theta0=0.0, theta1=np.pi, center=(0.0, 0.0)):
    return CurveNetwork([arc_curve(R, theta0, theta1, center)], f"arc(R={R})")


def star(k=3, length=0.5, angles=None, center=(0.0, 0.0)):
    """k straight arms leaving ``center``; equal angles by default (120 degrees for k = 3)."""
    c = np.asarray(center, dtype=float)
    if angles is None:
        angles = np.pi / 2 + TWO_PI * np.arange(k) / k
    arms = [segment_curve(c, c + length * np.array([np.cos(a), np.sin(a)])) for a in angles]
    return CurveNetwork(arms, f"star(k={len(arms)})")


def corner(length=0.5, center=(0.0, 0.0)):
    return star(2, length, angles=[0.0, np.pi / 2], center=center)


def square(side=1.0, center=(0.0, 0.0)):
    c = np.asarray(center, dtype=float)
    s = 0.5 * side
    v = [c + s * np.array(p) for p in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
    return CurveNetwork([segment_curve(v[i], v[(i + 1) % 4]) for i in range(4)], f"square({side})")


def read_polyline_csv(path) -> CurveNetwork:
    """CSV columns curve_id, t, x, y; samples of each curve sorted by t."""
    data = np.loadtxt(path, delimiter=",", comments="#", skiprows=_header_rows(path), ndmin=2)
    if data.shape[1] != 4:
        raise ValueError(f"{path}: expected columns curve_id,t,x,y")
    curves = []
    for cid in np.unique(data[:, 0]):
        rows = data[data[:, 0] == cid]
        rows = rows[np.argsort(rows[:, 1])]
        curves.append(spline_curve(rows[:, 2:4], name=f"polyline{int(cid)}"))
    return CurveNetwork(curves, str(path))


def _header_rows(path):
    with open(path) as fh:
        first = fh.readline()
    try:
        [float(x) for x in first.split(",")]
        return 0
    except ValueError:
        return 1


SHAPES = {
    "circle": circle,
    "ellipse": ellipse,
    "limacon": limacon,
    "segment": segment,
    "arc": arc,
    "star": star,
    "corner": corner,
    "square": square,
}


def shape_from_name(name: str, **params) -> CurveNetwork:
    if name not in SHAPES:
        raise ValueError(f"unknown shape {name!r}; choose from {sorted(SHAPES)}")
    return SHAPES[name](**params)


def closed_catalog():
    """Closed curves used by the catalog-wide checks."""
    return [circle(1.0), circle(0.5), ellipse(2.0, 1.0), ellipse(1.0, 0.3), limacon(1.0, 1.5)]


# --- local geometry ----------------------------------------------------------


def junction_vector(net: CurveNetwork, p, tol=ZERO_JUNCTION_TOL):
    """Sum of unit tangents pointing away from p, and whether it is nonzero."""
    k = net.point_index(p)
    v = np.zeros(2)
    for i, end in net.incidence[k]:
        tau = net.curves[i].tangent(np.array(float(end)))
        v += tau if end == 0 else -tau
    return v, bool(np.linalg.norm(v) >= tol)


def curvature(net: CurveNetwork, i: int, t):
    return net.curves[i].curvature(np.asarray(t, dtype=float))


def _normal(tau):
    return np.stack([tau[..., 1], -tau[..., 0]], axis=-1)


def sharp_set_energy(boundary: CurveNetwork, phi: Anisotropy, panels=512) -> EnergyBreakdown:
    """int phi(nu) dH^1 + int |H|^2 dH^1 over a closed junction-free boundary."""
    if boundary.has_points or not all(c.periodic for c in boundary.curves):
        raise ValueError("sharp_set_energy needs closed curves without endpoints or junctions")
    mm = math.fsum(c.integrate(lambda t, c=c: phi(_normal(c.tangent(t))), panels) for c in boundary.curves)
    w = math.fsum(c.integrate(lambda t, c=c: np.sum(c.curvature(t) ** 2, axis=-1), panels)
                  for c in boundary.curves)
    return EnergyBreakdown(anisotropic_mm=mm, curvature=w)


def willmore_beta(boundary: CurveNetwork, beta: float) -> float:
    """int (1/beta + beta |H|^2) dH^1; at least 4 pi, with equality for circles of radius beta."""
    e = sharp_set_energy(boundary, _iso())
    return e.anisotropic_mm / beta + beta * e.curvature


def _iso():
    from .anisotropy import isotropic
    return isotropic()


@dataclass
class SharpMsState:
    """Jump set J_u, a function u smooth off J_u on a box domain, and the point weight gamma.

    ``u`` and ``grad_u`` map coordinate arrays (X, Y) to values and to a pair of
    gradient arrays.  ``bulk`` may hold the exact Dirichlet energy; otherwise it is
    computed by tensor Gauss-Legendre quadrature on the domain.
    """

    network: CurveNetwork
    u: Callable
    grad_u: Callable
    gamma: float
    domain: tuple  # ((x0, y0), (Lx, Ly))
    bulk: float | None = None
    breaks: tuple = ()

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")

    def dirichlet_energy(self, panels=64) -> float:
        if self.bulk is not None:
            return float(self.bulk)
        (x0, y0), (lx, ly) = self.domain
        ex = np.unique(np.concatenate([np.linspace(x0, x0 + lx, panels + 1),
                                       [b for b in self.breaks if x0 < b < x0 + lx]]))
        ey = np.unique(np.concatenate([np.linspace(y0, y0 + ly, panels + 1),
                                       [b for b in self.breaks if y0 < b < y0 + ly]]))
        xs = (ex[:-1, None] + np.diff(ex)[:, None] * _GL_X).ravel()
        wx = (np.diff(ex)[:, None] * _GL_W).ravel()
        ys = (ey[:-1, None] + np.diff(ey)[:, None] * _GL_X).ravel()
        wy = (np.diff(ey)[:, None] * _GL_W).ravel()
        X, Y = np.meshgrid(xs, ys, indexing="ij")
        gx, gy = self.grad_u(X, Y)
        return float(np.einsum("i,ij,j->", wx, gx * gx + gy * gy, wy))


def crack_state(length=1.0, amplitude=1.0, gamma=0.1, half_width=2.0) -> SharpMsState:
    """u = A sign(y) cos^2(pi x / length) on |x| < length/2, zero elsewhere.

    J_u is the segment [-length/2, length/2] x {0}; u vanishes at both tips so it
    is H^1 off the crack.  The exact Dirichlet energy on the box [-L, L]^2 is
    A^2 pi^2 L / length.
    """
    a = 0.5 * length
    k = np.pi / length

    def u(X, Y):
        return np.where(np.abs(X) < a, amplitude * np.sign(Y) * np.cos(k * X) ** 2, 0.0)

    def grad_u(X, Y):
        gx = np.where(np.abs(X) < a, -amplitude * np.sign(Y) * k * np.sin(2 * k * X), 0.0)
        return gx, np.zeros_like(gx)

    bulk = amplitude**2 * np.pi**2 * half_width / length
    L = half_width
    return SharpMsState(segment((-a, 0.0), (a, 0.0)), u, grad_u, gamma, ((-L, -L), (2 * L, 2 * L)),
                        bulk=bulk, breaks=(-a, a))


def disc_state(R=1.0, inside=1.0, gamma=0.1, half_width=2.0) -> SharpMsState:
    """u = inside on the disc of radius R, zero outside: J_u is a circle, no endpoints."""
    def u(X, Y):
        return np.where(X * X + Y * Y < R * R, inside, 0.0)

    def grad_u(X, Y):
        z = np.zeros(np.broadcast(X, Y).shape)
        return z, z.copy()

    L = half_width
    return SharpMsState(circle(R), u, grad_u, gamma, ((-L, -L), (2 * L, 2 * L)), bulk=0.0)


def point_counts(net: CurveNetwork, tol=ZERO_JUNCTION_TOL):
    """(all endpoints/junctions, those with nonzero junction vector)."""
    n_all = len(net.points)
    n_nonzero = sum(junction_vector(net, p, tol)[1] for p in net.points)
    return n_all, n_nonzero


def sharp_ms_energy(state: SharpMsState, phi: Anisotropy, zero_junctions: str | None = None,
                    panels=512) -> EnergyBreakdown:
    """int |grad u|^2 + int_{J_u} (phi(nu) + |H|^2) + gamma #P.

    Points with vanishing junction vector are only admitted with an explicit
    ``zero_junctions`` choice: "count" or "exclude".  Both counts are returned in
    ``parts``.
    """
    net = state.network
    n_all, n_nonzero = point_counts(net)
    if n_all != n_nonzero and zero_junctions not in ("count", "exclude"):
        raise ValueError(f"{n_all - n_nonzero} junction(s) with zero curvature; "
                         "pass zero_junctions='count' or 'exclude'")
    n = n_all if zero_junctions != "exclude" else n_nonzero
    mm = math.fsum(c.integrate(lambda t, c=c: phi(_normal(c.tangent(t))), panels) for c in net.curves)
    w = math.fsum(c.integrate(lambda t, c=c: np.sum(c.curvature(t) ** 2, axis=-1), panels)
                  for c in net.curves)
    return EnergyBreakdown(bulk=state.dirichlet_energy(), anisotropic_mm=mm, curvature=w,
                           point=state.gamma * n,
                           parts={"points_all": n_all, "points_nonzero": n_nonzero,
                                  "rho_bar": 4.0 * state.gamma / phi.minimum})


# --- Taylor bound and Minkowski content --------------------------------------


@dataclass(frozen=True)
class TaylorCheck:
    length: float
    theta: float
    sup_curvature: float
    bound: float
    holds: bool


def _inside_intervals(c: Curve, x0, rho, n=2049):
    """Parameter intervals of c inside the closed ball, with crossings found by root finding."""
    t = np.linspace(0.0, 1.0, n)
    g = lambda s: float(np.linalg.norm(c.pos(np.array(s)) - x0) - rho)
    vals = np.linalg.norm(c.pos(t) - x0, axis=1) - rho
    cuts = [0.0]
    inside = vals <= 0
    for k in np.nonzero(inside[:-1] != inside[1:])[0]:
        cuts.append(t[k + 1] if vals[k + 1] == 0 else optimize.brentq(g, t[k], t[k + 1], xtol=1e-15, rtol=1e-15))
    cuts.append(1.0)
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b > a and g(0.5 * (a + b)) <= 0:
            out.append((a, b))
    return out


def arc_in_ball(net: CurveNetwork, x0, rho: float, rho0: float | None = None, domain=None) -> TaylorCheck:
    """Length of the network inside B_rho(x0) against 2 rho Theta + rho^2 Theta sup|H|."""
    k = net.point_index(x0)
    x0 = net.points[k]
    if rho <= 0:
        raise ValueError("rho must be positive")
    if rho0 is not None and rho > rho0:
        raise ValueError(f"rho={rho} exceeds rho0={rho0}")
    if domain is not None:
        (ox, oy), (lx, ly) = domain
        if x0[0] - rho < ox or x0[1] - rho < oy or x0[0] + rho > ox + lx or x0[1] + rho > oy + ly:
            raise ValueError("ball escapes the domain")
    theta = len(net.incidence[k]) / 2.0
    length, hmax = 0.0, 0.0
    for c in net.curves:
        for a, b in _inside_intervals(c, x0, rho):
            length += c.length(a, b, panels=64)
            ts = np.linspace(a, b, 257)
            hmax = max(hmax, float(np.max(np.linalg.norm(c.curvature(ts), axis=1))))
    bound = 2.0 * rho * theta + rho * rho * theta * hmax
    return TaylorCheck(length, theta, hmax, bound, bool(length <= bound * (1 + 1e-12) + 1e-15))


def tube_area(net: CurveNetwork, t: float, resolution: float | None = None) -> float:
    """Area of {dist < t} by counting cell centres of a grid of spacing <= t/8.

    Only coarse blocks that can meet the tube are refined.
    """
    hs = t / 16.0 if resolution is None else min(resolution, t / 8.0)
    sub = 8
    block = hs * sub
    spacing = block / 4.0
    pts, _, _ = net.samples(spacing)
    lo = pts.min(axis=0) - t - 2 * block
    # candidate blocks: neighbours of blocks that contain a sample
    base = np.unique(np.floor((pts - lo) / block).astype(np.int64), axis=0)
    reach = int(math.ceil(t / block)) + 1
    offs = np.arange(-reach, reach + 1)
    oi, oj = np.meshgrid(offs, offs, indexing="ij")
    cand = np.unique((base[:, None, :] + np.stack([oi.ravel(), oj.ravel()], axis=1)[None]).reshape(-1, 2), axis=0)
    centres = lo + (cand + 0.5) * block
    # nearest-sample distance overestimates the true one by at most spacing/2
    dist, _ = cKDTree(pts).query(centres)
    half_diag = block / math.sqrt(2.0)
    full = dist + half_diag < t
    mixed = ~full & (dist - 0.5 * spacing - half_diag < t)
    count = int(np.count_nonzero(full)) * sub * sub
    near = centres[mixed]
    off = (np.arange(sub) + 0.5) * hs - 0.5 * block
    ox, oy = np.meshgrid(off, off, indexing="ij")
    for start in range(0, len(near), 4096):
        c = near[start:start + 4096]
        X = c[:, 0, None] + ox.ravel()[None, :]
        Y = c[:, 1, None] + oy.ravel()[None, :]
        d = network_distance(net, X, Y, spacing=spacing, newton_steps=4).dist
        count += int(np.count_nonzero(d < t))
    return count * hs * hs


# --- distance to a network ---------------------------------------------------


@dataclass
class DistanceResult:
    dist: np.ndarray
    gx: np.ndarray
    gy: np.ndarray
    lap: np.ndarray
    curve: np.ndarray
    param: np.ndarray


def _crossing_parity(pts_by_curve, X, Y):
    """Ray-crossing parity (True = inside) using horizontal rays towards +x."""
    edges = np.vstack([np.stack([p[:-1], p[1:]], axis=1) for p in pts_by_curve])
    x0, y0 = edges[:, 0, 0], edges[:, 0, 1]
    x1, y1 = edges[:, 1, 0], edges[:, 1, 1]
    flat_x, flat_y = X.ravel(), Y.ravel()
    inside = np.zeros(flat_x.shape, dtype=bool)
    ys, inv = np.unique(flat_y, return_inverse=True)
    for k, y in enumerate(ys):
        m = (y0 <= y) != (y1 <= y)
        if not np.any(m):
            continue
        xc = np.sort(x0[m] + (y - y0[m]) * (x1[m] - x0[m]) / (y1[m] - y0[m]))
        sel = inv == k
        right = len(xc) - np.searchsorted(xc, flat_x[sel], side="right")
        inside[sel] = (right % 2) == 1
    return inside.reshape(X.shape)


def network_distance(net: CurveNetwork, X, Y, spacing: float, signed: bool = False,
                     newton_steps: int = 12, refine_within: float | None = None) -> DistanceResult:
    """Distance from (X, Y) to the network with its gradient and Laplacian.

    The nearest sample (k-d tree over samples at arc spacing <= ``spacing``) seeds a
    Newton projection onto the exact parametrisation.  Off the curve the gradient is
    the unit vector from the foot point and the Laplacian is -k/(1 - k d) with
    k = H.e, or 1/d when the foot point is an endpoint.  With ``signed`` the values
    are negated inside (crossing parity) so that the result is the signed distance.
    ``refine_within`` limits the Newton projection to nodes whose sample distance is
    below it; farther nodes keep the nearest-sample distance.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    tree, cid, par = net.sample_tree(spacing)
    q = np.stack([X.ravel(), Y.ravel()], axis=1)
    if refine_within is None:
        dseed, idx = tree.query(q, workers=-1)
    else:
        # far nodes are slow to resolve against dense samples; a coarse cloud of
        # spacing 16s over-estimates their distance by at most (16 s)^2 / (8 refine_within)
        dseed, idx = tree.query(q, workers=-1, distance_upper_bound=refine_within)
        far = ~np.isfinite(dseed)
        if np.any(far):
            ctree, ccid, cpar = net.sample_tree(16.0 * spacing)
            dc, ic = ctree.query(q[far], workers=-1)
            dseed[far] = dc
    curve_of = np.empty(len(q), dtype=int)
    t = np.empty(len(q))
    if refine_within is None:
        curve_of[:], t[:] = cid[idx], par[idx]
    else:
        curve_of[~far], t[~far] = cid[idx[~far]], par[idx[~far]]
        if np.any(far):
            curve_of[far], t[far] = ccid[ic], cpar[ic]
    seed_t = t.copy()
    foot = np.empty_like(q)
    lap = np.empty(len(q))
    e = np.empty_like(q)
    dist = np.empty(len(q))
    for i, c in enumerate(net.curves):
        on = curve_of == i
        sel = np.nonzero(on)[0]
        if sel.size == 0:
            continue
        x = q[sel]
        ti = t[sel]
        act = np.ones(sel.size, dtype=bool) if refine_within is None else dseed[sel] < refine_within
        for _ in range(newton_steps if np.any(act) else 0):
            xa, ta = x[act], ti[act]
            r = c.pos(ta) - xa
            g1 = c.d1(ta)
            f = np.sum(g1 * r, axis=1)
            fp = np.sum(c.d2(ta) * r, axis=1) + np.sum(g1 * g1, axis=1)
            step = np.where(fp > 0, f / np.where(fp > 0, fp, 1.0), 0.0)
            # keep Newton local to the seed sample
            lim = 2.0 * spacing / np.linalg.norm(g1, axis=1)
            ta = ta - np.clip(step, -lim, lim)
            ti[act] = np.mod(ta, 1.0) if c.periodic else np.clip(ta, 0.0, 1.0)
        # never worse than the seed sample
        seed = seed_t[sel]
        better = (np.linalg.norm(c.pos(ti) - x, axis=1) <= np.linalg.norm(c.pos(seed) - x, axis=1))
        ti = np.where(better, ti, seed)
        p = c.pos(ti)
        r = x - p
        d = np.linalg.norm(r, axis=1)
        ee = np.where(d[:, None] > 0, r / np.where(d > 0, d, 1.0)[:, None], 0.0)
        at_end = (~c.periodic) & ((ti <= 0.0) | (ti >= 1.0))
        kap = np.sum(c.curvature(ti) * ee, axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            lp = np.where(at_end, 1.0 / d, -kap / (1.0 - kap * d))
        lp = np.where(d > 0, lp, 0.0)
        foot[sel], e[sel], dist[sel], lap[sel], t[sel] = p, ee, d, lp, ti
    sign = np.ones(len(q))
    if signed:
        per_curve = []
        for c in net.curves:
            m = max(int(math.ceil(float(np.max(c.speed(np.linspace(0, 1, 2049)))) / spacing)), 8)
            per_curve.append(c.pos(np.linspace(0.0, 1.0, m + 1)))
        inside = _crossing_parity(per_curve, X, Y).ravel()
        sign = np.where(inside, -1.0, 1.0)
    shp = X.shape
    return DistanceResult((sign * dist).reshape(shp), (sign * e[:, 0]).reshape(shp),
                          (sign * e[:, 1]).reshape(shp), (sign * lap).reshape(shp),
                          curve_of.reshape(shp), t.reshape(shp))


def brute_force_distance(net: CurveNetwork, X, Y, spacing: float):
    """All-pairs minimum distance to dense samples: the auditable reference."""
    pts, _, _ = net.samples(spacing)
    q = np.stack([np.ravel(X), np.ravel(Y)], axis=1)
    out = np.empty(len(q))
    for s in range(0, len(q), 512):
        diff = q[s:s + 512, None, :] - pts[None, :, :]
        out[s:s + 512] = np.sqrt(np.min(np.sum(diff * diff, axis=-1), axis=1))
    return out.reshape(np.shape(X))
