"""Surface tensions on the unit circle/sphere, their regularised extension to the
whole space, and numerical convexification through the Frank diagram."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.spatial import ConvexHull

DENSE_SAMPLES = 4096


def _unit(nu):
    nu = np.asarray(nu, dtype=float)
    n = np.linalg.norm(nu, axis=-1, keepdims=True)
    return nu / np.where(n > 0, n, 1.0)


def circle_directions(n):
    theta = 2.0 * np.pi * (np.arange(n) + 0.5) / n
    return np.stack([np.cos(theta), np.sin(theta)], axis=-1)


def fibonacci_sphere(n):
    k = np.arange(n) + 0.5
    z = 1.0 - 2.0 * k / n
    r = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - math.sqrt(5.0)) * k
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def sphere_directions(n, dim=2):
    return circle_directions(n) if dim == 2 else fibonacci_sphere(n)


@dataclass
class Anisotropy:
    """Even positive surface tension phi(nu) on S^{d-1}.

    ``func`` maps an array of unit vectors (..., d) to values (...). ``bound_c``
    is the constant C with 1/C <= phi <= C; when omitted it is measured on a
    dense sample.
    """

    func: Callable[[np.ndarray], np.ndarray]
    name: str = "custom"
    dim: int = 2
    bound_c: float | None = None
    params: dict = field(default_factory=dict)
    directions: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        vals = self.func(sphere_directions(DENSE_SAMPLES, self.dim))
        if not np.all(vals > 0):
            raise ValueError(f"anisotropy {self.name!r} is not strictly positive")
        lo, hi = float(vals.min()), float(vals.max())
        if self.dim == 2:
            lo, hi = self._polish(vals, lo, hi)
        self._min = lo
        measured = max(hi, 1.0 / lo, 1.0)
        if self.bound_c is None:
            self.bound_c = measured
        elif self.bound_c < measured * (1 - 1e-12):
            raise ValueError(f"bound_c={self.bound_c} violated on samples (need >= {measured})")

    def _polish(self, vals, lo, hi):
        # extrema usually fall between samples; refine them in angle
        n = len(vals)
        step = 2.0 * np.pi / n
        ang = lambda t: np.array([math.cos(t), math.sin(t)])
        for k, sign in ((int(np.argmin(vals)), 1.0), (int(np.argmax(vals)), -1.0)):
            t0 = step * (k + 0.5)
            r = minimize_scalar(lambda t: sign * float(self.func(ang(t))), bounds=(t0 - step, t0 + step),
                                method="bounded", options={"xatol": 1e-12})
            v = float(self.func(ang(r.x)))
            lo, hi = min(lo, v), max(hi, v)
        return lo, hi

    def __call__(self, nu):
        return self.func(_unit(nu))

    def of_angle(self, theta):
        theta = np.asarray(theta, dtype=float)
        return self(np.stack([np.cos(theta), np.sin(theta)], axis=-1))

    @property
    def minimum(self) -> float:
        return self._min

    def homogeneous(self, x):
        """1-homogeneous extension |x| phi(x/|x|) (zero at the origin)."""
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x, axis=-1)
        return np.where(r > 0, r * self(x), 0.0)


def _angle(nu):
    return np.arctan2(nu[..., 1], nu[..., 0])


def isotropic(dim=2) -> Anisotropy:
    return Anisotropy(lambda nu: np.ones(nu.shape[:-1]), "iso", dim, 1.0)


def cos4(beta: float) -> Anisotropy:
    """phi(theta) = 1 + beta cos^2(2 theta); nonconvex extension once beta > 1/7."""
    if beta <= -1.0:
        raise ValueError("beta must exceed -1 for positivity")
    f = lambda nu: 1.0 + beta * np.cos(2.0 * _angle(nu)) ** 2
    return Anisotropy(f, "cos4", 2, params={"beta": beta})


def smoothed_l1(s: float = 0.1) -> Anisotropy:
    """sqrt(nu1^2 + s^2) + sqrt(nu2^2 + s^2): convex smoothing of |nu1| + |nu2|."""
    f = lambda nu: np.sqrt(nu[..., 0] ** 2 + s * s) + np.sqrt(nu[..., 1] ** 2 + s * s)
    return Anisotropy(f, "l1", 2, params={"s": s})


def ellipse_support(a: float, b: float) -> Anisotropy:
    """Support function of the ellipse with semi-axes (a, b): convex by construction."""
    f = lambda nu: np.sqrt((a * nu[..., 0]) ** 2 + (b * nu[..., 1]) ** 2)
    return Anisotropy(f, "ellipse", 2, params={"a": a, "b": b})


def tabulated(angles, values) -> Anisotropy:
    """Periodic linear interpolation of (angle, value) samples given on [0, 2 pi)."""
    angles = np.mod(np.asarray(angles, dtype=float), 2.0 * np.pi)
    values = np.asarray(values, dtype=float)
    order = np.argsort(angles)
    angles, values = angles[order], values[order]
    f = lambda nu: np.interp(np.mod(_angle(nu), 2.0 * np.pi), angles, values, period=2.0 * np.pi)
    return Anisotropy(f, "table", 2, params={"n": len(angles)})


def read_table(path) -> Anisotropy:
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns (angle, value), got {data.shape[1]}")
    return tabulated(data[:, 0], data[:, 1])


CATALOG = {
    "iso": lambda **kw: isotropic(),
    "cos4": lambda beta=0.3, **kw: cos4(float(beta)),
    "l1": lambda s=0.1, **kw: smoothed_l1(float(s)),
    "ellipse": lambda a=2.0, b=1.0, **kw: ellipse_support(float(a), float(b)),
}


def from_name(name: str, **params) -> Anisotropy:
    try:
        return CATALOG[name](**params)
    except KeyError:
        raise ValueError(f"unknown anisotropy {name!r}; choose from {sorted(CATALOG)}") from None


# --- extension off the sphere -------------------------------------------------


@dataclass(frozen=True)
class ExtensionParams:
    r_eps: float
    lip_l: float | None = None

    def __post_init__(self):
        if not self.r_eps > 0:
            raise ValueError("r_eps must be positive")


def radial_cutoff(rho):
    """xi(|y|): 0 on B_{1/4}, 1 outside B_{1/2}, linear in between (slope exactly 4)."""
    return np.clip(4.0 * np.asarray(rho, dtype=float) - 1.0, 0.0, 1.0)


def phi_bar(y, phi: Anisotropy):
    """xi phi(y/|y|) + (1 - xi) min(phi)/4 on the closed unit ball."""
    y = np.asarray(y, dtype=float)
    rho = np.linalg.norm(y, axis=-1)
    xi = radial_cutoff(rho)
    far = phi(np.where(rho[..., None] > 0, y, 1.0))
    return xi * far + (1.0 - xi) * 0.25 * phi.minimum


def extend(z, phi: Anisotropy, p: ExtensionParams):
    """phi_eps(z) = phi_bar(z / sqrt(r_eps^2 + |z|^2)); finite at z = 0."""
    z = np.asarray(z, dtype=float)
    scale = np.sqrt(p.r_eps**2 + np.sum(z * z, axis=-1))
    return phi_bar(z / scale[..., None], phi)


def extend_components(gx, gy, phi: Anisotropy, r_eps: float):
    """Same as :func:`extend` for gradient components stored as separate arrays."""
    return extend(np.stack([gx, gy], axis=-1), phi, ExtensionParams(r_eps))


def lipschitz_estimate(phi: Anisotropy, n_angle=2048, n_radius=512) -> float:
    """Largest finite-difference slope of phi_bar on a polar sample of the unit ball."""
    if phi.dim != 2:
        raise NotImplementedError("Lipschitz estimate implemented for d = 2")
    th = 2.0 * np.pi * np.arange(n_angle) / n_angle
    rho = np.linspace(0.0, 1.0, n_radius + 1)
    R, T = np.meshgrid(rho, th, indexing="ij")
    Y = np.stack([R * np.cos(T), R * np.sin(T)], axis=-1)
    vals = phi_bar(Y, phi)
    slope_r = np.abs(np.diff(vals, axis=0)) / (rho[1] - rho[0])
    arc = R[:, :] * (th[1] - th[0])
    d_t = np.abs(np.roll(vals, -1, axis=1) - vals)
    with np.errstate(divide="ignore", invalid="ignore"):
        slope_t = np.where(arc > 0, d_t / arc, 0.0)
    return float(max(slope_r.max(), slope_t.max()))


# --- convexification ---------------------------------------------------------


def _frank_hull(dirs, vals):
    pts = dirs / vals[:, None]
    hull = ConvexHull(pts)
    normals = hull.equations[:, :-1]
    offsets = -hull.equations[:, -1]  # facets: normal . x <= offset, offset > 0
    if np.any(offsets <= 0):
        raise ValueError("Frank diagram does not contain the origin in its interior")
    return normals / offsets[:, None]


def convex_envelope(phi: Anisotropy, n_dirs: int = 4096) -> Anisotropy:
    """phi** sampled on ``n_dirs`` directions, extended exactly between them.

    The Wulff set {x : x.u <= phi(u)} has support function equal to the gauge of
    the convex hull of the points u/phi(u); that gauge is the maximum of the hull
    facet functionals, which gives phi** at any direction.
    """
    if n_dirs < 16:
        raise ValueError("n_dirs must be at least 16")
    dirs = sphere_directions(n_dirs, phi.dim)
    vals = phi(dirs)
    if not np.all(vals > 0):
        raise ValueError("anisotropy must be strictly positive on the samples")
    facets = _frank_hull(dirs, vals)

    def f(nu, facets=facets):
        flat = nu.reshape(-1, nu.shape[-1])
        out = np.empty(flat.shape[0])
        for start in range(0, flat.shape[0], 65536):
            chunk = flat[start:start + 65536]
            out[start:start + 65536] = (chunk @ facets.T).max(axis=1)
        return out.reshape(nu.shape[:-1])

    return Anisotropy(f, f"{phi.name}**", phi.dim, params={**phi.params, "n_dirs": n_dirs},
                      directions=dirs)


def convexity_defect(phi: Anisotropy, n_pairs=20000, seed=0) -> float:
    """Largest violation of midpoint convexity of the 1-homogeneous extension."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n_pairs, phi.dim))
    y = rng.normal(size=(n_pairs, phi.dim))
    lhs = phi.homogeneous(0.5 * (x + y))
    rhs = 0.5 * (phi.homogeneous(x) + phi.homogeneous(y))
    return float(np.max(lhs - rhs))
