"""Discrete 1-varifolds sampled from curve networks: first variation (curvature density
plus junction atoms), monotonicity and Gauss-Bonnet diagnostics, density blow-ups."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sharp_geometry import CurveNetwork, junction_vector

DENSITY_TOL = 0.15


@dataclass
class DiscreteVarifold:
    points: np.ndarray       # (N, 2)
    tangents: np.ndarray     # (N, 2), unit
    weights: np.ndarray      # (N,), local arc length
    multiplicity: np.ndarray  # (N,), integers >= 1
    curvature: np.ndarray    # (N, 2)
    atom_points: np.ndarray  # (K, 2)
    atom_vectors: np.ndarray  # (K, 2)

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if np.any(self.multiplicity < 1):
            raise ValueError("multiplicities must be >= 1")
        if np.max(np.abs(np.linalg.norm(self.tangents, axis=1) - 1.0), initial=0.0) > 1e-12:
            raise ValueError("tangents must be unit vectors")

    @property
    def mass_weights(self):
        return self.weights * self.multiplicity

    @property
    def mass(self) -> float:
        return math.fsum(self.mass_weights)

    @property
    def has_atoms(self) -> bool:
        return len(self.atom_points) > 0

    def total_curvature(self) -> float:
        return math.fsum(self.mass_weights * np.linalg.norm(self.curvature, axis=1))

    def ball_mass(self, x0, r) -> float:
        d = np.linalg.norm(self.points - np.asarray(x0, dtype=float), axis=1)
        return math.fsum(self.mass_weights[d < r])

    def __add__(self, other: "DiscreteVarifold") -> "DiscreteVarifold":
        cat = lambda a, b: np.concatenate([a, b])
        return DiscreteVarifold(cat(self.points, other.points), cat(self.tangents, other.tangents),
                                cat(self.weights, other.weights), cat(self.multiplicity, other.multiplicity),
                                cat(self.curvature, other.curvature), cat(self.atom_points, other.atom_points),
                                cat(self.atom_vectors, other.atom_vectors))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _arclength_table(c, m):
    """Cumulative arc length on a uniform parameter grid of m intervals."""
    edges = np.linspace(0.0, 1.0, m + 1)
    dt = 1.0 / m
    t = edges[:-1, None] + dt * _GL_X[None, :]
    seg = dt * np.sum(_GL_W[None, :] * c.speed(t.ravel()).reshape(t.shape), axis=1)
    return edges, np.concatenate([[0.0], np.cumsum(seg)])


def _partial_length(c, a, b):
    t = a[:, None] + (b - a)[:, None] * _GL_X[None, :]
    return (b - a) * np.sum(_GL_W[None, :] * c.speed(t.ravel()).reshape(t.shape), axis=1)


def _invert_arclength(c, s_target):
    m = max(4 * len(s_target), 2048)
    edges, S = _arclength_table(c, m)
    k = np.clip(np.searchsorted(S, s_target, side="right") - 1, 0, m - 1)
    t0 = edges[k]
    t = t0 + (s_target - S[k]) / c.speed(t0)
    for _ in range(4):
        t = t - (S[k] + _partial_length(c, t0, t) - s_target) / c.speed(t)
    return t, S[-1]


def discretize(net: CurveNetwork, h: float) -> DiscreteVarifold:
    """Arc-length-uniform midpoint samples of spacing <= h with exact curvature vectors."""
    kmax = net.max_curvature()
    if kmax > 0 and h > 0.1 / kmax:
        raise ValueError(f"h={h} too coarse: need h <= {0.1 / kmax:.3g} (a tenth of the smallest curvature radius)")
    P, T, W, H = [], [], [], []
    for c in net.curves:
        L = c.length(panels=1024)
        n = max(int(math.ceil(L / h)), 4)
        t, _ = _invert_arclength(c, (np.arange(n) + 0.5) * L / n)
        P.append(c.pos(t))
        T.append(c.tangent(t))
        W.append(np.full(n, L / n))
        H.append(c.curvature(t))
    atoms_p = net.points.copy()
    atoms_v = np.array([junction_vector(net, p)[0] for p in net.points]).reshape(-1, 2)
    W = np.concatenate(W)
    return DiscreteVarifold(np.vstack(P), np.vstack(T), W, np.ones(len(W), dtype=int),
                            np.vstack(H), atoms_p, atoms_v)


def _jacobian_fd(zeta, x, step=1e-5):
    J = np.empty(x.shape[:1] + (2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = step
        J[:, :, j] = (zeta(x + e) - zeta(x - e)) / (2.0 * step)
    return J


def first_variation(V: DiscreteVarifold, zeta, jac=None) -> float:
    """delta V(zeta) = int D zeta : (Id - nu x nu) dmu, i.e. int T . (D zeta T) dmu.

    ``zeta`` maps (N, 2) points to (N, 2) vectors; ``jac`` returns the (N, 2, 2)
    Jacobian d zeta_i / d x_j and defaults to central differences.
    """
    J = jac(V.points) if jac is not None else _jacobian_fd(zeta, V.points)
    tdiv = np.einsum("ni,nij,nj->n", V.tangents, J, V.tangents)
    return math.fsum(V.mass_weights * tdiv)


def first_variation_curvature(V: DiscreteVarifold, zeta) -> float:
    """-int H . zeta dmu - sum_p zeta(p) . v_p: the representation through H and the atoms."""
    ac = -math.fsum(V.mass_weights * np.sum(V.curvature * zeta(V.points), axis=1))
    if V.has_atoms:
        ac -= math.fsum(np.sum(zeta(V.atom_points) * V.atom_vectors, axis=1))
    return ac


def monotonicity_gap(V: DiscreteVarifold, x0, r: float) -> float:
    """int |H| dmu - mu(B_r(x0))/r; nonnegative for curvature in L^1."""
    if V.has_atoms:
        raise ValueError("monotonicity needs an atom-free varifold")
    if r <= 0:
        raise ValueError("r must be positive")
    return V.total_curvature() - V.ball_mass(x0, r) / r


def gauss_bonnet_deficit(V: DiscreteVarifold) -> float:
    """int |H| dmu - 2 pi, for closed curves with square-integrable curvature."""
    if V.has_atoms:
        raise ValueError("Gauss-Bonnet bound does not apply: first variation has atoms")
    if V.mass <= 0:
        raise ValueError("zero mass")
    return V.total_curvature() - 2.0 * math.pi


@dataclass(frozen=True)
class BlowUp:
    density: float
    quotients: np.ndarray
    arms: int | None
    label: str


def density_and_blowup(V: DiscreteVarifold, x0, rhos, tol: float = DENSITY_TOL) -> BlowUp:
    """Density from mu(B_rho)/(2 rho) extrapolated linearly to rho = 0, and its class.

    Classes: off-curve (0 arms), interior (2 arms, no atom), endpoint (1 arm),
    junction (k arms at an atom) or ambiguous.
    """
    rhos = np.asarray(rhos, dtype=float)
    if rhos.size < 2 or np.any(np.diff(rhos) >= 0):
        raise ValueError("rho sequence must be strictly decreasing with at least two entries")
    spacing = float(np.max(V.weights))
    if rhos[-1] <= 4.0 * spacing:
        raise ValueError("smallest rho is below the sample resolution")
    quot = np.array([V.ball_mass(x0, r) / (2.0 * r) for r in rhos])
    # the bias of the quotient is first order in rho
    slope, icept = np.polyfit(rhos, quot, 1)
    theta = float(icept)
    k = int(round(2.0 * theta))
    if abs(theta - 0.5 * k) > tol or k < 0:
        return BlowUp(theta, quot, None, "ambiguous")
    at_atom = V.has_atoms and np.min(np.linalg.norm(V.atom_points - np.asarray(x0), axis=1)) < rhos[-1] * 1e-3
    if k == 0:
        label = "off-curve"
    elif k == 2 and not at_atom:
        label = "interior"
    elif k == 1:
        label = "endpoint"
    else:
        label = "junction"
    return BlowUp(theta, quot, k, label)


def write_csv(V: DiscreteVarifold, path, atoms_path=None):
    cols = np.column_stack([V.points, V.tangents, V.weights, V.multiplicity, V.curvature])
    np.savetxt(path, cols, delimiter=",", header="x,y,tx,ty,weight,multiplicity,Hx,Hy", comments="",
               fmt="%.17g")
    if atoms_path is not None:
        np.savetxt(atoms_path, np.column_stack([V.atom_points, V.atom_vectors]).reshape(-1, 4),
                   delimiter=",", header="x,y,vx,vy", comments="", fmt="%.17g")
