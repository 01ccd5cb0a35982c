"""Recovery-sequence constructions: truncated profiles composed with (signed) distance
functions, for sets and for Mumford-Shah states with crack tips and junctions.

Every field carries its exact gradient and Laplacian (chain rule through the
distance function), so energies can be evaluated without finite-difference error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import field as fl
from .phase_energy import MsParams
from .profiles import C0_EXACT, ProfileParams, _quad, double_well, double_well_prime, truncated_profile
from .sharp_geometry import CurveNetwork, SharpMsState, network_distance


def _profile_field(grid, d, gx, gy, lapd, p: ProfileParams, meta):
    q0 = truncated_profile(d, p, 0)
    q1 = truncated_profile(d, p, 1)
    q2 = truncated_profile(d, p, 2)
    # |grad d| = 1 wherever q' is nonzero
    return fl.ScalarField(grid, q0, grad=(q1 * gx, q1 * gy), lap=q2 + q1 * lapd, meta=meta)


def recover_set(boundary: CurveNetwork, eps: float, grid: fl.Grid, lam: float = 2.0) -> fl.ScalarField:
    """q_eps composed with the signed distance (negative inside)."""
    if not boundary.is_closed:
        raise ValueError("recover_set needs a closed boundary")
    p = ProfileParams(eps, lam)
    kmax = boundary.max_curvature()
    if kmax > 0 and p.delta >= 1.0 / kmax:
        raise ValueError(f"delta={p.delta:.3g} exceeds the smallest curvature radius {1 / kmax:.3g}")
    # the profile is constant beyond delta, so exact projection is only needed inside the tube
    sd = fl.signed_distance(boundary, grid, refine_within=p.delta + 2.0 * max(grid.h))
    meta = {"construction": "set", "shape": boundary.name, "eps": eps, "lambda": lam, "delta": p.delta}
    return _profile_field(grid, sd.values, *sd.grad, sd.lap, p, meta)


def _binomial_smooth(values, mask):
    k = np.array([1.0, 2.0, 1.0]) / 4.0
    pad = np.pad(values, 1, mode="edge")
    sm = sum(k[i] * k[j] * pad[i:i + values.shape[0], j:j + values.shape[1]] for i in range(3) for j in range(3))
    return np.where(mask, sm, values)


def recover_ms(state: SharpMsState, params: MsParams, grid: fl.Grid, mollify: bool = True):
    """(u_bar, v_bar, w_bar) for a Mumford-Shah state.

    d = dist(., J_u) - 2 delta; u_bar is u times the ramp 0 / (2d + 3 delta)/delta / 1,
    v_bar = q_eps(d) and w_bar = min_i q_eps(|x - p_i| - beta).
    """
    if grid.dim != 2:
        raise ValueError("Mumford-Shah recovery is planar")
    net = state.network
    p = ProfileParams(params.eps, params.lam)
    delta, beta = p.delta, params.beta
    r_plus = beta + delta
    pts = net.points
    lo = np.array(grid.origin)
    hi = lo + np.array(grid.extent)
    for i, a in enumerate(pts):
        if np.any(a - r_plus < lo) or np.any(a + r_plus > hi):
            raise ValueError(f"ball B_(beta+delta) around {tuple(a)} leaves the grid")
        for b in pts[i + 1:]:
            if np.linalg.norm(a - b) <= 2.0 * r_plus:
                raise ValueError("junction balls of radius beta+delta overlap")
    X, Y = grid.mesh()
    h = min(grid.h)
    dres = network_distance(net, X, Y, spacing=h / 4.0, refine_within=3.0 * delta + 2.0 * max(grid.h))
    d = dres.dist - 2.0 * delta
    meta = {"construction": "ms", "shape": net.name, **params.as_dict()}

    v = _profile_field(grid, d, dres.gx, dres.gy, dres.lap, p, dict(meta, field="v"))

    ramp = np.clip((2.0 * d + 3.0 * delta) / delta, 0.0, 1.0)
    dramp = np.where((d > -1.5 * delta) & (d < -delta), 2.0 / delta, 0.0)
    uu = state.u(X, Y)
    gux, guy = state.grad_u(X, Y)
    u = fl.ScalarField(grid, ramp * uu, grad=(dramp * dres.gx * uu + ramp * gux, dramp * dres.gy * uu + ramp * guy),
                       meta=dict(meta, field="u"))

    if len(pts):
        rr = np.stack([np.hypot(X - a[0], Y - a[1]) for a in pts])
        k = np.argmin(rr, axis=0)
        r = np.take_along_axis(rr, k[None], axis=0)[0]
        ex = np.where(r > 0, (X - pts[k, 0]) / np.where(r > 0, r, 1.0), 0.0)
        ey = np.where(r > 0, (Y - pts[k, 1]) / np.where(r > 0, r, 1.0), 0.0)
        lapr = np.where(r > 0, 1.0 / np.where(r > 0, r, 1.0), 0.0)
        w = _profile_field(grid, r - beta, ex, ey, lapr, p, dict(meta, field="w"))
    else:
        w = fl.ScalarField(grid, np.ones(grid.shape), grad=(np.zeros(grid.shape),) * 2,
                           lap=np.zeros(grid.shape), meta=dict(meta, field="w"))

    if mollify and len(pts):
        near = np.zeros(grid.shape, dtype=bool)
        for a in pts:
            near |= np.hypot(X - a[0], Y - a[1]) <= 4.0 * h
        sm = _binomial_smooth(v.values, near)
        changed = int(np.count_nonzero(sm != v.values))
        v.meta["mollified_nodes"] = changed
        if changed:
            # exact derivatives no longer describe the smoothed values
            v = fl.ScalarField(grid, sm, meta=v.meta)
    return u, v, w


@dataclass(frozen=True)
class PointEnergy:
    total: float
    mm_half: float
    willmore_half: float


def radial_point_energy(eps: float, beta: float | None = None, lam: float = 2.0) -> PointEnergy:
    """G_{eps,beta} of w = q_eps(|x| - beta) on the annulus beta - delta < |x| < beta + delta.

    Both halves are one-dimensional integrals in r, normalised by 1/c0.
    """
    p = ProfileParams(eps, lam)
    beta = math.sqrt(eps) if beta is None else beta
    delta = p.delta
    if not delta < beta:
        raise ValueError(f"need delta ({delta:.3g}) < beta ({beta:.3g})")
    br = [-delta, -0.5 * delta, 0.5 * delta, delta] + [k * eps for k in (-8, -4, -2, -1, 0, 1, 2, 4, 8)]

    def mm(s):
        q1 = truncated_profile(s, p, 1)
        return (0.5 * eps * q1 * q1 + double_well(truncated_profile(s, p, 0)) / eps) * (s + beta)

    def wr(s):
        q0, q1, q2 = (truncated_profile(s, p, k) for k in (0, 1, 2))
        f = -eps * q2 + double_well_prime(q0) / eps - eps * q1 / (s + beta)
        return f * f * (s + beta)

    a = 2.0 * math.pi / beta * _quad(mm, -delta, delta, br)[0] / C0_EXACT
    b = 2.0 * math.pi * beta / eps * _quad(wr, -delta, delta, br)[0] / C0_EXACT
    return PointEnergy(a + b, a, b)


def coarea_mm_mass(level_length, eps: float, lam: float = 2.0) -> float:
    """Raw Modica-Mortola mass of q_eps(dist - 2 delta) by the co-area formula.

    ``level_length(s)`` is the length of {dist = s}; for a segment of length L it is
    2 L + 2 pi s, for a circle of radius R (s < R) it is 4 pi R.
    """
    p = ProfileParams(eps, lam)
    d = p.delta

    def dens(s):
        t = s - 2.0 * d
        q1 = truncated_profile(t, p, 1)
        return (0.5 * eps * q1 * q1 + double_well(truncated_profile(t, p, 0)) / eps) * level_length(s)

    br = [2.0 * d + k * eps for k in (-8, -4, -2, -1, 0, 1, 2, 4, 8)] + [1.5 * d, 2.5 * d]
    return _quad(dens, d, 3.0 * d, br)[0]


def l1_to_indicator(v: fl.ScalarField, sd: fl.ScalarField) -> float:
    """L^1 distance from v to the sharp field equal to -1 on {sd < 0} and +1 elsewhere."""
    sharp = np.where(sd.values < 0, -1.0, 1.0)
    return fl.integrate_array(np.abs(v.values - sharp), v.grid)

