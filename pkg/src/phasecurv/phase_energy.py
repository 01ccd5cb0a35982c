"""Grid evaluation of the diffuse functionals: the anisotropic Willmore/Modica-Mortola
energy, the point-energy functional and the Mumford-Shah energy with curvature."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from . import field as fl
from .anisotropy import Anisotropy, ExtensionParams, extend
from .profiles import C0_EXACT, double_well, double_well_prime

TERMS = ("bulk", "anisotropic_mm", "curvature", "point", "penalty_v", "penalty_w")


class ResolutionWarning(UserWarning):
    pass


@dataclass
class EnergyBreakdown:
    """Per-term values; ``parts`` holds diagnostics that are not summed into the total."""

    bulk: float = 0.0
    anisotropic_mm: float = 0.0
    curvature: float = 0.0
    point: float = 0.0
    penalty_v: float = 0.0
    penalty_w: float = 0.0
    parts: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return math.fsum(getattr(self, t) for t in TERMS)

    def terms(self) -> dict:
        out = {t: float(getattr(self, t)) for t in TERMS}
        out["total"] = self.total
        return out

    def as_row(self, **params) -> dict:
        return {**params, **self.terms()}


@dataclass(frozen=True)
class MsParams:
    """eps, beta, eta, gamma, lambda and r_eps; beta = sqrt(eps), eta = eps^(1/4), r_eps = eps by default."""

    eps: float
    gamma: float = 0.1
    beta: float | None = None
    eta: float | None = None
    lam: float = 2.0
    r_eps: float | None = None

    def __post_init__(self):
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.lam <= 1.0:
            raise ValueError("lambda must exceed 1")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        for name, default in (("beta", math.sqrt(self.eps)), ("eta", self.eps**0.25), ("r_eps", self.eps)):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
            elif getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def delta(self) -> float:
        return self.lam * self.eps * abs(math.log(self.eps))

    def scaling_flags(self) -> dict:
        """Ratios that must vanish along a valid sequence; reported, not enforced."""
        return {"eps_log_over_beta": self.eps * abs(math.log(self.eps)) / self.beta,
                "beta_over_eta": self.beta / self.eta,
                "delta_over_beta": self.delta / self.beta}

    def as_dict(self) -> dict:
        return {**asdict(self), "delta": self.delta}


def check_resolution(grid: fl.Grid, eps: float):
    if max(grid.h) > eps / 4.0:
        warnings.warn(f"grid spacing {max(grid.h):.3g} exceeds eps/4 = {eps / 4:.3g}", ResolutionWarning,
                      stacklevel=3)


def _resolve(f: fl.ScalarField, method: str, need_lap=True):
    if method != "auto":
        return method
    if (f.has_exact if need_lap else f.grad is not None):
        return "exact"
    return "spectral" if f.grid.boundary == fl.PERIODIC else "fd"


def _derivs(v: fl.ScalarField, method: str):
    method = _resolve(v, method)
    g = fl.gradient(v, method)
    lap = fl.laplacian(v, method).values
    return g, lap


def _mm_density(vals, g, eps):
    return 0.5 * eps * sum(c * c for c in g) + double_well(vals) / eps


def _residual(vals, lap, eps):
    return -eps * lap + double_well_prime(vals) / eps


def mm_measure(v: fl.ScalarField, eps: float, method="auto"):
    """Density (1/c0)(eps |grad v|^2/2 + W(v)/eps) and its integral."""
    check_resolution(v.grid, eps)
    g, _ = _derivs(v, method)
    dens = _mm_density(v.values, g, eps) / C0_EXACT
    return dens, fl.integrate_array(dens, v.grid)


def willmore_residual(v: fl.ScalarField, eps: float, method="auto"):
    """f = -eps lap v + W'(v)/eps and the total of alpha = f^2/(c0 eps)."""
    check_resolution(v.grid, eps)
    _, lap = _derivs(v, method)
    f = _residual(v.values, lap, eps)
    return f, fl.integrate_array(f * f, v.grid) / (C0_EXACT * eps)


def discrepancy(v: fl.ScalarField, eps: float, method="auto"):
    g, _ = _derivs(v, method)
    return 0.5 * eps * sum(c * c for c in g) - double_well(v.values) / eps


def _phi_eps(g, phi: Anisotropy, r_eps):
    return extend(np.stack(g, axis=-1), phi, ExtensionParams(r_eps))


def F_eps(v: fl.ScalarField, phi: Anisotropy, eps: float, r_eps: float | None = None,
          method="auto") -> EnergyBreakdown:
    """(1/c0) int phi_eps(grad v)(eps|grad v|^2/2 + W/eps) + (1/c0) int (1/eps) f^2."""
    check_resolution(v.grid, eps)
    r_eps = eps if r_eps is None else r_eps
    g, lap = _derivs(v, method)
    mm = _mm_density(v.values, g, eps)
    f = _residual(v.values, lap, eps)
    aniso = fl.integrate_array(_phi_eps(g, phi, r_eps) * mm, v.grid) / C0_EXACT
    curv = fl.integrate_array(f * f, v.grid) / (C0_EXACT * eps)
    return EnergyBreakdown(anisotropic_mm=aniso, curvature=curv,
                           parts={"mm_mass": fl.integrate_array(mm, v.grid) / C0_EXACT})


def G_eps_beta(w: fl.ScalarField, eps: float, beta: float, mask=None, method="auto") -> EnergyBreakdown:
    """Point-energy functional restricted to ``mask`` (boolean array, default whole grid)."""
    check_resolution(w.grid, eps)
    g, lap = _derivs(w, method)
    m = np.ones(w.grid.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    mm = _mm_density(w.values, g, eps)
    f = _residual(w.values, lap, eps)
    a = fl.integrate_array(np.where(m, mm, 0.0), w.grid) / (C0_EXACT * beta)
    b = beta * fl.integrate_array(np.where(m, f * f, 0.0), w.grid) / (C0_EXACT * eps)
    return EnergyBreakdown(point=a + b, parts={"point_mm": a, "point_willmore": b})


def MS_energy_eps(u: fl.ScalarField, v: fl.ScalarField, w: fl.ScalarField, phi: Anisotropy,
                  params: MsParams, method="auto") -> EnergyBreakdown:
    """All six terms of the phase-field Mumford-Shah energy with curvature."""
    if not (u.grid == v.grid == w.grid):
        raise ValueError("u, v and w must live on the same grid")
    grid = v.grid
    eps = params.eps
    check_resolution(grid, eps)
    gu = fl.gradient(u, _resolve(u, method, need_lap=False))
    gv, lapv = _derivs(v, method)
    gate_v = (1.0 + v.values) ** 2
    gate_w = (1.0 + w.values) ** 2
    bulk = 0.25 * fl.integrate_array(gate_v * sum(c * c for c in gu), grid)
    mm = _mm_density(v.values, gv, eps)
    aniso = fl.integrate_array(_phi_eps(gv, phi, params.r_eps) * mm, grid) / (2.0 * C0_EXACT)
    f = _residual(v.values, lapv, eps)
    curv = fl.integrate_array(f * f * gate_w, grid) / (8.0 * C0_EXACT * eps)
    G = G_eps_beta(w, eps, params.beta, method=method)
    point = params.gamma / (4.0 * math.pi) * G.point
    pen_v = fl.integrate_array((1.0 - v.values) ** 2, grid) / params.eta
    pen_w = fl.integrate_array((1.0 - w.values) ** 2, grid) / params.eta
    return EnergyBreakdown(bulk, aniso, curv, point, pen_v, pen_w,
                           parts={"mm_mass_raw": fl.integrate_array(mm, grid),
                                  "G": G.point, "sup_abs_w_minus_1": float(np.max(np.abs(w.values - 1.0))),
                                  **G.parts})
