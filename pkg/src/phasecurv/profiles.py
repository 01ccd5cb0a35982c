"""One-dimensional optimal profiles for the double-well potential W(z) = (1 - z^2)^2.

The heteroclinic profile q(t) = tanh(sqrt(2) t) is glued to the constants +-1 by a
quintic cut-off, giving the truncated profile q_eps used by every recovery
construction in the package.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import expit

SQRT2 = math.sqrt(2.0)
C0_EXACT = 4.0 * SQRT2 / 3.0

QUAD_EPSABS = 1e-12


class QuadratureWarning(UserWarning):
    pass


def double_well(z):
    z = np.asarray(z, dtype=float)
    return (1.0 - z * z) ** 2


def double_well_prime(z):
    z = np.asarray(z, dtype=float)
    return -4.0 * z * (1.0 - z * z)


def double_well_second(z):
    z = np.asarray(z, dtype=float)
    return 12.0 * z * z - 4.0


def c0_integrand(z):
    return np.sqrt(2.0 * double_well(z))


def c0_constant() -> float:
    """Profile cost c0 = int_{-1}^{1} sqrt(2 W(z)) dz, by adaptive quadrature."""
    val, _ = integrate.quad(c0_integrand, -1.0, 1.0, epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


def optimal_profile(t):
    return np.tanh(SQRT2 * np.asarray(t, dtype=float))


def _one_minus_abs_q(x):
    # 1 - |tanh(sqrt2 x)| without cancellation
    return 2.0 * expit(-2.0 * SQRT2 * np.abs(x))


def _sech2(x):
    c = np.cosh(np.minimum(SQRT2 * np.abs(x), 350.0))
    return 1.0 / (c * c)


def optimal_profile_d1(t):
    return SQRT2 * _sech2(np.asarray(t, dtype=float))


def optimal_profile_d2(t):
    t = np.asarray(t, dtype=float)
    return -4.0 * optimal_profile(t) * _sech2(t)


# quintic smoothstep S(s) = 10 s^3 - 15 s^4 + 6 s^5 on [0, 1]; C^2 at both ends
def _smoothstep(s):
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s))


def _smoothstep_d1(s):
    return 30.0 * s * s * (1.0 - s) ** 2


def _smoothstep_d2(s):
    return 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s)


def cutoff(t):
    """Even cut-off: 1 on [-1, 1], 0 for |t| >= 2, quintic blend in between."""
    s = np.clip(np.abs(np.asarray(t, dtype=float)) - 1.0, 0.0, 1.0)
    return 1.0 - _smoothstep(s)


def cutoff_d1(t):
    t = np.asarray(t, dtype=float)
    s = np.clip(np.abs(t) - 1.0, 0.0, 1.0)
    return -np.sign(t) * _smoothstep_d1(s)


def cutoff_d2(t):
    s = np.clip(np.abs(np.asarray(t, dtype=float)) - 1.0, 0.0, 1.0)
    return -_smoothstep_d2(s)


@dataclass(frozen=True)
class ProfileParams:
    """Interface width eps, truncation factor lam and delta = lam * eps * |log eps|."""

    eps: float
    lam: float = 2.0

    def __post_init__(self):
        if not (0.0 < self.eps < 1.0):
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not self.lam > 1.0:
            raise ValueError(f"lambda must exceed 1, got {self.lam}")

    @property
    def delta(self) -> float:
        return self.lam * self.eps * abs(math.log(self.eps))


def truncated_profile(t, p: ProfileParams, deriv: int = 0):
    """q_eps(t) = zeta(2t/delta) q(t/eps) + sign(t) (1 - zeta(2t/delta)), or a derivative.

    ``deriv`` selects the value (0), first (1) or second (2) derivative; all three
    are exact closed forms.
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("truncated_profile needs finite arguments")
    eps, delta = p.eps, p.delta
    s = 2.0 * t / delta
    z = cutoff(s)
    sg = np.sign(t)
    x = t / eps
    gap = _one_minus_abs_q(x)  # q(x) - sign(t) == -sign(t) * gap
    if deriv == 0:
        return sg * (1.0 - z * gap)
    q1 = SQRT2 * _sech2(x)
    z1 = cutoff_d1(s)
    if deriv == 1:
        return -(2.0 / delta) * z1 * sg * gap + z * q1 / eps
    if deriv == 2:
        q2 = -4.0 * optimal_profile(x) * _sech2(x)
        z2 = cutoff_d2(s)
        return (-(4.0 / delta**2) * z2 * sg * gap + (4.0 / (delta * eps)) * z1 * q1
                + z * q2 / eps**2)
    raise ValueError("deriv must be 0, 1 or 2")


def one_minus_abs(t, p: ProfileParams):
    """1 - |q_eps(t)| evaluated without cancellation."""
    t = np.asarray(t, dtype=float)
    return cutoff(2.0 * t / p.delta) * _one_minus_abs_q(t / p.eps)


def _w_stable(gap):
    # W(z) for |z| = 1 - gap
    return (gap * (2.0 - gap)) ** 2


def energy_density(t, p: ProfileParams):
    """(kinetic, potential) line densities eps/2 |q_eps'|^2 and W(q_eps)/eps."""
    d1 = truncated_profile(t, p, 1)
    return 0.5 * p.eps * d1 * d1, _w_stable(one_minus_abs(t, p)) / p.eps


def residual_density(t, p: ProfileParams):
    """-eps q_eps'' + W'(q_eps)/eps; vanishes identically off the gluing bands."""
    t = np.asarray(t, dtype=float)
    gap = one_minus_abs(t, p)
    # W'(z) = -4 z (1 - z^2) with |z| = 1 - gap
    wprime = -4.0 * np.sign(t) * (1.0 - gap) * gap * (2.0 - gap)
    return -p.eps * truncated_profile(t, p, 2) + wprime / p.eps


def _quad(f, a, b, breaks, epsabs=QUAD_EPSABS):
    pts = sorted(x for x in breaks if a < x < b)
    total, err = 0.0, 0.0
    edges = [a, *pts, b]
    for lo, hi in zip(edges[:-1], edges[1:]):
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                val, e = integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=1e-13, limit=400)
            except integrate.IntegrationWarning as exc:
                warnings.warn(f"quadrature on [{lo:g}, {hi:g}] did not converge: {exc}", QuadratureWarning)
                val, e = integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=1e-13, limit=400)
        total += val
        err += e
    return total, err


def _breaks(p: ProfileParams):
    d, e = p.delta, p.eps
    core = [k * e for k in (-8, -4, -2, -1, 0, 1, 2, 4, 8)]
    return [-d, -0.5 * d, 0.5 * d, d, *core]


@dataclass(frozen=True)
class ProfileMass:
    kinetic: float
    potential: float
    tail: float
    kinetic_inner: float
    potential_inner: float
    kinetic_gap: float  # kinetic - c0/2, computed without cancellation


def profile_mass(p: ProfileParams) -> ProfileMass:
    """Kinetic/potential masses on [-delta, delta] and the tail mass on |t| >= delta/2."""
    d = p.delta
    br = _breaks(p)
    kin = lambda t: energy_density(t, p)[0]
    pot = lambda t: energy_density(t, p)[1]
    both = lambda t: sum(energy_density(t, p))
    kinetic, _ = _quad(kin, -d, d, br)
    potential, _ = _quad(pot, -d, d, br)
    kin_in, _ = _quad(kin, -0.5 * d, 0.5 * d, br)
    pot_in, _ = _quad(pot, -0.5 * d, 0.5 * d, br)
    # q_eps is constant beyond delta, so the tail lives on the two gluing bands
    tail = _quad(both, 0.5 * d, d, br, 0.0)[0] + _quad(both, -d, -0.5 * d, br, 0.0)[0]
    # inner kinetic equals c0/2 minus the tanh tail beyond x = delta/(2 eps)
    band_kin = _quad(kin, 0.5 * d, d, br, 0.0)[0] + _quad(kin, -d, -0.5 * d, br, 0.0)[0]
    x0 = 0.5 * d / p.eps
    lost = _quad(lambda s: optimal_profile_d1(s) ** 2, x0, x0 + 40.0, [x0 + 2.0, x0 + 8.0], 0.0)[0]
    return ProfileMass(kinetic, potential, tail, kin_in, pot_in, band_kin - lost)


def profile_residual(p: ProfileParams) -> float:
    """int_{-delta}^{delta} |-eps q_eps'' + W'(q_eps)/eps|^2 dt."""
    d = p.delta
    f = lambda t: residual_density(t, p) ** 2
    # the integrand vanishes off the bands delta/2 <= |t| <= delta
    return (_quad(f, 0.5 * d, d, [0.75 * d], 0.0)[0]
            + _quad(f, -d, -0.5 * d, [-0.75 * d], 0.0)[0])
