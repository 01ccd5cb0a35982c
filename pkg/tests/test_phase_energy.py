import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phasecurv import anisotropy as an
from phasecurv import field as fl
from phasecurv import phase_energy as pe
from phasecurv.profiles import C0_EXACT, ProfileParams, profile_mass, truncated_profile

ISO = an.isotropic()


def slab(eps, n=512, lx=1.0, ly=1.0):
    """v = q_eps(y) on a Neumann box, with exact derivatives."""
    g = fl.Grid((0.0, -ly / 2), (lx, ly), (16, n), fl.NEUMANN)
    p = ProfileParams(eps)
    _, Y = g.mesh()
    return fl.ScalarField(g, truncated_profile(Y, p), grad=(np.zeros(g.shape), truncated_profile(Y, p, 1)),
                          lap=truncated_profile(Y, p, 2)), p


def test_well_bottom_vanishes():
    g = fl.Grid.square(-1, 1, 32)
    one = fl.constant(g, 1.0)
    _, mm = pe.mm_measure(one, 0.1)
    f, alpha = pe.willmore_residual(one, 0.1)
    assert mm == 0 and alpha == 0 and np.all(f == 0)
    assert np.all(pe.discrepancy(one, 0.1) == 0)
    assert pe.F_eps(one, an.cos4(0.5), 0.1).total == 0
    assert pe.G_eps_beta(one, 0.1, 0.3).total == 0
    assert pe.MS_energy_eps(fl.constant(g, 3.0), one, one, ISO, pe.MsParams(0.1)).total == 0


@pytest.mark.parametrize("eps", [2e-2, 1e-2])
def test_slab_mass_matches_profile_quadrature(eps):
    v, p = slab(eps, n=2048)
    _, total = pe.mm_measure(v, eps)
    m = profile_mass(p)
    assert total == pytest.approx((m.kinetic + m.potential) / C0_EXACT, rel=1e-4)


def test_slab_mass_tends_to_length():
    errs = []
    for eps in (2e-2, 1e-2, 5e-3):
        v, _ = slab(eps, n=2048)
        errs.append(abs(pe.mm_measure(v, eps)[1] - 1.0))
    assert errs[0] > errs[1] > errs[2]
    assert errs[-1] < 1e-3


def test_discrepancy_decays():
    vals = []
    for eps in (2e-2, 1e-2, 5e-3):
        v, _ = slab(eps, n=4096)
        vals.append(fl.integrate_array(np.abs(pe.discrepancy(v, eps)), v.grid))
    assert vals[0] > vals[1] > vals[2]


def test_anisotropic_bounds(rng):
    g = fl.Grid.square(-1, 1, 64)
    v = fl.ScalarField(g, np.tanh(rng.normal(size=g.shape)))
    phi = an.cos4(0.8)
    for eps in (0.1, 0.05):
        e = pe.F_eps(v, phi, eps, method="spectral")
        mass = e.parts["mm_mass"]
        assert mass / (4 * phi.bound_c) <= e.anisotropic_mm <= phi.bound_c * mass


@given(st.integers(0, 2**20), st.floats(0.02, 0.5), st.floats(-2, 2))
def test_nonnegative(seed, eps, shift):
    rng = np.random.default_rng(seed)
    g = fl.Grid.square(0, 1, 16)
    u, v, w = (fl.ScalarField(g, shift + rng.normal(size=g.shape)) for _ in range(3))
    e = pe.MS_energy_eps(u, v, w, an.cos4(0.5), pe.MsParams(eps, gamma=0.3), method="spectral")
    assert all(x >= 0 for x in e.terms().values())
    assert abs(e.total - sum(getattr(e, t) for t in pe.TERMS)) <= 1e-12 * max(1.0, e.total)
    assert pe.F_eps(v, an.smoothed_l1(), eps, method="fd").total >= 0


def test_gate_w_minus_one():
    g = fl.Grid.square(-1, 1, 32)
    rng = np.random.default_rng(3)
    v = fl.ScalarField(g, rng.normal(size=g.shape))
    w = fl.constant(g, -1.0)
    p = pe.MsParams(0.1)
    e = pe.MS_energy_eps(fl.constant(g, 0.0), v, w, ISO, p)
    assert e.curvature == 0.0
    assert e.penalty_w == pytest.approx(4 * g.volume / p.eta, rel=1e-12)


def test_ms_params():
    p = pe.MsParams(1e-4)
    assert p.beta == pytest.approx(1e-2)
    assert p.eta == pytest.approx(0.1)
    assert p.r_eps == 1e-4
    assert p.delta == pytest.approx(2e-4 * math.log(1e4))
    f = p.scaling_flags()
    assert f["beta_over_eta"] == pytest.approx(0.1)
    for bad in (dict(eps=0.0), dict(eps=1.0), dict(eps=0.1, lam=1.0), dict(eps=0.1, gamma=-1.0),
                dict(eps=0.1, beta=-1.0)):
        with pytest.raises(ValueError):
            pe.MsParams(**bad)


def test_grid_mismatch():
    a = fl.constant(fl.Grid.square(0, 1, 16), 1.0)
    b = fl.constant(fl.Grid.square(0, 1, 32), 1.0)
    with pytest.raises(ValueError):
        pe.MS_energy_eps(a, a, b, ISO, pe.MsParams(0.1))


def test_resolution_warning():
    g = fl.Grid.square(0, 1, 16)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        pe.F_eps(fl.constant(g, 1.0), ISO, 0.01)
    assert any(issubclass(r.category, pe.ResolutionWarning) for r in rec)


def test_rotation_invariance(rng):
    # quarter turn of the fields together with the anisotropy
    g = fl.Grid.square(-1, 1, 32)
    X, Y = g.mesh()
    u = fl.ScalarField(g, np.sin(np.pi * X) * np.cos(2 * np.pi * Y))
    v = fl.ScalarField(g, np.tanh(3 * np.sin(np.pi * (X + 0.3 * Y))))
    w = fl.ScalarField(g, np.cos(np.pi * X) ** 2 - 0.5 * np.sin(np.pi * Y))
    phi = an.ellipse_support(2.0, 1.0)
    rphi = an.ellipse_support(1.0, 2.0)
    rot = lambda f: fl.ScalarField(g, np.rot90(f.values))
    p = pe.MsParams(0.1, gamma=0.2)
    a = pe.MS_energy_eps(u, v, w, phi, p, method="spectral").terms()
    b = pe.MS_energy_eps(rot(u), rot(v), rot(w), rphi, p, method="spectral").terms()
    for k in a:
        assert b[k] == pytest.approx(a[k], rel=1e-10, abs=1e-12)


def test_g_eps_beta_mask():
    g = fl.Grid.square(-1, 1, 32)
    X, Y = g.mesh()
    w = fl.ScalarField(g, np.tanh(5 * (np.hypot(X, Y) - 0.5)))
    full = pe.G_eps_beta(w, 0.1, 0.3, method="spectral")
    left = pe.G_eps_beta(w, 0.1, 0.3, mask=X < 0, method="spectral")
    right = pe.G_eps_beta(w, 0.1, 0.3, mask=X >= 0, method="spectral")
    assert left.point + right.point == pytest.approx(full.point, rel=1e-12)
    assert full.point == pytest.approx(full.parts["point_mm"] + full.parts["point_willmore"], rel=1e-12)
