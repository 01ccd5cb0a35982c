import math

import numpy as np
import pytest

from phasecurv import anisotropy as an
from phasecurv import field as fl
from phasecurv import minimize as mn
from phasecurv import phase_energy as pe
from phasecurv import recovery as rc
from phasecurv import sharp_geometry as sg

ISO = an.isotropic()


def nonincreasing(vals, slack=1e-8):
    return all(b <= a + slack for a, b in zip(vals, vals[1:]))


def circle_start(R=1.5, n=64, hw=2.5):
    g = fl.Grid.square(-hw, hw, n)
    eps = 4 * g.h[0]
    return rc.recover_set(sg.circle(R), eps, g).plain(), eps


def test_spectral_needs_periodic():
    with pytest.raises(ValueError):
        mn.Spectral(fl.Grid.square(0, 1, 16, boundary=fl.NEUMANN))


def test_spectral_adjoint(rng):
    sp = mn.Spectral(fl.Grid.square(0, 1, 32))
    a, bx, by = rng.normal(size=(3, 32, 32))
    gx, gy = sp.grad(a)
    lhs = np.sum(gx * bx + gy * by)
    rhs = -np.sum(a * sp.div(bx, by))
    assert abs(lhs - rhs) < 1e-10 * abs(lhs)


def test_flow_fixed_point():
    g = fl.Grid.square(-1, 1, 32)
    res = mn.flow_F_eps(fl.constant(g, 1.0), ISO, 0.25, 1.0, 20)
    assert all(r["total"] == 0.0 for r in res.trace)
    assert np.all(res.field.values == 1.0)


@pytest.mark.parametrize("phi", [ISO, an.cos4(0.9)], ids=["iso", "cos4"])
def test_flow_descends(phi):
    v0, eps = circle_start()
    res = mn.flow_F_eps(v0, phi, eps, 1.0, 40)
    assert len(res.trace) == 41
    assert nonincreasing([r["total"] for r in res.trace])


def test_flow_large_circle_shrinks_toward_one():
    v0, eps = circle_start(1.5)
    res = mn.flow_F_eps(v0, ISO, eps, 1.0, 60)
    r0, r1 = mn.level_set_radius(v0), mn.level_set_radius(res.field)
    assert abs(r0 - 1.5) < 0.01
    assert 1.0 < r1 < r0 - 0.2


def test_flow_small_circle_grows():
    v0, eps = circle_start(0.8, n=128)
    res = mn.flow_F_eps(v0, ISO, eps, 1.0, 60)
    assert mn.level_set_radius(res.field) > mn.level_set_radius(v0) + 0.05


def test_flow_stationarity():
    v0, eps = circle_start(1.0)
    res = mn.flow_F_eps(v0, ISO, eps, 1.0, 400, record_every=50, gtol=1e-3)
    assert res.converged and res.residual < 1e-3


def test_flow_divergence_detected():
    v0, eps = circle_start()
    # a negative slack refuses every step
    with pytest.raises(mn.DivergenceError):
        mn.flow_F_eps(v0, ISO, eps, 1.0, 5, slack=-1.0)


def test_screened_poisson_oracle(rng):
    g = fl.Grid.square(-1, 1, 64)
    X, Y = g.mesh()
    data = np.sign(np.sin(np.pi * X)) * np.cos(np.pi * Y) + 0.1 * rng.normal(size=g.shape)
    one = fl.constant(g, 1.0)
    mu, kappa = 50.0, 1e-6
    res = mn.alternate_ms(fl.constant(g, 0.0), one, one, fl.ScalarField(g, data), mu, ISO, pe.MsParams(0.1),
                          mn.Schedule(cycles=1, kappa=kappa), freeze_vw=True)
    ks = []
    for n, h in zip(g.n, g.h):
        k = 2 * np.pi * np.fft.fftfreq(n, d=h)
        k[n // 2] = 0.0
        ks.append(k)
    KX, KY = np.meshgrid(*ks, indexing="ij")
    oracle = np.real(np.fft.ifft2(mu * np.fft.fft2(data) / ((1 + kappa) * (KX**2 + KY**2) + mu)))
    assert np.max(np.abs(res.u.values - oracle)) < 1e-6
    assert np.all(res.v.values == 1.0) and np.all(res.w.values == 1.0)


def test_u_step_mirror_symmetry():
    g = fl.Grid.square(-1, 1, 64)
    X, Y = g.mesh()
    data = np.exp(-4 * X * X) * (Y > 0.2)
    v = 1 - 0.9 * np.exp(-((np.abs(X) - 0.5) ** 2) / 0.01)
    sp = mn.Spectral(g)
    u, its = mn.solve_u(sp, v, data, 20.0)
    assert its > 0
    assert np.max(np.abs(u - u[::-1, :])) < 1e-9


def test_u_step_failure_reported():
    g = fl.Grid.square(-1, 1, 32)
    X, _ = g.mesh()
    sp = mn.Spectral(g)
    with pytest.raises(mn.SolverError):
        mn.solve_u(sp, 1 - 1.999 * (np.abs(X) < 0.5), np.sign(X), 1.0, rtol=1e-14, maxiter=1)


def test_constant_data_converges_to_zero_energy():
    g = fl.Grid.square(-1, 1, 32)
    X, Y = g.mesh()
    bump = np.exp(-(X**2 + Y**2) / 0.1)
    res = mn.alternate_ms(fl.constant(g, 0.0), fl.ScalarField(g, 1 - 0.3 * bump), fl.ScalarField(g, 1 - 0.2 * bump),
                          fl.constant(g, 0.7), 100.0, ISO, pe.MsParams(4 * g.h[0], gamma=0.01), mn.Schedule(cycles=20))
    objs = [r["objective"] for r in res.trace]
    assert nonincreasing(objs)
    assert objs[-1] < 1e-12
    assert np.max(np.abs(res.u.values - 0.7)) < 1e-8
    assert np.max(np.abs(res.v.values - 1)) < 1e-6 and np.max(np.abs(res.w.values - 1)) < 1e-6


def test_stripe_forms_tube():
    g = fl.Grid.square(-1, 1, 32)
    u0, v0, w0, data, dist = mn.ms_initial_state(g, "stripe")
    res = mn.alternate_ms(u0, v0, w0, data, 100.0, ISO, pe.MsParams(4 * g.h[0], gamma=0.01), mn.Schedule(cycles=10))
    assert nonincreasing([r["objective"] for r in res.trace])
    band = dist < 0.75 * g.h[0]
    assert np.max(1 - res.v.values[band]) > 0.9


def test_alternate_ms_validation():
    g = fl.Grid.square(-1, 1, 16)
    one = fl.constant(g, 1.0)
    with pytest.raises(ValueError):
        mn.alternate_ms(one, one, one, one, 0.0, ISO, pe.MsParams(0.2))
    other = fl.constant(fl.Grid.square(-1, 1, 32), 1.0)
    with pytest.raises(ValueError):
        mn.alternate_ms(one, one, other, one, 1.0, ISO, pe.MsParams(0.2))
    with pytest.raises(ValueError):
        mn.ms_initial_state(g, "zebra")


def test_seeded_perturbation():
    g = fl.Grid.square(-1, 1, 32)
    a = mn.seeded_perturbation(g, 0.1, 7)
    assert np.array_equal(a, mn.seeded_perturbation(g, 0.1, 7))
    assert not np.array_equal(a, mn.seeded_perturbation(g, 0.1, 8))
    assert np.max(np.abs(a)) == pytest.approx(0.1, rel=1e-12)


def test_level_set_radius():
    v0, _ = circle_start(1.2, n=128)
    assert mn.level_set_radius(v0) == pytest.approx(1.2, abs=0.02)
    assert math.isclose(mn.level_set_radius(fl.constant(v0.grid, 1.0)), 0.0)


def test_flow_long_run_descends():
    v0, eps = circle_start(1.5)
    res = mn.flow_F_eps(v0, ISO, eps, 1.0, 2000, record_every=1)
    totals = [r["total"] for r in res.trace]
    assert len(totals) == 2001
    assert nonincreasing(totals)
