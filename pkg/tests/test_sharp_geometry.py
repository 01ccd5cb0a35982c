import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from phasecurv import anisotropy as an
from phasecurv import sharp_geometry as sg

ISO = an.isotropic()


def test_junction_vectors():
    v, ok = sg.junction_vector(sg.star(3), (0.0, 0.0))
    assert np.linalg.norm(v) < 1e-12 and not ok
    seg = sg.segment()
    for p in seg.points:
        v, ok = sg.junction_vector(seg, p)
        assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12) and ok
    v, _ = sg.junction_vector(sg.corner(), (0.0, 0.0))
    assert np.linalg.norm(v) == pytest.approx(math.sqrt(2.0), abs=1e-12)
    with pytest.raises(ValueError):
        sg.junction_vector(seg, (0.1, 0.0))


def test_closed_loop_has_no_points():
    net = sg.circle()
    assert not net.has_points and net.is_closed
    assert sg.point_counts(net) == (0, 0)


def test_square_topology():
    sq = sg.square(1.0)
    assert sq.is_closed and len(sq.points) == 4
    for p in sq.points:
        assert np.linalg.norm(sg.junction_vector(sq, p)[0]) == pytest.approx(math.sqrt(2), abs=1e-12)


def test_crossing_curves_rejected():
    with pytest.raises(ValueError):
        sg.CurveNetwork([sg.segment_curve((-1, 0), (1, 0)), sg.segment_curve((0, -1), (0, 1))])


def test_curvature_catalog():
    t = np.linspace(0.01, 0.99, 50)
    R = 0.7
    k = np.linalg.norm(sg.curvature(sg.circle(R), 0, t), axis=1)
    assert np.max(np.abs(k * R - 1)) < 1e-6
    assert np.max(np.abs(sg.curvature(sg.segment(), 0, t))) == 0.0
    # vertex (a, 0) of the (2, 1) ellipse has curvature a / b^2
    assert np.linalg.norm(sg.curvature(sg.ellipse(2, 1), 0, 0.0)) == pytest.approx(2.0, abs=1e-6)
    assert np.linalg.norm(sg.curvature(sg.ellipse(2, 1), 0, 0.25)) == pytest.approx(0.25, abs=1e-6)


def test_spline_curvature_matches_circle():
    th = np.linspace(0, np.pi / 2, 400)
    c = sg.spline_curve(np.column_stack([np.cos(th), np.sin(th)]))
    k = np.linalg.norm(c.curvature(np.linspace(0.1, 0.9, 20)), axis=1)
    assert np.max(np.abs(k - 1)) < 1e-4


def test_sharp_set_energy_circles():
    e = sg.sharp_set_energy(sg.circle(1.0), ISO)
    assert e.total == pytest.approx(4 * math.pi, abs=1e-6)
    for R in (0.3, 2.0):
        assert sg.sharp_set_energy(sg.circle(R), ISO).total == pytest.approx(2 * math.pi * (R + 1 / R), rel=1e-9)
    beta = 0.37
    assert sg.willmore_beta(sg.circle(beta), beta) == pytest.approx(4 * math.pi, rel=1e-12)
    with pytest.raises(ValueError):
        sg.sharp_set_energy(sg.segment(), ISO)


def test_sharp_set_energy_anisotropic_circle():
    phi = an.cos4(0.3)
    e = sg.sharp_set_energy(sg.circle(1.0), phi)
    # mean of cos^2(2t) is 1/2
    assert e.anisotropic_mm == pytest.approx(2 * math.pi * 1.15, rel=1e-12)


@given(st.floats(0, 2 * np.pi), st.floats(-3, 3), st.floats(-3, 3))
def test_rigid_motion_invariance(angle, tx, ty):
    base = sg.sharp_set_energy(sg.ellipse(2, 1), ISO).total
    c, s = math.cos(angle), math.sin(angle)
    e0 = sg.ellipse_curve(2, 1)
    rot = lambda f: (lambda t: f(t) @ np.array([[c, s], [-s, c]]))
    moved = sg.Curve(lambda t: rot(e0.pos)(t) + np.array([tx, ty]), rot(e0.d1), rot(e0.d2), periodic=True)
    e = sg.sharp_set_energy(sg.CurveNetwork([moved]), ISO).total
    assert abs(e / base - 1) < 1e-9


def test_rotated_anisotropy_invariance():
    angle = 0.4
    c, s = math.cos(angle), math.sin(angle)
    phi = an.cos4(0.3)
    rphi = an.Anisotropy(lambda nu: phi.func(nu @ np.array([[c, -s], [s, c]])), "rot")
    e0 = sg.ellipse_curve(2, 1)
    rot = lambda f: (lambda t: f(t) @ np.array([[c, s], [-s, c]]))
    moved = sg.CurveNetwork([sg.Curve(rot(e0.pos), rot(e0.d1), rot(e0.d2), periodic=True)])
    a = sg.sharp_set_energy(sg.ellipse(2, 1), phi).total
    b = sg.sharp_set_energy(moved, rphi).total
    assert abs(b / a - 1) < 1e-9


def test_gauss_bonnet_lower_bound_catalog():
    for phi in (ISO, an.cos4(0.3), an.smoothed_l1()):
        for net in sg.closed_catalog():
            assert sg.sharp_set_energy(net, phi).total >= 4 * math.pi / phi.bound_c * (1 - 1e-12)


def test_circle_energy_minimised_at_one():
    f = lambda R: sg.sharp_set_energy(sg.circle(R), ISO).total
    h = 1e-4
    assert abs((f(1 + h) - f(1 - h)) / (2 * h)) < 1e-6
    assert f(1 + 1e-2) > f(1.0) < f(1 - 1e-2)


def test_sharp_ms_energy_segment():
    L, gamma = 0.8, 0.3
    st_ = sg.SharpMsState(sg.segment((-L / 2, 0), (L / 2, 0)), lambda X, Y: (Y > 0) * 1.0,
                          lambda X, Y: (np.zeros_like(X), np.zeros_like(X)), gamma, ((-1, -1), (2, 2)), bulk=0.0)
    e = sg.sharp_ms_energy(st_, ISO)
    assert e.total == pytest.approx(L + 2 * gamma, abs=1e-12)
    assert e.parts["rho_bar"] == pytest.approx(4 * gamma)


def test_sharp_ms_energy_arc():
    R, gamma = 0.6, 0.1
    st_ = sg.SharpMsState(sg.arc(R, 0, math.pi), lambda X, Y: 0 * X, lambda X, Y: (0 * X, 0 * X), gamma,
                          ((-1, -1), (2, 2)), bulk=0.0)
    e = sg.sharp_ms_energy(st_, ISO)
    assert e.total == pytest.approx(math.pi * R + math.pi / R + 2 * gamma, rel=1e-9)


def test_dirichlet_energy_quadrature():
    a, b = 0.3, -0.7
    st_ = sg.SharpMsState(sg.segment(), lambda X, Y: a * X + b * Y, lambda X, Y: (a + 0 * X, b + 0 * Y), 0.0,
                          ((-1, -2), (2, 3)))
    assert st_.dirichlet_energy() == pytest.approx((a * a + b * b) * 6, rel=1e-12)
    crack = sg.crack_state(1.0, 0.25, 0.1, 2.0)
    exact = crack.bulk
    quad = sg.SharpMsState(crack.network, crack.u, crack.grad_u, 0.1, crack.domain, breaks=crack.breaks)
    assert quad.dirichlet_energy() == pytest.approx(exact, rel=1e-6)


def test_zero_junctions_need_a_choice():
    star = sg.star(3)
    st_ = sg.SharpMsState(star, lambda X, Y: 0 * X, lambda X, Y: (0 * X, 0 * X), 0.5, ((-1, -1), (2, 2)), bulk=0.0)
    with pytest.raises(ValueError):
        sg.sharp_ms_energy(st_, ISO)
    a = sg.sharp_ms_energy(st_, ISO, zero_junctions="count")
    b = sg.sharp_ms_energy(st_, ISO, zero_junctions="exclude")
    assert a.point - b.point == pytest.approx(0.5)
    assert a.parts["points_all"] == 4 and a.parts["points_nonzero"] == 3


def test_taylor_straight_tip():
    seg = sg.segment((0, 0), (1, 0))
    for rho in (0.01, 0.1, 0.5):
        tc = sg.arc_in_ball(seg, (0, 0), rho)
        assert tc.length == pytest.approx(rho, abs=1e-12)
        assert tc.theta == 0.5 and tc.holds


def test_taylor_arc_endpoint():
    R = 1.0
    net = sg.arc(R, 0, math.pi / 2)
    x0 = (R, 0.0)
    for rho in np.linspace(R / 100, R / 10, 10):
        tc = sg.arc_in_ball(net, x0, rho)
        exact = 2 * R * math.asin(rho / (2 * R))
        assert tc.length == pytest.approx(exact, abs=1e-10)
        assert tc.length <= rho + rho * rho / R
        assert tc.holds


def test_taylor_triple_junction():
    tc = sg.arc_in_ball(sg.star(3), (0, 0), 0.2)
    assert tc.length == pytest.approx(0.6, abs=1e-12)
    assert tc.theta == 1.5 and tc.holds


def test_taylor_domain_and_rho0():
    seg = sg.segment((0, 0), (1, 0))
    with pytest.raises(ValueError):
        sg.arc_in_ball(seg, (0, 0), 0.2, rho0=0.1)
    with pytest.raises(ValueError):
        sg.arc_in_ball(seg, (0, 0), 0.2, domain=((-0.1, -1), (2, 2)))


def test_tube_area_segment_stadium():
    L = 1.0
    for t in (L / 10, L / 100, L / 200):
        area = sg.tube_area(sg.segment(), t)
        exact = 2 * L * t + math.pi * t * t
        assert abs(area / exact - 1) < 5e-3
    ratios = [sg.tube_area(sg.segment(), t) / (2 * t) for t in (1e-1, 1e-2, 1e-3)]
    assert ratios[0] > ratios[1] > ratios[2]
    assert abs(ratios[-1] - L) < 3e-3


def test_tube_area_circle():
    R, t = 1.0, 0.05
    assert sg.tube_area(sg.circle(R), t) == pytest.approx(4 * math.pi * R * t, rel=2e-3)


def test_shape_catalog_names():
    for name in sg.SHAPES:
        assert isinstance(sg.shape_from_name(name), sg.CurveNetwork)
    with pytest.raises(ValueError):
        sg.shape_from_name("blob")


def test_polyline_csv(tmp_path):
    th = np.linspace(0, np.pi, 200)
    p = tmp_path / "c.csv"
    rows = np.column_stack([np.zeros_like(th), th, np.cos(th), np.sin(th)])
    np.savetxt(p, rows, delimiter=",", header="curve_id,t,x,y", comments="")
    net = sg.read_polyline_csv(p)
    assert net.length() == pytest.approx(math.pi, rel=1e-5)
