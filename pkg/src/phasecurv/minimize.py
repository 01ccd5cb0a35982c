"""Energy descent on periodic grids: a linearly implicit flow for the anisotropic
Willmore/Modica-Mortola energy and alternating minimisation for the Mumford-Shah
energy with curvature.

Every v or w step solves (I/dt + H) s = -grad E with a positive semi-definite
Gauss-Newton model H (the Willmore residual linearised at the current state), by
conjugate gradients preconditioned with a Fourier majorant of H.  Steps that would
raise the energy are rejected and retried with a tenth of the time step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from . import field as fl
from .anisotropy import Anisotropy, ExtensionParams, extend
from .phase_energy import EnergyBreakdown, F_eps, G_eps_beta, MS_energy_eps, MsParams
from .profiles import C0_EXACT, double_well, double_well_prime, double_well_second

DESCENT_SLACK = 1e-8
MAX_REJECTIONS = 5
STEP_REDUCTION = 0.1
KAPPA_REG = 1e-6


class DivergenceError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


# --- spectral operators consistent with phase_energy's "spectral" method ---------


class Spectral:
    def __init__(self, grid: fl.Grid):
        if grid.boundary != fl.PERIODIC:
            raise ValueError("descent schemes need a periodic grid")
        if grid.dim != 2:
            raise ValueError("descent schemes are implemented for d = 2")
        self.grid = grid
        kx, ky = fl.wavenumbers(grid)
        self.k2 = kx * kx + ky * ky
        # first-derivative symbols without the unpaired Nyquist mode
        self.dx = kx.copy()
        self.dy = ky.copy()
        nx, ny = grid.n
        if nx % 2 == 0:
            self.dx[nx // 2, :] = 0.0
        if ny % 2 == 0:
            self.dy[:, ny // 2] = 0.0

    def grad(self, a):
        ah = np.fft.fft2(a)
        return np.real(np.fft.ifft2(1j * self.dx * ah)), np.real(np.fft.ifft2(1j * self.dy * ah))

    def div(self, gx, gy):
        """Minus the adjoint of :meth:`grad`."""
        return np.real(np.fft.ifft2(1j * self.dx * np.fft.fft2(gx) + 1j * self.dy * np.fft.fft2(gy)))

    def lap(self, a):
        return np.real(np.fft.ifft2(-self.k2 * np.fft.fft2(a)))

    def solve(self, rhs, symbol):
        return np.real(np.fft.ifft2(np.fft.fft2(rhs) / symbol))


def _phi_and_zgrad(gx, gy, phi: Anisotropy, r_eps: float):
    """phi_eps(z) and its z-gradient by central differences."""
    z = np.stack([gx, gy], axis=-1)
    p = ExtensionParams(r_eps)
    val = extend(z, phi, p)
    tau = 1e-6 * np.maximum(np.hypot(gx, gy), r_eps)
    out = []
    for j in range(2):
        e = np.zeros(2)
        e[j] = 1.0
        step = tau[..., None] * e
        out.append((extend(z + step, phi, p) - extend(z - step, phi, p)) / (2.0 * tau))
    return val, out[0], out[1]


def _mm_gradient(sp: Spectral, v, phi, eps, r_eps):
    """L^2 gradient of int phi_eps(grad v)(eps |grad v|^2 / 2 + W(v)/eps)."""
    gx, gy = sp.grad(v)
    m = 0.5 * eps * (gx * gx + gy * gy) + double_well(v) / eps
    ph, px, py = _phi_and_zgrad(gx, gy, phi, r_eps)
    flux_x = m * px + ph * eps * gx
    flux_y = m * py + ph * eps * gy
    return -sp.div(flux_x, flux_y) + ph * double_well_prime(v) / eps


def _willmore_gradient(sp: Spectral, v, eps, weight=None):
    """L^2 gradient of (1/eps) int f^2 weight, f = -eps lap v + W'(v)/eps."""
    f = -eps * sp.lap(v) + double_well_prime(v) / eps
    fw = f if weight is None else f * weight
    return (2.0 / eps) * (-eps * sp.lap(fw) + double_well_second(v) * fw / eps)


@dataclass
class FlowResult:
    field: fl.ScalarField
    trace: list
    residual: float
    accepted: int
    rejected: int
    converged: bool = False


def _linear_step(sp: Spectral, grad, hess, symbol, dt, rtol=1e-3, maxiter=300):
    """Approximate solution of (I/dt + H) s = -grad by preconditioned CG.

    ``hess`` applies a symmetric positive semi-definite model Hessian and ``symbol``
    is a Fourier majorant of it used as preconditioner.  Any CG iterate is a descent
    direction, so a loose tolerance is enough.
    """
    shape, n = grad.shape, grad.size
    A = LinearOperator((n, n), matvec=lambda x: (x / dt + hess(x.reshape(shape)).ravel()), dtype=float)
    M = LinearOperator((n, n), matvec=lambda x: sp.solve(x.reshape(shape), 1.0 / dt + symbol).ravel(), dtype=float)
    s, _ = cg(A, -grad.ravel(), rtol=rtol, atol=0.0, maxiter=maxiter, M=M)
    return s.reshape(shape)


def _residual_jacobian(sp, v, eps):
    """J = -eps lap + W''(v)/eps, the derivative of f = -eps lap v + W'(v)/eps."""
    w2 = double_well_second(v) / eps
    return lambda x: -eps * sp.lap(x) + w2 * x


def _majorant(sp, eps, M):
    return (eps * sp.k2 + M / eps) ** 2


def _F_model(sp, v, eps, phi_max):
    J = _residual_jacobian(sp, v, eps)
    hess = lambda x: (2.0 / eps) * J(J(x)) / C0_EXACT - phi_max * eps * sp.lap(x) / C0_EXACT
    M = float(np.max(np.abs(double_well_second(v))))
    symbol = ((2.0 / eps) * _majorant(sp, eps, M) + phi_max * eps * sp.k2) / C0_EXACT
    return hess, symbol


def flow_F_eps(v0: fl.ScalarField, phi: Anisotropy, eps: float, dt: float, n_steps: int,
               record_every: int = 1, r_eps: float | None = None, slack: float = DESCENT_SLACK,
               gtol: float | None = None) -> FlowResult:
    """Linearly implicit descent on F_eps.

    A step solves (I/dt + H)(v_new - v) = -grad F(v), where H is the Gauss-Newton
    Hessian (2/(c0 eps)) J^T J of the Willmore part (J the derivative of the residual
    at v) plus (max phi) eps (-lap)/c0 for the Modica-Mortola part.  A step that raises
    the energy is retried with dt divided by ten; five rejections in a row raise
    DivergenceError.  With ``gtol`` the flow stops once the L^2 norm of the gradient
    drops below it.
    """
    sp = Spectral(v0.grid)
    r_eps = eps if r_eps is None else r_eps
    phi_max = float(phi.bound_c)
    energy = lambda a: F_eps(fl.ScalarField(v0.grid, a), phi, eps, r_eps, method="spectral")
    gradient = lambda a: (_mm_gradient(sp, a, phi, eps, r_eps) + _willmore_gradient(sp, a, eps)) / C0_EXACT

    v = v0.values.copy()
    E = energy(v)
    trace = [{"step": 0, "dt": dt, **E.terms()}]
    accepted = rejected = streak = 0
    h = dt
    step = 0
    g = gradient(v)
    hess, symbol = _F_model(sp, v, eps, phi_max)
    norm = lambda a: math.sqrt(fl.integrate_array(a * a, v0.grid))
    converged = gtol is not None and norm(g) < gtol
    while step < n_steps and not converged:
        trial = v + _linear_step(sp, g, hess, symbol, h)
        E_new = energy(trial)
        if not E_new.total <= E.total + slack:
            rejected += 1
            streak += 1
            if streak >= MAX_REJECTIONS:
                raise DivergenceError(f"energy rose at step {step + 1} after {streak} halvings "
                                      f"(dt={h:.3g}, E={E.total:.12g} -> {E_new.total:.12g})")
            h *= STEP_REDUCTION
            continue
        streak = 0
        accepted += 1
        step += 1
        v, E = trial, E_new
        h = min(dt, 2.0 * h)
        g = gradient(v)
        hess, symbol = _F_model(sp, v, eps, phi_max)
        converged = gtol is not None and norm(g) < gtol
        if step % record_every == 0 or step == n_steps or converged:
            trace.append({"step": step, "dt": h, **E.terms()})
    return FlowResult(fl.ScalarField(v0.grid, v), trace, norm(g), accepted, rejected, converged)


# --- alternating minimisation ------------------------------------------------------


@dataclass(frozen=True)
class Schedule:
    cycles: int = 50
    vw_steps: int = 10  # (v, w) descent steps per u-step
    dt_v: float = 1.0
    dt_w: float = 1.0
    cg_rtol: float = 1e-8
    cg_maxiter: int = 2000
    kappa: float = KAPPA_REG
    gtol: float | None = None  # stop once the (v, w) gradient norm is below this


@dataclass
class MsResult:
    u: fl.ScalarField
    v: fl.ScalarField
    w: fl.ScalarField
    trace: list
    cg_iterations: list = field(default_factory=list)
    residual: float = float("nan")
    converged: bool = False


def objective(grid: fl.Grid, u, v, w, g, mu_f, phi, params: MsParams, kappa=KAPPA_REG):
    """Mumford-Shah energy plus fidelity mu_f int (u - g)^2 and the floor kappa int |grad u|^2.

    The fields are plain arrays on ``grid``; derivatives are spectral.
    """
    E = MS_energy_eps(fl.ScalarField(grid, u), fl.ScalarField(grid, v), fl.ScalarField(grid, w), phi, params,
                      method="spectral")
    sp = Spectral(grid)
    gx, gy = sp.grad(u)
    fid = mu_f * fl.integrate_array((u - g) ** 2, grid)
    reg = kappa * fl.integrate_array(gx * gx + gy * gy, grid)
    return E, E.total + fid + reg, {"fidelity": fid, "kappa_term": reg}


def solve_u(sp: Spectral, v, g, mu_f, kappa=KAPPA_REG, rtol=1e-8, maxiter=2000, x0=None):
    """Minimiser of int ((1+v)^2/4 + kappa)|grad u|^2 + mu_f int (u - g)^2 by conjugate gradients."""
    if mu_f <= 0:
        raise ValueError("fidelity weight must be positive")
    c = 0.25 * (1.0 + v) ** 2 + kappa
    shape = v.shape
    n = v.size

    def matvec(x):
        a = x.reshape(shape)
        gx, gy = sp.grad(a)
        return (-sp.div(c * gx, c * gy) + mu_f * a).ravel()

    # Jacobi-free spectral preconditioner built from the mean coefficient
    cbar = float(np.mean(c))

    def prec(x):
        return sp.solve(x.reshape(shape), cbar * (sp.dx**2 + sp.dy**2) + mu_f).ravel()

    A = LinearOperator((n, n), matvec=matvec, dtype=float)
    M = LinearOperator((n, n), matvec=prec, dtype=float)
    its = [0]

    def count(_):
        its[0] += 1

    rhs = (mu_f * g).ravel()
    sol, info = cg(A, rhs, x0=None if x0 is None else x0.ravel(), rtol=rtol, atol=0.0, maxiter=maxiter, M=M,
                   callback=count)
    if info != 0:
        raise SolverError(f"conjugate gradients did not converge (info={info})")
    return sol.reshape(shape), its[0]


def _v_gradient(sp, u, v, w, phi, params: MsParams):
    eps = params.eps
    gx, gy = sp.grad(u)
    bulk = 0.5 * (1.0 + v) * (gx * gx + gy * gy)
    mm = _mm_gradient(sp, v, phi, eps, params.r_eps) / (2.0 * C0_EXACT)
    curv = _willmore_gradient(sp, v, eps, weight=(1.0 + w) ** 2) / (8.0 * C0_EXACT)
    pen = -2.0 * (1.0 - v) / params.eta
    return bulk + mm + curv + pen


def _w_gradient(sp, v, w, params: MsParams):
    eps, beta = params.eps, params.beta
    fv = -eps * sp.lap(v) + double_well_prime(v) / eps
    curv = fv * fv * 2.0 * (1.0 + w) / (8.0 * C0_EXACT * eps)
    gx, gy = sp.grad(w)
    mm = (-eps * sp.div(gx, gy) + double_well_prime(w) / eps) / (C0_EXACT * beta)
    will = beta * _willmore_gradient(sp, w, eps) / C0_EXACT
    point = params.gamma / (4.0 * math.pi) * (mm + will)
    pen = -2.0 * (1.0 - w) / params.eta
    return curv + point + pen


def _v_model(sp, u, v, w, params: MsParams, phi_max):
    eps = params.eps
    gx, gy = sp.grad(u)
    bulk = 0.5 * (gx * gx + gy * gy)
    gate = (1.0 + w) ** 2
    J = _residual_jacobian(sp, v, eps)
    c_w = 2.0 / (8.0 * C0_EXACT * eps)
    c_mm = phi_max * eps / (2.0 * C0_EXACT)
    pen = 2.0 / params.eta

    def hess(x):
        return bulk * x + c_w * J(gate * J(x)) - c_mm * sp.lap(x) + pen * x

    M = float(np.max(np.abs(double_well_second(v))))
    symbol = float(np.max(bulk)) + c_w * float(np.max(gate)) * _majorant(sp, eps, M) + c_mm * sp.k2 + pen
    return hess, symbol


def _w_model(sp, v, w, params: MsParams):
    eps, beta = params.eps, params.beta
    fv = -eps * sp.lap(v) + double_well_prime(v) / eps
    curv = 2.0 * fv * fv / (8.0 * C0_EXACT * eps)
    scale = params.gamma / (4.0 * math.pi)
    c_mm = scale * eps / (C0_EXACT * beta)
    c_w = scale * 2.0 * beta / (C0_EXACT * eps)
    J = _residual_jacobian(sp, w, eps)
    pen = 2.0 / params.eta

    def hess(x):
        gx, gy = sp.grad(x)
        return curv * x - c_mm * sp.div(gx, gy) + c_w * J(J(x)) + pen * x

    M = float(np.max(np.abs(double_well_second(w))))
    symbol = float(np.max(curv)) + c_mm * sp.k2 + c_w * _majorant(sp, eps, M) + pen
    return hess, symbol


def _descend(sp, x, g, model, dt, total_fn, current, slack):
    """One linearly implicit step with backtracking; returns (x, total, accepted dt)."""
    hess, symbol = model
    h = dt
    for _ in range(MAX_REJECTIONS):
        trial = x + _linear_step(sp, g, hess, symbol, h)
        t = total_fn(trial)
        if t <= current + slack:
            return trial, t, h
        h *= STEP_REDUCTION
    raise DivergenceError(f"no descent after {MAX_REJECTIONS} step reductions (last dt={h:.3g}, "
                          f"E={current:.12g} -> {t:.12g})")


def alternate_ms(u0: fl.ScalarField, v0: fl.ScalarField, w0: fl.ScalarField, g: fl.ScalarField, mu_f: float,
                 phi: Anisotropy, params: MsParams, schedule: Schedule = Schedule(), slack: float = DESCENT_SLACK,
                 freeze_vw: bool = False) -> MsResult:
    """Cycles of one exact u-step followed by ``schedule.vw_steps`` alternating v and w steps.

    The monitored objective is the Mumford-Shah energy + fidelity + kappa int |grad u|^2,
    which every sub-step leaves nonincreasing (up to ``slack``).
    """
    grid = v0.grid
    if not (u0.grid == v0.grid == w0.grid == g.grid):
        raise ValueError("all fields must share one grid")
    if mu_f <= 0:
        raise ValueError("fidelity weight must be positive")
    sp = Spectral(grid)
    u, v, w, gv = u0.values.copy(), v0.values.copy(), w0.values.copy(), g.values
    phi_max = float(phi.bound_c)
    kappa = schedule.kappa

    def total(uu, vv, ww):
        return objective(grid, uu, vv, ww, gv, mu_f, phi, params, kappa)[1]

    def record(cycle, stage):
        E, tot, extra = objective(grid, u, v, w, gv, mu_f, phi, params, kappa)
        return {"cycle": cycle, "stage": stage, **E.terms(), **extra, "objective": tot,
                "sup_abs_w_minus_1": float(np.max(np.abs(w - 1.0)))}

    def residual():
        gv_ = _v_gradient(sp, u, v, w, phi, params)
        gw_ = _w_gradient(sp, v, w, params)
        return math.sqrt(fl.integrate_array(gv_ * gv_ + gw_ * gw_, grid))

    def fields():
        return fl.ScalarField(grid, u), fl.ScalarField(grid, v), fl.ScalarField(grid, w)

    trace = [record(0, "init")]
    cg_its = []
    current = trace[0]["objective"]
    hv, hw = schedule.dt_v, schedule.dt_w
    for cycle in range(1, schedule.cycles + 1):
        u_new, its = solve_u(sp, v, gv, mu_f, kappa, schedule.cg_rtol, schedule.cg_maxiter, x0=u)
        cg_its.append(its)
        t_new = total(u_new, v, w)
        # the u-step is an exact minimisation; allow only rounding-level increases
        if t_new > current + slack:
            raise DivergenceError(f"u-step raised the objective: {current:.12g} -> {t_new:.12g}")
        u, current = u_new, t_new
        if not freeze_vw:
            for _ in range(schedule.vw_steps):
                v, current, hv = _descend(sp, v, _v_gradient(sp, u, v, w, phi, params),
                                          _v_model(sp, u, v, w, params, phi_max), hv,
                                          lambda x: total(u, x, w), current, slack)
                w, current, hw = _descend(sp, w, _w_gradient(sp, v, w, params), _w_model(sp, v, w, params),
                                          hw, lambda x: total(u, v, x), current, slack)
                # time steps persist between steps and recover geometrically
                hv, hw = min(schedule.dt_v, 2.0 * hv), min(schedule.dt_w, 2.0 * hw)
        trace.append(record(cycle, "cycle"))
        res = residual()
        if schedule.gtol is not None and res < schedule.gtol:
            return MsResult(*fields(), trace, cg_its, res, True)
    return MsResult(*fields(), trace, cg_its, residual(), False)


def level_set_radius(v: fl.ScalarField) -> float:
    """Radius of the disc with the same area as {v < 0}."""
    area = float(np.count_nonzero(v.values < 0)) * v.grid.cell_volume
    return math.sqrt(area / math.pi)


def seeded_perturbation(grid: fl.Grid, amplitude: float, seed: int) -> np.ndarray:
    """Reproducible smooth noise: Gaussian coefficients on the lowest Fourier modes."""
    rng = np.random.default_rng(seed)
    noise = rng.normal(size=grid.shape)
    k2 = sum(k * k for k in fl.wavenumbers(grid))
    kc = 2.0 * np.pi * 4.0 / max(grid.extent)
    smooth = np.real(np.fft.ifftn(np.fft.fftn(noise) * np.exp(-k2 / (2 * kc * kc))))
    return amplitude * smooth / max(float(np.max(np.abs(smooth))), 1e-300)


def ms_initial_state(grid: fl.Grid, data: str = "stripe", eps: float | None = None, dip: float = 0.5,
                     noise: float = 0.0, seed: int = 0):
    """(u0, v0, w0, g, dist) for the segmentation catalog.

    ``data`` is "stripe" (indicator of |y| < L/4), "disc" (indicator of the disc of
    radius L/4) or "const".  Both v = 1 and v = 0 are stuck states of the descent, so
    v0 carries a shallow Gaussian dip of depth ``dip`` and width 2 eps along the
    data's jump set; u0 = 0 and w0 = 1.  ``dist`` is the distance to that jump set.
    """
    X, Y = grid.mesh()
    eps = 4.0 * grid.h[0] if eps is None else eps
    L = grid.extent[1]
    if data == "stripe":
        g = np.where(np.abs(Y) < 0.25 * L, 1.0, 0.0)
        dist = np.abs(np.abs(Y) - 0.25 * L)
    elif data == "disc":
        r = np.hypot(X, Y)
        R = 0.25 * min(grid.extent)
        g = np.where(r < R, 1.0, 0.0)
        dist = np.abs(r - R)
    elif data == "const":
        g = np.full(grid.shape, 0.5)
        dist = np.full(grid.shape, np.inf)
    else:
        raise ValueError(f"unknown data {data!r}; expected stripe, disc or const")
    if noise > 0:
        g = g + seeded_perturbation(grid, noise, seed)
    v0 = 1.0 - dip * np.exp(-dist**2 / (2.0 * (2.0 * eps) ** 2))
    one = np.ones(grid.shape)
    return (fl.ScalarField(grid, 0.0 * one), fl.ScalarField(grid, v0), fl.ScalarField(grid, one),
            fl.ScalarField(grid, g), dist)
