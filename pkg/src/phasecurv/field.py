"""Uniform cell-centred grids on boxes, scalar fields, finite-difference and spectral
operators, midpoint quadrature and field snapshots on disk."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PERIODIC = "periodic"
NEUMANN = "neumann"
HEADER_BYTES = 64


@dataclass(frozen=True)
class Grid:
    """Box [origin, origin + extent] with n cell-centred nodes per axis."""

    origin: tuple
    extent: tuple
    n: tuple
    boundary: str = PERIODIC

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "extent", tuple(float(e) for e in self.extent))
        object.__setattr__(self, "n", tuple(int(k) for k in self.n))
        if not (len(self.origin) == len(self.extent) == len(self.n)) or self.dim not in (2, 3):
            raise ValueError("grid needs matching origin/extent/n of dimension 2 or 3")
        if min(self.n) < 8:
            raise ValueError("need at least 8 nodes per axis")
        if min(self.extent) <= 0:
            raise ValueError("extent must be positive")
        if self.boundary not in (PERIODIC, NEUMANN):
            raise ValueError(f"boundary must be {PERIODIC!r} or {NEUMANN!r}")

    @classmethod
    def square(cls, lo, hi, n, dim=2, boundary=PERIODIC):
        return cls((lo,) * dim, (hi - lo,) * dim, (n,) * dim, boundary)

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple:
        return tuple(e / k for e, k in zip(self.extent, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.extent))

    @property
    def shape(self) -> tuple:
        return self.n

    def axes(self):
        return [o + (np.arange(k) + 0.5) * hh for o, k, hh in zip(self.origin, self.n, self.h)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def with_boundary(self, boundary):
        return Grid(self.origin, self.extent, self.n, boundary)


@dataclass
class ScalarField:
    """Node values on a grid.

    Fields produced by closed-form constructions may carry exact derivatives
    (``grad`` as a tuple of arrays, ``lap``); operators then prefer them.
    """

    grid: Grid
    values: np.ndarray
    grad: tuple | None = None
    lap: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @property
    def has_exact(self) -> bool:
        return self.grad is not None and self.lap is not None

    def plain(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy(), meta=dict(self.meta))

    def __add__(self, other):
        return ScalarField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - _vals(other))

    def __mul__(self, c):
        return ScalarField(self.grid, self.values * _vals(c))

    __rmul__ = __mul__


def _vals(x):
    return x.values if isinstance(x, ScalarField) else x


def constant(grid: Grid, c: float) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(c)))


def from_function(grid: Grid, f) -> ScalarField:
    return ScalarField(grid, f(*grid.mesh()))


# --- finite differences ------------------------------------------------------


def _shift(a, axis, k, boundary):
    """a shifted so that out[i] = a[i + k] (k = +-1), honouring the boundary."""
    if boundary == PERIODIC:
        return np.roll(a, -k, axis=axis)
    # zero-Neumann at the cell faces: mirror ghost equals the boundary node
    n = a.shape[axis]
    idx = np.clip(np.arange(n) + k, 0, n - 1)
    return np.take(a, idx, axis=axis)


def gradient_fd(values, grid: Grid):
    return tuple(
        (_shift(values, ax, 1, grid.boundary) - _shift(values, ax, -1, grid.boundary)) / (2.0 * hh)
        for ax, hh in enumerate(grid.h)
    )


def laplacian_fd(values, grid: Grid):
    out = np.zeros_like(values)
    for ax, hh in enumerate(grid.h):
        out += (_shift(values, ax, 1, grid.boundary) - 2.0 * values + _shift(values, ax, -1, grid.boundary)) / hh**2
    return out


# --- spectral (periodic only) ------------------------------------------------


def wavenumbers(grid: Grid):
    ks = [2.0 * np.pi * np.fft.fftfreq(k, d=hh) for k, hh in zip(grid.n, grid.h)]
    return np.meshgrid(*ks, indexing="ij")


def _require_periodic(grid):
    if grid.boundary != PERIODIC:
        raise ValueError("spectral operators need a periodic grid")


def gradient_spectral(values, grid: Grid):
    _require_periodic(grid)
    vh = np.fft.fftn(values)
    out = []
    for ax, k in enumerate(wavenumbers(grid)):
        kk = k.copy()
        n = grid.n[ax]
        if n % 2 == 0:
            # drop the unpaired Nyquist mode so that derivatives stay real
            sl = [slice(None)] * grid.dim
            sl[ax] = n // 2
            kk[tuple(sl)] = 0.0
        out.append(np.real(np.fft.ifftn(1j * kk * vh)))
    return tuple(out)


def laplacian_spectral(values, grid: Grid):
    _require_periodic(grid)
    k2 = sum(k * k for k in wavenumbers(grid))
    return np.real(np.fft.ifftn(-k2 * np.fft.fftn(values)))


def _method(f: ScalarField, method: str):
    if method == "auto":
        if f.has_exact:
            return "exact"
        return "fd"
    return method


def gradient(f: ScalarField, method: str = "auto"):
    """Gradient components; ``method`` is one of auto, exact, fd, spectral."""
    m = _method(f, method)
    if m == "exact":
        if f.grad is None:
            raise ValueError("field carries no exact gradient")
        return f.grad
    if m == "spectral":
        return gradient_spectral(f.values, f.grid)
    return gradient_fd(f.values, f.grid)


def laplacian(f: ScalarField, method: str = "auto") -> ScalarField:
    m = _method(f, method)
    if m == "exact":
        if f.lap is None:
            raise ValueError("field carries no exact laplacian")
        vals = f.lap
    elif m == "spectral":
        vals = laplacian_spectral(f.values, f.grid)
    else:
        vals = laplacian_fd(f.values, f.grid)
    return ScalarField(f.grid, vals)


def grad_norm2(f: ScalarField, method: str = "auto"):
    return sum(g * g for g in gradient(f, method))


def integrate(f) -> float:
    """Midpoint rule: sum of node values times the cell volume."""
    if isinstance(f, ScalarField):
        return float(np.sum(f.values) * f.grid.cell_volume)
    raise TypeError("integrate expects a ScalarField")


def integrate_array(values, grid: Grid) -> float:
    return float(np.sum(values) * grid.cell_volume)


# --- signed distance ---------------------------------------------------------


def signed_distance(shape, grid: Grid, refine_within: float | None = None) -> ScalarField:
    """Distance to a curve network, negative inside closed boundaries.

    The network is sampled at spacing h/4 (well below the required h/2); open
    networks give the unsigned distance.  Nodes closer than ``refine_within``
    (all nodes by default) are projected exactly onto the curves.
    """
    from .sharp_geometry import network_distance

    if grid.dim != 2:
        raise ValueError("signed_distance works on planar grids")
    X, Y = grid.mesh()
    spacing = min(grid.h) / 4.0
    res = network_distance(shape, X, Y, spacing=spacing, signed=shape.is_closed, refine_within=refine_within)
    out = ScalarField(grid, res.dist, grad=(res.gx, res.gy), lap=res.lap)
    out.meta["sample_spacing"] = spacing
    return out


# --- snapshots ---------------------------------------------------------------


def _header(grid: Grid) -> bytes:
    parts = [str(grid.dim), *map(str, grid.n), *(f"{hh:.8g}" for hh in grid.h), grid.boundary]
    text = " ".join(parts)
    if len(text) > HEADER_BYTES:
        raise ValueError("grid description does not fit the 64-byte header")
    return text.encode("ascii").ljust(HEADER_BYTES, b" ")


def write_binary(f: ScalarField, path, provenance: dict | None = None):
    """Write a 64-byte ASCII header then little-endian float64 values, row-major.

    The header holds dim, n per axis, h per axis and the boundary mode. Origin
    and any provenance go to a JSON sidecar next to the file.
    """
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_header(f.grid))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes(order="C"))
    side = {"origin": list(f.grid.origin), "extent": list(f.grid.extent), **(provenance or {})}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(side, indent=2, sort_keys=True))


def read_binary(path) -> ScalarField:
    path = Path(path)
    raw = path.read_bytes()
    tokens = raw[:HEADER_BYTES].decode("ascii").split()
    dim = int(tokens[0])
    n = tuple(int(t) for t in tokens[1:1 + dim])
    h = tuple(float(t) for t in tokens[1 + dim:1 + 2 * dim])
    boundary = tokens[1 + 2 * dim]
    side = path.with_suffix(path.suffix + ".json")
    origin = tuple(-0.5 * k * hh for k, hh in zip(n, h))
    extent = tuple(k * hh for k, hh in zip(n, h))
    if side.exists():
        meta = json.loads(side.read_text())
        origin = tuple(meta.get("origin", origin))
        extent = tuple(meta.get("extent", extent))
    values = np.frombuffer(raw[HEADER_BYTES:], dtype="<f8")
    if values.size != math.prod(n):
        raise ValueError(f"{path}: expected {math.prod(n)} values, found {values.size}")
    return ScalarField(Grid(origin, extent, n, boundary), values.reshape(n).copy())


def write_csv(f: ScalarField, path, max_nodes=65536):
    if f.values.size > max_nodes:
        raise ValueError(f"CSV export is meant for small grids (<= {max_nodes} nodes)")
    coords = [c.ravel() for c in f.grid.mesh()]
    names = ["x", "y", "z"][: f.grid.dim]
    with open(path, "w") as fh:
        fh.write(",".join(names + ["value"]) + "\n")
        for row in zip(*coords, f.values.ravel()):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
