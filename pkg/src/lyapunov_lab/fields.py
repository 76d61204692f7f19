"""Regular cell-centred grids, boundary conditions and discrete calculus.

Values live at cell centres.  A Dirichlet value is imposed at the face
midpoint through a linearly extrapolated ghost cell (``ghost = 2 b - u_edge``);
a zero-flux face uses a mirror ghost (``ghost = u_edge``).  With this choice
the five-point Laplacian satisfies an exact summation-by-parts identity,

    integrate(g * laplacian(f)) = -grad_bilinear(f, g) + boundary_flux(f, bc, g),

which the entropy and Lyapunov diagnostics in :mod:`lyapunov_lab.transport`
rely on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence, Union

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "Dirichlet",
    "ZeroFlux",
    "BoundaryCondition",
    "SigmaModel",
    "sigma_identity",
    "sigma_power",
    "sigma_saturating",
    "Link",
    "iter_links",
    "padded",
    "laplacian",
    "centered_gradient",
    "grad_sq_weighted",
    "grad_bilinear",
    "boundary_flux",
    "integrate",
]


@dataclass(frozen=True)
class Grid:
    """Uniform rectangular grid of cells in one or two dimensions."""

    extents: tuple[int, ...]
    spacing: tuple[float, ...]

    def __post_init__(self):
        extents = tuple(int(n) for n in self.extents)
        spacing = tuple(float(h) for h in self.spacing)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "spacing", spacing)
        if len(extents) not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if len(spacing) != len(extents):
            raise ValueError("spacing must have one entry per axis")
        if any(n < 3 for n in extents):
            raise ValueError(f"need at least 3 cells per axis, got {extents}")
        if any(not h > 0 for h in spacing):
            raise ValueError(f"spacing must be positive, got {spacing}")

    @classmethod
    def uniform(cls, n: int, length: float = 1.0, dimension: int = 1) -> "Grid":
        return cls((n,) * dimension, (length / n,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.extents)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.extents

    @property
    def size(self) -> int:
        return int(np.prod(self.extents))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def domain_length(self) -> tuple[float, ...]:
        return tuple(n * h for n, h in zip(self.extents, self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.domain_length))

    def centers(self, axis: int = 0) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.extents[axis]) + 0.5) * h

    def mesh(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*(self.centers(a) for a in range(self.dimension)), indexing="ij"))


@dataclass(frozen=True)
class ScalarField:
    """Cell values of a macroscopic profile on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: Grid, fn: Callable[..., np.ndarray]) -> "ScalarField":
        return cls(grid, fn(*grid.mesh()))

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        return ScalarField(self.grid, fn(self.values))

    def require_positive(self, what: str = "field") -> None:
        if not np.all(self.values > 0):
            raise ValueError(f"{what} must be strictly positive (min {self.values.min():.3g})")


@dataclass(frozen=True)
class Dirichlet:
    """Prescribed value at the face; a scalar or one value per face cell."""

    value: Union[float, np.ndarray]


@dataclass(frozen=True)
class ZeroFlux:
    pass


Face = Union[Dirichlet, ZeroFlux]


@dataclass(frozen=True)
class BoundaryCondition:
    """One condition per face, stored as ``((low, high), ...)`` per axis."""

    faces: tuple[tuple[Face, Face], ...]

    def __post_init__(self):
        faces = tuple((lo, hi) for lo, hi in self.faces)
        for pair in faces:
            for f in pair:
                if not isinstance(f, (Dirichlet, ZeroFlux)):
                    raise TypeError(f"unknown boundary condition {f!r}")
        object.__setattr__(self, "faces", faces)

    @classmethod
    def dirichlet(cls, left: float, right: float) -> "BoundaryCondition":
        return cls(((Dirichlet(float(left)), Dirichlet(float(right))),))

    @classmethod
    def zero_flux(cls, dimension: int = 1) -> "BoundaryCondition":
        return cls(tuple((ZeroFlux(), ZeroFlux()) for _ in range(dimension)))

    @classmethod
    def uniform_dirichlet(cls, value: float, dimension: int = 1) -> "BoundaryCondition":
        return cls(tuple((Dirichlet(float(value)), Dirichlet(float(value))) for _ in range(dimension)))

    @property
    def dimension(self) -> int:
        return len(self.faces)

    def face(self, axis: int, side: int) -> Face:
        return self.faces[axis][side]

    def iter_faces(self) -> Iterator[tuple[int, int, Face]]:
        for axis, pair in enumerate(self.faces):
            for side, f in enumerate(pair):
                yield axis, side, f

    @property
    def all_dirichlet(self) -> bool:
        return all(isinstance(f, Dirichlet) for _, _, f in self.iter_faces())

    @property
    def any_dirichlet(self) -> bool:
        return any(isinstance(f, Dirichlet) for _, _, f in self.iter_faces())

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "BoundaryCondition":
        """Apply ``fn`` to every Dirichlet value (e.g. to move data into σ-space)."""
        out = []
        for lo, hi in self.faces:
            out.append(tuple(
                Dirichlet(fn(np.asarray(f.value, dtype=float))) if isinstance(f, Dirichlet) else f
                for f in (lo, hi)
            ))
        return BoundaryCondition(tuple(out))

    def check(self, grid: Grid) -> None:
        if self.dimension != grid.dimension:
            raise ValueError(f"boundary condition is {self.dimension}D but grid is {grid.dimension}D")
        for axis, side, f in self.iter_faces():
            if isinstance(f, Dirichlet):
                v = np.asarray(f.value, dtype=float)
                face_shape = grid.shape[:axis] + grid.shape[axis + 1:]
                if v.ndim and v.shape != face_shape:
                    raise ValueError(
                        f"Dirichlet data on axis {axis} side {side} has shape {v.shape}, expected {face_shape}"
                    )

    def face_values(self, grid: Grid, axis: int, side: int) -> np.ndarray:
        f = self.face(axis, side)
        if not isinstance(f, Dirichlet):
            raise ValueError("face is not Dirichlet")
        face_shape = grid.shape[:axis] + grid.shape[axis + 1:]
        return np.broadcast_to(np.asarray(f.value, dtype=float), face_shape)


@dataclass(frozen=True)
class SigmaModel:
    """Smooth strictly increasing constitutive function with derivative and inverse.

    ``increment``, when present, evaluates ``int_u^v log(sigma(z)/sigma(u)) dz``
    in closed form (vectorised over ``u`` and ``v``).
    """

    name: str
    sigma: Callable[[np.ndarray], np.ndarray]
    sigma_prime: Callable[[np.ndarray], np.ndarray]
    sigma_inverse: Callable[[np.ndarray], np.ndarray]
    interval: tuple[float, float] = (0.0, np.inf)
    power: float | None = None
    scale: float = 1.0
    increment: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __call__(self, z):
        return self.sigma(z)

    def in_interval(self, z) -> bool:
        z = np.asarray(z, dtype=float)
        lo, hi = self.interval
        return bool(np.all(z > lo) and np.all(z < hi))

    def check_interval(self, z, what: str = "argument") -> None:
        if not self.in_interval(z):
            z = np.asarray(z, dtype=float)
            raise ValueError(
                f"{what} outside working interval {self.interval} of sigma '{self.name}' "
                f"(range [{z.min():.6g}, {z.max():.6g}])"
            )


def _relative_entropy_kernel(r):
    # r log r - r + 1, accurate near r = 1
    r = np.asarray(r, dtype=float)
    d = r - 1.0
    return r * np.log1p(d) - d


def sigma_power(p: float, scale: float = 1.0) -> SigmaModel:
    """``sigma(z) = scale * z**p`` on ``z > 0``."""
    p = float(p)
    scale = float(scale)
    if p <= 0 or scale <= 0:
        raise ValueError("power and scale must be positive")

    def increment(u, v):
        u = np.asarray(u, dtype=float)
        return p * u * _relative_entropy_kernel(np.asarray(v, dtype=float) / u)

    name = "identity" if p == 1.0 and scale == 1.0 else f"power(p={p:g}, scale={scale:g})"
    return SigmaModel(
        name=name,
        sigma=lambda z: scale * np.power(z, p),
        sigma_prime=lambda z: scale * p * np.power(z, p - 1.0),
        sigma_inverse=lambda s: np.power(np.asarray(s, dtype=float) / scale, 1.0 / p),
        interval=(0.0, np.inf),
        power=p,
        scale=scale,
        increment=increment,
    )


def sigma_identity() -> SigmaModel:
    return sigma_power(1.0)


def sigma_saturating() -> SigmaModel:
    """``sigma(z) = z / (1 + z)``, the fugacity of the constant-rate zero-range process."""

    def increment(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        return u * _relative_entropy_kernel(v / u) - (1.0 + u) * _relative_entropy_kernel((1.0 + v) / (1.0 + u))

    return SigmaModel(
        name="saturating",
        sigma=lambda z: z / (1.0 + z),
        sigma_prime=lambda z: 1.0 / (1.0 + z) ** 2,
        sigma_inverse=lambda s: s / (1.0 - s),
        interval=(0.0, np.inf),
        increment=increment,
    )


# ---------------------------------------------------------------------------
# ghost cells and stencils


def _edge(u: np.ndarray, axis: int, side: int) -> np.ndarray:
    return np.take(u, 0 if side == 0 else -1, axis=axis)


def _ghost(u: np.ndarray, grid: Grid, bc: BoundaryCondition, axis: int, side: int) -> np.ndarray:
    edge = _edge(u, axis, side)
    f = bc.face(axis, side)
    if isinstance(f, Dirichlet):
        return 2.0 * bc.face_values(grid, axis, side) - edge
    return edge


def padded(u: np.ndarray, grid: Grid, bc: BoundaryCondition) -> np.ndarray:
    """Array with one ghost layer per face; corner ghosts are left at zero."""
    u = np.asarray(u, dtype=float)
    out = np.zeros(tuple(n + 2 for n in u.shape))
    inner = tuple(slice(1, -1) for _ in u.shape)
    out[inner] = u
    for axis in range(u.ndim):
        for side in (0, 1):
            idx = list(inner)
            idx[axis] = 0 if side == 0 else -1
            out[tuple(idx)] = _ghost(u, grid, bc, axis, side)
    return out


def _check(field_: ScalarField, bc: BoundaryCondition) -> None:
    bc.check(field_.grid)


def laplacian(field_: ScalarField, bc: BoundaryCondition) -> ScalarField:
    """Second-order five-point Laplacian with ghost-cell boundary closure."""
    _check(field_, bc)
    return field_.with_values(laplacian_array(field_.values, field_.grid, bc))


def laplacian_array(u: np.ndarray, grid: Grid, bc: BoundaryCondition) -> np.ndarray:
    p = padded(u, grid, bc)
    out = np.zeros(grid.shape)
    for axis, h in enumerate(grid.spacing):
        lo = [slice(1, -1)] * grid.dimension
        hi = [slice(1, -1)] * grid.dimension
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        out += (p[tuple(lo)] - 2.0 * u + p[tuple(hi)]) / h**2
    return out


def centered_gradient_array(u: np.ndarray, grid: Grid, bc: BoundaryCondition) -> list[np.ndarray]:
    p = padded(u, grid, bc)
    out = []
    for axis, h in enumerate(grid.spacing):
        lo = [slice(1, -1)] * grid.dimension
        hi = [slice(1, -1)] * grid.dimension
        lo[axis] = slice(0, -2)
        hi[axis] = slice(2, None)
        out.append((p[tuple(hi)] - p[tuple(lo)]) / (2.0 * h))
    return out


def centered_gradient(field_: ScalarField, bc: BoundaryCondition) -> list[ScalarField]:
    _check(field_, bc)
    return [field_.with_values(g) for g in centered_gradient_array(field_.values, field_.grid, bc)]


def integrate(field_: ScalarField) -> float:
    """Cell-volume weighted sum."""
    return float(field_.grid.cell_volume * np.sum(field_.values))


# ---------------------------------------------------------------------------
# links: the primal/dual edges used by all flux-form quadratures


@dataclass(frozen=True)
class Link:
    """A family of links along one axis.

    ``ends[k]`` holds the (low, high) endpoint values of the k-th field;
    ``length`` is the centre-to-centre (or centre-to-face) distance and
    ``area`` the cross-section, so that ``area * length`` is the volume a
    link represents.
    """

    axis: int
    length: float
    area: float
    ends: tuple[tuple[np.ndarray, np.ndarray], ...]
    boundary: bool = False

    @property
    def measure(self) -> float:
        return self.area * self.length


def iter_links(
    grid: Grid,
    values: Sequence[np.ndarray],
    bcs: Sequence[BoundaryCondition] | None = None,
) -> Iterator[Link]:
    """Interior links, plus Dirichlet half-links when ``bcs`` is given.

    A half-link joins the edge cell to the face midpoint, where each field
    takes its Dirichlet value.  It is only produced when every field has a
    Dirichlet condition on that face.
    """
    for axis, h in enumerate(grid.spacing):
        area = grid.cell_volume / h
        lo = [slice(None)] * grid.dimension
        hi = [slice(None)] * grid.dimension
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        ends = tuple((np.asarray(u)[tuple(lo)], np.asarray(u)[tuple(hi)]) for u in values)
        yield Link(axis, h, area, ends)
        if bcs is None:
            continue
        for side in (0, 1):
            faces = [bc.face(axis, side) for bc in bcs]
            if not all(isinstance(f, Dirichlet) for f in faces):
                continue
            pairs = []
            for u, bc in zip(values, bcs):
                edge = np.expand_dims(_edge(np.asarray(u), axis, side), axis)
                face = np.expand_dims(bc.face_values(grid, axis, side), axis)
                pairs.append((face, edge) if side == 0 else (edge, face))
            yield Link(axis, 0.5 * h, area, tuple(pairs), boundary=True)


def grad_sq_weighted(
    field_: ScalarField,
    weight: ScalarField,
    bc: BoundaryCondition | None = None,
    weight_bc: BoundaryCondition | None = None,
) -> float:
    """Midpoint-flux quadrature of the integral of ``w |grad u|^2``.

    Link weights are arithmetic means of the endpoint weights.  Without
    ``bc`` only interior links contribute; with ``bc`` and ``weight_bc``
    the Dirichlet half-links are added as well.
    """
    w = weight.values
    if np.any(w < 0):
        raise ValueError("weight must be nonnegative")
    if field_.grid != weight.grid:
        raise ValueError("field and weight live on different grids")
    bcs = None
    if bc is not None:
        if weight_bc is None:
            raise ValueError("weight_bc is required together with bc")
        bcs = (bc, weight_bc)
    total = 0.0
    for link in iter_links(field_.grid, (field_.values, w), bcs):
        (u0, u1), (w0, w1) = link.ends
        grad = (u1 - u0) / link.length
        total += link.measure * float(np.sum(0.5 * (w0 + w1) * grad**2))
    return total


def grad_bilinear(f: ScalarField, g: ScalarField) -> float:
    """Interior-link quadrature of the integral of ``grad f . grad g``."""
    total = 0.0
    for link in iter_links(f.grid, (f.values, g.values)):
        (f0, f1), (g0, g1) = link.ends
        total += link.measure * float(np.sum((f1 - f0) * (g1 - g0))) / link.length**2
    return total


def boundary_flux(f: ScalarField, bc: BoundaryCondition, g: ScalarField | None = None) -> float:
    """Sum over faces of ``area * g_edge * (f_ghost - f_edge) / h``.

    This is the boundary term closing the discrete integration by parts; for
    ``g = None`` it is the net inward flux of ``grad f``.
    """
    _check(f, bc)
    grid = f.grid
    gv = np.ones(grid.shape) if g is None else g.values
    total = 0.0
    for axis, side, _ in bc.iter_faces():
        h = grid.spacing[axis]
        area = grid.cell_volume / h
        jump = _ghost(f.values, grid, bc, axis, side) - _edge(f.values, axis, side)
        total += area * float(np.sum(_edge(gv, axis, side) * jump)) / h
    return total
