"""Entropy, free-energy and large-deviation functionals of macroscopic states.

Units: ``k = 1`` and ``m = 1`` unless passed explicitly.  Quantities that are
only defined up to an additive constant (the equilibrium gas entropy, the
local-equilibrium entropy density) are returned without that constant; only
differences and time derivatives are ever compared.

Empty cells (``N_alpha = 0`` or ``f = 0``) contribute nothing to entropy sums,
by continuity of ``x log x`` at zero.

The multi-reservoir functional is evaluated as

    F(rho) = integral over V of F_{rho_bar(x)}(rho(x)) dx,
    F_u(v) = integral from u to v of log(sigma(z) / sigma(u)) dz,

i.e. the increment is anchored at the stationary profile ``rho_bar`` cell by
cell.  The printed form of the integrand subscript is ambiguous; this reading
is the one under which the functional vanishes exactly at the stationary
profile and coincides with the zero-range large-deviation rate.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate as spi
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln, xlogy

from .fields import Grid, ScalarField, SigmaModel, integrate

__all__ = [
    "ThermoModel",
    "IdealGasThermo",
    "TabulatedThermo",
    "VelocityGrid",
    "DistributionField",
    "OccupancyMacrostate",
    "log_phase_volume_exact",
    "entropy_stirling",
    "s_gas",
    "maxwellian",
    "s_gas_equilibrium",
    "s_momentum",
    "s_local_equilibrium",
    "free_energy_canonical",
    "ldf_increment",
    "ldf_increment_array",
    "ldf_zrp",
]


# ---------------------------------------------------------------------------
# thermodynamic models


class ThermoModel:
    """Concave entropy density ``s(e)`` at fixed particle density.

    Subclasses provide ``s``, ``inverse_temperature`` (``ds/de``) and
    ``dT_de``; ``working_range`` is the open interval of admissible ``e``.
    """

    name = "thermo"
    working_range: tuple[float, float] = (0.0, np.inf)

    def s(self, e):
        raise NotImplementedError

    def inverse_temperature(self, e):
        raise NotImplementedError

    def dT_de(self, e):
        raise NotImplementedError

    def temperature(self, e):
        return 1.0 / self.inverse_temperature(e)

    def energy(self, T):
        raise NotImplementedError

    def check_range(self, e, what: str = "energy density") -> None:
        e = np.asarray(e, dtype=float)
        lo, hi = self.working_range
        if not (np.all(np.isfinite(e)) and np.all(e > lo) and np.all(e < hi)):
            raise ValueError(
                f"{what} outside working range {self.working_range} of thermo model '{self.name}' "
                f"(range [{np.nanmin(e):.6g}, {np.nanmax(e):.6g}])"
            )


class IdealGasThermo(ThermoModel):
    """``s(e) = c log e`` so that ``T = e / c``; ``c = 3/2`` is the monatomic gas."""

    def __init__(self, c: float = 1.5):
        if c <= 0:
            raise ValueError("heat-capacity factor must be positive")
        self.c = float(c)
        self.name = f"ideal(c={self.c:g})"

    def s(self, e):
        return self.c * np.log(e)

    def inverse_temperature(self, e):
        return self.c / np.asarray(e, dtype=float)

    def temperature(self, e):
        return np.asarray(e, dtype=float) / self.c

    def dT_de(self, e):
        return np.full_like(np.asarray(e, dtype=float), 1.0 / self.c)

    def energy(self, T):
        return self.c * np.asarray(T, dtype=float)


class TabulatedThermo(ThermoModel):
    """User-tabulated ``s(e)`` with monotone cubic (PCHIP) interpolation.

    The table must be increasing and concave; concavity of the interpolant is
    checked on a fine sample at construction.
    """

    def __init__(self, e_table, s_table, name: str = "tabulated", check_points: int = 2001):
        e = np.asarray(e_table, dtype=float)
        s = np.asarray(s_table, dtype=float)
        if e.ndim != 1 or e.shape != s.shape or e.size < 4:
            raise ValueError("need matching 1D tables with at least 4 points")
        if np.any(np.diff(e) <= 0):
            raise ValueError("energy table must be strictly increasing")
        if np.any(np.diff(s) <= 0):
            raise ValueError("entropy must increase with energy (positive temperature)")
        self._s = PchipInterpolator(e, s, extrapolate=False)
        self._ds = self._s.derivative(1)
        self._d2s = self._s.derivative(2)
        self.name = name
        self.working_range = (float(e[0]), float(e[-1]))
        probe = np.linspace(e[0], e[-1], check_points)
        slope = self._ds(probe)
        if np.any(slope <= 0):
            raise ValueError("interpolated entropy is not strictly increasing")
        if np.any(np.diff(slope) > 1e-12 * np.abs(slope).max()):
            raise ValueError("interpolated entropy is not concave")

    def s(self, e):
        return self._s(e)

    def inverse_temperature(self, e):
        return self._ds(e)

    def dT_de(self, e):
        beta = self._ds(e)
        return -self._d2s(e) / beta**2

    def energy(self, T):
        from scipy.optimize import brentq

        lo, hi = self.working_range
        T = np.atleast_1d(np.asarray(T, dtype=float))
        out = [brentq(lambda x: 1.0 / self._ds(x) - t, lo, hi) for t in T]
        return np.asarray(out) if len(out) > 1 else out[0]


# ---------------------------------------------------------------------------
# mu-space macrostates


@dataclass(frozen=True)
class OccupancyMacrostate:
    """Particle counts per mu-space cell together with the cell volumes."""

    counts: np.ndarray
    volumes: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        volumes = np.asarray(self.volumes, dtype=float)
        if counts.shape != volumes.shape:
            raise ValueError("counts and volumes must have the same shape")
        if not np.all(np.equal(np.mod(counts, 1), 0)) or np.any(counts < 0):
            raise ValueError("counts must be nonnegative integers")
        if np.any(volumes <= 0):
            raise ValueError("cell volumes must be positive")
        object.__setattr__(self, "counts", counts.astype(float))
        object.__setattr__(self, "volumes", volumes)

    @property
    def N(self) -> float:
        return float(self.counts.sum())

    def energy(self, speeds_sq, m: float = 1.0) -> float:
        return float(0.5 * m * np.sum(self.counts * np.asarray(speeds_sq)))


def log_phase_volume_exact(macro: OccupancyMacrostate) -> float:
    """``sum_a [N_a log|cell_a| - log N_a!]`` via log-gamma."""
    n, w = macro.counts, macro.volumes
    return float(np.sum(xlogy(n, w) - gammaln(n + 1.0)))


def entropy_stirling(macro: OccupancyMacrostate) -> float:
    """Stirling form ``-sum_a N_a log(N_a/|cell_a|) + N``."""
    n, w = macro.counts, macro.volumes
    return float(-np.sum(xlogy(n, n / w)) + n.sum())


# ---------------------------------------------------------------------------
# kinetic distributions


@dataclass(frozen=True)
class VelocityGrid:
    """Velocity nodes ``(J, d_v)`` with positive quadrature weights."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        weights = np.broadcast_to(np.asarray(self.weights, dtype=float), nodes.shape[:1]).copy()
        if np.any(weights <= 0):
            raise ValueError("velocity weights must be positive")
        if len(np.unique(nodes, axis=0)) != len(nodes):
            raise ValueError("velocity nodes must be distinct")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, n_per_axis: int = 32, v_max: float = 6.0, dimension: int = 3) -> "VelocityGrid":
        """Cartesian midpoint grid on ``[-v_max, v_max]^d``."""
        dv = 2.0 * v_max / n_per_axis
        axis = -v_max + (np.arange(n_per_axis) + 0.5) * dv
        mesh = np.meshgrid(*([axis] * dimension), indexing="ij")
        nodes = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(nodes, np.full(len(nodes), dv**dimension))

    @property
    def dimension(self) -> int:
        return self.nodes.shape[1]

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @cached_property
    def speed_sq(self) -> np.ndarray:
        out = np.sum(self.nodes**2, axis=1)
        out.setflags(write=False)
        return out

    @cached_property
    def collision_invariants(self) -> np.ndarray:
        """Rows ``(1, v_1..v_d, |v|^2/2)`` for every node."""
        out = np.column_stack([np.ones(self.size), self.nodes, 0.5 * self.speed_sq])
        out.setflags(write=False)
        return out


@dataclass(frozen=True)
class DistributionField:
    """Density ``f`` in mu-space.

    ``values`` has shape ``(J,)`` for a spatially uniform gas occupying volume
    ``volume``, or ``grid.shape + (J,)`` when a spatial grid is attached.
    """

    vgrid: VelocityGrid
    values: np.ndarray
    grid: Grid | None = None
    volume: float = 1.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        expected = (self.vgrid.size,) if self.grid is None else self.grid.shape + (self.vgrid.size,)
        if values.shape != expected:
            raise ValueError(f"distribution shape {values.shape}, expected {expected}")
        if self.grid is None and not self.volume > 0:
            raise ValueError("volume must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def spatial_weight(self) -> float:
        return self.volume if self.grid is None else self.grid.cell_volume

    def density(self) -> np.ndarray:
        """``n(x) = int f dv`` (scalar for a uniform gas)."""
        return self.values @ self.vgrid.weights

    def total_mass(self) -> float:
        return float(self.spatial_weight * np.sum(self.density()))

    def kinetic_energy(self, m: float = 1.0) -> float:
        e = self.values @ (self.vgrid.weights * 0.5 * m * self.vgrid.speed_sq)
        return float(self.spatial_weight * np.sum(e))


def _check_nonnegative(f: DistributionField) -> None:
    if np.any(f.values < 0):
        raise ValueError("distribution must be nonnegative")


def s_gas(f: DistributionField) -> float:
    """``-int int f log f`` over position and velocity."""
    _check_nonnegative(f)
    per_cell = -xlogy(f.values, f.values) @ f.vgrid.weights
    return float(f.spatial_weight * np.sum(per_cell))


def maxwellian(N: float, V: float, E: float, m: float, vgrid: VelocityGrid, *, k: float = 1.0,
               mass_tolerance: float = 1e-6) -> DistributionField:
    """Maxwell distribution at ``kT = (2/d) E/N`` sampled on ``vgrid``.

    Raises ``ValueError`` when the grid loses more than ``mass_tolerance`` of
    the mass.
    """
    if min(N, V, E, m) <= 0:
        raise ValueError("N, V, E and m must be positive")
    d = vgrid.dimension
    kT = 2.0 * E / (d * N)
    f = (N / V) * (2.0 * np.pi * kT / m) ** (-d / 2.0) * np.exp(-m * vgrid.speed_sq / (2.0 * kT))
    out = DistributionField(vgrid, f, volume=V)
    deficit = abs(out.total_mass() - N) / N
    if deficit > mass_tolerance:
        raise ValueError(f"velocity grid too narrow or coarse: relative mass deficit {deficit:.3g}")
    return out


def s_gas_equilibrium(N: float, V: float, T: float, *, k: float = 1.0, dimension: int = 3) -> float:
    """``N k [(d/2) log T - log(N/V)]``, the equilibrium gas entropy up to a constant."""
    return float(N * k * (0.5 * dimension * np.log(T) - np.log(N / V)))


def s_momentum(f: DistributionField) -> float:
    """Momentum part ``-int dx int dv f log(f / n(x))``."""
    _check_nonnegative(f)
    n = np.asarray(f.density(), dtype=float)
    n_b = n[..., None] if n.ndim else n
    occupied = f.values > 0
    if np.any(occupied & (np.broadcast_to(n_b, f.values.shape) <= 0)):
        raise ValueError("f > 0 where the spatial density vanishes")
    ratio = np.where(occupied, f.values / np.where(n_b > 0, n_b, 1.0), 1.0)
    per_cell = -(f.values * np.log(ratio)) @ f.vgrid.weights
    return float(f.spatial_weight * np.sum(per_cell))


# ---------------------------------------------------------------------------
# local equilibrium and single bath


def s_local_equilibrium(e: ScalarField, thermo: ThermoModel) -> float:
    """``int s(e(x)) dx``."""
    thermo.check_range(e.values)
    return integrate(e.map(thermo.s))


def free_energy_canonical(e: ScalarField, thermo: ThermoModel, T_bath: float) -> float:
    """``(E - T_bath S_le) / T_bath``, the canonical rate functional."""
    if not T_bath > 0:
        raise ValueError("bath temperature must be positive")
    return (integrate(e) - T_bath * s_local_equilibrium(e, thermo)) / T_bath


# ---------------------------------------------------------------------------
# zero-range large-deviation functional


def ldf_increment(u: float, v: float, sigma: SigmaModel) -> float:
    """``int_u^v log(sigma(z)/sigma(u)) dz``.

    Closed form when ``sigma`` provides one, adaptive Gauss-Kronrod
    quadrature otherwise.
    """
    u = float(u)
    v = float(v)
    su = float(sigma.sigma(u))
    if not su > 0:
        raise ValueError(f"sigma(u) must be positive, got {su}")
    sigma.check_interval([u, v], "ldf_increment arguments")
    if sigma.increment is not None:
        return float(sigma.increment(u, v))
    if u == v:
        return 0.0
    log_su = np.log(su)
    val, _ = spi.quad(lambda z: np.log(float(sigma.sigma(z))) - log_su, u, v,
                      epsabs=1e-14, epsrel=1e-12, limit=200)
    return float(val)


def ldf_increment_array(u, v, sigma: SigmaModel) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    su = sigma.sigma(u)
    if np.any(su <= 0):
        raise ValueError("sigma(u) must be positive")
    sigma.check_interval(u, "reference profile")
    sigma.check_interval(v, "profile")
    if sigma.increment is not None:
        return np.asarray(sigma.increment(u, v), dtype=float)
    ub, vb = np.broadcast_arrays(u, v)
    out = np.array([ldf_increment(a, b, sigma) for a, b in zip(ub.ravel(), vb.ravel())])
    return out.reshape(ub.shape)


def ldf_zrp(rho: ScalarField, rho_bar: ScalarField, sigma: SigmaModel) -> float:
    """``int F_{rho_bar(x)}(rho(x)) dx``; nonnegative, zero only at ``rho_bar``."""
    if rho.grid != rho_bar.grid:
        raise ValueError("rho and rho_bar live on different grids")
    rho.require_positive("rho")
    rho_bar.require_positive("rho_bar")
    return integrate(rho.with_values(ldf_increment_array(rho_bar.values, rho.values, sigma)))
