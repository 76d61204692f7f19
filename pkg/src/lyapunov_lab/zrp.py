"""Boundary-driven zero-range process on ``{1, ..., L}``.

Dynamics (continuous time):

* site ``i`` fires at rate ``g(n_i)``; the particle hops left or right with
  probability 1/2 each (so each direction carries rate ``g(n_i)/2``);
* a particle leaving site 1 to the left, or site ``L`` to the right, is
  absorbed by the reservoir;
* the left (right) reservoir injects into site 1 (``L``) at rate
  ``z_left/2`` (``z_right/2``).

With this convention a single site between two reservoirs of fugacity ``z``
has the stationary law ``p(n) ~ z^n / (g(1)...g(n))``, i.e. the reservoir
fugacity is the site fugacity.  For general ``L`` the stationary measure is
the product of these single-site laws with fugacities linear between
``z_left`` and ``z_right``.  The hydrodynamic constitutive function is
``sigma(rho) = z(rho)``, the inverse of ``rho(z) = z Z'(z) / Z(z)``.

Random numbers come from a :class:`numpy.random.Generator`; two uniforms
are drawn per event (waiting time, then channel), so a run is fixed by the
seed and the configuration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np
from scipy.special import logsumexp
from scipy.stats import chi2, norm

from .fields import BoundaryCondition, Grid, ScalarField, SigmaModel

__all__ = [
    "RATE_FUNCTIONS",
    "ZrpModel",
    "ZrpState",
    "SingleSiteMeasure",
    "single_site_cap",
    "sigma_from_rates",
    "ness_fugacity_profile",
    "ness_density_profile",
    "hydrodynamic_problem_data",
    "gillespie_step",
    "simulate",
    "sample_ness",
    "LdfEstimate",
    "ldf_empirical",
    "cramer_rate",
    "SimulationResult",
    "batch_means",
    "NessCheck",
    "check_product_measure",
]

TAIL_TOL = 1e-14
HARD_CAP = 200_000


def _linear(n):
    return np.asarray(n, dtype=float)


def _constant(n):
    return (np.asarray(n) > 0).astype(float)


RATE_FUNCTIONS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "linear": _linear,      # g(n) = n: independent walkers, sigma = identity
    "constant": _constant,  # g(n) = 1: sigma(rho) = rho / (1 + rho)
}


def _table_rate(table: Sequence[float]) -> Callable[[np.ndarray], np.ndarray]:
    """``g(n) = table[n-1]`` for ``n <= len(table)``, then the last entry."""
    t = np.asarray(table, dtype=float)
    if t.ndim != 1 or t.size == 0 or np.any(t <= 0):
        raise ValueError("rate table must list positive g(1), g(2), ...")

    def g(n):
        n = np.asarray(n)
        out = t[np.clip(n - 1, 0, t.size - 1)]
        return np.where(n > 0, out, 0.0)

    return g


@dataclass(frozen=True)
class ZrpModel:
    L: int
    rate: str | Sequence[float] | Callable[[np.ndarray], np.ndarray]
    z_left: float
    z_right: float

    def __post_init__(self):
        if int(self.L) < 1:
            raise ValueError("need at least one site")
        if not (self.z_left > 0 and self.z_right > 0):
            raise ValueError("reservoir fugacities must be positive")
        g = self.g(np.arange(0, 4))
        if g[0] != 0 or np.any(g[1:] <= 0):
            raise ValueError("rates must satisfy g(0) = 0 and g(n) > 0 for n >= 1")
        single_site_cap(self, max(self.z_left, self.z_right))

    @property
    def rate_name(self) -> str:
        if isinstance(self.rate, str):
            return self.rate
        if callable(self.rate):
            return getattr(self.rate, "__name__", "custom")
        return "table(" + ",".join(f"{x:g}" for x in self.rate) + ")"

    def g(self, n) -> np.ndarray:
        if isinstance(self.rate, str):
            try:
                fn = RATE_FUNCTIONS[self.rate]
            except KeyError:
                raise ValueError(f"unknown rate function {self.rate!r}; known: {sorted(RATE_FUNCTIONS)}") from None
        elif callable(self.rate):
            fn = self.rate
        else:
            fn = _table_rate(self.rate)
        return np.asarray(fn(np.asarray(n)), dtype=float)

    def log_rate_factorial(self, n_max: int) -> np.ndarray:
        """``log(g(1) ... g(n))`` for ``n = 0..n_max``."""
        g = self.g(np.arange(1, n_max + 1))
        return np.concatenate([[0.0], np.cumsum(np.log(g))])


@dataclass
class ZrpState:
    occupations: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        occ = np.asarray(self.occupations)
        if occ.ndim != 1 or np.any(occ < 0) or not np.all(np.equal(np.mod(occ, 1), 0)):
            raise ValueError("occupations must be a 1D array of nonnegative integers")
        self.occupations = occ.astype(np.int64)

    def copy(self) -> "ZrpState":
        return ZrpState(self.occupations.copy(), self.time)


# ---------------------------------------------------------------------------
# single-site grand-canonical law


def single_site_cap(model: ZrpModel, z: float, tail: float = TAIL_TOL) -> int:
    """Smallest cap whose neglected tail is below ``tail`` at fugacity ``z``.

    The tail beyond ``n`` is bounded by ``p(n) r / (1 - r)`` with
    ``r = max z / g(k)`` over ``n < k <= 2n + 16``; raises ``ValueError``
    when no cap below ``HARD_CAP`` works (divergent partition function).
    """
    n = 16
    while n <= HARD_CAP:
        lf = model.log_rate_factorial(2 * n + 16)
        logw = np.arange(lf.size) * np.log(z) - lf
        logp = logw - logsumexp(logw[: n + 1])
        r = float(np.max(z / model.g(np.arange(n + 1, 2 * n + 17))))
        if r < 1.0:
            bound = logp[n] + np.log(r) - np.log1p(-r)
            if bound < np.log(tail):
                return n
        n *= 2
    raise ValueError(f"single-site partition function diverges (or converges too slowly) at z={z:g}")


@dataclass(frozen=True)
class SingleSiteMeasure:
    """Truncated law ``p(n) = z^n / (Z g(1)...g(n))``, ``n = 0..n_max``."""

    model: ZrpModel
    z: float
    n_max: int = 0
    log_p: np.ndarray = field(init=False, repr=False)
    log_Z: float = field(init=False)

    def __post_init__(self):
        n_max = self.n_max or single_site_cap(self.model, self.z)
        object.__setattr__(self, "n_max", int(n_max))
        logw = np.arange(n_max + 1) * np.log(self.z) - self.model.log_rate_factorial(n_max)
        lz = float(logsumexp(logw))
        object.__setattr__(self, "log_Z", lz)
        object.__setattr__(self, "log_p", logw - lz)

    @property
    def p(self) -> np.ndarray:
        return np.exp(self.log_p)

    @property
    def partition_function(self) -> float:
        return float(np.exp(self.log_Z))

    @property
    def density(self) -> float:
        return float(self.p @ np.arange(self.n_max + 1))

    @property
    def variance(self) -> float:
        n = np.arange(self.n_max + 1)
        p = self.p
        m = p @ n
        return float(p @ (n - m) ** 2)


def _density_and_variance(model: ZrpModel, z: np.ndarray, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    n = np.arange(n_max + 1)
    lf = model.log_rate_factorial(n_max)
    logw = np.log(np.asarray(z, dtype=float))[..., None] * n - lf
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=-1, keepdims=True)
    m = w @ n
    v = w @ n**2 - m**2
    return m, np.maximum(v, 0.0)


def _log_partition(model: ZrpModel, z: np.ndarray, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    logw = np.log(np.asarray(z, dtype=float))[..., None] * n - model.log_rate_factorial(n_max)
    return logsumexp(logw, axis=-1)


def _default_z_max(model: ZrpModel, factor: float = 4.0, soft_cap: int = 4096) -> float:
    """Largest fugacity in ``[1.02, factor] * max(z_left, z_right)`` with a modest cap."""
    z0 = max(model.z_left, model.z_right)
    for z in z0 * np.geomspace(factor, 1.02, 60):
        try:
            if single_site_cap(model, float(z)) <= soft_cap:
                return float(z)
        except ValueError:
            continue
    raise ValueError("partition function converges too slowly just above the reservoir fugacities")


def sigma_from_rates(model: ZrpModel, n_max: int | None = None, z_max: float | None = None,
                     table_points: int = 513) -> SigmaModel:
    """Hydrodynamic ``sigma(rho) = z(rho)`` of the zero-range process.

    ``rho(z)`` is tabulated on a geometric fugacity grid up to ``z_max`` (to
    check monotonicity and seed the inversion); ``sigma`` itself is computed
    by Newton iteration on ``log z`` with ``d rho / d log z = Var(n)``, so the
    inverse pair holds to round-off.
    """
    if z_max is None:
        z_max = _default_z_max(model)
    cap = n_max or single_site_cap(model, z_max)
    if single_site_cap(model, z_max) > cap:
        raise ValueError(f"n_max={cap} leaves a tail above {TAIL_TOL:g} at z_max={z_max:g}")
    z_min = z_max * 1e-8
    z_tab = np.geomspace(z_min, z_max, table_points)
    rho_tab, _ = _density_and_variance(model, z_tab, cap)
    if np.any(np.diff(rho_tab) <= 0):
        raise ValueError("tabulated density is not increasing in z; raise n_max")
    logz_tab = np.log(z_tab)
    rho_hi = float(rho_tab[-1])

    def rho_of_z(z):
        return _density_and_variance(model, z, cap)[0]

    def z_of_rho(rho):
        rho = np.asarray(rho, dtype=float)
        u = np.interp(rho, rho_tab, logz_tab)
        for _ in range(60):
            m, v = _density_and_variance(model, np.exp(u), cap)
            du = (m - rho) / np.maximum(v, 1e-300)
            u = u - np.clip(du, -1.0, 1.0)
            if np.all(np.abs(du) <= 1e-15 * np.maximum(1.0, np.abs(u))):
                break
        return np.exp(u)

    def sigma_prime(rho):
        z = z_of_rho(rho)
        _, v = _density_and_variance(model, z, cap)
        return z / v

    return SigmaModel(
        name=f"zrp[{model.rate_name}]",
        sigma=z_of_rho,
        sigma_prime=sigma_prime,
        sigma_inverse=rho_of_z,
        interval=(0.0, rho_hi),
        meta=dict(n_max=int(cap), z_range=(float(z_min), float(z_max)), rho_range=(float(rho_tab[0]), rho_hi)),
    )


# ---------------------------------------------------------------------------
# stationary state


def ness_fugacity_profile(model: ZrpModel) -> np.ndarray:
    """Site fugacities ``z_left + (z_right - z_left) i / (L + 1)``."""
    i = np.arange(1, model.L + 1)
    return model.z_left + (model.z_right - model.z_left) * i / (model.L + 1)


def ness_density_profile(model: ZrpModel, n_max: int | None = None) -> np.ndarray:
    z = ness_fugacity_profile(model)
    cap = n_max or single_site_cap(model, float(z.max()))
    return _density_and_variance(model, z, cap)[0]


def hydrodynamic_problem_data(model: ZrpModel, sigma: SigmaModel) -> tuple[Grid, BoundaryCondition]:
    """Grid and reservoir data on which the PDE reproduces the lattice NESS exactly.

    Sites sit at ``x_i = i/(L+1)`` and the reservoirs at 0 and 1; the
    cell-centred grid therefore spans ``[h/2, 1 - h/2]`` with ``h = 1/(L+1)``
    and face values taken from the linear fugacity profile there.
    """
    h = 1.0 / (model.L + 1)
    grid = Grid((model.L,), (h,))
    dz = model.z_right - model.z_left
    z_lo = model.z_left + 0.5 * h * dz
    z_hi = model.z_right - 0.5 * h * dz
    bc = BoundaryCondition.dirichlet(float(sigma.sigma_inverse(z_lo)), float(sigma.sigma_inverse(z_hi)))
    return grid, bc


# ---------------------------------------------------------------------------
# event-driven simulation


def gillespie_step(model: ZrpModel, state: ZrpState, rng: np.random.Generator) -> ZrpState:
    """Exact next-event update (reference implementation of the jitted kernel)."""
    n = state.occupations
    g = model.g(n)
    rates = np.empty(model.L + 2)
    rates[:model.L] = g
    rates[model.L] = 0.5 * model.z_left
    rates[model.L + 1] = 0.5 * model.z_right
    total = float(rates.sum())
    u1 = rng.random()
    u2 = rng.random()
    wait = -np.log1p(-u1) / total
    out = state.copy()
    out.time = state.time + wait
    target = u2 * total
    acc = 0.0
    L = model.L
    for i in range(L):
        gi = rates[i]
        if target < acc + gi:
            out.occupations[i] -= 1
            if target < acc + 0.5 * gi:
                if i > 0:
                    out.occupations[i - 1] += 1
            elif i < L - 1:
                out.occupations[i + 1] += 1
            return out
        acc += gi
    if target < acc + rates[L]:
        out.occupations[0] += 1
    else:
        out.occupations[L - 1] += 1
    return out


@numba.njit(cache=True)
def _run(n, t, g_table, zl, zr, rng, t_stop, max_events, sample_times, samples):
    """Advance ``n`` in place until ``t_stop`` or ``max_events``.

    Records the state at each entry of ``sample_times`` into ``samples``.
    Returns ``(t, events, next_sample, status)``; status 1 means the rate
    table was exhausted.
    """
    L = n.shape[0]
    cap = g_table.shape[0] - 1
    total = 0.5 * (zl + zr)
    for i in range(L):
        total += g_table[n[i]]
    k = 0
    n_samples = sample_times.shape[0]
    events = 0
    while events < max_events:
        u1 = rng.random()
        u2 = rng.random()
        wait = -np.log1p(-u1) / total
        while k < n_samples and sample_times[k] < t + wait:
            for i in range(L):
                samples[k, i] = n[i]
            k += 1
        if t + wait > t_stop:
            return t_stop, events, k, 0
        t += wait
        events += 1
        target = u2 * total
        acc = 0.0
        done = False
        for i in range(L):
            gi = g_table[n[i]]
            if target < acc + gi:
                if target < acc + 0.5 * gi:
                    j = i - 1
                else:
                    j = i + 1
                total -= gi
                n[i] -= 1
                total += g_table[n[i]]
                if 0 <= j < L:
                    if n[j] + 1 > cap:
                        return t, events, k, 1
                    total -= g_table[n[j]]
                    n[j] += 1
                    total += g_table[n[j]]
                done = True
                break
            acc += gi
        if not done:
            if target < acc + 0.5 * zl:
                j = 0
            else:
                j = L - 1
            if n[j] + 1 > cap:
                return t, events, k, 1
            total -= g_table[n[j]]
            n[j] += 1
            total += g_table[n[j]]
        # the running total drifts by round-off; refresh it now and then
        if events % 4096 == 0:
            total = 0.5 * (zl + zr)
            for i in range(L):
                total += g_table[n[i]]
    return t, events, k, 0


def _rate_table(model: ZrpModel, z_ref: float) -> np.ndarray:
    cap = 4 * single_site_cap(model, z_ref) + 64
    return model.g(np.arange(cap + 1))


@dataclass
class SimulationResult:
    state: ZrpState
    events: int
    sample_times: np.ndarray
    samples: np.ndarray


def simulate(model: ZrpModel, state: ZrpState, rng: np.random.Generator, t_stop: float,
             sample_times: np.ndarray | None = None, max_events: int = 2**62) -> SimulationResult:
    """Run the event loop (jitted) from ``state`` up to time ``t_stop``."""
    z_ref = max(model.z_left, model.z_right)
    table = _rate_table(model, z_ref)
    n = state.occupations.astype(np.int64).copy()
    if n.size != model.L:
        raise ValueError("state size does not match the lattice")
    if np.any(n >= table.size):
        table = model.g(np.arange(int(n.max()) * 2 + 64))
    st = np.empty(0) if sample_times is None else np.asarray(sample_times, dtype=float)
    if st.size and (np.any(np.diff(st) <= 0) or st[0] < state.time):
        raise ValueError("sample times must increase and start after the current time")
    samples = np.zeros((st.size, model.L), dtype=np.int64)
    t, events, k, status = _run(n, float(state.time), table, float(model.z_left), float(model.z_right),
                                rng, float(t_stop), int(max_events), st, samples)
    if status:
        raise OverflowError("site occupation exceeded the rate table; fugacities too close to divergence")
    return SimulationResult(ZrpState(n, t), int(events), st[:k], samples[:k])


def sample_ness(model: ZrpModel, burn_in: float, samples: int, thin: float, rng: np.random.Generator,
                initial: ZrpState | None = None) -> list[ZrpState]:
    """Thinned snapshots at times ``burn_in + k * thin``, ``k = 0..samples-1``."""
    if not (burn_in > 0 and thin > 0):
        raise ValueError("burn_in and thin must be positive")
    state = initial or ZrpState(np.zeros(model.L, dtype=np.int64))
    times = state.time + burn_in + thin * np.arange(samples)
    res = simulate(model, state, rng, float(times[-1]) + thin, sample_times=times)
    return [ZrpState(row.copy(), float(t)) for t, row in zip(res.sample_times, res.samples)]


# ---------------------------------------------------------------------------
# large deviations of the coarse-grained density under the exact NESS


def cramer_rate(model: ZrpModel, z: float, v: float, n_max: int | None = None) -> float:
    """Cramér rate of the single-site law at fugacity ``z`` evaluated at mean ``v``.

    ``v log(z_v / z) - log Z(z_v) + log Z(z)`` with ``rho(z_v) = v``.
    """
    sigma = sigma_from_rates(model, n_max=n_max, z_max=_default_z_max(model, factor=8.0))
    zv = float(sigma.sigma(v))
    cap = sigma.meta["n_max"]
    lz = _log_partition(model, np.array([zv, z]), cap)
    return float(v * np.log(zv / z) - lz[0] + lz[1])


@dataclass
class LdfEstimate:
    K: int
    delta: float
    target: np.ndarray
    window_counts: list
    per_cell_rates: np.ndarray
    cell_fugacity: np.ndarray
    mc_rates: np.ndarray | None = None

    @property
    def total(self) -> float:
        """``-(1/L) log P`` of the whole profile: per-cell rates weighted by cell volume ``1/C``."""
        return float(self.per_cell_rates.mean())

    def __float__(self) -> float:
        return self.total


def _solve_tilt(model: ZrpModel, z: np.ndarray, m: float, cap_for) -> float:
    """``theta`` with ``sum_i rho(theta z_i) = m``."""
    lo, hi = -30.0, np.log(_default_z_max(model, factor=16.0) / z.max())
    if m <= 0:
        raise ValueError("target unreachable: empty cell")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        th = np.exp(mid)
        dens, _ = _density_and_variance(model, th * z, cap_for(th * z.max()))
        if dens.sum() < m:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    return float(np.exp(0.5 * (lo + hi)))


def _cell_log_probability(model: ZrpModel, z: np.ndarray, counts: Sequence[int]) -> float:
    """``log P(sum of cell occupations in counts)`` under the product measure.

    Uses exponential tilting towards the target so that the convolution is
    evaluated where it carries its mass, then undoes the tilt exactly.
    """
    m_mid = float(np.mean(counts))
    if m_mid <= 0:
        # the empty configuration has an explicit probability
        cap0 = single_site_cap(model, float(z.max()))
        log_p0 = -_log_partition(model, z, cap0)
        return float(np.sum(log_p0)) if 0 in counts else -np.inf

    def cap_for(zz):
        return single_site_cap(model, float(zz))

    theta = _solve_tilt(model, z, m_mid, cap_for)
    zt = theta * z
    cap = cap_for(zt.max())
    n = np.arange(cap + 1)
    lf = model.log_rate_factorial(cap)
    logw = np.log(zt)[:, None] * n - lf
    log_Zt = logsumexp(logw, axis=1)
    dist = np.array([1.0])
    for row, lz in zip(logw, log_Zt):
        dist = np.convolve(dist, np.exp(row - lz))
    log_Z = _log_partition(model, z, cap_for(z.max()))
    out = []
    for c in counts:
        if c < 0 or c >= dist.size or dist[c] <= 0:
            continue
        out.append(np.log(dist[c]) - c * np.log(theta) + float(np.sum(log_Zt - log_Z)))
    if not out:
        raise ValueError("target unreachable at the occupation cap")
    return float(logsumexp(out))


def ldf_empirical(model: ZrpModel, coarse_cells: int, target_profile, samples: Sequence[ZrpState] | None = None,
                  rng: np.random.Generator | None = None) -> LdfEstimate:
    """Per-cell rates ``-(1/K) log P(|M_c/K - target_c| <= 1/(2K))`` under the exact NESS.

    ``M_c`` is the particle number of coarse cell ``c`` of ``K = L / coarse_cells``
    sites.  The probability is computed by exact convolution of the truncated
    single-site laws.  When ``samples`` are given, the frequency of the same
    window among them is reported as ``mc_rates`` (``nan`` where never hit).
    ``rng`` is accepted for interface symmetry and unused by the exact path.
    """
    C = int(coarse_cells)
    if C < 1 or model.L % C:
        raise ValueError("coarse_cells must divide L")
    K = model.L // C
    target = np.asarray(target_profile, dtype=float)
    if target.shape != (C,) or np.any(target <= 0):
        raise ValueError("target profile must hold one positive density per coarse cell")
    delta = 0.5 / K
    z = ness_fugacity_profile(model).reshape(C, K)
    rates = np.empty(C)
    windows = []
    for c in range(C):
        lo = int(np.ceil(K * (target[c] - delta) - 1e-9))
        hi = int(np.floor(K * (target[c] + delta) + 1e-9))
        counts = list(range(max(lo, 0), hi + 1))
        if not counts:
            raise ValueError("target unreachable: empty counting window")
        windows.append(counts)
        rates[c] = -_cell_log_probability(model, z[c], counts) / K
    mc = None
    if samples:
        occ = np.array([s.occupations for s in samples]).reshape(len(samples), C, K).sum(axis=2)
        mc = np.full(C, np.nan)
        for c, counts in enumerate(windows):
            freq = np.isin(occ[:, c], counts).mean()
            if freq > 0:
                mc[c] = -np.log(freq) / K
    return LdfEstimate(K, delta, target, windows, rates, z.mean(axis=1), mc)


# ---------------------------------------------------------------------------
# checks of sampled states against the product measure


def batch_means(x: np.ndarray, n_batches: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Column means and batch-means standard errors of a time series ``x[t, :]``."""
    x = np.asarray(x, dtype=float)
    m = x.shape[0] // n_batches
    if m < 2:
        raise ValueError("too few samples for the requested number of batches")
    b = x[: m * n_batches].reshape(n_batches, m, *x.shape[1:]).mean(axis=1)
    return x.mean(axis=0), b.std(axis=0, ddof=1) / np.sqrt(n_batches)


@dataclass
class NessCheck:
    mean: np.ndarray
    stderr: np.ndarray
    expected_mean: np.ndarray
    z_mean: np.ndarray
    correlation_z: np.ndarray
    correlation_bound: float
    chi2_pvalues: np.ndarray

    @property
    def means_ok(self) -> bool:
        return bool(np.all(np.abs(self.z_mean) < 3.0))

    @property
    def correlations_ok(self) -> bool:
        return bool(np.all(np.abs(self.correlation_z) < self.correlation_bound))

    def chi2_passes(self, level: float = 0.05) -> int:
        return int(np.sum(self.chi2_pvalues > level))


def _chi2_pvalue(counts: np.ndarray, p: np.ndarray, n: int, min_expected: float = 5.0) -> float:
    """Goodness-of-fit p-value with tail bins pooled until each expects ``min_expected``."""
    exp = n * p
    obs = np.zeros_like(exp)
    k = min(counts.size, exp.size)
    obs[:k] = counts[:k]
    obs[-1] += counts[k:].sum()
    # pool the upper tail into the last bin with enough mass, then the lower tail likewise
    hi = exp.size - 1
    while hi > 0 and exp[hi:].sum() < min_expected:
        hi -= 1
    e = np.concatenate([exp[:hi], [exp[hi:].sum()]])
    o = np.concatenate([obs[:hi], [obs[hi:].sum()]])
    lo = 0
    while lo < e.size - 1 and e[: lo + 1].sum() < min_expected:
        lo += 1
    e = np.concatenate([[e[: lo + 1].sum()], e[lo + 1:]])
    o = np.concatenate([[o[: lo + 1].sum()], o[lo + 1:]])
    dof = e.size - 1
    if dof < 1:
        return 1.0
    stat = float(np.sum((o - e) ** 2 / e))
    return float(chi2.sf(stat, dof))


def check_product_measure(model: ZrpModel, samples: Sequence[ZrpState] | np.ndarray,
                          n_batches: int = 50, family_level: float = 0.05) -> NessCheck:
    """Compare sampled occupations with the product NESS.

    * site means against ``rho(z_i)``, in units of batch-means standard errors;
    * every pairwise correlation against zero, with a Bonferroni bound at
      ``family_level`` over all pairs;
    * per-site histogram against the single-site law (chi-square p-values).

    The chi-square and correlation tests treat snapshots as independent, so
    the thinning interval should exceed the slowest relaxation time.
    """
    occ = np.asarray([s.occupations for s in samples] if not isinstance(samples, np.ndarray) else samples)
    n, L = occ.shape
    z = ness_fugacity_profile(model)
    cap = single_site_cap(model, float(z.max()))
    expected = _density_and_variance(model, z, cap)[0]
    mean, se = batch_means(occ, n_batches)
    zm = (mean - expected) / se
    r = np.atleast_2d(np.corrcoef(occ, rowvar=False))
    iu = np.triu_indices(L, 1)
    corr_z = r[iu] * np.sqrt(n)
    bound = float(norm.isf(0.5 * family_level / max(len(iu[0]), 1)))
    pv = np.empty(L)
    for i in range(L):
        measure = SingleSiteMeasure(model, float(z[i]), cap)
        pv[i] = _chi2_pvalue(np.bincount(occ[:, i]), measure.p, n)
    return NessCheck(mean, se, expected, zm, corr_z, bound, pv)
