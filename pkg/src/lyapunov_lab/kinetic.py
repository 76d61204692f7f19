"""Space-homogeneous discrete-velocity BGK relaxation.

The collision term is the BGK surrogate ``(f_eq[f] - f) / tau`` where
``f_eq[f]`` is the exponential-family ("discrete Maxwellian") distribution
``exp(a + b.v + c |v|^2/2)`` whose *discrete* moments ``(N, P, E)`` equal
those of ``f``.  Because ``f_eq[f]`` maximises the discrete entropy among
distributions with those moments, and the update is a convex combination,
the discrete entropy is non-decreasing step by step.

Note on interpretation: ``f`` here is the empirical mu-space density of one
system, not the one-particle marginal of an ensemble; only the former has an
entropy that grows along the kinetic evolution.

Units: ``m = k = 1`` and the spatial volume is 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .functionals import DistributionField, VelocityGrid, s_gas

__all__ = [
    "MomentMatchingError",
    "KineticState",
    "moments",
    "discrete_maxwellian",
    "step_bgk",
    "evolve_bgk",
    "h_theorem_audit",
]


class MomentMatchingError(ArithmeticError):
    """The discrete Maxwellian could not be matched (grid too narrow or coarse)."""


@dataclass(frozen=True)
class KineticState:
    vgrid: VelocityGrid
    f: np.ndarray
    # exponent coefficients of the last matched equilibrium, reused as a warm start
    eq_coeffs: np.ndarray | None = None

    def __post_init__(self):
        f = np.array(self.f, dtype=float)
        if f.shape != (self.vgrid.size,):
            raise ValueError(f"f has shape {f.shape}, expected ({self.vgrid.size},)")
        if np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("f must be finite and nonnegative")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)
        N, _, E = moments(self)
        if not (N > 0 and E > 0):
            raise ValueError("mass and energy must be positive")

    def distribution(self) -> DistributionField:
        return DistributionField(self.vgrid, self.f, volume=1.0)

    def entropy(self) -> float:
        return s_gas(self.distribution())


def moments(s: KineticState) -> tuple[float, np.ndarray, float]:
    """Quadrature moments ``(N, P, E)``."""
    wf = s.vgrid.weights * s.f
    N = float(wf.sum())
    P = wf @ s.vgrid.nodes
    E = float(wf @ (0.5 * s.vgrid.speed_sq))
    return N, P, E


def _initial_coeffs(N: float, P: np.ndarray, E: float, d: int) -> np.ndarray:
    u = P / N
    T = 2.0 * (E / N - 0.5 * float(u @ u)) / d
    if not T > 0:
        raise MomentMatchingError("moments imply a nonpositive temperature")
    a = np.log(N * (2 * np.pi * T) ** (-d / 2)) - float(u @ u) / (2 * T)
    return np.concatenate([[a], u / T, [-1.0 / T]])


def discrete_maxwellian(vgrid: VelocityGrid, N: float, P, E: float, guess: np.ndarray | None = None,
                        tol: float = 1e-12, max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Exponential-family distribution with the given discrete moments.

    Newton's method on the convex dual ``sum w exp(lam . psi) - lam . target``
    with backtracking.  Returns ``(f_eq, coefficients)``.
    """
    P = np.atleast_1d(np.asarray(P, dtype=float))
    psi = vgrid.collision_invariants
    w = vgrid.weights
    target = np.concatenate([[N], P, [E]])
    scale = np.abs(target).max()
    lam = _initial_coeffs(N, P, E, vgrid.dimension) if guess is None else np.array(guess, dtype=float)

    def dual(l):
        return float(w @ np.exp(psi @ l)) - float(l @ target)

    prev = np.inf
    for _ in range(max_iter):
        f = np.exp(psi @ lam)
        grad = (w * f) @ psi - target
        err = np.abs(grad).max() / scale
        # once within tolerance keep polishing while Newton still gains a factor 2
        if err <= tol and (err <= 1e-16 or err > 0.5 * prev):
            return f, lam
        prev = err
        H = psi.T @ ((w * f)[:, None] * psi)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            raise MomentMatchingError("singular Hessian while matching the Maxwellian") from None
        if err < 1e-6:
            lam = lam - step
            continue
        g0 = dual(lam)
        slope = float(grad @ step)
        t = 1.0
        while dual(lam - t * step) > g0 - 1e-4 * t * slope:
            t *= 0.5
            if t < 1e-12:
                raise MomentMatchingError("line search failed while matching the Maxwellian")
        lam = lam - t * step
    raise MomentMatchingError(f"moment matching did not converge (relative error {err:.3g}); grid too narrow?")


def equilibrium_of(s: KineticState) -> KineticState:
    N, P, E = moments(s)
    f_eq, lam = discrete_maxwellian(s.vgrid, N, P, E, guess=s.eq_coeffs)
    return KineticState(s.vgrid, f_eq, lam)


def step_bgk(s: KineticState, tau: float, dt: float) -> KineticState:
    """``f' = (1 - dt/tau) f + (dt/tau) f_eq[f]``; requires ``0 < dt <= tau``."""
    if not (dt > 0 and tau > 0):
        raise ValueError("dt and tau must be positive")
    if dt > tau:
        raise ValueError("dt > tau breaks the convex combination (positivity and the H-theorem)")
    eq = equilibrium_of(s)
    a = dt / tau
    f = eq.f if a == 1.0 else (1.0 - a) * s.f + a * eq.f
    return KineticState(s.vgrid, f, eq.eq_coeffs)


def evolve_bgk(s: KineticState, tau: float, dt: float, n_steps: int) -> list[KineticState]:
    trace = [s]
    for _ in range(n_steps):
        s = step_bgk(s, tau, dt)
        trace.append(s)
    return trace


def h_theorem_audit(trace: list[KineticState], slack: float = 1e-12) -> dict:
    """Per-step entropy increments and conservation drifts along a BGK trace."""
    S = np.array([s.entropy() for s in trace])
    mom = [moments(s) for s in trace]
    N = np.array([m[0] for m in mom])
    P = np.array([m[1] for m in mom])
    E = np.array([m[2] for m in mom])
    dS = np.diff(S)
    p_scale = max(float(np.sqrt(2 * N[0] * E[0])), 1e-300)
    drifts = dict(
        N=float(np.max(np.abs(N - N[0])) / N[0]),
        P=float(np.max(np.abs(P - P[0]))) / p_scale,
        E=float(np.max(np.abs(E - E[0])) / E[0]),
    )
    if dS.size == 0 or np.all(np.abs(dS) <= slack):
        verdict = "stationary"
    elif dS.min() >= -slack:
        verdict = "monotone"
    else:
        verdict = "non-monotone"
    return dict(
        S_gas=S,
        dS=dS,
        min_dS=float(dS.min()) if dS.size else 0.0,
        max_dS=float(dS.max()) if dS.size else 0.0,
        drift=drifts,
        verdict=verdict,
    )
