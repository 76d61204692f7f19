"""Convergence-order estimates for resolution sweeps."""
from __future__ import annotations

import numpy as np


def observed_orders(resolutions, errors) -> np.ndarray:
    """``log(e_i / e_{i+1}) / log(n_{i+1} / n_i)`` for consecutive resolutions."""
    n = np.asarray(resolutions, dtype=float)
    e = np.abs(np.asarray(errors, dtype=float))
    if n.size != e.size or n.size < 2:
        raise ValueError("need matching resolutions and errors, at least two of each")
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.log(e[:-1] / e[1:]) / np.log(n[1:] / n[:-1])


def richardson_limit(resolutions, values) -> tuple[float, float]:
    """Extrapolated limit and order from the three finest points of a sweep.

    Assumes ``v(n) = v_inf + C n^-p`` with a common refinement ratio.
    """
    n = np.asarray(resolutions, dtype=float)[-3:]
    v = np.asarray(values, dtype=float)[-3:]
    if n.size < 3:
        raise ValueError("need three resolutions")
    r = n[1] / n[0]
    if not np.isclose(n[2] / n[1], r):
        raise ValueError("resolutions must share one refinement ratio")
    d1, d2 = v[1] - v[0], v[2] - v[1]
    if d2 == 0:
        return float(v[2]), np.inf
    p = np.log(d1 / d2) / np.log(r)
    return float(v[2] + d2 / (r**p - 1.0)), float(p)


def polynomial_limit(resolutions, values, powers=(2, 4)) -> float:
    """Limit ``v_inf`` of the model ``v(n) = v_inf + sum_k c_k n^-p_k``.

    Fixed powers suit schemes with a known error expansion, e.g. even
    powers of ``h`` for central differences with ``dt`` tied to ``h^2``.
    Least squares when there are more points than unknowns.
    """
    n = np.asarray(resolutions, dtype=float)
    v = np.asarray(values, dtype=float)
    if n.size != v.size or n.size < len(powers) + 1:
        raise ValueError("need one more resolution than correction terms")
    if np.unique(n).size != n.size:
        raise ValueError("resolutions must be distinct")
    A = np.column_stack([np.ones_like(n)] + [n ** -float(p) for p in powers])
    return float(np.linalg.lstsq(A, v, rcond=None)[0][0])
