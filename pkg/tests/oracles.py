"""Reference computations that share no code path with the package."""
import itertools
import math

import mpmath
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


def dense_laplacian_1d(n, h, left=None, right=None):
    """Matrix and offset of the 1D ghost-cell Laplacian, built entry by entry.

    ``left``/``right`` are Dirichlet values, or ``None`` for zero flux.
    """
    A = np.zeros((n, n))
    c = np.zeros(n)
    for i in range(n):
        A[i, i] = -2.0
        for j, b in ((i - 1, left), (i + 1, right)):
            if 0 <= j < n:
                A[i, j] += 1.0
            elif b is None:
                A[i, i] += 1.0          # mirror ghost
            else:
                A[i, i] -= 1.0          # ghost = 2b - u_edge
                c[i] += 2.0 * b
    return A / h**2, c / h**2


def poisson_cramer(u, v):
    return v * math.log(v / u) - v + u


def increment_mp(u, v, sigma, dps=30):
    """``int_u^v log(sigma(z)/sigma(u)) dz`` in arbitrary precision."""
    with mpmath.workdps(dps):
        su = sigma(mpmath.mpf(u))
        return float(mpmath.quad(lambda z: mpmath.log(sigma(z) / su), [u, v]))


def log_phase_volume_loop(counts, volumes):
    return sum(n * math.log(w) - math.lgamma(n + 1) for n, w in zip(counts, volumes))


def zrp_generator_stationary(L, g, z_left, z_right, cap):
    """Exact stationary law of the boundary-driven chain truncated at ``cap`` per site.

    Site ``i`` fires at rate ``g(n_i)``, each direction with probability 1/2;
    reservoirs inject at ``z/2``.  Returns ``p`` indexed by ``itertools.product``.
    """
    states = list(itertools.product(range(cap + 1), repeat=L))
    index = {s: k for k, s in enumerate(states)}
    rows, cols, vals = [], [], []

    def add(a, b, r):
        if r > 0 and b in index:
            rows.append(a)
            cols.append(index[b])
            vals.append(r)

    for k, s in enumerate(states):
        s = list(s)
        for i in range(L):
            if s[i] > 0:
                for j in (i - 1, i + 1):
                    t = s.copy()
                    t[i] -= 1
                    if 0 <= j < L:
                        t[j] += 1
                    add(k, tuple(t), 0.5 * g(s[i]))
        for i, z in ((0, z_left), (L - 1, z_right)):
            t = s.copy()
            t[i] += 1
            add(k, tuple(t), 0.5 * z)
    n = len(states)
    Q = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    # replace one balance equation by normalisation
    M = Q.T.tolil()
    M[0, :] = np.ones(n)
    rhs = np.zeros(n)
    rhs[0] = 1.0
    p = spla.spsolve(M.tocsc(), rhs)
    return states, p


def product_measure(states, fugacities, g):
    """Product law with site weights ``z^n / (g(1)...g(n))`` on the listed states."""
    cap = max(max(s) for s in states)
    logfact = np.concatenate([[0.0], np.cumsum([math.log(g(k)) for k in range(1, cap + 1)])])
    w = np.array([sum(n * math.log(z) - logfact[n] for n, z in zip(s, fugacities)) for s in states])
    w = np.exp(w - w.max())
    return w / w.sum()
