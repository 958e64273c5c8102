"""Independent reference computations used only by the tests.

Everything here works from plain value evaluations and central finite
differences, with explicit loops instead of the package's einsum paths.
"""

import numpy as np

from fieldkind.expr import evaluate


def fd_grad(fun, p, h):
    p = np.asarray(p, dtype=float)
    out = np.zeros(len(p))
    for k in range(len(p)):
        e = np.zeros(len(p))
        e[k] = h
        out[k] = (fun(p + e) - fun(p - e)) / (2 * h)
    return out


def fd_hess(fun, p, h):
    p = np.asarray(p, dtype=float)
    n = len(p)
    out = np.zeros((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        out[:, j] = (fd_grad(fun, p + e, h) - fd_grad(fun, p - e, h)) / (2 * h)
    return out


def richardson(fd, fun, p, h):
    """Fourth-order estimate from steps h and h/2 of a second-order stencil."""
    a, b = fd(fun, p, h), fd(fun, p, h / 2)
    return (4 * b - a) / 3


def metric_fn(m):
    n = m.dim

    def g(p):
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(n):
                out[i, j] = float(evaluate(m.metric[i][j], p))
        return out

    return g


def christoffel_fd(m, p, h=1e-5):
    """Gamma^i_jk from finite differences of g plugged into the textbook formula."""
    g = metric_fn(m)
    n = m.dim
    p = np.asarray(p, dtype=float)
    dg = np.zeros((n, n, n))  # dg[i, j, k] = d_k g_ij
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        dg[:, :, k] = (g(p + e) - g(p - e)) / (2 * h)
    ginv = np.linalg.inv(g(p))
    gam = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                s = 0.0
                for l in range(n):
                    s += 0.5 * ginv[i, l] * (dg[l, k, j] + dg[l, j, k] - dg[j, k, l])
                gam[i, j, k] = s
    return gam


def riemann_fd(m, p, h=1e-4):
    """R^i_jkl = d_k G^i_lj - d_l G^i_kj + G^i_km G^m_lj - G^i_lm G^m_kj with FD Christoffels."""
    n = m.dim
    p = np.asarray(p, dtype=float)
    gam = christoffel_fd(m, p)
    dgam = np.zeros((n, n, n, n))  # dgam[i, j, k, l] = d_l G^i_jk
    for l in range(n):
        e = np.zeros(n)
        e[l] = h
        dgam[..., l] = (christoffel_fd(m, p + e) - christoffel_fd(m, p - e)) / (2 * h)
    R = np.zeros((n, n, n, n))
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    s = dgam[i, l, j, k] - dgam[i, k, j, l]
                    for mm in range(n):
                        s += gam[i, k, mm] * gam[mm, l, j] - gam[i, l, mm] * gam[mm, k, j]
                    R[i, j, k, l] = s
    return R


def field_fn(f):
    return lambda p: np.array([float(evaluate(c, p)) for c in f.components])


def lie_derivative_metric_fd(m, f, p, h=1e-5):
    """(L_X g)_jk = X^l d_l g_jk + g_lk d_j X^l + g_jl d_k X^l, all by finite differences."""
    n = m.dim
    g = metric_fn(m)
    X = field_fn(f)
    p = np.asarray(p, dtype=float)
    x = X(p)
    dX = np.zeros((n, n))  # dX[l, j] = d_j X^l
    dg = np.zeros((n, n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        dX[:, j] = (X(p + e) - X(p - e)) / (2 * h)
        dg[:, :, j] = (g(p + e) - g(p - e)) / (2 * h)
    g0 = g(p)
    K = np.zeros((n, n))
    for j in range(n):
        for k in range(n):
            s = 0.0
            for l in range(n):
                s += x[l] * dg[j, k, l] + g0[l, k] * dX[l, j] + g0[j, l] * dX[l, k]
            K[j, k] = s
    return K
