"""Compiled per-node log-likelihood kernels.

Fields passed in never include the node parameter; Ising kernels add
``theta`` themselves and the Gaussian kernels scale by ``theta**2``.
"""

import math

import numpy as np
from numba import njit

LOG_2PI_HALF = 0.5 * math.log(2.0 * math.pi)


@njit(cache=True, inline="always")
def _log_norm(h, zero):
    a = abs(h)
    if zero:
        # log(1 + 2 cosh h)
        return a + math.log(1.0 + math.exp(-a) + math.exp(-2.0 * a))
    # log(2 cosh h)
    return a + math.log1p(math.exp(-2.0 * a))


@njit(cache=True)
def ising_node(x, f, theta, zero):
    s = 0.0
    for t in range(x.shape[0]):
        h = f[t] + theta
        s += x[t] * h - _log_norm(h, zero)
    return s


@njit(cache=True)
def ising_node_shift(x, f, src, theta, dw, zero):
    """Change of one node's term when its field moves by ``dw * src``."""
    s = 0.0
    for t in range(x.shape[0]):
        d = dw * src[t]
        if d != 0.0:
            h = f[t] + theta
            s += x[t] * d - _log_norm(h + d, zero) + _log_norm(h, zero)
    return s


@njit(cache=True)
def ising_node_theta(x, f, theta_old, theta_new, zero):
    s = 0.0
    d = theta_new - theta_old
    for t in range(x.shape[0]):
        h = f[t] + theta_old
        s += x[t] * d - _log_norm(h + d, zero) + _log_norm(h, zero)
    return s


@njit(cache=True)
def ising_entry_delta(T, F, S, theta, i, j, dw, zero):
    return ising_node_shift(T[i], F[i], S[j], theta[i], dw, zero) + ising_node_shift(
        T[j], F[j], S[i], theta[j], dw, zero
    )


@njit(cache=True)
def ising_line(T_rows, F_rows, D_rows, thetas, x, zero):
    """Sum over rows of ``ising_node`` at fields ``F + x * D``."""
    s = 0.0
    for r in range(T_rows.shape[0]):
        th = thetas[r]
        for t in range(T_rows.shape[1]):
            h = F_rows[r, t] + x * D_rows[r, t] + th
            s += T_rows[r, t] * h - _log_norm(h, zero)
    return s


@njit(cache=True)
def ising_pair_prep(T, F, S, theta, i, j, zero):
    """Per-sample constants of the entry profile of pair ``(i, j)``.

    With ``c = exp(dw)`` each sample with nonzero source contributes
    ``-log(z + A c + B / c)`` (``z`` only for the zero-state model) up to a
    constant, so one profile evaluation costs a single log per sample.
    """
    M = T.shape[1]
    A = np.empty(2 * M)
    B = np.empty(2 * M)
    Z = np.empty(2 * M)
    lin = 0.0
    n = 0
    for side in range(2):
        a = i if side == 0 else j
        b = j if side == 0 else i
        for t in range(M):
            s = S[b, t]
            if s == 0.0:
                continue
            h = F[a, t] + theta[a]
            ah = abs(h)
            P = math.exp(h - ah)
            Q = math.exp(-h - ah)
            if s > 0:
                A[n] = P
                B[n] = Q
            else:
                A[n] = Q
                B[n] = P
            Z[n] = math.exp(-ah) if zero else 0.0
            lin += T[a, t] * s
            n += 1
    return A[:n], B[:n], Z[:n], lin


@njit(cache=True)
def ising_pair_profile(A, B, Z, lin, dw):
    """Entry log-likelihood at shift ``dw`` up to a constant (binary sources)."""
    c = math.exp(dw)
    ci = 1.0 / c
    s = 0.0
    for t in range(A.shape[0]):
        s += math.log(Z[t] + A[t] * c + B[t] * ci)
    return lin * dw - s


@njit(cache=True)
def gauss_pair_prep(X, F, theta, i, j):
    """Coefficients ``(a1, a2)`` of the exact quadratic entry profile."""
    ti = theta[i] * theta[i]
    tj = theta[j] * theta[j]
    a1 = 0.0
    sj2 = 0.0
    si2 = 0.0
    for t in range(X.shape[1]):
        xi = X[i, t]
        xj = X[j, t]
        a1 += (xi + ti * F[i, t]) * xj + (xj + tj * F[j, t]) * xi
        sj2 += xj * xj
        si2 += xi * xi
    return a1, ti * sj2 + tj * si2


@njit(cache=True)
def ising_line_prep(T_rows, F_rows, D_rows, thetas, zero):
    """Constants for evaluating ``ising_line`` with integer-valued ``D``.

    Returns flattened ``(P, Q, Z, Di, lin, const, dmax)`` such that the line
    value at ``x`` is ``const + lin * x - sum log(Z + P c^Di + Q c^-Di)``
    with ``c = exp(x)``.
    """
    R, M = T_rows.shape
    n = R * M
    P = np.empty(n)
    Q = np.empty(n)
    Z = np.empty(n)
    Di = np.empty(n, dtype=np.int64)
    lin = 0.0
    const = 0.0
    dmax = 0
    k = 0
    for r in range(R):
        th = thetas[r]
        for t in range(M):
            h = F_rows[r, t] + th
            ah = abs(h)
            d = int(round(D_rows[r, t]))
            P[k] = math.exp(h - ah)
            Q[k] = math.exp(-h - ah)
            Z[k] = math.exp(-ah) if zero else 0.0
            Di[k] = d
            if abs(d) > dmax:
                dmax = abs(d)
            lin += T_rows[r, t] * d
            const += T_rows[r, t] * h - ah
            k += 1
    return P, Q, Z, Di, lin, const, dmax


@njit(cache=True)
def ising_line_eval(P, Q, Z, Di, lin, const, dmax, x):
    pw = np.empty(2 * dmax + 1)
    for d in range(-dmax, dmax + 1):
        pw[d + dmax] = math.exp(x * d)
    s = 0.0
    for k in range(P.shape[0]):
        d = Di[k] + dmax
        s += math.log(Z[k] + P[k] * pw[d] + Q[k] * pw[2 * dmax - d])
    return const + lin * x - s


@njit(cache=True)
def gauss_line_prep(X_rows, F_rows, D_rows, thetas):
    """Coefficients ``(c0, c1, c2)`` of the exact quadratic Gaussian line."""
    c0 = 0.0
    c1 = 0.0
    c2 = 0.0
    for r in range(X_rows.shape[0]):
        t2 = thetas[r] * thetas[r]
        for t in range(X_rows.shape[1]):
            a = X_rows[r, t] + t2 * F_rows[r, t]
            b = t2 * D_rows[r, t]
            c0 -= a * a / (2.0 * t2)
            c1 -= a * b / t2
            c2 -= b * b / (2.0 * t2)
        c0 -= X_rows.shape[1] * (LOG_2PI_HALF + math.log(thetas[r]))
    return c0, c1, c2


@njit(cache=True)
def gauss_node(x, f, theta):
    t2 = theta * theta
    s = 0.0
    for t in range(x.shape[0]):
        r = x[t] + t2 * f[t]
        s += r * r
    return -s / (2.0 * t2) - x.shape[0] * (LOG_2PI_HALF + math.log(theta))


@njit(cache=True)
def gauss_node_shift(x, f, src, theta, dw):
    t2 = theta * theta
    s = 0.0
    for t in range(x.shape[0]):
        r0 = x[t] + t2 * f[t]
        r1 = r0 + t2 * dw * src[t]
        s += r1 * r1 - r0 * r0
    return -s / (2.0 * t2)


@njit(cache=True)
def gauss_entry_delta(X, F, theta, i, j, dw):
    return gauss_node_shift(X[i], F[i], X[j], theta[i], dw) + gauss_node_shift(
        X[j], F[j], X[i], theta[j], dw
    )


@njit(cache=True)
def gauss_line(X_rows, F_rows, D_rows, thetas, x):
    s = 0.0
    for r in range(X_rows.shape[0]):
        th = thetas[r]
        t2 = th * th
        acc = 0.0
        for t in range(X_rows.shape[1]):
            v = X_rows[r, t] + t2 * (F_rows[r, t] + x * D_rows[r, t])
            acc += v * v
        s += -acc / (2.0 * t2) - X_rows.shape[1] * (LOG_2PI_HALF + math.log(th))
    return s


def warmup():
    """Compile all kernels once (cached to disk afterwards)."""
    x = np.array([[1.0, -1.0], [1.0, 1.0]])
    f = np.zeros((2, 2))
    th = np.ones(2)
    for zero in (False, True):
        ising_node(x[0], f[0], 0.0, zero)
        ising_node_theta(x[0], f[0], 0.0, 0.1, zero)
        ising_entry_delta(x, f, x, th, 0, 1, 0.1, zero)
        ising_line(x, f, x, th, 0.1, zero)
    for zero in (False, True):
        A, B, Z, lin = ising_pair_prep(x, f, x, th, 0, 1, zero)
        ising_pair_profile(A, B, Z, lin, 0.1)
        L = ising_line_prep(x, f, x, th, zero)
        ising_line_eval(L[0], L[1], L[2], L[3], L[4], L[5], L[6], 0.1)
    gauss_pair_prep(x, f, th, 0, 1)
    gauss_line_prep(x, f, x, th)
    gauss_node(x[0], f[0], 1.0)
    gauss_entry_delta(x, f, th, 0, 1, 0.1)
    gauss_line(x, f, x, th, 0.1)
