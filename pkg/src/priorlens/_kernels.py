"""Per-replication grid kernels for the two conjugate models.

Every kernel evaluates, for one dataset and a whole hyperparameter grid, the
log normalizing constants ``log Z_n(X_i, alpha)`` needed by CV, WAIC and DIC.
Each exists twice: ``*_loops`` (explicit loops, compiled by numba when it is
available) and ``*_numpy`` (broadcasting). The public names pick one of the
two according to :data:`priorlens._accel.USE_NUMBA`.

Grid-term arrays have columns ``[log_z0, cv, training_error,
functional_variance, dic]``; entries are NaN where an integral is improper.
"""
import math

import numpy as np
from scipy import special

from ._accel import USE_NUMBA, njit

LOG_2PI = math.log(2.0 * math.pi)
N_TERMS = 5


@njit
def digamma(x):
    result = 0.0
    while x < 10.0:
        result -= 1.0 / x
        x += 1.0
    f = 1.0 / (x * x)
    series = f * (1.0 / 12 - f * (1.0 / 120 - f * (1.0 / 252 - f * (1.0 / 240 - f / 132))))
    return result + math.log(x) - 0.5 / x - series


@njit
def trigamma(x):
    result = 0.0
    while x < 10.0:
        result += 1.0 / (x * x)
        x += 1.0
    f = 1.0 / (x * x)
    series = 1.0 / 6 - f * (1.0 / 30 - f * (1.0 / 42 - f * (1.0 / 30 - f * 5.0 / 66)))
    return result + 1.0 / x + 0.5 * f + series * f / x


# ---------------------------------------------------------------- normal model


@njit
def _normal_log_z(n, s1, s2, x, alpha, lam, mu, eps):
    a = alpha + lam + n
    b = alpha * x + s1
    c = mu + 0.5 * (alpha + n + 1.0)
    if a <= 0.0 or c <= 0.0:
        return np.nan
    d = 0.5 * (alpha * x * x + s2 - b * b / a + eps)
    if d <= 0.0:
        return np.nan
    return -0.5 * (n + alpha - 1.0) * LOG_2PI - 0.5 * math.log(a) - c * math.log(d) + math.lgamma(c)


@njit
def normal_grid_terms_loops(x, lam, mu, eps):
    n = x.shape[0]
    s1 = 0.0
    s2 = 0.0
    for i in range(n):
        s1 += x[i]
        s2 += x[i] * x[i]
    G = lam.shape[0]
    out = np.empty((G, N_TERMS))
    for g in range(G):
        z0 = _normal_log_z(n, s1, s2, 0.0, 0.0, lam[g], mu[g], eps[g])
        a = lam[g] + n
        c = mu[g] + 0.5 * (n + 1.0)
        d = 0.5 * (s2 - s1 * s1 / a + eps[g])
        if not (a > 0.0 and c > 0.0 and d > 0.0):
            out[g, :] = np.nan
            continue
        m_bar = s1 / a
        s_bar = c / d
        psi1 = 0.5 * digamma(c)
        psi2 = 0.25 * trigamma(c)
        cv = 0.0
        t = 0.0
        v = 0.0
        dic = 0.0
        for i in range(n):
            xi = x[i]
            cv += _normal_log_z(n, s1, s2, xi, -1.0, lam[g], mu[g], eps[g]) - z0
            t -= _normal_log_z(n, s1, s2, xi, 1.0, lam[g], mu[g], eps[g]) - z0
            u = xi - m_bar
            dp = 0.5 * u * u / d
            dpp = -u * u / (a * d)
            l1 = -0.5 * LOG_2PI - 0.5 / a - 0.5 * math.log(d) - c * dp + psi1
            l2 = 0.5 / (a * a) - dp - c * dpp + c * dp * dp + psi2
            v += l2
            logp = 0.5 * (math.log(s_bar) - LOG_2PI) - 0.5 * s_bar * u * u
            dic += -2.0 * l1 + logp
        out[g, 0] = z0
        out[g, 1] = cv / n
        out[g, 2] = t / n
        out[g, 3] = v
        out[g, 4] = dic / n
    return out


@njit
def normal_log_predictive_loops(points, x, lam, mu, eps):
    n = x.shape[0]
    s1 = 0.0
    s2 = 0.0
    for i in range(n):
        s1 += x[i]
        s2 += x[i] * x[i]
    G = lam.shape[0]
    K = points.shape[0]
    out = np.empty((G, K))
    for g in range(G):
        z0 = _normal_log_z(n, s1, s2, 0.0, 0.0, lam[g], mu[g], eps[g])
        for k in range(K):
            out[g, k] = _normal_log_z(n, s1, s2, points[k], 1.0, lam[g], mu[g], eps[g]) - z0
    return out


def normal_log_z_numpy(n, s1, s2, x, alpha, lam, mu, eps):
    """Broadcasting ``log Z_n(x, alpha)``; NaN where the integral is improper."""
    a = alpha + lam + n
    b = alpha * x + s1
    c = mu + 0.5 * (alpha + n + 1.0)
    d = 0.5 * (alpha * x * x + s2 - b * b / a + eps)
    ok = (a > 0) & (c > 0) & (d > 0)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = (
            -0.5 * (n + alpha - 1.0) * LOG_2PI
            - 0.5 * np.log(a)
            - c * np.log(d)
            + special.gammaln(c)
        )
    return np.where(ok, val, np.nan)


def normal_alpha_derivatives_numpy(n, s1, s2, x, lam, mu, eps):
    """First and second alpha-derivatives of ``log Z_n(x, alpha)`` at zero."""
    a = lam + n
    c = mu + 0.5 * (n + 1.0)
    d = 0.5 * (s2 - s1 * s1 / a + eps)
    u = x - s1 / a
    with np.errstate(invalid="ignore", divide="ignore"):
        dp = 0.5 * u * u / d
        dpp = -u * u / (a * d)
        l1 = -0.5 * LOG_2PI - 0.5 / a - 0.5 * np.log(d) - c * dp + 0.5 * special.digamma(c)
        l2 = 0.5 / (a * a) - dp - c * dpp + c * dp * dp + 0.25 * special.polygamma(1, c)
    return l1, l2


def normal_grid_terms_numpy(x, lam, mu, eps):
    x = np.asarray(x, dtype=float)
    n = x.size
    s1 = x.sum()
    s2 = x @ x
    lam = np.asarray(lam, dtype=float)[:, None]
    mu = np.asarray(mu, dtype=float)[:, None]
    eps = np.asarray(eps, dtype=float)[:, None]
    z0 = normal_log_z_numpy(n, s1, s2, 0.0, 0.0, lam, mu, eps)
    cv = np.mean(normal_log_z_numpy(n, s1, s2, x, -1.0, lam, mu, eps) - z0, axis=1)
    t = -np.mean(normal_log_z_numpy(n, s1, s2, x, 1.0, lam, mu, eps) - z0, axis=1)
    l1, l2 = normal_alpha_derivatives_numpy(n, s1, s2, x, lam, mu, eps)
    a = lam + n
    with np.errstate(invalid="ignore", divide="ignore"):
        s_bar = (mu + 0.5 * (n + 1.0)) / (0.5 * (s2 - s1 * s1 / a + eps))
        logp = 0.5 * (np.log(s_bar) - LOG_2PI) - 0.5 * s_bar * (x - s1 / a) ** 2
    dic = np.mean(-2.0 * l1 + logp, axis=1)
    out = np.column_stack([z0[:, 0], cv, t, l2.sum(axis=1), dic])
    out[~np.isfinite(z0[:, 0])] = np.nan
    return out


def normal_log_predictive_numpy(points, x, lam, mu, eps):
    x = np.asarray(x, dtype=float)
    n = x.size
    s1 = x.sum()
    s2 = x @ x
    lam = np.asarray(lam, dtype=float)[:, None]
    mu = np.asarray(mu, dtype=float)[:, None]
    eps = np.asarray(eps, dtype=float)[:, None]
    z0 = normal_log_z_numpy(n, s1, s2, 0.0, 0.0, lam, mu, eps)
    return normal_log_z_numpy(n, s1, s2, np.asarray(points, dtype=float), 1.0, lam, mu, eps) - z0


# ----------------------------------------------------------------- ridge model
#
# Inputs are expressed in the eigenbasis of the Gram matrix X^T X = Q diag(ev) Q^T:
# px = X Q (covariates), pb = Q^T X^T y. With e = ev + sigma^2 lam the matrix
# A(0) = X^T X + sigma^2 lam I is diagonal in that basis, and adding one point
# with weight alpha is a rank-one update.


@njit
def ridge_grid_terms_loops(ev, px, pb, y, yty, sigma, lam):
    n = px.shape[0]
    dim = px.shape[1]
    s2 = sigma * sigma
    log_s = math.log(2.0 * math.pi * s2)
    G = lam.shape[0]
    out = np.empty((G, N_TERMS))
    e = np.empty(dim)
    for g in range(G):
        logdet = 0.0
        quad0 = 0.0
        ok = True
        for k in range(dim):
            e[k] = ev[k] + s2 * lam[g]
            if e[k] <= 0.0:
                ok = False
                break
            logdet += math.log(e[k])
            quad0 += pb[k] * pb[k] / e[k]
        if not ok:
            out[g, :] = np.nan
            continue
        z0 = 0.5 * (dim - n) * log_s - 0.5 * logdet + 0.5 * (quad0 - yty) / s2
        cv = 0.0
        t = 0.0
        v_sum = 0.0
        dic = 0.0
        for i in range(n):
            v = 0.0
            r = 0.0
            for k in range(dim):
                v += px[i, k] * px[i, k] / e[k]
                r += px[i, k] * pb[k] / e[k]
            yi = y[i]
            if 1.0 - v <= 0.0:
                ok = False
                break
            # alpha = -1 and +1 rank-one updates
            for alpha in (-1.0, 1.0):
                q = quad0 + 2.0 * alpha * yi * r + alpha * alpha * yi * yi * v
                q -= alpha * (r + alpha * yi * v) ** 2 / (1.0 + alpha * v)
                z = (
                    0.5 * (dim - n - alpha) * log_s
                    - 0.5 * (logdet + math.log(1.0 + alpha * v))
                    + 0.5 * (q - alpha * yi * yi - yty) / s2
                )
                if alpha < 0.0:
                    cv += z - z0
                else:
                    t -= z - z0
            res = yi - r
            l1 = -0.5 * res * res / s2 - 0.5 * log_s - 0.5 * v
            v_sum += res * res * v / s2 + 0.5 * v * v
            logp = -0.5 * log_s - 0.5 * res * res / s2
            dic += -2.0 * l1 + logp
        if not ok:
            out[g, :] = np.nan
            continue
        out[g, 0] = z0
        out[g, 1] = cv / n
        out[g, 2] = t / n
        out[g, 3] = v_sum
        out[g, 4] = dic / n
    return out


@njit
def ridge_generalization_loss_loops(ev, pnodes, true_mean, pb, sigma, lam):
    dim = pnodes.shape[1]
    K = pnodes.shape[0]
    s2 = sigma * sigma
    G = lam.shape[0]
    out = np.empty(G)
    e = np.empty(dim)
    for g in range(G):
        for k in range(dim):
            e[k] = ev[k] + s2 * lam[g]
        total = 0.0
        for j in range(K):
            v = 0.0
            r = 0.0
            for k in range(dim):
                v += pnodes[j, k] * pnodes[j, k] / e[k]
                r += pnodes[j, k] * pb[k] / e[k]
            var = s2 * (1.0 + v)
            diff = true_mean[j] - r
            total += 0.5 * math.log(2.0 * math.pi * var) + 0.5 * (s2 + diff * diff) / var
        out[g] = total / K
    return out


def ridge_grid_terms_numpy(ev, px, pb, y, yty, sigma, lam):
    n, dim = px.shape
    s2 = sigma * sigma
    log_s = math.log(2.0 * math.pi * s2)
    e = ev[None, :] + s2 * np.asarray(lam, dtype=float)[:, None]  # (G, d)
    with np.errstate(invalid="ignore", divide="ignore"):
        logdet = np.log(e).sum(axis=1)
        quad0 = (pb**2 / e).sum(axis=1)
        z0 = 0.5 * (dim - n) * log_s - 0.5 * logdet + 0.5 * (quad0 - yty) / s2
        v = (px[None, :, :] ** 2 / e[:, None, :]).sum(axis=2)  # (G, n)
        r = ((px * pb)[None, :, :] / e[:, None, :]).sum(axis=2)

        def log_z(alpha):
            q = quad0[:, None] + 2 * alpha * y * r + alpha**2 * y**2 * v
            q = q - alpha * (r + alpha * y * v) ** 2 / (1.0 + alpha * v)
            return (
                0.5 * (dim - n - alpha) * log_s
                - 0.5 * (logdet[:, None] + np.log(1.0 + alpha * v))
                + 0.5 * (q - alpha * y**2 - yty) / s2
            )

        cv = np.mean(log_z(-1.0) - z0[:, None], axis=1)
        t = -np.mean(log_z(1.0) - z0[:, None], axis=1)
        res = y - r
        l1 = -0.5 * res**2 / s2 - 0.5 * log_s - 0.5 * v
        vsum = (res**2 * v / s2 + 0.5 * v**2).sum(axis=1)
        logp = -0.5 * log_s - 0.5 * res**2 / s2
        dic = np.mean(-2.0 * l1 + logp, axis=1)
    out = np.column_stack([z0, cv, t, vsum, dic])
    bad = np.any(e <= 0, axis=1) | np.any(v >= 1.0, axis=1)
    out[bad] = np.nan
    return out


def ridge_generalization_loss_numpy(ev, pnodes, true_mean, pb, sigma, lam):
    s2 = sigma * sigma
    e = ev[None, :] + s2 * np.asarray(lam, dtype=float)[:, None]
    v = (pnodes[None, :, :] ** 2 / e[:, None, :]).sum(axis=2)
    r = ((pnodes * pb)[None, :, :] / e[:, None, :]).sum(axis=2)
    var = s2 * (1.0 + v)
    diff = true_mean[None, :] - r
    return np.mean(0.5 * np.log(2 * np.pi * var) + 0.5 * (s2 + diff**2) / var, axis=1)


if USE_NUMBA:
    normal_grid_terms = normal_grid_terms_loops
    normal_log_predictive = normal_log_predictive_loops
    ridge_grid_terms = ridge_grid_terms_loops
    ridge_generalization_loss = ridge_generalization_loss_loops
else:
    normal_grid_terms = normal_grid_terms_numpy
    normal_log_predictive = normal_log_predictive_numpy
    ridge_grid_terms = ridge_grid_terms_numpy
    ridge_generalization_loss = ridge_generalization_loss_numpy
