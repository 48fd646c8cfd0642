"""Normal model with mean ``m`` and precision ``s`` and the prior family

    varphi(m, s | lambda, mu, epsilon) = exp(-(lambda s m^2 + epsilon s) / 2) s^mu

relative to the flat base prior ``varphi_0 = 1`` (``lambda = mu = epsilon = 0``).

``log Z_n(X, alpha)``, the log of the integral of
``p(X|w)^alpha prod_i p(X_i|w) varphi(w)`` over ``w``, is available in
closed form. With ``a = alpha + lambda + n``, ``b = alpha X + sum_j X_j``,
``c = mu + (alpha + n + 1) / 2`` and
``d = (alpha X^2 + sum_j X_j^2 - b^2 / a + epsilon) / 2``:

    log Z = -(n + alpha - 1)/2 log(2 pi) - log(a)/2 - c log(d) + log Gamma(c)
"""
import math
from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..criteria import ExactLogZ
from ..errors import OutOfDomain
from ..model import ModelFamily, PriorFamily, SelfExpectations

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class NormalHyper:
    lam: float = 0.0
    mu: float = 0.0
    eps: float = 0.0

    labels = ("lambda", "mu", "epsilon")

    @property
    def values(self):
        return np.array([self.lam, self.mu, self.eps])

    @property
    def proper(self):
        return self.lam > 0 and self.mu > -0.5 and self.eps > 0

    @classmethod
    def from_values(cls, values):
        lam, mu, eps = (float(v) for v in values)
        return cls(lam, mu, eps)


BASE_HYPER = NormalHyper(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class NormalSuffStats:
    n: int
    sum_x: float
    sum_x2: float

    @classmethod
    def from_data(cls, x):
        x = np.asarray(x, dtype=float).ravel()
        return cls(x.size, float(x.sum()), float(x @ x))

    def without(self, x):
        """Statistics after removing one observation."""
        return NormalSuffStats(self.n - 1, self.sum_x - x, self.sum_x2 - x * x)


def _check(val):
    if np.any(np.isnan(val)):
        raise OutOfDomain("Z_n(X, alpha) is an improper integral for these arguments")
    return val


def normal_log_Z(stats, h, extra=None, alpha=0.0):
    """``log Z_n(extra, alpha)``; ``extra`` may be an array of points."""
    if extra is None:
        extra, alpha = 0.0, 0.0
    extra = np.asarray(extra, dtype=float)
    val = _check(
        _kernels.normal_log_z_numpy(
            stats.n, stats.sum_x, stats.sum_x2, extra, float(alpha), h.lam, h.mu, h.eps
        )
    )
    return float(val) if val.ndim == 0 else val


def normal_log_Z_alpha_derivatives(stats, h, extra):
    """First and second alpha-derivatives of ``log Z_n(extra, alpha)`` at zero."""
    normal_log_Z(stats, h)  # domain check
    return _kernels.normal_alpha_derivatives_numpy(
        stats.n, stats.sum_x, stats.sum_x2, np.asarray(extra, dtype=float), h.lam, h.mu, h.eps
    )


def normal_posterior_params(stats, h):
    """``(a, b, c, d)``: ``s ~ Gamma(c, rate=d)`` and ``m | s ~ N(b/a, 1/(a s))``."""
    a = h.lam + stats.n
    b = stats.sum_x
    c = h.mu + 0.5 * (stats.n + 1)
    d = 0.5 * (stats.sum_x2 - b * b / a + h.eps) if a > 0 else -1.0
    if a <= 0 or c <= 0 or d <= 0:
        raise OutOfDomain("posterior is improper")
    return a, b, c, d


def normal_posterior_mean(stats, h):
    a, b, c, d = normal_posterior_params(stats, h)
    return b / a, c / d


def sample_posterior(stats, h, size, rng):
    a, b, c, d = normal_posterior_params(stats, h)
    s = rng.gamma(c, 1.0 / d, size=size)
    m = rng.normal(b / a, 1.0 / np.sqrt(a * s))
    return np.column_stack([m, s])


def normal_log_normalizer(h):
    """Log of the integral of the unnormalized prior; ``None`` unless proper."""
    if not h.proper:
        return None
    return (
        0.5 * math.log(2 * math.pi / h.lam)
        - (h.mu + 0.5) * math.log(h.eps / 2)
        + math.lgamma(h.mu + 0.5)
    )


def generate_normal_data(true_mean, true_sd, n, rng):
    if n < 1:
        raise ValueError("n must be positive")
    return rng.normal(true_mean, true_sd, size=n)


class NormalModel(ModelFamily):
    """``p(x|m, s) = sqrt(s / 2 pi) exp(-s (x - m)^2 / 2)``; ``w = (m, s)``."""

    param_dim = 2

    def in_domain(self, w):
        return bool(np.all(np.isfinite(w)) and w[1] > 0)

    def default_init(self, data):
        x = np.asarray(data, dtype=float)
        var = x.var()
        return np.array([x.mean(), 1.0 / var if var > 0 else 1.0])

    def log_density(self, data, w):
        m, s = w
        z = np.asarray(data, dtype=float) - m
        return 0.5 * (np.log(s) - LOG_2PI) - 0.5 * s * z * z

    def log_density_matrix(self, data, draws):
        draws = np.atleast_2d(draws)
        m = draws[:, :1]
        s = draws[:, 1:]
        z = np.asarray(data, dtype=float)[None, :] - m
        with np.errstate(invalid="ignore", divide="ignore"):
            return 0.5 * (np.log(s) - LOG_2PI) - 0.5 * s * z * z

    def grad_log_density(self, data, w):
        m, s = w
        z = np.asarray(data, dtype=float) - m
        return np.column_stack([s * z, 0.5 / s - 0.5 * z * z])

    def hess_log_density(self, data, w):
        m, s = w
        z = np.asarray(data, dtype=float) - m
        out = np.empty((z.size, 2, 2))
        out[:, 0, 0] = -s
        out[:, 0, 1] = out[:, 1, 0] = z
        out[:, 1, 1] = -0.5 / s**2
        return out

    def third_log_density(self, data, w):
        _, s = w
        n = np.size(data)
        out = np.zeros((n, 2, 2, 2))
        out[:, 0, 0, 1] = out[:, 0, 1, 0] = out[:, 1, 0, 0] = -1.0
        out[:, 1, 1, 1] = 1.0 / s**3
        return out

    def self_expectations(self, w, data=None):
        _, s = w
        L3 = np.zeros((2, 2, 2))
        L3[0, 0, 1] = L3[0, 1, 0] = L3[1, 0, 0] = 1.0
        L3[1, 1, 1] = -1.0 / s**3
        F21 = np.zeros((2, 2, 2))
        F21[0, 1, 0] = F21[1, 0, 0] = 1.0
        return SelfExpectations(L2=np.diag([s, 0.5 / s**2]), L3=L3, F21=F21)

    def sample(self, w, size, rng, data=None):
        m, s = w
        return rng.normal(m, 1.0 / np.sqrt(s), size=size)


class NormalPrior(PriorFamily):
    """The ``(lambda, mu, epsilon)`` family over a flat base prior."""

    hyper_dim = 3
    labels = NormalHyper.labels

    @property
    def base_hyper(self):
        return BASE_HYPER

    def log_ratio(self, h, w):
        m, s = w
        return -0.5 * (h.lam * s * m * m + h.eps * s) + h.mu * math.log(s)

    def grad_log_ratio(self, h, w):
        m, s = w
        return np.array([-h.lam * s * m, -0.5 * h.lam * m * m + h.mu / s - 0.5 * h.eps])

    def hess_log_ratio(self, h, w):
        m, s = w
        return np.array([[-h.lam * s, -h.lam * m], [-h.lam * m, -h.mu / s**2]])

    def grid_derivatives(self, values, w):
        """Stacked gradients ``(G, 2)`` and Hessians ``(G, 2, 2)``; ``values`` is ``(G, 3)``."""
        m, s = w
        lam, mu, eps = np.asarray(values, dtype=float).T
        g = np.column_stack([-lam * s * m, -0.5 * lam * m * m + mu / s - 0.5 * eps])
        H = np.empty((lam.size, 2, 2))
        H[:, 0, 0] = -lam * s
        H[:, 0, 1] = H[:, 1, 0] = -lam * m
        H[:, 1, 1] = -mu / s**2
        return g, H

    def log_normalizer(self, h):
        return normal_log_normalizer(h)


class NormalEvaluator(ExactLogZ):
    """Closed-form posterior integrals for one dataset and one hyperparameter."""

    def __init__(self, data, h):
        self.data = np.asarray(data, dtype=float).ravel()
        self.stats = NormalSuffStats.from_data(self.data)
        self.h = h
        self.n = self.stats.n
        self._log_z0 = normal_log_Z(self.stats, h)

    def log_z(self, points=None, alpha=0.0):
        if points is None:
            return self._log_z0
        return normal_log_Z(self.stats, self.h, points, alpha)

    def alpha_derivatives(self, points):
        return normal_log_Z_alpha_derivatives(self.stats, self.h, points)

    def posterior_mean(self):
        return np.array(normal_posterior_mean(self.stats, self.h))

    def sample_posterior(self, size, rng):
        return sample_posterior(self.stats, self.h, size, rng)


def model_family_normal():
    return NormalModel()


def normal_prior_family():
    return NormalPrior()


def predictive_sampler(data, h=BASE_HYPER):
    """Sampler for size-``n`` sets from the posterior predictive of ``data``."""
    stats = NormalSuffStats.from_data(data)

    def draw(rng, n):
        m, s = sample_posterior(stats, h, 1, rng)[0]
        return rng.normal(m, 1.0 / math.sqrt(s), size=n)

    return draw

