"""Linear regression with known noise level and the ridge prior

    p(y|x, w) = N(y; w.x, sigma^2),   varphi(w|lambda) = exp(-lambda |w|^2 / 2),

relative to the flat base prior ``varphi_0 = 1`` (``lambda = 0``).

With ``A(alpha) = alpha X X^T + sigma^2 lambda I + sum_i X_i X_i^T`` and
``b(alpha) = alpha Y X + sum_i Y_i X_i``, adding the extra point is a rank-one
update of ``A(0)``; every quantity below is computed from
``v = X^T A(0)^-1 X`` and ``r = X^T A(0)^-1 b(0)``.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from ..criteria import ExactLogZ
from ..errors import ImproperPrior, SingularMatrix
from ..model import ModelFamily, PriorFamily, SelfExpectations

DEFAULT_SIGMA = 0.1


@dataclass(frozen=True)
class RidgeHyper:
    lam: float = 0.0

    labels = ("lambda",)

    @property
    def values(self):
        return np.array([self.lam])

    @property
    def proper(self):
        return self.lam > 0

    @classmethod
    def from_values(cls, values):
        (lam,) = (float(v) for v in np.atleast_1d(values))
        return cls(lam)


BASE_HYPER = RidgeHyper(0.0)


@dataclass(frozen=True)
class RegressionData:
    """Covariates ``x`` of shape ``(n, d)`` and responses ``y`` of shape ``(n,)``."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if x.shape[0] != y.shape[0] or y.ndim != 1:
            raise ValueError(f"x {x.shape} and y {y.shape} disagree on n")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self):
        return self.y.shape[0]

    def __getitem__(self, idx):
        if np.isscalar(idx) or isinstance(idx, (int, np.integer)):
            idx = [idx]
        return RegressionData(self.x[idx], self.y[idx])

    @property
    def dim(self):
        return self.x.shape[1]


@dataclass(frozen=True)
class RidgeSuffStats:
    n: int
    gram: np.ndarray
    xty: np.ndarray
    yty: float

    @classmethod
    def from_data(cls, data):
        return cls(len(data), data.x.T @ data.x, data.x.T @ data.y, float(data.y @ data.y))

    def without(self, x, y):
        x = np.asarray(x, dtype=float)
        return RidgeSuffStats(
            self.n - 1, self.gram - np.outer(x, x), self.xty - y * x, self.yty - y * y
        )

    @property
    def dim(self):
        return self.xty.size


class _Posterior:
    """Cholesky factor of ``A(0)`` plus the cached scalars of ``log Z_n``."""

    def __init__(self, stats, h, sigma):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        d = stats.dim
        A = stats.gram + sigma**2 * h.lam * np.eye(d)
        try:
            self.factor = cho_factor(A, lower=True)
        except LinAlgError as exc:
            raise SingularMatrix("A(0) is not positive definite") from exc
        diag = np.diag(self.factor[0])
        if np.min(diag) ** 2 <= 1e-12 * np.trace(A) / d:
            raise SingularMatrix("A(0) is numerically singular")
        self.stats, self.h, self.sigma, self.dim = stats, h, sigma, d
        self.logdet = 2.0 * float(np.sum(np.log(diag)))
        self.mean = cho_solve(self.factor, stats.xty)
        self.quad0 = float(stats.xty @ self.mean)

    def vr(self, x):
        """``v`` and ``r`` for covariate rows ``x`` of shape ``(k, d)``."""
        sol = cho_solve(self.factor, x.T)
        return np.einsum("kd,dk->k", x, sol), x @ self.mean

    def log_z(self, x=None, y=None, alpha=0.0):
        s2 = self.sigma**2
        log_s = math.log(2 * math.pi * s2)
        n, d = self.stats.n, self.dim
        if x is None:
            return 0.5 * (d - n) * log_s - 0.5 * self.logdet + 0.5 * (self.quad0 - self.stats.yty) / s2
        v, r = self.vr(x)
        one = 1.0 + alpha * v
        if np.any(one <= 0):
            raise SingularMatrix("A(alpha) is not positive definite")
        q = self.quad0 + 2 * alpha * y * r + alpha**2 * y**2 * v - alpha * (r + alpha * y * v) ** 2 / one
        return (
            0.5 * (d - n - alpha) * log_s
            - 0.5 * (self.logdet + np.log(one))
            + 0.5 * (q - alpha * y**2 - self.stats.yty) / s2
        )


def _log_prior_normalizer(lam, d):
    return 0.5 * d * math.log(2 * math.pi / lam)


def ridge_log_Z(stats, h, sigma, extra=None, alpha=0.0, normalized=True):
    """``log Z_n(X, Y, alpha)``.

    ``extra`` is ``(X, Y)`` with ``X`` of shape ``(d,)`` or ``(k, d)``.
    With ``normalized=True`` the prior is normalized to a density, which
    requires ``lambda > 0``; otherwise the raw ``exp(-lambda |w|^2/2)`` is used.
    """
    if normalized and not h.proper:
        raise ImproperPrior("the normalized ridge prior needs lambda > 0")
    post = _Posterior(stats, h, sigma)
    if extra is None:
        val = post.log_z()
    else:
        x, y = extra
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 1
        val = post.log_z(np.atleast_2d(x), np.atleast_1d(np.asarray(y, dtype=float)), float(alpha))
        if scalar:
            val = float(val[0])
    if normalized:
        val = val - _log_prior_normalizer(h.lam, stats.dim)
    return val


def ridge_posterior_mean(stats, h, sigma):
    """``A(0)^-1 b(0)``."""
    return _Posterior(stats, h, sigma).mean.copy()


def generate_ridge_data(a0, w0, sigma, n, rng):
    """``x ~ N(a0, I)``, ``y = w0.x + N(0, sigma^2)``."""
    if n < 1 or sigma <= 0:
        raise ValueError("need n >= 1 and sigma > 0")
    a0 = np.asarray(a0, dtype=float)
    x = a0 + rng.standard_normal((n, a0.size))
    y = x @ np.asarray(w0, dtype=float) + sigma * rng.standard_normal(n)
    return RegressionData(x, y)


class RidgeModel(ModelFamily):
    """Gaussian linear regression with fixed noise ``sigma``; ``w`` is the weight vector."""

    def __init__(self, sigma=DEFAULT_SIGMA, dim=None):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        self.sigma = float(sigma)
        self.param_dim = dim

    def default_init(self, data):
        return np.zeros(data.dim)

    def _resid(self, data, w):
        return data.y - data.x @ np.asarray(w, dtype=float)

    def log_density(self, data, w):
        r = self._resid(data, w)
        return -0.5 * math.log(2 * math.pi * self.sigma**2) - 0.5 * r * r / self.sigma**2

    def log_density_matrix(self, data, draws):
        r = data.y[None, :] - np.atleast_2d(draws) @ data.x.T
        return -0.5 * math.log(2 * math.pi * self.sigma**2) - 0.5 * r * r / self.sigma**2

    def grad_log_density(self, data, w):
        return self._resid(data, w)[:, None] * data.x / self.sigma**2

    def hess_log_density(self, data, w):
        return -np.einsum("ia,ib->iab", data.x, data.x) / self.sigma**2

    def third_log_density(self, data, w):
        n, d = data.x.shape
        return np.zeros((n, d, d, d))

    def self_expectations(self, w, data=None):
        """Expectations over ``y ~ p(y|x, w)`` with ``x`` running over the observed covariates.

        ``E[hess * grad]`` vanishes because the Hessian does not depend on ``y``.
        """
        if data is None:
            return None
        d = data.dim
        L2 = data.x.T @ data.x / (len(data) * self.sigma**2)
        return SelfExpectations(L2=L2, L3=np.zeros((d, d, d)), F21=np.zeros((d, d, d)))

    def sample(self, w, size, rng, data=None):
        if data is None:
            raise NotImplementedError("the regression model needs covariates to sample from")
        x = data.x[rng.integers(0, len(data), size=size)]
        return RegressionData(x, x @ np.asarray(w, dtype=float) + self.sigma * rng.standard_normal(size))


class RidgePrior(PriorFamily):
    """``exp(-lambda |w|^2 / 2)`` over a flat base prior in ``dim`` dimensions."""

    hyper_dim = 1
    labels = RidgeHyper.labels

    def __init__(self, dim):
        self.dim = int(dim)

    @property
    def base_hyper(self):
        return BASE_HYPER

    def log_ratio(self, h, w):
        w = np.asarray(w, dtype=float)
        return -0.5 * h.lam * float(w @ w)

    def grad_log_ratio(self, h, w):
        return -h.lam * np.asarray(w, dtype=float)

    def hess_log_ratio(self, h, w):
        return -h.lam * np.eye(np.size(w))

    def grid_derivatives(self, values, w):
        """Stacked gradients and Hessians; ``values`` is ``(G,)`` or ``(G, 1)``."""
        lam = np.asarray(values, dtype=float).reshape(-1)
        w = np.asarray(w, dtype=float)
        return -lam[:, None] * w[None, :], -lam[:, None, None] * np.eye(w.size)[None]

    def log_normalizer(self, h):
        if not h.proper:
            return None
        return _log_prior_normalizer(h.lam, self.dim)


class RidgeEvaluator(ExactLogZ):
    """Closed-form posterior integrals; ``log_z`` uses the unnormalized prior."""

    def __init__(self, data, h, sigma=DEFAULT_SIGMA):
        self.data = data
        self.stats = RidgeSuffStats.from_data(data)
        self.h = h
        self.sigma = float(sigma)
        self.n = self.stats.n
        self._post = _Posterior(self.stats, h, self.sigma)
        self._log_z0 = self._post.log_z()

    def log_z(self, points=None, alpha=0.0):
        if points is None:
            return self._log_z0
        return self._post.log_z(points.x, points.y, float(alpha))

    def alpha_derivatives(self, points):
        v, r = self._post.vr(points.x)
        s2 = self.sigma**2
        res2 = (points.y - r) ** 2
        l1 = -0.5 * res2 / s2 - 0.5 * math.log(2 * math.pi * s2) - 0.5 * v
        l2 = res2 * v / s2 + 0.5 * v * v
        return l1, l2

    def posterior_mean(self):
        return self._post.mean.copy()

    def posterior_cov(self):
        return self.sigma**2 * cho_solve(self._post.factor, np.eye(self._post.dim))

    def sample_posterior(self, size, rng):
        chol = np.linalg.cholesky(self.posterior_cov())
        return self._post.mean + rng.standard_normal((size, self._post.dim)) @ chol.T

    def eigen_inputs(self):
        """Gram eigenbasis inputs for the grid kernels: ``(ev, px, pb, Q)``."""
        ev, Q = np.linalg.eigh(self.stats.gram)
        return ev, self.data.x @ Q, Q.T @ self.stats.xty, Q


def model_family_ridge(sigma=DEFAULT_SIGMA):
    return RidgeModel(sigma)


def ridge_prior_family(dim):
    return RidgePrior(dim)

