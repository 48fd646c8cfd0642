"""Classical predictive criteria: functional cumulant, CV, WAIC, DIC, free
energy and generalization loss, plus the first-order Laplace expectation.

Criteria are computed from a posterior evaluator, either an
:class:`ExactLogZ` (closed-form ``log Z_n(X, alpha)``) or a
:class:`PosteriorSamples` set of weighted draws.
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import ImproperPrior, NonFinite
from .tensor import ContractionPattern, contract_jjt

ALPHA_STEP = 1e-3
GH_NODES = 128


class ExactLogZ(ABC):
    """Closed-form ``log Z_n(X, alpha)`` for one dataset and prior.

    ``Z_n(X, alpha)`` integrates ``p(X|w)^alpha prod_i p(X_i|w) varphi(w)``;
    ``log_z()`` with no extra point is the log normalizing constant.
    """

    n: int

    @abstractmethod
    def log_z(self, points=None, alpha=0.0):
        """Vectorized over ``points``; ``points=None`` means no extra sample."""

    def alpha_derivatives(self, points):
        """First and second alpha-derivatives of ``log Z_n(X_i, alpha)`` at zero.

        The default uses central differences with step ``ALPHA_STEP``;
        closed-form evaluators override it.
        """
        zp = np.asarray(self.log_z(points, ALPHA_STEP))
        zm = np.asarray(self.log_z(points, -ALPHA_STEP))
        z0 = self.log_z()
        return (zp - zm) / (2 * ALPHA_STEP), (zp - 2 * z0 + zm) / ALPHA_STEP**2

    def posterior_mean(self):
        raise NotImplementedError

    def log_predictive(self, points):
        return np.asarray(self.log_z(points, 1.0)) - self.log_z()


@dataclass(frozen=True)
class PosteriorSamples:
    """Weighted posterior draws bound to the model that scores them."""

    draws: np.ndarray
    model: object
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        draws = np.atleast_2d(np.asarray(self.draws, dtype=float))
        if draws.shape[0] == 0:
            raise ValueError("need at least one draw")
        w = np.full(draws.shape[0], 1.0 / draws.shape[0]) if self.weights is None else (
            np.asarray(self.weights, dtype=float)
        )
        if w.shape != (draws.shape[0],) or np.any(w < 0):
            raise ValueError("weights must be non-negative, one per draw")
        object.__setattr__(self, "draws", draws)
        object.__setattr__(self, "weights", w / w.sum())

    def log_lik(self, data):
        ll = self.model.log_density_matrix(data, self.draws)
        if not np.all(np.isfinite(ll)):
            raise NonFinite("log density is not finite at some posterior draw")
        return ll

    def posterior_mean(self):
        return self.weights @ self.draws


def _as_samples_ll(ev, data):
    return ev.log_lik(data), np.log(ev.weights)


def functional_cumulant(ev, data, alpha):
    """``(1/n) sum_i log E_post[p(X_i|w)^alpha]``."""
    alpha = float(alpha)
    if not -1.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [-1, 1]")
    if alpha == 0.0:
        return 0.0
    if isinstance(ev, PosteriorSamples):
        ll, logw = _as_samples_ll(ev, data)
        with np.errstate(over="ignore"):
            per_point = logsumexp(alpha * ll + logw[:, None], axis=0)
    else:
        per_point = np.asarray(ev.log_z(data, alpha)) - ev.log_z()
    value = float(np.mean(per_point))
    if not math.isfinite(value):
        raise NonFinite("functional cumulant overflowed")
    return value


def cv(ev, data):
    """Leave-one-out cross validation loss."""
    return functional_cumulant(ev, data, -1.0)


@dataclass(frozen=True)
class WAICResult:
    waic: float
    training_error: float
    functional_variance: float
    n: int


def waic(ev, data):
    """WAIC with its training error ``T`` and functional variance ``V``."""
    n = len(data)
    t = -functional_cumulant(ev, data, 1.0)
    if isinstance(ev, PosteriorSamples):
        ll, _ = _as_samples_ll(ev, data)
        mean = ev.weights @ ll
        v = float(np.sum(ev.weights @ (ll - mean) ** 2))
    else:
        v = float(np.sum(ev.alpha_derivatives(data)[1]))
    return WAICResult(waic=t + v / n, training_error=t, functional_variance=v, n=n)


def dic(ev, data, model):
    """``(1/n) sum_i {-2 E_post[log p(X_i|w)] + log p(X_i|E_post[w])}``."""
    if isinstance(ev, PosteriorSamples):
        ll, _ = _as_samples_ll(ev, data)
        mean_logp = ev.weights @ ll
    else:
        mean_logp = np.asarray(ev.alpha_derivatives(data)[0])
    plug_in = model.log_density(data, ev.posterior_mean())
    value = float(np.mean(-2.0 * mean_logp + plug_in))
    if not math.isfinite(value):
        raise NonFinite("DIC is not finite")
    return value


def free_energy(ev, prior, h):
    """Minus log marginal likelihood of the normalized prior."""
    log_norm = prior.log_normalizer(h)
    if log_norm is None:
        raise ImproperPrior(f"prior is improper at {h}; the free energy is undefined")
    return -ev.log_z() + log_norm


@dataclass(frozen=True)
class QuadratureTruth:
    nodes: object
    weights: np.ndarray


def gauss_hermite_truth(mean, sd, nodes=GH_NODES):
    """Quadrature rule integrating against ``N(mean, sd^2)``."""
    t, w = np.polynomial.hermite.hermgauss(nodes)
    return QuadratureTruth(mean + math.sqrt(2.0) * sd * t, w / math.sqrt(math.pi))


@dataclass(frozen=True)
class GenLoss:
    value: float
    std_error: float


def generalization_loss(log_predictive: Callable, truth, budget=None, rng=None):
    """``-E_q[log p(x|X^n)]`` by quadrature or by sampling the truth.

    ``truth`` is a :class:`QuadratureTruth`, or a callable ``truth(rng, size)``
    returning ``budget`` draws from ``q``.
    """
    if isinstance(truth, QuadratureTruth):
        lp = np.asarray(log_predictive(truth.nodes))
        return GenLoss(float(-(truth.weights @ lp)), 0.0)
    if budget is None or budget < 2:
        raise ValueError("sampling the truth needs a budget of at least two draws")
    rng = np.random.default_rng() if rng is None else rng
    lp = np.asarray(log_predictive(truth(rng, budget)))
    return GenLoss(float(-lp.mean()), float(lp.std(ddof=1) / math.sqrt(budget)))


def laplace_expectation(f, grad, hess, t, n):
    """First-order Laplace approximation of ``E_post0[f(w)]`` around the MAP.

    Returns ``f + (tr(f'' J) - f' . V) / (2n)`` with
    ``V^a = J^{ab} J^{cd} L_{bcd}``, everything evaluated at ``t.w_hat``.
    """
    w = t.w_hat
    V = contract_jjt(t.J, t.J, t.L3, ContractionPattern.FULL)
    r1 = 0.5 * contract_jjt(t.J, None, hess(w), ContractionPattern.TRACE) - 0.5 * float(
        np.asarray(grad(w)) @ V
    )
    return float(f(w)) + r1 / n


@dataclass
class CriterionReport:
    cv: float
    waic: float
    training_error: float
    functional_variance: float
    dic: float
    n: int
    hyper: object = None
    free_energy: Optional[float] = None
    gen_loss: Optional[float] = None
    extras: dict = field(default_factory=dict)


def evaluate_criteria(ev, data, model, prior=None, h=None, truth=None):
    """All criteria for one posterior evaluator."""
    w = waic(ev, data)
    report = CriterionReport(
        cv=cv(ev, data),
        waic=w.waic,
        training_error=w.training_error,
        functional_variance=w.functional_variance,
        dic=dic(ev, data, model),
        n=w.n,
        hyper=h,
    )
    if prior is not None and h is not None and isinstance(ev, ExactLogZ):
        try:
            report.free_energy = free_energy(ev, prior, h)
        except ImproperPrior:
            report.free_energy = None
    if truth is not None and isinstance(ev, ExactLogZ):
        report.gen_loss = generalization_loss(ev.log_predictive, truth).value
    return report
