"""Interfaces for statistical models, base priors and candidate prior families.

Model callbacks are batched over a dataset: ``log_density(data, w)`` returns
one value per sample, ``grad_log_density`` an ``(n, d)`` array, and so on.
A single sample is a dataset of length one.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class SelfExpectations:
    """Expectations of loss derivatives under the model itself, ``x ~ p(x|w)``.

    ``F2`` is not stored: under the model it coincides with ``L2``.
    """

    L2: np.ndarray
    L3: np.ndarray
    F21: np.ndarray


@dataclass(frozen=True)
class Hyper:
    values: np.ndarray
    labels: tuple

    def __post_init__(self):
        values = np.atleast_1d(np.asarray(self.values, dtype=float))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) != values.size:
            raise ValueError("one label per hyperparameter coordinate is required")
        if not np.all(np.isfinite(values)):
            raise ValueError("hyperparameters must be finite")

    def __getitem__(self, label):
        return float(self.values[self.labels.index(label)])

    def as_dict(self):
        return dict(zip(self.labels, self.values.tolist()))


class ModelFamily(ABC):
    """A parametric density ``p(x|w)`` with derivatives up to third order."""

    param_dim: int

    @abstractmethod
    def log_density(self, data, w):
        """Per-sample ``log p(X_i|w)``, shape ``(n,)``."""

    @abstractmethod
    def grad_log_density(self, data, w):
        """Shape ``(n, d)``."""

    @abstractmethod
    def hess_log_density(self, data, w):
        """Shape ``(n, d, d)``."""

    @abstractmethod
    def third_log_density(self, data, w):
        """Shape ``(n, d, d, d)``."""

    def in_domain(self, w):
        return bool(np.all(np.isfinite(w)))

    def default_init(self, data):
        return np.zeros(self.param_dim)

    def self_expectations(self, w, data=None) -> Optional[SelfExpectations]:
        return None

    def sample(self, w, size, rng, data=None):
        raise NotImplementedError(f"{type(self).__name__} has no sampler")

    def log_density_matrix(self, data, draws):
        """``log p(X_i|w_t)`` for every draw, shape ``(T, n)``."""
        return np.stack([self.log_density(data, w) for w in np.atleast_2d(draws)])


class PriorFamily(ABC):
    """Candidate priors ``varphi(w|h)`` relative to a fixed base prior ``varphi_0``.

    Only the log ratio ``log(varphi/varphi_0)`` and its first two derivatives
    are needed by the relation coefficients; the base prior additionally
    supplies a third derivative because it enters the empirical loss.
    """

    hyper_dim: int
    labels: tuple

    @abstractmethod
    def log_ratio(self, h, w):
        ...

    @abstractmethod
    def grad_log_ratio(self, h, w):
        ...

    @abstractmethod
    def hess_log_ratio(self, h, w):
        ...

    @property
    @abstractmethod
    def base_hyper(self):
        """Hyperparameter at which the candidate equals the base prior."""

    def log_base(self, w):
        return 0.0

    def grad_log_base(self, w):
        return np.zeros(np.size(w))

    def hess_log_base(self, w):
        d = np.size(w)
        return np.zeros((d, d))

    def third_log_base(self, w):
        d = np.size(w)
        return np.zeros((d, d, d))

    def log_normalizer(self, h) -> Optional[float]:
        """``log of the integral of varphi(w|h) dw``, or ``None`` if improper."""
        return None

    def log_prior(self, h, w):
        return self.log_base(w) + self.log_ratio(h, w)


@dataclass
class DiagnosticsReport:
    tolerance: float
    errors: dict = field(default_factory=dict)

    @property
    def failures(self):
        return sorted(name for name, err in self.errors.items() if not err <= self.tolerance)

    @property
    def passed(self):
        return not self.failures

    def max_error(self):
        return max(self.errors.values(), default=0.0)


def fd_step(w):
    return 1e-5 * (1.0 + np.abs(np.asarray(w, dtype=float)))


def _central_jacobian(f, w):
    """Central differences of an array-valued ``f``; the new axis is last."""
    w = np.asarray(w, dtype=float)
    steps = fd_step(w)
    cols = []
    for k in range(w.size):
        e = np.zeros_like(w)
        e[k] = steps[k]
        cols.append((np.asarray(f(w + e)) - np.asarray(f(w - e))) / (2 * steps[k]))
    return np.stack(cols, axis=-1)


def _rel_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    if analytic.shape != numeric.shape:
        return np.inf
    scale = max(1.0, float(np.max(np.abs(numeric), initial=0.0)))
    return float(np.max(np.abs(analytic - numeric), initial=0.0) / scale)


def check_derivatives(model, prior, probes: Sequence, tolerance=1e-4):
    """Compare every analytic derivative callback with central differences.

    ``probes`` is a non-empty sequence of ``(sample, w, h)``; ``sample`` is a
    dataset (typically of length one) and ``h`` a hyperparameter for
    ``prior``. The report keeps the worst error per callback.
    """
    if not probes:
        raise ValueError("at least one probe is required")
    report = DiagnosticsReport(tolerance=tolerance)

    def record(name, err):
        report.errors[name] = max(report.errors.get(name, 0.0), err)

    for sample, w, h in probes:
        w = np.asarray(w, dtype=float)
        record("grad_log_density", _rel_error(
            model.grad_log_density(sample, w),
            _central_jacobian(lambda v: model.log_density(sample, v), w)))
        record("hess_log_density", _rel_error(
            model.hess_log_density(sample, w),
            _central_jacobian(lambda v: model.grad_log_density(sample, v), w)))
        record("third_log_density", _rel_error(
            model.third_log_density(sample, w),
            _central_jacobian(lambda v: model.hess_log_density(sample, v), w)))
        if prior is None:
            continue
        record("grad_log_ratio", _rel_error(
            prior.grad_log_ratio(h, w),
            _central_jacobian(lambda v: prior.log_ratio(h, v), w)))
        record("hess_log_ratio", _rel_error(
            prior.hess_log_ratio(h, w),
            _central_jacobian(lambda v: prior.grad_log_ratio(h, v), w)))
        record("grad_log_base", _rel_error(
            prior.grad_log_base(w), _central_jacobian(prior.log_base, w)))
        record("hess_log_base", _rel_error(
            prior.hess_log_base(w), _central_jacobian(prior.grad_log_base, w)))
        record("third_log_base", _rel_error(
            prior.third_log_base(w), _central_jacobian(prior.hess_log_base, w)))
    return report
