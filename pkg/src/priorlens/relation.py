"""Second-order relation between a candidate prior and the base prior.

The relation is the quadratic functional

    M = A^{ab} g_a g_b + B^{ab} H_{ab} + C^a g_a

of the gradient ``g`` and Hessian ``H`` of ``log(varphi/varphi_0)``. Its
coefficients come in three flavours: empirical (sample averages at the MAP
estimate), self-average (expectations under the model at that point) and
average (expectations under the true distribution). Dividing by ``n**2``
gives the WAICR / WAICRS criteria.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateEstimate, DimMismatch, NoExpectationPath
from .model import SelfExpectations
from .tensor import ContractionPattern, contract_jjt, invert_spd, quad_form

EMPIRICAL = "empirical"
SELF_AVERAGE = "self_average"
AVERAGE = "average"
DEFAULT_MC_BUDGET = 100_000


@dataclass(frozen=True)
class RelationCoefficients:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    flavor: str

    @property
    def dim(self):
        return self.C.size


@dataclass(frozen=True)
class TruthExpectations:
    """Expectations of loss derivatives under some distribution of ``x``."""

    L2: np.ndarray
    L3: np.ndarray
    F2: np.ndarray
    F21: np.ndarray
    L2_se: Optional[np.ndarray] = None


def _coefficients(L2, L3, F2, F21, flavor, J=None):
    if J is None:
        J = invert_spd(L2)
    d = J.shape[0]
    if L3.shape != (d, d, d) or F21.shape != (d, d, d) or F2.shape != (d, d):
        raise DimMismatch("tensor shapes do not agree with the parameter dimension")
    A = 0.5 * J
    B = 0.5 * (J + contract_jjt(J, J, F2, ContractionPattern.SANDWICH))
    C = (
        contract_jjt(J, J, F21, ContractionPattern.MIXED)
        - 0.5 * contract_jjt(J, J, L3, ContractionPattern.FULL)
        - 0.5 * contract_jjt(J, J, L3, ContractionPattern.FULL_WITH_F, F=F2)
    )
    return RelationCoefficients(A=A, B=0.5 * (B + B.T), C=C, flavor=flavor)


def relation_coefficients(t):
    """Empirical coefficients from :class:`~priorlens.estimate.EmpiricalTensors`."""
    return _coefficients(t.L2, t.L3, t.F2, t.F21, EMPIRICAL, J=t.J)


def average_coefficients(expectations: TruthExpectations):
    """Coefficients built from expectations under the true distribution."""
    return _coefficients(
        expectations.L2, expectations.L3, expectations.F2, expectations.F21, AVERAGE
    )


def self_average_from_expectations(se: SelfExpectations):
    J = invert_spd(se.L2)
    C = contract_jjt(J, J, se.F21, ContractionPattern.MIXED) - contract_jjt(
        J, J, se.L3, ContractionPattern.FULL
    )
    return RelationCoefficients(A=0.5 * J, B=J.copy(), C=C, flavor=SELF_AVERAGE)


def expected_tensors(model, w, points, weights=None):
    """Weighted averages of the loss-derivative tensors over ``points``.

    ``points`` is a dataset (quadrature nodes or random draws); ``weights``
    default to uniform. Returns :class:`TruthExpectations`; ``L2_se`` holds
    the Monte Carlo standard error of ``L2`` under uniform weights.
    """
    w = np.asarray(w, dtype=float)
    m = len(points)
    if weights is None:
        weights = np.full(m, 1.0 / m)
    else:
        weights = np.asarray(weights, dtype=float)
        weights = weights / weights.sum()
    grads = model.grad_log_density(points, w)
    hess = model.hess_log_density(points, w)
    third = model.third_log_density(points, w)
    L2 = -np.einsum("i,iab->ab", weights, hess)
    L3 = -np.einsum("i,iabc->abc", weights, third)
    F2 = np.einsum("i,ia,ib->ab", weights, grads, grads)
    F21 = np.einsum("i,iab,ic->abc", weights, hess, grads)
    centered = -hess - L2
    L2_se = np.sqrt(np.einsum("i,iab->ab", weights, centered**2) / max(m - 1, 1))
    return TruthExpectations(
        L2=0.5 * (L2 + L2.T), L3=L3, F2=0.5 * (F2 + F2.T), F21=F21, L2_se=L2_se
    )


def self_average_coefficients(model, w, data=None, mc_budget=None, rng=None):
    """Self-average coefficients at ``w``.

    Uses the model's analytic :meth:`self_expectations` when available and
    ``mc_budget`` is not given; otherwise averages over ``mc_budget`` draws
    from ``p(x|w)`` (conditional models draw covariates from ``data``).
    """
    se = None if mc_budget is not None else model.self_expectations(w, data)
    if se is None:
        budget = DEFAULT_MC_BUDGET if mc_budget is None else int(mc_budget)
        if rng is None:
            rng = np.random.default_rng()
        try:
            draws = model.sample(w, budget, rng, data)
        except NotImplementedError as exc:
            raise NoExpectationPath(
                f"{type(model).__name__} has neither self-expectations nor a sampler"
            ) from exc
        ex = expected_tensors(model, w, draws)
        # under the model F2 equals L2; keep the sampled F2 out of the formula
        se = SelfExpectations(L2=ex.L2, L3=ex.L3, F21=ex.F21)
    return self_average_from_expectations(se)


def relation_value(coeffs, g, H):
    """``A:g g + B:H + C.g``; ``g``/``H`` may carry a leading batch axis."""
    g = np.asarray(g, dtype=float)
    H = np.asarray(H, dtype=float)
    d = coeffs.dim
    if g.shape[-1] != d or H.shape[-2:] != (d, d) or g.shape[:-1] != H.shape[:-2]:
        raise DimMismatch(f"gradient {g.shape} / Hessian {H.shape} do not match d={d}")
    value = (
        np.einsum("...a,ab,...b->...", g, coeffs.A, g)
        + np.einsum("ab,...ab->...", coeffs.B, H)
        + g @ coeffs.C
    )
    return float(value) if value.ndim == 0 else value


def prior_relation(coeffs, prior, h, w):
    """Relation value for hyperparameter ``h`` of ``prior`` at point ``w``."""
    return relation_value(coeffs, prior.grad_log_ratio(h, w), prior.hess_log_ratio(h, w))


def waicr(M_value, n):
    return M_value / n**2


def waicrs(Msa_value, n):
    return Msa_value / n**2


def optimal_ridge_lambda(t):
    """Closed-form minimizer of the self-average relation for a ridge prior.

    With ``log varphi = -lambda |w|^2 / 2`` the relation is
    ``lambda^2 (w J w) / 2 - lambda tr(J)``, minimized at
    ``tr(J) / (w J w)``.
    """
    denom = quad_form(t.J, t.w_hat, t.w_hat)
    if denom <= 1e-14:
        raise DegenerateEstimate(
            "estimate sits at the divergent parameter w=0; the optimal lambda escapes"
        )
    return float(np.trace(t.J) / denom)


@dataclass(frozen=True)
class BootstrapEstimate:
    mean: float
    std_error: float
    values: np.ndarray


def bootstrap_relation(criterion_fn: Callable, sampler: Callable, n, replications, rng):
    """Monte Carlo estimate of ``E[criterion(Y^n)]`` over resampled datasets.

    ``sampler(rng, n)`` draws one dataset of size ``n``: from the predictive
    distribution for a WAICRS estimate, or from the empirical distribution
    (with replacement) for a WAICR estimate. ``criterion_fn`` usually returns
    ``WAIC(Y, varphi) - WAIC(Y, varphi_0)``.
    """
    if replications < 2:
        raise ValueError("need at least two replications for a standard error")
    streams = rng.spawn(replications)
    values = np.array([criterion_fn(sampler(stream, n)) for stream in streams], dtype=float)
    return BootstrapEstimate(
        mean=float(values.mean()),
        std_error=float(values.std(ddof=1) / np.sqrt(replications)),
        values=values,
    )


def empirical_sampler(data):
    """Sampler drawing size-``n`` sets from the data with replacement."""

    def draw(rng, n):
        return data[rng.integers(0, len(data), size=n)]

    return draw
