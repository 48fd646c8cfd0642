"""Random-walk Metropolis posterior sampling and sample-path estimators."""
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .criteria import PosteriorSamples, cv, dic, waic
from .errors import AllRejected, NonFinite, UnstableWeights
from .estimate import assemble_tensors, find_map

MIN_ACCEPTANCE = 0.01
MIN_ESS = 10.0
N_BATCHES = 20


@dataclass(frozen=True)
class ChainConfig:
    steps: int
    burn_in: Optional[int] = None
    thin: int = 5
    step_scale: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.steps // 5)
        if self.steps <= self.burn_in or self.thin < 1:
            raise ValueError("need steps > burn_in and thin >= 1")
        if self.step_scale is not None and self.step_scale <= 0:
            raise ValueError("step_scale must be positive")


@dataclass(frozen=True)
class SampleSet:
    draws: np.ndarray
    acceptance_rate: float

    def __len__(self):
        return self.draws.shape[0]

    def as_posterior(self, model):
        return PosteriorSamples(self.draws, model)


def _log_post(model, prior, h, data, w):
    if not model.in_domain(w):
        return -np.inf
    lp = float(np.sum(model.log_density(data, w))) + prior.log_prior(h, w)
    return lp if math.isfinite(lp) else -np.inf


def rw_metropolis(model, prior, h, data, cfg: ChainConfig, init=None):
    """Gaussian random-walk Metropolis on the posterior under ``prior(h)``.

    Proposal standard deviations are ``step_scale * sqrt(diag(J) / n)`` with
    ``J`` the inverse empirical Hessian at the base-prior MAP estimate.
    """
    n = len(data)
    w_hat = find_map(model, prior, data)
    t = assemble_tensors(model, prior, data, w_hat)
    d = w_hat.size
    scale = (2.4 / math.sqrt(d) if cfg.step_scale is None else cfg.step_scale) * np.sqrt(
        np.diag(t.J) / n
    )
    w = np.asarray(w_hat if init is None else init, dtype=float).copy()
    lp = _log_post(model, prior, h, data, w)
    if not math.isfinite(lp):
        raise NonFinite("log posterior is not finite at the initial point")
    rng = np.random.default_rng(cfg.seed)
    noise = rng.standard_normal((cfg.steps, d)) * scale
    log_u = np.log(rng.random(cfg.steps))
    kept = []
    accepted = 0
    for step in range(cfg.steps):
        trial = w + noise[step]
        lp_trial = _log_post(model, prior, h, data, trial)
        if log_u[step] < lp_trial - lp:
            w, lp = trial, lp_trial
            accepted += 1
        if step >= cfg.burn_in and (step - cfg.burn_in) % cfg.thin == 0:
            kept.append(w.copy())
    rate = accepted / cfg.steps
    if rate < MIN_ACCEPTANCE:
        raise AllRejected(f"acceptance rate {rate:.4f} is below {MIN_ACCEPTANCE}")
    return SampleSet(draws=np.array(kept), acceptance_rate=rate)


def importance_ess(log_weights):
    """Effective sample size of each column of unnormalized log weights ``(T, n)``."""
    lw = log_weights - logsumexp(log_weights, axis=0)
    return np.exp(-logsumexp(2 * lw, axis=0))


@dataclass(frozen=True)
class ISCVResult:
    cv: float
    ess: np.ndarray


def is_cv_from_samples(samples, model, data):
    """Importance-sampling leave-one-out CV from posterior draws."""
    draws = samples.draws if isinstance(samples, SampleSet) else samples
    ll = model.log_density_matrix(data, draws)
    if not np.all(np.isfinite(ll)):
        raise NonFinite("log density is not finite at some draw")
    T = ll.shape[0]
    value = float(np.mean(logsumexp(-ll, axis=0) - math.log(T)))
    ess = importance_ess(-ll)
    if T >= MIN_ESS and np.min(ess) < MIN_ESS:
        raise UnstableWeights(f"minimum importance ESS {np.min(ess):.1f} is below {MIN_ESS}")
    return ISCVResult(cv=value, ess=ess)


def sample_criteria(samples, model, data):
    """CV, WAIC, DIC from draws (CV through the same path as :func:`functional_cumulant`)."""
    post = samples.as_posterior(model) if isinstance(samples, SampleSet) else samples
    w = waic(post, data)
    return {"cv": cv(post, data), "waic": w.waic, "dic": dic(post, data, model)}


def batch_standard_errors(samples, model, data, batches=N_BATCHES):
    """Batch-means standard errors of the sample-path CV, WAIC and DIC."""
    draws = samples.draws if isinstance(samples, SampleSet) else samples.draws
    size = draws.shape[0] // batches
    if size < 2:
        raise ValueError("too few draws for batch means")
    vals = np.array(
        [
            list(sample_criteria(PosteriorSamples(draws[b * size : (b + 1) * size], model), model, data).values())
            for b in range(batches)
        ]
    )
    se = vals.std(axis=0, ddof=1) / math.sqrt(batches)
    return dict(zip(("cv", "waic", "dic"), se.tolist()))
