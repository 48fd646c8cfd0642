"""MAP estimation and the empirical derivative tensors at a parameter point."""
from dataclasses import dataclass

import numpy as np

from .errors import NoConvergence, NonFinite, NotInterior, SingularMatrix
from .tensor import invert_spd

ARMIJO_C = 1e-4
MAX_HALVINGS = 40
MAX_ITER = 200
GRAD_RTOL = 1e-10


@dataclass(frozen=True)
class EmpiricalTensors:
    """Everything the empirical relation needs at one parameter point.

    ``L2``/``L3`` are derivatives of the per-sample loss (base prior included),
    ``J`` is the inverse of ``L2``, ``F2`` the mean outer product of per-sample
    gradients and ``F21[a, b, c]`` the mean of ``hess[a, b] * grad[c]``.
    """

    w_hat: np.ndarray
    n: int
    L2: np.ndarray
    L3: np.ndarray
    J: np.ndarray
    F2: np.ndarray
    F21: np.ndarray

    @property
    def dim(self):
        return self.w_hat.size


def _size(data):
    n = len(data)
    if n == 0:
        raise ValueError("data must be non-empty")
    return n


def empirical_loss(model, prior, data, w):
    n = _size(data)
    w = np.asarray(w, dtype=float)
    logp = model.log_density(data, w)
    base = prior.log_base(w) if prior is not None else 0.0
    if not np.all(np.isfinite(logp)) or not np.isfinite(base):
        raise NonFinite("log density is not finite at w")
    return float(-np.mean(logp) - base / n)


def loss_gradient(model, prior, data, w):
    n = _size(data)
    g = -np.mean(model.grad_log_density(data, w), axis=0)
    if prior is not None:
        g = g - prior.grad_log_base(w) / n
    return g


def loss_hessian(model, prior, data, w):
    n = _size(data)
    H = -np.mean(model.hess_log_density(data, w), axis=0)
    if prior is not None:
        H = H - prior.hess_log_base(w) / n
    return 0.5 * (H + H.T)


def find_map(model, prior, data, init=None, max_iter=MAX_ITER):
    """Minimize the empirical loss by damped Newton with Armijo backtracking.

    Falls back to a steepest-descent direction whenever the Hessian is not
    positive definite. Trial points outside ``model.in_domain`` count as
    failed line-search steps.
    """
    w = np.asarray(model.default_init(data) if init is None else init, dtype=float).copy()
    if not model.in_domain(w):
        raise NotInterior(f"initial point {w} is outside the model domain")
    f = empirical_loss(model, prior, data, w)
    for _ in range(max_iter):
        g = loss_gradient(model, prior, data, w)
        if np.max(np.abs(g)) <= GRAD_RTOL * (1.0 + abs(f)):
            try:
                invert_spd(loss_hessian(model, prior, data, w))
            except SingularMatrix:
                pass
            else:
                return w
        H = loss_hessian(model, prior, data, w)
        try:
            direction = -invert_spd(H) @ g
        except SingularMatrix:
            direction = -g
        slope = float(g @ direction)
        if slope >= 0:
            direction, slope = -g, -float(g @ g)
        step = 1.0
        for _ in range(MAX_HALVINGS + 1):
            trial = w + step * direction
            if model.in_domain(trial):
                try:
                    f_trial = empirical_loss(model, prior, data, trial)
                except NonFinite:
                    f_trial = np.inf
                if f_trial <= f + ARMIJO_C * step * slope:
                    break
            step *= 0.5
        else:
            if not model.in_domain(w + step * direction):
                raise NotInterior("line search could not stay inside the model domain")
            # no decrease possible at working precision: accept if stationary enough
            if np.max(np.abs(g)) <= 1e3 * GRAD_RTOL * (1.0 + abs(f)):
                return w
            raise NoConvergence("line search failed to decrease the loss")
        w, f = trial, f_trial
    g = loss_gradient(model, prior, data, w)
    if np.max(np.abs(g)) <= GRAD_RTOL * (1.0 + abs(f)):
        return w
    raise NoConvergence(f"no convergence after {max_iter} iterations")


def assemble_tensors(model, prior, data, w):
    """Build :class:`EmpiricalTensors` at ``w`` (normally the MAP estimate)."""
    n = _size(data)
    w = np.asarray(w, dtype=float)
    grads = model.grad_log_density(data, w)
    hess = model.hess_log_density(data, w)
    third = model.third_log_density(data, w)
    L2 = -hess.mean(axis=0)
    L3 = -third.mean(axis=0)
    if prior is not None:
        L2 = L2 - prior.hess_log_base(w) / n
        L3 = L3 - prior.third_log_base(w) / n
    L2 = 0.5 * (L2 + L2.T)
    F2 = grads.T @ grads / n
    F21 = np.einsum("iab,ic->abc", hess, grads) / n
    tensors = (L2, L3, F2, F21)
    if not all(np.all(np.isfinite(t)) for t in tensors):
        raise NonFinite("derivative tensors are not finite")
    return EmpiricalTensors(
        w_hat=w.copy(), n=n, L2=L2, L3=L3, J=invert_spd(L2), F2=0.5 * (F2 + F2.T), F21=F21
    )
