"""Acceptance suite: one PASS/FAIL line per criterion, shown in the pytest summary.

Run with ``pytest tests/test_acceptance.py -v``. The long replicated runs are
session fixtures shared by the criteria that need them.
"""
import math
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from priorlens.config import normal_defaults, ridge_defaults
from priorlens.conjugate.normal import (
    NormalEvaluator,
    NormalHyper,
    NormalModel,
    NormalPrior,
    NormalSuffStats,
    normal_log_Z,
)
from priorlens.conjugate.ridge import (
    RegressionData,
    RidgeEvaluator,
    RidgeHyper,
    RidgeModel,
    RidgePrior,
    RidgeSuffStats,
    generate_ridge_data,
    ridge_log_Z,
)
from priorlens.criteria import cv, dic, gauss_hermite_truth, laplace_expectation, waic
from priorlens.errors import DivergenceWarning
from priorlens.estimate import assemble_tensors, find_map
from priorlens.harness import (
    grid_minimize,
    normal_replication,
    ridge_replication,
    run_normal_experiment,
    run_rate_checks,
    run_ridge_experiment,
)
from priorlens.mcmc import ChainConfig, batch_standard_errors, rw_metropolis, sample_criteria
from priorlens.relation import relation_coefficients, relation_value, self_average_coefficients
from test_conjugate import NORMAL_CASES, normal_quadrature, ridge_quadrature

pytestmark = pytest.mark.slow

# reference (mean, std) of each criterion at mu = -1 and mu = +1, n = 25, 10^4 replications
PROBE_REFERENCE = {
    "mu=-1": {
        "cv": (-0.00194, 0.00101),
        "waic": (-0.00175, 0.00080),
        "waicr": (-0.00147, 0.00062),
        "waicrs": (-0.00165, 0.00001),
        "dic": (0.00332, 0.00001),
        "g": (-0.00156, 0.01292),
    },
    "mu=+1": {
        "cv": (0.00506, 0.00095),
        "waic": (0.00489, 0.00076),
        "waicr": (0.00450, 0.00059),
        "waicrs": (0.00467, 0.00004),
        "dic": (0.00006, 0.00002),
        "g": (0.00445, 0.01250),
    },
}
# printed values carry 5 decimals, so half a unit in the last place is added
PROBE_ROUNDING = 5e-6
# reference (mean, std) of the chosen mu
CHOSEN_MU_REFERENCE = {
    "cv": (-0.9863, 0.2297),
    "waic": (-0.9416, 0.19231),
    "waicr": (-0.9329, 0.1885),
    "waicrs": (-0.9993, 0.0059),
    "dic": (0.4512, 0.0077),
    "f": (-0.2977, 0.0106),
}
# "std(DIC) >~ std(WAICRS)": the two are equal within ten percent or DIC is larger
ROUGHLY_GE = 0.9
RIDGE_CRITERIA = ("cv", "waic", "waicr", "waicrs", "dic")


def record(number, title, checks):
    """Append one summary line for a criterion and return the failed checks."""
    failed = [name for name, ok in checks if not ok]
    status = "PASS" if not failed else "FAIL"
    detail = f" (failed: {'; '.join(failed)})" if failed else ""
    line = f"{status} [{number}] {title}{detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return failed


def require(number, title, checks):
    failed = record(number, title, checks)
    if failed:
        pytest.fail("; ".join(failed), pytrace=False)


@pytest.fixture(scope="session")
def normal_run():
    return run_normal_experiment(normal_defaults())


@pytest.fixture(scope="session")
def ridge_run():
    return run_ridge_experiment(ridge_defaults())


@pytest.fixture(scope="session")
def rate_report():
    return run_rate_checks(normal_defaults(replications=2000))


def test_1_oracle_gate():
    checks = []
    for data, h, extra, alpha in NORMAL_CASES:
        got = normal_log_Z(NormalSuffStats.from_data(data), h, extra, alpha)
        want = normal_quadrature(data, h, extra, alpha)
        checks.append((f"normal quadrature n={len(data)} alpha={alpha}", abs(got - want) <= 1e-6 * abs(want)))
    for x, y, lam, sigma, extra, alpha in [
        ([0.5, -1.0], [0.2, -0.7], 2.0, 0.8, None, 0.0),
        ([0.5, -1.0, 1.4], [0.2, -0.7, 1.1], 0.5, 0.6, (0.9, 0.4), 1.0),
        ([0.5, -1.0, 1.4], [0.2, -0.7, 1.1], 0.5, 0.6, (-1.0, -0.7), -1.0),
    ]:
        st = RidgeSuffStats.from_data(RegressionData(np.array(x)[:, None], y))
        ex = None if extra is None else (np.array([extra[0]]), extra[1])
        got = ridge_log_Z(st, RidgeHyper(lam), sigma, ex, alpha)
        want = ridge_quadrature(x, y, lam, sigma, extra, alpha)
        checks.append((f"ridge quadrature n={len(x)} alpha={alpha}", abs(got - want) <= 1e-6 * abs(want)))

    rng = np.random.default_rng(11)
    x = rng.normal(1, 1, 25)
    h = NormalHyper(0.01, -1.0, 0.01)
    ev = NormalEvaluator(x, h)
    loo = ev.log_z(x, -1.0)
    refit = [NormalEvaluator(np.delete(x, i), h).log_z() for i in range(x.size)]
    checks.append(("normal leave-one-out identity", np.max(np.abs(loo - refit)) <= 1e-10))
    data = generate_ridge_data(np.ones(5), np.ones(5), 0.1, 40, rng)
    rev = RidgeEvaluator(data, RidgeHyper(2.0), 0.1)
    loo = rev.log_z(data, -1.0)
    refit = [
        RidgeEvaluator(RegressionData(np.delete(data.x, i, 0), np.delete(data.y, i)), RidgeHyper(2.0), 0.1).log_z()
        for i in range(len(data))
    ]
    checks.append(("ridge leave-one-out identity", np.max(np.abs(loo - np.array(refit))) <= 1e-10))
    require(1, "conjugate normalizers match quadrature; leave-one-out identity", checks)


def test_2_normal_probes(normal_run):
    checks = []
    for probe, rows in PROBE_REFERENCE.items():
        for name, (mean, std) in rows.items():
            got = normal_run.probe_values(probe, name)
            tol = 4 * std / math.sqrt(got.size) + PROBE_ROUNDING
            checks.append((f"{probe} mean {name} {got.mean():.5f} vs {mean}", abs(got.mean() - mean) <= tol))
        sd = {name: normal_run.probe_values(probe, name).std() for name in rows}
        order = ("g", "cv", "waic", "waicr", "waicrs")
        checks.append(
            (f"{probe} std ordering {[round(sd[k], 5) for k in order]}",
             all(sd[a] > sd[b] for a, b in zip(order, order[1:])))
        )
    require(2, "normal criterion means at mu=-1,+1 and dispersion ordering", checks)


def test_3_normal_chosen_mu(normal_run):
    res = normal_run
    step = res.config.grid.step
    checks = []
    means, stds = {}, {}
    for name, (mean, std) in CHOSEN_MU_REFERENCE.items():
        h = res.chosen_for(name)
        means[name], stds[name] = h.mean(), h.std()
        tol = 4 * std / math.sqrt(h.size) + step
        checks.append((f"h({name}) {h.mean():.4f} vs {mean}", abs(h.mean() - mean) <= tol))
    # predictive optimum: grid minimizer of the average generalization-loss change
    optimum = res.grid[np.argmin(np.nanmean(res.values[:, :, res.column("g")], axis=0))]
    for name in ("dic", "f"):
        gap = abs(means[name] - optimum)
        checks.append((f"h({name}) {gap / step:.1f} steps from optimum {optimum:.2f}", gap > 10 * step))
    order = ("cv", "waic", "waicr", "f", "dic")
    checks.append(
        (f"std ordering {[round(stds[k], 4) for k in order + ('waicrs',)]}",
         all(stds[a] > stds[b] for a, b in zip(order, order[1:]))
         and stds["dic"] >= ROUGHLY_GE * stds["waicrs"])
    )
    require(3, "normal chosen mu and std ordering", checks)


def ridge_chosen_lambda_checks(res):
    step = res.config.grid.step
    h = {name: res.chosen_for(name) for name in RIDGE_CRITERIA + ("f",)}
    checks = []
    for i, a in enumerate(RIDGE_CRITERIA):
        for b in RIDGE_CRITERIA[i + 1:]:
            se = math.sqrt(h[a].var() / h[a].size + h[b].var() / h[b].size)
            z = abs(h[a].mean() - h[b].mean()) / se
            checks.append((f"{a}-{b} {z:.2f} pooled SE", z <= 2))
    for name in ("waicrs", "dic"):
        checks.append((f"std h({name}) < 0.3 std h(cv)", h[name].std() < 0.3 * h["cv"].std()))
    far = min(abs(h["f"].mean() - h[k].mean()) for k in RIDGE_CRITERIA)
    checks.append(
        ("h(f) concentrated away from the others",
         far > 10 * step and h["f"].std() < 0.3 * h["cv"].std())
    )
    gaps = res.extras["lambda_star_gap"]
    checks.append(
        (f"closed-form lambda within one step (max gap {np.nanmax(gaps):.3f})",
         np.all(gaps <= step + 1e-12))
    )
    return checks


def test_4_ridge_chosen_lambda(ridge_run):
    require(4, "ridge chosen lambda, n=100", ridge_chosen_lambda_checks(ridge_run))


def test_4_ridge_larger_n_supplementary():
    # informational: at larger n the finite-sample bias of WAICR shrinks below the pairwise threshold
    res = run_ridge_experiment(ridge_defaults(n=300))
    record("4+", "ridge chosen lambda, n=300 (supplementary)", ridge_chosen_lambda_checks(res))


def test_5_rates(rate_report):
    checks = [
        (f"{name} slope {rate_report.slopes[name][0]:.2f}", rate_report.within_band(name))
        for name in rate_report.slopes
    ]
    require(5, "asymptotic-rate slopes", checks)


def quadratic_vertex(fn, points=(-2.0, 0.0, 2.0)):
    a, b, _ = np.polyfit(points, [fn(p) for p in points], 2)
    return -b / (2 * a)


def test_6_closed_form_invariants():
    rng = np.random.default_rng(3)
    x = rng.normal(1, 1, 25)
    truth = gauss_hermite_truth(1, 1)
    checks = []
    base_row = normal_replication(x, np.zeros((1, 3)), truth)[0]
    checks.append(("normal base prior gives zero deltas", np.all(base_row[:6] == 0.0)))
    data = generate_ridge_data(np.ones(5), np.ones(5), 0.1, 50, rng)
    block, _ = ridge_replication(
        data, np.array([0.0]), np.ones((4, 5)), np.ones(5), 0.1, RidgeModel(0.1), RidgePrior(5)
    )
    checks.append(("ridge base prior gives zero deltas", np.all(block[0, :6] == 0.0)))

    for ev, d in ((NormalEvaluator(x, NormalHyper(0.01, -1, 0.01)), x), (RidgeEvaluator(data, RidgeHyper(3.0), 0.1), data)):
        w = waic(ev, d)
        checks.append(("WAIC = T + V/n", w.waic == w.training_error + w.functional_variance / w.n))

    model, prior = NormalModel(), NormalPrior()
    w_hat = find_map(model, prior, x)
    t = assemble_tensors(model, prior, x, w_hat)
    emp, sa = relation_coefficients(t), self_average_coefficients(model, w_hat)

    def M_at(coeffs, mu):
        h = NormalHyper(0.0, mu, 0.0)
        return relation_value(coeffs, prior.grad_log_ratio(h, w_hat), prior.hess_log_ratio(h, w_hat))

    checks.append(("M at base prior is zero", M_at(emp, 0.0) == 0.0 and M_at(sa, 0.0) == 0.0))
    s_hat = w_hat[1]
    M4 = np.mean((x - w_hat[0]) ** 4)
    got = quadratic_vertex(lambda mu: M_at(emp, mu))
    checks.append((f"argmin_mu M {got:.12f}", abs(got + (1 + s_hat**2 * M4) / 4) <= 1e-10))
    got = quadratic_vertex(lambda mu: M_at(sa, mu))
    checks.append((f"argmin_mu <M> {got:.12f}", abs(got + 1) <= 1e-10))
    require(6, "closed-form invariants", checks)


def test_7_cross_path():
    rng = np.random.default_rng(7)
    x = rng.normal(1, 1, 25)
    h = NormalHyper(0.01, -1.0, 0.01)
    model, prior = NormalModel(), NormalPrior()
    # 10^5 retained draws: 5 * 10^5 post-burn-in steps at thin 5
    chain = rw_metropolis(model, prior, h, x, ChainConfig(steps=625_000, burn_in=125_000, thin=5, seed=7))
    got = sample_criteria(chain, model, x)
    se = batch_standard_errors(chain, model, x)
    ev = NormalEvaluator(x, h)
    exact = {"cv": cv(ev, x), "waic": waic(ev, x).waic, "dic": dic(ev, x, model)}
    checks = [
        (f"{k} |diff| {abs(got[k] - exact[k]):.2e} vs 4 SE {4 * se[k]:.2e}", abs(got[k] - exact[k]) <= 4 * se[k])
        for k in exact
    ]
    checks.append((f"{len(chain)} draws", len(chain) == 100_000))

    ns = np.array([25, 100, 400])
    errs = []
    for n in ns:
        z = np.random.default_rng(0).normal(size=n)
        z = (z - z.mean()) / z.std()
        w_hat = find_map(model, prior, z)
        t = assemble_tensors(model, prior, z, w_hat)
        # f(w) = 1/s: both coordinates themselves have zero first-order error on this model
        approx = laplace_expectation(
            lambda v: 1 / v[1], lambda v: np.array([0.0, -1 / v[1] ** 2]),
            lambda v: np.array([[0.0, 0.0], [0.0, 2 / v[1] ** 3]]), t, n,
        )
        # posterior of s is Gamma((n + 1) / 2, n * M2 / 2), so E[1/s] = n M2 / (n - 1)
        errs.append(abs(approx - n * z.var() / (n - 1)))
    slope = np.polyfit(np.log(ns), np.log(errs), 1)[0]
    checks.append((f"Laplace error slope {slope:.2f}", abs(slope + 2) <= 0.4))
    require(7, "sample path vs exact path; Laplace expansion order", checks)


def test_8_determinism_and_robustness(tmp_path, normal_run, ridge_run):
    cfg = normal_defaults(replications=200, seed=9)
    run_normal_experiment(cfg).write_csv(tmp_path / "a.csv")
    run_normal_experiment(cfg).write_csv(tmp_path / "b.csv")
    checks = [("byte-identical CSV", (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes())]
    for label, res in (("normal", normal_run), ("ridge", ridge_run)):
        checks.append((f"{label} failure rate {res.failure_rate:.4%}", res.failure_rate < 1e-3))
    pts = np.linspace(0.1, 10, 100)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        choice = grid_minimize(zip(pts, -np.log(pts)))
    checks.append(
        ("monotone criterion raises DivergenceWarning",
         choice.diverged and any(issubclass(w.category, DivergenceWarning) for w in caught))
    )
    require(8, "determinism and robustness", checks)
