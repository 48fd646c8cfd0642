import numpy as np
import pytest

from priorlens.config import ALL_CRITERIA, GridSpec, config_from_mapping, load_config, normal_defaults, ridge_defaults
from priorlens.conjugate.normal import NormalEvaluator, NormalHyper, NormalModel, NormalPrior
from priorlens.criteria import gauss_hermite_truth
from priorlens.errors import ConfigError, DivergenceWarning, NonFinite
from priorlens.harness import (
    grid_minimize,
    normal_replication,
    replication_streams,
    run_custom_experiment,
    run_normal_experiment,
    run_rate_checks,
    run_ridge_experiment,
    thread_count,
)


def test_grid_points_half_open():
    pts = GridSpec(-2.5, 2.5, 100).points()
    assert pts.size == 100
    assert pts[0] == pytest.approx(-2.45) and pts[-1] == pytest.approx(2.5)
    np.testing.assert_allclose(np.diff(pts), 0.05)
    assert GridSpec(0, 10, 100).points()[0] == pytest.approx(0.1)
    closed = GridSpec(0, 1, 3, closed_low=True).points()
    np.testing.assert_allclose(closed, [0, 0.5, 1.0])
    np.testing.assert_allclose(GridSpec(0, 1, 1).points(), [1.0])
    with pytest.raises(ConfigError):
        GridSpec(1, 0, 5)
    with pytest.raises(ConfigError):
        GridSpec(0, 1, 0)


def test_grid_minimize_interior():
    pts = np.linspace(-1, 1, 11)
    choice = grid_minimize(zip(pts, pts**2))
    assert choice.hyper == pytest.approx(0.0) and not choice.diverged


def test_grid_minimize_boundary_warns():
    pts = np.linspace(0, 1, 5)
    with pytest.warns(DivergenceWarning):
        choice = grid_minimize(zip(pts, -pts))
    assert choice.hyper == 1.0 and choice.diverged


def test_grid_minimize_ties_and_errors():
    choice = grid_minimize([(0.5, 1.0), (0.2, 0.0), (0.3, 2.0), (0.4, 0.0)], warn=False)
    assert choice.hyper == 0.2 and choice.index == 1
    with pytest.raises(NonFinite):
        grid_minimize([(0.0, 1.0), (1.0, np.nan)])
    with pytest.raises(ValueError):
        grid_minimize([])


def test_normal_replication_base_row_is_exactly_zero(normal_data):
    out = normal_replication(normal_data, np.zeros((1, 3)), gauss_hermite_truth(1, 1))
    assert np.all(out[0, :6] == 0.0)
    assert np.isnan(out[0, 6])


def test_normal_replication_matches_generic_path(normal_data):
    h = NormalHyper(0.5, 0.5, 0.5)
    row = normal_replication(normal_data, h.values[None, :], gauss_hermite_truth(1, 1))[0]
    from priorlens.criteria import cv, free_energy

    ev, ev0 = NormalEvaluator(normal_data, h), NormalEvaluator(normal_data, NormalHyper())
    assert row[0] == pytest.approx(cv(ev, normal_data) - cv(ev0, normal_data), rel=1e-9)
    assert row[6] == pytest.approx(free_energy(ev, NormalPrior(), h), rel=1e-12)


def test_tiny_normal_run_is_deterministic():
    cfg = normal_defaults(replications=1, grid=GridSpec(-1.5, -0.5, 1))
    a, b = run_normal_experiment(cfg), run_normal_experiment(cfg)
    assert a.values.shape == (1, 1, len(ALL_CRITERIA))
    assert a.values.tobytes() == b.values.tobytes()
    assert a.chosen_index[0, 0] == 0 and not a.boundary.any()


def test_normal_run_thread_independent(monkeypatch):
    cfg = normal_defaults(replications=40, seed=5)
    monkeypatch.setenv("PRIORLENS_THREADS", "1")
    a = run_normal_experiment(cfg)
    monkeypatch.setenv("PRIORLENS_THREADS", "4")
    b = run_normal_experiment(cfg)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.failures == [] and a.failure_rate == 0.0


def test_thread_count_validation(monkeypatch):
    monkeypatch.setenv("PRIORLENS_THREADS", "3")
    assert thread_count() == 3
    monkeypatch.setenv("PRIORLENS_THREADS", "zero")
    with pytest.raises(ConfigError):
        thread_count()


def test_failed_replications_are_counted():
    # mu far below the grid makes the leave-one-out integral improper for n = 2
    cfg = normal_defaults(n=2, replications=3, grid=GridSpec(-3.0, -2.0, 3, closed_low=True))
    res = run_normal_experiment(cfg)
    assert len(res.failures) == 3 and res.failure_rate == 1.0
    assert res.summary()["failures"] == 3


def test_ridge_run_small():
    res = run_ridge_experiment(ridge_defaults(replications=10, n=60))
    gaps = res.extras["lambda_star_gap"]
    assert np.all(gaps <= res.config.grid.step + 1e-12)
    assert np.all(res.chosen_for("f") == pytest.approx(1.0, abs=0.3))


def test_custom_experiment_matches_kernel_path():
    grid = [NormalHyper(0.01, m, 0.01) for m in (-1.5, -1.0, -0.5)]
    cfg = normal_defaults(replications=3, criteria_enabled=("cv", "waic", "waicr", "waicrs", "dic"))
    res = run_custom_experiment(
        cfg, NormalModel(), NormalPrior(), lambda r, n: r.normal(1, 1, n), NormalEvaluator, grid,
        grid_values=[-1.5, -1.0, -0.5],
    )
    _, streams = replication_streams(cfg.seed, 3)
    x = streams[0].normal(1, 1, cfg.n)
    want = normal_replication(x, np.array([h.values for h in grid]), gauss_hermite_truth(1, 1))
    np.testing.assert_allclose(res.values[0, :, :5], want[:, :5], rtol=1e-9, atol=1e-15)


def test_rate_checks_validation_and_degenerate():
    with pytest.raises(ConfigError):
        run_rate_checks(normal_defaults(n_values=(25,)))
    rep = run_rate_checks(normal_defaults(n_values=(10, 20, 40), replications=20), hyper=(0.0, 0.0, 0.0))
    assert set(rep.degenerate) == {"gen_loss_std", "cv_minus_relation", "self_average_gap_std"}
    assert all(np.isnan(rep.slopes[k][0]) for k in rep.degenerate)


def test_config_loading(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text('experiment = "normal"\nn = 30\nreplications = 7\nseed = 2\ngrid_count = 10\nfixed_lambda = 0.5\n')
    cfg = load_config(path)
    assert cfg.n == 30 and cfg.grid.count == 10 and cfg.fixed_hypers["lambda"] == 0.5
    path.write_text('experiment = "normal"\nn = 30\nseed = 2\n')
    with pytest.raises(ConfigError, match="replications"):
        load_config(path)
    path.write_text('experiment = "normal"\nn = 3\nreplications = 1\nseed = 2\nbogus = 1\n')
    with pytest.raises(ConfigError, match="bogus"):
        load_config(path)
    path.write_text('experiment = "normal"\n[grid]\nlow = 1\n')
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")
    with pytest.raises(ConfigError):
        config_from_mapping({"experiment": "custom", "n": 1, "replications": 1, "seed": 0})
