import math

import numpy as np
import pytest

import rayflow as rf


def test_schedule_basics():
    s = rf.Schedule.linear(20, 0.01, 0.3)
    assert s.T == 20
    assert s.alpha_bar(0) == 1.0
    assert s.beta_tilde(1) == 0.0
    for t in range(1, 21):
        assert abs(s.alpha(t) ** 2 + s.beta(t) ** 2 - 1) < 1e-12
    ab = np.array(s.alpha_bars)
    assert np.all(np.diff(ab) < 0)
    assert np.allclose(ab, np.cumprod(np.array(s.alphas) ** 2))


def test_forward_marginal_matches_composition():
    s = rf.Schedule.linear(10, 0.1, 0.5)
    p = rf.RayFlowParams(np.array([0.5, -1.0]), 0.7)
    x0 = np.array([2.0, 1.0])
    m, v = x0.copy(), 0.0
    for t in range(1, 11):
        m = s.alpha(t) * m + (1 - s.alpha(t)) * p.eps_mu
        v = s.alpha(t) ** 2 * v + s.beta(t) ** 2 * p.sigma ** 2
    g = rf.forward_marginal(s, p, x0, 10)
    assert np.allclose(g.mean, m, atol=1e-12)
    assert math.isclose(g.var, v, rel_tol=1e-12)


def test_deterministic_round_trip():
    s = rf.Schedule.linear(16, 0.01, 0.3)
    rng = np.random.default_rng(0)
    x0 = rng.normal(size=2)
    o = rf.optimal_params(s, x0, rng.normal(size=(16, 2)))
    p = rf.RayFlowParams(o.eps_mu_star, 0.0)
    x = o.eps_hat_mu_star
    for t in range(16, 0, -1):
        x = rf.backward_step(s, p, x, t).mean
    assert np.allclose(x, x0, atol=1e-10)


def test_optimal_denoise_single_point():
    s = rf.Schedule.linear(5, 0.1, 0.3)
    e = rf.optimal_denoise(np.zeros((1, 2)), np.ones((1, 2)), s, 0.3, np.array([3.0, -1.0]), 2)
    assert np.allclose(e, 1.0)


def test_optimal_q_and_variance():
    xi = [1.0, 3.0, 0.5, 2.0]
    p = [0.25] * 4
    q = rf.optimal_q(xi, p)
    assert math.isclose(sum(q), 1.0)
    assert rf.is_exact_variance(xi, q, p) <= 1e-12
    assert rf.is_exact_variance(xi, q, p) <= rf.is_exact_variance(xi, p, p)
    assert math.isclose(rf.is_exact_mean(xi, p), 1.625)


def test_datasets_and_metrics():
    a = rf.gen_dataset("gauss8", 64, 1)
    b = rf.gen_dataset("gauss8", 64, 1)
    assert a.shape == (64, 2)
    assert np.array_equal(a, b)
    assert rf.wasserstein2(a, a) == 0.0
    assert math.isclose(rf.wasserstein2(a, a + np.array([0.3, 0.4])), 0.5, rel_tol=1e-12)
    assert rf.mmd(a, rf.gen_dataset("ring", 64, 2)) >= -1e-12
    assert set(rf.dataset_names()) == {"gauss8", "two_moons", "ring"}


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        rf.gen_dataset("spiral", 10, 0)
    with pytest.raises(ValueError):
        rf.wasserstein2(np.zeros((3, 2)), np.zeros((4, 2)))
    with pytest.raises(ValueError):
        rf.Schedule.linear(0, 0.1, 0.2)
    with pytest.raises(ValueError):
        rf.distill({"epochz": 3})


def test_distill_tiny_run_and_checkpoint(tmp_path):
    cfg = {
        "T": 20,
        "teacher_steps": 8,
        "pairs": 32,
        "samples": 32,
        "eval_steps": [1, 4],
        "epochs": 3,
        "hidden": [8],
        "sampler_hidden": [4],
        "ts_particles": 8,
        "seed": 3,
    }
    out = rf.distill(cfg, tmp_path / "run")
    assert [m["K"] for m in out["metrics"]] == [1, 4]
    assert all(m["w2"] >= 0 for m in out["metrics"])
    assert len(out["log"]["epoch_loss"]) == 3
    again = rf.distill(cfg)
    assert again["metrics"] == out["metrics"]

    student = rf.Net.load(tmp_path / "run" / "student.ckpt")
    assert student.dims[-1] == 2
    xs = rf.sample_student(student, rf.Schedule.linear(20, 0.01, 0.3), 0.3, 4, 16, 7)
    assert xs.shape == (16, 2)
    assert np.isfinite(xs).all()


def test_verify_reports_mutation():
    bad = rf.verify({"verify.mutation": "beta_tilde"})
    assert bad["schema_version"] == 1
    checks = {c["name"]: c for c in bad["checks"]}
    assert checks["schedule.beta_tilde"]["pass"] is False
