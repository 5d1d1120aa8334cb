import math
import warnings

import numpy as np
import pytest

from zop import (ConfigurationError, InputError, ProblemSpec, Regularizer, RunAborted,
                 SolverConfig, apply_prox, build_problem, estimate_phi_upper,
                 estimate_smoothed_value, make_exact_oracle, make_inner_min_oracle,
                 make_noisy_oracle, run_ziproxsg, select_iterate, theorem_step_size)
from zop.rng import CounterStream
from zop.solver import resolve_steps, second_moment_bound, weak_convexity

from conftest import closed_form


def l1_problem(n, reg=None):
    return closed_form(lambda x: np.sum(np.abs(x)), n,
                       batch=lambda X, XI: np.sum(np.abs(X), axis=1), G=math.sqrt(n), reg=reg,
                       name="l1")


def test_theorem_step_examples():
    a = theorem_step_size(1.0, 1.0, 1.0, 4, 0.1, 0.0, 99)
    expected = 1.0 / math.sqrt(4 * 8 * 10 * 32 * math.sqrt(2 * math.pi) * 100)
    assert a == pytest.approx(expected, rel=1e-14)
    assert a == pytest.approx(6.242e-4, rel=1e-3)
    assert theorem_step_size(1.0, 1.0, 1.0, 4, 0.1, 1e-3, 99) < a
    assert theorem_step_size(1.0, 1.0, 1.0, 4, 0.1, 0.0, 399) == pytest.approx(a / 2, rel=1e-14)
    with pytest.raises(InputError):
        theorem_step_size(0.0, 1.0, 1.0, 4, 0.1, 0.0, 99)


def test_constants():
    assert weak_convexity(2.0, 9, 0.5) == pytest.approx(12.0)
    assert second_moment_bound(4, 1.0, 0.1, 0.0) == pytest.approx(
        32 * math.sqrt(2 * math.pi) * 4)


def test_select_iterate_examples():
    assert select_iterate([0.3], 0.999) == 0
    assert select_iterate([1.0, 3.0], 0.25) == 0  # boundary goes to the lower index
    assert select_iterate([1.0, 3.0], 0.2500001) == 1
    gen = np.random.default_rng(0)
    N = 100_000
    draws = np.array([select_iterate([1.0, 3.0], gen) for _ in range(N)])
    assert abs(draws.mean() - 0.75) <= 3 * math.sqrt(0.75 * 0.25 / N)
    u = gen.random(N)
    counts = np.bincount([select_iterate(np.full(5, 0.1), v) for v in u], minlength=5)
    assert np.all(np.abs(counts / N - 0.2) <= 3 * math.sqrt(0.2 * 0.8 / N))
    with pytest.raises(InputError):
        select_iterate([], 0.5)
    with pytest.raises(InputError):
        select_iterate([1.0, 0.0], 0.5)


def test_constant_function_zero_horizon():
    pb = closed_form(lambda x: 2.0, 3, batch=lambda X, XI: np.full(len(X), 2.0))
    rec = run_ziproxsg(pb, make_exact_oracle(pb), SolverConfig(mu=0.1, T=0, x0=[0.1, 0.2, 0.3]))
    assert rec.t_star == 0
    np.testing.assert_array_equal(rec.iterate(1), rec.iterate(0))
    np.testing.assert_array_equal(rec.x_star, [0.1, 0.2, 0.3])


def test_one_dimensional_linear_descends_deterministically():
    pb = closed_form(lambda x: x[0], 1, batch=lambda X, XI: X[:, 0])
    cfg = SolverConfig(mu=0.1, T=50, x0=[0.0], step_mode="constant", gamma=0.01)
    rec = run_ziproxsg(pb, make_exact_oracle(pb), cfg)
    np.testing.assert_allclose(rec.iterates[:, 0], -0.01 * np.arange(52), atol=1e-13)
    np.testing.assert_allclose(rec.grad_norms, 1.0, atol=1e-12)


def test_determinism_and_seed_dependence():
    pb = build_problem(ProblemSpec("max_affine", 3))
    orc = make_exact_oracle(pb)
    cfg = SolverConfig(mu=0.1, T=300, x0=np.zeros(3), seed=7)
    a, b = run_ziproxsg(pb, orc, cfg), run_ziproxsg(pb, orc, cfg)
    for field in ("iterates", "step_sizes", "grad_norms", "plus_vals", "minus_vals", "grads"):
        np.testing.assert_array_equal(getattr(a, field), getattr(b, field))
    assert a.t_star == b.t_star
    cfg.seed = 8
    c = run_ziproxsg(pb, orc, cfg)
    assert not np.array_equal(a.iterates, c.iterates)


@pytest.mark.parametrize("reg", [Regularizer.box(-0.5, 0.5), Regularizer.l2ball(0.5),
                                 Regularizer.l1_plus_box(0.1, -0.5, 0.5)], ids=lambda r: r.kind)
def test_feasibility_and_update_identity(reg):
    pb = l1_problem(3, reg)
    orc = make_exact_oracle(pb)
    cfg = SolverConfig(mu=0.05, T=500, x0=[0.4, -0.3, 0.0], seed=1, phi_upper=50.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rec = run_ziproxsg(pb, orc, cfg)
    assert rec.dense
    for t in range(cfg.T + 1):
        assert reg.contains(rec.iterates[t + 1])
        x_next = apply_prox(reg, rec.iterates[t] - rec.step_sizes[t] * rec.grads[t],
                            rec.step_sizes[t])
        assert np.array_equal(x_next, rec.iterates[t + 1])
    assert rec.oracle_calls == 2 * (cfg.T + 1)
    np.testing.assert_allclose(rec.x_norms, np.linalg.norm(rec.iterates, axis=1), rtol=1e-15)
    assert np.array_equal(rec.x_star, rec.iterates[rec.t_star])


def test_config_errors():
    pb = l1_problem(2)
    orc = make_exact_oracle(pb)
    with pytest.raises(ConfigurationError) as ei:
        run_ziproxsg(pb, orc, SolverConfig(mu=-1.0, T=-1, x0=[0, 0], rho_bar_factor=3.0))
    keys = {k for k, _ in ei.value.violations}
    assert {"solver.mu", "solver.T", "solver.rho_bar_factor"} <= keys
    with pytest.raises(ConfigurationError):
        run_ziproxsg(pb, orc, SolverConfig(mu=0.1, T=5, x0=[0, 0, 0]))
    boxed = l1_problem(2, Regularizer.box(-1, 1))
    with pytest.raises(ConfigurationError) as ei:
        run_ziproxsg(boxed, orc, SolverConfig(mu=0.1, T=5, x0=[2.0, 0.0]))
    assert ei.value.violations[0][0] == "solver.x0"
    with pytest.raises(ConfigurationError):
        run_ziproxsg(pb, orc, SolverConfig(mu=0.1, T=5, x0=[0, 0], step_mode="constant",
                                           gamma=1.0))
    with pytest.raises(ConfigurationError):
        run_ziproxsg(pb, orc, SolverConfig(mu=0.1, T=2, x0=[0, 0], step_mode="custom",
                                           steps=[1e-3, 1e-3]))
    with pytest.raises(ConfigurationError):
        SolverConfig(mu=0.1, T=2, x0=[0, 0], step_mode="newton").validate()


def test_theorem_step_clipped_with_warning():
    pb = l1_problem(2)
    cfg = SolverConfig(mu=0.1, T=0, x0=[0, 0], phi_upper=1e12)
    with pytest.warns(RuntimeWarning):
        steps, rho, rho_bar = resolve_steps(pb, make_exact_oracle(pb), cfg)
    assert steps[0] == pytest.approx(1.0 / rho_bar)
    assert rho_bar == pytest.approx(2.0 * rho)


def test_custom_steps_and_zeta():
    pb = l1_problem(2)
    steps = np.linspace(1e-3, 2e-3, 11)
    rec = run_ziproxsg(pb, make_exact_oracle(pb), SolverConfig(
        mu=0.1, T=10, x0=[0.5, 0.5], step_mode="custom", steps=steps))
    np.testing.assert_array_equal(rec.step_sizes, steps)
    assert np.all((rec.zeta > 0) & (rec.zeta < 1))


def test_oracle_failure_aborts_with_partial_record():
    pb = build_problem(ProblemSpec("two_stage_qp", 2, m=2))
    orc = make_inner_min_oracle(pb, 1e-14, budget=1)
    with pytest.raises(RunAborted) as ei:
        run_ziproxsg(pb, orc, SolverConfig(mu=0.05, T=20, x0=[0.5, -0.5]))
    rec = ei.value.record
    assert rec is not None and not rec.complete
    np.testing.assert_array_equal(rec.x_star, [0.5, -0.5])


def test_strided_record_keeps_selected_and_last():
    pb = l1_problem(2)
    orc = make_exact_oracle(pb)
    cfg = SolverConfig(mu=0.1, T=999, x0=[0.3, 0.3], seed=3)
    full = run_ziproxsg(pb, orc, cfg)
    cfg.iterate_cap = 50
    part = run_ziproxsg(pb, orc, cfg)
    assert not part.dense and len(part.iterate_index) <= 52
    assert part.t_star == full.t_star
    np.testing.assert_array_equal(part.x_star, full.x_star)
    np.testing.assert_array_equal(part.x_final, full.iterates[-1])
    np.testing.assert_array_equal(part.x_norms, full.x_norms)
    with pytest.raises(InputError):
        part.iterate(int(np.setdiff1d(np.arange(1001), part.iterate_index)[0]))


def test_noisy_oracle_run_and_phi_helper():
    pb = build_problem(ProblemSpec("l1_minus_l2", 3))
    orc = make_noisy_oracle(pb, 1e-4)
    x0 = np.array([0.5, 0.2, 0.1])
    phi = estimate_phi_upper(pb, make_exact_oracle(pb), x0, 0.05, phi_lower=0.0,
                             num_samples=500)
    assert phi >= 2 * (0.8 - math.sqrt(0.3)) - 0.1
    rec = run_ziproxsg(pb, orc, SolverConfig(mu=0.05, T=200, x0=x0, phi_upper=phi))
    assert rec.complete and np.all(np.abs(rec.iterates) <= 1.0)


def test_descent_in_expectation_on_l1():
    n, mu, T = 4, 0.05, 2000
    pb = l1_problem(n)
    orc = make_exact_oracle(pb)
    x0 = np.ones(n)
    checks = [0, 500, 1000, 1500, 2000]
    vals = np.zeros((20, len(checks)))
    ses = np.zeros_like(vals)
    for s in range(20):
        rec = run_ziproxsg(pb, orc, SolverConfig(mu=mu, T=T, x0=x0, seed=s, phi_upper=8.0))
        for j, t in enumerate(checks):
            vals[s, j], ses[s, j] = estimate_smoothed_value(orc, rec.iterate(t), mu, 2000,
                                                            CounterStream(s, ("check", t)))
    mean = vals.mean(axis=0)
    band = 3 * np.sqrt(np.sum(ses ** 2, axis=0)) / 20
    for j in range(1, len(checks)):
        assert mean[j] <= mean[j - 1] + band[j] + band[j - 1]
    assert mean[-1] < mean[0]
