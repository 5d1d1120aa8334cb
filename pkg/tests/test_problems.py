import math

import numpy as np
import pytest

from zop import (ConfigurationError, InputError, ProblemSpec, Regularizer, ScenarioStream,
                 UnsupportedOperation, build_problem, evaluate_exact, lipschitz_constant,
                 list_problems, reference_solution, saa_objective)
from zop.oracles import solve_inner
from zop.problems import ZOO, default_regularizer


def test_zoo_listing():
    assert set(list_problems()) == set(ZOO)
    assert len(ZOO) == 7


@pytest.mark.parametrize("name", sorted(ZOO))
def test_every_instance_builds(name):
    pb = build_problem(ProblemSpec(name, 3))
    assert pb.n == 3 and pb.name == name
    assert pb.f.lipschitz_bound > 0
    assert pb.r == default_regularizer(name, 3)


def test_closed_form_examples():
    pb = build_problem(ProblemSpec("norm_sharp", 5))
    x = np.arange(5.0)
    assert evaluate_exact(pb, x, np.zeros(1)) == pytest.approx(np.linalg.norm(x))
    assert lipschitz_constant(ProblemSpec("norm_sharp", 5)) == 1.0
    pb = build_problem(ProblemSpec("l1_minus_l2", 4))
    assert evaluate_exact(pb, np.eye(4)[0], np.zeros(1)) == 0.0
    assert lipschitz_constant(ProblemSpec("l1_minus_l2", 4)) == 3.0
    pb = build_problem(ProblemSpec("cusp_box", 2))
    assert evaluate_exact(pb, np.array([1.0, 0.3]), np.zeros(1)) == 0.0
    assert evaluate_exact(pb, np.array([-1.5, 0.0]), np.zeros(1)) == 1.0


def test_mm_instant_closed_form_branches():
    spec = ProblemSpec("mm_instant", 2, m=2, noise_scale=0.0, regularizer=Regularizer.zero())
    pb = build_problem(spec)
    for x in (np.array([0.1, 0.05]), np.array([5.0, -5.0])):
        v = np.linalg.norm(pb.inner.data(x, np.zeros(4))[1])
        expected = 0.5 * v * v if v <= 1 else v - 0.5
        assert evaluate_exact(pb, x, np.zeros(4)) == pytest.approx(expected, rel=1e-13)


def test_instance_data_depends_on_seed_only():
    a = build_problem(ProblemSpec("max_affine", 3, data_seed=1))
    b = build_problem(ProblemSpec("max_affine", 3, data_seed=1))
    c = build_problem(ProblemSpec("max_affine", 3, data_seed=2))
    X = np.random.default_rng(0).uniform(-1, 1, (10, 3))
    XI = ScenarioStream(0, a.law).take(10)
    np.testing.assert_array_equal(a.f.values(X, XI), b.f.values(X, XI))
    assert not np.array_equal(a.f.values(X, XI), c.f.values(X, XI))


def test_two_stage_inner_matrices_are_positive_definite():
    spec = ProblemSpec("two_stage_qp", 3, m=4, kappa=0.5, noise_scale=0.5)
    pb = build_problem(spec)
    for xi in ScenarioStream(1, pb.law).take(200):
        Q = pb.inner.data(np.zeros(3), xi)[0]
        assert np.allclose(Q, Q.T) and np.linalg.eigvalsh(Q)[0] >= 0.5 - 1e-12


def test_two_stage_large_m_uses_inner_solver():
    pb = build_problem(ProblemSpec("two_stage_qp", 2, m=5))
    assert not pb.f.exact
    x, xi = np.array([0.3, -0.7]), ScenarioStream(2, pb.law).take(1)[0]
    rep = solve_inner(pb.inner, x, xi, 1e-12, 100_000)
    assert pb.f.eval(x, xi) == pytest.approx(rep.value, abs=1e-10)


def test_danskin_lipschitz_audit():
    spec = ProblemSpec("two_stage_qp", 3, m=3, noise_scale=0.3, nonconvex_weight=0.5)
    pb = build_problem(spec)
    G = lipschitz_constant(spec)
    rng = np.random.default_rng(5)
    worst = 0.0
    for xi in ScenarioStream(3, pb.law).take(200):
        x = rng.uniform(-1, 1, 3)
        d = rng.normal(size=3)
        y = np.clip(x + 1e-3 * rng.uniform(0.1, 10) * d / np.linalg.norm(d), -1, 1)
        fx = solve_inner(pb.inner, x, xi, 1e-8, 100_000).value
        fy = solve_inner(pb.inner, y, xi, 1e-8, 100_000).value
        dist = np.linalg.norm(x - y)
        if dist > 1e-6:
            # each value may be off by the inner tolerance
            worst = max(worst, (abs(fx - fy) - 2e-8) / dist)
    assert worst <= 1.05 * G


def test_spec_violations_are_collected():
    with pytest.raises(ConfigurationError) as ei:
        build_problem(ProblemSpec("two_stage_qp", 0, m=0, kappa=-1.0))
    keys = {k for k, _ in ei.value.violations}
    assert {"problem.n", "problem.m", "problem.kappa"} <= keys
    with pytest.raises(ConfigurationError):
        build_problem(ProblemSpec("rosenbrock", 2))
    with pytest.raises(ConfigurationError):
        build_problem(ProblemSpec("cusp_box", 2, regularizer=Regularizer.zero()))
    with pytest.raises(ConfigurationError):
        build_problem(ProblemSpec("max_affine", 2, regularizer=Regularizer.box([-1, -1, -1], 1)))


def test_reference_closed_form():
    ref = reference_solution(ProblemSpec("norm_sharp", 6))
    assert ref.method == "closed_form" and ref.phi_ref == 0.0
    np.testing.assert_array_equal(ref.x_ref, np.zeros(6))


def test_reference_cusp():
    ref = reference_solution(ProblemSpec("cusp_box", 1), resolution=1e-2)
    assert ref.method == "grid"
    assert ref.phi_ref == pytest.approx(0.0, abs=1e-12)
    assert ref.x_ref[0] == pytest.approx(1.0, abs=1e-2)


def test_reference_two_stage_grid():
    spec = ProblemSpec("two_stage_qp", 2, m=2)
    ref = reference_solution(spec, resolution=1e-2, num_scenarios=200)
    assert ref.method == "saa_grid" and ref.num_scenarios == 200
    pb = build_problem(spec)
    # no point on a finer local grid beats the reference by more than the grid can resolve
    h = np.linspace(-0.01, 0.01, 11)
    local = np.array([[a, b] for a in h for b in h]) + ref.x_ref
    local = local[np.all(np.abs(local) <= 1, axis=1)]
    vals = saa_objective(pb, local, num_scenarios=200)
    G = lipschitz_constant(spec)
    assert np.min(vals) >= ref.phi_ref - G * 1e-2 * math.sqrt(2)
    assert ref.objective_range > 0


def test_reference_limits():
    with pytest.raises(UnsupportedOperation):
        reference_solution(ProblemSpec("max_affine", 4))
    with pytest.raises(InputError):
        reference_solution(ProblemSpec("max_affine", 2), resolution=0.0)
