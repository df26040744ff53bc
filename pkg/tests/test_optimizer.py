import numpy as np
import pytest

from freshsip.exceptions import AllDegenerate, ZeroWidth
from freshsip.model_io import Hyperrectangle, MaxViolation, Network, PolytopeAvoid, VerificationProblem
from freshsip.optimizer import (
    SolverConfig,
    SubProblem,
    bisect,
    candidate_point,
    choose_split,
    evaluate_region,
    region_bound,
    smear_scores,
    solve,
)
from freshsip.relaxation import FreshVarConfig, LayerStatus, NeuronState, PassResult, forward_pass
from freshsip.symbolic import ConcreteBounds, init_identity
from freshsip.testkit import GenSpec, gen_network, identity_network


def _fake_pass(lower, upper, states):
    lower, upper = np.atleast_2d(lower), np.atleast_2d(upper)
    n = lower.shape[0]
    b = ConcreteBounds(-np.ones(n), np.ones(n))
    st = LayerStatus(np.asarray(states, dtype=np.int8), b, b, b)
    dom = Hyperrectangle(-np.ones(lower.shape[1]), np.ones(lower.shape[1]))
    return PassResult(init_identity(dom), [b], [st], [lower], [upper])


def test_smear_example():
    region = Hyperrectangle([0.0, 0.0], [2.0, 4.0])
    p = _fake_pass([[0.5, 0.0]], [[1.0, 0.25]], [NeuronState.UNSTABLE])
    np.testing.assert_allclose(smear_scores(p, region), [1.5, 0.5])
    assert choose_split(p, region) == 0


def test_smear_ignores_stable_and_zero_width():
    region = Hyperrectangle([0.0, 1.0], [2.0, 1.0])
    p = _fake_pass([[0.5, 3.0]], [[1.0, 3.0]], [NeuronState.FIXED_ACTIVE])
    assert not smear_scores(p, region).any()
    p = _fake_pass([[0.5, 3.0]], [[1.0, 3.0]], [NeuronState.UNSTABLE])
    assert smear_scores(p, region)[1] == 0.0


def test_choose_split_fallback_and_ties():
    p = _fake_pass([[0.0, 0.0]], [[0.0, 0.0]], [NeuronState.FIXED_ZERO])
    assert choose_split(p, Hyperrectangle([0.0, 0.0], [1.0, 3.0])) == 1
    assert choose_split(p, Hyperrectangle([0.0, 0.0], [2.0, 2.0]), "widest") == 0
    with pytest.raises(AllDegenerate):
        choose_split(p, Hyperrectangle([0.0, 0.0], [0.0, 0.0]), min_width=1e-12)
    with pytest.raises(ValueError):
        choose_split(p, Hyperrectangle([0.0], [1.0]), "random")


def test_bisect_examples():
    a, b = bisect(Hyperrectangle([-1.0], [1.0]), 0)
    assert a == Hyperrectangle([-1.0], [0.0]) and b == Hyperrectangle([0.0], [1.0])
    a, b = bisect(Hyperrectangle([0.0, 0.0], [4.0, 2.0]), 1)
    assert a == Hyperrectangle([0.0, 0.0], [4.0, 1.0])
    assert b == Hyperrectangle([0.0, 1.0], [4.0, 2.0])
    with pytest.raises(ZeroWidth):
        bisect(Hyperrectangle([0.0, 0.0], [0.0, 1.0]), 0)


def test_candidate_argmax_and_center(fig1_network, unit_square):
    p = forward_pass(fig1_network, unit_square)
    obj = MaxViolation([1.0], 0.0)
    np.testing.assert_array_equal(candidate_point(p, unit_square, obj), [1.0, 0.0])
    box = Hyperrectangle([0.0, 0.0], [4.0, 2.0])
    np.testing.assert_array_equal(candidate_point(p, box, obj, "center"), [2.0, 1.0])


def test_region_bound_examples(fig1_network, unit_square):
    ident = identity_network(1)
    line = Hyperrectangle([-1.0], [1.0])
    assert region_bound(forward_pass(ident, line), MaxViolation([1.0], 0.0)) == 1.0
    p = forward_pass(fig1_network, unit_square)
    assert region_bound(p, MaxViolation([1.0], 0.0)) == pytest.approx(2.5)


def test_polytope_bound_and_candidate():
    net = identity_network(2)
    box = Hyperrectangle([-1.0, -1.0], [1.0, 1.0])
    # unsafe set: y0 <= -0.5 and y1 <= 0.5
    obj = PolytopeAvoid([[1.0, 0.0], [0.0, 1.0]], [0.5, -0.5])
    p = forward_pass(net, box)
    assert region_bound(p, obj) == pytest.approx(-0.5)
    x = candidate_point(p, box, obj)
    assert obj.violated(net.forward(x)).all()


def _ident_problem(b):
    return VerificationProblem(identity_network(1), Hyperrectangle([-1.0], [1.0]), MaxViolation([1.0], b))


def test_solve_unsat_at_root():
    r = solve(_ident_problem(-2.0))
    assert r.verdict == "UNSAT" and r.bound == -1.0 and r.nodes == 1


def test_solve_sat_at_root():
    r = solve(_ident_problem(0.0))
    assert r.verdict == "SAT"
    np.testing.assert_array_equal(r.counterexample, [1.0])
    assert r.counterexample_value == 1.0


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(timeout=0)
    with pytest.raises(ValueError):
        SolverConfig(split_rule="nope")


def _random_problem(seed, polytope=False):
    rng = np.random.default_rng(seed)
    net = gen_network(GenSpec(input_dim=(1, 3), hidden_layers=(1, 3), width=(2, 8), output_dim=(2, 3), seed=seed))
    box = Hyperrectangle(-np.ones(net.input_dim), np.ones(net.input_dim))
    ys = net.forward(box.sample(rng, 200))
    if polytope:
        C = rng.normal(size=(2, net.output_dim))
        g = ys @ C.T
        return VerificationProblem(net, box, PolytopeAvoid(C, -np.median(g, axis=0) + rng.normal(scale=0.3, size=2)))
    c = rng.normal(size=net.output_dim)
    v = ys @ c
    return VerificationProblem(net, box, MaxViolation(c, -v.max() + rng.normal(scale=0.3)))


@pytest.mark.parametrize("seed", range(30))
@pytest.mark.parametrize("polytope", [False, True])
def test_verdict_soundness(seed, polytope):
    problem = _random_problem(seed, polytope)
    r = solve(problem, SolverConfig(timeout=3.0))
    obj = problem.objective
    if r.verdict == "INCONCLUSIVE":
        # residual bounds must still straddle the decision threshold
        if polytope:
            assert r.bound <= 0.0 < r.best_value
        else:
            assert r.best_value <= 0.0 < r.bound
    elif r.verdict == "SAT":
        assert problem.input.contains(r.counterexample)
        y = problem.network.forward(r.counterexample)
        assert obj.violated(y)
        assert float(obj.value(y)) == pytest.approx(r.counterexample_value, abs=1e-9)
    else:
        xs = problem.input.sample(np.random.default_rng(seed + 1), 10_000)
        assert not obj.violated(problem.network.forward(xs)).any()


@pytest.mark.parametrize("seed", range(5))
def test_determinism(seed):
    problem = _random_problem(seed)
    a, b = solve(problem), solve(problem)
    da, db = a.to_dict(), b.to_dict()
    da.pop("elapsed"), db.pop("elapsed")
    assert da == db


@pytest.mark.parametrize("seed", range(20))
def test_child_bound_never_worse(seed):
    problem = _random_problem(seed)
    cfg = SolverConfig()
    p, bound = evaluate_region(problem, problem.input, cfg)
    parent = SubProblem(problem.input, p.bounds, bound, 0)
    for child in bisect(problem.input, choose_split(p, problem.input)):
        _, cb = evaluate_region(problem, child, cfg, parent)
        assert cb <= bound


@pytest.mark.parametrize("split, cand, fresh", [
    ("widest", "argmax", FreshVarConfig()),
    ("smear", "center", FreshVarConfig()),
    ("smear", "argmax", FreshVarConfig.disabled()),
    ("smear", "argmax", FreshVarConfig.neurodiff()),
])
def test_ablations_agree(split, cand, fresh):
    for seed in range(10):
        problem = _random_problem(seed)
        ref = solve(problem).verdict
        alt = solve(problem, SolverConfig(fresh=fresh, split_rule=split, candidate_rule=cand,
                                          monotone_refinement=cand == "argmax")).verdict
        assert ref == alt


def test_max_nodes_and_timeout_are_inconclusive():
    net = Network([np.array([[1.0], [-1.0]]), np.array([[-1.0, -1.0]])], [np.zeros(2), np.zeros(1)])
    problem = VerificationProblem(net, Hyperrectangle([-1.0], [1.3]), MaxViolation([1.0], -1e-3))
    r = solve(problem, SolverConfig(max_nodes=1))
    assert r.verdict == "INCONCLUSIVE" and r.reason == "max_nodes" and r.bound > 0
    assert solve(problem).verdict == "UNSAT"
