import numpy as np
import pytest

from freshsip.exceptions import BudgetExceeded
from freshsip.model_io import Hyperrectangle, MaxViolation, Network, PolytopeAvoid
from freshsip.optimizer import region_bound
from freshsip.relaxation import forward_pass
from freshsip.testkit import GenSpec, certified_opt, gen_network, identity_network, sample_max


def test_gen_network_deterministic():
    spec = GenSpec(seed=42)
    assert gen_network(spec) == gen_network(spec)
    assert gen_network(spec) != gen_network(GenSpec(seed=43))


def test_single_neuron_spec():
    net = gen_network(GenSpec(input_dim=(1, 1), hidden_layers=(1, 1), width=(1, 1), output_dim=(1, 1)))
    assert net.layer_sizes == [1, 1, 1]


def test_gen_spec_validation():
    with pytest.raises(ValueError):
        GenSpec(width=(3, 2))
    with pytest.raises(ValueError):
        GenSpec(weight_scale=0.0)


def test_sample_max_identity():
    v = sample_max(identity_network(1), Hyperrectangle([-1.0], [1.0]), MaxViolation([1.0], 0.0), 10_000)
    assert 0.99 < v <= 1.0


def test_sample_max_constant():
    net = Network([np.zeros((2, 1)), np.zeros((1, 2))], [np.zeros(2), np.array([0.7])])
    assert sample_max(net, Hyperrectangle([-1.0], [1.0]), MaxViolation([1.0], 0.0), 50) == 0.7


def test_certified_affine_exact():
    net = identity_network(2)
    box = Hyperrectangle([-1.0, 0.0], [2.0, 1.0])
    lo, hi = certified_opt(net, box, MaxViolation([1.0, -2.0], 0.5))
    assert lo == hi == pytest.approx(2.5)


def test_certified_relu():
    net = Network([np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
    lo, hi = certified_opt(net, Hyperrectangle([-1.0], [1.0]), MaxViolation([1.0], 0.0))
    assert lo <= 1.0 <= hi and hi - lo <= 1e-3


def test_certified_gap_and_delta_validation():
    net = identity_network(1)
    box = Hyperrectangle([-1.0], [1.0])
    with pytest.raises(ValueError):
        certified_opt(net, box, MaxViolation([1.0], 0.0), delta=0.0)
    with pytest.raises(ValueError):
        certified_opt(net, box, MaxViolation([1.0], 0.0), gap=-1.0)


def test_certified_stop_at_zero():
    net = Network([np.array([[1.0]]), np.array([[1.0]])], [np.zeros(1), np.zeros(1)])
    lo, hi = certified_opt(net, Hyperrectangle([-1.0], [1.0]), MaxViolation([1.0], -0.5), stop_at_zero=True)
    assert lo > 0.0 and lo <= 0.5 <= hi


def test_certified_polytope_affine_lp():
    # min over the box of max(y0, y1) for y = x is attained on the diagonal corner
    net = identity_network(2)
    box = Hyperrectangle([-1.0, -2.0], [1.0, 1.0])
    lo, hi = certified_opt(net, box, PolytopeAvoid([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0]))
    assert lo == pytest.approx(-1.0, abs=1e-6) and hi == pytest.approx(-1.0, abs=1e-9)
    assert lo <= hi


def test_certified_budget():
    net = gen_network(GenSpec(input_dim=(3, 3), hidden_layers=(3, 3), width=(10, 10), output_dim=(1, 1), seed=1))
    with pytest.raises(BudgetExceeded):
        certified_opt(net, Hyperrectangle(-np.ones(3), np.ones(3)), MaxViolation([1.0], 0.0), max_regions=3)


@pytest.mark.parametrize("seed", range(15))
def test_enclosure_sandwich(seed):
    net = gen_network(GenSpec(hidden_layers=(1, 3), width=(1, 6), output_dim=(2, 2), seed=seed))
    box = Hyperrectangle(-np.ones(net.input_dim), np.ones(net.input_dim))
    for obj in (MaxViolation([1.0, -0.5], 0.0), PolytopeAvoid([[1.0, 0.0], [0.0, 1.0]], [0.0, 0.0])):
        lo, hi = certified_opt(net, box, obj, delta=1e-2, gap=1e-2)
        assert hi - lo <= 0.5
        s = sample_max(net, box, obj, 1000, seed)
        bound = region_bound(forward_pass(net, box), obj)
        if isinstance(obj, MaxViolation):
            assert lo <= hi + 1e-6 and s <= hi + 1e-6 and hi <= bound + 1e-6
        else:
            assert lo <= s + 1e-6 and lo >= bound - 1e-6
