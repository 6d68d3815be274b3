import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from follow_object import nn

from gradcheck import probe, shapes_in_use
from oracles import naive_forward, scalar_adam


def _net(sizes, seed=0, act="identity"):
    spec = nn.MlpSpec(tuple(sizes), act)
    return spec, nn.init_params(spec, np.random.default_rng(seed))


def test_zero_network_outputs_zero():
    spec, p = _net((5, 7, 3))
    z = nn.MlpParams([np.zeros_like(w) for w in p.weights], [np.zeros_like(b) for b in p.biases])
    assert np.array_equal(nn.mlp_forward(z, spec, np.arange(5.0)), np.zeros(3))


def test_identity_layer():
    spec = nn.MlpSpec((4, 4))
    p = nn.MlpParams([np.eye(4)], [np.zeros(4)])
    x = np.array([0.3, -1.2, 5.0, 0.0])
    assert np.array_equal(nn.mlp_forward(p, spec, x), x)


@pytest.mark.parametrize("act", ["identity", "tanh"])
def test_forward_matches_loop_oracle(act):
    spec, p = _net((4, 8, 8, 8, 2), seed=3, act=act)
    x = np.random.default_rng(1).normal(size=4)
    ref = naive_forward(p.weights, p.biases, x, act, spec.output_scale)
    assert np.max(np.abs(nn.mlp_forward(p, spec, x) - ref)) < 1e-12


def test_batched_forward_equals_rowwise():
    spec, p = _net((6, 16, 3), seed=2)
    x = np.random.default_rng(2).normal(size=(10, 6))
    rows = np.stack([nn.mlp_forward(p, spec, r) for r in x])
    np.testing.assert_allclose(nn.mlp_forward(p, spec, x), rows, rtol=0, atol=1e-14)


def test_forward_is_pure():
    spec, p = _net((5, 9, 9, 2))
    x = np.random.default_rng(0).normal(size=(7, 5))
    before = p.flat().copy()
    a = nn.mlp_forward(p, spec, x)
    b = nn.mlp_forward(p, spec, x)
    assert a.tobytes() == b.tobytes()
    assert np.array_equal(before, p.flat())


def test_dimension_mismatch_reports_sizes():
    spec, p = _net((3, 4, 2))
    with pytest.raises(nn.ShapeError, match="expected length 3"):
        nn.mlp_forward(p, spec, np.zeros(5))
    with pytest.raises(nn.ShapeError):
        nn.mlp_backward(p, spec, np.zeros(3), np.zeros(3))


def test_spec_validation():
    with pytest.raises(ValueError):
        nn.MlpSpec((3,))
    with pytest.raises(ValueError):
        nn.MlpSpec((3, 0, 2))
    with pytest.raises(ValueError):
        nn.MlpSpec((3, 2), "sigmoid")


def test_zero_upstream_gives_zero_gradients():
    spec, p = _net((4, 8, 2))
    g, gx = nn.mlp_backward(p, spec, np.ones(4), np.zeros(2))
    assert all(np.all(a == 0) for a in g.arrays())
    assert np.all(gx == 0)


def test_linear_layer_gradient_is_outer_product():
    spec = nn.MlpSpec((3, 2))
    rng = np.random.default_rng(4)
    p = nn.MlpParams([rng.normal(size=(2, 3))], [rng.normal(size=2)])
    x, u = rng.normal(size=3), rng.normal(size=2)
    g, gx = nn.mlp_backward(p, spec, x, u)
    assert np.array_equal(g.weights[0], np.outer(u, x))
    assert np.array_equal(g.biases[0], u)
    np.testing.assert_allclose(gx, p.weights[0].T @ u, atol=1e-15)


@pytest.mark.parametrize("name", list(shapes_in_use()))
def test_gradients_match_finite_differences(name):
    spec = shapes_in_use()[name]
    assert probe(spec, 100, seed=7) < 1e-4


def test_scalar_output_every_parameter():
    spec, p = _net((3, 5, 1), seed=9)
    x = np.random.default_rng(9).normal(size=(2, 3))
    g, _ = nn.mlp_backward(p, spec, x, np.ones((2, 1)))
    arrays = p.arrays()
    for i, a in enumerate(arrays):
        for idx in np.ndindex(a.shape):
            def f(v):
                t = [b.copy() for b in arrays]
                t[i][idx] = v
                return float(nn.mlp_forward(nn.MlpParams.from_arrays(t), spec, x).sum())
            num = (f(a[idx] + 1e-6) - f(a[idx] - 1e-6)) / 2e-6
            assert abs(num - g.arrays()[i][idx]) <= 1e-4 * max(abs(num), 1e-6)


def test_adam_zero_gradient_leaves_params():
    spec, p = _net((3, 4, 2))
    adam = nn.AdamState.for_params(p)
    p2, adam2 = nn.adam_step(p, p.zeros_like(), adam, 1e-3)
    assert np.array_equal(p.flat(), p2.flat())
    assert adam2.t == 1


def test_adam_zero_lr_leaves_params():
    spec, p = _net((3, 4, 2))
    g = nn.MlpParams.from_arrays(np.ones_like(a) for a in p.arrays())
    p2, _ = nn.adam_step(p, g, nn.AdamState.for_params(p), 0.0)
    assert np.array_equal(p.flat(), p2.flat())


def test_adam_first_step_moves_by_lr():
    p = nn.MlpParams([np.array([[1.0]])], [np.array([0.0])])
    g = nn.MlpParams([np.array([[1.0]])], [np.array([1.0])])
    p2, _ = nn.adam_step(p, g, nn.AdamState.for_params(p), 1e-3)
    # bias-corrected first step: lr * 1 / (1 + eps)
    assert p2.weights[0][0, 0] == pytest.approx(1.0 - 1e-3 / (1 + 1e-8), abs=1e-15)


def test_adam_matches_scalar_oracle():
    p = nn.MlpParams([np.array([[0.5]])], [np.array([-0.2])])
    adam = nn.AdamState.for_params(p)
    grads = [0.7, 0.7, -1.3, 0.01]
    ref_w = scalar_adam(0.5, grads, 1e-2)
    ref_b = scalar_adam(-0.2, [2 * g for g in grads], 1e-2)
    for step, gv in enumerate(grads):
        g = nn.MlpParams([np.array([[gv]])], [np.array([2 * gv])])
        p, adam = nn.adam_step(p, g, adam, 1e-2)
        assert p.weights[0][0, 0] == pytest.approx(ref_w[step], abs=1e-14)
        assert p.biases[0][0] == pytest.approx(ref_b[step], abs=1e-14)
    assert adam.t == 4


def test_adam_rejects_non_finite_naming_layer():
    spec, p = _net((3, 4, 2))
    g = p.zeros_like()
    g.biases[1][0] = np.nan
    with pytest.raises(FloatingPointError, match="layer 1 bias"):
        nn.adam_step(p, g, nn.AdamState.for_params(p), 1e-3)


def test_polyak_cases():
    spec, a = _net((3, 4, 2), seed=1)
    _, b = _net((3, 4, 2), seed=2)
    assert np.array_equal(nn.polyak(a, b, 1.0).flat(), b.flat())
    assert np.array_equal(nn.polyak(a, b, 0.0).flat(), a.flat())
    # two blends of a fixed online vector: target_2 = (1-tau)^2 a + (1 - (1-tau)^2) b
    tau = 0.3
    twice = nn.polyak(nn.polyak(a, b, tau), b, tau)
    np.testing.assert_allclose(twice.flat(), 0.49 * a.flat() + 0.51 * b.flat(), atol=1e-15)


def test_final_scale_shrinks_head():
    spec = nn.MlpSpec((5, 8, 2), "tanh")
    p = nn.init_params(spec, np.random.default_rng(0), final_scale=1e-2)
    assert np.max(np.abs(p.weights[-1])) <= 1e-2 / np.sqrt(8)
    assert np.max(np.abs(p.weights[0])) > 1e-2


@settings(max_examples=25, deadline=None)
@given(sizes=st.lists(st.integers(1, 6), min_size=2, max_size=5),
       act=st.sampled_from(["identity", "tanh"]), scale=st.floats(0.1, 3.0),
       seed=st.integers(0, 2 ** 31))
def test_checkpoint_round_trip_is_bit_exact(sizes, act, scale, seed):
    spec = nn.MlpSpec(tuple(sizes), act, scale)
    p = nn.init_params(spec, np.random.default_rng(seed))
    blob = nn.dumps(p, spec)
    p2, spec2 = nn.loads(blob)
    assert spec2 == spec
    assert p2.flat().tobytes() == p.flat().tobytes()
    assert nn.dumps(p2, spec2) == blob


def test_checkpoint_header_layout():
    spec = nn.MlpSpec((2, 3), "tanh", 2.0)
    p = nn.MlpParams([np.arange(6.0).reshape(3, 2)], [np.array([1.0, 2.0, 3.0])])
    blob = nn.dumps(p, spec)
    assert blob[:8] == b"FOMLP001"
    assert int.from_bytes(blob[8:12], "little") == 2
    assert len(blob) == 8 + 4 + 8 + 1 + 8 + 8 * 9
    with pytest.raises(ValueError):
        nn.loads(b"XXXXXXXX" + blob[8:])
    with pytest.raises(ValueError):
        nn.loads(blob + b"\0")
