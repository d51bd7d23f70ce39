import math

import numpy as np
import pytest

from semalign import grad as G
from semalign import model as M
from semalign import numerics as N


def small(seed=0):
    return M.init(M.default_stream(5, (6, 6), 4), M.default_stream(7, (6, 6), 4), seed)


def test_same_seed_same_parameters():
    a, b = small(3).state(), small(3).state()
    assert a.keys() == b.keys()
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_glorot_bounds_and_zero_biases():
    m = small(1)
    for layer in (m.encoder_a, m.head_a, m.encoder_b, m.head_b):
        for w, b in layer.layers:
            fan_in, fan_out = w.shape
            assert np.all(np.abs(w.value) <= math.sqrt(6 / (fan_in + fan_out)))
            assert np.all(b.value == 0)


def test_streams_use_distinct_subseeds():
    spec = M.default_stream(5, (6, 6), 4)
    m = M.init(spec, spec, 0)
    assert not np.array_equal(m.encoder_a.layers[0][0].value, m.encoder_b.layers[0][0].value)


def test_tau_initialization_and_clamp():
    m = small()
    assert m.tau().item() == pytest.approx(0.07, rel=1e-12)
    m.tau_log.value = np.array(10.0)
    assert m.tau().item() == 100.0
    m.tau_log.value = np.array(-10.0)
    assert m.tau().item() == 0.01


def test_zero_input_zero_weights_gives_zero_output():
    m = small()
    for p in m.params():
        p.value = np.zeros_like(p.value)
    u, v = m.forward(np.zeros((3, 5)), np.zeros((3, 7)))
    assert np.all(u.value == 0) and np.all(v.value == 0)


@pytest.mark.parametrize("rows", [1, 4, 17])
def test_output_shapes(rows):
    u, v = small().forward(np.ones((rows, 5)), np.ones((rows, 7)))
    assert u.shape == (rows, 4) and v.shape == (rows, 4)


def test_width_mismatch():
    with pytest.raises(N.DimensionError):
        small().embed_a(np.ones((2, 6)))
    with pytest.raises(ValueError):
        M.init(M.default_stream(5, (6,), 4), M.default_stream(5, (6,), 3))


def test_first_layer_gradient():
    m = small(2)
    x = N.make_rng(0).uniform(-2, 2, size=(6, 5))
    w = m.encoder_a.layers[0][0]
    _, (g,) = G.value_and_grad(G.gsum(m.embed_a(x)), [w])
    orig = w.value.copy()

    def f(val):
        w.value = val
        return float(np.sum(m.embed_a(x).value))

    fd = N.finite_diff_grad(f, orig)
    w.value = orig
    assert N.relative_error(g, fd) < 1e-5


def test_no_parameter_aliasing_between_streams():
    m = small()
    xb = N.make_rng(1).normal(size=(3, 7))
    before = m.embed_b(xb).value.copy()
    for p in m.encoder_a.params() + m.head_a.params():
        p.value += 1.0
    assert np.array_equal(m.embed_b(xb).value, before)


def test_relu_activation():
    m = M.init(M.default_stream(3, (4,), 2, "relu"), M.default_stream(3, (4,), 2, "relu"))
    assert m.embed_a(np.ones((2, 3))).shape == (2, 2)
    with pytest.raises(ValueError):
        M.MlpSpec([3, 2], activation="sigmoid")


class TestAugment:
    def test_zero_strength_is_identity(self):
        x = N.make_rng(0).normal(size=(4, 3))
        assert np.array_equal(M.augment(x, 0.0, N.make_rng(1)), x)

    def test_deterministic(self):
        x = N.make_rng(0).normal(size=(4, 3))
        assert np.array_equal(M.augment(x, 0.2, N.make_rng(5)), M.augment(x, 0.2, N.make_rng(5)))

    def test_noise_level(self):
        rng = N.make_rng(2)
        x = rng.normal(size=(2500, 4)) * np.array([1.0, 3.0, 0.5, 10.0])
        noise = M.augment(x, 0.2, rng) - x
        target = 0.2 * x.std(axis=0)
        np.testing.assert_allclose(noise.std(axis=0), target, rtol=0.1)

    def test_negative_strength(self):
        with pytest.raises(ValueError):
            M.augment(np.ones((2, 2)), -0.1, N.make_rng(0))


def test_checkpoint_round_trip(tmp_path):
    m = small(4)
    m.tau_log.value = np.array(-1.5)
    beta = G.Param(np.array([0.2, -0.3]), name="beta_logits")
    path = tmp_path / "ck.npz"
    rng = N.make_rng(9)
    M.save_checkpoint(path, m, [beta], {"t": np.array(3)}, rng.bit_generator.state, "abc", 7)
    m2, extra, opt, meta = M.load_checkpoint(path)
    assert all(np.array_equal(m.state()[k], m2.state()[k]) for k in m.state())
    assert np.array_equal(extra["beta_logits"], beta.value)
    assert int(opt["t"]) == 3
    assert meta["config_hash"] == "abc" and meta["epoch"] == 7
    restored = np.random.Generator(np.random.PCG64())
    restored.bit_generator.state = meta["rng_state"]
    assert restored.normal() == rng.normal()
    x = np.ones((2, 5))
    assert np.array_equal(m.embed_a(x).value, m2.embed_a(x).value)
