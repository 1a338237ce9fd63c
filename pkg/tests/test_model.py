import numpy as np
import pytest

from stockcnn.errors import ConfigError
from stockcnn.nn import functional as F
from stockcnn.nn.model import (LayerSpec, Model, ModelSpec, build_model, decay_names,
                               default_architecture, output_shapes, param_names)
from stockcnn.rng import Prng

from _gradcheck import model_gradcheck


@pytest.fixture(scope="module")
def small_spec():
    return default_architecture(window_len=32, scale=0.25)


@pytest.fixture(scope="module")
def full_model():
    return build_model(default_architecture(), 1)


def test_default_architecture_layout():
    spec = default_architecture()
    kinds = [layer.kind for layer in spec.layers]
    assert kinds[:2] == ["conv1d", "relu"]
    assert kinds.count("conv1d") == 8 and kinds.count("dense") == 2
    assert kinds.count("batchnorm1d") == 7
    assert kinds[-6:] == ["flatten", "dense", "leaky_relu", "dropout", "dense", "softmax"]
    shapes = output_shapes(spec)
    convs = [s for layer, s in zip(spec.layers, shapes) if layer.kind == "conv1d"]
    assert convs == [(32, 128), (64, 64), (128, 32), (256, 16), (256, 8), (512, 4), (512, 2), (1024, 1)]
    assert shapes[-1] == (2,)
    assert all(layer["kernel_width"] == 9 and layer["stride"] == 2
               for layer in spec.layers if layer.kind == "conv1d")


def test_full_scale_logits_shape_b250(full_model):
    x = np.random.default_rng(0).uniform(size=(250, 10, 256))
    logits = full_model.logits(x)
    assert logits.shape == (250, 2) and np.all(np.isfinite(logits))


def test_small_scale_logits_shape(small_spec):
    model = build_model(small_spec, 3)
    x = np.random.default_rng(1).uniform(size=(5, 10, 32))
    assert model.logits(x).shape == (5, 2)
    assert model.forward(x, train=True)[0].shape == (5, 2)


def test_param_names_and_shapes(small_spec):
    model = build_model(small_spec, 2)
    assert list(model.params) == param_names(small_spec)
    assert param_names(small_spec)[:2] == ["layer0.W", "layer0.b"]
    assert "layer3.gamma" in model.params
    assert all(n.endswith(".W") for n in decay_names(small_spec))
    for name, arr in model.params.items():
        if name.endswith((".b", ".beta", "running_mean")):
            assert not arr.any()
        elif name.endswith((".gamma", "running_var")):
            assert np.all(arr == 1)


def test_he_init_from_prng(small_spec):
    model = build_model(small_spec, 5)
    w0 = model.params["layer0.W"]
    expected = Prng(5).normal(w0.size).reshape(w0.shape) * np.sqrt(2.0 / (10 * 9))
    assert np.array_equal(w0, expected)
    big = model.params["layer24.W"]
    assert abs(big.std() - np.sqrt(2.0 / big.shape[1])) < 0.05 * np.sqrt(2.0 / big.shape[1])


def test_same_seed_identical_params(small_spec):
    a, b = build_model(small_spec, 9), build_model(small_spec, 9)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    c = build_model(small_spec, 10)
    assert not np.array_equal(a.params["layer0.W"], c.params["layer0.W"])


def test_eval_is_deterministic_and_draws_nothing(small_spec):
    model = build_model(small_spec, 4)
    x = np.random.default_rng(2).uniform(size=(3, 10, 32))
    state = model.prng.state
    assert np.array_equal(model.logits(x), model.logits(x))
    assert model.prng.state == state
    model.forward(x, train=True)
    assert model.prng.state != state


def test_zero_input_gives_finite_logits(small_spec):
    model = build_model(small_spec, 4)
    assert np.all(np.isfinite(model.logits(np.zeros((2, 10, 32)))))


def test_predict_proba_rows_sum_to_one(small_spec):
    p = build_model(small_spec, 4).predict_proba(np.random.default_rng(3).uniform(size=(6, 10, 32)))
    assert np.all(np.abs(p.sum(axis=1) - 1) <= 1e-12)


def test_input_shape_checked(small_spec):
    with pytest.raises(ValueError):
        build_model(small_spec, 1).logits(np.zeros((2, 10, 31)))


def test_backward_zero_and_linearity(small_spec):
    model = build_model(small_spec, 6)
    x = np.random.default_rng(4).uniform(size=(4, 10, 32))
    logits, caches = model.forward(x, train=True)
    zero = model.backward(caches, np.zeros_like(logits))
    assert all(not g.any() for g in zero.values())
    d = np.random.default_rng(5).normal(size=logits.shape)
    g1, g2 = model.backward(caches, d), model.backward(caches, 2 * d)
    for k in g1:
        np.testing.assert_allclose(g2[k], 2 * g1[k], rtol=1e-12, atol=1e-300)
    assert set(g1) == {n for n in model.params if not n.endswith(("running_mean", "running_var"))}
    assert all(g1[k].shape == model.params[k].shape for k in g1)
    with pytest.raises(ValueError):
        model.backward(caches[:-1], d)


def test_composed_gradcheck_smoke(small_spec):
    # The acceptance suite runs the full 20-instance version.
    rng = np.random.default_rng(7)
    model = build_model(small_spec, 11)
    x = rng.uniform(size=(4, 10, 32))
    errors, _ = model_gradcheck(model, x, np.array([0, 1, 1, 0]), rng, per_tensor=3, input_entries=4)
    assert max(errors.values()) < 1e-4


def test_spec_validation():
    conv = LayerSpec("conv1d", {"in_channels": 3, "out_channels": 2, "kernel_width": 3, "stride": 1})
    dense = LayerSpec("dense", {"in_dim": 7, "out_dim": 2})
    with pytest.raises(ConfigError):
        output_shapes(ModelSpec(3, 4, (conv, LayerSpec("flatten"), dense)))
    with pytest.raises(ConfigError):
        output_shapes(ModelSpec(3, 4, (LayerSpec("dropout", {"keep_prob": 0.0}),)))
    with pytest.raises(ConfigError):
        LayerSpec("pool")
    ok = ModelSpec(3, 4, (conv, LayerSpec("flatten"), LayerSpec("dense", {"in_dim": 8, "out_dim": 2})))
    assert output_shapes(ok)[-1] == (2,)


def test_spec_json_round_trip(small_spec):
    assert ModelSpec.from_json(small_spec.to_json()) == small_spec


def test_params_must_match_spec(small_spec):
    params = dict(build_model(small_spec, 1).params)
    params.pop("layer0.b")
    with pytest.raises(ConfigError):
        Model(small_spec, Prng(1), params)


def test_loss_and_grads_decay_term(small_spec):
    model = build_model(small_spec, 8)
    x = np.random.default_rng(6).uniform(size=(4, 10, 32))
    y = np.array([0, 1, 0, 1])
    state = model.prng.state
    base, _, _ = model.loss_and_grads(x, y)
    model.prng.state = state
    decayed, _, _ = model.loss_and_grads(x, y, weight_decay=0.01)
    sq = sum(float((model.params[n] ** 2).sum()) for n in decay_names(small_spec))
    assert abs(decayed - base - 0.005 * sq) < 1e-9


def test_small_model_size(small_spec):
    n = sum(v.size for k, v in build_model(small_spec, 1).params.items() if "running" not in k)
    assert 500_000 < n < 700_000
    assert F.softmax(np.zeros((1, 2))).sum() == 1.0
