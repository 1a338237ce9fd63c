import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stockcnn.optim import SGD, Adam, AdamState, adam_step, make_optimizer, sgd_step


def arr(*v):
    return np.array(v, dtype=np.float64)


def test_sgd_examples():
    assert sgd_step(arr(1.0), arr(0.5), 0.1).tolist() == [0.95]
    w = arr(3.0, -2.0)
    assert np.array_equal(sgd_step(w, np.zeros(2), 0.1), w)
    w = arr(0.0)
    for _ in range(2):
        w = sgd_step(w, arr(1.0), 0.1)
    assert w.tolist() == [-0.2]


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3), st.floats(1e-6, 1.0))
def test_sgd_closed_form_exact(w, g, lr):
    assert sgd_step(arr(w), arr(g), lr)[0] == w - lr * g


def test_sgd_errors():
    with pytest.raises(ValueError):
        sgd_step(np.zeros(2), np.zeros(3), 0.1)
    with pytest.raises(FloatingPointError):
        sgd_step(np.zeros(1), arr(np.nan), 0.1)


@pytest.mark.parametrize("g", [1e-3, -0.02, 1.0, 123.0, -5e4])
def test_adam_first_step_magnitude(g):
    lr = 1e-3
    new, state = adam_step(arr(0.0), arr(g), AdamState.zeros_like(arr(0.0)), lr)
    assert abs(abs(new[0]) - lr) <= lr * 1e-3
    assert np.sign(new[0]) == -np.sign(g)
    assert abs(abs(new[0]) - lr * abs(g) / (abs(g) + 1e-8)) < 1e-15
    assert state.t == 1


def test_adam_zero_gradient_is_noop():
    w = arr(0.7, -1.2)
    new, _ = adam_step(w, np.zeros(2), AdamState.zeros_like(w), 1e-3)
    assert np.array_equal(new, w)


def test_adam_three_steps_hand_iterate():
    lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
    w, m, v = 0.0, 0.0, 0.0
    for t in range(1, 4):
        m = b1 * m + (1 - b1)
        v = b2 * v + (1 - b2)
        w -= lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
    p, state = arr(0.0), AdamState.zeros_like(arr(0.0))
    for _ in range(3):
        p, state = adam_step(p, arr(1.0), state, lr)
    assert abs(p[0] - w) < 1e-15
    assert abs(p[0] - -3e-3) < 1e-6
    assert state.t == 3 and np.all(state.v >= 0)


def test_adam_does_not_mutate_inputs():
    w, g = arr(1.0, 2.0), arr(0.3, -0.4)
    state = AdamState.zeros_like(w)
    adam_step(w, g, state, 1e-2)
    assert w.tolist() == [1.0, 2.0] and state.t == 0 and not state.m.any()


def test_adam_nonfinite_gradient():
    with pytest.raises(FloatingPointError):
        adam_step(arr(0.0), arr(np.inf), AdamState.zeros_like(arr(0.0)), 1e-3)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=30), st.integers(0, 2**32 - 1))
def test_adam_update_bound(values, seed):
    rng = np.random.default_rng(seed)
    lr = 1e-3
    p, state = np.zeros(1), AdamState.zeros_like(np.zeros(1))
    for g in values:
        new, state = adam_step(p, arr(g * rng.uniform(0.1, 10)), state, lr)
        assert np.all(np.abs(new - p) <= lr * 1.01)
        p = new


@settings(max_examples=100, deadline=None)
@given(st.floats(-100, 100), st.floats(-100, 100), st.sampled_from([0.5, 2.0, 4.0, 0.25]))
def test_sgd_scale_equivariance(w, g, c):
    # powers of two keep the products exact
    assert sgd_step(arr(w), arr(g * c), 0.1 / c)[0] == sgd_step(arr(w), arr(g), 0.1)[0]


def test_updates_are_elementwise():
    rng = np.random.default_rng(0)
    w, g = rng.normal(size=8), rng.normal(size=8)
    state = AdamState(rng.normal(size=8), rng.uniform(size=8), 3)
    perm = rng.permutation(8)
    new, st_ = adam_step(w, g, state, 1e-2)
    pnew, pst = adam_step(w[perm], g[perm], AdamState(state.m[perm], state.v[perm], 3), 1e-2)
    assert np.array_equal(new[perm], pnew) and np.array_equal(st_.v[perm], pst.v)
    assert np.array_equal(sgd_step(w, g, 0.1)[perm], sgd_step(w[perm], g[perm], 0.1))


def test_optimizer_objects_and_state_dict():
    rng = np.random.default_rng(1)
    params = {"a.W": rng.normal(size=(2, 3)), "a.b": rng.normal(size=2)}
    grads = [{k: rng.normal(size=v.shape) for k, v in params.items()} for _ in range(4)]
    opt = Adam(1e-2)
    ref = {k: v.copy() for k, v in params.items()}
    for g in grads[:2]:
        opt.step(ref, g)
    saved = opt.state_dict()
    resumed = Adam(1e-2)
    resumed.load_state_dict({"t": saved["t"], "tensors": {k: v.copy() for k, v in saved["tensors"].items()}})
    other = {k: v.copy() for k, v in ref.items()}
    for g in grads[2:]:
        opt.step(ref, g)
        resumed.step(other, g)
    assert all(np.array_equal(ref[k], other[k]) for k in ref)
    assert opt.t == 4 and set(saved["tensors"]) == {"a.W.m", "a.W.v", "a.b.m", "a.b.v"}

    sgd = make_optimizer("sgd", 0.5)
    p = {"x": arr(1.0)}
    sgd.step(p, {"x": arr(1.0)})
    assert p["x"].tolist() == [0.5] and sgd.state_dict()["t"] == 1
    assert isinstance(make_optimizer("adam", 1e-3), Adam) and isinstance(sgd, SGD)
    with pytest.raises(ValueError):
        make_optimizer("rmsprop", 1e-3)
