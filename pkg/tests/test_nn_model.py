import numpy as np
import pytest

from endorestore.errors import NumericError, ShapeError
from endorestore.image import Image
from endorestore.nn.model import backward, build_model, forward
from endorestore.nn.train import restore
from oracles import numerical_grad, relative_errors


def _block_count(cin, cout):
    n = 9 * cin * cout + cout + 2 * cout + 9 * cout * cout + cout + 2 * cout
    return n + (cin * cout + cout if cin != cout else 0)


def analytic_count(w):
    widths = [w, 2 * w, 4 * w, 8 * w]
    total = 0
    cin = 3
    for c in widths:
        total += _block_count(cin, c)
        cin = c
    total += _block_count(8 * w, 16 * w)
    cin = 16 * w
    for c in reversed(widths):
        total += 9 * cin * c + c + _block_count(2 * c, c)
        cin = c
    return total + 3 * w + 3


@pytest.mark.parametrize("w", [4, 8, 16])
def test_parameter_count(w):
    assert build_model(w).num_parameters() == analytic_count(w)


def test_parameter_count_base16():
    assert build_model(16).num_parameters() == 2_249_507


def test_build_deterministic():
    a, b = build_model(8, seed=3), build_model(8, seed=3)
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)
    c = build_model(8, seed=4)
    assert not np.array_equal(a.params["enc0.conv1.w"], c.params["enc0.conv1.w"])


def test_init_values():
    m = build_model(4)
    assert np.all(m.params["enc0.bn1.gamma"] == 1) and np.all(m.params["enc0.bn1.beta"] == 0)
    assert np.all(m.params["dec0.conv2.b"] == 0)
    assert np.all(m.buffers["bott.bn2.running_var"] == 1)
    with pytest.raises(ValueError):
        build_model(2)


def test_forward_shape_base16(rng):
    m = build_model(16)
    assert forward(m, rng.random((1, 3, 64, 64)).astype(np.float32)).shape == (1, 3, 64, 64)


@pytest.mark.parametrize("h,w", [(16, 16), (32, 80), (128, 48), (96, 112)])
def test_shape_closure(h, w, rng):
    m = build_model(4)
    assert forward(m, rng.random((1, 3, h, w))).shape == (1, 3, h, w)


def test_bad_input_shapes(rng):
    m = build_model(4)
    with pytest.raises(ShapeError):
        forward(m, rng.random((1, 3, 20, 32)))
    with pytest.raises(ShapeError):
        forward(m, rng.random((1, 1, 32, 32)))


def test_nan_input_raises(rng):
    x = rng.random((1, 3, 16, 16))
    x[0, 0, 0, 0] = np.nan
    with pytest.raises(NumericError):
        forward(build_model(4), x)


def test_eval_batch_equals_single(rng):
    m = build_model(8)
    x = rng.random((3, 3, 32, 32)).astype(np.float32)
    batched = forward(m, x, "eval")
    singles = np.concatenate([forward(m, x[i:i + 1], "eval") for i in range(3)])
    np.testing.assert_allclose(batched, singles, atol=1e-5)


def test_eval_deterministic_and_buffers_fixed(rng):
    m = build_model(4)
    x = rng.random((2, 3, 16, 16))
    before = {k: v.copy() for k, v in m.buffers.items()}
    assert np.array_equal(forward(m, x, "eval"), forward(m, x, "eval"))
    assert all(np.array_equal(before[k], m.buffers[k]) for k in before)


def test_train_mode_batch_statistics(rng):
    m = build_model(8, dtype=np.float64)
    _, tape = forward(m, rng.random((2, 3, 64, 64)), "train", return_tape=True)
    checked = 0
    for name, cache in tape:
        if name.startswith(("enc", "bott", "dec")):
            for bn in (cache[1], cache[4]):
                xhat = bn[0]
                mu = xhat.mean(axis=(0, 2, 3))
                var = xhat.var(axis=(0, 2, 3))
                # eps in the denominator shrinks the variance by var / (var + eps)
                assert np.abs(mu).max() < 1e-4
                assert np.abs(var - 1).max() < 1e-3
                checked += 1
    assert checked == 18


def test_train_mode_updates_buffers(rng):
    m = build_model(4)
    forward(m, rng.random((2, 3, 16, 16)), "train")
    assert not np.all(m.buffers["enc0.bn1.running_mean"] == 0)


def test_full_model_gradient(rng):
    m = build_model(4, seed=1, dtype=np.float64)
    x = rng.random((2, 3, 32, 32))
    r = rng.standard_normal((2, 3, 32, 32))
    buffers = {k: v.copy() for k, v in m.buffers.items()}

    def f():
        m.buffers = {k: v.copy() for k, v in buffers.items()}
        return float((forward(m, x, "train") * r).sum())

    m.buffers = {k: v.copy() for k, v in buffers.items()}
    _, tape = forward(m, x, "train", return_tape=True)
    grads = backward(m, tape, r)
    assert set(grads) == set(m.params)
    errs = []
    for name in ("enc0.conv1.w", "bott.bn2.gamma", "up2.w", "dec0.proj.w", "out.b"):
        p = m.params[name]
        idx = [tuple(int(v) for v in i) for i in zip(*[rng.integers(0, s, 6) for s in p.shape])]
        num = numerical_grad(f, p, 1e-6, idx)
        errs.append(relative_errors([grads[name][i] for i in idx], num))
    errs = np.concatenate(errs)
    assert errs.max() < 1e-2 and np.median(errs) < 1e-3


def test_restore_pads_and_crops(rng):
    m = build_model(4)
    img = Image(rng.random((3, 70, 90)))
    out = restore(m, img)
    assert out.shape == img.shape
    assert out.data.min() >= 0 and out.data.max() <= 1


def test_restore_divisible_is_plain_forward(rng):
    m = build_model(4)
    img = Image(rng.random((3, 32, 48)))
    ref = np.clip(forward(m, img.data[None].astype(np.float32), "eval")[0], 0, 1)
    np.testing.assert_array_equal(restore(m, img).data, ref.astype(np.float64))


def test_restore_rejects_gray():
    with pytest.raises(ShapeError):
        restore(build_model(4), Image(np.zeros((1, 16, 16))))
