import numpy as np
import pytest

from endorestore.errors import CheckpointFormatError
from endorestore.nn.checkpoint import MAGIC, load_checkpoint, save_checkpoint
from endorestore.nn.model import build_model, forward
from endorestore.nn.optim import AdamState
from endorestore.nn.train import TrainConfig, train_stage


def _same(a, b):
    return set(a) == set(b) and all(np.array_equal(a[k], b[k]) for k in a)


def test_round_trip_bit_exact(tmp_path, rng):
    m = build_model(16, seed=5)
    forward(m, rng.random((2, 3, 32, 32)).astype(np.float32), "train")  # non-trivial BN stats
    path = tmp_path / "m.ckpt"
    save_checkpoint(m, path)
    back = load_checkpoint(path)
    assert back.base_width == 16
    assert _same(m.params, back.params) and _same(m.buffers, back.buffers)
    x = rng.random((1, 3, 32, 32)).astype(np.float32)
    assert np.array_equal(forward(m, x), forward(back, x))


def test_header_layout(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(build_model(4), path)
    raw = path.read_bytes()
    assert raw.startswith(MAGIC) and MAGIC == b"IRCKPT1\n"


def test_optimizer_state_round_trip(tmp_path, rng):
    m = build_model(4)
    pair = (rng.random((3, 16, 16)), rng.random((3, 16, 16)))
    res = train_stage(m, [pair], TrainConfig(base_width=4, steps=3))
    path = tmp_path / "m.ckpt"
    save_checkpoint(m, path, res.optimizer)
    back, opt = load_checkpoint(path, with_optimizer=True)
    assert opt.t == 3
    assert _same(res.optimizer.m, opt.m) and _same(res.optimizer.v, opt.v)
    assert _same(m.params, back.params)


def test_no_optimizer(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(build_model(4), path, AdamState())
    _, opt = load_checkpoint(path, with_optimizer=True)
    assert opt is None


def test_bad_magic(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(build_model(4), path)
    raw = bytearray(path.read_bytes())
    raw[0:2] = b"XX"
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointFormatError, match="magic"):
        load_checkpoint(path)


def test_truncated(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(build_model(4), path)
    path.write_bytes(path.read_bytes()[:-10])
    with pytest.raises(CheckpointFormatError, match="truncated"):
        load_checkpoint(path)


def test_trailing_bytes(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(build_model(4), path)
    path.write_bytes(path.read_bytes() + b"\0\0\0\0")
    with pytest.raises(CheckpointFormatError):
        load_checkpoint(path)


def test_shape_table_mismatch(tmp_path):
    m = build_model(4)
    del m.params["out.b"]
    path = tmp_path / "m.ckpt"
    save_checkpoint(m, path)
    with pytest.raises(CheckpointFormatError, match="table"):
        load_checkpoint(path)
