"""Binary checkpoint format.

Layout (all integers little-endian uint32)::

    b"IRCKPT1\\n"
    count
    count x [name_len, name (utf-8), b"f32", rank, dims...]
    tensor data as little-endian float32, in table order

Tensor names are prefixed ``param/``, ``buffer/`` (BN running statistics)
and, when optimizer state is saved, ``adam.m/``, ``adam.v/`` plus the scalar
``adam.t``.
"""

from __future__ import annotations

import io
import os
import struct

import numpy as np

from endorestore.errors import CheckpointFormatError
from endorestore.nn.model import ModelParams, buffer_specs, param_specs
from endorestore.nn.optim import AdamState

MAGIC = b"IRCKPT1\n"
DTYPE_TAG = b"f32"


def _tensors(m: ModelParams, optimizer: AdamState | None):
    out = [(f"param/{k}", v) for k, v in m.params.items()]
    out += [(f"buffer/{k}", v) for k, v in m.buffers.items()]
    if optimizer is not None and optimizer.t > 0:
        out.append(("adam.t", np.array([optimizer.t], dtype=np.float32)))
        out += [(f"adam.m/{k}", v) for k, v in optimizer.m.items()]
        out += [(f"adam.v/{k}", v) for k, v in optimizer.v.items()]
    return out


def save_checkpoint(m: ModelParams, path, optimizer: AdamState | None = None) -> None:
    tensors = _tensors(m, optimizer)
    head = io.BytesIO()
    head.write(MAGIC)
    head.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors:
        raw = name.encode("utf-8")
        head.write(struct.pack("<I", len(raw)))
        head.write(raw)
        head.write(DTYPE_TAG)
        head.write(struct.pack("<I", arr.ndim))
        head.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    with open(os.fspath(path), "wb") as fh:
        fh.write(head.getvalue())
        for _, arr in tensors:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


class _Reader:
    def __init__(self, buf: bytes, path):
        self.buf, self.pos, self.path = buf, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointFormatError(f"{self.path}: truncated checkpoint")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path, with_optimizer: bool = False):
    """Read a checkpoint; returns ``ModelParams`` (and ``AdamState`` or None if requested)."""
    with open(os.fspath(path), "rb") as fh:
        buf = fh.read()
    r = _Reader(buf, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic, not a checkpoint")
    table = []
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        if r.take(3) != DTYPE_TAG:
            raise CheckpointFormatError(f"{path}: unsupported dtype for {name}")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        table.append((name, shape))
    tensors = {}
    for name, shape in table:
        n = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(buf):
        raise CheckpointFormatError(f"{path}: {len(buf) - r.pos} trailing bytes")

    first = tensors.get("param/enc0.conv1.w")
    if first is None:
        raise CheckpointFormatError(f"{path}: missing encoder weights")
    base_width = first.shape[0]
    expected = [(f"param/{k}", s) for k, s in param_specs(base_width)]
    expected += [(f"buffer/{k}", s) for k, s in buffer_specs(base_width)]
    got = [(k, tensors[k].shape) for k in tensors if k.startswith(("param/", "buffer/"))]
    if got != expected:
        raise CheckpointFormatError(f"{path}: tensor table does not match a base_width={base_width} model")
    m = ModelParams(
        base_width,
        {k[len("param/"):]: tensors[k] for k, _ in expected if k.startswith("param/")},
        {k[len("buffer/"):]: tensors[k] for k, _ in expected if k.startswith("buffer/")},
    )
    if not with_optimizer:
        return m
    opt = None
    if "adam.t" in tensors:
        opt = AdamState(
            t=int(tensors["adam.t"][0]),
            m={k[len("adam.m/"):]: v for k, v in tensors.items() if k.startswith("adam.m/")},
            v={k[len("adam.v/"):]: v for k, v in tensors.items() if k.startswith("adam.v/")},
        )
    return m, opt
