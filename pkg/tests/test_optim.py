import struct

import numpy as np
import pytest

from sqaguide import checkpoint
from sqaguide.checkpoint import CheckpointError
from sqaguide.optim import Adam, step_lr, warmup_lr


def test_adam_first_step_moves_by_lr():
    # bias correction makes the first update lr * sign(g)
    p = {"w": np.array([1.0, -2.0, 0.5])}
    Adam(p, lr=0.1).step({"w": np.array([3.0, -0.01, 0.0])})
    assert np.allclose(p["w"], [0.9, -1.9, 0.5])


def test_adam_minimizes_quadratic():
    a = np.diag([1.0, 10.0, 100.0])
    p = {"x": np.array([3.0, -2.0, 1.0])}
    opt = Adam(p, lr=0.05)
    for _ in range(2000):
        opt.step({"x": a @ p["x"]})
    assert np.linalg.norm(p["x"]) < 1e-3


def test_adam_missing_grad_and_decay():
    p = {"a": np.ones(2), "b": np.ones(2)}
    Adam(p, lr=0.1, weight_decay=0.5).step({"a": np.ones(2)})
    assert np.allclose(p["b"], 0.95) and np.allclose(p["a"], 0.95 - 0.1)
    with pytest.raises(FloatingPointError):
        Adam(p).step({"a": np.array([np.nan, 0.0])})
    with pytest.raises(ValueError):
        Adam(p, lr=0.0)


def test_schedules():
    assert [warmup_lr(s, 1.0, 4) for s in (1, 2, 4, 9)] == [0.25, 0.5, 1.0, 1.0]
    assert warmup_lr(1, 0.3, 0) == 0.3
    assert [step_lr(s, 1.0, 10) for s in (0, 3, 4, 7, 8)] == [1.0, 1.0, 0.5, 0.5, 0.25]
    assert step_lr(5, 1.0, 1) == 0.5 ** 5


def test_checkpoint_roundtrip_and_errors(tmp_path):
    params = {"b": np.arange(3.0), "a": np.eye(2)}
    path = tmp_path / "m.ckpt"
    checkpoint.save(path, "toy", {"k": 1}, params, "abc", {"note": "x"})
    header, back = checkpoint.load(path, "toy")
    assert header["config"] == {"k": 1} and header["registry_digest"] == "abc"
    assert all(np.array_equal(back[k], v) for k, v in params.items())
    raw = path.read_bytes()
    checkpoint.save(tmp_path / "again.ckpt", "toy", {"k": 1}, dict(reversed(params.items())), "abc", {"note": "x"})
    assert (tmp_path / "again.ckpt").read_bytes() == raw
    with pytest.raises(CheckpointError):
        checkpoint.load(path, "other")
    for name, data in (("magic", b"XXXXXXXX" + raw[8:]), ("short", raw[:-8]),
                       ("header", raw[:8] + struct.pack("<Q", 5) + b"\xff\xfe{{{" + raw[21:])):
        (tmp_path / name).write_bytes(data)
        with pytest.raises(CheckpointError):
            checkpoint.load(tmp_path / name)
