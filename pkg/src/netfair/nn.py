"""Layers, losses, the Adam optimiser and the ``.nfck`` checkpoint format."""
from __future__ import annotations

import io
import struct
from collections import OrderedDict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class Module:
    """Minimal parameter container; submodules are discovered by attribute."""

    def named_parameters(self, prefix=""):
        out = OrderedDict()
        for key, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out[prefix + key] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(prefix + key + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{prefix}{key}.{i}."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return OrderedDict((k, p.data.copy()) for k, p in self.named_parameters().items())

    def load_state_dict(self, state):
        params = self.named_parameters()
        missing = set(params) - set(state)
        extra = set(state) - set(params)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for k, p in params.items():
            if state[k].shape != p.shape:
                raise ValueError(f"{k}: shape {state[k].shape} != {p.shape}")
        for k, p in params.items():
            p.data = np.array(state[k], dtype=np.float64)


class Linear(Module):
    def __init__(self, n_in, n_out, rng, bias=True):
        scale = np.sqrt(1.0 / n_in)
        self.weight = Tensor(rng.uniform(-scale, scale, size=(n_in, n_out)), requires_grad=True)
        self.bias = Tensor(np.zeros(n_out), requires_grad=True) if bias else None

    def __call__(self, x):
        out = ad.matmul(x, self.weight)
        return out if self.bias is None else ad.add(out, self.bias)


_ACTIVATIONS = {"tanh": ad.tanh, "relu": ad.relu, "sigmoid": ad.sigmoid}


class MLP(Module):
    def __init__(self, sizes, rng, activation="tanh"):
        self.layers = [Linear(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.activation = activation

    def __call__(self, x):
        act = _ACTIVATIONS[self.activation]
        for i, layer in enumerate(self.layers):
            x = layer(x)
            if i < len(self.layers) - 1:
                x = act(x)
        return x


# ------------------------------------------------------------------ losses

def _same_shape(name, a, b):
    if a.shape != b.shape:
        raise ad.ShapeError(f"{name}: prediction {a.shape} vs target {b.shape}")


def mse(pred, target):
    target = ad.as_tensor(target)
    _same_shape("mse", pred, target)
    return ad.reduce_mean(ad.square(ad.sub(pred, target)))


def sum_squared_error(pred, target):
    """Squared error summed over features, averaged over rows."""
    target = ad.as_tensor(target)
    _same_shape("sum_squared_error", pred, target)
    return ad.mul(ad.reduce_sum(ad.square(ad.sub(pred, target))), 1.0 / pred.shape[0])


def bce_with_logits(logits, target):
    """Mean of ``softplus(l) - t * l``, the stable form of binary cross-entropy."""
    target = ad.as_tensor(target)
    _same_shape("bce_with_logits", logits, target)
    return ad.reduce_mean(ad.sub(ad.softplus(logits), ad.mul(target, logits)))


def kl_std_normal(mu, logvar):
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over latent dims, averaged over rows."""
    _same_shape("kl_std_normal", mu, logvar)
    inner = ad.sub(ad.sub(ad.add(logvar, 1.0), ad.square(mu)), ad.exp(logvar))
    return ad.mul(ad.reduce_sum(inner), -0.5 / mu.shape[0])


# --------------------------------------------------------------- optimiser

def adam_step(params, grads, state, lr=0.01, betas=(0.9, 0.999), eps=1e-8):
    """One bias-corrected Adam update, in place on ``params`` (numpy arrays).

    ``state`` is a dict holding ``t`` and per-parameter moment lists; pass an
    empty dict on the first call.
    """
    b1, b2 = betas
    if not state:
        state["t"] = 0
        state["m"] = [np.zeros_like(p) for p in params]
        state["v"] = [np.zeros_like(p) for p in params]
    state["t"] += 1
    t = state["t"]
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state["m"], state["v"]):
        if g is None:
            g = np.zeros_like(p)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return params, state


class Adam:
    def __init__(self, params, lr=0.01, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = {}

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step([p.data for p in self.params], [p.grad for p in self.params],
                  self.state, self.lr, self.betas, self.eps)


# -------------------------------------------------------------- checkpoint

MAGIC = b"NFCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def dumps_checkpoint(arrays):
    """Serialise ``{path: ndarray}``.

    Layout: magic, version byte, uint32 entry count, then per entry a uint32
    name length, utf-8 name, uint32 ndim, uint64 dims, float64 data; all
    little-endian.
    """
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<B", VERSION))
    buf.write(struct.pack("<I", len(arrays)))
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes())
    return buf.getvalue()


def loads_checkpoint(blob):
    view = memoryview(blob)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError(f"truncated checkpoint: need {n} bytes at offset {pos}, have {len(view) - pos}")
        chunk = bytes(view[pos:pos + n])
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise CheckpointError("not a checkpoint: bad magic")
    (version,) = struct.unpack("<B", take(1))
    if version != VERSION:
        raise CheckpointError(f"incompatible checkpoint version {version} (reader supports {VERSION})")
    (count,) = struct.unpack("<I", take(4))
    out = OrderedDict()
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}Q", take(8 * ndim))
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        out[name] = np.frombuffer(take(nbytes), dtype="<f8").reshape(shape).astype(np.float64)
    if pos != len(view):
        raise CheckpointError(f"trailing bytes after {count} entries")
    return out


def save_checkpoint(path, arrays):
    with open(path, "wb") as fh:
        fh.write(dumps_checkpoint(arrays))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        return loads_checkpoint(fh.read())
