"""Trainable layers, Adam, finite-difference checking, checkpoints.

Layers hold ParamTensors and build tape ops when called; there is no module
hierarchy beyond that. Initialization draws from the portable RNG so runs
reproduce bit-identically from a seed.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamTensor
from .rng import SplitMix64

__all__ = [
    "LayerSpec",
    "Dense",
    "Conv2d",
    "activate",
    "softmax4",
    "Adam",
    "grad_check",
    "save_params",
    "load_params",
]


@dataclass
class LayerSpec:
    """Declarative layer description; build() turns it into a layer."""

    kind: str  # dense | conv2d | sigmoid | relu | softmax4
    fan_in: int = 0
    fan_out: int = 0
    kernel: int = 3
    location_dependent: bool = False
    width: int = 0
    height: int = 0

    def __post_init__(self):
        kinds = ("dense", "conv2d", "sigmoid", "relu", "softmax4")
        if self.kind not in kinds:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv2d" and self.kernel % 2 == 0:
            raise ValueError("conv2d kernel extent must be odd")

    def build(self, name: str, rng: SplitMix64):
        if self.kind == "dense":
            return Dense(name, self.fan_in, self.fan_out, rng)
        if self.kind == "conv2d":
            return Conv2d(
                name,
                self.fan_in,
                self.fan_out,
                self.kernel,
                rng,
                location_dependent=self.location_dependent,
                width=self.width,
                height=self.height,
            )
        kind = self.kind
        return lambda t: activate(kind, t)


def _xavier(rng: SplitMix64, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    n = int(np.prod(shape))
    return rng.uniform_array(n, -limit, limit).reshape(shape)


class Dense:
    """y = W x + b with W shaped (fan_out, fan_in)."""

    def __init__(self, name: str, fan_in: int, fan_out: int, rng: SplitMix64):
        self.weight = ParamTensor(
            name + ".weight", _xavier(rng, fan_in, fan_out, (fan_out, fan_in))
        )
        self.bias = ParamTensor(name + ".bias", np.zeros(fan_out))

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return ad.add(ad.matmul_t(x, self.weight), self.bias)

    def params(self):
        return [self.weight, self.bias]


class Conv2d:
    """Same-size zero-padded conv; optional learnable per-location bias map."""

    def __init__(
        self,
        name: str,
        c_in: int,
        c_out: int,
        kernel: int,
        rng: SplitMix64,
        location_dependent: bool = False,
        width: int = 0,
        height: int = 0,
        bias_init: float = 0.0,
    ):
        if kernel % 2 == 0:
            raise ValueError("conv2d kernel extent must be odd")
        fan_in = c_in * kernel * kernel
        fan_out = c_out * kernel * kernel
        self.kernels = ParamTensor(
            name + ".kernels", _xavier(rng, fan_in, fan_out, (c_out, c_in, kernel, kernel))
        )
        self.bias = ParamTensor(name + ".bias", np.full(c_out, bias_init))
        self.loc_bias = None
        if location_dependent:
            if width < 1 or height < 1:
                raise ValueError("location-dependent conv needs width and height")
            self.loc_bias = ParamTensor(
                name + ".loc_bias", np.zeros((c_out, height, width))
            )

    def __call__(self, x: ad.Tensor) -> ad.Tensor:
        return ad.conv2d(x, self.kernels, self.bias, self.loc_bias)

    def params(self):
        ps = [self.kernels, self.bias]
        if self.loc_bias is not None:
            ps.append(self.loc_bias)
        return ps


def softmax4(t: ad.Tensor) -> ad.Tensor:
    """Per-pixel softmax over a 4-channel axis, input (B, 4, H, W)."""
    if t.shape[1] != 4:
        raise ValueError(f"softmax4 expects 4 channels, got {t.shape[1]}")
    m = t.value.max(axis=1, keepdims=True)  # detached shift for stability
    e = ad.exp(ad.add_const(t, -m))
    return ad.div(e, ad.sum_axis(e, 1))


def activate(kind: str, t: ad.Tensor) -> ad.Tensor:
    if kind == "sigmoid":
        return ad.sigmoid(t)
    if kind == "relu":
        return ad.relu(t)
    if kind == "softmax4":
        return softmax4(t)
    raise ValueError(f"unknown activation {kind!r}")


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def grad_check(params, forward_fn, tol=1e-4, h=1e-4, rng=None, max_entries=6):
    """Central finite differences against the tape's gradients.

    forward_fn() rebuilds the graph and returns the scalar loss Tensor.
    Checks up to max_entries components per parameter (all, for small ones);
    relative error floored at 1e-3 magnitude to keep near-zero gradients
    from inflating the ratio.

    Entries whose one-sided slopes disagree are skipped: a ReLU kink inside
    [x-h, x+h] makes the central difference meaningless there, while the
    tape's one-sided derivative is still correct. Skipped entries are
    replaced by other sampled components when available.

    Returns (ok, {param name: worst rel error}).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    base = forward_fn()
    ad.backward(base)
    f0 = float(base.value)
    analytic = {p.name: p.grad.copy() for p in params}

    def probe(flat, i, ana):
        # shrink the step when a probe looks kinked or misses: a kink
        # leaves the interval as h drops, a wrong gradient never does.
        # The bottom rung (~2e-8 for the default h) still sits well above
        # the double-precision cancellation floor for losses of order one.
        best = None
        orig = flat[i]
        for step in (h, h / 16.0, h / 256.0, h / 4096.0):
            flat[i] = orig + step
            fp = float(forward_fn().value)
            flat[i] = orig - step
            fm = float(forward_fn().value)
            flat[i] = orig
            d_plus = (fp - f0) / step
            d_minus = (f0 - fm) / step
            gap = abs(d_plus - d_minus)
            if gap > 0.05 * max(abs(d_plus), abs(d_minus), 1e-3):
                continue
            num = (fp - fm) / (2.0 * step)
            rel = abs(ana - num) / max(abs(ana), abs(num), 1e-3)
            best = rel if best is None else min(best, rel)
            if best <= tol:
                break
        return best

    report = {}
    ok = True
    for p in params:
        flat = p.value.reshape(-1)
        n = flat.size
        if n <= max_entries:
            idxs = list(range(n))
        elif rng is not None:
            seen = set()
            idxs = []
            for _ in range(4 * max_entries):
                i = rng.randint(0, n - 1)
                if i not in seen:
                    seen.add(i)
                    idxs.append(i)
        else:
            idxs = list(range(min(n, 4 * max_entries)))
        worst = 0.0
        checked = 0
        with ad.no_grad():
            for i in idxs:
                if checked >= max_entries:
                    break
                rel = probe(flat, i, float(analytic[p.name].reshape(-1)[i]))
                if rel is None:
                    continue
                worst = max(worst, rel)
                checked += 1
        report[p.name] = worst
        ok = ok and worst <= tol
    return ok, report


# ---------------------------------------------------------------------------
# checkpoint container: u64 LE version, u64 count, then per parameter
# u64 name length, utf-8 name, u64 rank, u64 dims, f64 LE values

_CHECKPOINT_VERSION = 1


def save_params(path, params):
    """params: iterable of ParamTensor or (name, array) pairs, order kept."""
    entries = []
    for p in params:
        if isinstance(p, ParamTensor):
            entries.append((p.name, p.value))
        else:
            entries.append((p[0], np.asarray(p[1], dtype=np.float64)))
    with open(path, "wb") as f:
        f.write(struct.pack("<QQ", _CHECKPOINT_VERSION, len(entries)))
        for name, arr in entries:
            nb = name.encode("utf-8")
            f.write(struct.pack("<Q", len(nb)))
            f.write(nb)
            f.write(struct.pack("<Q", arr.ndim))
            f.write(np.asarray(arr.shape, dtype="<u8").tobytes())
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_params(path) -> dict:
    """Returns {name: float64 array}, bit-exact with what was saved."""
    with open(path, "rb") as f:
        head = f.read(16)
        if len(head) < 16:
            raise ValueError("truncated checkpoint header")
        version, count = struct.unpack("<QQ", head)
        if version != _CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack("<Q", f.read(8))
            name = f.read(nlen).decode("utf-8")
            (rank,) = struct.unpack("<Q", f.read(8))
            dims = np.frombuffer(f.read(8 * rank), dtype="<u8").astype(int)
            size = int(np.prod(dims)) if rank else 1
            raw = f.read(8 * size)
            if len(raw) < 8 * size:
                raise ValueError(f"truncated values for parameter {name!r}")
            out[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
        return out
