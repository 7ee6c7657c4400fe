"""Reverse-mode tape over numpy arrays.

Tensors wrap float64 arrays, or complex128 arrays packing a (re, im) pair;
every complex op here is real-linear in that packing, so a packed gradient
(dL/d re) + i (dL/d im) propagates exactly like two real channels. The op
set is the closed list the predictor needs, each with a hand-written
adjoint; there is no general graph compiler.

Batch axis leads everywhere: frames are (B, H, W), channel fields
(B, C, H, W), spectra complex (B, H, W).
"""

import numpy as np

from .gridfft import fft2_fast, ifft2_fast

__all__ = [
    "Tensor",
    "ParamTensor",
    "no_grad",
    "backward",
]

_grad_enabled = True


class no_grad:
    """Context: ops inside build no graph (evaluation / data paths)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


class Tensor:
    __slots__ = ("value", "grad", "_parents", "_bw")

    def __init__(self, value, parents=(), bw=None):
        self.value = np.asarray(value)
        self.grad = None
        if bw is not None and _grad_enabled:
            self._parents = parents
            self._bw = bw
        else:
            self._parents = ()
            self._bw = None

    @property
    def shape(self):
        return self.value.shape


class ParamTensor(Tensor):
    """Named learnable leaf; grad persists across backward passes."""

    __slots__ = ("name",)

    def __init__(self, name: str, value):
        super().__init__(np.array(value, dtype=np.float64))
        self.name = name
        self.grad = np.zeros_like(self.value)

    def zero_grad(self):
        self.grad[...] = 0.0


def backward(loss: Tensor):
    """Accumulate dL/dx into .grad over the graph below a scalar loss."""
    if loss.value.shape != ():
        raise ValueError("backward expects a scalar loss")
    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.array(1.0)
    for node in reversed(order):
        if node._bw is None or node.grad is None:
            continue
        for parent, g in zip(node._parents, node._bw(node.grad)):
            if g is None:
                continue
            if parent.grad is None:
                parent.grad = g
            else:
                parent.grad = parent.grad + g


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# real elementwise ops


def add(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.shape),
            _unbroadcast(g * a.value, b.shape),
        ),
    )


def div(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value / b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.value, a.shape),
            _unbroadcast(-g * a.value / (b.value * b.value), b.shape),
        ),
    )


def scale(a: Tensor, s: float) -> Tensor:
    return Tensor(a.value * s, (a,), lambda g: (g * s,))


def add_const(a: Tensor, c) -> Tensor:
    return Tensor(a.value + c, (a,), lambda g: (g,))


def sqrt(a: Tensor) -> Tensor:
    root = np.sqrt(a.value)
    return Tensor(root, (a,), lambda g: (g * 0.5 / root,))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.value)
    return Tensor(e, (a,), lambda g: (g * e,))


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.value))
    return Tensor(s, (a,), lambda g: (g * s * (1.0 - s),))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return Tensor(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# reductions and shape ops


def sum_all(a: Tensor) -> Tensor:
    return Tensor(
        np.asarray(a.value.sum()),
        (a,),
        lambda g: (np.broadcast_to(g, a.shape).astype(np.float64),),
    )


def mean_all(a: Tensor) -> Tensor:
    n = a.value.size
    return Tensor(
        np.asarray(a.value.mean()),
        (a,),
        lambda g: (np.broadcast_to(g / n, a.shape).astype(np.float64),),
    )


def sum_axis(a: Tensor, axis: int) -> Tensor:
    # keepdims, so the result broadcasts back over the summed axis
    return Tensor(
        a.value.sum(axis=axis, keepdims=True),
        (a,),
        lambda g: (np.broadcast_to(g, a.shape).astype(np.float64),),
    )


def reshape(a: Tensor, shape) -> Tensor:
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def slice_channel(a: Tensor, k: int) -> Tensor:
    def bw(g):
        ga = np.zeros(a.shape, dtype=g.dtype)
        ga[:, k] = g
        return (ga,)

    return Tensor(a.value[:, k], (a,), bw)


def concat_last(a: Tensor, b: Tensor) -> Tensor:
    na = a.shape[-1]
    return Tensor(
        np.concatenate([a.value, b.value], axis=-1),
        (a, b),
        lambda g: (g[..., :na], g[..., na:]),
    )


def slice_last(a: Tensor, start: int, stop: int) -> Tensor:
    def bw(g):
        ga = np.zeros(a.shape, dtype=g.dtype)
        ga[..., start:stop] = g
        return (ga,)

    return Tensor(a.value[..., start:stop], (a,), bw)


def permute_hw(a: Tensor, rows: np.ndarray, cols: np.ndarray) -> Tensor:
    """Permute the last two axes; adjoint is the inverse permutation."""
    inv_rows = np.argsort(rows)
    inv_cols = np.argsort(cols)
    out = a.value[..., rows[:, None], cols[None, :]]
    return Tensor(out, (a,), lambda g: (g[..., inv_rows[:, None], inv_cols[None, :]],))


# ---------------------------------------------------------------------------
# linear layers


def matmul(a: Tensor, w: Tensor) -> Tensor:
    # (B, n) @ (n, m)
    return Tensor(
        a.value @ w.value,
        (a, w),
        lambda g: (g @ w.value.T, a.value.T @ g),
    )


def matmul_t(a: Tensor, w: Tensor) -> Tensor:
    # (B, fan_in) @ (fan_out, fan_in)^T
    return Tensor(
        a.value @ w.value.T,
        (a, w),
        lambda g: (g @ w.value, g.T @ a.value),
    )


def conv2d(x: Tensor, kern: Tensor, bias: Tensor, loc_bias=None) -> Tensor:
    """Same-size cross-correlation with zero padding.

    x (B,C,H,W), kern (O,C,k,k) odd k, bias (O,), loc_bias (O,H,W) or None.
    """
    b_, c, h, w = x.shape
    o, c2, kh, kw = kern.shape
    if c2 != c:
        raise ValueError(f"conv2d channels: input {c}, kernel expects {c2}")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError("conv2d kernel extents must be odd")
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((b_, c, h + 2 * ph, w + 2 * pw))
    xp[:, :, ph : ph + h, pw : pw + w] = x.value
    out = np.zeros((b_, o, h, w))
    kv = kern.value
    for dy in range(kh):
        for dx in range(kw):
            sl = xp[:, :, dy : dy + h, dx : dx + w]
            out += np.tensordot(sl, kv[:, :, dy, dx], axes=([1], [1])).transpose(
                0, 3, 1, 2
            )
    out += bias.value[None, :, None, None]
    parents = [x, kern, bias]
    if loc_bias is not None:
        out += loc_bias.value[None]
        parents.append(loc_bias)

    def bw(g):
        gxp = np.zeros_like(xp)
        gk = np.zeros_like(kv)
        for dy in range(kh):
            for dx in range(kw):
                gxp[:, :, dy : dy + h, dx : dx + w] += np.tensordot(
                    g, kv[:, :, dy, dx], axes=([1], [0])
                ).transpose(0, 3, 1, 2)
                gk[:, :, dy, dx] = np.tensordot(
                    g, xp[:, :, dy : dy + h, dx : dx + w], axes=([0, 2, 3], [0, 2, 3])
                )
        gx = gxp[:, :, ph : ph + h, pw : pw + w]
        gb = g.sum(axis=(0, 2, 3))
        if loc_bias is not None:
            return (gx, gk, gb, g.sum(axis=0))
        return (gx, gk, gb)

    return Tensor(out, tuple(parents), bw)


# ---------------------------------------------------------------------------
# complex pair ops (value dtype complex128, gradient packed the same way)


def ccomplex(re: Tensor, im: Tensor) -> Tensor:
    return Tensor(
        re.value + 1j * im.value,
        (re, im),
        lambda g: (g.real.copy(), g.imag.copy()),
    )


def creal(z: Tensor) -> Tensor:
    return Tensor(z.value.real.copy(), (z,), lambda g: (g.astype(np.complex128),))


def cimag(z: Tensor) -> Tensor:
    return Tensor(z.value.imag.copy(), (z,), lambda g: (1j * g,))


def cmul(a: Tensor, b: Tensor) -> Tensor:
    return Tensor(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(np.conj(b.value) * g, a.shape),
            _unbroadcast(np.conj(a.value) * g, b.shape),
        ),
    )


def rcmul(w: Tensor, z: Tensor) -> Tensor:
    """Real field times complex field."""
    return Tensor(
        w.value * z.value,
        (w, z),
        lambda g: (
            _unbroadcast((np.conj(z.value) * g).real, w.shape),
            _unbroadcast(w.value * g, z.shape),
        ),
    )


# ---------------------------------------------------------------------------
# transforms (unnormalized forward, 1/(W*H) inverse; adjoints follow from
# the DFT matrix being symmetric: adjoint(fft2) = N*ifft2, adjoint(ifft2) =
# fft2/N, each composed with re/im projection or embedding as needed)


def fft2_real(x: Tensor) -> Tensor:
    """Forward transform of a real frame stack -> complex spectrum."""
    h, w = x.shape[-2], x.shape[-1]
    n = h * w

    def bw(g):
        return ((n * ifft2_fast(g)).real,)

    return Tensor(fft2_fast(x.value), (x,), bw)


def ifft2_real(z: Tensor) -> Tensor:
    """Inverse transform keeping the real part only."""
    h, w = z.shape[-2], z.shape[-1]
    n = h * w

    def bw(g):
        return (fft2_fast(g) / n,)

    return Tensor(ifft2_fast(z.value).real, (z,), bw)


def fft2_complex(z: Tensor) -> Tensor:
    h, w = z.shape[-2], z.shape[-1]
    n = h * w

    def bw(g):
        return (n * ifft2_fast(g),)

    return Tensor(fft2_fast(z.value), (z,), bw)
