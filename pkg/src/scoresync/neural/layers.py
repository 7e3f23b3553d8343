"""Layers with explicit forward/backward passes over (N, C, H, W) float64 arrays.

Each layer caches what its backward pass needs during ``forward`` and
fills ``grads`` (same keys as ``params``) during ``backward``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InputError


def effective_kernel_size(m: int, d: int) -> int:
    """Extent covered by an m-tap kernel at dilation d: m + (d - 1)(m - 1)."""
    return m + (d - 1) * (m - 1)


def _batched(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        return x[None], True
    if x.ndim != 4:
        raise InputError(f"expected [C,H,W] or [N,C,H,W] input, got shape {x.shape}")
    return x, False


class Layer:
    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def spec(self) -> dict:
        """Constructor arguments, for serialisation."""
        return {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


# ---------------------------------------------------------------------------
# dilated convolution


def _conv_taps(m, d, h_out, w_out):
    for ti in range(m):
        for tj in range(m):
            yield ti, tj, (slice(ti * d, ti * d + h_out), slice(tj * d, tj * d + w_out))


def conv2d_forward(x, kernels, bias=None, dilation: int = 1):
    """Valid dilated convolution, out(p) = sum_t x(p - d t) k(t) per output channel.

    ``x`` is [in_ch, H, W] or [N, in_ch, H, W]; ``kernels`` is [out_ch, in_ch, m, m].
    The output extent is H - m' + 1 with m' = effective_kernel_size(m, d).
    """
    x, squeeze = _batched(x)
    kernels = np.asarray(kernels, dtype=np.float64)
    out_ch, in_ch, m, m2 = kernels.shape
    if m != m2 or in_ch != x.shape[1]:
        raise InputError(f"kernel shape {kernels.shape} does not fit input {x.shape}")
    if dilation < 1:
        raise InputError(f"dilation must be >= 1, got {dilation}")
    span = effective_kernel_size(m, dilation)
    n, _, h, w = x.shape
    if h < span or w < span:
        raise InputError(f"effective kernel {span}x{span} larger than input {h}x{w}")
    h_out, w_out = h - span + 1, w - span + 1
    flipped = kernels[:, :, ::-1, ::-1]
    acc = np.zeros((out_ch, n, h_out, w_out))
    for ti, tj, (rs, cs) in _conv_taps(m, dilation, h_out, w_out):
        acc += np.tensordot(flipped[:, :, ti, tj], x[:, :, rs, cs], axes=([1], [1]))
    out = acc.transpose(1, 0, 2, 3)
    if bias is not None:
        out = out + np.asarray(bias)[None, :, None, None]
    return out[0] if squeeze else np.ascontiguousarray(out)


def zero_interleave(kernels, dilation: int):
    """Kernel with (d - 1) zero rows/columns between taps; dilation d becomes dilation 1."""
    kernels = np.asarray(kernels)
    m = kernels.shape[-1]
    span = effective_kernel_size(m, dilation)
    out = np.zeros(kernels.shape[:-2] + (span, span))
    out[..., ::dilation, ::dilation] = kernels
    return out


class Conv2d(Layer):
    def __init__(self, in_ch, out_ch, m=3, dilation=1, rng=None):
        super().__init__()
        if dilation < 1 or m < 1:
            raise InputError("kernel size and dilation must be >= 1")
        rng = rng or np.random.default_rng(0)
        self.in_ch, self.out_ch, self.m, self.dilation = in_ch, out_ch, m, dilation
        scale = np.sqrt(2.0 / (in_ch * m * m))
        self.params = {"kernels": rng.normal(0.0, scale, (out_ch, in_ch, m, m)),
                       "bias": np.zeros(out_ch)}
        self.zero_grad()

    def spec(self):
        return {"in_ch": self.in_ch, "out_ch": self.out_ch, "m": self.m, "dilation": self.dilation}

    def forward(self, x):
        self._x = x
        return conv2d_forward(x, self.params["kernels"], self.params["bias"], self.dilation)

    def backward(self, dy):
        x, m, d = self._x, self.m, self.dilation
        h_out, w_out = dy.shape[2:]
        flipped = self.params["kernels"][:, :, ::-1, ::-1]
        dy_t = dy.transpose(1, 0, 2, 3)
        d_flipped = np.empty_like(flipped)
        dx = np.zeros_like(x)
        for ti, tj, (rs, cs) in _conv_taps(m, d, h_out, w_out):
            d_flipped[:, :, ti, tj] = np.tensordot(dy_t, x[:, :, rs, cs], axes=([1, 2, 3], [0, 2, 3]))
            dx[:, :, rs, cs] += np.tensordot(dy_t, flipped[:, :, ti, tj], axes=([0], [0])).transpose(0, 3, 1, 2)
        self.grads["kernels"] = d_flipped[:, :, ::-1, ::-1].copy()
        self.grads["bias"] = dy.sum(axis=(0, 2, 3))
        return dx


class Pad2d(Layer):
    """Zero padding on both spatial axes; lets valid convolutions keep the extent."""

    def __init__(self, pad):
        super().__init__()
        self.pad = int(pad)

    def spec(self):
        return {"pad": self.pad}

    def forward(self, x):
        p = self.pad
        return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x

    def backward(self, dy):
        p = self.pad
        return dy[:, :, p:-p, p:-p] if p else dy


# ---------------------------------------------------------------------------
# pooling with argmax masks


@dataclass(frozen=True, eq=False)
class PoolMask:
    """Window-local argmax (0..3, row-major within each 2x2 window) and the pre-pool shape."""

    indices: np.ndarray
    input_shape: tuple


def max_pool2d(x):
    """2x2 max pooling, stride 2. Ties go to the lowest flat index in the window."""
    x, squeeze = _batched(x)
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise InputError(f"max_pool2d needs even spatial extents, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    if squeeze:
        return out[0], PoolMask(idx[0], (c, h, w))
    return out, PoolMask(idx, (n, c, h, w))


def max_unpool2d(x, mask: PoolMask):
    """Place each value at its recorded argmax inside the 2x2 window; zeros elsewhere."""
    x, squeeze = _batched(x)
    idx = mask.indices if mask.indices.ndim == 4 else mask.indices[None]
    if idx.shape != x.shape:
        raise InputError(f"mask shape {idx.shape} does not match input {x.shape}")
    n, c, h2, w2 = x.shape
    out = np.zeros((n, c, h2, w2, 4))
    np.put_along_axis(out, idx[..., None], x[..., None], axis=-1)
    out = out.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    expected = tuple(mask.input_shape[-3:])
    if out.shape[1:] != expected:
        raise InputError(f"mask records pre-pool shape {expected}, got {out.shape[1:]}")
    return out[0] if squeeze else out


def _gather_windows(dy, idx):
    n, c, h, w = dy.shape
    win = dy.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]


class MaxPool2d(Layer):
    def forward(self, x):
        out, self.mask = max_pool2d(x)
        return out

    def backward(self, dy):
        return max_unpool2d(dy, self.mask)


class MaxUnpool2d(Layer):
    """Unpools with the mask recorded by a paired MaxPool2d in the same model."""

    def __init__(self, pool: MaxPool2d, pool_index: int):
        super().__init__()
        self.pool = pool
        self.pool_index = pool_index

    def spec(self):
        return {"pool_index": self.pool_index}

    def forward(self, x):
        return max_unpool2d(x, self.pool.mask)

    def backward(self, dy):
        return _gather_windows(dy, self.pool.mask.indices)


# ---------------------------------------------------------------------------
# elementwise and dense


class ReLU(Layer):
    def forward(self, x):
        self._on = x > 0
        return np.where(self._on, x, 0.0)

    def backward(self, dy):
        return np.where(self._on, dy, 0.0)


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None, bias_init=None):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.n_in, self.n_out = n_in, n_out
        bias = np.zeros(n_out) if bias_init is None else np.array(bias_init, dtype=np.float64)
        self.params = {"weight": rng.normal(0.0, np.sqrt(2.0 / n_in), (n_out, n_in)), "bias": bias}
        self.zero_grad()

    def spec(self):
        return {"n_in": self.n_in, "n_out": self.n_out}

    def forward(self, x):
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, dy):
        self.grads["weight"] = dy.T @ self._x
        self.grads["bias"] = dy.sum(axis=0)
        return dy @ self.params["weight"]


# ---------------------------------------------------------------------------
# stand-alone self-attention


class Sasa(Layer):
    """Local self-attention over each pixel's (2k+1)^2 neighbourhood.

    Channels are split depthwise into ``heads`` groups, each with its own
    query/key/value projections; logits are q.k + q.r with r the
    concatenation of a row-offset and a column-offset embedding (head_dim/2
    each, shared by all heads). Border pixels attend only to in-bounds
    neighbours. Heads are concatenated back to ``channels``.
    """

    def __init__(self, channels, extent=1, heads=4, rng=None):
        super().__init__()
        if channels % heads:
            raise InputError(f"{channels} channels cannot be split into {heads} heads")
        dh = channels // heads
        if dh % 2:
            raise InputError("head dimension must be even to split the positional embedding")
        rng = rng or np.random.default_rng(0)
        self.channels, self.extent, self.heads, self.dh = channels, extent, heads, dh
        span = 2 * extent + 1
        scale = np.sqrt(2.0 / dh)
        self.params = {
            "w_q": rng.normal(0.0, scale, (heads, dh, dh)),
            "w_k": rng.normal(0.0, scale, (heads, dh, dh)),
            "w_v": rng.normal(0.0, scale, (heads, dh, dh)),
            "row_embed": rng.uniform(-0.1, 0.1, (span, dh // 2)),
            "col_embed": rng.uniform(-0.1, 0.1, (span, dh // 2)),
        }
        self.zero_grad()
        self.offsets = [(da, db) for da in range(-extent, extent + 1) for db in range(-extent, extent + 1)]

    def spec(self):
        return {"channels": self.channels, "extent": self.extent, "heads": self.heads}

    def _rel(self):
        k = self.extent
        row, col = self.params["row_embed"], self.params["col_embed"]
        return np.stack([np.concatenate([row[da + k], col[db + k]]) for da, db in self.offsets])

    def _shift(self, padded, h, w):
        k = self.extent
        return np.stack([padded[..., k + da:k + da + h, k + db:k + db + w] for da, db in self.offsets], axis=2)

    def forward(self, x):
        x, squeeze = _batched(x)
        n, c, h, w = x.shape
        if c != self.channels:
            raise InputError(f"expected {self.channels} channels, got {c}")
        k = self.extent
        xh = x.reshape(n, self.heads, self.dh, h, w)
        p = self.params
        q = np.einsum("gij,ngjyx->ngiyx", p["w_q"], xh)
        key = np.einsum("gij,ngjyx->ngiyx", p["w_k"], xh)
        val = np.einsum("gij,ngjyx->ngiyx", p["w_v"], xh)
        pad = ((0, 0), (0, 0), (0, 0), (k, k), (k, k))
        ks = self._shift(np.pad(key, pad), h, w)   # n, g, o, d, y, x
        vs = self._shift(np.pad(val, pad), h, w)
        rel = self._rel()                           # o, d
        logits = np.einsum("ngdyx,ngodyx->ngoyx", q, ks) + np.einsum("ngdyx,od->ngoyx", q, rel)
        valid = self._valid(h, w)
        logits = np.where(valid, logits, -np.inf)
        logits -= logits.max(axis=2, keepdims=True)
        wts = np.exp(logits)
        wts /= wts.sum(axis=2, keepdims=True)
        y = np.einsum("ngoyx,ngodyx->ngdyx", wts, vs)
        self._cache = (x, xh, q, ks, vs, rel, wts)
        self.weights = wts
        out = y.reshape(n, c, h, w)
        return out[0] if squeeze else out

    def _valid(self, h, w):
        rows, cols = np.arange(h)[:, None], np.arange(w)[None, :]
        return np.stack([(rows + da >= 0) & (rows + da < h) & (cols + db >= 0) & (cols + db < w)
                         for da, db in self.offsets])

    def backward(self, dy):
        x, xh, q, ks, vs, rel, wts = self._cache
        n, c, h, w = x.shape
        k = self.extent
        dy = dy.reshape(n, self.heads, self.dh, h, w)
        dw = np.einsum("ngdyx,ngodyx->ngoyx", dy, vs)
        dvs = wts[:, :, :, None] * dy[:, :, None]
        dlog = wts * (dw - np.sum(wts * dw, axis=2, keepdims=True))
        dq = np.einsum("ngoyx,ngodyx->ngdyx", dlog, ks) + np.einsum("ngoyx,od->ngdyx", dlog, rel)
        dks = dlog[:, :, :, None] * q[:, :, None]
        drel = np.einsum("ngoyx,ngdyx->od", dlog, q)
        dkey = np.zeros((n, self.heads, self.dh, h + 2 * k, w + 2 * k))
        dval = np.zeros_like(dkey)
        for o, (da, db) in enumerate(self.offsets):
            dkey[..., k + da:k + da + h, k + db:k + db + w] += dks[:, :, o]
            dval[..., k + da:k + da + h, k + db:k + db + w] += dvs[:, :, o]
        dkey = dkey[..., k:k + h, k:k + w]
        dval = dval[..., k:k + h, k:k + w]
        p = self.params
        half = self.dh // 2
        d_row = np.zeros_like(p["row_embed"])
        d_col = np.zeros_like(p["col_embed"])
        for o, (da, db) in enumerate(self.offsets):
            d_row[da + k] += drel[o, :half]
            d_col[db + k] += drel[o, half:]
        self.grads = {
            "w_q": np.einsum("ngiyx,ngjyx->gij", dq, xh),
            "w_k": np.einsum("ngiyx,ngjyx->gij", dkey, xh),
            "w_v": np.einsum("ngiyx,ngjyx->gij", dval, xh),
            "row_embed": d_row,
            "col_embed": d_col,
        }
        dx = (np.einsum("gij,ngiyx->ngjyx", p["w_q"], dq)
              + np.einsum("gij,ngiyx->ngjyx", p["w_k"], dkey)
              + np.einsum("gij,ngiyx->ngjyx", p["w_v"], dval))
        return dx.reshape(n, c, h, w)


def sasa_forward(x, layer: Sasa):
    """Functional form of ``layer.forward`` for [C,H,W] or [N,C,H,W] input."""
    return layer.forward(x)


LAYER_TYPES = {cls.__name__: cls for cls in (Conv2d, Pad2d, MaxPool2d, MaxUnpool2d, ReLU, Flatten, Dense, Sasa)}
