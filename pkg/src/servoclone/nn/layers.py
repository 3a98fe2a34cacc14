"""Layers with explicit forward/backward passes on NHWC float arrays.

Convolution is im2col + one GEMM: the column matrix is assembled by k*k
strided slice copies, which keeps the hot loop inside BLAS/memcpy. Each layer
caches what its backward pass needs; buffers are reallocated only when the
batch size changes.
"""
from __future__ import annotations

import numpy as np


class Param:
    """A named parameter tensor and its gradient accumulator."""

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    @property
    def shape(self):
        return self.value.shape


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class Conv2d(Layer):
    """2D convolution on (N, H, W, C) input, 'same'-style explicit padding."""

    def __init__(self, name: str, rng, cin: int, cout: int, kernel: int,
                 stride: int = 1, pad: int = 0, dtype=np.float32,
                 need_input_grad: bool = True):
        self.cin, self.cout, self.k = cin, cout, kernel
        self.stride, self.pad = stride, pad
        self.dtype = dtype
        self.need_input_grad = need_input_grad
        fan_in = kernel * kernel * cin
        self.w = Param(f"{name}.w", he_uniform(rng, (kernel, kernel, cin, cout), fan_in, dtype))
        self.b = Param(f"{name}.b", np.zeros(cout, dtype=dtype))
        self._n = -1
        self._xp = self._cols = None
        self._in_hw = None

    def params(self):
        return [self.w, self.b]

    def _out_hw(self, h, w):
        oh = (h + 2 * self.pad - self.k) // self.stride + 1
        ow = (w + 2 * self.pad - self.k) // self.stride + 1
        return oh, ow

    def _ensure_buffers(self, n, h, w):
        if n == self._n and (h, w) == self._in_hw:
            return
        self._n, self._in_hw = n, (h, w)
        oh, ow = self._out_hw(h, w)
        if self.k == 1 and self.stride == 1 and self.pad == 0:
            self._xp = self._cols = None
            return
        self._xp = np.zeros((n, h + 2 * self.pad, w + 2 * self.pad, self.cin), self.dtype)
        self._cols = np.empty((n, oh, ow, self.k, self.k, self.cin), self.dtype)
        if self.need_input_grad and self.stride == 1:
            e = self.k - 1
            self._dyp = np.zeros((n, oh + 2 * e, ow + 2 * e, self.cout), self.dtype)
            self._bcols = np.empty((n, oh + e, ow + e, self.k, self.k, self.cout),
                                   self.dtype)

    def _fill_cols(self, src: np.ndarray, cols: np.ndarray, oh: int, ow: int):
        # One strided copy beats a per-tap loop: the destination is written
        # in contiguous order, the windows only scatter the reads.
        s, k = self.stride, self.k
        win = np.lib.stride_tricks.sliding_window_view(src, (k, k), axis=(1, 2))
        np.copyto(cols, win[:, ::s, ::s].transpose(0, 1, 2, 4, 5, 3))

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, h, w, _ = x.shape
        oh, ow = self._out_hw(h, w)
        self._ensure_buffers(n, h, w)
        if self._cols is None:  # pointwise fast path
            self._x2d = x.reshape(-1, self.cin)
            out = self._x2d @ self.w.value.reshape(self.cin, self.cout)
        else:
            self._xp[:, self.pad:self.pad + h, self.pad:self.pad + w, :] = x
            self._fill_cols(self._xp, self._cols, oh, ow)
            out = self._cols.reshape(n * oh * ow, -1) @ self.w.value.reshape(-1, self.cout)
        out += self.b.value
        return out.reshape(n, oh, ow, self.cout)

    def backward(self, dy: np.ndarray) -> np.ndarray | None:
        n, oh, ow, _ = dy.shape
        dy2d = dy.reshape(n * oh * ow, self.cout)
        self.b.grad += dy2d.sum(axis=0)
        w2d = self.w.value.reshape(-1, self.cout)
        if self._cols is None:
            self.w.grad += (self._x2d.T @ dy2d).reshape(self.w.shape)
            if not self.need_input_grad:
                return None
            dx = dy2d @ w2d.T
            h, w = self._in_hw
            return dx.reshape(n, h, w, self.cin)
        cols2d = self._cols.reshape(n * oh * ow, -1)
        self.w.grad += (cols2d.T @ dy2d).reshape(self.w.shape)
        if not self.need_input_grad:
            return None
        h, w = self._in_hw
        s, k = self.stride, self.k
        if s == 1:
            # Input gradient as a convolution of dy with the spatially
            # flipped, channel-transposed kernel: one fill and one GEMM
            # instead of k*k strided scatter-adds.
            e = k - 1
            self._dyp[:, e:e + oh, e:e + ow, :] = dy
            bh, bw = oh + e, ow + e
            win = np.lib.stride_tricks.sliding_window_view(
                self._dyp, (k, k), axis=(1, 2))
            np.copyto(self._bcols, win.transpose(0, 1, 2, 4, 5, 3))
            wf = self.w.value[::-1, ::-1].transpose(0, 1, 3, 2).reshape(-1, self.cin)
            dxp = (self._bcols.reshape(n * bh * bw, -1) @ wf).reshape(
                n, bh, bw, self.cin)
        else:
            dcols = (dy2d @ w2d.T).reshape(self._cols.shape)
            dxp = np.zeros_like(self._xp)
            for di in range(k):
                for dj in range(k):
                    dxp[:, di:di + s * (oh - 1) + 1:s, dj:dj + s * (ow - 1) + 1:s, :] += \
                        dcols[:, :, :, di, dj, :]
        if self.pad == 0:
            return dxp
        return dxp[:, self.pad:self.pad + h, self.pad:self.pad + w, :]


class ReLU(Layer):
    def forward(self, x):
        self._y = np.maximum(x, 0.0)
        return self._y

    def backward(self, dy):
        return dy * (self._y > 0.0)


class Linear(Layer):
    def __init__(self, name: str, rng, nin: int, nout: int, dtype=np.float32):
        self.nin, self.nout = nin, nout
        self.w = Param(f"{name}.w", he_uniform(rng, (nin, nout), nin, dtype))
        self.b = Param(f"{name}.b", np.zeros(nout, dtype=dtype))

    def params(self):
        return [self.w, self.b]

    def forward(self, x):
        self._x = x
        return x @ self.w.value + self.b.value

    def backward(self, dy):
        self.w.grad += self._x.T @ dy
        self.b.grad += dy.sum(axis=0)
        return dy @ self.w.value.T


class Flatten(Layer):
    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class ResidualBlock(Layer):
    """conv3x3 -> ReLU -> conv3x3, additive skip, ReLU.

    When the block changes channels or downsamples, the skip goes through a
    1x1 projection with the same stride.
    """

    def __init__(self, name: str, rng, cin: int, cout: int, stride: int = 1,
                 dtype=np.float32):
        self.conv1 = Conv2d(f"{name}.conv1", rng, cin, cout, 3, stride, 1, dtype)
        self.relu1 = ReLU()
        self.conv2 = Conv2d(f"{name}.conv2", rng, cout, cout, 3, 1, 1, dtype)
        self.proj = None
        if stride != 1 or cin != cout:
            self.proj = Conv2d(f"{name}.proj", rng, cin, cout, 1, stride, 0, dtype)
        self.relu_out = ReLU()

    def params(self):
        ps = self.conv1.params() + self.conv2.params()
        if self.proj is not None:
            ps += self.proj.params()
        return ps

    def forward(self, x):
        main = self.conv2.forward(self.relu1.forward(self.conv1.forward(x)))
        skip = x if self.proj is None else self.proj.forward(x)
        return self.relu_out.forward(main + skip)

    def backward(self, dy):
        d_sum = self.relu_out.backward(dy)
        dx_main = self.conv1.backward(self.relu1.backward(self.conv2.backward(d_sum)))
        dx_skip = d_sum if self.proj is None else self.proj.backward(d_sum)
        return dx_main + dx_skip
