"""Dense array kernels with manual forward/backward passes.

All kernels operate on numpy arrays laid out height x width x channels
(an optional leading batch axis is accepted everywhere). Forward calls
can record their context on a GradientTape; the matching backward call
consumes that context and returns exact gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ShapeError",
    "ConvFilterBank",
    "GradientTape",
    "conv2d_forward",
    "conv2d_backward",
    "maxpool2x2_forward",
    "maxpool2x2_backward",
    "leaky_relu",
    "leaky_relu_backward",
    "dense_forward",
    "dense_backward",
    "flatten",
    "flatten_backward",
    "mse",
    "mse_grad",
    "mae",
    "finite_difference_gradient",
]


class ShapeError(ValueError):
    """Raised when an input's shape cannot feed the requested kernel."""


@dataclass
class ConvFilterBank:
    """A stack of convolution filters plus one bias per filter.

    filters: (count, kh, kw, in_channels), bias: (count,)
    """

    filters: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.filters = np.asarray(self.filters)
        self.bias = np.asarray(self.bias)
        if self.filters.ndim != 4:
            raise ShapeError(
                f"filters must be (count, kh, kw, in_channels), got shape {self.filters.shape}"
            )
        if self.bias.shape != (self.filters.shape[0],):
            raise ShapeError(
                f"bias must have one entry per filter: expected ({self.filters.shape[0]},), "
                f"got {self.bias.shape}"
            )

    @property
    def count(self) -> int:
        return self.filters.shape[0]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.filters.shape[1], self.filters.shape[2]

    @property
    def in_channels(self) -> int:
        return self.filters.shape[3]


class GradientTape:
    """Ordered record of kernel contexts from a single forward pass.

    One tape belongs to exactly one forward pass / training step; it is
    not shared across threads. Entries can be retrieved by name for
    graphs whose backward order differs from a straight reversal.
    """

    def __init__(self):
        self._entries: list[tuple[str, object]] = []

    def record(self, name: str, ctx) -> None:
        self._entries.append((name, ctx))

    def __getitem__(self, name: str):
        for entry_name, ctx in self._entries:
            if entry_name == name:
                return ctx
        raise KeyError(f"no tape entry named {name!r}")

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return [name for name, _ in self._entries]


def _as_batched(x: np.ndarray, kind: str) -> tuple[np.ndarray, bool]:
    """Promote (H,W,C) to (1,H,W,C), or (N,) to (1,N) for dense inputs."""
    x = np.asarray(x)
    if kind == "image":
        if x.ndim == 3:
            return x[None], False
        if x.ndim == 4:
            return x, True
        raise ShapeError(f"expected (H,W,C) or (B,H,W,C), got shape {x.shape}")
    if x.ndim == 1:
        return x[None], False
    if x.ndim == 2:
        return x, True
    raise ShapeError(f"expected (N,) or (B,N), got shape {x.shape}")


# ---------------------------------------------------------------------------
# valid 2-D convolution


@dataclass
class Conv2dContext:
    cols: np.ndarray  # im2col matrix (B*Ho*Wo, kh*kw*Cin) cached from forward
    in_shape: tuple
    bank: ConvFilterBank
    batched: bool


def _window_view(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """Strided view (B, Ho, Wo, kh, kw, C) of all kh x kw patches."""
    b, h, w, c = x.shape
    ho, wo = h - kh + 1, w - kw + 1
    s0, s1, s2, s3 = x.strides
    return np.lib.stride_tricks.as_strided(
        x, shape=(b, ho, wo, kh, kw, c), strides=(s0, s1, s2, s1, s2, s3), writeable=False
    )


def conv2d_forward(x, bank: ConvFilterBank, tape: GradientTape | None = None, name: str = "conv"):
    """Valid (no padding) convolution: one output channel per filter.

    (B,H,W,Cin) -> (B, H-kh+1, W-kw+1, count). Each output cell is the
    dot product of a filter with the aligned input patch, plus bias.
    """
    xb, batched = _as_batched(x, "image")
    kh, kw = bank.kernel_size
    b, h, w, c = xb.shape
    if c != bank.in_channels:
        raise ShapeError(f"input has {c} channels but filters expect {bank.in_channels}")
    if h < kh or w < kw:
        raise ShapeError(f"input {h}x{w} is smaller than the {kh}x{kw} kernel")

    cols = _window_view(xb, kh, kw).reshape(b * (h - kh + 1) * (w - kw + 1), kh * kw * c)
    wmat = bank.filters.transpose(1, 2, 3, 0).reshape(kh * kw * c, bank.count)
    out = cols @ wmat
    out += bank.bias
    out = out.reshape(b, h - kh + 1, w - kw + 1, bank.count)

    if tape is not None:
        tape.record(name, Conv2dContext(cols, xb.shape, bank, batched))
    return out if batched else out[0]


def conv2d_backward(ctx: Conv2dContext, grad):
    """Gradients of a recorded convolution: (d_input, d_filters, d_bias)."""
    if ctx is None:
        raise ValueError("conv2d_backward needs the context recorded by conv2d_forward")
    bank = ctx.bank
    kh, kw = bank.kernel_size
    cin = bank.in_channels
    g = np.asarray(grad)
    if not ctx.batched:
        g = g[None]
    b, ho, wo, n = g.shape

    d_bias = g.sum(axis=(0, 1, 2))

    gmat = np.ascontiguousarray(g).reshape(b * ho * wo, n)
    # (kh*kw*c, n) -> (n, kh, kw, c); the forward's im2col matrix is reused
    d_filters = (ctx.cols.T @ gmat).reshape(kh, kw, cin, n).transpose(3, 0, 1, 2)

    # d_input: scatter one GEMM per kernel offset back onto the input window
    d_x = np.zeros(ctx.in_shape, dtype=np.result_type(g.dtype, bank.filters.dtype))
    for i in range(kh):
        for j in range(kw):
            contrib = (gmat @ bank.filters[:, i, j, :]).reshape(b, ho, wo, cin)
            d_x[:, i : i + ho, j : j + wo, :] += contrib

    if not ctx.batched:
        d_x = d_x[0]
    return d_x, d_filters, d_bias


# ---------------------------------------------------------------------------
# 2x2 max-pooling, non-overlapping windows, trailing odd row/column dropped


@dataclass
class MaxPoolContext:
    x: np.ndarray  # batched input (B,H,W,C); window corners are re-sliced on backward
    out: np.ndarray
    batched: bool


def _pool_corners(xb: np.ndarray, ho: int, wo: int):
    """The four corner slices of every 2x2 window, in row-major window order."""
    t = xb[:, : 2 * ho, : 2 * wo, :]
    return (
        t[:, 0::2, 0::2, :],
        t[:, 0::2, 1::2, :],
        t[:, 1::2, 0::2, :],
        t[:, 1::2, 1::2, :],
    )


def maxpool2x2_forward(x, tape: GradientTape | None = None, name: str = "pool"):
    """Max over non-overlapping 2x2 windows; output (floor(H/2), floor(W/2), C)."""
    xb, batched = _as_batched(x, "image")
    b, h, w, c = xb.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool2x2 needs at least 2x2 spatial input, got {h}x{w}")
    ho, wo = h // 2, w // 2
    nw, ne, sw, se = _pool_corners(xb, ho, wo)
    out = np.maximum(np.maximum(nw, ne), np.maximum(sw, se))

    if tape is not None:
        tape.record(name, MaxPoolContext(xb, out, batched))
    return out if batched else out[0]


def maxpool2x2_backward(ctx: MaxPoolContext, grad):
    """Routes the upstream gradient to each window's winner.

    Ties go to the first winner in row-major scan order within the window.
    """
    if ctx is None:
        raise ValueError("maxpool2x2_backward needs the context recorded by maxpool2x2_forward")
    g = np.asarray(grad)
    if not ctx.batched:
        g = g[None]
    b, h, w, c = ctx.x.shape
    ho, wo = h // 2, w // 2

    d_x = np.zeros(ctx.x.shape, dtype=g.dtype)
    taken = np.zeros(g.shape, dtype=bool)
    corners = _pool_corners(ctx.x, ho, wo)
    targets = _pool_corners(d_x, ho, wo)
    for corner, target in zip(corners, targets):
        winner = (corner == ctx.out) & ~taken
        target += g * winner
        taken |= winner

    if not ctx.batched:
        d_x = d_x[0]
    return d_x


# ---------------------------------------------------------------------------
# LeakyReLU


@dataclass
class LeakyReluContext:
    positive: np.ndarray
    slope: float


def leaky_relu(x, slope: float = 0.01, tape: GradientTape | None = None, name: str = "act"):
    """Elementwise x if x > 0 else slope * x. slope must lie in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise ValueError(f"slope must be in (0, 1), got {slope}")
    x = np.asarray(x)
    positive = x > 0
    out = np.where(positive, x, slope * x)
    if tape is not None:
        tape.record(name, LeakyReluContext(positive, slope))
    return out


def leaky_relu_backward(ctx: LeakyReluContext, grad):
    g = np.asarray(grad)
    return np.where(ctx.positive, g, ctx.slope * g)


# ---------------------------------------------------------------------------
# fully connected layer


@dataclass
class DenseContext:
    x: np.ndarray  # (B, N)
    weights: np.ndarray  # (M, N)
    batched: bool


def dense_forward(x, weights, biases, tape: GradientTape | None = None, name: str = "dense"):
    """Affine map W @ x + b for x (N,) or a batch (B, N)."""
    xb, batched = _as_batched(x, "vector")
    weights = np.asarray(weights)
    biases = np.asarray(biases)
    if weights.ndim != 2 or xb.shape[1] != weights.shape[1]:
        raise ShapeError(
            f"weights {weights.shape} cannot multiply input of width {xb.shape[1]}"
        )
    if biases.shape != (weights.shape[0],):
        raise ShapeError(f"biases must be ({weights.shape[0]},), got {biases.shape}")
    out = xb @ weights.T + biases
    if tape is not None:
        tape.record(name, DenseContext(xb, weights, batched))
    return out if batched else out[0]


def dense_backward(ctx: DenseContext, grad):
    """Gradients of a recorded dense layer: (d_input, d_weights, d_biases)."""
    if ctx is None:
        raise ValueError("dense_backward needs the context recorded by dense_forward")
    g = np.asarray(grad)
    if not ctx.batched:
        g = g[None]
    d_x = g @ ctx.weights
    d_w = g.T @ ctx.x
    d_b = g.sum(axis=0)
    if not ctx.batched:
        d_x = d_x[0]
    return d_x, d_w, d_b


# ---------------------------------------------------------------------------
# flatten


@dataclass
class FlattenContext:
    in_shape: tuple
    batched: bool


def flatten(x, tape: GradientTape | None = None, name: str = "flatten"):
    """Row-major linearization (H,W,C) -> (H*W*C,), batch axis preserved."""
    xb, batched = _as_batched(x, "image")
    out = xb.reshape(xb.shape[0], -1)
    if tape is not None:
        tape.record(name, FlattenContext(xb.shape, batched))
    return out if batched else out[0]


def flatten_backward(ctx: FlattenContext, grad):
    g = np.asarray(grad)
    if not ctx.batched:
        g = g[None]
    d_x = g.reshape(ctx.in_shape)
    if not ctx.batched:
        d_x = d_x[0]
    return d_x


# ---------------------------------------------------------------------------
# losses


def _check_same_shape(pred, target):
    pred = np.asarray(pred)
    target = np.asarray(target)
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return pred, target


def mse(pred, target) -> float:
    """Mean of squared elementwise differences."""
    pred, target = _check_same_shape(pred, target)
    diff = pred - target
    return float(np.mean(diff * diff))


def mse_grad(pred, target) -> np.ndarray:
    """d mse / d pred = 2 (pred - target) / N."""
    pred, target = _check_same_shape(pred, target)
    return 2.0 * (pred - target) / pred.size


def mae(pred, target) -> float:
    """Mean of absolute elementwise differences."""
    pred, target = _check_same_shape(pred, target)
    return float(np.mean(np.abs(pred - target)))


# ---------------------------------------------------------------------------
# gradient oracle


def finite_difference_gradient(f, at, step: float = 1e-4) -> np.ndarray:
    """Central differences (f(x + h e_i) - f(x - h e_i)) / 2h per coordinate.

    Accumulates in float64 regardless of the input dtype.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    x = np.asarray(at, dtype=np.float64).copy()
    grad = np.zeros_like(x)
    flat = x.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        f_plus = f(x)
        flat[i] = orig - step
        f_minus = f(x)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * step)
    return grad
