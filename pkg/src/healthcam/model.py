"""Branched / two-stage / monolithic CNN regressors and their checkpoints.

All three share the same trunk: three (3x3 conv, LeakyReLU, 2x2 maxpool)
stages followed by a flatten. They differ only in how the seven outputs
are produced:

  branched:   two parallel one-hidden-layer MLPs read the flatten vector;
              the first predicts (pm25, pm10), the second the other five.
  two-stage:  the first MLP reads the flatten vector and predicts the two
              primaries; a second MLP reads those two predictions (with
              gradients stopped at that interface) and predicts the five.
  monolithic: a single one-hidden-layer MLP emits all seven at once.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import PRIMARY_COUNT, SECONDARY_COUNT, LabelScaler
from .tensor_core import (
    ConvFilterBank,
    GradientTape,
    ShapeError,
    conv2d_backward,
    conv2d_forward,
    dense_backward,
    dense_forward,
    flatten,
    flatten_backward,
    leaky_relu,
    leaky_relu_backward,
    maxpool2x2_backward,
    maxpool2x2_forward,
)

ARCHITECTURES = ("branched", "two-stage", "monolithic")

CHECKPOINT_MAGIC = b"HCAMCKPT"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class StaleTraceError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 224
    in_channels: int = 3
    conv_filters: tuple = (32, 64, 64)
    kernel_size: int = 3
    pool_size: int = 2
    leaky_slope: float = 0.01
    hidden_units: int = 64
    architecture: str = "branched"

    def __post_init__(self):
        object.__setattr__(self, "conv_filters", tuple(int(f) for f in self.conv_filters))
        if len(self.conv_filters) != 3:
            raise ValueError(f"conv_filters must have exactly 3 entries, got {self.conv_filters}")
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}")
        if self.kernel_size < 1 or self.pool_size != 2:
            raise ValueError("kernel_size must be >= 1 and pool_size must be 2")
        if not 0.0 < self.leaky_slope < 1.0:
            raise ValueError(f"leaky_slope must be in (0, 1), got {self.leaky_slope}")
        if self.hidden_units < 1:
            raise ValueError("hidden_units must be positive")

    def stage_sizes(self) -> list:
        """Per-stage (conv, pool) spatial sizes; raises if any stage is impossible."""
        sizes = []
        s = self.input_size
        for i in range(3):
            if s < self.kernel_size:
                raise ShapeError(
                    f"input size {self.input_size} cannot feed conv stage {i + 1}: "
                    f"spatial extent {s} is smaller than the {self.kernel_size}x"
                    f"{self.kernel_size} kernel"
                )
            s_conv = s - self.kernel_size + 1
            if s_conv < 2:
                raise ShapeError(
                    f"input size {self.input_size} cannot feed pool stage {i + 1}: "
                    f"conv output extent {s_conv} is below the 2x2 pool window"
                )
            s_pool = s_conv // 2
            sizes.append((s_conv, s_pool))
            s = s_pool
        return sizes

    @property
    def flatten_width(self) -> int:
        final_pool = self.stage_sizes()[-1][1]
        return final_pool * final_pool * self.conv_filters[-1]

    def to_dict(self) -> dict:
        return {
            "input_size": self.input_size,
            "in_channels": self.in_channels,
            "conv_filters": list(self.conv_filters),
            "kernel_size": self.kernel_size,
            "pool_size": self.pool_size,
            "leaky_slope": self.leaky_slope,
            "hidden_units": self.hidden_units,
            "architecture": self.architecture,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        return cls(**{**doc, "conv_filters": tuple(doc["conv_filters"])})


def expected_param_shapes(config: ModelConfig) -> dict:
    """Ordered parameter name -> shape map; also fixes the build draw order."""
    k = config.kernel_size
    shapes = {}
    in_ch = config.in_channels
    for i, count in enumerate(config.conv_filters, start=1):
        shapes[f"conv{i}.filters"] = (count, k, k, in_ch)
        shapes[f"conv{i}.bias"] = (count,)
        in_ch = count
    flat = config.flatten_width
    hidden = config.hidden_units
    if config.architecture == "branched":
        shapes["head1.hidden.weights"] = (hidden, flat)
        shapes["head1.hidden.bias"] = (hidden,)
        shapes["head1.out.weights"] = (PRIMARY_COUNT, hidden)
        shapes["head1.out.bias"] = (PRIMARY_COUNT,)
        shapes["head2.hidden.weights"] = (hidden, flat)
        shapes["head2.hidden.bias"] = (hidden,)
        shapes["head2.out.weights"] = (SECONDARY_COUNT, hidden)
        shapes["head2.out.bias"] = (SECONDARY_COUNT,)
    elif config.architecture == "two-stage":
        shapes["head1.hidden.weights"] = (hidden, flat)
        shapes["head1.hidden.bias"] = (hidden,)
        shapes["head1.out.weights"] = (PRIMARY_COUNT, hidden)
        shapes["head1.out.bias"] = (PRIMARY_COUNT,)
        shapes["head2.hidden.weights"] = (hidden, PRIMARY_COUNT)
        shapes["head2.hidden.bias"] = (hidden,)
        shapes["head2.out.weights"] = (SECONDARY_COUNT, hidden)
        shapes["head2.out.bias"] = (SECONDARY_COUNT,)
    else:  # monolithic
        shapes["head.hidden.weights"] = (hidden, flat)
        shapes["head.hidden.bias"] = (hidden,)
        shapes["head.out.weights"] = (PRIMARY_COUNT + SECONDARY_COUNT, hidden)
        shapes["head.out.bias"] = (PRIMARY_COUNT + SECONDARY_COUNT,)
    return shapes


@dataclass
class ForwardTrace:
    """Intermediates of one forward pass, sufficient for an exact backward."""

    tape: GradientTape
    stage_outputs: list  # (z, a, p) per conv stage
    flat: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    batched: bool
    model_version: int

    def shapes(self) -> list:
        out = []
        for z, a, p in self.stage_outputs:
            out.extend([z.shape, a.shape, p.shape])
        out.append(self.flat.shape)
        return out


class ModelGraph:
    """Parameter container plus forward/backward for one architecture."""

    def __init__(self, config: ModelConfig, params: dict):
        expected = expected_param_shapes(config)
        if list(params) != list(expected):
            raise CheckpointError(
                f"parameter set mismatch: expected {list(expected)}, got {list(params)}"
            )
        for name, shape in expected.items():
            if tuple(params[name].shape) != shape:
                raise CheckpointError(
                    f"parameter {name} has shape {params[name].shape}, expected {shape}"
                )
            if not np.all(np.isfinite(params[name])):
                raise CheckpointError(f"parameter {name} contains non-finite values")
        self.config = config
        self.params = params
        self.version = 0

    # -- construction ------------------------------------------------------

    @classmethod
    def build(cls, config: ModelConfig, seed: int) -> "ModelGraph":
        """Seeded init: weights uniform in +-1/sqrt(fan_in), biases zero.

        The trunk is drawn before the heads, so models with different
        architectures but equal seeds share identical trunk weights.
        """
        config.stage_sizes()  # validate feasibility before allocating
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in expected_param_shapes(config).items():
            if name.endswith(".bias"):
                params[name] = np.zeros(shape, dtype=np.float32)
            else:
                fan_in = int(np.prod(shape[1:]))
                bound = 1.0 / np.sqrt(fan_in)
                params[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
        return cls(config, params)

    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def astype(self, dtype) -> "ModelGraph":
        """Copy with parameters cast (float64 copies are used for gradient checks)."""
        clone = ModelGraph(self.config, {n: p.astype(dtype) for n, p in self.params.items()})
        clone.version = self.version
        return clone

    def bank(self, stage: int) -> ConvFilterBank:
        return ConvFilterBank(
            filters=self.params[f"conv{stage}.filters"], bias=self.params[f"conv{stage}.bias"]
        )

    # -- forward / backward -------------------------------------------------

    def _check_input(self, x: np.ndarray) -> tuple:
        x = np.asarray(x)
        batched = x.ndim == 4
        if not batched:
            if x.ndim != 3:
                raise ShapeError(f"expected (H,W,C) or (B,H,W,C), got shape {x.shape}")
            x = x[None]
        s, c = self.config.input_size, self.config.in_channels
        if x.shape[1:] != (s, s, c):
            raise ShapeError(f"model expects input {s}x{s}x{c}, got {x.shape[1:]}")
        return x, batched

    def _head(self, name: str, x, tape: GradientTape):
        h = dense_forward(x, self.params[f"{name}.hidden.weights"], self.params[f"{name}.hidden.bias"], tape=tape, name=f"{name}.hidden")
        a = leaky_relu(h, self.config.leaky_slope, tape=tape, name=f"{name}.act")
        # heads end linear: targets are min-max scaled but regression stays unconstrained
        return dense_forward(a, self.params[f"{name}.out.weights"], self.params[f"{name}.out.bias"], tape=tape, name=f"{name}.out")

    def forward(self, x) -> tuple:
        """Run a batch; returns (y1 (B,2), y2 (B,5), trace)."""
        xb, batched = self._check_input(x)
        tape = GradientTape()
        stage_outputs = []
        h = xb
        for i in range(1, 4):
            z = conv2d_forward(h, self.bank(i), tape=tape, name=f"conv{i}")
            a = leaky_relu(z, self.config.leaky_slope, tape=tape, name=f"act{i}")
            p = maxpool2x2_forward(a, tape=tape, name=f"pool{i}")
            stage_outputs.append((z, a, p))
            h = p
        flat = flatten(h, tape=tape, name="flatten")

        if self.config.architecture == "branched":
            y1 = self._head("head1", flat, tape)
            y2 = self._head("head2", flat, tape)
        elif self.config.architecture == "two-stage":
            y1 = self._head("head1", flat, tape)
            y2 = self._head("head2", y1, tape)
        else:
            y = self._head("head", flat, tape)
            y1, y2 = y[:, :PRIMARY_COUNT], y[:, PRIMARY_COUNT:]

        trace = ForwardTrace(
            tape=tape,
            stage_outputs=stage_outputs,
            flat=flat,
            y1=y1,
            y2=y2,
            batched=batched,
            model_version=self.version,
        )
        return y1, y2, trace

    def _head_backward(self, name: str, grad, tape: GradientTape, grads: dict):
        g, d_w, d_b = dense_backward(tape[f"{name}.out"], grad)
        grads[f"{name}.out.weights"] = d_w
        grads[f"{name}.out.bias"] = d_b
        g = leaky_relu_backward(tape[f"{name}.act"], g)
        g, d_w, d_b = dense_backward(tape[f"{name}.hidden"], g)
        grads[f"{name}.hidden.weights"] = d_w
        grads[f"{name}.hidden.bias"] = d_b
        return g

    def backward(self, trace: ForwardTrace, grad_y1, grad_y2) -> dict:
        """Exact gradients of the loss whose output-gradients are given.

        In the branched architecture trunk gradients sum both heads'
        contributions; in two-stage the five-output head's gradient stops
        at the two-prediction interface.
        """
        if trace.model_version != self.version:
            raise StaleTraceError(
                "trace was recorded for an earlier parameter version of this model"
            )
        tape = trace.tape
        grads = {}
        grad_y1 = np.asarray(grad_y1)
        grad_y2 = np.asarray(grad_y2)

        if self.config.architecture == "branched":
            g_flat = self._head_backward("head1", grad_y1, tape, grads)
            g_flat = g_flat + self._head_backward("head2", grad_y2, tape, grads)
        elif self.config.architecture == "two-stage":
            self._head_backward("head2", grad_y2, tape, grads)  # d y1 discarded: stop-gradient
            g_flat = self._head_backward("head1", grad_y1, tape, grads)
        else:
            g_out = np.concatenate([grad_y1, grad_y2], axis=-1)
            g_flat = self._head_backward("head", g_out, tape, grads)

        g = flatten_backward(tape["flatten"], g_flat)
        for i in range(3, 0, -1):
            g = maxpool2x2_backward(tape[f"pool{i}"], g)
            g = leaky_relu_backward(tape[f"act{i}"], g)
            g, d_f, d_b = conv2d_backward(tape[f"conv{i}"], g)
            grads[f"conv{i}.filters"] = d_f
            grads[f"conv{i}.bias"] = d_b

        return {name: grads[name] for name in self.params}  # declared order

    def mark_updated(self) -> None:
        """Invalidate traces recorded before an in-place parameter update."""
        self.version += 1


# ---------------------------------------------------------------------------
# checkpoints: 8-byte magic | u32 version | u64 header length | JSON header |
# raw little-endian float32 arrays in declared parameter order


def save_checkpoint(model: ModelGraph, scaler: LabelScaler | None, path) -> None:
    """Atomic write (temp file + rename) of model, config, and scaler."""
    path = Path(path)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "architecture": model.config.architecture,
        "config": model.config.to_dict(),
        "scaler": scaler.to_json() if scaler is not None else None,
        "params": [{"name": n, "shape": list(p.shape)} for n, p in model.params.items()],
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<I", CHECKPOINT_VERSION))
            fh.write(struct.pack("<Q", len(blob)))
            fh.write(blob)
            for p in model.params.values():
                fh.write(np.ascontiguousarray(p, dtype="<f4").tobytes())
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def load_checkpoint(path, expect_architecture: str | None = None):
    """Read a checkpoint; returns (ModelGraph, LabelScaler | None)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    if len(raw) < len(CHECKPOINT_MAGIC) + 12:
        raise CheckpointError(f"checkpoint {path} is truncated")
    if raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path} is not a healthcam checkpoint (bad magic bytes)")
    offset = len(CHECKPOINT_MAGIC)
    (version,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint format version {version} (expected {CHECKPOINT_VERSION})"
        )
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    if offset + header_len > len(raw):
        raise CheckpointError(f"checkpoint {path} is truncated inside its header")
    try:
        header = json.loads(raw[offset : offset + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint {path} has a corrupt header: {exc}") from exc
    offset += header_len

    config = ModelConfig.from_dict(header["config"])
    if expect_architecture is not None and config.architecture != expect_architecture:
        raise CheckpointError(
            f"checkpoint holds a {config.architecture!r} model, not {expect_architecture!r}"
        )

    params = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        nbytes = int(np.prod(shape)) * 4
        if offset + nbytes > len(raw):
            raise CheckpointError(f"checkpoint {path} is truncated inside parameter data")
        params[entry["name"]] = (
            np.frombuffer(raw, dtype="<f4", count=int(np.prod(shape)), offset=offset)
            .reshape(shape)
            .copy()
        )
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"checkpoint {path} has {len(raw) - offset} trailing bytes")

    scaler = LabelScaler.from_json(header["scaler"]) if header.get("scaler") else None
    return ModelGraph(config, params), scaler


def checkpoint_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
