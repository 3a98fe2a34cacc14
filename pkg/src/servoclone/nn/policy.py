"""The image-to-twist network and its checkpoint format.

Architecture: 3x3 stem (3->16), three stages of two residual blocks
(16, 32, 64 channels; stages 2-3 downsample by stride 2 with a 1x1
projection shortcut), then a 1x1 channel-reduction conv (->8), flatten,
FC->128, ReLU, FC->6. The 6 outputs are normalized twist components; the
TwistPolicy wrapper de-normalizes them into an end-effector-frame twist.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from ..geometry import Frame, Twist
from .layers import Conv2d, Flatten, Linear, Param, ReLU, ResidualBlock

CHECKPOINT_MAGIC = b"SVCN1\n"

DEFAULT_TWIST_SCALES = (0.25, 0.25, 0.25, 0.8, 0.8, 0.8)


class CheckpointError(ValueError):
    pass


class PolicyNet:
    """Residual CNN mapping (N, H, W, 3) images to (N, 6) normalized twists."""

    STAGE_CHANNELS = (16, 32, 64)
    HEAD_CHANNELS = 8
    FC_DIM = 128
    OUT_DIM = 6

    def __init__(self, height: int, width: int, rng: np.random.Generator,
                 dtype=np.float32):
        if height % 4 != 0 or width % 4 != 0:
            raise ValueError("input dims must be divisible by 4 (two stride-2 stages)")
        self.height, self.width = height, width
        self.dtype = dtype
        c1, c2, c3 = self.STAGE_CHANNELS
        self.stem = Conv2d("stem", rng, 3, c1, 3, 1, 1, dtype, need_input_grad=False)
        self.stem_relu = ReLU()
        self.blocks = [
            ResidualBlock("s1b1", rng, c1, c1, 1, dtype),
            ResidualBlock("s1b2", rng, c1, c1, 1, dtype),
            ResidualBlock("s2b1", rng, c1, c2, 2, dtype),
            ResidualBlock("s2b2", rng, c2, c2, 1, dtype),
            ResidualBlock("s3b1", rng, c2, c3, 2, dtype),
            ResidualBlock("s3b2", rng, c3, c3, 1, dtype),
        ]
        self.head_conv = Conv2d("head.reduce", rng, c3, self.HEAD_CHANNELS, 1, 1, 0, dtype)
        self.flatten = Flatten()
        # FC input size comes from the actual post-conv spatial dims.
        feat_h, feat_w = height // 4, width // 4
        self.fc_in = feat_h * feat_w * self.HEAD_CHANNELS
        self.fc1 = Linear("head.fc1", rng, self.fc_in, self.FC_DIM, dtype)
        self.fc_relu = ReLU()
        self.fc2 = Linear("head.fc2", rng, self.FC_DIM, self.OUT_DIM, dtype)
        self._layers = [self.stem, self.stem_relu, *self.blocks, self.head_conv,
                        self.flatten, self.fc1, self.fc_relu, self.fc2]

    def params(self) -> list[Param]:
        out = []
        for layer in self._layers:
            out.extend(layer.params())
        return out

    def num_params(self) -> int:
        return sum(p.value.size for p in self.params())

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.ndim != 4 or x.shape[1:] != (self.height, self.width, 3):
            raise ValueError(f"expected (N, {self.height}, {self.width}, 3) input, "
                             f"got {x.shape}")
        x = np.ascontiguousarray(x, dtype=self.dtype)
        for layer in self._layers:
            x = layer.forward(x)
        return x

    def zero_grad(self) -> None:
        for p in self.params():
            p.grad[:] = 0

    def backward(self, dy: np.ndarray) -> None:
        """Accumulate parameter gradients for the loss gradient dy (N, 6)."""
        d = np.ascontiguousarray(dy, dtype=self.dtype)
        for layer in reversed(self._layers):
            d = layer.backward(d)
            if d is None:
                break

    def state_items(self) -> list[tuple[str, np.ndarray]]:
        return [(p.name, p.value) for p in self.params()]

    def load_state(self, tensors: dict[str, np.ndarray]) -> None:
        mine = {p.name: p for p in self.params()}
        if set(tensors) != set(mine):
            missing = sorted(set(mine) - set(tensors))
            extra = sorted(set(tensors) - set(mine))
            raise CheckpointError(f"parameter names mismatch: missing={missing} extra={extra}")
        for name, value in tensors.items():
            p = mine[name]
            if tuple(value.shape) != tuple(p.shape):
                raise CheckpointError(
                    f"shape mismatch for {name}: file {value.shape} vs net {p.shape}")
            p.value[:] = value.astype(self.dtype)


class TwistPolicy:
    """A trained net plus its twist normalization scales."""

    def __init__(self, net: PolicyNet, scales=DEFAULT_TWIST_SCALES):
        self.net = net
        self.scales = np.asarray(scales, dtype=np.float64)
        if self.scales.shape != (6,) or np.any(self.scales <= 0):
            raise ValueError("twist scales must be 6 positive reals")

    def __call__(self, image: np.ndarray) -> Twist:
        y = self.net.forward(image[None, ...])[0].astype(np.float64)
        if not np.all(np.isfinite(y)):
            raise FloatingPointError("non-finite network output")
        return Twist.from_array(y * self.scales, Frame.EE)


def save_checkpoint(path, net: PolicyNet, scales, train_config: dict, seed: int) -> None:
    """Write magic, a JSON manifest, then concatenated little-endian float32 data."""
    items = net.state_items()
    manifest = {
        "version": 1,
        "arch": {"height": net.height, "width": net.width,
                 "stage_channels": list(net.STAGE_CHANNELS),
                 "head_channels": net.HEAD_CHANNELS, "fc_dim": net.FC_DIM},
        "scales": [float(s) for s in np.asarray(scales)],
        "train_config": train_config,
        "seed": int(seed),
        "params": [{"name": n, "shape": list(v.shape)} for n, v in items],
    }
    header = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(header)))
        f.write(header)
        for _, value in items:
            f.write(np.ascontiguousarray(value, dtype="<f4").tobytes())


def load_checkpoint(path) -> tuple[TwistPolicy, dict]:
    """Load a checkpoint; validates names and shapes against the architecture."""
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a policy checkpoint (bad magic)")
    off = len(CHECKPOINT_MAGIC)
    (hlen,) = struct.unpack_from("<I", blob, off)
    off += 4
    try:
        manifest = json.loads(blob[off:off + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt manifest: {e}") from e
    off += hlen
    arch = manifest["arch"]
    net = PolicyNet(arch["height"], arch["width"], np.random.default_rng(0))
    tensors = {}
    for entry in manifest["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 4
        if off + nbytes > len(blob):
            raise CheckpointError(f"{path}: truncated parameter data at {entry['name']}")
        tensors[entry["name"]] = np.frombuffer(blob, dtype="<f4", count=count,
                                               offset=off).reshape(shape).copy()
        off += nbytes
    if off != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - off} trailing bytes")
    net.load_state(tensors)
    return TwistPolicy(net, manifest["scales"]), manifest
