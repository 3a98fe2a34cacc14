"""Loss, optimizers and the mini-batch training loop."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Twist
from .layers import Param
from .policy import DEFAULT_TWIST_SCALES, PolicyNet, TwistPolicy

log = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"        # "adam" or "sgd"
    momentum: float = 0.9          # sgd only
    seed: int = 0
    scales: tuple = DEFAULT_TWIST_SCALES

    def __post_init__(self):
        if self.epochs <= 0 or self.batch_size <= 0 or self.learning_rate < 0:
            raise ValueError("epochs and batch_size must be positive, learning_rate >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if len(self.scales) != 6 or any(s <= 0 for s in self.scales):
            raise ValueError("scales must be 6 positive reals")

    def to_dict(self) -> dict:
        return {"epochs": self.epochs, "batch_size": self.batch_size,
                "learning_rate": self.learning_rate, "optimizer": self.optimizer,
                "momentum": self.momentum, "seed": self.seed,
                "scales": list(self.scales)}


def twist_loss(pred: Twist, target: Twist, scales=DEFAULT_TWIST_SCALES) -> float:
    """Mean squared error over the 6 scale-normalized twist components."""
    if pred.frame is not target.frame:
        raise ValueError("cannot compare twists in different frames")
    s = np.asarray(scales, dtype=np.float64)
    if s.shape != (6,) or np.any(s <= 0):
        raise ValueError("scales must be 6 positive reals")
    r = (pred.as_array() - target.as_array()) / s
    return float(np.mean(r * r))


def batch_loss_and_grad(y: np.ndarray, target_norm: np.ndarray):
    """Mean MSE over a batch of normalized outputs; returns (loss, dL/dy)."""
    diff = y - target_norm
    loss = float(np.mean(diff * diff))
    return loss, diff * (2.0 / diff.size)


class Adam:
    def __init__(self, params: list[Param], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in params]
        self.v = [np.zeros_like(p.value) for p in params]

    def step(self):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p.value -= (self.lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)


class SGDMomentum:
    def __init__(self, params: list[Param], lr: float, momentum: float):
        self.params = params
        self.lr, self.mu = lr, momentum
        self.vel = [np.zeros_like(p.value) for p in params]

    def step(self):
        for p, v in zip(self.params, self.vel):
            v *= self.mu
            v -= self.lr * p.grad
            p.value += v


@dataclass
class TrainResult:
    policy: TwistPolicy
    epoch_losses: list = field(default_factory=list)


def train_arrays(images: np.ndarray, twists: np.ndarray, cfg: TrainConfig,
                 height: int, width: int) -> TrainResult:
    """Train a fresh PolicyNet on stacked (N, H, W, 3) images and (N, 6) twists.

    Deterministic for a fixed seed: the same generator drives initialization
    and the per-epoch shuffles, in that order.
    """
    n = images.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    net = PolicyNet(height, width, rng)
    scales = np.asarray(cfg.scales, dtype=np.float64)
    targets = (twists.astype(np.float64) / scales).astype(np.float32)
    images = np.ascontiguousarray(images, dtype=np.float32)
    bs = min(cfg.batch_size, n)
    if cfg.optimizer == "adam":
        opt = Adam(net.params(), cfg.learning_rate)
    else:
        opt = SGDMomentum(net.params(), cfg.learning_rate, cfg.momentum)
    losses = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, bs):
            idx = perm[start:start + bs]
            y = net.forward(images[idx])
            loss, dy = batch_loss_and_grad(y, targets[idx])
            if not np.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, "
                                      f"batch {start // bs}")
            net.zero_grad()
            net.backward(dy)
            opt.step()
            total += loss * len(idx)
        losses.append(total / n)
        log.info("epoch %d/%d: train loss %.6f", epoch + 1, cfg.epochs, losses[-1])
    return TrainResult(TwistPolicy(net, cfg.scales), losses)


def train(dataset, cfg: TrainConfig) -> TrainResult:
    """Train from a DemoDataset (see servoclone.data)."""
    images, twists = dataset.stacked()
    return train_arrays(images, twists, cfg, dataset.height, dataset.width)
