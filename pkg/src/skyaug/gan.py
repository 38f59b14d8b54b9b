"""Adversarial training at desk scale: Adam, BCE loss, the train loop, sampling.

Training is single-threaded and fully deterministic for a given
(data, config, seed): weight init, batch shuffling and latent draws all
derive from the config seed through independent child generators.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .augment import denormalize
from .autodiff import Tensor
from .nets import DiscriminatorNet, GeneratorNet

PROB_EPS = 1e-7


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 1000
    image_side: int = 32
    latent_dim: int = 100
    learning_rate: float = 0.00025
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.image_side % 4 != 0 or self.image_side < 4:
            raise ValueError(f"image_side must be a multiple of 4, got {self.image_side}")


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, params, learning_rate: float = 0.00025,
                 beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.params = list(params)
        self.learning_rate = learning_rate
        self.beta1, self.beta2, self.epsilon = beta1, beta2, epsilon
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.step_count = 0

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            g = p.grad
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / (1.0 - b1 ** self.step_count)
            v_hat = self.v[i] / (1.0 - b2 ** self.step_count)
            p.data -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def bce_loss(pred, label) -> Tensor:
    """Mean binary cross-entropy; predictions are clamped away from 0 and 1.

    `pred` may be a Tensor or array of probabilities, `label` a scalar 0/1
    or an array of the same shape.
    """
    p = pred if isinstance(pred, Tensor) else Tensor(np.asarray(pred, dtype=np.float64))
    y = np.broadcast_to(np.asarray(label, dtype=np.float64), p.shape)
    p = p.clip(PROB_EPS, 1.0 - PROB_EPS)
    ll = p.log() * y + (1.0 - p).log() * (1.0 - y)
    return -ll.mean()


def forward_generator(net: GeneratorNet, z) -> np.ndarray:
    """Run one latent vector through the generator; returns a (side, side)
    float array with values in (-1, 1)."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (net.latent_dim,):
        raise ValueError(f"expected latent vector of shape ({net.latent_dim},), "
                         f"got {z.shape}")
    out = net.forward(Tensor(z.reshape(1, -1)))
    return out.data[0, 0]


def forward_discriminator(net: DiscriminatorNet, img) -> float:
    """Score one (side, side) image in [-1, 1]; returns P(real) in (0, 1)."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (net.side, net.side):
        raise ValueError(f"expected image of shape ({net.side}, {net.side}), "
                         f"got {img.shape}")
    out = net.forward(Tensor(img.reshape(1, 1, net.side, net.side)))
    return float(out.data[0, 0])


def train_gan(data, cfg: TrainConfig):
    """Train generator and discriminator on normalized images.

    `data` is a sequence of (side, side) float arrays in [-1, 1]. Per batch:
    one discriminator update on real (label 1) plus generated (label 0)
    images, then one generator update through the discriminator with label 1.

    Returns (generator, discriminator, loss_history) where loss_history is a
    list of per-epoch (mean_d_loss, mean_g_loss) tuples.
    """
    if len(data) == 0:
        raise ValueError("training data is empty")
    stack = np.stack([np.asarray(img, dtype=np.float64) for img in data])
    if stack.ndim != 3 or stack.shape[1] != cfg.image_side or stack.shape[2] != cfg.image_side:
        raise ValueError(f"expected images of side {cfg.image_side}, "
                         f"got stacked shape {stack.shape}")
    stack = stack.reshape(-1, 1, cfg.image_side, cfg.image_side)
    n = stack.shape[0]

    seed_g, seed_d, seed_train = np.random.SeedSequence(cfg.seed).spawn(3)
    gen = GeneratorNet(cfg.image_side, cfg.latent_dim, np.random.default_rng(seed_g))
    disc = DiscriminatorNet(cfg.image_side, np.random.default_rng(seed_d))
    rng = np.random.default_rng(seed_train)

    opt_g = Adam(gen.parameters(), cfg.learning_rate)
    opt_d = Adam(disc.parameters(), cfg.learning_rate)

    loss_history: list[tuple[float, float]] = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        d_losses, g_losses = [], []
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            real = Tensor(stack[idx])
            z = Tensor(rng.standard_normal((len(idx), cfg.latent_dim)))
            fake = gen.forward(z)

            # discriminator step: real as 1, generated (detached) as 0
            d_loss = bce_loss(disc.forward(real), 1.0) \
                + bce_loss(disc.forward(fake.detach()), 0.0)
            opt_d.zero_grad()
            opt_g.zero_grad()
            d_loss.backward()
            opt_d.step()

            # generator step: push the (updated) discriminator toward 1
            g_loss = bce_loss(disc.forward(fake), 1.0)
            opt_d.zero_grad()
            opt_g.zero_grad()
            g_loss.backward()
            opt_g.step()

            d_losses.append(float(d_loss.data))
            g_losses.append(float(g_loss.data))
        loss_history.append((float(np.mean(d_losses)), float(np.mean(g_losses))))
    return gen, disc, loss_history


def sample(net: GeneratorNet, n: int, seed: int) -> list[np.ndarray]:
    """Draw n images from the generator, denormalized back to 0..255."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        z = rng.standard_normal(net.latent_dim)
        out.append(denormalize(forward_generator(net, z)))
    return out


def write_loss_history(path, loss_history) -> None:
    """Export per-epoch losses as CSV (epoch, d_loss, g_loss)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "d_loss", "g_loss"])
        for epoch, (d_loss, g_loss) in enumerate(loss_history, 1):
            writer.writerow([epoch, repr(d_loss), repr(g_loss)])
