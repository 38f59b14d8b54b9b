"""Generator and discriminator networks built on the autodiff Tensor.

The generator maps latent vectors to side x side images in (-1, 1):

    dense(latent -> 64 * (side/4)^2) -> reshape
    -> conv_transpose(64 -> 32, k4 s2 p1) -> relu
    -> conv_transpose(32 -> 1, k4 s2 p1) -> tanh

The discriminator mirrors it with strided convolutions, leaky-relu (0.2)
and a sigmoid head. Weights are initialized N(0, 0.02), biases zero.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, conv2d, conv_transpose2d
from .checkpoint import CheckpointError, load_arrays, save_arrays

WEIGHT_STD = 0.02
LEAKY_SLOPE = 0.2


def _init(rng: np.random.Generator | None, shape) -> np.ndarray:
    if rng is None:
        return np.zeros(shape)
    return rng.normal(0.0, WEIGHT_STD, size=shape)


class Dense:
    def __init__(self, n_in: int, n_out: int, rng, name: str):
        self.w = Tensor(_init(rng, (n_in, n_out)))
        self.b = Tensor(np.zeros(n_out))
        self.name = name

    def __call__(self, x: Tensor) -> Tensor:
        return x.matmul(self.w) + self.b

    def parameters(self):
        return [self.w, self.b]


class Conv2d:
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, pad: int,
                 rng, name: str):
        self.w = Tensor(_init(rng, (c_out, c_in, kernel, kernel)))
        self.b = Tensor(np.zeros(c_out))
        self.stride, self.pad, self.name = stride, pad, name

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.w, self.b, self.stride, self.pad, label=self.name)

    def parameters(self):
        return [self.w, self.b]


class ConvTranspose2d:
    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, pad: int,
                 rng, name: str):
        self.w = Tensor(_init(rng, (c_in, c_out, kernel, kernel)))
        self.b = Tensor(np.zeros(c_out))
        self.stride, self.pad, self.name = stride, pad, name

    def __call__(self, x: Tensor) -> Tensor:
        return conv_transpose2d(x, self.w, self.b, self.stride, self.pad,
                                label=self.name)

    def parameters(self):
        return [self.w, self.b]


def _check_side(side: int) -> int:
    if side < 4 or side % 4 != 0:
        raise ValueError(f"image side must be a positive multiple of 4, got {side}")
    return side


class GeneratorNet:
    """Latent vector -> image in (-1, 1), at the configured side."""

    def __init__(self, side: int, latent_dim: int, rng: np.random.Generator | None):
        self.side = _check_side(side)
        self.latent_dim = latent_dim
        s4 = side // 4
        self.dense = Dense(latent_dim, 64 * s4 * s4, rng, "gen.dense")
        self.tconv1 = ConvTranspose2d(64, 32, 4, 2, 1, rng, "gen.tconv1")
        self.tconv2 = ConvTranspose2d(32, 1, 4, 2, 1, rng, "gen.tconv2")

    def forward(self, z: Tensor) -> Tensor:
        """z (N, latent_dim) -> images (N, 1, side, side)."""
        if z.data.ndim != 2 or z.shape[1] != self.latent_dim:
            raise ValueError(f"expected latent batch (N, {self.latent_dim}), "
                             f"got {z.shape}")
        n = z.shape[0]
        s4 = self.side // 4
        h = self.dense(z).reshape(n, 64, s4, s4)
        h = self.tconv1(h).relu()
        return self.tconv2(h).tanh()

    def parameters(self):
        return self.dense.parameters() + self.tconv1.parameters() + self.tconv2.parameters()

    def _arrays(self):
        return {"dense.w": self.dense.w.data, "dense.b": self.dense.b.data,
                "tconv1.w": self.tconv1.w.data, "tconv1.b": self.tconv1.b.data,
                "tconv2.w": self.tconv2.w.data, "tconv2.b": self.tconv2.b.data}

    def save(self, path) -> None:
        save_arrays(path, "generator",
                    {"side": self.side, "latent_dim": self.latent_dim},
                    self._arrays())

    @classmethod
    def load(cls, path) -> "GeneratorNet":
        kind, meta, arrays = load_arrays(path)
        if kind != "generator":
            raise CheckpointError(f"{path}: expected a generator checkpoint, got {kind!r}")
        net = cls(meta["side"], meta["latent_dim"], rng=None)
        _restore(net, arrays, path)
        return net


class DiscriminatorNet:
    """Image (assumed in [-1, 1]) -> probability of being real."""

    def __init__(self, side: int, rng: np.random.Generator | None):
        self.side = _check_side(side)
        s4 = side // 4
        self.conv1 = Conv2d(1, 32, 4, 2, 1, rng, "disc.conv1")
        self.conv2 = Conv2d(32, 64, 4, 2, 1, rng, "disc.conv2")
        self.dense = Dense(64 * s4 * s4, 1, rng, "disc.dense")

    def forward(self, x: Tensor) -> Tensor:
        """x (N, 1, side, side) -> probabilities (N, 1)."""
        if x.data.ndim != 4 or x.shape[1] != 1 or x.shape[2] != self.side \
                or x.shape[3] != self.side:
            raise ValueError(f"expected image batch (N, 1, {self.side}, "
                             f"{self.side}), got {x.shape}")
        n = x.shape[0]
        h = self.conv1(x).leaky_relu(LEAKY_SLOPE)
        h = self.conv2(h).leaky_relu(LEAKY_SLOPE)
        h = h.reshape(n, -1)
        return self.dense(h).sigmoid()

    def parameters(self):
        return self.conv1.parameters() + self.conv2.parameters() + self.dense.parameters()

    def _arrays(self):
        return {"conv1.w": self.conv1.w.data, "conv1.b": self.conv1.b.data,
                "conv2.w": self.conv2.w.data, "conv2.b": self.conv2.b.data,
                "dense.w": self.dense.w.data, "dense.b": self.dense.b.data}

    def save(self, path) -> None:
        save_arrays(path, "discriminator", {"side": self.side}, self._arrays())

    @classmethod
    def load(cls, path) -> "DiscriminatorNet":
        kind, meta, arrays = load_arrays(path)
        if kind != "discriminator":
            raise CheckpointError(f"{path}: expected a discriminator checkpoint, "
                                  f"got {kind!r}")
        net = cls(meta["side"], rng=None)
        _restore(net, arrays, path)
        return net


def _restore(net, arrays: dict, path) -> None:
    own = net._arrays()
    if set(own) != set(arrays):
        raise CheckpointError(f"{path}: checkpoint arrays {sorted(arrays)} do not "
                              f"match the network ({sorted(own)})")
    for name, arr in arrays.items():
        if own[name].shape != arr.shape:
            raise CheckpointError(f"{path}: array {name!r} has shape {arr.shape}, "
                                  f"expected {own[name].shape}")
        own[name][...] = arr
