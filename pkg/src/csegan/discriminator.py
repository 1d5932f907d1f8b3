"""Metric discriminator: regresses a normalized quality score in (0, 1)
from a (reference, estimate) pair of compressed magnitude spectrograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .layers import ConvBlock, Linear, Module, PReLU


@dataclass
class DiscriminatorConfig:
    channels: tuple = (16, 32, 64, 128)
    hidden: int = 64
    kernel: tuple = (4, 4)
    stride: tuple = (2, 2)


class Discriminator(Module):
    """Four strided conv blocks, global average pooling, two feed-forward
    layers, sigmoid. Pooling makes the parameter count independent of the
    spectrogram extent."""

    def __init__(self, cfg: DiscriminatorConfig = None, rng=None, dtype=np.float32):
        self.cfg = cfg or DiscriminatorConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        blocks = []
        cin = 2
        for cout in self.cfg.channels:
            blocks.append(ConvBlock(cin, cout, self.cfg.kernel, rng,
                                    stride=self.cfg.stride, dtype=dtype))
            cin = cout
        self.blocks = blocks
        self.fc1 = Linear(cin, self.cfg.hidden, rng, dtype=dtype)
        self.act = PReLU(self.cfg.hidden, dtype=dtype)
        self.fc2 = Linear(self.cfg.hidden, 1, rng, dtype=dtype)
        self.dtype = dtype

    def score(self, reference_mag, estimate_mag):
        """(B, T, F) x 2 -> (B, 1) scores strictly inside (0, 1)."""
        ref = reference_mag if isinstance(reference_mag, ag.Tensor) else ag.Tensor(reference_mag, dtype=self.dtype)
        est = estimate_mag if isinstance(estimate_mag, ag.Tensor) else ag.Tensor(estimate_mag, dtype=self.dtype)
        if ref.values.shape != est.values.shape:
            raise ag.ShapeError(
                f"discriminator: reference {ref.values.shape} != estimate {est.values.shape}")
        b, t, f = ref.values.shape
        x = ag.concat([ag.reshape(ref, (b, t, f, 1)), ag.reshape(est, (b, t, f, 1))], axis=3)
        for block in self.blocks:
            x = block(x)
        x = ag.tmean(x, axis=(1, 2))
        x = self.act(self.fc1(x))
        return ag.sigmoid(self.fc2(x))

    __call__ = score
