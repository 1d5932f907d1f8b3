"""Training objectives: the magnitude/complex spectral loss, the
least-squares adversarial pair, the waveform L1 penalty, and their
weighted combination. All reductions are plain means over every element
and the batch, so the weights are shape-free."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag


@dataclass
class LossConfig:
    alpha: float = 0.7
    gamma_tf: float = 1.0
    gamma_gan: float = 1.0
    gamma_time: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha {self.alpha} outside [0, 1]")
        for name in ("gamma_tf", "gamma_gan", "gamma_time"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


def _t(x):
    return x if isinstance(x, ag.Tensor) else ag.Tensor(np.asarray(x))


def _mse(a, b):
    d = ag.sub(_t(a), _t(b))
    return ag.tmean(ag.power(d, 2.0))


def loss_tf(x_m, xh_m, x_r, xh_r, x_i, xh_i, alpha=0.7):
    """alpha * mean((Xm-X^m)^2) + (1-alpha) * (mean((Xr-X^r)^2) + mean((Xi-X^i)^2))."""
    for pair in ((x_m, xh_m), (x_r, xh_r), (x_i, xh_i)):
        sa = np.shape(pair[0] if not isinstance(pair[0], ag.Tensor) else pair[0].values)
        sb = np.shape(pair[1] if not isinstance(pair[1], ag.Tensor) else pair[1].values)
        if sa != sb:
            raise ag.ShapeError(f"loss_tf: target shape {sa} != estimate shape {sb}")
    mag = _mse(x_m, xh_m)
    ri = ag.add(_mse(x_r, xh_r), _mse(x_i, xh_i))
    return ag.add(ag.mul(mag, alpha), ag.mul(ri, 1.0 - alpha))


def loss_adversarial_g(scores):
    """Least-squares generator term: mean((D - 1)^2)."""
    return _mse(scores, np.ones_like(_t(scores).values))


def loss_discriminator(score_clean_clean, score_clean_est, q_labels):
    """mean((D(X, X) - 1)^2) + mean((D(X, X^) - q)^2) with q the normalized
    quality labels in [0, 1]."""
    q = np.asarray(q_labels if not isinstance(q_labels, ag.Tensor) else q_labels.values)
    if np.any(q < 0) or np.any(q > 1):
        raise ValueError("quality labels outside [0, 1]")
    ones = np.ones_like(_t(score_clean_clean).values)
    return ag.add(_mse(score_clean_clean, ones), _mse(score_clean_est, q))


def loss_time(x, x_hat):
    """Mean absolute waveform difference."""
    xt, ht = _t(x), _t(x_hat)
    if xt.values.shape != ht.values.shape:
        raise ag.ShapeError(f"loss_time: shapes {xt.values.shape} and {ht.values.shape} differ")
    return ag.tmean(ag.tabs(ag.sub(xt, ht)))


def loss_generator_total(l_tf, l_gan, l_time, gamma_tf=1.0, gamma_gan=1.0, gamma_time=1.0):
    """Weighted sum of the three generator terms."""
    total = ag.mul(_t(l_tf), gamma_tf)
    total = ag.add(total, ag.mul(_t(l_gan), gamma_gan))
    return ag.add(total, ag.mul(_t(l_time), gamma_time))
