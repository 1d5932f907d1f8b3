"""Enhancement generator: dense convolutional encoder, stacked two-stage
conformer blocks, and decoupled mask/complex decoders whose outputs are
recombined with the noisy phase.

Feature layout is channels-last throughout: (B, T, F, C). The default
input carries (magnitude, real, imaginary) of the compressed noisy
spectrogram in that channel order; the magnitude-only and complex-only
ablations shrink the input to 1 or 2 channels and drop one decoder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from . import signal as sig
from .data import AudioClip
from .layers import (Conv2d, ConvBlock, DepthwiseConv1d, Dropout, LayerNorm,
                     Linear, Module, MultiHeadSelfAttention, PReLU)

ORDERS = ("time_freq", "freq_time", "parallel")
DECODER_MODES = ("both", "magnitude_only", "complex_only")


def normalize_choice(value, choices, what):
    """Accept snake_case and the CamelCase spellings used on the CLI."""
    key = str(value).lower().replace("_", "").replace("-", "")
    aliases = {
        "timethenfreq": "time_freq", "timefreq": "time_freq",
        "freqthentime": "freq_time", "freqtime": "freq_time",
        "parallel": "parallel",
        "both": "both",
        "magnitudeonly": "magnitude_only", "complexonly": "complex_only",
    }
    out = aliases.get(key)
    if out is None or out not in choices:
        raise ValueError(f"unknown {what}: {value!r} (choices: {', '.join(choices)})")
    return out


@dataclass
class GeneratorConfig:
    channels: int = 64
    blocks: int = 4
    heads: int = 4
    dilations: tuple = (1, 2, 4, 8)
    freq_bins: int = 200
    conformer_order: str = "time_freq"
    decoder_mode: str = "both"
    dropout: float = 0.1
    ffn_expansion: int = 4
    depthwise_kernel: int = 31

    def __post_init__(self):
        self.conformer_order = normalize_choice(self.conformer_order, ORDERS, "conformer order")
        self.decoder_mode = normalize_choice(self.decoder_mode, DECODER_MODES, "decoder mode")
        if self.freq_bins % 2:
            raise ValueError(f"freq_bins {self.freq_bins} must be even to halve")
        if self.channels % self.heads:
            raise ValueError(f"channels {self.channels} not divisible by heads {self.heads}")
        if self.channels % 2:
            raise ValueError("channels must be even (subpixel shuffle and GLU halve them)")

    @property
    def half_bins(self):
        return self.freq_bins // 2

    @property
    def in_channels(self):
        return {"both": 3, "magnitude_only": 1, "complex_only": 2}[self.decoder_mode]


class DilatedDenseNet(Module):
    """Four conv blocks with dense connections; dilation grows along the
    time axis only, so the temporal receptive field expands while the
    frequency layout stays local."""

    def __init__(self, channels, dilations, rng, dtype=np.float32):
        self.blocks = [
            ConvBlock((i + 1) * channels, channels, (3, 3), rng,
                      dilation=(d, 1), dtype=dtype)
            for i, d in enumerate(dilations)
        ]

    def __call__(self, x):
        feats = [x]
        for block in self.blocks:
            inp = feats[0] if len(feats) == 1 else ag.concat(feats, axis=3)
            feats.append(block(inp))
        return feats[-1]


class Encoder(Module):
    def __init__(self, cfg: GeneratorConfig, rng, dtype=np.float32):
        c = cfg.channels
        self.in_block = ConvBlock(cfg.in_channels, c, (1, 1), rng, dtype=dtype)
        self.dense = DilatedDenseNet(c, cfg.dilations, rng, dtype=dtype)
        self.down = ConvBlock(c, c, (1, 3), rng, stride=(1, 2), dtype=dtype)

    def __call__(self, x):
        return self.down(self.dense(self.in_block(x)))


class FeedForward(Module):
    def __init__(self, dim, expansion, dropout, rng, dtype=np.float32):
        self.norm = LayerNorm(dim, dtype=dtype)
        self.lin1 = Linear(dim, dim * expansion, rng, dtype=dtype)
        self.lin2 = Linear(dim * expansion, dim, rng, dtype=dtype)
        self.drop = Dropout(dropout)

    def __call__(self, x, rng=None, training=False):
        h = ag.swish(self.lin1(self.norm(x)))
        h = self.drop(h, rng, training)
        return self.drop(self.lin2(h), rng, training)


class ConvolutionModule(Module):
    """layernorm -> pointwise conv -> GLU -> depthwise conv -> swish ->
    pointwise conv -> dropout, with the residual applied by the caller."""

    def __init__(self, dim, kernel, dropout, rng, dtype=np.float32):
        self.norm = LayerNorm(dim, dtype=dtype)
        self.pw1 = Linear(dim, 2 * dim, rng, dtype=dtype)
        self.dw = DepthwiseConv1d(dim, kernel, rng, dtype=dtype)
        self.pw2 = Linear(dim, dim, rng, dtype=dtype)
        self.drop = Dropout(dropout)

    def __call__(self, x, rng=None, training=False):
        h = ag.glu(self.pw1(self.norm(x)), axis=-1)
        h = ag.swish(self.dw(h))
        return self.drop(self.pw2(h), rng, training)


class ConformerBlock(Module):
    """Half-step FFN, multi-head self-attention, convolution module,
    half-step FFN, closing layer normalization. Operates on (N, S, C)."""

    def __init__(self, dim, heads, rng, dropout=0.1, expansion=4, dw_kernel=31, dtype=np.float32):
        self.ffn1 = FeedForward(dim, expansion, dropout, rng, dtype=dtype)
        self.attn_norm = LayerNorm(dim, dtype=dtype)
        self.attn = MultiHeadSelfAttention(dim, heads, rng, dtype=dtype)
        self.attn_drop = Dropout(dropout)
        self.conv = ConvolutionModule(dim, dw_kernel, dropout, rng, dtype=dtype)
        self.ffn2 = FeedForward(dim, expansion, dropout, rng, dtype=dtype)
        self.out_norm = LayerNorm(dim, dtype=dtype)

    def __call__(self, x, rng=None, training=False):
        x = ag.add(x, ag.mul(self.ffn1(x, rng, training), 0.5))
        x = ag.add(x, self.attn_drop(self.attn(self.attn_norm(x)), rng, training))
        x = ag.add(x, self.conv(x, rng, training))
        x = ag.add(x, ag.mul(self.ffn2(x, rng, training), 0.5))
        return self.out_norm(x)


class TSConformerBlock(Module):
    """Two conformer passes over a (B, T, F', C) map: one with time as the
    sequence axis (frequencies batched), one with frequency as the sequence
    axis (frames batched). Sequential orders add each stage's input to its
    output; parallel sums both stage outputs with the block input."""

    def __init__(self, cfg: GeneratorConfig, rng, dtype=np.float32):
        c = cfg.channels
        freq_kernel = min(cfg.depthwise_kernel, cfg.half_bins - (1 - cfg.half_bins % 2))
        self.time_block = ConformerBlock(c, cfg.heads, rng, dropout=cfg.dropout,
                                         expansion=cfg.ffn_expansion,
                                         dw_kernel=cfg.depthwise_kernel, dtype=dtype)
        self.freq_block = ConformerBlock(c, cfg.heads, rng, dropout=cfg.dropout,
                                         expansion=cfg.ffn_expansion,
                                         dw_kernel=freq_kernel, dtype=dtype)
        self.order = cfg.conformer_order

    def _run_time(self, x, rng, training, residual):
        b, t, f, c = x.values.shape
        xt = ag.reshape(ag.transpose(x, (0, 2, 1, 3)), (b * f, t, c))
        y = self.time_block(xt, rng, training)
        if residual:
            y = ag.add(y, xt)
        return ag.transpose(ag.reshape(y, (b, f, t, c)), (0, 2, 1, 3))

    def _run_freq(self, x, rng, training, residual):
        b, t, f, c = x.values.shape
        xf = ag.reshape(x, (b * t, f, c))
        y = self.freq_block(xf, rng, training)
        if residual:
            y = ag.add(y, xf)
        return ag.reshape(y, (b, t, f, c))

    def __call__(self, x, rng=None, training=False, stages=None):
        if stages is None:
            if self.order == "parallel":
                yt = self._run_time(x, rng, training, residual=False)
                yf = self._run_freq(x, rng, training, residual=False)
                return ag.add(ag.add(yt, yf), x)
            stages = ("time", "freq") if self.order == "time_freq" else ("freq", "time")
        for stage in stages:
            x = self._run_time(x, rng, training, True) if stage == "time" \
                else self._run_freq(x, rng, training, True)
        return x


def freq_shuffle(x, factor=2):
    """Subpixel upsampling of the frequency axis: channel groups become
    adjacent frequency sub-bins."""
    b, t, f, c = x.values.shape
    if c % factor:
        raise ag.ShapeError(f"freq_shuffle: channels {c} not divisible by {factor}")
    return ag.reshape(ag.reshape(x, (b, t, f, factor, c // factor)), (b, t, f * factor, c // factor))


class MaskDecoder(Module):
    """Dense net, subpixel frequency upsampling, channel squeeze, and a
    final conv with a per-frequency learnable slope producing the mask."""

    def __init__(self, cfg: GeneratorConfig, rng, dtype=np.float32):
        c = cfg.channels
        self.dense = DilatedDenseNet(c, cfg.dilations, rng, dtype=dtype)
        self.sub_conv = Conv2d(c, c, (1, 1), rng, dtype=dtype)
        self.squeeze = ConvBlock(c // 2, 1, (1, 2), rng, dtype=dtype)
        self.out_conv = Conv2d(1, 1, (1, 2), rng, dtype=dtype)
        self.out_act = PReLU((cfg.freq_bins, 1), dtype=dtype)

    def __call__(self, x):
        h = freq_shuffle(self.sub_conv(self.dense(x)))
        return self.out_act(self.out_conv(self.squeeze(h)))


class ComplexDecoder(Module):
    """Same layout as the mask decoder but ending in a 2-channel linear
    output: the unbounded real/imaginary compensation."""

    def __init__(self, cfg: GeneratorConfig, rng, dtype=np.float32):
        c = cfg.channels
        self.dense = DilatedDenseNet(c, cfg.dilations, rng, dtype=dtype)
        self.sub_conv = Conv2d(c, c, (1, 1), rng, dtype=dtype)
        self.squeeze = ConvBlock(c // 2, 2, (1, 2), rng, dtype=dtype)
        self.out_conv = Conv2d(2, 2, (1, 2), rng, dtype=dtype)

    def __call__(self, x):
        h = freq_shuffle(self.sub_conv(self.dense(x)))
        return self.out_conv(self.squeeze(h))


def reconstruct(masked_mag, noisy_phase, comp_r, comp_i):
    """Recombine the masked magnitude with the noisy phase and add the
    complex compensation:
        Xr = m*cos(p) + cr,  Xi = m*sin(p) + ci.
    Accepts arrays or graph tensors; all operands must share one shape."""
    masked_mag = masked_mag if isinstance(masked_mag, ag.Tensor) else ag.Tensor(np.asarray(masked_mag))
    phase = noisy_phase if isinstance(noisy_phase, ag.Tensor) else ag.Tensor(np.asarray(noisy_phase, dtype=masked_mag.values.dtype))
    comp_r = comp_r if isinstance(comp_r, ag.Tensor) else ag.Tensor(np.asarray(comp_r, dtype=masked_mag.values.dtype))
    comp_i = comp_i if isinstance(comp_i, ag.Tensor) else ag.Tensor(np.asarray(comp_i, dtype=masked_mag.values.dtype))
    for other in (phase, comp_r, comp_i):
        if other.values.shape != masked_mag.values.shape:
            raise ag.ShapeError(
                f"reconstruct: shape {other.values.shape} != {masked_mag.values.shape}")
    xr = ag.add(ag.mul(masked_mag, ag.tcos(phase)), comp_r)
    xi = ag.add(ag.mul(masked_mag, ag.tsin(phase)), comp_i)
    return xr, xi


def complex_magnitude(xr, xi, eps=1e-9):
    """Gradient-safe magnitude of a complex pair."""
    return ag.power(ag.add(ag.add(ag.power(xr, 2.0), ag.power(xi, 2.0)), eps), 0.5)


@dataclass
class GeneratorOutput:
    xr: ag.Tensor                  # (B, T, F) final compressed real part
    xi: ag.Tensor                  # (B, T, F) final compressed imag part
    mask: ag.Tensor | None = None  # (B, T, F, 1)
    masked_mag: ag.Tensor | None = None
    comp: ag.Tensor | None = None  # (B, T, F, 2)


class Generator(Module):
    def __init__(self, cfg: GeneratorConfig = None, rng=None, dtype=np.float32):
        self.cfg = cfg or GeneratorConfig()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.encoder = Encoder(self.cfg, rng, dtype=dtype)
        self.ts_blocks = [TSConformerBlock(self.cfg, rng, dtype=dtype)
                          for _ in range(self.cfg.blocks)]
        mode = self.cfg.decoder_mode
        self.mask_decoder = MaskDecoder(self.cfg, rng, dtype=dtype) if mode != "complex_only" else None
        self.complex_decoder = ComplexDecoder(self.cfg, rng, dtype=dtype) if mode != "magnitude_only" else None
        self.dtype = dtype

    def encode(self, features):
        """(B, T, F, Cin) -> (B, T, F/2, C)."""
        features = features if isinstance(features, ag.Tensor) else ag.Tensor(features, dtype=self.dtype)
        if features.values.shape[2] != self.cfg.freq_bins:
            raise ag.ShapeError(
                f"encode: got {features.values.shape[2]} frequency bins, configured {self.cfg.freq_bins}")
        if features.values.shape[3] != self.cfg.in_channels:
            raise ag.ShapeError(
                f"encode: got {features.values.shape[3]} input channels, decoder mode "
                f"'{self.cfg.decoder_mode}' expects {self.cfg.in_channels}")
        return self.encoder(features)

    def forward(self, features, phase=None, rng=None, training=False) -> GeneratorOutput:
        features = features if isinstance(features, ag.Tensor) else ag.Tensor(features, dtype=self.dtype)
        b, t, f, _ = features.values.shape
        mode = self.cfg.decoder_mode
        if mode != "complex_only":
            if phase is None:
                raise ValueError(f"decoder mode '{mode}' needs the noisy phase")
            phase = phase if isinstance(phase, ag.Tensor) else ag.Tensor(np.asarray(phase), dtype=self.dtype)
        h = self.encode(features)
        for block in self.ts_blocks:
            h = block(h, rng=rng, training=training)
        mask = masked_mag = comp = None
        if mode != "complex_only":
            mask = self.mask_decoder(h)
            noisy_mag = ag.narrow(features, 3, 0, 1)
            masked_mag = ag.reshape(ag.mul(mask, noisy_mag), (b, t, f))
        if mode != "magnitude_only":
            comp = self.complex_decoder(h)
        if mode == "both":
            cr = ag.reshape(ag.narrow(comp, 3, 0, 1), (b, t, f))
            ci = ag.reshape(ag.narrow(comp, 3, 1, 1), (b, t, f))
            xr, xi = reconstruct(masked_mag, phase, cr, ci)
        elif mode == "magnitude_only":
            xr = ag.mul(masked_mag, ag.tcos(phase))
            xi = ag.mul(masked_mag, ag.tsin(phase))
        else:
            xr = ag.reshape(ag.narrow(comp, 3, 0, 1), (b, t, f))
            xi = ag.reshape(ag.narrow(comp, 3, 1, 1), (b, t, f))
        return GeneratorOutput(xr=xr, xi=xi, mask=mask, masked_mag=masked_mag, comp=comp)

    __call__ = forward

    def input_features(self, spec: sig.CompressedSpectrogram):
        """Network input for one spectrogram, (1, T, F, Cin)."""
        mode = self.cfg.decoder_mode
        if mode == "both":
            stack = np.stack([spec.Y_m, spec.Y_r, spec.Y_i], axis=-1)
        elif mode == "magnitude_only":
            stack = spec.Y_m[..., None]
        else:
            stack = np.stack([spec.Y_r, spec.Y_i], axis=-1)
        return stack[None].astype(self.dtype)

    def enhance(self, clip: AudioClip, stft_cfg: sig.StftConfig = None) -> AudioClip:
        """Full eval-mode pipeline: analyze, enhance, synthesize; output
        length equals input length."""
        stft_cfg = stft_cfg or sig.StftConfig()
        spec = sig.stft(clip, stft_cfg)
        feats = self.input_features(spec)
        phase = spec.Y_p[None].astype(self.dtype)
        out = self.forward(feats, phase=phase, training=False)
        wav = sig.synthesize(out.xr.detach(), out.xi.detach(), stft_cfg, len(clip))
        samples = np.clip(wav.values[0].astype(np.float64), -1.0, 1.0)
        return AudioClip(samples, source_id=clip.source_id)
