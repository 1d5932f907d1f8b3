"""STFT analysis/synthesis with power-law magnitude compression.

Analysis: centered framing (reflect padding), periodic Hamming window,
one-sided 400-point FFT. The transform yields 201 bins; the network-facing
arrays keep the first 200 and the top bin rides along as synthesis-only
side data so that analysis->synthesis stays numerically exact. Spectrograms
produced by the enhancement network carry a zero top bin.

Synthesis is expressed through the autograd graph (inverse DFT as a matmul
with constant cosine/sine matrices, then windowed overlap-add), so the
time-domain training loss can backpropagate through it. The numpy-facing
`istft` wraps the same graph with constant inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .data import AudioClip


@dataclass
class StftConfig:
    sample_rate: int = 16000
    window_length: int = 400
    hop: int = 100
    fft_size: int = 400
    centered: bool = True
    compression: float = 0.3

    def __post_init__(self):
        if self.window_length % self.hop:
            raise ValueError(f"hop {self.hop} must divide window length {self.window_length}")
        if not (0.0 < self.compression <= 1.0):
            raise ValueError(f"compression exponent {self.compression} outside (0, 1]")
        if self.fft_size != self.window_length:
            raise ValueError("fft_size must equal window_length")

    @property
    def bins(self):
        return self.fft_size // 2  # one-sided bins minus the top bin


@dataclass
class CompressedSpectrogram:
    """Power-law compressed complex STFT split into magnitude, phase and
    real/imag parts, all (T, F) with F = fft_size/2. `nyq_r`/`nyq_i` hold
    the compressed top bin per frame; zero for network outputs."""

    Y_m: np.ndarray
    Y_p: np.ndarray
    Y_r: np.ndarray
    Y_i: np.ndarray
    nyq_r: np.ndarray
    nyq_i: np.ndarray

    @property
    def frames(self):
        return self.Y_m.shape[0]

    @property
    def bins(self):
        return self.Y_m.shape[1]


def hamming_periodic(n, dtype=np.float64):
    return (0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / n)).astype(dtype)


def power_compress(magnitude, c):
    """Elementwise x**c on nonnegative magnitudes."""
    magnitude = np.asarray(magnitude)
    if not (0.0 < c <= 1.0):
        raise ValueError(f"compression exponent {c} outside (0, 1]")
    if np.any(magnitude < 0):
        raise ValueError("power_compress: negative magnitude entry")
    return magnitude ** c


def power_decompress(magnitude, c):
    """Elementwise x**(1/c); inverse of power_compress."""
    magnitude = np.asarray(magnitude)
    if not (0.0 < c <= 1.0):
        raise ValueError(f"compression exponent {c} outside (0, 1]")
    if np.any(magnitude < 0):
        raise ValueError("power_decompress: negative magnitude entry")
    return magnitude ** (1.0 / c)


def frame_count(length, cfg: StftConfig):
    return length // cfg.hop + 1


def stft(clip, cfg: StftConfig) -> CompressedSpectrogram:
    """Analyze a clip (AudioClip or 1-D array) into a compressed
    spectrogram with T = floor(L/hop) + 1 frames."""
    x = clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)
    if x.size < 1:
        raise ValueError("empty clip")
    w = cfg.window_length
    half = w // 2
    L = x.size
    if cfg.centered:
        x = np.pad(x, (half, half), mode="reflect" if L > 1 else "constant")
        T = L // cfg.hop + 1  # frame t starts at t*hop inside the padded signal
    else:
        if L < w:
            raise ValueError(f"clip of {L} samples shorter than the window in non-centered mode")
        T = (L - w) // cfg.hop + 1
    idx = np.arange(T)[:, None] * cfg.hop + np.arange(w)[None, :]
    frames = x[idx] * hamming_periodic(w)
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=-1)
    mag = np.abs(spec)
    phase = np.angle(spec)
    phase = np.where(phase <= -np.pi, np.pi, phase)
    cmag = power_compress(mag, cfg.compression)
    yr = cmag * np.cos(phase)
    yi = cmag * np.sin(phase)
    F = cfg.bins
    return CompressedSpectrogram(
        Y_m=cmag[:, :F], Y_p=phase[:, :F], Y_r=yr[:, :F], Y_i=yi[:, :F],
        nyq_r=yr[:, F], nyq_i=yi[:, F])


_dft_cache = {}


def _synthesis_matrices(cfg: StftConfig, dtype):
    """Constant inverse-DFT matrices mapping (T, F) real/imag bins to time
    frames, one-sided scaling folded in. The top-bin row is separate."""
    key = (cfg.fft_size, dtype)
    if key not in _dft_cache:
        n = cfg.fft_size
        F = cfg.bins
        k = np.arange(F)[:, None]
        t = np.arange(n)[None, :]
        ang = 2.0 * np.pi * k * t / n
        scale = np.full((F, 1), 2.0 / n)
        scale[0] = 1.0 / n
        cmat = (scale * np.cos(ang)).astype(dtype)
        smat = (-2.0 / n * np.sin(ang)).astype(dtype)
        smat[0] = 0.0  # irfft ignores the imaginary part of the DC bin
        nyq_row = (np.cos(np.pi * np.arange(n)) / n).astype(dtype)
        _dft_cache[key] = (cmat, smat, nyq_row)
    return _dft_cache[key]


def _ola_norm(window, frames, hop):
    """Per-sample sum of squared synthesis windows over all frames."""
    w2 = window * window
    out = np.zeros((frames - 1) * hop + window.size)
    for t in range(frames):
        out[t * hop: t * hop + window.size] += w2
    return out


def synthesize(xr, xi, cfg: StftConfig, target_length, nyq_r=None, nyq_i=None):
    """Differentiable synthesis from compressed (B, T, F) real/imag parts
    to (B, target_length) waveforms: invert the power law, inverse-DFT each
    frame, window, overlap-add, normalize, trim the centering pad."""
    xr = xr if isinstance(xr, ag.Tensor) else ag.Tensor(np.asarray(xr))
    xi = xi if isinstance(xi, ag.Tensor) else ag.Tensor(np.asarray(xi), dtype=xr.values.dtype)
    if xr.values.shape != xi.values.shape or xr.values.ndim != 3:
        raise ag.ShapeError(f"synthesize: need matching (B, T, F) parts, got {xr.values.shape} and {xi.values.shape}")
    B, T, F = xr.values.shape
    if F != cfg.bins:
        raise ag.ShapeError(f"synthesize: {F} bins != configured {cfg.bins}")
    if target_length > T * cfg.hop:
        raise ValueError(f"target_length {target_length} exceeds T*hop = {T * cfg.hop}")
    dtype = xr.values.dtype
    c = cfg.compression
    # magnitude^ (1/c - 1) rescales both parts; exponent >= 0 on (0, 1]
    if c != 1.0:
        m2 = ag.add(ag.power(xr, 2.0), ag.power(xi, 2.0))
        scale = ag.power(m2, (1.0 / c - 1.0) / 2.0)
        xr = ag.mul(xr, scale)
        xi = ag.mul(xi, scale)
    cmat, smat, nyq_row = _synthesis_matrices(cfg, dtype)
    frames = ag.add(ag.matmul(xr, cmat), ag.matmul(xi, smat))
    if nyq_r is not None:
        nr = np.asarray(nyq_r, dtype=np.float64)
        ni = np.asarray(nyq_i, dtype=np.float64)
        m = np.sqrt(nr * nr + ni * ni)
        raw = np.where(m > 0, m ** (1.0 / c - 1.0), 0.0) * nr
        frames = ag.add(frames, (raw[..., None] * nyq_row).astype(dtype))
    window = hamming_periodic(cfg.window_length, dtype)
    frames = ag.mul(frames, window)
    ola = ag.overlap_add(frames, cfg.hop)
    norm = _ola_norm(hamming_periodic(cfg.window_length), T, cfg.hop)
    start = cfg.window_length // 2 if cfg.centered else 0
    used = norm[start: start + target_length]
    if used.size < target_length or np.min(used) < 1e-10:
        raise ValueError("degenerate window configuration: zero overlap-add normalizer")
    out = ag.mul(ola, (1.0 / norm).astype(dtype))
    return ag.narrow(out, 1, start, target_length)


def istft(spec: CompressedSpectrogram, cfg: StftConfig, target_length) -> np.ndarray:
    """Numpy-facing inverse transform; trims to `target_length` samples."""
    node = synthesize(spec.Y_r[None].astype(np.float64), spec.Y_i[None].astype(np.float64),
                      cfg, target_length, nyq_r=spec.nyq_r[None], nyq_i=spec.nyq_i[None])
    return node.values[0]
