"""Audio I/O, SNR mixing, batch assembly and the seeded synthetic corpus.

WAV support is deliberately narrow: 16-bit PCM mono at 16 kHz, read and
written with the stdlib `wave` module. Anything else is rejected rather
than silently resampled.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass, field

import numpy as np

SAMPLE_RATE = 16000


class AudioFormatError(ValueError):
    pass


@dataclass
class AudioClip:
    """Mono waveform in [-1, 1] at 16 kHz."""

    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE
    source_id: str | None = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        if self.sample_rate != SAMPLE_RATE:
            raise AudioFormatError(f"unsupported sample rate: {self.sample_rate} (need {SAMPLE_RATE})")
        if not np.all(np.isfinite(self.samples)):
            raise AudioFormatError("non-finite samples in clip")

    def __len__(self):
        return self.samples.size


@dataclass
class PairedExample:
    clean: AudioClip
    noisy: AudioClip
    snr_db: float | None = None
    quality_label: float | None = None

    def __post_init__(self):
        if len(self.clean) != len(self.noisy):
            raise ValueError(f"clean/noisy length mismatch: {len(self.clean)} vs {len(self.noisy)}")


def load_audio(path) -> AudioClip:
    """Read a mono 16-bit PCM WAV at 16 kHz; integer samples are divided by
    32768, so full-scale positive is 32767/32768."""
    with wave.open(str(path), "rb") as w:
        if w.getframerate() != SAMPLE_RATE:
            raise AudioFormatError(f"unsupported sample rate: {w.getframerate()} (need {SAMPLE_RATE})")
        if w.getnchannels() != 1:
            raise AudioFormatError(f"unsupported channel count: {w.getnchannels()} (need mono)")
        if w.getsampwidth() != 2:
            raise AudioFormatError(f"unsupported sample width: {w.getsampwidth()} bytes (need 16-bit PCM)")
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioClip(samples, SAMPLE_RATE, source_id=str(path))


def save_audio(clip: AudioClip, path):
    ints = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(SAMPLE_RATE)
        w.writeframes(ints.tobytes())


def mix_at_snr(clean: AudioClip, noise: AudioClip, snr_db: float) -> PairedExample:
    """Scale `noise` (tiled or trimmed to the clean length) so the mixture
    hits `snr_db` exactly, then add."""
    if snr_db > 100.0:
        raise ValueError(f"snr_db {snr_db} too large (cap 100 dB)")
    c = clean.samples
    n = noise.samples
    if n.size == 0:
        raise ValueError("empty noise clip")
    if n.size < c.size:
        n = np.tile(n, -(-c.size // n.size))
    n = n[: c.size]
    e_clean = float(np.sum(c * c))
    e_noise = float(np.sum(n * n))
    if e_clean <= 0.0:
        raise ValueError("silent clean clip")
    if e_noise <= 0.0:
        raise ValueError("silent noise clip")
    gain = np.sqrt(e_clean / (e_noise * 10.0 ** (snr_db / 10.0)))
    noisy = AudioClip(c + gain * n, source_id=clean.source_id)
    return PairedExample(clean=clean, noisy=noisy, snr_db=snr_db)


@dataclass
class Batch:
    clean: np.ndarray          # (B, L)
    noisy: np.ndarray          # (B, L)
    lengths: list = field(default_factory=list)  # original lengths (eval mode)


def _crop_or_wrap(samples, length, offset):
    if samples.size >= length:
        return samples[offset: offset + length]
    reps = -(-length // samples.size)
    return np.tile(samples, reps)[:length]


def make_batch(pairs, batch_size, slice_seconds=2.0, mode="train", rng=None, hop=100) -> Batch:
    """Assemble one batch.

    Train mode crops a fixed-length slice (same offset for both members of
    each pair; short clips are cyclically wrap-padded). Eval mode takes a
    single pair, zero-pads to the next hop multiple and records the original
    length for trimming after synthesis.
    """
    if not pairs:
        raise ValueError("empty pair list")
    if mode == "train":
        if rng is None:
            rng = np.random.default_rng(0)
        length = int(round(slice_seconds * SAMPLE_RATE))
        chosen = pairs[:batch_size]
        clean_rows, noisy_rows = [], []
        for pair in chosen:
            n = len(pair.clean)
            offset = int(rng.integers(0, n - length + 1)) if n > length else 0
            clean_rows.append(_crop_or_wrap(pair.clean.samples, length, offset))
            noisy_rows.append(_crop_or_wrap(pair.noisy.samples, length, offset))
        return Batch(np.stack(clean_rows), np.stack(noisy_rows), [length] * len(chosen))
    if mode == "eval":
        pair = pairs[0]
        n = len(pair.clean)
        padded = -(-n // hop) * hop
        clean = np.pad(pair.clean.samples, (0, padded - n))
        noisy = np.pad(pair.noisy.samples, (0, padded - n))
        return Batch(clean[None], noisy[None], [n])
    raise ValueError(f"unknown batch mode: {mode}")


# ---------------------------------------------------------------------------
# synthetic desk-scale corpus


def _colored_noise(rng, length, tilt):
    """White noise shaped by f^(-tilt/2) in the spectral domain."""
    white = rng.standard_normal(length)
    spec = np.fft.rfft(white)
    freqs = np.arange(spec.size, dtype=np.float64)
    freqs[0] = 1.0
    spec *= freqs ** (-tilt / 2.0)
    out = np.fft.irfft(spec, n=length)
    return out / (np.max(np.abs(out)) + 1e-12)


def _harmonic_voice(rng, length, f0):
    """Speech-like tone: a decaying harmonic stack under a syllabic
    amplitude envelope that never fully gates the signal."""
    t = np.arange(length) / SAMPLE_RATE
    vibrato = 1.0 + 0.01 * np.sin(2.0 * np.pi * rng.uniform(4.0, 6.0) * t)
    x = np.zeros(length)
    for k in range(1, 13):
        fk = k * f0
        if fk >= SAMPLE_RATE / 2 * 0.9:
            break
        amp = (1.0 / k) * rng.uniform(0.5, 1.0)
        phase = rng.uniform(0, 2 * np.pi)
        x += amp * np.sin(2.0 * np.pi * fk * vibrato * t + phase)
    syllable = 0.6 + 0.4 * np.sin(2.0 * np.pi * rng.uniform(2.0, 4.0) * t + rng.uniform(0, 2 * np.pi))
    x *= syllable
    return 0.4 * x / (np.max(np.abs(x)) + 1e-12)


def synthetic_corpus(n_pairs=4, seconds=1.0, seed=0, snrs=(0.0, 5.0, 10.0, 15.0)):
    """Deterministic paired corpus: harmonic pseudo-speech mixed with
    colored noise at cycling SNRs. Capped at 32 pairs."""
    if n_pairs > 32:
        raise ValueError("synthetic corpus is desk-scale: at most 32 pairs")
    rng = np.random.default_rng(seed)
    length = int(round(seconds * SAMPLE_RATE))
    pairs = []
    for i in range(n_pairs):
        f0 = rng.uniform(110.0, 280.0)
        clean = AudioClip(_harmonic_voice(rng, length, f0), source_id=f"synth_{i:03d}.wav")
        noise = AudioClip(_colored_noise(rng, length, rng.uniform(0.0, 1.5)))
        pairs.append(mix_at_snr(clean, noise, snrs[i % len(snrs)]))
    return pairs


def load_pair_dirs(clean_dir, noisy_dir):
    """Parallel-directory dataset: identical filenames under clean/ and
    noisy/."""
    from pathlib import Path

    clean_dir, noisy_dir = Path(clean_dir), Path(noisy_dir)
    names = sorted(p.name for p in clean_dir.glob("*.wav"))
    if not names:
        raise FileNotFoundError(f"no .wav files in {clean_dir}")
    pairs = []
    for name in names:
        noisy_path = noisy_dir / name
        if not noisy_path.exists():
            raise FileNotFoundError(f"missing noisy counterpart: {noisy_path}")
        pairs.append(PairedExample(load_audio(clean_dir / name), load_audio(noisy_path)))
    return pairs


def load_manifest(path):
    """Manifest dataset: one 'clean_path<TAB>noisy_path' per line, paths
    relative to the manifest's directory."""
    from pathlib import Path

    base = Path(path).parent
    pairs = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            clean_rel, noisy_rel = line.split("\t")
            pairs.append(PairedExample(load_audio(base / clean_rel), load_audio(base / noisy_rel)))
    if not pairs:
        raise ValueError(f"empty manifest: {path}")
    return pairs
