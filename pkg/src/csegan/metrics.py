"""Waveform quality metrics and the pluggable normalized-label machinery
that feeds the metric discriminator.

The segmental SNR uses 32 ms non-overlapping frames with the per-frame
ratio clamped to [-10, 35] dB; frames whose reference energy falls below
1e-10 are skipped. The default quality plugin is this SSNR affinely mapped
to [0, 1]; real perceptual scores can be injected from a sidecar file
("relative/path.wav<TAB>raw_score" per line) without touching the
training code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .data import AudioClip

SSNR_FRAME = 512            # 32 ms at 16 kHz
SSNR_MIN, SSNR_MAX = -10.0, 35.0
SILENCE_ENERGY = 1e-10
PESQ_BOUNDS = (-0.5, 4.5)


def _samples(clip):
    return clip.samples if isinstance(clip, AudioClip) else np.asarray(clip, dtype=np.float64)


def ssnr(clean, estimate) -> float:
    """Segmental SNR in dB, clamped per frame to [-10, 35]."""
    c, e = _samples(clean), _samples(estimate)
    if c.size != e.size:
        raise ValueError(f"length mismatch: {c.size} vs {e.size}")
    if c.size < SSNR_FRAME:
        raise ValueError(f"need at least {SSNR_FRAME} samples, got {c.size}")
    n_frames = c.size // SSNR_FRAME
    c = c[: n_frames * SSNR_FRAME].reshape(n_frames, SSNR_FRAME)
    e = e[: n_frames * SSNR_FRAME].reshape(n_frames, SSNR_FRAME)
    sig = np.sum(c * c, axis=1)
    err = np.sum((c - e) ** 2, axis=1)
    keep = sig >= SILENCE_ENERGY
    if not np.any(keep):
        raise ValueError("no frames above the silence threshold")
    with np.errstate(divide="ignore"):
        ratios = 10.0 * np.log10(sig[keep] / err[keep])
    return float(np.mean(np.clip(ratios, SSNR_MIN, SSNR_MAX)))


def snr(clean, estimate) -> float:
    """Global SNR in dB, clamped to the same [-10, 35] band."""
    c, e = _samples(clean), _samples(estimate)
    if c.size != e.size:
        raise ValueError(f"length mismatch: {c.size} vs {e.size}")
    num = float(np.sum(c * c))
    den = float(np.sum((c - e) ** 2))
    if num <= 0.0:
        raise ValueError("silent reference clip")
    with np.errstate(divide="ignore"):
        value = 10.0 * np.log10(num / den) if den > 0.0 else np.inf
    return float(np.clip(value, SSNR_MIN, SSNR_MAX))


def normalize_quality(raw, raw_min, raw_max) -> float:
    """Affine map of a clamped raw score onto [0, 1]."""
    if raw_max <= raw_min:
        raise ValueError(f"invalid bounds: [{raw_min}, {raw_max}]")
    clamped = min(max(float(raw), raw_min), raw_max)
    return (clamped - raw_min) / (raw_max - raw_min)


@dataclass
class QualityScore:
    raw: float
    normalized: float
    metric_name: str


@dataclass
class QualityMetricPlugin:
    """A raw metric plus the bounds used to normalize it onto [0, 1]."""

    name: str
    fn: callable
    raw_min: float
    raw_max: float

    def __call__(self, clean, estimate) -> QualityScore:
        raw = float(self.fn(clean, estimate))
        return QualityScore(raw, normalize_quality(raw, self.raw_min, self.raw_max), self.name)


def ssnr_plugin() -> QualityMetricPlugin:
    return QualityMetricPlugin("ssnr_quality", ssnr, SSNR_MIN, SSNR_MAX)


def sidecar_plugin(score_file, raw_min=PESQ_BOUNDS[0], raw_max=PESQ_BOUNDS[1],
                   name="sidecar_quality") -> QualityMetricPlugin:
    """Looks scores up by the clean clip's source path (basename fallback)
    from a tab-separated sidecar file; for injecting externally computed
    perceptual scores."""
    table = {}
    with open(score_file) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            rel, score = line.split("\t")
            table[rel] = float(score)

    def lookup(clean, estimate):
        key = clean.source_id if isinstance(clean, AudioClip) else None
        if key is None:
            raise ValueError("sidecar plugin needs clips with a source_id")
        if key in table:
            return table[key]
        base = key.replace("\\", "/").split("/")[-1]
        for rel, score in table.items():
            if rel.replace("\\", "/").split("/")[-1] == base:
                return score
        raise KeyError(f"no sidecar score for '{key}'")

    return QualityMetricPlugin(name, lookup, raw_min, raw_max)


def evaluate(clean, estimate, plugins=()) -> dict:
    """Flat, deterministically ordered metric report for one pair."""
    c, e = _samples(clean), _samples(estimate)
    if c.size != e.size:
        raise ValueError(f"length mismatch: {c.size} vs {e.size}")
    report = {"snr": snr(c, e), "ssnr": ssnr(c, e)}
    for plugin in plugins:
        score = plugin(clean, estimate)
        report[plugin.name] = score.raw
        report[f"{plugin.name}_normalized"] = score.normalized
    return dict(sorted(report.items()))


def report_json(report) -> str:
    return json.dumps(report, sort_keys=True)
