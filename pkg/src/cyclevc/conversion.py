"""End-to-end utterance conversion.

Pipeline per utterance: analyze -> normalize (source stats) -> generator
-> denormalize (target stats) -> log-Gaussian F0 transform -> copy
aperiodicities verbatim -> synthesize.  The generator is fully
convolutional but needs a length divisible by 4, so inputs are
reflect-padded at the tail and trimmed back afterwards; frame counts
are preserved for any input length.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import (
    AnalyzerConfig,
    F0Stats,
    F0Track,
    FeatureSet,
    McepSequence,
    NormStats,
    VocoderBackend,
    convert_f0,
    denormalize,
    normalize,
)
from .model import Generator, generator_forward


class ConversionError(RuntimeError):
    """Pipeline failure, labeled with the stage that raised."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass(frozen=True)
class VoiceConverter:
    generator: Generator
    src_mcep_stats: NormStats
    tgt_mcep_stats: NormStats
    src_f0_stats: F0Stats
    tgt_f0_stats: F0Stats
    analyzer: AnalyzerConfig

    def __post_init__(self):
        d = self.analyzer.mcep_order
        if self.src_mcep_stats.mean.shape[0] != d or self.tgt_mcep_stats.mean.shape[0] != d:
            raise ValueError("normalization stats do not match the mcep order")


def pad_frames_to_multiple(frames: np.ndarray, multiple: int) -> tuple[np.ndarray, int]:
    """Reflect-pad (T, D) at the tail to a multiple; returns (padded, T).

    Falls back to edge replication when T is too short to reflect.
    """
    t = frames.shape[0]
    pad = (-t) % multiple
    if pad == 0:
        return frames, t
    mode = "reflect" if t > pad else "edge"
    return np.pad(frames, ((0, pad), (0, 0)), mode=mode), t


def convert_features(f: FeatureSet, vc: VoiceConverter) -> FeatureSet:
    """Feature-domain conversion (no vocoder stages)."""
    try:
        norm = normalize(f.mcep, vc.src_mcep_stats)
        padded, t = pad_frames_to_multiple(norm.frames, 4)
        mapped = generator_forward(vc.generator, padded)[:t]
        mcep_out = denormalize(McepSequence(mapped, f.mcep.frame_period), vc.tgt_mcep_stats)
    except ConversionError:
        raise
    except Exception as exc:
        raise ConversionError("mcep-mapping", str(exc)) from exc
    try:
        f0_out = convert_f0(f.f0, vc.src_f0_stats, vc.tgt_f0_stats)
    except Exception as exc:
        raise ConversionError("f0-transform", str(exc)) from exc
    # aperiodicities pass through untouched (same array, bit for bit)
    return FeatureSet(mcep_out, f0_out, f.ap)


def convert_utterance(w, vc: VoiceConverter, backend: VocoderBackend):
    """Waveform-to-waveform conversion through the configured backend."""
    try:
        analyzed = backend.analyze(w, vc.analyzer)
    except Exception as exc:
        raise ConversionError("analysis", str(exc)) from exc
    converted = convert_features(analyzed, vc)
    try:
        return backend.synthesize(converted, vc.analyzer)
    except Exception as exc:
        raise ConversionError("synthesis", str(exc)) from exc
