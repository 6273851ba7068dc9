"""Acoustic feature pipeline: analysis/synthesis, statistics, F0 transform.

Features per utterance are a mel-cepstral sequence (the mapped domain),
an F0 track with a voicing mask (converted by a log-Gaussian transform),
and per-band aperiodicities (passed through unchanged).  The vocoder
sits behind a small backend interface; a deterministic in-memory stub
keeps the whole suite runnable without external binaries, and a WORLD
adapter activates when pyworld/pysptk are importable.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

STD_EPS = 1e-5  # floor for every std estimate; keeps normalization invertible


class AnalysisError(RuntimeError):
    """Input not analyzable (too short, empty, malformed)."""


class BackendError(RuntimeError):
    """Requested vocoder backend unusable in this environment."""


@dataclass(frozen=True)
class AnalyzerConfig:
    sample_rate: int = 16000
    frame_period_ms: float = 5.0
    mcep_order: int = 24

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.frame_period_ms <= 0:
            raise ValueError("frame_period_ms must be positive")
        if self.mcep_order < 1:
            raise ValueError("mcep_order must be at least 1")

    @property
    def hop(self) -> int:
        return max(1, int(round(self.sample_rate * self.frame_period_ms / 1000.0)))

    def to_dict(self) -> dict:
        return {
            "sample_rate": self.sample_rate,
            "frame_period_ms": self.frame_period_ms,
            "mcep_order": self.mcep_order,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnalyzerConfig":
        unknown = set(d) - {"sample_rate", "frame_period_ms", "mcep_order"}
        if unknown:
            raise ValueError(f"unknown analyzer config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 1:
            raise ValueError("waveform must be mono (1-D)")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.samples.size and not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")


@dataclass(frozen=True)
class McepSequence:
    frames: np.ndarray  # (T, D)
    frame_period: float = 5.0

    def __post_init__(self):
        frames = np.asarray(self.frames)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError("mcep frames must be a (T, D) matrix with T >= 1")
        if not np.all(np.isfinite(frames)):
            raise ValueError("mcep frames contain non-finite values")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class F0Track:
    values: np.ndarray  # Hz, length T
    voiced: np.ndarray  # bool mask, length T

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        voiced = np.asarray(self.voiced, dtype=bool)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "voiced", voiced)
        if values.ndim != 1 or voiced.shape != values.shape:
            raise ValueError("f0 values and voicing mask must be equal-length vectors")
        if np.any(values[voiced] <= 0):
            raise ValueError("voiced frames must carry positive f0")


@dataclass(frozen=True)
class ApSequence:
    frames: np.ndarray  # (T, B)

    def __post_init__(self):
        frames = np.asarray(self.frames)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 2:
            raise ValueError("aperiodicity must be a (T, B) matrix")


@dataclass(frozen=True)
class FeatureSet:
    mcep: McepSequence
    f0: F0Track
    ap: ApSequence

    def __post_init__(self):
        t = self.mcep.num_frames
        if self.f0.values.shape[0] != t or self.ap.frames.shape[0] != t:
            raise ValueError(
                f"frame count mismatch: mcep={t}, f0={self.f0.values.shape[0]}, ap={self.ap.frames.shape[0]}"
            )

    @property
    def num_frames(self) -> int:
        return self.mcep.num_frames


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)
        if mean.shape != std.shape or mean.ndim != 1:
            raise ValueError("mean/std must be equal-length vectors")
        if np.any(std < STD_EPS):
            raise ValueError(f"std entries must be >= {STD_EPS}")

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]))


@dataclass(frozen=True)
class F0Stats:
    log_mean: float
    log_std: float

    def __post_init__(self):
        if not np.isfinite(self.log_mean) or not np.isfinite(self.log_std):
            raise ValueError("f0 statistics must be finite")
        if self.log_std < STD_EPS:
            raise ValueError(f"log_std must be >= {STD_EPS}")

    def to_dict(self) -> dict:
        return {"log_mean": self.log_mean, "log_std": self.log_std}

    @classmethod
    def from_dict(cls, d: dict) -> "F0Stats":
        return cls(float(d["log_mean"]), float(d["log_std"]))


# ---------------------------------------------------------------------------
# statistics and normalization

def compute_mcep_stats(corpus: list[McepSequence]) -> NormStats:
    """Per-dimension mean and population std pooled over all frames."""
    if not corpus:
        raise ValueError("cannot compute statistics of an empty corpus")
    dims = {m.dim for m in corpus}
    if len(dims) > 1:
        raise ValueError(f"inconsistent mcep dimensions in corpus: {sorted(dims)}")
    pooled = np.concatenate([m.frames.astype(np.float64) for m in corpus], axis=0)
    mean = pooled.mean(axis=0)
    std = np.maximum(pooled.std(axis=0), STD_EPS)
    return NormStats(mean, std)


def normalize(m: McepSequence, s: NormStats) -> McepSequence:
    if m.dim != s.mean.shape[0]:
        raise ValueError(f"dimension mismatch: mcep D={m.dim}, stats D={s.mean.shape[0]}")
    return McepSequence((m.frames - s.mean) / s.std, m.frame_period)


def denormalize(m: McepSequence, s: NormStats) -> McepSequence:
    if m.dim != s.mean.shape[0]:
        raise ValueError(f"dimension mismatch: mcep D={m.dim}, stats D={s.mean.shape[0]}")
    return McepSequence(m.frames * s.std + s.mean, m.frame_period)


def compute_f0_stats(tracks: list[F0Track]) -> F0Stats:
    """Mean/population std of log F0 over voiced frames only."""
    if not tracks:
        raise ValueError("cannot compute statistics of an empty corpus")
    voiced_values = np.concatenate([t.values[t.voiced] for t in tracks])
    if voiced_values.size == 0:
        raise ValueError("no voiced frames in corpus")
    logs = np.log(voiced_values)
    return F0Stats(float(logs.mean()), float(max(logs.std(), STD_EPS)))


def convert_f0(track: F0Track, src: F0Stats, tgt: F0Stats) -> F0Track:
    """Log-Gaussian transform of voiced F0; unvoiced frames untouched."""
    if src.log_std < STD_EPS:
        raise ValueError("source log-f0 std below floor")
    logs = np.zeros_like(track.values)
    v = track.voiced
    logs[v] = (np.log(track.values[v]) - src.log_mean) * (tgt.log_std / src.log_std) + tgt.log_mean
    out = track.values.copy()
    out[v] = np.exp(logs[v])
    return F0Track(out, track.voiced.copy())


# ---------------------------------------------------------------------------
# vocoder backends

class VocoderBackend:
    """Analyzer/synthesizer pair; implementations declare reentrancy."""

    name: str = "abstract"
    reentrant: bool = False

    def analyze(self, w: Waveform, cfg: AnalyzerConfig) -> FeatureSet:
        raise NotImplementedError

    def synthesize(self, f: FeatureSet, cfg: AnalyzerConfig) -> Waveform:
        raise NotImplementedError


def _frame_count(num_samples: int, hop: int) -> int:
    return num_samples // hop + 1


class StubVocoder(VocoderBackend):
    """Deterministic in-memory backend for tests and desk-scale runs.

    Analysis: per-frame log-spectrum DCT for the cepstral channels, an
    autocorrelation pitch estimate for F0/voicing, per-band spectral
    flatness for aperiodicity.  Synthesis drives a phase-continuous
    harmonic bank plus shaped noise.  Never touches disk or global RNG.
    """

    name = "stub"
    reentrant = True

    def __init__(self, ap_bands: int = 4, window_ms: float = 25.0, nfft: int = 512,
                 f0_floor: float = 60.0, f0_ceil: float = 400.0,
                 voicing_threshold: float = 0.55, energy_threshold: float = 1e-4):
        self.ap_bands = ap_bands
        self.window_ms = window_ms
        self.nfft = nfft
        self.f0_floor = f0_floor
        self.f0_ceil = f0_ceil
        self.voicing_threshold = voicing_threshold
        self.energy_threshold = energy_threshold

    # DCT-II basis, orthonormal, cached per (order, bins)
    _dct_cache: dict[tuple[int, int], np.ndarray] = {}

    @classmethod
    def _dct_basis(cls, order: int, bins: int) -> np.ndarray:
        key = (order, bins)
        if key not in cls._dct_cache:
            n = np.arange(bins)
            k = np.arange(order)[:, None]
            basis = np.cos(np.pi * k * (2 * n + 1) / (2 * bins))
            basis *= np.sqrt(2.0 / bins)
            basis[0] *= np.sqrt(0.5)
            cls._dct_cache[key] = basis
        return cls._dct_cache[key]

    def analyze(self, w: Waveform, cfg: AnalyzerConfig) -> FeatureSet:
        hop = cfg.hop
        x = w.samples
        if x.size < hop:
            raise AnalysisError(
                f"waveform of {x.size} samples is shorter than one {cfg.frame_period_ms} ms frame"
            )
        t_frames = _frame_count(x.size, hop)
        win = max(2 * hop, int(round(self.window_ms * cfg.sample_rate / 1000.0)))
        half = win // 2
        padded = np.pad(x, (half, win))
        window = np.hanning(win)
        bins = self.nfft // 2 + 1
        basis = self._dct_basis(cfg.mcep_order, bins)

        mcep = np.empty((t_frames, cfg.mcep_order), dtype=np.float64)
        f0 = np.zeros(t_frames, dtype=np.float64)
        voiced = np.zeros(t_frames, dtype=bool)
        ap = np.empty((t_frames, self.ap_bands), dtype=np.float64)

        lag_min = max(2, int(cfg.sample_rate / self.f0_ceil))
        lag_max = min(win - 2, int(cfg.sample_rate / self.f0_floor))
        band_edges = np.linspace(1, bins, self.ap_bands + 1).astype(int)

        for t in range(t_frames):
            frame = padded[t * hop : t * hop + win] * window
            power = np.abs(np.fft.rfft(frame, self.nfft)) ** 2
            mcep[t] = basis @ np.log(power + 1e-10)

            rms = np.sqrt(np.mean(frame**2))
            if rms > self.energy_threshold and lag_max > lag_min:
                ac = np.correlate(frame, frame, mode="full")[win - 1 :]
                if ac[0] > 0:
                    seg = ac[lag_min : lag_max + 1] / ac[0]
                    peak = int(np.argmax(seg))
                    if seg[peak] > self.voicing_threshold:
                        voiced[t] = True
                        f0[t] = cfg.sample_rate / (lag_min + peak)

            for bidx in range(self.ap_bands):
                band = power[band_edges[bidx] : band_edges[bidx + 1]] + 1e-12
                flatness = np.exp(np.mean(np.log(band))) / np.mean(band)
                ap[t, bidx] = float(np.clip(flatness, 0.0, 1.0))

        return FeatureSet(
            McepSequence(mcep.astype(np.float32), cfg.frame_period_ms),
            F0Track(f0, voiced),
            ApSequence(ap.astype(np.float32)),
        )

    def synthesize(self, f: FeatureSet, cfg: AnalyzerConfig) -> Waveform:
        if f.mcep.dim < 1:
            raise ValueError("empty feature set")
        hop = cfg.hop
        t_frames = f.num_frames
        n = t_frames * hop
        bins = self.nfft // 2 + 1
        basis = self._dct_basis(f.mcep.dim, bins)
        # envelope amplitude per spectral bin, per frame
        log_power = f.mcep.frames.astype(np.float64) @ basis
        amp = np.exp(0.5 * log_power)
        freqs = np.linspace(0, cfg.sample_rate / 2, bins)

        out = np.zeros(n)
        noise_rng = np.random.Generator(np.random.PCG64(0x5EED))
        phase = 0.0
        for t in range(t_frames):
            seg = slice(t * hop, (t + 1) * hop)
            apw = float(np.clip(np.mean(f.ap.frames[t]), 0.0, 1.0))
            env_rms = float(np.sqrt(np.mean(amp[t] ** 2)))
            if f.f0.voiced[t]:
                f0 = float(f.f0.values[t])
                n_harm = max(1, int((cfg.sample_rate / 2) / f0))
                ph = phase + 2 * np.pi * f0 * np.arange(1, hop + 1) / cfg.sample_rate
                tone = np.zeros(hop)
                for h in range(1, min(n_harm, 40) + 1):
                    a = float(np.interp(h * f0, freqs, amp[t]))
                    tone += a * np.sin(h * ph)
                phase = float(ph[-1] % (2 * np.pi))
                out[seg] = (1.0 - apw) * tone / np.sqrt(max(n_harm, 1))
            else:
                apw = max(apw, 0.5)
                phase = 0.0
            out[seg] += apw * env_rms * noise_rng.standard_normal(hop)
        peak = np.max(np.abs(out))
        if peak > 1.0:
            out /= peak
        return Waveform(out, cfg.sample_rate)


class WorldVocoder(VocoderBackend):
    """WORLD-based backend; requires pyworld and pysptk at runtime."""

    name = "world"
    reentrant = False

    def __init__(self):
        try:
            import pysptk  # noqa: F401
            import pyworld  # noqa: F401
        except ImportError as exc:
            raise BackendError(
                "world backend needs the pyworld and pysptk packages"
            ) from exc
        self._pyworld = pyworld
        self._pysptk = pysptk

    def _alpha(self, sample_rate: int) -> float:
        # standard all-pass constants for common rates
        return {8000: 0.31, 16000: 0.42, 22050: 0.455, 44100: 0.544, 48000: 0.554}.get(
            sample_rate, 0.42
        )

    def analyze(self, w: Waveform, cfg: AnalyzerConfig) -> FeatureSet:
        pw, sptk = self._pyworld, self._pysptk
        x = np.ascontiguousarray(w.samples, dtype=np.float64)
        if x.size < cfg.hop:
            raise AnalysisError("waveform shorter than one frame")
        f0, timeaxis = pw.harvest(x, cfg.sample_rate, frame_period=cfg.frame_period_ms)
        sp = pw.cheaptrick(x, f0, timeaxis, cfg.sample_rate)
        ap = pw.d4c(x, f0, timeaxis, cfg.sample_rate)
        mcep = sptk.sp2mc(sp, order=cfg.mcep_order - 1, alpha=self._alpha(cfg.sample_rate))
        coded_ap = pw.code_aperiodicity(ap, cfg.sample_rate)
        voiced = f0 > 0
        return FeatureSet(
            McepSequence(mcep.astype(np.float32), cfg.frame_period_ms),
            F0Track(np.where(voiced, f0, 0.0), voiced),
            ApSequence(coded_ap.astype(np.float32)),
        )

    def synthesize(self, f: FeatureSet, cfg: AnalyzerConfig) -> Waveform:
        pw, sptk = self._pyworld, self._pysptk
        fft_len = pw.get_cheaptrick_fft_size(cfg.sample_rate)
        sp = sptk.mc2sp(
            np.ascontiguousarray(f.mcep.frames, dtype=np.float64),
            alpha=self._alpha(cfg.sample_rate),
            fftlen=fft_len,
        )
        ap = pw.decode_aperiodicity(
            np.ascontiguousarray(f.ap.frames, dtype=np.float64), cfg.sample_rate, fft_len
        )
        f0 = np.where(f.f0.voiced, f.f0.values, 0.0)
        y = pw.synthesize(f0, sp, ap, cfg.sample_rate, frame_period=cfg.frame_period_ms)
        return Waveform(y, cfg.sample_rate)


_BACKENDS = {"stub": StubVocoder, "world": WorldVocoder}


def get_backend(name: str) -> VocoderBackend:
    if name not in _BACKENDS:
        raise BackendError(f"unknown vocoder backend {name!r}; have {sorted(_BACKENDS)}")
    return _BACKENDS[name]()


def analyze(w: Waveform, cfg: AnalyzerConfig, backend: VocoderBackend | None = None) -> FeatureSet:
    return (backend or StubVocoder()).analyze(w, cfg)


def synthesize(f: FeatureSet, cfg: AnalyzerConfig, backend: VocoderBackend | None = None) -> Waveform:
    return (backend or StubVocoder()).synthesize(f, cfg)


# ---------------------------------------------------------------------------
# PCM audio files (16-bit mono)

def read_wav(path: str | Path) -> Waveform:
    import wave

    try:
        with wave.open(str(path), "rb") as fh:
            if fh.getnchannels() != 1:
                raise AnalysisError(f"{path}: expected mono audio")
            if fh.getsampwidth() != 2:
                raise AnalysisError(f"{path}: expected 16-bit PCM")
            sr = fh.getframerate()
            raw = fh.readframes(fh.getnframes())
    except wave.Error as exc:
        raise AnalysisError(f"{path}: {exc}") from exc
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return Waveform(samples, sr)


def write_wav(path: str | Path, w: Waveform) -> None:
    import wave

    pcm = np.clip(np.round(w.samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(w.sample_rate)
        fh.writeframes(pcm.tobytes())


# ---------------------------------------------------------------------------
# feature cache records

CACHE_MAGIC = b"VCFC"
CACHE_VERSION = 1
_CACHE_HEADER = struct.Struct("<4sIIIId")  # magic, version, T, D, B, frame_period


class CacheError(RuntimeError):
    """Unreadable or corrupt feature cache record."""


def write_feature_record(path: str | Path, f: FeatureSet) -> None:
    """Serialize one utterance: header then mcep, f0, voicing, ap blocks
    (row-major little-endian float32, mask as bytes)."""
    t, d = f.mcep.frames.shape
    b = f.ap.frames.shape[1]
    blob = _CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, t, d, b, float(f.mcep.frame_period))
    blob += np.ascontiguousarray(f.mcep.frames, dtype="<f4").tobytes()
    blob += np.ascontiguousarray(f.f0.values, dtype="<f4").tobytes()
    blob += np.ascontiguousarray(f.f0.voiced, dtype="|u1").tobytes()
    blob += np.ascontiguousarray(f.ap.frames, dtype="<f4").tobytes()
    Path(path).write_bytes(blob)


def read_feature_record(path: str | Path) -> FeatureSet:
    raw = Path(path).read_bytes()
    if len(raw) < _CACHE_HEADER.size:
        raise CacheError(f"{path}: truncated header")
    magic, version, t, d, b, period = _CACHE_HEADER.unpack_from(raw)
    if magic != CACHE_MAGIC:
        raise CacheError(f"{path}: bad magic {magic!r}")
    if version != CACHE_VERSION:
        raise CacheError(f"{path}: unsupported cache version {version}")
    need = _CACHE_HEADER.size + 4 * t * d + 4 * t + t + 4 * t * b
    if len(raw) != need:
        raise CacheError(f"{path}: expected {need} bytes, found {len(raw)}")
    off = _CACHE_HEADER.size
    mcep = np.frombuffer(raw, "<f4", t * d, off).reshape(t, d)
    off += 4 * t * d
    f0 = np.frombuffer(raw, "<f4", t, off).astype(np.float64)
    off += 4 * t
    voiced = np.frombuffer(raw, "|u1", t, off).astype(bool)
    off += t
    ap = np.frombuffer(raw, "<f4", t * b, off).reshape(t, b)
    return FeatureSet(
        McepSequence(mcep.copy(), period), F0Track(f0, voiced), ApSequence(ap.copy())
    )
