"""Objective evaluation: global variance, modulation spectra, log-MS RMSE.

Global variance is the per-dimension population variance of each
utterance's trajectory, averaged over the corpus; collapsed variance is
the classic over-smoothing signature.  The modulation spectrum is the
power spectrum of each (mean-removed, zero-padded) feature trajectory
over modulation frequency, corpus-averaged in the power domain and
reported in dB; the scalar report metric is the RMSE between two dB
profiles over all dimensions and modulation frequencies.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .features import McepSequence

POWER_FLOOR = 1e-10
REPORT_FORMAT = "cyclevc-metrics-report"
REPORT_VERSION = 1


@dataclass(frozen=True)
class GvProfile:
    variance: np.ndarray  # (D,)

    def __post_init__(self):
        v = np.asarray(self.variance, dtype=np.float64)
        object.__setattr__(self, "variance", v)
        if v.ndim != 1:
            raise ValueError("GV profile must be a vector")
        if np.any(v < 0):
            raise ValueError("variances cannot be negative")


@dataclass(frozen=True)
class MsProfile:
    db: np.ndarray  # (D, F) log power in dB
    freqs: np.ndarray  # (F,) modulation frequency axis in Hz

    def __post_init__(self):
        db = np.asarray(self.db, dtype=np.float64)
        freqs = np.asarray(self.freqs, dtype=np.float64)
        object.__setattr__(self, "db", db)
        object.__setattr__(self, "freqs", freqs)
        if db.ndim != 2 or freqs.shape != (db.shape[1],):
            raise ValueError("MS profile must be (D, F) with a matching frequency axis")
        if not np.all(np.isfinite(db)):
            raise ValueError("MS profile contains non-finite values")


def _check_corpus(corpus: list[McepSequence]) -> int:
    if not corpus:
        raise ValueError("empty corpus")
    dims = {m.dim for m in corpus}
    if len(dims) > 1:
        raise ValueError(f"inconsistent dimensions in corpus: {sorted(dims)}")
    return dims.pop()


def global_variance(corpus: list[McepSequence]) -> GvProfile:
    """Per-utterance, per-dimension population variance, corpus mean."""
    _check_corpus(corpus)
    per_utt = [m.frames.astype(np.float64).var(axis=0) for m in corpus]
    return GvProfile(np.mean(per_utt, axis=0))


def _segments(traj: np.ndarray, seg_len: int) -> list[np.ndarray]:
    if traj.shape[0] <= seg_len:
        return [traj]
    return [traj[i : i + seg_len] for i in range(0, traj.shape[0], seg_len)]


def modulation_power(
    corpus: list[McepSequence], fft_len: int = 512, segment_frames: int | None = None
) -> np.ndarray:
    """Unfloored one-sided modulation power, (D, fft_len//2 + 1).

    Per trajectory: remove the mean, zero-pad to fft_len, take
    |DFT|^2 / fft_len, then average over trajectories.  Trajectories
    longer than the window are split into consecutive windows first
    (or into segment_frames-sized pieces when given), each treated as
    its own utterance.
    """
    d = _check_corpus(corpus)
    if fft_len < 2 or fft_len & (fft_len - 1):
        raise ValueError("fft_len must be a power of two >= 2")
    seg_len = fft_len if segment_frames is None else int(segment_frames)
    if seg_len < 1 or seg_len > fft_len:
        raise ValueError("segment_frames must be in [1, fft_len]")
    total = np.zeros((d, fft_len // 2 + 1))
    count = 0
    for m in corpus:
        for seg in _segments(m.frames.astype(np.float64), seg_len):
            centered = seg - seg.mean(axis=0)
            spec = np.fft.rfft(centered, n=fft_len, axis=0)
            total += (np.abs(spec) ** 2).T / fft_len
            count += 1
    return total / count


def modulation_spectrum(
    corpus: list[McepSequence], fft_len: int = 512, segment_frames: int | None = None
) -> MsProfile:
    """Corpus modulation spectrum in dB (power floored at 1e-10)."""
    power = modulation_power(corpus, fft_len, segment_frames)
    db = 10.0 * np.log10(np.maximum(power, POWER_FLOOR))
    frame_rate = 1000.0 / corpus[0].frame_period
    freqs = np.fft.rfftfreq(fft_len, d=1.0 / frame_rate)
    return MsProfile(db, freqs)


def ms_rmse(target: MsProfile, converted: MsProfile) -> float:
    """RMSE between two dB profiles over all D x F cells, in dB."""
    if target.db.shape != converted.db.shape:
        raise ValueError(
            f"profile shape mismatch: {target.db.shape} vs {converted.db.shape}"
        )
    return float(np.sqrt(np.mean((target.db - converted.db) ** 2)))


@dataclass(frozen=True)
class MetricsReport:
    source_gv: GvProfile
    target_gv: GvProfile
    converted_gv: GvProfile
    source_ms: MsProfile
    target_ms: MsProfile
    converted_ms: MsProfile
    ms_rmse_target_converted: float
    ms_rmse_target_source: float
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "format": REPORT_FORMAT,
            "version": REPORT_VERSION,
            "gv": {
                "source": self.source_gv.variance.tolist(),
                "target": self.target_gv.variance.tolist(),
                "converted": self.converted_gv.variance.tolist(),
            },
            "ms": {
                "freqs_hz": self.source_ms.freqs.tolist(),
                "source_db": self.source_ms.db.tolist(),
                "target_db": self.target_ms.db.tolist(),
                "converted_db": self.converted_ms.db.tolist(),
            },
            "ms_rmse": {
                "target_vs_converted": self.ms_rmse_target_converted,
                "target_vs_source": self.ms_rmse_target_source,
            },
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        if d.get("format") != REPORT_FORMAT:
            raise ValueError("not a metrics report")
        if d.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {d.get('version')}")
        freqs = np.asarray(d["ms"]["freqs_hz"])
        return cls(
            source_gv=GvProfile(np.asarray(d["gv"]["source"])),
            target_gv=GvProfile(np.asarray(d["gv"]["target"])),
            converted_gv=GvProfile(np.asarray(d["gv"]["converted"])),
            source_ms=MsProfile(np.asarray(d["ms"]["source_db"]), freqs),
            target_ms=MsProfile(np.asarray(d["ms"]["target_db"]), freqs),
            converted_ms=MsProfile(np.asarray(d["ms"]["converted_db"]), freqs),
            ms_rmse_target_converted=float(d["ms_rmse"]["target_vs_converted"]),
            ms_rmse_target_source=float(d["ms_rmse"]["target_vs_source"]),
            metadata=dict(d["metadata"]),
        )


def build_report(
    source: list[McepSequence],
    target: list[McepSequence],
    converted: list[McepSequence],
    fft_len: int = 512,
    metadata: dict | None = None,
) -> MetricsReport:
    t_ms = modulation_spectrum(target, fft_len)
    c_ms = modulation_spectrum(converted, fft_len)
    s_ms = modulation_spectrum(source, fft_len)
    return MetricsReport(
        source_gv=global_variance(source),
        target_gv=global_variance(target),
        converted_gv=global_variance(converted),
        source_ms=s_ms,
        target_ms=t_ms,
        converted_ms=c_ms,
        ms_rmse_target_converted=ms_rmse(t_ms, c_ms),
        ms_rmse_target_source=ms_rmse(t_ms, s_ms),
        metadata=metadata or {},
    )


def write_report(report: MetricsReport, out_dir: str | Path) -> Path:
    """Write report.json plus two-column plot series (GV per dimension
    index, MS per modulation frequency averaged over dimensions)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    for name, gv in (
        ("source", report.source_gv),
        ("target", report.target_gv),
        ("converted", report.converted_gv),
    ):
        _write_series(out / f"gv_{name}.dat", np.arange(1, gv.variance.size + 1), gv.variance)
    for name, ms in (
        ("source", report.source_ms),
        ("target", report.target_ms),
        ("converted", report.converted_ms),
    ):
        _write_series(out / f"ms_{name}.dat", ms.freqs, ms.db.mean(axis=0))
    return report_path


def read_report(path: str | Path) -> MetricsReport:
    return MetricsReport.from_dict(json.loads(Path(path).read_text()))


def _write_series(path: Path, xs: np.ndarray, ys: np.ndarray) -> None:
    lines = [f"{x:.10g} {y:.10g}" for x, y in zip(xs, ys)]
    path.write_text("\n".join(lines) + "\n")
