"""Command-line surface: featurize, train, convert, evaluate.

Every command honors --seed and, for fixed inputs and the stub backend,
produces byte-identical primary outputs across runs.  Exit codes are a
stable contract: 0 success, 1 user error, 2 internal error.

A run is described by one JSON config file (see `train --help`); flags
override file values and the effective merged config is written into
the output directory for the record.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import features as feat
from . import metrics, storage, training
from .conversion import ConversionError, VoiceConverter, convert_features, convert_utterance
from .model import DiscriminatorSpec, GeneratorSpec
from .training import TrainingConfig

CACHE_SUFFIX = ".vcfc"
CACHE_ROOT_ENV = "CYCLEVC_CACHE_ROOT"

EXIT_OK = 0
EXIT_USER = 1
EXIT_INTERNAL = 2


class CliError(Exception):
    """User-facing failure; exits with code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# ---------------------------------------------------------------------------
# shared helpers

def _require_dir(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise CliError(f"{what} directory not found: {p}")
    return p


def _load_stats_file(cache_dir: Path) -> tuple[feat.NormStats, feat.F0Stats, feat.AnalyzerConfig]:
    stats_path = cache_dir / "stats.json"
    if not stats_path.is_file():
        raise CliError(f"missing stats file {stats_path} (run featurize first)")
    d = json.loads(stats_path.read_text())
    return (
        feat.NormStats.from_dict(d["mcep"]),
        feat.F0Stats.from_dict(d["f0"]),
        feat.AnalyzerConfig.from_dict(d["analyzer"]),
    )


def _cache_records(cache_dir: Path) -> list[Path]:
    records = sorted(cache_dir.glob(f"*{CACHE_SUFFIX}"))
    if not records:
        raise CliError(f"no feature records ({CACHE_SUFFIX}) in {cache_dir}")
    return records


def _load_corpus(cache_dir: Path) -> list[feat.FeatureSet]:
    return [feat.read_feature_record(p) for p in _cache_records(cache_dir)]


def _normalized_mceps(corpus: list[feat.FeatureSet], stats: feat.NormStats) -> list[np.ndarray]:
    return [
        feat.normalize(f.mcep, stats).frames.astype(np.float32) for f in corpus
    ]


def _backend(name: str) -> feat.VocoderBackend:
    try:
        return feat.get_backend(name)
    except feat.BackendError as exc:
        raise CliError(str(exc)) from exc


# ---------------------------------------------------------------------------
# featurize

def cmd_featurize(args) -> int:
    in_dir = _require_dir(args.input, "input")
    if args.out:
        out_dir = Path(args.out)
    elif os.environ.get(CACHE_ROOT_ENV):
        out_dir = Path(os.environ[CACHE_ROOT_ENV]) / in_dir.name
    else:
        raise CliError(f"--out required (or set {CACHE_ROOT_ENV})")
    cfg = feat.AnalyzerConfig(
        sample_rate=args.sample_rate,
        frame_period_ms=args.frame_period,
        mcep_order=args.mcep_order,
    )
    backend = _backend(args.backend)
    wavs = sorted(in_dir.glob("*.wav"))
    if not wavs:
        raise CliError(f"no .wav files in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    mceps: list[feat.McepSequence] = []
    tracks: list[feat.F0Track] = []
    written = 0
    for wav_path in wavs:
        try:
            fs = backend.analyze(feat.read_wav(wav_path), cfg)
        except feat.AnalysisError as exc:
            print(f"warning: skipping {wav_path.name}: {exc}", file=sys.stderr)
            continue
        feat.write_feature_record(out_dir / (wav_path.stem + CACHE_SUFFIX), fs)
        mceps.append(fs.mcep)
        tracks.append(fs.f0)
        written += 1
    if written == 0:
        raise CliError(f"no analyzable audio in {in_dir}")
    stats = {
        "analyzer": cfg.to_dict(),
        "mcep": feat.compute_mcep_stats(mceps).to_dict(),
        "f0": feat.compute_f0_stats(tracks).to_dict(),
    }
    (out_dir / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True))
    print(f"featurized {written}/{len(wavs)} files -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train

_RUN_KEYS = {"training", "corpus_x", "corpus_y", "out", "backend"}


def _merge_run_config(args) -> dict:
    run: dict = {"training": {}, "backend": "stub"}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise CliError(f"config file not found: {path}")
        loaded = json.loads(path.read_text())
        unknown = set(loaded) - _RUN_KEYS
        if unknown:
            raise CliError(f"unknown config keys: {sorted(unknown)}")
        run.update(loaded)
    for key in ("corpus_x", "corpus_y", "out"):
        val = getattr(args, key)
        if val is not None:
            run[key] = val
    for missing in ("corpus_x", "corpus_y", "out"):
        if not run.get(missing):
            raise CliError(f"--{missing.replace('_', '-')} is required (flag or config)")
    tr = dict(run["training"])
    if args.arch:
        gen_spec, disc_spec = {
            "full": (GeneratorSpec(), DiscriminatorSpec()),
            "tiny": (GeneratorSpec.tiny(), DiscriminatorSpec.tiny()),
        }[args.arch]
        tr["generator"] = dataclasses.asdict(gen_spec)
        tr["discriminator"] = dataclasses.asdict(disc_spec)
    for flag, key in (
        ("seed", "seed"),
        ("total_iters", "total_iters"),
        ("checkpoint_every", "checkpoint_every"),
    ):
        val = getattr(args, flag)
        if val is not None:
            tr[key] = val
    run["training"] = tr
    return run


def cmd_train(args) -> int:
    run = _merge_run_config(args)
    try:
        cfg = TrainingConfig.from_dict(run["training"])
    except (TypeError, ValueError) as exc:
        raise CliError(f"bad training config: {exc}") from exc

    x_dir = _require_dir(run["corpus_x"], "corpus_x")
    y_dir = _require_dir(run["corpus_y"], "corpus_y")
    mcep_x, f0_x, analyzer = _load_stats_file(x_dir)
    mcep_y, f0_y, _ = _load_stats_file(y_dir)
    corpus_x = _normalized_mceps(_load_corpus(x_dir), mcep_x)
    corpus_y = _normalized_mceps(_load_corpus(y_dir), mcep_y)

    out_dir = Path(run["out"])
    out_dir.mkdir(parents=True, exist_ok=True)
    ckpt_dir = out_dir / "checkpoints"

    state = None
    if args.resume:
        ckpt = Path(args.resume)
        if not ckpt.is_file():
            raise CliError(f"checkpoint not found: {ckpt}")
        state = training.load_checkpoint(ckpt, expected_config=cfg)

    run["training"] = cfg.to_dict()
    (out_dir / "effective_config.json").write_text(json.dumps(run, indent=2, sort_keys=True))
    for name, nstats, fstats in (("x", mcep_x, f0_x), ("y", mcep_y, f0_y)):
        (out_dir / f"stats_{name}.json").write_text(
            json.dumps(
                {"analyzer": analyzer.to_dict(), "mcep": nstats.to_dict(), "f0": fstats.to_dict()},
                indent=2,
                sort_keys=True,
            )
        )

    log_path = out_dir / "progress.jsonl"
    with open(log_path, "a" if args.resume else "w") as log:

        def on_step(iteration, breakdown, lr_g, lr_d):
            rec = {"iteration": iteration, "lr_g": lr_g, "lr_d": lr_d}
            rec.update(breakdown.as_dict())
            log.write(json.dumps(rec, sort_keys=True) + "\n")

        state = training.train(
            cfg, corpus_x, corpus_y, state=state, on_step=on_step, checkpoint_dir=ckpt_dir
        )
    print(f"trained to iteration {state.iteration}; checkpoints in {ckpt_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# convert

def _latest_checkpoint(model_dir: Path) -> Path:
    ckpts = sorted((model_dir / "checkpoints").glob("checkpoint_*.ckpt"))
    if not ckpts:
        raise CliError(f"no checkpoints under {model_dir}")
    return ckpts[-1]


def _build_converter(args) -> VoiceConverter:
    model_dir = _require_dir(args.model_dir, "model")
    ckpt_path = Path(args.checkpoint) if args.checkpoint else _latest_checkpoint(model_dir)
    if not ckpt_path.is_file():
        raise CliError(f"checkpoint not found: {ckpt_path}")
    state = training.load_checkpoint(ckpt_path)

    def load_side(name):
        p = model_dir / f"stats_{name}.json"
        if not p.is_file():
            raise CliError(f"missing {p}")
        d = json.loads(p.read_text())
        return (
            feat.NormStats.from_dict(d["mcep"]),
            feat.F0Stats.from_dict(d["f0"]),
            feat.AnalyzerConfig.from_dict(d["analyzer"]),
        )

    mcep_x, f0_x, analyzer = load_side("x")
    mcep_y, f0_y, _ = load_side("y")
    if args.direction == "xy":
        return VoiceConverter(state.g_xy, mcep_x, mcep_y, f0_x, f0_y, analyzer)
    return VoiceConverter(state.g_yx, mcep_y, mcep_x, f0_y, f0_x, analyzer)


def cmd_convert(args) -> int:
    vc = _build_converter(args)
    in_dir = _require_dir(args.input, "input")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    records = sorted(in_dir.glob(f"*{CACHE_SUFFIX}"))
    wavs = sorted(in_dir.glob("*.wav"))
    if args.features_only:
        if not records:
            raise CliError(f"no {CACHE_SUFFIX} records in {in_dir}")
        for rec in records:
            converted = convert_features(feat.read_feature_record(rec), vc)
            feat.write_feature_record(out_dir / rec.name, converted)
        print(f"converted {len(records)} feature files -> {out_dir}")
        return EXIT_OK
    if not wavs:
        raise CliError(f"no .wav files in {in_dir}")
    backend = _backend(args.backend)
    for wav_path in wavs:
        out_wav = convert_utterance(feat.read_wav(wav_path), vc, backend)
        feat.write_wav(out_dir / wav_path.name, out_wav)
    print(f"converted {len(wavs)} utterances -> {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate

def _mcep_corpus(cache_dir: Path) -> list[feat.McepSequence]:
    return [f.mcep for f in _load_corpus(cache_dir)]


def cmd_evaluate(args) -> int:
    source = _mcep_corpus(_require_dir(args.source, "source"))
    target = _mcep_corpus(_require_dir(args.target, "target"))
    converted = _mcep_corpus(_require_dir(args.converted, "converted"))
    report = metrics.build_report(
        source,
        target,
        converted,
        fft_len=args.fft_len,
        metadata={
            "source": str(args.source),
            "target": str(args.target),
            "converted": str(args.converted),
        },
    )
    path = metrics.write_report(report, args.out)
    print(
        f"ms_rmse(target, converted) = {report.ms_rmse_target_converted:.4f} dB, "
        f"ms_rmse(target, source) = {report.ms_rmse_target_source:.4f} dB -> {path}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="cyclevc", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("featurize", help="analyze a directory of wav files into a feature cache")
    p.add_argument("input", help="directory of 16-bit mono wav files")
    p.add_argument("--out", help=f"cache directory (default: ${CACHE_ROOT_ENV}/<input name>)")
    p.add_argument("--backend", default="stub", choices=["stub", "world"])
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--frame-period", type=float, default=5.0)
    p.add_argument("--mcep-order", type=int, default=24)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="train the two-direction mapping on feature caches")
    p.add_argument("--config", help="JSON run config; flags override file values")
    p.add_argument("--corpus-x", dest="corpus_x", help="feature cache dir, source speaker")
    p.add_argument("--corpus-y", dest="corpus_y", help="feature cache dir, target speaker")
    p.add_argument("--out", help="output directory (checkpoints, logs, stats)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--total-iters", dest="total_iters", type=int, default=None)
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int, default=None)
    p.add_argument("--arch", choices=["full", "tiny"], default=None,
                   help="architecture preset (overrides config specs)")
    p.add_argument("--resume", help="checkpoint file to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("convert", help="convert utterances with a trained model")
    p.add_argument("--model-dir", dest="model_dir", required=True,
                   help="training output directory (checkpoints + stats)")
    p.add_argument("--checkpoint", help="explicit checkpoint file (default: latest)")
    p.add_argument("--direction", choices=["xy", "yx"], default="xy")
    p.add_argument("--input", required=True, help="directory of wav files (or caches with --features-only)")
    p.add_argument("--out", required=True)
    p.add_argument("--backend", default="stub", choices=["stub", "world"])
    p.add_argument("--features-only", dest="features_only", action="store_true",
                   help="convert feature records directly; no vocoder involved")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("evaluate", help="objective report for a converted corpus")
    p.add_argument("--source", required=True, help="feature cache dir")
    p.add_argument("--target", required=True, help="feature cache dir")
    p.add_argument("--converted", required=True, help="feature cache dir")
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--fft-len", dest="fft_len", type=int, default=512)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (feat.AnalysisError, feat.BackendError, feat.CacheError,
            storage.StorageError, ConversionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
