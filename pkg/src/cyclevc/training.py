"""Training procedure: crop sampling, schedules, alternating updates, state.

Each iteration draws one random fixed-length crop per domain, updates
both discriminators on their least-squares losses against detached
fakes, then updates both generators jointly on the combined objective.
Everything that influences a run (parameters, Adam moments, the crop
RNG) lives in TrainerState and round-trips bit-exactly through
checkpoints, so a resumed run equals an uninterrupted one.
"""
from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import losses, storage
from .model import (
    Discriminator,
    DiscriminatorSpec,
    Generator,
    GeneratorSpec,
    init_models,
    load_state,
    state_dict,
)
from .nn import functional as F
from .nn.autograd import Tensor, no_grad

CHECKPOINT_FORMAT = "cyclevc-checkpoint"
CHECKPOINT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    """Raised when a step produces a non-finite loss."""


@dataclass(frozen=True)
class TrainingConfig:
    lambda_cyc: float = 10.0
    lambda_id: float = 5.0
    id_active_iters: int = 10_000
    crop_frames: int = 128
    batch_size: int = 1
    lr_g: float = 2e-4
    lr_d: float = 1e-4
    lr_const_iters: int = 200_000
    lr_decay_iters: int = 200_000
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 10_000
    total_iters: int = 400_000
    generator: GeneratorSpec = field(default_factory=GeneratorSpec)
    discriminator: DiscriminatorSpec = field(default_factory=DiscriminatorSpec)

    def __post_init__(self):
        if min(self.id_active_iters, self.crop_frames, self.batch_size,
               self.checkpoint_every) < 1 or self.total_iters < 0:
            raise ValueError("iteration and size fields must be positive")
        if self.lr_const_iters < 0 or self.lr_decay_iters < 1:
            raise ValueError("learning-rate schedule lengths must be positive")
        if self.lambda_cyc < 0 or self.lambda_id < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise ValueError("learning rates must be positive")
        if self.crop_frames % 4 != 0:
            raise ValueError("crop_frames must be a multiple of 4 (two stride-2 stages)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["generator"] = asdict(self.generator)
        d["discriminator"] = asdict(self.discriminator)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training config keys: {sorted(unknown)}")
        if "generator" in d:
            gspec = dict(d["generator"])
            for key in ("down_channels", "up_channels"):
                if key in gspec:
                    gspec[key] = tuple(gspec[key])
            d["generator"] = GeneratorSpec(**gspec)
        if "discriminator" in d:
            dspec = dict(d["discriminator"])
            if "channels" in dspec:
                dspec["channels"] = tuple(dspec["channels"])
            d["discriminator"] = DiscriminatorSpec(**dspec)
        return cls(**d)

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def lr_at(iteration: int, cfg: TrainingConfig) -> tuple[float, float]:
    """Constant, then linear decay to zero, then zero."""
    if iteration < 0:
        raise ValueError("iteration must be nonnegative")
    if iteration < cfg.lr_const_iters:
        factor = 1.0
    else:
        done = (iteration - cfg.lr_const_iters) / cfg.lr_decay_iters
        factor = max(0.0, 1.0 - done)
    return cfg.lr_g * factor, cfg.lr_d * factor


def lambda_id_at(iteration: int, cfg: TrainingConfig) -> float:
    """Identity-mapping weight: active for the first id_active_iters only."""
    if iteration < 0:
        raise ValueError("iteration must be nonnegative")
    return cfg.lambda_id if iteration < cfg.id_active_iters else 0.0


def sample_crop(corpus: Sequence[np.ndarray], crop_frames: int, rng: np.random.Generator) -> np.ndarray:
    """Fixed-length random crop from a random utterance.

    Utterances shorter than the crop are wrap-padded (circular read)
    so short files keep their natural sampling weight.
    """
    if len(corpus) == 0:
        raise ValueError("cannot sample from an empty corpus")
    utt = corpus[int(rng.integers(len(corpus)))]
    t = utt.shape[0]
    if t >= crop_frames:
        start = int(rng.integers(t - crop_frames + 1))
        return utt[start : start + crop_frames]
    start = int(rng.integers(t))
    idx = (start + np.arange(crop_frames)) % t
    return utt[idx]


class Adam:
    """Adam over a fixed named parameter set; moments are part of the
    checkpointed state."""

    def __init__(self, params: dict[str, Tensor], beta1: float, beta2: float, eps: float):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, p in self.params.items():
            g = p.grad if p.grad is not None else 0.0
            m = self.m[k] = b1 * self.m[k] + (1.0 - b1) * g
            v = self.v[k] = b2 * self.v[k] + (1.0 - b2) * (g * g)
            update = (lr / c1) * m / (np.sqrt(v / c2) + self.eps)
            p.data = p.data - update.astype(p.data.dtype, copy=False)


@dataclass
class TrainerState:
    config: TrainingConfig
    iteration: int
    g_xy: Generator
    g_yx: Generator
    d_x: Discriminator
    d_y: Discriminator
    opt_g: Adam
    opt_d: Adam
    rng: np.random.Generator

    def models(self) -> dict[str, Generator | Discriminator]:
        return {"g_xy": self.g_xy, "g_yx": self.g_yx, "d_x": self.d_x, "d_y": self.d_y}


def init_trainer(cfg: TrainingConfig) -> TrainerState:
    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    g_xy, g_yx, d_x, d_y = init_models(
        int(seeds[0].generate_state(1)[0]), cfg.generator, cfg.discriminator
    )
    opt_g = Adam(
        _prefixed(g_xy, "g_xy") | _prefixed(g_yx, "g_yx"),
        cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
    )
    opt_d = Adam(
        _prefixed(d_x, "d_x") | _prefixed(d_y, "d_y"),
        cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps,
    )
    rng = np.random.Generator(np.random.PCG64(seeds[1]))
    return TrainerState(cfg, 0, g_xy, g_yx, d_x, d_y, opt_g, opt_d, rng)


def _prefixed(model, prefix: str) -> dict[str, Tensor]:
    return {f"{prefix}.{k}": v for k, v in model.named_parameters().items()}


def _as_image(t: Tensor) -> Tensor:
    # (B, D, T) -> (B, 1, D, T): the critic reads a one-channel texture
    b, d, n = t.shape
    return F.reshape(t, (b, 1, d, n))


def _batch_tensor(crops: np.ndarray) -> Tensor:
    # (B, T, D) float32 -> leaf tensor (B, D, T)
    arr = np.ascontiguousarray(np.transpose(crops, (0, 2, 1)).astype(np.float32, copy=False))
    return Tensor(arr)


def train_step(state: TrainerState, crops_x: np.ndarray, crops_y: np.ndarray) -> losses.LossBreakdown:
    """One alternating update; crops are (B, crop_frames, D), normalized."""
    cfg = state.config
    it = state.iteration
    lr_g, lr_d = lr_at(it, cfg)
    lam_id = lambda_id_at(it, cfg)

    x = _batch_tensor(crops_x)
    y = _batch_tensor(crops_y)

    # critics first, against detached fakes
    with no_grad():
        fake_x_detached = Tensor(state.g_yx.forward(y).data)
        fake_y_detached = Tensor(state.g_xy.forward(x).data)
    state.opt_d.zero_grad()
    state.opt_g.zero_grad()
    adv_d_x = losses.adv_loss_discriminator(
        state.d_x.forward(_as_image(x)), state.d_x.forward(_as_image(fake_x_detached))
    )
    adv_d_y = losses.adv_loss_discriminator(
        state.d_y.forward(_as_image(y)), state.d_y.forward(_as_image(fake_y_detached))
    )
    d_total = F.add(adv_d_x, adv_d_y)
    if not np.isfinite(d_total.data):
        raise TrainingDivergedError(f"iteration {it}: non-finite discriminator loss")
    d_total.backward()
    state.opt_d.step(lr_d)

    # generators jointly on the full objective
    state.opt_d.zero_grad()
    state.opt_g.zero_grad()
    fake_y = state.g_xy.forward(x)
    cyc_x = state.g_yx.forward(fake_y)
    fake_x = state.g_yx.forward(y)
    cyc_y = state.g_xy.forward(fake_x)
    adv_g_xy = losses.adv_loss_generator(state.d_y.forward(_as_image(fake_y)))
    adv_g_yx = losses.adv_loss_generator(state.d_x.forward(_as_image(fake_x)))
    cyc = losses.cycle_loss(x, cyc_x, y, cyc_y)
    id_term = None
    if lam_id > 0:
        id_term = losses.identity_loss(y, state.g_xy.forward(y), x, state.g_yx.forward(x))
    total_g = losses.generator_objective(adv_g_xy, adv_g_yx, cyc, id_term, cfg.lambda_cyc, lam_id)
    breakdown = losses.total_losses(
        adv_g_xy, adv_g_yx, adv_d_x, adv_d_y, cyc, id_term, cfg.lambda_cyc, lam_id
    )
    if not np.isfinite(breakdown.total_g):
        raise TrainingDivergedError(f"iteration {it}: non-finite generator loss: {breakdown}")
    total_g.backward()
    state.opt_g.step(lr_g)

    for name, p in {**state.opt_g.params, **state.opt_d.params}.items():
        if not np.all(np.isfinite(p.data)):
            raise TrainingDivergedError(f"iteration {it}: parameter {name!r} became non-finite")

    state.iteration += 1
    return breakdown


def train(
    cfg: TrainingConfig,
    corpus_x: Sequence[np.ndarray],
    corpus_y: Sequence[np.ndarray],
    *,
    state: TrainerState | None = None,
    on_step: Callable[[int, losses.LossBreakdown, float, float], None] | None = None,
    checkpoint_dir: str | Path | None = None,
    on_checkpoint: Callable[[TrainerState, Path | None], None] | None = None,
) -> TrainerState:
    """Run (or continue) training up to cfg.total_iters.

    Crop sampling is strictly sequential on the state RNG, so a fixed
    seed reproduces the run bit-exactly and resume equals no-restart.
    """
    if len(corpus_x) == 0 or len(corpus_y) == 0:
        raise ValueError("both corpora must be non-empty")
    if state is None:
        state = init_trainer(cfg)
    else:
        # caller-supplied config wins on resume (load_checkpoint already
        # warned if it disagrees with the stored one)
        state.config = cfg
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)

    while state.iteration < cfg.total_iters:
        lr_g, lr_d = lr_at(state.iteration, cfg)
        crops_x = np.stack(
            [sample_crop(corpus_x, cfg.crop_frames, state.rng) for _ in range(cfg.batch_size)]
        )
        crops_y = np.stack(
            [sample_crop(corpus_y, cfg.crop_frames, state.rng) for _ in range(cfg.batch_size)]
        )
        breakdown = train_step(state, crops_x, crops_y)
        if on_step is not None:
            on_step(state.iteration, breakdown, lr_g, lr_d)
        at_end = state.iteration == cfg.total_iters
        if state.iteration % cfg.checkpoint_every == 0 or at_end:
            path = None
            if ckpt_dir is not None:
                path = ckpt_dir / f"checkpoint_{state.iteration:08d}.ckpt"
                save_checkpoint(state, path)
            if on_checkpoint is not None:
                on_checkpoint(state, path)
    return state


def save_checkpoint(state: TrainerState, path: str | Path) -> None:
    """Full-state single-file checkpoint (params, moments, RNG, config)."""
    arrays: dict[str, np.ndarray] = {}
    for mname, model in state.models().items():
        for pname, arr in state_dict(model).items():
            arrays[f"params/{mname}/{pname}"] = arr
    for oname, opt in (("opt_g", state.opt_g), ("opt_d", state.opt_d)):
        for key, arr in opt.m.items():
            arrays[f"{oname}/m/{key}"] = arr
        for key, arr in opt.v.items():
            arrays[f"{oname}/v/{key}"] = arr
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "iteration": state.iteration,
        "config": state.config.to_dict(),
        "config_hash": state.config.config_hash(),
        "opt_g_t": state.opt_g.t,
        "opt_d_t": state.opt_d.t,
        "rng_state": state.rng.bit_generator.state,
    }
    storage.save_container(path, meta, arrays)


def load_checkpoint(path: str | Path, expected_config: TrainingConfig | None = None) -> TrainerState:
    """Rebuild a TrainerState bit-exactly from a checkpoint file."""
    meta, arrays = storage.load_container(path)
    if meta.get("format") != CHECKPOINT_FORMAT:
        raise storage.StorageError(f"{path}: not a checkpoint file")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise storage.StorageError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    cfg = TrainingConfig.from_dict(meta["config"])
    if expected_config is not None and expected_config.config_hash() != meta["config_hash"]:
        warnings.warn(
            f"checkpoint {path} was written under a different config "
            f"(hash {meta['config_hash'][:12]}, expected {expected_config.config_hash()[:12]})",
            stacklevel=2,
        )
    state = init_trainer(cfg)
    for mname, model in state.models().items():
        wanted = {
            k.split("/", 2)[2]: v for k, v in arrays.items() if k.startswith(f"params/{mname}/")
        }
        load_state(model, wanted)
    for oname, opt in (("opt_g", state.opt_g), ("opt_d", state.opt_d)):
        for key in opt.m:
            opt.m[key] = arrays[f"{oname}/m/{key}"].copy()
            opt.v[key] = arrays[f"{oname}/v/{key}"].copy()
    state.opt_g.t = int(meta["opt_g_t"])
    state.opt_d.t = int(meta["opt_d_t"])
    state.rng.bit_generator.state = meta["rng_state"]
    state.iteration = int(meta["iteration"])
    return state
