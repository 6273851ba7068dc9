"""Gated-CNN generator and discriminator.

The generator is a fully convolutional 1D network over mel-cepstral
channels: a wide input gate, two stride-2 downsampling gates, a stack of
gated residual blocks, two sub-pixel upsampling gates, and a linear
output projection.  The discriminator is a strided 2D gated CNN over the
feature-by-frame plane ending in a sigmoid score (scalar or patch grid).

Every gate computes linear(x) * sigmoid(gate(x)); each branch owns its
convolution and, optionally, a pixel shuffle and an instance norm.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import functional as F
from .nn.autograd import Tensor, no_grad, parameter

INIT_STD = 0.02


@dataclass(frozen=True)
class GeneratorSpec:
    in_channels: int = 24
    base_channels: int = 128
    down_channels: tuple[int, int] = (256, 512)
    res_blocks: int = 6
    res_channels: int = 1024
    up_channels: tuple[int, int] = (1024, 512)
    input_kernel: int = 15
    down_kernel: int = 5
    res_kernel: int = 3
    up_kernel: int = 5
    output_kernel: int = 15
    shuffle: int = 2

    def __post_init__(self):
        for k in (self.input_kernel, self.down_kernel, self.res_kernel, self.up_kernel, self.output_kernel):
            if k % 2 == 0:
                raise ValueError("kernel sizes must be odd (same padding)")
        for c in self.up_channels:
            if c % self.shuffle != 0:
                raise ValueError("upsampling channels must be divisible by the shuffle factor")
        if len(self.down_channels) != 2 or len(self.up_channels) != 2:
            raise ValueError("expected exactly two downsampling and two upsampling stages")

    @classmethod
    def tiny(cls) -> "GeneratorSpec":
        """Laptop-scale variant for smoke training and CI."""
        return cls(
            base_channels=16,
            down_channels=(32, 32),
            res_blocks=2,
            res_channels=64,
            up_channels=(64, 32),
        )


@dataclass(frozen=True)
class DiscriminatorSpec:
    input_height: int = 24
    input_width: int = 128
    channels: tuple[int, ...] = (128, 128, 256, 512)
    kernel: int = 3
    patch_output: bool = False

    def __post_init__(self):
        if len(self.channels) < 2:
            raise ValueError("discriminator needs at least two conv stages")

    @classmethod
    def tiny(cls, patch_output: bool = False) -> "DiscriminatorSpec":
        return cls(channels=(16, 16, 32, 32), patch_output=patch_output)


def _norm_params(channels: int, dtype) -> tuple[Tensor, Tensor]:
    return parameter(np.ones(channels, dtype=dtype)), parameter(np.zeros(channels, dtype=dtype))


class Conv:
    """Plain same-padded convolution with bias (1D or 2D by kernel rank)."""

    def __init__(self, rng, in_ch, out_ch, kernel, *, stride=1, two_d=False, dtype=np.float32):
        shape = (out_ch, in_ch, kernel, kernel) if two_d else (out_ch, in_ch, kernel)
        self.w = parameter(rng.normal(0.0, INIT_STD, shape).astype(dtype))
        self.b = parameter(np.zeros(out_ch, dtype=dtype))
        self.stride = stride
        self.two_d = two_d

    def forward(self, x: Tensor) -> Tensor:
        if self.two_d:
            return F.conv2d(x, self.w, self.b, stride=(self.stride, self.stride))
        return F.conv1d(x, self.w, self.b, stride=self.stride)

    def params(self) -> dict[str, Tensor]:
        return {"w": self.w, "b": self.b}


class GluLayer:
    """Gated conv block: out = lin(x) * sigmoid(gate(x)).

    Each branch applies conv -> optional pixel shuffle -> optional
    instance norm; the two branches always share their layout.
    """

    def __init__(self, rng, in_ch, out_ch, kernel, *, stride=1, shuffle=1,
                 norm=True, two_d=False, dtype=np.float32):
        if shuffle > 1 and two_d:
            raise ValueError("pixel shuffle is only wired for the 1D path")
        if shuffle > 1 and out_ch % shuffle != 0:
            raise ValueError("output channels not divisible by shuffle factor")
        self.lin = Conv(rng, in_ch, out_ch, kernel, stride=stride, two_d=two_d, dtype=dtype)
        self.gate = Conv(rng, in_ch, out_ch, kernel, stride=stride, two_d=two_d, dtype=dtype)
        self.shuffle = shuffle
        eff_ch = out_ch // shuffle if shuffle > 1 else out_ch
        if norm:
            self.lin_scale, self.lin_shift = _norm_params(eff_ch, dtype)
            self.gate_scale, self.gate_shift = _norm_params(eff_ch, dtype)
        else:
            self.lin_scale = self.lin_shift = self.gate_scale = self.gate_shift = None

    def _branch(self, x, conv, scale, shift):
        h = conv.forward(x)
        if self.shuffle > 1:
            h = F.pixel_shuffle_1d(h, self.shuffle)
        if scale is not None:
            h = F.instance_norm(h, scale, shift)
        return h

    def forward(self, x: Tensor) -> Tensor:
        lin = self._branch(x, self.lin, self.lin_scale, self.lin_shift)
        gate = self._branch(x, self.gate, self.gate_scale, self.gate_shift)
        return F.mul(lin, F.sigmoid(gate))

    def params(self) -> dict[str, Tensor]:
        out = {f"lin.{k}": v for k, v in self.lin.params().items()}
        out.update({f"gate.{k}": v for k, v in self.gate.params().items()})
        if self.lin_scale is not None:
            out.update(
                {
                    "lin.norm.scale": self.lin_scale,
                    "lin.norm.shift": self.lin_shift,
                    "gate.norm.scale": self.gate_scale,
                    "gate.norm.shift": self.gate_shift,
                }
            )
        return out


def glu_forward(x: Tensor, layer: GluLayer) -> Tensor:
    """Functional entry point for a gated conv block."""
    return layer.forward(x)


class ResidualBlock:
    """Gated conv to a wide hidden width, projection back, skip add."""

    def __init__(self, rng, channels, hidden, kernel, dtype=np.float32):
        self.glu = GluLayer(rng, channels, hidden, kernel, dtype=dtype)
        self.proj = Conv(rng, hidden, channels, kernel, dtype=dtype)
        self.proj_scale, self.proj_shift = _norm_params(channels, dtype)

    def forward(self, x: Tensor) -> Tensor:
        h = self.glu.forward(x)
        h = self.proj.forward(h)
        h = F.instance_norm(h, self.proj_scale, self.proj_shift)
        return F.add(x, h)

    def params(self) -> dict[str, Tensor]:
        out = {f"glu.{k}": v for k, v in self.glu.params().items()}
        out.update({f"proj.{k}": v for k, v in self.proj.params().items()})
        out.update({"proj.norm.scale": self.proj_scale, "proj.norm.shift": self.proj_shift})
        return out


class Generator:
    def __init__(self, spec: GeneratorSpec, rng: np.random.Generator, dtype=np.float32):
        self.spec = spec
        d1, d2 = spec.down_channels
        u1, u2 = spec.up_channels
        r = spec.shuffle
        self.inp = GluLayer(rng, spec.in_channels, spec.base_channels, spec.input_kernel,
                            norm=False, dtype=dtype)
        self.down = [
            GluLayer(rng, spec.base_channels, d1, spec.down_kernel, stride=2, dtype=dtype),
            GluLayer(rng, d1, d2, spec.down_kernel, stride=2, dtype=dtype),
        ]
        self.res = [
            ResidualBlock(rng, d2, spec.res_channels, spec.res_kernel, dtype=dtype)
            for _ in range(spec.res_blocks)
        ]
        self.up = [
            GluLayer(rng, d2, u1, spec.up_kernel, shuffle=r, dtype=dtype),
            GluLayer(rng, u1 // r, u2, spec.up_kernel, shuffle=r, dtype=dtype),
        ]
        self.out = Conv(rng, u2 // r, spec.in_channels, spec.output_kernel, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        """x: (B, in_channels, T) with T divisible by 4; output same shape."""
        t = x.shape[2]
        if t % 4 != 0:
            raise ValueError(f"generator input length {t} not divisible by 4; pad first")
        h = self.inp.forward(x)
        for layer in self.down:
            h = layer.forward(h)
        for block in self.res:
            h = block.forward(h)
        for layer in self.up:
            h = layer.forward(h)
        return self.out.forward(h)

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        out.update({f"inp.{k}": v for k, v in self.inp.params().items()})
        for i, layer in enumerate(self.down):
            out.update({f"down{i}.{k}": v for k, v in layer.params().items()})
        for i, block in enumerate(self.res):
            out.update({f"res{i}.{k}": v for k, v in block.params().items()})
        for i, layer in enumerate(self.up):
            out.update({f"up{i}.{k}": v for k, v in layer.params().items()})
        out.update({f"out.{k}": v for k, v in self.out.params().items()})
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())


class Discriminator:
    def __init__(self, spec: DiscriminatorSpec, rng: np.random.Generator, dtype=np.float32):
        self.spec = spec
        chans = spec.channels
        self.stages = [GluLayer(rng, 1, chans[0], spec.kernel, norm=False, two_d=True, dtype=dtype)]
        for cin, cout in zip(chans[:-1], chans[1:]):
            self.stages.append(
                GluLayer(rng, cin, cout, spec.kernel, stride=2, two_d=True, dtype=dtype)
            )
        n_down = len(chans) - 1
        h_out = spec.input_height
        w_out = spec.input_width
        for _ in range(n_down):
            h_out = -(-h_out // 2)
            w_out = -(-w_out // 2)
        if spec.patch_output:
            self.head = Conv(rng, chans[-1], 1, 1, two_d=True, dtype=dtype)
            self.fc_w = self.fc_b = None
        else:
            n_in = chans[-1] * h_out * w_out
            self.fc_w = parameter(rng.normal(0.0, INIT_STD, (n_in, 1)).astype(dtype))
            self.fc_b = parameter(np.zeros(1, dtype=dtype))
            self.head = None
        self._min_hw = 2 ** n_down

    def forward(self, x: Tensor) -> Tensor:
        """x: (B, 1, H, W) -> sigmoid scores, (B, 1) or (B, 1, H', W')."""
        _, c, h, w = x.shape
        if c != 1:
            raise ValueError("discriminator expects a single input channel")
        if self.fc_w is not None:
            if (h, w) != (self.spec.input_height, self.spec.input_width):
                raise ValueError(
                    f"discriminator patch must be {self.spec.input_height}x{self.spec.input_width}, got {h}x{w}"
                )
        elif h < self._min_hw or w < self._min_hw:
            raise ValueError(f"patch {h}x{w} below the {self._min_hw}-pixel receptive floor")
        for stage in self.stages:
            x = stage.forward(x)
        if self.head is not None:
            return F.sigmoid(self.head.forward(x))
        flat = F.reshape(x, (x.shape[0], -1))
        return F.sigmoid(F.linear(flat, self.fc_w, self.fc_b))

    def named_parameters(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, stage in enumerate(self.stages):
            out.update({f"stage{i}.{k}": v for k, v in stage.params().items()})
        if self.head is not None:
            out.update({f"head.{k}": v for k, v in self.head.params().items()})
        else:
            out.update({"fc.w": self.fc_w, "fc.b": self.fc_b})
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())


def init_models(
    seed: int,
    gen_spec: GeneratorSpec | None = None,
    disc_spec: DiscriminatorSpec | None = None,
    dtype=np.float32,
) -> tuple[Generator, Generator, Discriminator, Discriminator]:
    """Deterministically initialize (g_xy, g_yx, d_x, d_y) from one seed."""
    gen_spec = gen_spec or GeneratorSpec()
    disc_spec = disc_spec or DiscriminatorSpec()
    seeds = np.random.SeedSequence(seed).spawn(4)
    g_xy = Generator(gen_spec, np.random.Generator(np.random.PCG64(seeds[0])), dtype)
    g_yx = Generator(gen_spec, np.random.Generator(np.random.PCG64(seeds[1])), dtype)
    d_x = Discriminator(disc_spec, np.random.Generator(np.random.PCG64(seeds[2])), dtype)
    d_y = Discriminator(disc_spec, np.random.Generator(np.random.PCG64(seeds[3])), dtype)
    return g_xy, g_yx, d_x, d_y


def generator_forward(gen: Generator, frames: np.ndarray) -> np.ndarray:
    """Map a normalized (T, D) feature matrix through the generator.

    Inference-only convenience: no graph is recorded.  T must be a
    multiple of 4; callers pad (see cyclevc.conversion).
    """
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ValueError("expected a (T, D) matrix")
    x = np.ascontiguousarray(frames.T[None].astype(np.float32))
    with no_grad():
        y = gen.forward(Tensor(x))
    return y.data[0].T


def discriminator_forward(disc: Discriminator, patch: np.ndarray) -> np.ndarray:
    """Score a (H, W) patch (or (B, 1, H, W) batch); inference-only."""
    patch = np.asarray(patch, dtype=np.float32)
    if patch.ndim == 2:
        patch = patch[None, None]
    with no_grad():
        s = disc.forward(Tensor(patch))
    return s.data


def state_dict(model: Generator | Discriminator) -> dict[str, np.ndarray]:
    return {k: v.data for k, v in model.named_parameters().items()}


def load_state(model: Generator | Discriminator, arrays: dict[str, np.ndarray]) -> None:
    """Copy arrays into the model's parameters, validating names/shapes."""
    params = model.named_parameters()
    missing = sorted(set(params) - set(arrays))
    extra = sorted(set(arrays) - set(params))
    if missing or extra:
        raise ValueError(f"parameter name mismatch: missing={missing}, unexpected={extra}")
    for name, tensor in params.items():
        arr = np.asarray(arrays[name])
        if arr.shape != tensor.data.shape:
            raise ValueError(
                f"shape mismatch for {name!r}: file {arr.shape}, model {tensor.data.shape}"
            )
        tensor.data = arr.astype(tensor.data.dtype, copy=True)


MODEL_FILE_FORMAT = "cyclevc-model"
MODEL_FILE_VERSION = 1


def save_model(path, model: Generator | Discriminator, extra_meta: dict | None = None) -> None:
    from . import storage

    meta = {"format": MODEL_FILE_FORMAT, "version": MODEL_FILE_VERSION}
    if extra_meta:
        meta.update(extra_meta)
    storage.save_container(path, meta, state_dict(model))


def load_model_arrays(path) -> tuple[dict, dict[str, np.ndarray]]:
    from . import storage

    meta, arrays = storage.load_container(path)
    if meta.get("format") != MODEL_FILE_FORMAT:
        raise storage.StorageError(f"{path}: not a model file")
    return meta, arrays
