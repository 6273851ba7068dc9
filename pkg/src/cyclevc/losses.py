"""Objective terms for the two-direction adversarial training.

Least-squares adversarial losses code real as 1 and fake as 0.  The L1
terms (cycle consistency, identity mapping) are element means, not sums,
so the trade-off weights stay meaningful if the crop length changes.
All functions accept Tensors (differentiable path) or array-likes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import functional as F
from .nn.autograd import Tensor


@dataclass(frozen=True)
class LossBreakdown:
    adv_g_xy: float
    adv_g_yx: float
    adv_d_x: float
    adv_d_y: float
    cyc: float
    id: float
    total_g: float
    total_d_x: float
    total_d_y: float

    def as_dict(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _nonempty(t: Tensor, what: str) -> Tensor:
    if t.data.size == 0:
        raise ValueError(f"{what}: empty score set")
    return t


def adv_loss_discriminator(real_scores, fake_scores) -> Tensor:
    """mean((real - 1)^2) + mean(fake^2); zero only for a perfect critic."""
    real = _nonempty(F.as_tensor(real_scores), "adv_loss_discriminator")
    fake = _nonempty(F.as_tensor(fake_scores), "adv_loss_discriminator")
    return F.add(F.mean(F.square(real - 1.0)), F.mean(F.square(fake)))


def adv_loss_generator(fake_scores) -> Tensor:
    """mean((fake - 1)^2); zero when the critic is fully fooled."""
    fake = _nonempty(F.as_tensor(fake_scores), "adv_loss_generator")
    return F.mean(F.square(fake - 1.0))


def _l1(a, b, what: str) -> Tensor:
    a, b = F.as_tensor(a), F.as_tensor(b)
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
    return F.mean(F.absolute(F.sub(a, b)))


def cycle_loss(x, x_roundtrip, y, y_roundtrip) -> Tensor:
    """L1 between each input and its two-generator round trip, both
    directions summed."""
    return F.add(_l1(x, x_roundtrip, "cycle_loss"), _l1(y, y_roundtrip, "cycle_loss"))


def identity_loss(y, g_xy_of_y, x, g_yx_of_x) -> Tensor:
    """L1 penalty for each generator deviating from identity on inputs
    already in its target domain."""
    return F.add(_l1(g_xy_of_y, y, "identity_loss"), _l1(g_yx_of_x, x, "identity_loss"))


def generator_objective(adv_g_xy, adv_g_yx, cyc, id_term, lambda_cyc: float, lambda_id: float) -> Tensor:
    """Differentiable total generator loss (both directions jointly)."""
    _check_lambdas(lambda_cyc, lambda_id)
    total = F.add(F.as_tensor(adv_g_xy), F.as_tensor(adv_g_yx))
    total = F.add(total, F.mul_scalar(F.as_tensor(cyc), lambda_cyc))
    if id_term is not None:
        total = F.add(total, F.mul_scalar(F.as_tensor(id_term), lambda_id))
    return total


def total_losses(
    adv_g_xy, adv_g_yx, adv_d_x, adv_d_y, cyc, id_term, lambda_cyc: float, lambda_id: float
) -> LossBreakdown:
    """Assemble the per-step scalar report from the individual terms."""
    _check_lambdas(lambda_cyc, lambda_id)
    parts = [float(v) for v in (adv_g_xy, adv_g_yx, adv_d_x, adv_d_y, cyc)]
    idv = 0.0 if id_term is None else float(id_term)
    total_g = parts[0] + parts[1] + lambda_cyc * parts[4] + lambda_id * idv
    return LossBreakdown(
        adv_g_xy=parts[0],
        adv_g_yx=parts[1],
        adv_d_x=parts[2],
        adv_d_y=parts[3],
        cyc=parts[4],
        id=idv,
        total_g=total_g,
        total_d_x=parts[2],
        total_d_y=parts[3],
    )


def _check_lambdas(lambda_cyc: float, lambda_id: float) -> None:
    if lambda_cyc < 0 or lambda_id < 0:
        raise ValueError("loss trade-off weights must be nonnegative")
    if not (np.isfinite(lambda_cyc) and np.isfinite(lambda_id)):
        raise ValueError("loss trade-off weights must be finite")
