"""Inconsistent pixel filtering and the masked reconstruction loss."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grid import as_image, check_same_shape

DEFAULT_THRESHOLD = 30.0
SWEEP_THRESHOLDS = (20.0, 30.0, 50.0)


class Reduction(str, enum.Enum):
    SUM = "sum"
    MEAN_OVER_VALID = "mean"


class ChannelAggregate(str, enum.Enum):
    MAX = "max"
    MEAN = "mean"


@dataclass(frozen=True)
class FilterConfig:
    """Photometric threshold on the [0, 255] scale plus loss/aggregation options.

    ``max_flow`` optionally invalidates pixels whose flow magnitude exceeds it;
    it is off unless set.
    """

    threshold_z: float = DEFAULT_THRESHOLD
    reduction: Reduction = Reduction.SUM
    aggregate: ChannelAggregate = ChannelAggregate.MAX
    max_flow: float | None = None

    def __post_init__(self):
        if not self.threshold_z >= 0:
            raise DomainError(f"threshold_z must be >= 0, got {self.threshold_z}")
        if self.max_flow is not None and not self.max_flow >= 0:
            raise DomainError(f"max_flow must be >= 0, got {self.max_flow}")
        object.__setattr__(self, "reduction", Reduction(self.reduction))
        object.__setattr__(self, "aggregate", ChannelAggregate(self.aggregate))


def photometric_difference(generated, warped, aggregate=ChannelAggregate.MAX) -> np.ndarray:
    diff = np.abs(as_image(generated) - as_image(warped))
    if ChannelAggregate(aggregate) == ChannelAggregate.MAX:
        return diff.max(axis=-1)
    return diff.mean(axis=-1)


def consistency_mask(generated, warped, warp_valid, cfg: FilterConfig = FilterConfig(), flow=None) -> np.ndarray:
    """Valid where the warp is valid and the generated/warped disagreement is ``<= Z``."""
    warp_valid = np.asarray(warp_valid, dtype=bool)
    check_same_shape(generated, warped, warp_valid, names=("generated", "warped", "warp_valid"))
    diff = photometric_difference(generated, warped, cfg.aggregate)
    mask = warp_valid & (diff <= cfg.threshold_z)
    if cfg.max_flow is not None and flow is not None:
        mask &= flow.magnitude() <= cfg.max_flow
    return mask


def masked_l1(pred, target, mask, cfg: FilterConfig = FilterConfig()) -> float:
    """L1 reconstruction error restricted to ``mask``; 0 when the mask is empty."""
    pred = as_image(pred)
    target = as_image(target)
    mask = np.asarray(mask, dtype=bool)
    check_same_shape(pred, target, mask, names=("pred", "target", "mask"))
    n_valid = int(mask.sum())
    if n_valid == 0:
        return 0.0
    total = float(np.abs(pred[mask] - target[mask]).sum())
    if cfg.reduction == Reduction.SUM:
        return total
    return total / (n_valid * pred.shape[2])


def valid_fraction_sweep(generated, warped, warp_valid, thresholds=SWEEP_THRESHOLDS, aggregate=ChannelAggregate.MAX):
    """Fraction of pixels kept at each threshold, as ``{Z: fraction}``."""
    diff = photometric_difference(generated, warped, aggregate)
    warp_valid = np.asarray(warp_valid, dtype=bool)
    return {float(z): float(np.mean(warp_valid & (diff <= z))) for z in thresholds}
