"""Stage-2 high-fidelity renderer.

HRDecoder maps a base face concatenated with its landmark sketch to a
sharper face at the same, double, or quadruple resolution. The network is
fully convolutional: conv_base refines at input resolution, up_conv holds
zero, one, or two transpose-conv stages depending on the scale, and
output_block projects to RGB.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from ..errors import ShapeMismatch
from .base_generator import BaseDiscriminator
from .layers import ConvBlock, ResBlock, UpBlock


@dataclass(frozen=True)
class HRVariant:
    """Output scale of the HR stage; transpose stage count follows from it."""

    scale: int = 1

    def __post_init__(self) -> None:
        if self.scale not in (1, 2, 4):
            raise ValueError(f"scale must be 1, 2 or 4, got {self.scale}")

    @property
    def transpose_stages(self) -> int:
        return {1: 0, 2: 1, 4: 2}[self.scale]


class HRDecoder(nn.Module):
    """conv_base + up_conv + output_block over a (base face, sketch) pair."""

    def __init__(self, variant: HRVariant = HRVariant(1), width: int = 64):
        super().__init__()
        self.variant = variant
        self.width = width
        self.head = ConvBlock(4, width)
        self.conv_base = nn.Sequential(*[ResBlock(width) for _ in range(3)])
        stages = []
        w = width
        for _ in range(variant.transpose_stages):
            # Width tapers with each doubling to keep the large feature maps
            # affordable on a CPU.
            w_next = max(16, w // 2)
            stages.append(UpBlock(w, w_next))
            w = w_next
        self.up_conv = nn.Sequential(*stages)
        self.output_block = nn.Conv2d(w, 3, 3, padding=1)

    def forward(self, base: torch.Tensor, sketch: torch.Tensor) -> torch.Tensor:
        squeeze = base.dim() == 3
        if squeeze:
            base, sketch = base[None], sketch[None]
        if base.shape[-2:] != sketch.shape[-2:]:
            raise ShapeMismatch(
                f"base {tuple(base.shape[-2:])} vs sketch "
                f"{tuple(sketch.shape[-2:])}")
        if base.shape[-3] != 3 or sketch.shape[-3] != 1:
            raise ShapeMismatch(
                f"need 3-channel base and 1-channel sketch, got "
                f"{base.shape[-3]} and {sketch.shape[-3]}")
        x = self.head(torch.cat([base, sketch], dim=-3))
        x = self.up_conv(self.conv_base(x))
        out = torch.sigmoid(self.output_block(x))
        return out[0] if squeeze else out


class HRDiscriminator(BaseDiscriminator):
    """Same stack as the base discriminator, sized for the variant output."""

    def __init__(self, input_size: int, variant: HRVariant, width: int = 32):
        super().__init__(input_size * variant.scale, width)
        self.variant = variant
