"""Shared building blocks for the generator and discriminator stacks.

Normalization is GroupNorm throughout the generators so that eval-mode
forward passes are deterministic and independent of batch composition.
Discriminators use plain conv + leaky ReLU, which behaves better with the
small batches this project trains with.
"""
from __future__ import annotations

import torch
from torch import nn


def group_norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(min(8, channels), channels)


class ConvBlock(nn.Module):
    """3x3 conv + GroupNorm + leaky ReLU, stride 1."""

    def __init__(self, cin: int, cout: int, slope: float = 0.01):
        super().__init__()
        self.conv = nn.Conv2d(cin, cout, 3, padding=1)
        self.norm = group_norm(cout)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.norm(self.conv(x)))


class DownBlock(nn.Module):
    """Stride-2 4x4 conv followed by a refining 3x3 block; halves h and w."""

    def __init__(self, cin: int, cout: int, slope: float = 0.01):
        super().__init__()
        self.down = nn.Conv2d(cin, cout, 4, stride=2, padding=1)
        self.norm = group_norm(cout)
        self.act = nn.LeakyReLU(slope)
        self.refine = ConvBlock(cout, cout, slope)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.refine(self.act(self.norm(self.down(x))))


class UpBlock(nn.Module):
    """Stride-2 4x4 transpose conv; doubles h and w."""

    def __init__(self, cin: int, cout: int, slope: float = 0.01):
        super().__init__()
        self.up = nn.ConvTranspose2d(cin, cout, 4, stride=2, padding=1)
        self.norm = group_norm(cout)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.norm(self.up(x)))


class ResBlock(nn.Module):
    """Two 3x3 convs with an additive skip, constant width."""

    def __init__(self, channels: int, slope: float = 0.01):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm1 = group_norm(channels)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = group_norm(channels)
        self.act = nn.LeakyReLU(slope)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.act(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return self.act(x + h)
