"""Stage-1 base face generator.

The generator encodes a reference face concatenated with a lower-half-masked
target face into a four-level latent pyramid, modulates every level with a
convolution whose kernel and bias are emitted by an audio-conditioned
hypernetwork, and decodes the result back to an image. The emitted kernels
are activations, not parameters: they change with every audio chunk and are
never stored in checkpoints.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from ..config import Profile
from ..errors import ShapeMismatch, WeightShapeMismatch
from .layers import ConvBlock, DownBlock, UpBlock


@dataclass
class LatentPyramid:
    """Four feature maps, each level half the spatial size of the previous."""

    levels: list[torch.Tensor] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.levels) != 4:
            raise ShapeMismatch(f"pyramid needs 4 levels, got {len(self.levels)}")
        for a, b in zip(self.levels, self.levels[1:]):
            if a.shape[-1] != 2 * b.shape[-1] or a.shape[-2] != 2 * b.shape[-2]:
                raise ShapeMismatch(
                    f"levels must halve: {a.shape} then {b.shape}")

    @property
    def channels(self) -> tuple[int, ...]:
        return tuple(f.shape[1] for f in self.levels)


@dataclass
class AudioFeatureSet:
    """Four audio feature maps plus their pooled concatenation."""

    levels: list[torch.Tensor]
    pooled: torch.Tensor  # (B, D)


@dataclass
class HyperWeightSet:
    """Per-level generated conv weights: flat kernels (B, c*c*k*k) and
    biases (B, c)."""

    kernels: list[torch.Tensor]
    biases: list[torch.Tensor]
    kernel_size: int = 1

    def counts(self) -> list[tuple[int, int]]:
        return [(int(k.shape[-1]), int(b.shape[-1]))
                for k, b in zip(self.kernels, self.biases)]


class FaceEncoder(nn.Module):
    """6-channel face input (reference + masked) to a 4-level pyramid."""

    def __init__(self, profile: Profile):
        super().__init__()
        self.profile = profile
        widths = profile.enc_channels
        blocks = []
        cin = 6
        for cout in widths:
            blocks.append(DownBlock(cin, cout))
            cin = cout
        self.blocks = nn.ModuleList(blocks)

    def forward(self, ref: torch.Tensor, masked: torch.Tensor) -> LatentPyramid:
        if ref.shape != masked.shape:
            raise ShapeMismatch(
                f"reference {tuple(ref.shape)} vs masked {tuple(masked.shape)}")
        s = self.profile.face_size
        if ref.shape[-3:] != (3, s, s):
            raise ShapeMismatch(
                f"expected (3, {s}, {s}) faces, got {tuple(ref.shape[-3:])}")
        x = torch.cat([ref, masked], dim=-3)
        if x.dim() == 3:
            x = x[None]
        levels = []
        for block in self.blocks:
            x = block(x)
            levels.append(x)
        return LatentPyramid(levels)


class AudioEncoder(nn.Module):
    """Mel chunk (1, 16, 80) to four feature maps and a pooled vector.

    The pooled vector is the concatenation of the global averages of all
    four maps; the channel widths are chosen so its length equals the
    profile's pooled dim.
    """

    def __init__(self, profile: Profile):
        super().__init__()
        self.profile = profile
        c1, _, c3, c4 = profile.enc_channels
        widths = (2 * c1, 2 * c1, c3, c4)
        assert sum(widths) == profile.audio_pooled_dim
        self.block0 = ConvBlock(1, widths[0])
        self.blocks = nn.ModuleList(
            DownBlock(widths[i], widths[i + 1]) for i in range(3))

    def forward(self, chunk: torch.Tensor) -> AudioFeatureSet:
        if chunk.dim() == 2:
            chunk = chunk[None, None]
        elif chunk.dim() == 3:
            chunk = chunk[:, None]
        if chunk.shape[-2:] != (16, 80) or chunk.shape[-3] != 1:
            raise ShapeMismatch(
                f"expected (1, 16, 80) mel chunks, got {tuple(chunk.shape[-3:])}")
        levels = [self.block0(chunk)]
        for block in self.blocks:
            levels.append(block(levels[-1]))
        pooled = torch.cat([f.mean(dim=(-2, -1)) for f in levels], dim=-1)
        return AudioFeatureSet(levels, pooled)


def _identity_kernel_flat(channels: int, k: int) -> torch.Tensor:
    """Flattened kernel that makes a k x k conv the identity map."""
    w = torch.zeros(channels, channels, k, k)
    for c in range(channels):
        w[c, c, k // 2, k // 2] = 1.0
    return w.reshape(-1)


class HyperNet(nn.Module):
    """MLP from the pooled audio vector to per-level kernels and biases.

    Kernel heads start at the identity kernel (bias init) with tiny random
    weights, so an untrained generator begins as a pass-through and the
    audio path grows in during training.
    """

    def __init__(self, profile: Profile):
        super().__init__()
        self.profile = profile
        k = profile.hyperconv_kernel
        hidden = profile.hyper_hidden_dim
        self.trunk = nn.Sequential(
            nn.Linear(profile.audio_pooled_dim, hidden), nn.LeakyReLU(0.01),
            nn.Linear(hidden, hidden), nn.LeakyReLU(0.01))
        self.kernel_heads = nn.ModuleList()
        self.bias_heads = nn.ModuleList()
        for c in profile.enc_channels:
            kh = nn.Linear(hidden, c * c * k * k)
            nn.init.normal_(kh.weight, std=1e-3)
            with torch.no_grad():
                kh.bias.copy_(_identity_kernel_flat(c, k))
            bh = nn.Linear(hidden, c)
            nn.init.normal_(bh.weight, std=1e-3)
            nn.init.zeros_(bh.bias)
            self.kernel_heads.append(kh)
            self.bias_heads.append(bh)

    def forward(self, audio: AudioFeatureSet) -> HyperWeightSet:
        h = self.trunk(audio.pooled)
        kernels = [head(h) for head in self.kernel_heads]
        biases = [head(h) for head in self.bias_heads]
        return HyperWeightSet(kernels, biases, self.profile.hyperconv_kernel)


def apply_hyperconv(pyramid: LatentPyramid, theta: HyperWeightSet,
                    activation: str = "leaky_relu") -> LatentPyramid:
    """Convolve each pyramid level with its per-sample generated kernel.

    The batched per-sample convolution is expressed as a single grouped
    convolution: samples become groups, so no python-level loop over the
    batch is needed.
    """
    k = theta.kernel_size
    out_levels = []
    for x, kern, bias in zip(pyramid.levels, theta.kernels, theta.biases):
        b, c, h, w = x.shape
        if kern.shape[-1] != c * c * k * k:
            raise WeightShapeMismatch(
                f"kernel length {kern.shape[-1]} != {c}^2*{k}^2")
        if bias.shape[-1] != c:
            raise WeightShapeMismatch(f"bias length {bias.shape[-1]} != {c}")
        if kern.dim() == 1:
            kern = kern[None].expand(b, -1)
        if bias.dim() == 1:
            bias = bias[None].expand(b, -1)
        weight = kern.reshape(b * c, c, k, k)
        y = F.conv2d(x.reshape(1, b * c, h, w), weight,
                     bias=bias.reshape(b * c), padding=k // 2, groups=b)
        y = y.reshape(b, c, h, w)
        if activation == "leaky_relu":
            y = F.leaky_relu(y, 0.01)
        elif activation != "linear":
            raise ValueError(f"unknown activation {activation!r}")
        out_levels.append(y)
    return LatentPyramid(out_levels)


class FaceDecoder(nn.Module):
    """Skip-connected decoder from a 4-level pyramid back to an image."""

    def __init__(self, profile: Profile):
        super().__init__()
        c1, c2, c3, c4 = profile.enc_channels
        self.bottleneck = ConvBlock(c4, c4)
        self.up3 = UpBlock(c4, c3)
        self.mix3 = ConvBlock(2 * c3, c3)
        self.up2 = UpBlock(c3, c2)
        self.mix2 = ConvBlock(2 * c2, c2)
        self.up1 = UpBlock(c2, c1)
        self.mix1 = ConvBlock(2 * c1, c1)
        self.up0 = UpBlock(c1, c1)
        self.out = nn.Conv2d(c1, 3, 3, padding=1)

    def forward(self, pyramid: LatentPyramid) -> torch.Tensor:
        f0, f1, f2, f3 = pyramid.levels
        x = self.bottleneck(f3)
        x = self.mix3(torch.cat([self.up3(x), f2], dim=1))
        x = self.mix2(torch.cat([self.up2(x), f1], dim=1))
        x = self.mix1(torch.cat([self.up1(x), f0], dim=1))
        return torch.sigmoid(self.out(self.up0(x)))


class BaseGenerator(nn.Module):
    """Full stage-1 generator: encode, hyper-modulate, decode."""

    def __init__(self, profile: Profile):
        super().__init__()
        self.profile = profile
        self.face_encoder = FaceEncoder(profile)
        self.audio_encoder = AudioEncoder(profile)
        self.hyper_net = HyperNet(profile)
        self.face_decoder = FaceDecoder(profile)

    def encode_face(self, ref, masked) -> LatentPyramid:
        return self.face_encoder(ref, masked)

    def encode_audio(self, chunk) -> AudioFeatureSet:
        return self.audio_encoder(chunk)

    def generate_hyper_weights(self, audio: AudioFeatureSet) -> HyperWeightSet:
        return self.hyper_net(audio)

    def decode_face(self, pyramid: LatentPyramid) -> torch.Tensor:
        return self.face_decoder(pyramid)

    def forward(self, ref: torch.Tensor, masked: torch.Tensor,
                chunk: torch.Tensor, hyper_off: bool = False) -> torch.Tensor:
        pyramid = self.encode_face(ref, masked)
        if not hyper_off:
            theta = self.generate_hyper_weights(self.encode_audio(chunk))
            pyramid = apply_hyperconv(pyramid, theta)
        return self.decode_face(pyramid)

    generate_base = forward


class BaseDiscriminator(nn.Module):
    """Quality discriminator: face in, realness probability out.

    No normalization layers, so per-item scores are independent of batch
    composition.
    """

    def __init__(self, size: int, width: int = 32):
        super().__init__()
        self.size = size
        layers = []
        cin, cout, s = 3, width, size
        while s > 4:
            layers += [nn.Conv2d(cin, cout, 4, stride=2, padding=1),
                       nn.LeakyReLU(0.2)]
            cin, cout, s = cout, min(2 * cout, 256), s // 2
        self.features = nn.Sequential(*layers)
        self.head = nn.Linear(cin, 1)

    def forward(self, face: torch.Tensor) -> torch.Tensor:
        if face.dim() == 3:
            face = face[None]
        if face.shape[-3:] != (3, self.size, self.size):
            raise ShapeMismatch(
                f"expected (3, {self.size}, {self.size}), got "
                f"{tuple(face.shape[-3:])}")
        h = self.features(face).mean(dim=(-2, -1))
        return torch.sigmoid(self.head(h)).squeeze(-1)
