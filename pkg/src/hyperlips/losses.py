"""Training objectives for both stages, as pure functions of tensors.

The adversarial pair follows one fixed sign convention: minimizing
disc_loss pushes D(real) toward 1 and D(fake) toward 0, while minimizing
adv_loss pushes D(fake) toward 1. Probabilities and cosines are clamped
before any log so every loss stays finite.

Perceptual terms go through an extractor interface. The production binding
is a pre-trained VGG16; the default "tiny" binding is a three-layer conv
stack with fixed seeded random weights, which keeps tests deterministic and
offline while exercising identical code paths.
"""
from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import nn

from .config import LossWeights
from .errors import EmptyLipRegion, ExtractorUnavailable
from .faceprep import LipRegion
from .models.sync_expert import SyncExpert, sync_distance

PROB_EPS = 1e-7


class TinyPerceptualExtractor(nn.Module):
    """Fixed random-weight conv feature extractor for offline testing.

    Three conv stages (stride 1, 2, 2) with seeded weights stored as
    buffers, so construction is deterministic and nothing here ever trains.
    """

    def __init__(self, seed: int = 0):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        shapes = [(8, 3, 3, 3), (16, 8, 3, 3), (32, 16, 3, 3)]
        self.strides = (1, 2, 2)
        for i, shape in enumerate(shapes):
            fan_in = shape[1] * shape[2] * shape[3]
            w = torch.randn(shape, generator=g) * math.sqrt(2.0 / fan_in)
            self.register_buffer(f"w{i}", w)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        for i, stride in enumerate(self.strides):
            w = getattr(self, f"w{i}")
            x = F.relu(F.conv2d(x, w.to(x.dtype), stride=stride, padding=1))
            feats.append(x)
        return feats


class VGGExtractor(nn.Module):
    """Pre-trained VGG16 conv features at the five relu stage outputs."""

    SLICES = (4, 9, 16, 23, 30)

    def __init__(self, features: nn.Module):
        super().__init__()
        self.features = features.eval()
        for p in self.features.parameters():
            p.requires_grad_(False)
        self.register_buffer(
            "mean", torch.tensor([0.485, 0.456, 0.406]).view(1, 3, 1, 1))
        self.register_buffer(
            "std", torch.tensor([0.229, 0.224, 0.225]).view(1, 3, 1, 1))

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = (x - self.mean) / self.std
        feats = []
        start = 0
        for end in self.SLICES:
            for layer in list(self.features)[start:end]:
                x = layer(x)
            feats.append(x)
            start = end
        return feats


def get_extractor(name: str = "tiny") -> nn.Module:
    if name == "tiny":
        return TinyPerceptualExtractor()
    if name == "vgg16":
        try:
            from torchvision import models
            weights = models.VGG16_Weights.IMAGENET1K_V1
            vgg = models.vgg16(weights=weights).features
        except Exception as exc:
            raise ExtractorUnavailable(
                f"vgg16 binding unavailable: {exc}") from exc
        return VGGExtractor(vgg)
    raise ValueError(f"unknown extractor {name!r}")


def _clamp_prob(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(PROB_EPS, 1.0 - PROB_EPS)


def disc_loss(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Discriminator objective; its minimum is at D(real)=1, D(fake)=0."""
    return torch.log(1.0 - _clamp_prob(d_real)).mean() \
        + torch.log(_clamp_prob(d_fake)).mean()


def adv_loss(d_fake: torch.Tensor) -> torch.Tensor:
    """Generator-side adversarial term; minimized when D(fake) -> 1."""
    return torch.log(1.0 - _clamp_prob(d_fake)).mean()


def recon_l1(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    return (x - y).abs().mean()


def _unit_normalize(feat: torch.Tensor) -> torch.Tensor:
    return feat / feat.norm(dim=1, keepdim=True).clamp_min(1e-10)


def lpips_loss(x: torch.Tensor, y: torch.Tensor,
               extractor: nn.Module) -> torch.Tensor:
    """Unit-normalized feature distance, uniform layer weights.

    Per layer: channel-normalize both feature maps, sum squared differences
    over channels, average spatially; the layer values are summed and the
    batch is averaged.
    """
    if x.dim() == 3:
        x, y = x[None], y[None]
    total = None
    for fx, fy in zip(extractor(x), extractor(y)):
        d = (_unit_normalize(fx) - _unit_normalize(fy)).pow(2).sum(dim=1)
        term = d.mean(dim=(-2, -1))
        total = term if total is None else total + term
    return total.mean()


def perceptual_l1(x: torch.Tensor, y: torch.Tensor,
                  extractor: nn.Module) -> torch.Tensor:
    """Plain L1 between extractor feature maps, summed over layers."""
    if x.dim() == 3:
        x, y = x[None], y[None]
    total = None
    for fx, fy in zip(extractor(x), extractor(y)):
        term = (fx - fy).abs().mean()
        total = term if total is None else total + term
    return total


def sync_loss(chunks: torch.Tensor, windows: torch.Tensor,
              expert: SyncExpert) -> torch.Tensor:
    """Mean -log cosine between audio and video sync embeddings."""
    f_a = expert.embed_audio(chunks)
    f_v = expert.embed_video(windows)
    d = sync_distance(f_a, f_v).clamp(PROB_EPS, 1.0)
    return -torch.log(d).mean()


def total_base(components: dict[str, torch.Tensor],
               w: LossWeights | None = None) -> torch.Tensor:
    w = w or LossWeights()
    return w.base_adv * components["adv"] + w.base_recon * components["recon"] \
        + w.base_lpips * components["lpips"] + w.base_sync * components["sync"]


def total_hr(components: dict[str, torch.Tensor],
             w: LossWeights | None = None) -> torch.Tensor:
    w = w or LossWeights()
    return w.hr_adv * components["adv"] \
        + w.hr_perceptual * components["perceptual"] \
        + w.hr_recon * components["recon"] + w.hr_lip * components["lip"]


def lip_loss(hr: torch.Tensor, gt: torch.Tensor, region: LipRegion,
             extractor: nn.Module) -> torch.Tensor:
    """Lip-focused term: LPIPS on the lip crop plus a masked L1.

    The region may come from landmarks at a different resolution than the
    images; box and mask are rescaled to match when they disagree.
    """
    if hr.dim() == 3:
        hr, gt = hr[None], gt[None]
    h, w = hr.shape[-2:]
    mask = torch.as_tensor(region.mask, dtype=hr.dtype, device=hr.device)
    box = region.box
    if mask.shape != (h, w):
        sy = h / mask.shape[0]
        sx = w / mask.shape[1]
        mask = F.interpolate(mask[None, None], size=(h, w), mode="nearest")[0, 0]
        box = type(box)(int(round(box.x * sx)), int(round(box.y * sy)),
                        max(1, int(round(box.w * sx))),
                        max(1, int(round(box.h * sy))))
    x0, y0 = max(0, box.x), max(0, box.y)
    x1, y1 = min(w, box.x + box.w), min(h, box.y + box.h)
    if x1 <= x0 or y1 <= y0:
        raise EmptyLipRegion(f"lip box {box} empty after clipping to {w}x{h}")
    crop_term = lpips_loss(hr[..., y0:y1, x0:x1], gt[..., y0:y1, x0:x1],
                           extractor)
    masked_term = ((hr - gt) * mask).abs().mean()
    return crop_term + masked_term
