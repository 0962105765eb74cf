"""Audio-visual synchronization expert.

Two small conv embedders map a mel chunk and a window of five lower-half
face frames into a shared space. Embeddings are unit vectors in the
positive orthant (ReLU before the normalize), so the cosine similarity
lands in [0, 1] and the -log(cosine) sync penalty downstream never sees
the explosive near-zero-crossing regime that signed embeddings produce.
"""
from __future__ import annotations

import torch
from torch import nn

from ..config import SYNC_WINDOW_FRAMES, Profile
from ..errors import ShapeMismatch


def _embed(h: torch.Tensor) -> torch.Tensor:
    h = torch.relu(h)
    return h / h.norm(dim=-1, keepdim=True).clamp_min(1e-12)


def _branch(in_ch: int, widths) -> nn.Sequential:
    # BatchNorm, not GroupNorm: the BCE objective has a degenerate optimum
    # where both embedders emit one constant vector (every pair lands at
    # the same cosine). Per-batch standardization keeps cross-sample
    # variance alive in every block, which walls off that solution.
    c1, c2, c3, c4 = widths
    return nn.Sequential(
        nn.Conv2d(in_ch, c1, 3, padding=1, bias=False),
        nn.BatchNorm2d(c1), nn.LeakyReLU(0.01),
        nn.Conv2d(c1, c2, 4, stride=2, padding=1, bias=False),
        nn.BatchNorm2d(c2), nn.LeakyReLU(0.01),
        nn.Conv2d(c2, c3, 4, stride=2, padding=1, bias=False),
        nn.BatchNorm2d(c3), nn.LeakyReLU(0.01),
        nn.Conv2d(c3, c4, 4, stride=2, padding=1, bias=False),
        nn.BatchNorm2d(c4), nn.LeakyReLU(0.01))


class SyncExpert(nn.Module):
    """Paired audio/video embedders with unit-norm outputs."""

    def __init__(self, profile: Profile):
        super().__init__()
        self.profile = profile
        c4 = profile.enc_channels[-1]
        dim = profile.sync_embed_dim
        self.audio_net = _branch(1, profile.enc_channels)
        self.audio_fc = nn.Linear(c4, dim)
        self.video_net = _branch(3 * SYNC_WINDOW_FRAMES,
                                 profile.enc_channels)
        self.video_fc = nn.Linear(c4, dim)

    def embed_audio(self, chunk: torch.Tensor) -> torch.Tensor:
        squeeze = chunk.dim() == 2
        if squeeze:
            chunk = chunk[None]
        if chunk.dim() == 3:
            chunk = chunk[:, None]
        if chunk.shape[-3:] != (1, 16, 80):
            raise ShapeMismatch(
                f"expected (1, 16, 80) chunks, got {tuple(chunk.shape[-3:])}")
        v = _embed(self.audio_fc(self.audio_net(chunk).mean(dim=(-2, -1))))
        return v[0] if squeeze else v

    def embed_video(self, window: torch.Tensor) -> torch.Tensor:
        """window: 5 lower-half RGB crops stacked on channels,
        (15, S/2, S)."""
        squeeze = window.dim() == 3
        if squeeze:
            window = window[None]
        s = self.profile.face_size
        expect = (3 * SYNC_WINDOW_FRAMES, s // 2, s)
        if window.shape[-3:] != expect:
            raise ShapeMismatch(
                f"expected {expect} video windows, got "
                f"{tuple(window.shape[-3:])}")
        v = _embed(self.video_fc(self.video_net(window).mean(dim=(-2, -1))))
        return v[0] if squeeze else v

    def forward(self, chunk: torch.Tensor, window: torch.Tensor):
        return self.embed_audio(chunk), self.embed_video(window)


def sync_distance(f_a: torch.Tensor, f_v: torch.Tensor) -> torch.Tensor:
    """Cosine similarity of unit-norm embeddings; batched over leading dims."""
    return (f_a * f_v).sum(dim=-1)


def stack_window(frames) -> torch.Tensor:
    """Stack 5 consecutive lower-half face crops on the channel axis."""
    if len(frames) != SYNC_WINDOW_FRAMES:
        raise ShapeMismatch(
            f"need {SYNC_WINDOW_FRAMES} frames, got {len(frames)}")
    tensors = [f if isinstance(f, torch.Tensor) else torch.as_tensor(f)
               for f in frames]
    half = tensors[0].shape[-2] // 2
    return torch.cat([t[..., half:, :] for t in tensors], dim=-3)
