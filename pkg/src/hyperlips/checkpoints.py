"""Checkpoint archives shared by every trainable model in the pipeline.

One on-disk format: a torch-serialized dict holding the format version, the
model kind ("base", "sync", "hr"), the profile name, the training step, the
parameter and optimizer state dicts, a hash of the producing config, and a
free-form extra dict (HR variant, sync modality tag). Loaders validate the
version and kind before touching any tensors, and convenience constructors
rebuild ready-to-use modules from a path.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch

from .config import CHECKPOINT_FORMAT_VERSION, get_profile
from .errors import CorruptArchive, VersionMismatch
from .models import BaseGenerator, HRDecoder, HRVariant, SyncExpert

_REQUIRED = ("format_version", "kind", "profile", "step", "parameters")


@dataclass
class Checkpoint:
    """In-memory view of a checkpoint archive."""

    kind: str
    profile: str
    step: int
    parameters: dict[str, torch.Tensor]
    optimizer: dict | None = None
    config_hash: str = ""
    extra: dict[str, Any] = field(default_factory=dict)


def save_checkpoint(path: str | Path, kind: str, profile: str, step: int,
                    parameters: dict, optimizer: dict | None = None,
                    config_hash: str = "",
                    extra: dict[str, Any] | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "kind": kind,
        "profile": profile,
        "step": int(step),
        "parameters": parameters,
        "optimizer": optimizer,
        "config_hash": config_hash,
        "extra": dict(extra or {}),
    }
    torch.save(payload, path)
    return path


def load_checkpoint(path: str | Path, expect_kind: str | None = None) -> Checkpoint:
    path = Path(path)
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise CorruptArchive(f"cannot read checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or any(k not in payload for k in _REQUIRED):
        raise CorruptArchive(f"{path} is not a checkpoint archive")
    version = payload["format_version"]
    if version != CHECKPOINT_FORMAT_VERSION:
        raise VersionMismatch(
            f"{path}: format_version {version}, "
            f"expected {CHECKPOINT_FORMAT_VERSION}")
    if expect_kind is not None and payload["kind"] != expect_kind:
        raise VersionMismatch(
            f"{path}: kind {payload['kind']!r}, expected {expect_kind!r}")
    return Checkpoint(
        kind=payload["kind"],
        profile=payload["profile"],
        step=int(payload["step"]),
        parameters=payload["parameters"],
        optimizer=payload.get("optimizer"),
        config_hash=payload.get("config_hash", ""),
        extra=payload.get("extra", {}),
    )


def save_model(path: str | Path, kind: str, model: torch.nn.Module,
               profile: str, step: int, optimizer: torch.optim.Optimizer | None = None,
               config_hash: str = "", extra: dict | None = None) -> Path:
    return save_checkpoint(
        path, kind, profile, step, model.state_dict(),
        optimizer.state_dict() if optimizer is not None else None,
        config_hash, extra)


def load_base_generator(path: str | Path) -> tuple[BaseGenerator, Checkpoint]:
    ckpt = load_checkpoint(path, expect_kind="base")
    model = BaseGenerator(get_profile(ckpt.profile))
    model.load_state_dict(ckpt.parameters)
    model.eval()
    return model, ckpt


def load_sync_expert(path: str | Path) -> tuple[SyncExpert, Checkpoint]:
    ckpt = load_checkpoint(path, expect_kind="sync")
    model = SyncExpert(get_profile(ckpt.profile))
    model.load_state_dict(ckpt.parameters)
    model.eval()
    return model, ckpt


def load_hr_decoder(path: str | Path,
                    expect_scale: int | None = None) -> tuple[HRDecoder, Checkpoint]:
    ckpt = load_checkpoint(path, expect_kind="hr")
    scale = int(ckpt.extra.get("scale", 1))
    if expect_scale is not None and scale != expect_scale:
        raise VersionMismatch(
            f"{path}: HR variant scale {scale}, expected {expect_scale}")
    width = int(ckpt.extra.get("width", get_profile(ckpt.profile).hr_width))
    model = HRDecoder(HRVariant(scale), width)
    model.load_state_dict(ckpt.parameters)
    model.eval()
    return model, ckpt
