"""Training loops for both stages and the stage-2 dataset bootstrap.

Runs live in a directory with ckpts/, logs/, and samples/; scalar losses go
to CSV so anything downstream can parse them without extra tooling. All
sampling is derived from the config seed and loading is single-worker, so a
rerun with the same config reproduces the same loss trajectory.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from . import losses
from .checkpoints import load_base_generator, load_sync_expert, save_model
from .config import SYNC_WINDOW_FRAMES, TrainConfig, config_hash, get_profile, \
    save_config
from .data import Stage1Dataset, Stage2PairDataset, list_clips, load_clip, \
    mel_chunks_for_frames
from .errors import EmptyDataset, MissingSyncExpert
from .faceprep import FaceBox, LipRegion, crop_face, detect_landmarks, \
    lip_region, mask_lower_half, render_sketch, select_reference_index
from .media import _write_png
from .models import BaseDiscriminator, BaseGenerator, HRDecoder, \
    HRDiscriminator, HRVariant
from .sync import _run_dirs


def _flatten_windows(t: torch.Tensor) -> torch.Tensor:
    """(B, 5, C, H, W) -> (B*5, C, H, W)."""
    return t.reshape(-1, *t.shape[2:])


def train_base(config: TrainConfig,
               dataset_dir: str | Path | None = None) -> Path:
    """Stage-1 training: alternating D/G updates at 1:1.

    Needs a trained sync expert checkpoint (config.sync_ckpt); the expert
    stays frozen for the whole run. Returns the final checkpoint path.
    """
    profile = get_profile(config.profile)
    if not config.sync_ckpt or not Path(config.sync_ckpt).is_file():
        raise MissingSyncExpert(
            f"sync expert checkpoint not found: {config.sync_ckpt!r}")
    expert, _ = load_sync_expert(config.sync_ckpt)
    for p in expert.parameters():
        p.requires_grad_(False)

    dataset = Stage1Dataset(dataset_dir or config.dataset_dir, profile,
                            config.reference_policy, config.seed)
    if len(dataset) == 0:
        raise EmptyDataset("stage-1 dataset is empty")
    ckpt_dir, log_dir, _ = _run_dirs(config.run_dir)
    save_config(config, Path(config.run_dir) / "config.ini")
    chash = config_hash(config)

    torch.manual_seed(config.seed)
    gen = BaseGenerator(profile)
    disc = BaseDiscriminator(profile.face_size, profile.enc_channels[0])
    opt_g = torch.optim.Adam(gen.parameters(), lr=config.learning_rate)
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.learning_rate)
    # Cosine decay to zero over the run. The constant-rate Adam noise floor
    # leaves an audio-dependent shimmer in regions the audio should not
    # touch; annealing removes it and lowers the final reconstruction loss.
    sched_g = torch.optim.lr_scheduler.CosineAnnealingLR(
        opt_g, T_max=max(1, config.steps))
    sched_d = torch.optim.lr_scheduler.CosineAnnealingLR(
        opt_d, T_max=max(1, config.steps))
    extractor = losses.get_extractor(config.extractor)
    loader = DataLoader(
        dataset, batch_size=config.batch_size, shuffle=True, drop_last=True,
        num_workers=0, generator=torch.Generator().manual_seed(config.seed))

    def checkpoint(step: int) -> Path:
        for name in (f"base_{step:06d}.pt", "base_latest.pt"):
            save_model(ckpt_dir / name, "base", gen, profile.name, step,
                       opt_g, chash)
        return ckpt_dir / "base_latest.pt"

    half = profile.face_size // 2
    log_path = log_dir / "train_log.csv"
    step = 0
    with open(log_path, "w", newline="") as fh:
        log = csv.writer(fh)
        log.writerow(["step", "loss_disc", "loss_adv", "loss_recon",
                      "loss_lpips", "loss_sync", "loss_total"])
        while step < config.steps:
            for batch in loader:
                if step >= config.steps:
                    break
                step += 1
                ref = _flatten_windows(batch["ref"])
                masked = _flatten_windows(batch["masked"])
                gt = _flatten_windows(batch["gt"])
                chunks = _flatten_windows(batch["chunks"])

                fake = gen(ref, masked, chunks)

                d_loss = losses.disc_loss(disc(gt), disc(fake.detach()))
                opt_d.zero_grad()
                d_loss.backward()
                opt_d.step()

                adv = losses.adv_loss(disc(fake))
                recon = losses.recon_l1(fake, gt)
                lpips = losses.lpips_loss(fake, gt, extractor)
                b = batch["gt"].shape[0]
                windows = fake.reshape(b, SYNC_WINDOW_FRAMES, 3,
                                       profile.face_size, profile.face_size)
                windows = windows[:, :, :, half:, :].reshape(
                    b, 3 * SYNC_WINDOW_FRAMES, half, profile.face_size)
                sync = losses.sync_loss(batch["sync_chunk"], windows, expert)
                comps = {"adv": adv, "recon": recon, "lpips": lpips,
                         "sync": sync}
                total = losses.total_base(comps, config.weights)
                opt_g.zero_grad()
                total.backward()
                # The sync term is -log(cos) and its gradient grows as 1/cos;
                # a window the expert scores near zero would otherwise wipe
                # out the reconstruction progress of many steps.
                torch.nn.utils.clip_grad_norm_(gen.parameters(), 1.0)
                opt_g.step()
                sched_d.step()
                sched_g.step()

                if step % config.log_every == 0 or step == 1:
                    log.writerow([step] + [
                        f"{v.item():.6f}" for v in
                        (d_loss, adv, recon, lpips, sync, total)])
                    fh.flush()
                if step % config.checkpoint_every == 0:
                    checkpoint(step)
    return checkpoint(step)


def generate_base_faces(gen: BaseGenerator, crops: np.ndarray,
                        chunks: np.ndarray, ref_index: int,
                        batch: int = 64) -> np.ndarray:
    """Eval-mode stage-1 faces for every frame of a clip, (T, 3, S, S)."""
    gen.eval()
    ref = torch.from_numpy(crops[ref_index])
    out = []
    with torch.no_grad():
        for lo in range(0, len(crops), batch):
            hi = min(lo + batch, len(crops))
            gt = torch.from_numpy(crops[lo:hi])
            masked = torch.stack([
                torch.from_numpy(mask_lower_half(crops[i]))
                for i in range(lo, hi)])
            refs = ref[None].expand(hi - lo, -1, -1, -1)
            mel = torch.from_numpy(chunks[lo:hi])
            out.append(gen(refs, masked, mel).numpy())
    return np.concatenate(out)


def build_stage2_dataset(base_ckpt: str | Path, dataset_dir: str | Path,
                         out_dir: str | Path, hr_scale: int = 1,
                         detector: str = "toyface-v1") -> Path:
    """Run the frozen stage-1 model over a dataset and keep every frame
    whose base face yields landmarks; failures are logged and skipped.

    The sketch comes from the base face, not from ground truth, so stage 2
    trains on exactly the inputs it will see at dub time.
    """
    gen, ckpt = load_base_generator(base_ckpt)
    profile = get_profile(ckpt.profile)
    s = profile.face_size
    out_dir = Path(out_dir)
    samples_dir = out_dir / "samples"
    samples_dir.mkdir(parents=True, exist_ok=True)
    n_kept = 0
    skipped = []
    for clip_path in list_clips(dataset_dir):
        clip = load_clip(clip_path)
        box = FaceBox(*[int(v) for v in clip.box])
        crops = np.stack([crop_face(f, box, s) for f in clip.frames])
        chunks = mel_chunks_for_frames(clip.mel, len(clip.frames))
        ref_idx = select_reference_index(list(crops), "fixed",
                                         detector=detector)
        base_faces = generate_base_faces(gen, crops, chunks, ref_idx)
        gt_hr = crops if hr_scale == 1 else np.stack(
            [crop_face(f, box, s * hr_scale) for f in clip.frames])
        for t in range(len(clip.frames)):
            try:
                lm = detect_landmarks(base_faces[t], detector)
                region = lip_region(lm)
            except Exception as exc:
                skipped.append((clip_path.name, t, type(exc).__name__))
                continue
            sketch = render_sketch(lm, s)
            d = samples_dir / f"sample_{n_kept:06d}"
            d.mkdir(exist_ok=True)
            _write_png(d / "base.png", _to_u8(base_faces[t]))
            _write_png(d / "gt.png", _to_u8(gt_hr[t]))
            _write_png(d / "sketch.png", _to_u8(np.repeat(sketch, 3, axis=0)))
            _write_png(d / "lip_mask.png",
                       _to_u8(np.repeat(region.mask[None], 3, axis=0)))
            np.save(d / "lip_box.npy", np.array(
                [region.box.x, region.box.y, region.box.w, region.box.h]))
            np.save(d / "landmarks.npy", lm.points)
            (d / "meta.json").write_text(json.dumps(
                {"clip": clip_path.name, "frame": t, "schema": lm.schema_id,
                 "space": lm.space}, sort_keys=True))
            n_kept += 1
    with open(out_dir / "skip_log.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["clip", "frame", "reason"])
        w.writerows(skipped)
    (out_dir / "manifest.json").write_text(json.dumps(
        {"n_samples": n_kept, "n_skipped": len(skipped),
         "hr_scale": hr_scale, "profile": profile.name,
         "base_ckpt_step": ckpt.step}, sort_keys=True))
    return out_dir


def _to_u8(img_chw: np.ndarray) -> np.ndarray:
    return np.clip(np.round(img_chw.transpose(1, 2, 0) * 255.0),
                   0, 255).astype(np.uint8)


def train_hr(config: TrainConfig,
             stage2_dir: str | Path | None = None) -> Path:
    """Stage-2 training over built (base, sketch, gt) samples."""
    profile = get_profile(config.profile)
    dataset = Stage2PairDataset(stage2_dir or config.dataset_dir)
    ckpt_dir, log_dir, _ = _run_dirs(config.run_dir)
    save_config(config, Path(config.run_dir) / "config.ini")
    chash = config_hash(config)

    torch.manual_seed(config.seed)
    variant = HRVariant(config.hr_scale)
    model = HRDecoder(variant, profile.hr_width)
    disc = HRDiscriminator(profile.face_size, variant, profile.enc_channels[0])
    opt_g = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    opt_d = torch.optim.Adam(disc.parameters(), lr=config.learning_rate)
    extractor = losses.get_extractor(config.extractor)
    loader = DataLoader(
        dataset, batch_size=config.batch_size, shuffle=True, drop_last=True,
        num_workers=0, generator=torch.Generator().manual_seed(config.seed))
    extra = {"scale": variant.scale, "width": profile.hr_width}

    def checkpoint(step: int) -> Path:
        for name in (f"hr_{step:06d}.pt", "hr_latest.pt"):
            save_model(ckpt_dir / name, "hr", model, profile.name, step,
                       opt_g, chash, extra=extra)
        return ckpt_dir / "hr_latest.pt"

    log_path = log_dir / "hr_log.csv"
    step = 0
    with open(log_path, "w", newline="") as fh:
        log = csv.writer(fh)
        log.writerow(["step", "loss_disc", "loss_adv", "loss_perceptual",
                      "loss_recon", "loss_lip", "loss_total"])
        while step < config.steps:
            for batch in loader:
                if step >= config.steps:
                    break
                step += 1
                hr = model(batch["base"], batch["sketch"])
                gt = batch["gt"]

                d_loss = losses.disc_loss(disc(gt), disc(hr.detach()))
                opt_d.zero_grad()
                d_loss.backward()
                opt_d.step()

                adv = losses.adv_loss(disc(hr))
                perc = losses.perceptual_l1(hr, gt, extractor)
                recon = losses.recon_l1(hr, gt)
                lip_terms = []
                for j in range(hr.shape[0]):
                    bx = [int(v) for v in batch["lip_box"][j]]
                    region = LipRegion(FaceBox(*bx),
                                       batch["lip_mask"][j].numpy())
                    lip_terms.append(losses.lip_loss(
                        hr[j], gt[j], region, extractor))
                lip = torch.stack(lip_terms).mean()
                total = losses.total_hr(
                    {"adv": adv, "perceptual": perc, "recon": recon,
                     "lip": lip}, config.weights)
                opt_g.zero_grad()
                total.backward()
                opt_g.step()

                if step % config.log_every == 0 or step == 1:
                    log.writerow([step] + [
                        f"{v.item():.6f}" for v in
                        (d_loss, adv, perc, recon, lip, total)])
                    fh.flush()
                if step % config.checkpoint_every == 0:
                    checkpoint(step)
    return checkpoint(step)
