import csv
import json

import numpy as np
import pytest
import torch

from hyperlips.checkpoints import load_base_generator, load_checkpoint
from hyperlips.config import TrainConfig
from hyperlips.data import Stage2PairDataset
from hyperlips.errors import EmptyDataset, MissingSyncExpert
from hyperlips.sync import train_sync
from hyperlips.training import build_stage2_dataset, train_base, train_hr


@pytest.fixture(scope="module")
def sync_ckpt(toy_data_dir, tmp_path_factory):
    run = tmp_path_factory.mktemp("syncrun")
    cfg = TrainConfig(profile="toy", steps=4, batch_size=4, seed=0,
                      dataset_dir=str(toy_data_dir), run_dir=str(run))
    return train_sync(cfg)


@pytest.fixture(scope="module")
def base_run(toy_data_dir, sync_ckpt, tmp_path_factory):
    run = tmp_path_factory.mktemp("baserun")
    cfg = TrainConfig(profile="toy", steps=4, batch_size=2, seed=0,
                      log_every=1, checkpoint_every=2,
                      dataset_dir=str(toy_data_dir), run_dir=str(run),
                      sync_ckpt=str(sync_ckpt))
    ckpt = train_base(cfg)
    return run, ckpt


class TestTrainBase:
    def test_missing_sync_expert(self, toy_data_dir, tmp_path):
        cfg = TrainConfig(profile="toy", steps=1, batch_size=2, seed=0,
                          dataset_dir=str(toy_data_dir),
                          run_dir=str(tmp_path / "run"),
                          sync_ckpt=str(tmp_path / "missing.pt"))
        with pytest.raises(MissingSyncExpert):
            train_base(cfg)

    def test_empty_dataset(self, tmp_path, sync_ckpt):
        (tmp_path / "clips").mkdir(parents=True)
        cfg = TrainConfig(profile="toy", steps=1, batch_size=2, seed=0,
                          dataset_dir=str(tmp_path),
                          run_dir=str(tmp_path / "run"),
                          sync_ckpt=str(sync_ckpt))
        with pytest.raises(EmptyDataset):
            train_base(cfg)

    def test_short_run_outputs(self, base_run):
        run, ckpt = base_run
        assert ckpt.is_file()
        assert (run / "config.ini").is_file()
        with open(run / "logs" / "train_log.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "loss_disc", "loss_adv", "loss_recon",
                           "loss_lpips", "loss_sync", "loss_total"]
        assert len(rows) == 5  # header + 4 logged steps at log_every=1

    def test_checkpoint_cadence(self, base_run):
        run, _ = base_run
        names = sorted(p.name for p in (run / "ckpts").glob("*.pt"))
        assert "base_000002.pt" in names
        assert "base_000004.pt" in names
        assert "base_latest.pt" in names

    def test_checkpoint_loads_and_runs(self, base_run, toy_profile):
        _, ckpt = base_run
        gen, meta = load_base_generator(ckpt)
        assert meta.step == 4
        s = toy_profile.face_size
        with torch.no_grad():
            out = gen(torch.rand(1, 3, s, s), torch.rand(1, 3, s, s),
                      torch.rand(1, 16, 80))
        assert out.shape == (1, 3, s, s)

    def test_frozen_expert_unchanged(self, toy_data_dir, sync_ckpt,
                                     tmp_path):
        before = load_checkpoint(sync_ckpt).parameters
        before = {k: v.clone() for k, v in before.items()}
        cfg = TrainConfig(profile="toy", steps=2, batch_size=2, seed=0,
                          dataset_dir=str(toy_data_dir),
                          run_dir=str(tmp_path / "run"),
                          sync_ckpt=str(sync_ckpt))
        train_base(cfg)
        after = load_checkpoint(sync_ckpt).parameters
        assert all(torch.equal(before[k], after[k]) for k in before)

    def test_deterministic_loss_trajectory(self, toy_data_dir, sync_ckpt,
                                           tmp_path):
        logs = []
        for name in ("a", "b"):
            cfg = TrainConfig(profile="toy", steps=5, batch_size=2, seed=11,
                              log_every=1, dataset_dir=str(toy_data_dir),
                              run_dir=str(tmp_path / name),
                              sync_ckpt=str(sync_ckpt))
            train_base(cfg)
            logs.append((tmp_path / name / "logs" /
                         "train_log.csv").read_text())
        assert logs[0] == logs[1]

    def test_zero_steps_initial_checkpoint(self, toy_data_dir, sync_ckpt,
                                           tmp_path):
        cfg = TrainConfig(profile="toy", steps=0, batch_size=2, seed=0,
                          dataset_dir=str(toy_data_dir),
                          run_dir=str(tmp_path / "run"),
                          sync_ckpt=str(sync_ckpt))
        ckpt = train_base(cfg)
        assert ckpt.is_file()
        assert load_checkpoint(ckpt).step == 0


def synth_stage2_dir(root, toy_data_dir, profile, n=8, scale=1):
    """Build stage-2 sample dirs from ground-truth crops so HR tests do not
    depend on a trained stage-1 model."""
    from hyperlips.data import list_clips, load_clip
    from hyperlips.faceprep import FaceBox, crop_face, lip_region, \
        render_sketch
    from hyperlips.media import _write_png
    from hyperlips.toyface import detect_landmarks

    clip = load_clip(list_clips(toy_data_dir)[0])
    box = FaceBox(*[int(v) for v in clip.box])
    s = profile.face_size
    samples = root / "samples"
    samples.mkdir(parents=True)
    for i in range(n):
        crop = crop_face(clip.frames[i], box, s)
        gt = crop if scale == 1 else crop_face(clip.frames[i], box, s * scale)
        base = crop.copy()  # ground truth stands in for the stage-1 output
        lm = detect_landmarks(crop)
        region = lip_region(lm)
        sketch = render_sketch(lm, s)
        d = samples / f"sample_{i:06d}"
        d.mkdir()
        u8 = lambda a: (np.clip(a, 0, 1) * 255).round().astype(np.uint8) \
            .transpose(1, 2, 0)
        _write_png(d / "base.png", u8(base))
        _write_png(d / "gt.png", u8(gt))
        _write_png(d / "sketch.png", u8(np.repeat(sketch, 3, axis=0)))
        _write_png(d / "lip_mask.png",
                   u8(np.repeat(region.mask[None].astype(np.float32),
                                3, axis=0)))
        np.save(d / "lip_box.npy", np.array(
            [region.box.x, region.box.y, region.box.w, region.box.h]))
    return root


@pytest.fixture(scope="module")
def built_stage2(base_run, toy_data_dir, tmp_path_factory):
    _, ckpt = base_run
    out = tmp_path_factory.mktemp("stage2") / "ds"
    return build_stage2_dataset(ckpt, toy_data_dir, out)


@pytest.fixture(scope="module")
def gt_stage2(toy_data_dir, toy_profile, tmp_path_factory):
    root = tmp_path_factory.mktemp("stage2hr") / "ds"
    return synth_stage2_dir(root, toy_data_dir, toy_profile)


class TestBuildStage2:
    def test_structure(self, built_stage2):
        stage2_dir = built_stage2
        manifest = json.loads((stage2_dir / "manifest.json").read_text())
        assert manifest["n_samples"] + manifest["n_skipped"] == 3 * 48
        assert (stage2_dir / "skip_log.csv").is_file()
        with open(stage2_dir / "skip_log.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["clip", "frame", "reason"]
        assert len(rows) - 1 == manifest["n_skipped"]

    def test_rerun_identical(self, base_run, toy_data_dir, built_stage2,
                             tmp_path):
        stage2_dir = built_stage2
        _, ckpt = base_run
        again = build_stage2_dataset(ckpt, toy_data_dir, tmp_path / "ds2")
        a = json.loads((stage2_dir / "manifest.json").read_text())
        b = json.loads((again / "manifest.json").read_text())
        assert a["n_samples"] == b["n_samples"]
        assert (stage2_dir / "skip_log.csv").read_text() == \
            (again / "skip_log.csv").read_text()


class TestStage2Samples:
    def test_sample_contents(self, toy_data_dir, toy_profile, tmp_path):
        root = synth_stage2_dir(tmp_path / "ds", toy_data_dir, toy_profile)
        ds = Stage2PairDataset(root)
        assert len(ds) == 8
        item = ds[0]
        s = toy_profile.face_size
        assert item["base"].shape == (3, s, s)
        assert item["gt"].shape == (3, s, s)
        assert item["sketch"].shape == (1, s, s)
        assert set(item["sketch"].unique().tolist()) <= {0.0, 1.0}
        x, y, w, h = item["lip_box"].tolist()
        assert w > 0 and h > 0
        assert item["lip_mask"].shape == (s, s)

    def test_empty_dir_raises(self, tmp_path):
        with pytest.raises(EmptyDataset):
            Stage2PairDataset(tmp_path)


class TestTrainHR:
    def test_short_run(self, gt_stage2, tmp_path):
        stage2_dir = gt_stage2
        cfg = TrainConfig(profile="toy", steps=3, batch_size=2, seed=0,
                          log_every=1, dataset_dir=str(stage2_dir),
                          run_dir=str(tmp_path / "run"))
        ckpt = train_hr(cfg)
        assert ckpt.is_file()
        meta = load_checkpoint(ckpt, expect_kind="hr")
        assert meta.step == 3
        assert meta.extra["scale"] == 1
        with open(tmp_path / "run" / "logs" / "hr_log.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["step", "loss_disc", "loss_adv",
                           "loss_perceptual", "loss_recon", "loss_lip",
                           "loss_total"]

    def test_empty_dataset(self, tmp_path):
        (tmp_path / "empty").mkdir()
        cfg = TrainConfig(profile="toy", steps=1, batch_size=2, seed=0,
                          dataset_dir=str(tmp_path / "empty"),
                          run_dir=str(tmp_path / "run"))
        with pytest.raises(EmptyDataset):
            train_hr(cfg)

    def test_hr_scale_2(self, toy_data_dir, toy_profile, tmp_path):
        s2 = synth_stage2_dir(tmp_path / "s2", toy_data_dir, toy_profile,
                              scale=2)
        cfg = TrainConfig(profile="toy", steps=2, batch_size=2, seed=0,
                          hr_scale=2, dataset_dir=str(s2),
                          run_dir=str(tmp_path / "run"))
        hr_ckpt = train_hr(cfg)
        meta = load_checkpoint(hr_ckpt)
        assert meta.extra["scale"] == 2
