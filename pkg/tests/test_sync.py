import numpy as np
import pytest
import torch

from hyperlips.config import SYNC_WINDOW_FRAMES, TrainConfig
from hyperlips.data import SyncPairDataset
from hyperlips.errors import (EmptyDataset, NotEnoughFrames, NoSyncModel,
                              ShapeMismatch)
from hyperlips.models import SyncExpert, sync_distance
from hyperlips.models.sync_expert import stack_window
from hyperlips.sync import (cosine_gap, lse_from_embeddings, lse_scores,
                            train_sync)


@pytest.fixture(scope="module")
def expert(toy_profile):
    torch.manual_seed(0)
    return SyncExpert(toy_profile).eval()


class TestEmbeddings:
    def test_audio_unit_norm(self, expert):
        g = torch.Generator().manual_seed(1)
        chunks = torch.rand(6, 1, 16, 80, generator=g)
        f = expert.embed_audio(chunks)
        assert f.shape == (6, expert.profile.sync_embed_dim)
        assert torch.allclose(f.norm(dim=-1), torch.ones(6), atol=1e-5)

    def test_video_unit_norm(self, expert, toy_profile):
        s = toy_profile.face_size
        g = torch.Generator().manual_seed(2)
        w = torch.rand(6, 3 * SYNC_WINDOW_FRAMES, s // 2, s, generator=g)
        f = expert.embed_video(w)
        assert f.shape == (6, toy_profile.sync_embed_dim)
        assert torch.allclose(f.norm(dim=-1), torch.ones(6), atol=1e-5)

    def test_embeddings_nonnegative(self, expert):
        """Positive-orthant embeddings keep the cosine in [0, 1]."""
        g = torch.Generator().manual_seed(3)
        chunks = torch.rand(8, 1, 16, 80, generator=g)
        assert (expert.embed_audio(chunks) >= 0).all()

    def test_cosine_bounds(self, expert, toy_profile):
        s = toy_profile.face_size
        g = torch.Generator().manual_seed(4)
        f_a = expert.embed_audio(torch.rand(8, 1, 16, 80, generator=g))
        f_v = expert.embed_video(
            torch.rand(8, 3 * SYNC_WINDOW_FRAMES, s // 2, s, generator=g))
        cos = sync_distance(f_a, f_v)
        assert (cos >= -1.0 - 1e-6).all()
        assert (cos <= 1.0 + 1e-6).all()

    def test_single_item_squeeze(self, expert):
        chunk = torch.rand(16, 80)
        f = expert.embed_audio(chunk)
        assert f.shape == (expert.profile.sync_embed_dim,)

    def test_wrong_chunk_shape(self, expert):
        with pytest.raises(ShapeMismatch):
            expert.embed_audio(torch.rand(2, 1, 20, 80))

    def test_wrong_window_shape(self, expert, toy_profile):
        s = toy_profile.face_size
        with pytest.raises(ShapeMismatch):
            expert.embed_video(torch.rand(2, 3, s // 2, s))

    def test_sync_distance_identity(self):
        v = torch.tensor([[0.6, 0.8], [1.0, 0.0]])
        assert torch.allclose(sync_distance(v, v), torch.ones(2))

    def test_sync_distance_orthogonal(self):
        a = torch.tensor([[1.0, 0.0]])
        b = torch.tensor([[0.0, 1.0]])
        assert abs(sync_distance(a, b).item()) < 1e-7


class TestStackWindow:
    def test_shapes_and_content(self):
        frames = [np.full((3, 8, 8), float(i), dtype=np.float32)
                  for i in range(SYNC_WINDOW_FRAMES)]
        w = stack_window(frames)
        assert w.shape == (3 * SYNC_WINDOW_FRAMES, 4, 8)
        for i in range(SYNC_WINDOW_FRAMES):
            assert torch.all(w[3 * i:3 * (i + 1)] == float(i))

    def test_lower_half_only(self):
        f = np.zeros((3, 8, 8), dtype=np.float32)
        f[:, 4:, :] = 7.0
        w = stack_window([f] * SYNC_WINDOW_FRAMES)
        assert torch.all(w == 7.0)

    def test_wrong_count(self):
        frames = [np.zeros((3, 8, 8), dtype=np.float32)] * 3
        with pytest.raises(ShapeMismatch):
            stack_window(frames)


class TestLSE:
    def test_perfect_alignment_zero_distance(self):
        """Identical audio and video embeddings give LSE-D of 0."""
        rng = np.random.default_rng(5)
        emb = rng.normal(size=(20, 8))
        emb /= np.linalg.norm(emb, axis=1, keepdims=True)
        lse_c, lse_d = lse_from_embeddings(emb, emb)
        assert lse_d == 0.0
        assert lse_c > 0.0

    def test_hand_oracle_three_windows(self):
        """Small case worked through with plain numpy."""
        a = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
        v = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        dists_d, dists_c = [], []
        for i in range(3):
            d = np.linalg.norm(a - v[i], axis=1)
            dists_d.append(d.min())
            dists_c.append(np.median(d) - d.min())
        lse_c, lse_d = lse_from_embeddings(a, v)
        assert abs(lse_d - np.mean(dists_d)) < 1e-12
        assert abs(lse_c - np.mean(dists_c)) < 1e-12

    def test_offset_window_limits(self):
        """With > 31 windows the search no longer spans the whole track."""
        n = 40
        a = np.zeros((n, 2))
        a[:, 0] = 1.0
        a[0] = [0.0, 1.0]
        v = np.tile([0.0, 1.0], (n, 1))
        _, lse_d = lse_from_embeddings(a, v)
        # only windows 0..15 can reach the distinctive audio frame 0
        per_window = [0.0 if i <= 15 else np.sqrt(2.0) for i in range(n)]
        assert abs(lse_d - np.mean(per_window)) < 1e-9

    def test_lse_scores_requires_expert(self, toy_data_dir):
        from hyperlips.data import list_clips, load_clip
        clip = load_clip(list_clips(toy_data_dir)[0])
        with pytest.raises(NoSyncModel):
            lse_scores([], clip.mel, None)

    def test_lse_scores_needs_enough_frames(self, expert, toy_data_dir):
        from hyperlips.data import list_clips, load_clip
        from hyperlips.faceprep import FaceBox, crop_face
        clip = load_clip(list_clips(toy_data_dir)[0])
        s = expert.profile.face_size
        box = FaceBox(*[int(v) for v in clip.box])
        faces = [crop_face(f, box, s) for f in clip.frames[:3]]
        with pytest.raises(NotEnoughFrames):
            lse_scores(faces, clip.mel, expert)

    def test_lse_scores_smoke(self, expert, toy_data_dir):
        from hyperlips.data import list_clips, load_clip
        from hyperlips.faceprep import FaceBox, crop_face
        clip = load_clip(list_clips(toy_data_dir)[0])
        s = expert.profile.face_size
        box = FaceBox(*[int(v) for v in clip.box])
        faces = [crop_face(f, box, s) for f in clip.frames[:12]]
        lse_c, lse_d = lse_scores(faces, clip.mel, expert)
        assert np.isfinite(lse_c) and np.isfinite(lse_d)
        assert lse_d >= 0.0


class TestSyncPairDataset:
    def test_item_schema(self, toy_data_dir, toy_profile):
        ds = SyncPairDataset(toy_data_dir, toy_profile, seed=0)
        item = ds[0]
        s = toy_profile.face_size
        assert item["chunk"].shape == (16, 80)
        assert item["window"].shape == (3 * SYNC_WINDOW_FRAMES, s // 2, s)
        assert item["label"] in (0.0, 1.0)

    def test_alternating_labels(self, toy_data_dir, toy_profile):
        ds = SyncPairDataset(toy_data_dir, toy_profile, seed=0)
        labels = [ds[i]["label"] for i in range(8)]
        assert labels == [1.0, 0.0] * 4

    def test_mismatch_is_really_shifted(self, toy_data_dir, toy_profile):
        """Odd items pair the window with audio from a distant frame."""
        ds = SyncPairDataset(toy_data_dir, toy_profile, seed=0)
        diffs = []
        for i in range(1, 40, 2):
            item = ds[i]
            j = i - 1
            matched = ds[j]
            diffs.append((item["chunk"] - matched["chunk"]).abs().max().item())
        assert max(diffs) > 0.01

    def test_deterministic(self, toy_data_dir, toy_profile):
        a = SyncPairDataset(toy_data_dir, toy_profile, seed=4)
        b = SyncPairDataset(toy_data_dir, toy_profile, seed=4)
        for i in (1, 3, 11):
            assert torch.equal(a[i]["chunk"], b[i]["chunk"])


class TestTrainSync:
    def test_zero_steps_writes_initial_checkpoint(self, toy_data_dir,
                                                  tmp_path):
        cfg = TrainConfig(profile="toy", steps=0, batch_size=4, seed=0,
                          dataset_dir=str(toy_data_dir),
                          run_dir=str(tmp_path / "run"))
        ckpt = train_sync(cfg)
        assert ckpt.is_file()
        assert ckpt.name == "sync_latest.pt"

    def test_short_run_logs_and_checkpoints(self, toy_data_dir, tmp_path):
        cfg = TrainConfig(profile="toy", steps=6, batch_size=4, seed=0,
                          log_every=2, dataset_dir=str(toy_data_dir),
                          run_dir=str(tmp_path / "run"))
        ckpt = train_sync(cfg)
        assert ckpt.is_file()
        log = (tmp_path / "run" / "logs" / "sync_log.csv").read_text()
        lines = log.strip().splitlines()
        assert lines[0] == "step,loss,cos_matched,cos_mismatched"
        assert len(lines) >= 4

    def test_empty_dataset(self, tmp_path):
        (tmp_path / "empty").mkdir()
        cfg = TrainConfig(profile="toy", steps=2, batch_size=4, seed=0,
                          dataset_dir=str(tmp_path / "empty"),
                          run_dir=str(tmp_path / "run"))
        with pytest.raises(EmptyDataset):
            train_sync(cfg)

    def test_cosine_gap_bounds(self, expert, toy_data_dir, toy_profile):
        ds = SyncPairDataset(toy_data_dir, toy_profile, seed=0)
        matched, mismatched = cosine_gap(expert, ds, limit=12)
        for v in (matched, mismatched):
            assert -1.0 <= v <= 1.0
