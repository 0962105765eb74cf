import numpy as np
import pytest
import torch

from hyperlips.config import PROFILES
from hyperlips.errors import ShapeMismatch, WeightShapeMismatch
from hyperlips.models import (AudioEncoder, AudioFeatureSet,
                              BaseDiscriminator, BaseGenerator, FaceDecoder,
                              FaceEncoder, HyperNet, HyperWeightSet,
                              LatentPyramid, apply_hyperconv)


def np_hyperconv(x, kernels, biases, k):
    """Direct per-sample k x k convolution, plain numpy loops."""
    b, c, h, w = x.shape
    wgt = kernels.reshape(b, c, c, k, k)
    pad = k // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros_like(x)
    for bi in range(b):
        for o in range(c):
            acc = np.zeros((h, w))
            for i in range(c):
                for dy in range(k):
                    for dx in range(k):
                        acc += wgt[bi, o, i, dy, dx] * \
                            xp[bi, i, dy:dy + h, dx:dx + w]
            out[bi, o] = acc + biases[bi, o]
    return out


def random_pyramid(rng, b=2, channels=(3, 4, 5, 6), base=16):
    levels = []
    size = base
    for c in channels:
        levels.append(torch.from_numpy(
            rng.standard_normal((b, c, size, size))))
        size //= 2
    return LatentPyramid(levels)


def random_theta(rng, b, channels, k):
    kerns = [torch.from_numpy(rng.standard_normal((b, c * c * k * k)))
             for c in channels]
    biases = [torch.from_numpy(rng.standard_normal((b, c))) for c in channels]
    return HyperWeightSet(kerns, biases, kernel_size=k)


def identity_theta(b, channels, dtype=torch.float64):
    kerns = [torch.eye(c, dtype=dtype).reshape(1, c * c).repeat(b, 1)
             for c in channels]
    biases = [torch.zeros(b, c, dtype=dtype) for c in channels]
    return HyperWeightSet(kerns, biases, kernel_size=1)


class TestPyramidShapes:
    @pytest.mark.parametrize("name", ["toy", "full"])
    def test_encoder_levels(self, name):
        p = PROFILES[name]
        enc = FaceEncoder(p)
        s = p.face_size
        x = torch.zeros(2, 3, s, s)
        pyr = enc(x, x)
        sizes = [s // 2, s // 4, s // 8, s // 16]
        for lvl, (c, hw) in zip(pyr.levels, zip(p.enc_channels, sizes)):
            assert lvl.shape == (2, c, hw, hw)

    @pytest.mark.parametrize("name", ["toy", "full"])
    def test_theta_counts(self, name):
        """Per level the hypernet emits c^2 k^2 kernel + c bias parameters."""
        p = PROFILES[name]
        net = HyperNet(p)
        feats = AudioFeatureSet([], torch.zeros(2, p.audio_pooled_dim))
        theta = net(feats)
        k = p.hyperconv_kernel
        for (kern, bias), c in zip(zip(theta.kernels, theta.biases),
                                   p.enc_channels):
            assert kern.shape == (2, c * c * k * k)
            assert bias.shape == (2, c)

    def test_toy_theta_totals(self):
        p = PROFILES["toy"]
        feats = AudioFeatureSet([], torch.zeros(1, p.audio_pooled_dim))
        theta = HyperNet(p)(feats)
        assert theta.counts() == [(64, 8), (256, 16), (1024, 32), (4096, 64)]


class TestAudioEncoder:
    def test_pooled_dim(self, toy_profile):
        enc = AudioEncoder(toy_profile)
        feats = enc(torch.zeros(2, 1, 16, 80))
        assert feats.pooled.shape == (2, toy_profile.audio_pooled_dim)

    def test_wrong_chunk_shape(self, toy_profile):
        with pytest.raises(ShapeMismatch):
            AudioEncoder(toy_profile)(torch.zeros(2, 1, 20, 80))

    def test_determinism(self, toy_profile):
        enc = AudioEncoder(toy_profile).eval()
        x = torch.rand(1, 1, 16, 80, generator=torch.Generator().manual_seed(0))
        with torch.no_grad():
            a = enc(x).pooled
            b = enc(x).pooled
        assert torch.equal(a, b)


class TestApplyHyperconv:
    def test_matches_numpy_oracle_1x1(self):
        rng = np.random.default_rng(11)
        channels = (3, 4, 5, 6)
        pyr = random_pyramid(rng, b=3, channels=channels)
        theta = random_theta(rng, 3, channels, k=1)
        out = apply_hyperconv(pyr, theta, activation="linear")
        for x, kern, bias, y in zip(pyr.levels, theta.kernels,
                                    theta.biases, out.levels):
            want = np_hyperconv(x.numpy(), kern.numpy(), bias.numpy(), 1)
            assert np.abs(y.numpy() - want).max() < 1e-6

    def test_matches_numpy_oracle_3x3(self):
        rng = np.random.default_rng(12)
        channels = (2, 3, 4, 5)
        pyr = random_pyramid(rng, b=2, channels=channels)
        theta = random_theta(rng, 2, channels, k=3)
        out = apply_hyperconv(pyr, theta, activation="linear")
        for x, kern, bias, y in zip(pyr.levels, theta.kernels,
                                    theta.biases, out.levels):
            want = np_hyperconv(x.numpy(), kern.numpy(), bias.numpy(), 3)
            assert np.abs(y.numpy() - want).max() < 1e-6

    def test_identity_weights_pass_through(self):
        """Identity kernels and zero bias reproduce every level exactly."""
        rng = np.random.default_rng(13)
        channels = (3, 4, 5, 6)
        pyr = random_pyramid(rng, b=2, channels=channels)
        out = apply_hyperconv(pyr, identity_theta(2, channels),
                              activation="linear")
        for x, y in zip(pyr.levels, out.levels):
            assert torch.equal(x, y)

    def test_per_item_weights_differ(self):
        """Each batch item is convolved with its own kernel."""
        channels = (3, 3, 3, 3)
        pyr = LatentPyramid([torch.ones(2, 3, s, s)
                             for s in (16, 8, 4, 2)])
        kerns = [torch.stack([torch.eye(3).flatten() * 2,
                              torch.eye(3).flatten() * 5])] * 4
        biases = [torch.zeros(2, 3)] * 4
        theta = HyperWeightSet(list(kerns), list(biases), kernel_size=1)
        out = apply_hyperconv(pyr, theta, activation="linear")
        assert torch.allclose(out.levels[0][0], torch.full((3, 16, 16), 2.0))
        assert torch.allclose(out.levels[0][1], torch.full((3, 16, 16), 5.0))

    def test_leaky_relu_activation(self):
        channels = (2, 2, 2, 2)
        pyr = LatentPyramid([-torch.ones(1, 2, s, s)
                             for s in (16, 8, 4, 2)])
        out = apply_hyperconv(pyr, identity_theta(1, channels,
                                                  dtype=torch.float32))
        assert torch.allclose(out.levels[0], torch.full((1, 2, 16, 16), -0.01))

    def test_weight_shape_mismatch(self):
        rng = np.random.default_rng(14)
        channels = (3, 4, 5, 6)
        pyr = random_pyramid(rng, b=2, channels=channels)
        bad = random_theta(rng, 2, channels, k=1)
        bad.kernels[0] = torch.zeros(2, 5)
        with pytest.raises(WeightShapeMismatch):
            apply_hyperconv(pyr, bad)
        bad2 = random_theta(rng, 2, channels, k=1)
        bad2.biases[1] = torch.zeros(2, 3)
        with pytest.raises(WeightShapeMismatch):
            apply_hyperconv(pyr, bad2)

    def test_gradients_match_finite_differences(self):
        """Analytic gradient of a scalar loss w.r.t. kernels, in double."""
        rng = np.random.default_rng(15)
        channels = (3, 4, 5, 6)
        pyr = random_pyramid(rng, b=2, channels=channels, base=8)
        theta = random_theta(rng, 2, channels, k=1)
        kern0 = theta.kernels[0].clone().requires_grad_()

        def loss_fn(k0):
            t = HyperWeightSet([k0] + theta.kernels[1:], theta.biases, 1)
            out = apply_hyperconv(pyr, t, activation="linear")
            return sum(lvl.pow(2).sum() for lvl in out.levels)

        loss = loss_fn(kern0)
        loss.backward()
        eps = 1e-6
        for _ in range(10):
            i = int(rng.integers(2))
            j = int(rng.integers(kern0.shape[1]))
            kp = kern0.detach().clone()
            kp[i, j] += eps
            km = kern0.detach().clone()
            km[i, j] -= eps
            fd = (loss_fn(kp) - loss_fn(km)).item() / (2 * eps)
            an = kern0.grad[i, j].item()
            assert abs(fd - an) / max(abs(an), 1e-8) < 1e-3


class TestBaseGenerator:
    def test_output_shape_and_range(self, toy_profile):
        gen = BaseGenerator(toy_profile).eval()
        s = toy_profile.face_size
        ref = torch.rand(2, 3, s, s)
        masked = torch.rand(2, 3, s, s)
        chunk = torch.rand(2, 1, 16, 80)
        with torch.no_grad():
            out = gen(ref, masked, chunk)
        assert out.shape == (2, 3, s, s)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_hyper_off_ignores_audio(self, toy_profile):
        """With modulation off, different audio gives identical faces."""
        gen = BaseGenerator(toy_profile).eval()
        s = toy_profile.face_size
        g = torch.Generator().manual_seed(3)
        ref = torch.rand(1, 3, s, s, generator=g)
        masked = torch.rand(1, 3, s, s, generator=g)
        with torch.no_grad():
            a = gen(ref, masked, torch.rand(1, 1, 16, 80, generator=g),
                    hyper_off=True)
            b = gen(ref, masked, torch.rand(1, 1, 16, 80, generator=g),
                    hyper_off=True)
        assert torch.equal(a, b)

    def test_audio_changes_output(self, toy_profile):
        gen = BaseGenerator(toy_profile).eval()
        s = toy_profile.face_size
        g = torch.Generator().manual_seed(4)
        ref = torch.rand(1, 3, s, s, generator=g)
        masked = torch.rand(1, 3, s, s, generator=g)
        c1 = torch.rand(1, 1, 16, 80, generator=g)
        c2 = torch.rand(1, 1, 16, 80, generator=g)
        with torch.no_grad():
            a = gen(ref, masked, c1)
            b = gen(ref, masked, c2)
        assert not torch.equal(a, b)

    def test_mismatched_face_shapes(self, toy_profile):
        gen = BaseGenerator(toy_profile)
        s = toy_profile.face_size
        with pytest.raises(ShapeMismatch):
            gen(torch.zeros(1, 3, s, s), torch.zeros(1, 3, s // 2, s // 2),
                torch.zeros(1, 1, 16, 80))

    def test_generate_base_alias(self, toy_profile):
        gen = BaseGenerator(toy_profile).eval()
        s = toy_profile.face_size
        x = torch.rand(1, 3, s, s)
        c = torch.rand(1, 1, 16, 80)
        with torch.no_grad():
            assert torch.equal(gen.generate_base(x, x, c), gen(x, x, c))


class TestFaceDecoder:
    def test_sigmoid_range(self, toy_profile):
        enc = FaceEncoder(toy_profile)
        dec = FaceDecoder(toy_profile)
        s = toy_profile.face_size
        x = torch.rand(2, 3, s, s)
        out = dec(enc(x, x))
        assert out.shape == (2, 3, s, s)
        assert out.min() >= 0.0 and out.max() <= 1.0


class TestBaseDiscriminator:
    def test_scalar_probability_per_item(self, toy_profile):
        d = BaseDiscriminator(toy_profile.face_size)
        s = toy_profile.face_size
        out = d(torch.rand(3, 3, s, s))
        assert out.shape == (3,)
        assert torch.all(out > 0.0) and torch.all(out < 1.0)

    def test_wrong_size_rejected(self, toy_profile):
        d = BaseDiscriminator(toy_profile.face_size)
        with pytest.raises(ShapeMismatch):
            d(torch.rand(1, 3, toy_profile.face_size * 2,
                         toy_profile.face_size * 2))
