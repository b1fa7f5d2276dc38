import math

import numpy as np
import pytest

from uedkit.errors import ValidationError
from uedkit.metrics import nmi
from uedkit.modality import RawIQModality
from uedkit.nn import Tensor, build_extractor, extractor_config
from uedkit.nn.base import Module
from uedkit.nn.layers import Linear
from uedkit.rng import Rng
from uedkit.ssl import (
    ROTATION_SET_PAPER,
    ROTATION_SET_QUARTER,
    TrainConfig,
    augment_noise,
    augment_rotate,
    contrastive_loss,
    train_autoencoder,
    train_contrastive,
    train_deep_clustering,
)
from uedkit.synth import ScenarioConfig, synth_dataset


def _sm_dataset(n_emitters=2, traces=12, snr=float("inf"), seed=5):
    cfg = ScenarioConfig(
        mode="sm", n_emitters=n_emitters, traces_per_emitter=traces, snr_db=snr
    )
    return synth_dataset(cfg, seed=seed)


def _kan_extractor(seed=1, feature_size=8):
    cfg = extractor_config("kan", "raw_iq", feature_size=feature_size, trace_len=256, kan_grid=5)
    return build_extractor(cfg, Rng(seed))


class TestAugmentations:
    def test_noise_zero_std_identity(self):
        x = Rng(1).normal(size=(4, 2, 16))
        assert augment_noise(x, 0.0, Rng(2)) is x

    def test_noise_reproducible(self):
        x = np.zeros((3, 2, 64))
        a = augment_noise(x, 0.05, Rng(3))
        b = augment_noise(x, 0.05, Rng(3))
        assert np.array_equal(a, b)

    def test_noise_empirical_std(self):
        x = np.zeros(100_000)
        noisy = augment_noise(x, 0.05, Rng(4))
        assert 0.05 * 0.98 <= noisy.std() <= 0.05 * 1.02

    def test_noise_constellation_clipped(self):
        grid = np.zeros((2, 1, 8, 8))
        noisy = augment_noise(grid, 0.05, Rng(5), kind="constellation")
        assert noisy.min() >= 0.0

    def test_rotate_identity(self):
        x = Rng(6).normal(size=(2, 2, 32))
        assert np.array_equal(augment_rotate(x, 0.0), x)
        assert np.max(np.abs(augment_rotate(x, 2 * math.pi) - x)) < 1e-12

    def test_rotate_half_turn(self):
        x = np.zeros((1, 2, 1))
        x[0, 0, 0] = 1.0
        out = augment_rotate(x, math.pi)
        assert abs(out[0, 0, 0] + 1.0) < 1e-12 and abs(out[0, 1, 0]) < 1e-12

    def test_paper_rotation_set_collapses(self):
        x = Rng(7).normal(size=(1, 2, 8))
        outs = [augment_rotate(x, a) for a in ROTATION_SET_PAPER]
        assert np.max(np.abs(outs[0] - outs[2])) < 1e-12  # 0 vs 2*pi
        assert np.max(np.abs(outs[1] - outs[3])) < 1e-12  # pi vs 3*pi
        distinct = [augment_rotate(x, a) for a in ROTATION_SET_QUARTER]
        assert np.max(np.abs(distinct[0] - distinct[1])) > 0.01


class TestContrastiveLoss:
    def test_closed_form_two_orthogonal_pairs(self):
        # identical views, mutually orthogonal rows, tau = 0.5: every anchor
        # sees its positive at cos 1 and the other sample's two views at cos 0,
        # so the per-anchor loss is -log(e^(1/tau) / (e^(1/tau) + 2*e^0))
        h = np.array([[1.0, 0.0], [0.0, 1.0]])
        loss = contrastive_loss(h, h, 0.5).item()
        expected = -math.log(math.exp(2.0) / (math.exp(2.0) + 2.0))
        assert abs(loss - expected) < 1e-12

    def test_permutation_invariance(self):
        rng = Rng(8)
        h1 = rng.normal(size=(6, 4))
        h2 = rng.normal(size=(6, 4))
        perm = rng.permutation(6)
        a = contrastive_loss(h1, h2, 0.5).item()
        b = contrastive_loss(h1[perm], h2[perm], 0.5).item()
        assert abs(a - b) < 1e-12

    def test_loss_falls_as_positive_cosine_rises(self):
        rng = Rng(9)
        h1 = rng.normal(size=(4, 3))
        h2 = rng.normal(size=(4, 3))
        worse = contrastive_loss(h1, h2, 0.5).item()
        better = contrastive_loss(h1, 0.5 * h1 + 0.5 * h2, 0.5).item()
        assert better < worse

    def test_zero_norm_row_rejected(self):
        h = np.ones((3, 2))
        bad = h.copy()
        bad[1] = 0.0
        with pytest.raises(ValidationError):
            contrastive_loss(h, bad, 0.5)

    def test_needs_two_rows(self):
        with pytest.raises(ValidationError):
            contrastive_loss(np.ones((1, 2)), np.ones((1, 2)), 0.5)


class TestEvalEpochs:
    def test_canonical_schedule(self):
        cfg = TrainConfig(approach="dc", epochs=100, eval_every=15)
        assert cfg.eval_epochs() == [15, 30, 45, 60, 75, 90, 100]

    def test_short_schedule_includes_final(self):
        cfg = TrainConfig(approach="ae", epochs=10, eval_every=4)
        assert cfg.eval_epochs() == [4, 8, 10]

    def test_invalid_config(self):
        with pytest.raises(ValidationError):
            TrainConfig(approach="dc", epochs=5, eval_every=10)


class TestDeepClustering:
    def test_separable_pseudo_labels_after_first_epoch(self):
        ds = _sm_dataset(n_emitters=2, traces=10)
        inputs = RawIQModality(256).transform_batch(ds.iq.astype(np.float64))
        model = _kan_extractor()
        cfg = TrainConfig(approach="dc", epochs=1, eval_every=1, dc_clusters=2, batch_size=8)
        result = train_deep_clustering(model, inputs, cfg, Rng(11))
        assert nmi(result.pseudo_labels[1], ds.emitter_ids) == 1.0

    def test_single_cluster_degenerate(self):
        ds = _sm_dataset(n_emitters=2, traces=6)
        inputs = RawIQModality(256).transform_batch(ds.iq.astype(np.float64))
        model = _kan_extractor(seed=13)
        before = model.param_vector().copy()
        cfg = TrainConfig(approach="dc", epochs=1, eval_every=1, dc_clusters=1, batch_size=8)
        result = train_deep_clustering(model, inputs, cfg, Rng(12))
        assert result.curve[0][1] == 0.0  # -log softmax of a single class
        assert np.array_equal(model.param_vector(), before)

    def test_fixed_seed_bit_identical_checkpoints(self):
        ds = _sm_dataset(n_emitters=2, traces=8, snr=25.0)
        inputs = RawIQModality(256).transform_batch(ds.iq.astype(np.float64))
        results = []
        for _ in range(2):
            model = _kan_extractor(seed=17)
            cfg = TrainConfig(approach="dc", epochs=2, eval_every=1, dc_clusters=2, batch_size=8)
            results.append(train_deep_clustering(model, inputs, cfg, Rng(19)))
        for epoch in results[0].checkpoints:
            a, b = results[0].checkpoints[epoch], results[1].checkpoints[epoch]
            assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_pseudo_nmi_non_decreasing_first_epochs(self):
        ds = _sm_dataset(n_emitters=3, traces=10)
        inputs = RawIQModality(256).transform_batch(ds.iq.astype(np.float64))
        model = _kan_extractor(seed=23)
        cfg = TrainConfig(approach="dc", epochs=3, eval_every=1, dc_clusters=3, batch_size=16)
        result = train_deep_clustering(model, inputs, cfg, Rng(29))
        scores = [nmi(result.pseudo_labels[e], ds.emitter_ids) for e in (1, 2, 3)]
        assert scores[0] <= scores[1] + 1e-12 and scores[1] <= scores[2] + 1e-12

    def test_too_many_clusters(self):
        inputs = Rng(31).normal(size=(4, 2, 256))
        with pytest.raises(ValidationError):
            train_deep_clustering(
                _kan_extractor(),
                inputs,
                TrainConfig(approach="dc", epochs=1, eval_every=1, dc_clusters=10),
                Rng(1),
            )


class _TinyLinear(Module):
    def __init__(self, n_in, n_out, rng):
        self.lin = Linear(n_in, n_out, rng, np.float64)
        self.feature_size = n_out

    def __call__(self, x, train=False):
        return self.lin(x)


class TestAutoencoder:
    def test_constant_mean_decoder_gives_variance(self):
        from uedkit.nn.losses import mse

        batch = Rng(33).normal(size=(32, 6), std=2.0)
        loss = mse(Tensor(np.tile(batch.mean(axis=0), (32, 1))), batch)
        assert abs(loss.item() - batch.var(axis=0).mean()) < 1e-12

    def test_rank2_data_reconstructed_by_linear_pair(self):
        rng = Rng(35)
        basis = rng.normal(size=(2, 4))
        codes = rng.derive("codes").normal(size=(64, 2))
        data = codes @ basis  # exactly rank 2
        enc = _TinyLinear(4, 2, Rng(37))
        dec = _TinyLinear(2, 4, Rng(38))
        cfg = TrainConfig(approach="ae", epochs=120, eval_every=120, batch_size=16, lr=1e-2)
        result = train_autoencoder(enc, dec, data, cfg, Rng(39))
        assert result.curve[-1][1] < 1e-3

    def test_loss_decreases(self):
        ds = _sm_dataset(n_emitters=2, traces=10, snr=25.0)
        inputs = RawIQModality(256).transform_batch(ds.iq.astype(np.float64))
        enc = _kan_extractor(seed=41)
        dec_cfg = extractor_config("kan", "raw_iq", feature_size=8, kan_grid=5)
        from uedkit.nn.models import KanDecoder

        dec = KanDecoder((2, 256), 5, Rng(43), feature_size=8)
        cfg = TrainConfig(approach="ae", epochs=5, eval_every=5, batch_size=8)
        result = train_autoencoder(enc, dec, inputs, cfg, Rng(44))
        assert result.curve[-1][1] < result.curve[0][1]

    def test_checkpoint_epochs(self):
        data = Rng(45).normal(size=(20, 3))
        enc = _TinyLinear(3, 2, Rng(46))
        dec = _TinyLinear(2, 3, Rng(47))
        cfg = TrainConfig(approach="ae", epochs=10, eval_every=3, batch_size=8)
        result = train_autoencoder(enc, dec, data, cfg, Rng(48))
        assert sorted(result.checkpoints) == [3, 6, 9, 10]


class TestContrastiveTrainer:
    def test_degenerate_augmentations_identical_views(self):
        ds = _sm_dataset(n_emitters=2, traces=6)
        model = _kan_extractor(seed=51)
        cfg = TrainConfig(
            approach="cl", epochs=1, eval_every=1, batch_size=8, noise_std=0.0, rotation_set=(0.0,)
        )
        modality = RawIQModality(256)
        raw = ds.iq.astype(np.float64)
        # with no augmentation both views equal the plain transform
        from uedkit.ssl import _make_view

        v1 = _make_view(raw, modality, cfg, Rng(1))
        v2 = _make_view(raw, modality, cfg, Rng(2))
        assert np.array_equal(v1, v2)
        result = train_contrastive(model, raw, modality, cfg, Rng(53))
        assert math.isfinite(result.curve[0][1])

    def test_reproducible_checkpoints(self):
        ds = _sm_dataset(n_emitters=2, traces=8, snr=30.0)
        raw = ds.iq.astype(np.float64)
        modality = RawIQModality(256)
        runs = []
        for _ in range(2):
            model = _kan_extractor(seed=57)
            cfg = TrainConfig(approach="cl", epochs=2, eval_every=1, batch_size=8)
            runs.append(train_contrastive(model, raw, modality, cfg, Rng(59)))
        for epoch in runs[0].checkpoints:
            assert np.array_equal(runs[0].checkpoints[epoch][0], runs[1].checkpoints[epoch][0])

    def test_separable_data_within_cosine_exceeds_between(self):
        ds = _sm_dataset(n_emitters=2, traces=16, snr=30.0, seed=7)
        raw = ds.iq.astype(np.float64)
        modality = RawIQModality(256)
        model = _kan_extractor(seed=61)
        cfg = TrainConfig(approach="cl", epochs=6, eval_every=6, batch_size=16)
        train_contrastive(model, raw, modality, cfg, Rng(63))
        feats = model.extract(modality.transform_batch(raw).astype(np.float32))
        feats = feats / np.linalg.norm(feats, axis=1, keepdims=True)
        sim = feats @ feats.T
        same = ds.emitter_ids[:, None] == ds.emitter_ids[None, :]
        np.fill_diagonal(same, False)
        within = sim[same].mean()
        between = sim[~same & ~np.eye(len(ds), dtype=bool)].mean()
        assert within > between

    def test_batch_size_validation(self):
        with pytest.raises(ValidationError):
            train_contrastive(
                _kan_extractor(),
                Rng(1).normal(size=(4, 2, 256)),
                RawIQModality(256),
                TrainConfig(approach="cl", epochs=1, eval_every=1, batch_size=1),
                Rng(2),
            )
