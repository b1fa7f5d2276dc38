import math

import numpy as np
import pytest

from uedkit.errors import ValidationError
from uedkit.modality import constellation_cells_batch, normalize_iq_array
from uedkit.rng import Rng
from uedkit.synth import (
    DELTA_F_MAX,
    GAIN_IMBALANCE_MAX,
    PHI0_MAX,
    PHI_DRIFT_MAX,
    EmitterProfile,
    ScenarioConfig,
    draw_symbols,
    make_emitter,
    synth_dataset,
    synth_trace,
)

INF = float("inf")


def _clean_cfg(mode="sm", **kw):
    kw.setdefault("snr_db", INF)
    kw.setdefault("traces_per_emitter", 5)
    return ScenarioConfig(mode=mode, **kw)


class TestMakeEmitter:
    def test_deterministic(self):
        assert make_emitter(Rng(5)) == make_emitter(Rng(5))

    def test_zero_profile_emits_clean_symbols(self):
        profile = EmitterProfile(0.0, 0.0, 0.0)
        cfg = _clean_cfg()
        msg = draw_symbols("qpsk", cfg.trace_len, Rng(1))
        trace = synth_trace(profile, cfg, msg, Rng(2))
        assert np.allclose(trace.i, msg.real, atol=1e-15)
        assert np.allclose(trace.q, msg.imag, atol=1e-15)

    def test_independent_profiles_differ(self):
        a = make_emitter(Rng(10).derive("emitter", 0))
        b = make_emitter(Rng(10).derive("emitter", 1))
        assert a.delta_f != b.delta_f

    def test_worst_case_phase_budget(self):
        # the draw ranges must keep the per-sample fingerprint below 0.15
        theta_max = 2 * math.pi * DELTA_F_MAX * 255 + PHI0_MAX + PHI_DRIFT_MAX * 255
        assert 2 * math.sin(theta_max / 2) + GAIN_IMBALANCE_MAX / 2 <= 0.15


class TestSynthTrace:
    def test_sm_same_emitter_identical_at_inf_snr(self):
        cfg = _clean_cfg()
        profile = make_emitter(Rng(3))
        msg = draw_symbols("qpsk", cfg.trace_len, Rng(4))
        t1 = synth_trace(profile, cfg, msg, Rng(5))
        t2 = synth_trace(profile, cfg, msg, Rng(999))
        assert np.array_equal(t1.i, t2.i) and np.array_equal(t1.q, t2.q)

    def test_fingerprint_magnitude_closed_form(self):
        # oracle: recompute |x - y| per sample from the phase/gain model
        cfg = _clean_cfg()
        profile = make_emitter(Rng(6))
        msg = draw_symbols("qpsk", cfg.trace_len, Rng(7))
        trace = synth_trace(profile, cfg, msg, Rng(8))
        x = trace.i + 1j * trace.q
        n = np.arange(cfg.trace_len)
        theta = 2 * math.pi * profile.delta_f * n + profile.phi0 + profile.phi_drift * n
        rotated = msg * np.exp(1j * theta)
        g = profile.iq_gain_imbalance
        expected = rotated.real * (1 + 0.5 * g) + 1j * rotated.imag * (1 - 0.5 * g)
        ratio = np.linalg.norm(x - msg) / np.linalg.norm(msg)
        oracle = np.linalg.norm(expected - msg) / np.linalg.norm(msg)
        assert abs(ratio - oracle) < 1e-9

    def test_phase_only_profile_matches_rotation_formula(self):
        cfg = _clean_cfg()
        profile = EmitterProfile(3e-5, 0.02, 5e-6, 0.0)
        msg = draw_symbols("qpsk", cfg.trace_len, Rng(9))
        trace = synth_trace(profile, cfg, msg, Rng(10))
        x = trace.i + 1j * trace.q
        n = np.arange(cfg.trace_len)
        theta = 2 * math.pi * profile.delta_f * n + profile.phi0 + profile.phi_drift * n
        # |y|=1 for QPSK so ||x-y||^2 = sum |exp(j theta)-1|^2
        oracle = math.sqrt(np.sum(np.abs(np.exp(1j * theta) - 1.0) ** 2) / len(msg))
        assert abs(np.linalg.norm(x - msg) / np.linalg.norm(msg) - oracle) < 1e-9

    def test_perturbation_regime_bound(self):
        cfg = _clean_cfg()
        for e in range(50):
            profile = make_emitter(Rng(77).derive("emitter", e))
            msg = draw_symbols("qpsk", cfg.trace_len, Rng(78).derive(e))
            trace = synth_trace(profile, cfg, msg, Rng(79).derive(e))
            x = trace.i + 1j * trace.q
            assert np.linalg.norm(x - msg) / np.linalg.norm(msg) <= 0.15

    def test_unit_power_symbols(self):
        for mod in ("qpsk", "qam16"):
            y = draw_symbols(mod, 100000, Rng(80))
            assert abs(np.mean(np.abs(y) ** 2) - 1.0) < 0.01


def _mean_l2(a, b):
    """Mean pairwise distance between trace stacks (n,2,L)."""
    total, count = 0.0, 0
    for i in range(len(a)):
        for j in range(len(b)):
            total += np.linalg.norm(a[i] - b[j])
            count += 1
    return total / count


class TestSynthDataset:
    def test_bookkeeping(self):
        cfg = ScenarioConfig(mode="sm", n_emitters=6, traces_per_emitter=50, n_days=4, snr_db=25.0)
        ds = synth_dataset(cfg, seed=1)
        assert len(ds) == 1200
        for e in range(6):
            assert np.sum(ds.emitter_ids == e) == 200
            for day in range(4):
                assert np.sum((ds.emitter_ids == e) & (ds.days == day)) == 50

    def test_deterministic_per_seed(self):
        cfg = ScenarioConfig(mode="dm", n_emitters=2, traces_per_emitter=5, snr_db=20.0)
        a = synth_dataset(cfg, seed=3)
        b = synth_dataset(cfg, seed=3)
        assert np.array_equal(a.iq, b.iq)

    def test_sm_between_exceeds_within(self):
        cfg = ScenarioConfig(mode="sm", n_emitters=4, traces_per_emitter=12, snr_db=30.0)
        ds = synth_dataset(cfg, seed=21)
        within, between = [], []
        for e in range(4):
            mine = ds.iq[ds.emitter_ids == e]
            within.append(_mean_l2(mine[:6], mine[6:]))
            for other in range(e + 1, 4):
                theirs = ds.iq[ds.emitter_ids == other]
                between.append(_mean_l2(mine[:6], theirs[:6]))
        assert np.mean(between) > np.mean(within)

    def test_dm_within_equals_between(self):
        cfg = ScenarioConfig(mode="dm", n_emitters=4, traces_per_emitter=12, snr_db=30.0)
        ds = synth_dataset(cfg, seed=22)
        within, between = [], []
        for e in range(4):
            mine = ds.iq[ds.emitter_ids == e]
            within.append(_mean_l2(mine[:6], mine[6:]))
            for other in range(e + 1, 4):
                theirs = ds.iq[ds.emitter_ids == other]
                between.append(_mean_l2(mine[:6], theirs[:6]))
        assert 0.8 <= np.mean(within) / np.mean(between) <= 1.25

    def test_dm_constellation_unmasks_emitters(self):
        cfg = ScenarioConfig(mode="dm", n_emitters=4, traces_per_emitter=12, snr_db=25.0)
        ds = synth_dataset(cfg, seed=23)
        grids = constellation_cells_batch(normalize_iq_array(ds.iq.astype(np.float64)), 60)
        within, between = [], []
        for e in range(4):
            mine = grids[ds.emitter_ids == e]
            within.append(_mean_l2(mine[:6], mine[6:]))
            for other in range(e + 1, 4):
                theirs = grids[ds.emitter_ids == other]
                between.append(_mean_l2(mine[:6], theirs[:6]))
        assert np.mean(within) < np.mean(between)

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            ScenarioConfig(mode="xx")
        with pytest.raises(ValidationError):
            ScenarioConfig(mode="sm", n_emitters=1)
        with pytest.raises(ValidationError):
            ScenarioConfig(mode="sm", snr_db=float("nan"))


def _silhouette(features, labels):
    """Plain mean silhouette over euclidean distances (test-local oracle)."""
    n = len(features)
    dists = np.linalg.norm(features[:, None, :] - features[None, :, :], axis=2)
    scores = []
    for i in range(n):
        same = labels == labels[i]
        same[i] = False
        if not same.any():
            continue
        a = dists[i, same].mean()
        b = min(dists[i, labels == other].mean() for other in set(labels) - {labels[i]})
        scores.append((b - a) / max(a, b))
    return float(np.mean(scores))


class TestScenarioContrast:
    def test_sm_silhouette_positive_at_20db(self):
        cfg = ScenarioConfig(mode="sm", n_emitters=4, traces_per_emitter=15, snr_db=20.0)
        ds = synth_dataset(cfg, seed=31)
        flat = ds.iq.reshape(len(ds), -1).astype(np.float64)
        assert _silhouette(flat, ds.emitter_ids) > 0.0

    def test_dm_silhouette_near_zero(self):
        cfg = ScenarioConfig(mode="dm", n_emitters=4, traces_per_emitter=15, snr_db=20.0)
        ds = synth_dataset(cfg, seed=32)
        flat = ds.iq.reshape(len(ds), -1).astype(np.float64)
        assert _silhouette(flat, ds.emitter_ids) <= 0.05
