import numpy as np
import pytest

from graphagg.aggregator import AggregatorConfig
from graphagg.errors import ConfigError, ShapeError, TrainingError
from graphagg.synthetic import SyntheticSpeakerSet, evaluate_eer, train_toy
from graphagg.tensor_core import grad_check
from graphagg.training import (
    AdamState,
    TrainConfig,
    adam_step,
    crop_or_duplicate,
    embed,
    embed_all,
    init_model,
    lr_at_epoch,
)
from graphagg.losses import MarginSoftmaxParams, margin_softmax_loss


class TestAdam:
    def test_zero_gradient_is_fixed_point(self):
        p = {"w": np.array([[1.0, -2.0]])}
        out = adam_step(p, {"w": np.zeros((1, 2))}, AdamState(), 0.1)
        np.testing.assert_array_equal(out["w"], p["w"])

    def test_first_step(self):
        out = adam_step({"w": np.array([[0.0]])}, {"w": np.array([[1.0]])}, AdamState(), 0.001)
        assert out["w"][0, 0] == pytest.approx(-0.001 / (1 + 1e-8), rel=1e-15)

    def test_zero_rate(self):
        p = {"w": np.array([[0.5]])}
        state = AdamState()
        for _ in range(3):
            p = adam_step(p, {"w": np.array([[2.0]])}, state, 0.0)
        assert p["w"][0, 0] == 0.5 and state.t == 3

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            adam_step({"w": np.zeros((2, 2))}, {"w": np.zeros((1, 2))}, AdamState(), 0.1)

    def test_minimises_a_quadratic(self):
        p = {"w": np.array([[3.0, -4.0]])}
        state = AdamState()
        for _ in range(2000):
            p = adam_step(p, {"w": 2 * p["w"]}, state, 0.01)
        assert np.abs(p["w"]).max() < 1e-2


class TestSchedule:
    def test_exact_power(self):
        for k in range(40):
            assert lr_at_epoch(0.001, 0.95, k) == 0.001 * 0.95**k

    def test_config_defaults(self):
        tc = TrainConfig()
        assert tc.lr == 0.001 and tc.decay == 0.95

    def test_config_checks(self):
        with pytest.raises(ConfigError):
            TrainConfig(decay=0.0)
        with pytest.raises(ConfigError):
            TrainConfig(lr=-1.0)


class TestCrop:
    def test_exact_length(self):
        x = np.arange(12.0).reshape(4, 3)
        np.testing.assert_array_equal(crop_or_duplicate(x, 4).node_features, x)

    def test_duplication_pattern(self):
        x = np.array([[0.0], [1.0]])
        assert crop_or_duplicate(x, 5).node_features[:, 0].tolist() == [0, 1, 0, 1, 0]

    def test_seeded_window(self):
        x = np.arange(10.0)[:, None]
        a = crop_or_duplicate(x, 4, np.random.default_rng(42)).node_features[:, 0]
        b = crop_or_duplicate(x, 4, np.random.default_rng(42)).node_features[:, 0]
        np.testing.assert_array_equal(a, b)
        assert np.all(np.diff(a) == 1)

    def test_always_target_length(self):
        rng = np.random.default_rng(0)
        for n in range(1, 15):
            for t in range(1, 15):
                assert crop_or_duplicate(np.ones((n, 2)), t, rng).num_nodes == t

    def test_zero_target(self):
        with pytest.raises(ConfigError):
            crop_or_duplicate(np.ones((3, 2)), 0)


class TestModelGradients:
    @pytest.mark.parametrize("seed", range(3))
    def test_full_model(self, seed):
        rng = np.random.default_rng(seed)
        cfg = AggregatorConfig(in_dim=4, hidden_dim=4, heads=2, keep_ratio=0.8, readout="combine_concat", seed=seed)
        tc = TrainConfig(trunk_hidden=5, seed=seed, loss_variant="aam")
        params = init_model(3, 3, cfg, tc)
        names = list(params)
        x = rng.standard_normal((6, 3))

        def loss(*vals):
            d = dict(zip(names, vals))
            return margin_softmax_loss(embed(x, cfg, d), 1, MarginSoftmaxParams(d["loss.W"], 0.3, 30.0, "aam"))

        assert grad_check(loss, [params[n] for n in names], eps=1e-5) < 1e-5


def _easy_set(seed=0):
    means = np.array([[3.0, 0.0, 0.0], [0.0, 3.0, 0.0]])
    return SyntheticSpeakerSet(means, noise=0.5, frames_mean=12, frames_jitter=3, nonspeech_rate=0.0)


class TestTraining:
    CFG = AggregatorConfig(in_dim=4, hidden_dim=4, heads=2, keep_ratio=0.8)

    def test_zero_epochs(self):
        tc = TrainConfig(epochs=0, trunk_hidden=6)
        res = train_toy(_easy_set(), self.CFG, tc)
        assert res.loss_curve == [] and res.lr_curve == []
        init = init_model(2, 3, self.CFG, tc)
        assert res.params.keys() == init.keys()
        for k in init:
            np.testing.assert_array_equal(res.params[k], init[k])

    def test_loss_goes_down_on_separable_speakers(self):
        tc = TrainConfig(epochs=30, lr=0.01, batch_size=4, trunk_hidden=6, crop_frames=10, utts_per_speaker=4)
        res = train_toy(_easy_set(), self.CFG, tc)
        assert res.loss_curve[-1] < res.loss_curve[0]

    def test_seeded_runs_are_identical(self):
        tc = TrainConfig(epochs=3, lr=0.01, batch_size=4, trunk_hidden=6, crop_frames=10, utts_per_speaker=3)
        a = train_toy(_easy_set(), self.CFG, tc)
        b = train_toy(_easy_set(), self.CFG, tc)
        assert np.array(a.loss_curve).tobytes() == np.array(b.loss_curve).tobytes()
        for k in a.params:
            assert a.params[k].tobytes() == b.params[k].tobytes()

    def test_lr_decays_per_epoch(self):
        tc = TrainConfig(epochs=4, lr=0.02, batch_size=8, trunk_hidden=6, crop_frames=8, utts_per_speaker=2)
        res = train_toy(_easy_set(), self.CFG, tc)
        assert res.lr_curve == [0.02 * 0.95**k for k in range(4)]

    def test_divergence_reports_epoch(self):
        tc = TrainConfig(epochs=2, lr=1e300, batch_size=2, trunk_hidden=6, crop_frames=8, utts_per_speaker=2)
        with pytest.raises(TrainingError) as info:
            with np.errstate(all="ignore"):
                train_toy(_easy_set(), self.CFG, tc)
        assert info.value.epoch in (0, 1)

    def test_mean_pool_baseline_trains(self):
        cfg = AggregatorConfig(in_dim=4, topology="mean_pool")
        tc = TrainConfig(epochs=5, lr=0.01, batch_size=4, trunk_hidden=6, crop_frames=10, utts_per_speaker=4)
        spec = _easy_set()
        res = train_toy(spec, cfg, tc)
        x, y = spec.sample(3, np.random.default_rng(9))
        assert 0.0 <= evaluate_eer(embed_all(x, cfg, res.params), y) <= 1.0


class TestSynthetic:
    def test_generate_and_sample(self):
        spec = SyntheticSpeakerSet.generate(5, 6, seed=0, frames_mean=20, frames_jitter=4)
        utts, labels = spec.sample(3, np.random.default_rng(0))
        assert len(utts) == 15 and labels == sorted(labels)
        assert all(16 <= u.shape[0] <= 24 and u.shape[1] == 6 for u in utts)

    def test_invariants(self):
        with pytest.raises(ConfigError):
            SyntheticSpeakerSet(np.ones((2, 3)))
        with pytest.raises(ConfigError):
            SyntheticSpeakerSet(np.eye(2), noise=0.0)
