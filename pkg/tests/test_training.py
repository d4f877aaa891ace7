import numpy as np
import pytest

from kpruning.anchors import AnchorSpec, expand_prompts, pseudo_embed, PromptTemplate
from kpruning.anchors import CLASSIFICATION_TEMPLATE, REGRESSION_TEMPLATE
from kpruning.datasets import synth_generate
from kpruning.distill import AlignmentModule
from kpruning.exceptions import DataError, UsageError
from kpruning.training import (
    Checkpoint,
    EncoderSpec,
    MetricsReport,
    TrainConfig,
    build_encoder,
    config_from_text,
    config_to_text,
    count_params,
    estimate_macs,
    evaluate,
    f1_scores,
    nasa_score,
    predict_windows,
    rmse,
    train,
)


def regression_anchors(dim=16, top=20.0, seed=0):
    spec = AnchorSpec(numeric_range=(0.0, top, 1.0))
    prompts = expand_prompts(PromptTemplate(REGRESSION_TEMPLATE, "regression"), spec)
    return pseudo_embed(prompts, spec.payloads(), dim=dim, seed=seed, mode="structured",
                        template=REGRESSION_TEMPLATE)


def class_anchors(names, dim=16, seed=0):
    spec = AnchorSpec(class_names=tuple(names))
    prompts = expand_prompts(PromptTemplate(CLASSIFICATION_TEMPLATE, "classification"), spec)
    return pseudo_embed(prompts, spec.payloads(), dim=dim, seed=seed, mode="gaussian",
                        template=CLASSIFICATION_TEMPLATE)


def tiny_regression_config(**kw):
    base = dict(
        epochs=2,
        batch_size=8,
        encoder=EncoderSpec(kind="mlp", hidden=(16,), feature_dim=8),
        window_length=12,
        r_max=20.0,
        seed=1,
    )
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture(scope="module")
def tiny_regression_data():
    return synth_generate(seed=2, kind="regression", n_units=8, length=12, r_max=20.0)


class TestNasaScore:
    def test_zero_error(self):
        assert nasa_score([5.0, 10.0], [5.0, 10.0]) == 0.0

    def test_late_by_ten(self):
        np.testing.assert_allclose(nasa_score([20.0], [10.0]), np.e - 1.0, rtol=1e-12)

    def test_early_by_thirteen(self):
        np.testing.assert_allclose(nasa_score([0.0], [13.0]), np.e - 1.0, rtol=1e-12)

    def test_asymmetry(self):
        late = nasa_score([13.0], [0.0])
        early = nasa_score([0.0], [13.0])
        np.testing.assert_allclose(late, np.exp(1.3) - 1.0, rtol=1e-12)
        assert late > early

    def test_constant_late_error_sums(self):
        n = 17
        targets = np.linspace(0, 100, n)
        np.testing.assert_allclose(
            nasa_score(targets + 10.0, targets), n * (np.e - 1.0), rtol=1e-12
        )


class TestF1:
    def test_perfect(self):
        macro, weighted = f1_scores(["a", "b", "a"], ["a", "b", "a"])
        assert macro == 1.0 and weighted == 1.0

    def test_degenerate_single_class_predictor(self):
        y_true = ["a"] * 10 + ["b"] * 10
        y_pred = ["a"] * 20
        macro, weighted = f1_scores(y_true, y_pred)
        np.testing.assert_allclose(macro, 1.0 / 3.0, rtol=1e-12)
        np.testing.assert_allclose(weighted, 1.0 / 3.0, rtol=1e-12)

    def test_rmse(self):
        np.testing.assert_allclose(rmse([1.0, 3.0], [0.0, 0.0]), np.sqrt(5.0), rtol=1e-12)


class TestConfigText:
    def test_roundtrip(self):
        cfg = TrainConfig(tau=5.0, theta=0.8, encoder=EncoderSpec(kind="conv1d"),
                          alignment_hidden=32)
        again = config_from_text(config_to_text(cfg))
        assert again == cfg

    def test_comments_and_errors(self):
        cfg = config_from_text("tau = 3.0\n# a comment\ntheta = 0.5\n")
        assert cfg.tau == 3.0 and cfg.theta == 0.5
        with pytest.raises(UsageError, match="line 2"):
            config_from_text("tau = 3.0\nnot a pair\n")
        with pytest.raises(UsageError, match="unknown"):
            config_from_text("bogus_key = 1\n")

    def test_validation(self):
        with pytest.raises(UsageError):
            TrainConfig(batch_size=1)
        with pytest.raises(UsageError):
            TrainConfig(tau=0.0)
        with pytest.raises(UsageError):
            TrainConfig(theta=1.5)


class TestCountParams:
    def test_single_affine(self):
        from kpruning.nn import AffineLayer

        assert AffineLayer(10, 5).n_params() == 55

    def test_alignment_arithmetic(self):
        phi = AlignmentModule(512, 64, hidden=64)
        assert phi.n_params() == 512 * 64 + 64 + 64 * 64 + 64
        assert phi.n_params() == 36992

    def test_checkpoint_count(self, tiny_regression_data):
        ckpt = train(tiny_regression_config(epochs=0), tiny_regression_data,
                     regression_anchors())
        enc = sum(a.size for a in ckpt.encoder_arrays.values())
        f = ckpt.config.encoder.feature_dim
        h = ckpt.config.alignment_hidden or f
        assert count_params(ckpt) == enc + 16 * h + h + h * f + f
        assert count_params(ckpt) < 2_000_000
        assert estimate_macs(ckpt) > 0


class TestTrain:
    def test_zero_lr_keeps_parameters(self, tiny_regression_data):
        anchors = regression_anchors()
        ckpt0 = train(tiny_regression_config(epochs=0), tiny_regression_data, anchors)
        ckpt1 = train(tiny_regression_config(epochs=1, learning_rate=0.0),
                      tiny_regression_data, anchors)
        assert len(ckpt1.history) == 1
        for name, arr in ckpt0.encoder_arrays.items():
            np.testing.assert_array_equal(ckpt1.encoder_arrays[name], arr)
        np.testing.assert_array_equal(ckpt1.aligned_anchors, ckpt0.aligned_anchors)

    def test_zero_lr_evaluation_unchanged(self, tiny_regression_data):
        anchors = regression_anchors()
        before = evaluate(train(tiny_regression_config(epochs=0), tiny_regression_data, anchors),
                          tiny_regression_data.test)
        after = evaluate(train(tiny_regression_config(epochs=3, learning_rate=0.0),
                               tiny_regression_data, anchors),
                         tiny_regression_data.test)
        assert before.rmse == after.rmse
        assert before.nasa_score == after.nasa_score

    def test_same_seed_identical_checkpoints(self, tiny_regression_data):
        anchors = regression_anchors()
        a = train(tiny_regression_config(), tiny_regression_data, anchors)
        b = train(tiny_regression_config(), tiny_regression_data, anchors)
        for name, arr in a.encoder_arrays.items():
            assert np.array_equal(b.encoder_arrays[name], arr)
        assert np.array_equal(a.aligned_anchors, b.aligned_anchors)
        assert a.history == b.history

    def test_anchor_task_mismatch(self, tiny_regression_data):
        with pytest.raises(UsageError, match="numeric"):
            train(tiny_regression_config(), tiny_regression_data, class_anchors(["a", "b"]))

    def test_empty_dataset(self, tiny_regression_data):
        from kpruning.datasets import DatasetSplit

        empty = DatasetSplit(train=[], val=[], test=tiny_regression_data.test, meta={})
        with pytest.raises(DataError):
            train(tiny_regression_config(), empty, regression_anchors())

    def test_loss_decreases_on_synthetic_classification(self):
        wins = 0
        for seed in range(20):
            data = synth_generate(seed=100 + seed, kind="classification", n_classes=4,
                                  samples_per_class=30, length=64, noise=0.05)
            anchors = class_anchors(data.meta["class_names"], dim=32, seed=seed)
            cfg = TrainConfig(
                epochs=5, batch_size=32, seed=seed,
                encoder=EncoderSpec(kind="mlp", hidden=(64,), feature_dim=16),
                window_length=64, early_stopping_patience=100,
            )
            ckpt = train(cfg, data, anchors)
            losses = [h["loss"] for h in ckpt.history]
            if all(losses[i + 1] < losses[i] for i in range(len(losses) - 1)):
                wins += 1
        assert wins >= 19  # >= 95% of 20 seeds


class TestEvaluate:
    def test_perfect_predictions_yield_zero_and_one(self):
        # degenerate check through the metric functions themselves
        assert nasa_score([3.0], [3.0]) == 0.0
        assert rmse([3.0], [3.0]) == 0.0
        assert f1_scores(["a"], ["a"])[0] == 1.0

    def test_report_fields(self, tiny_regression_data):
        ckpt = train(tiny_regression_config(), tiny_regression_data, regression_anchors())
        report = evaluate(ckpt, tiny_regression_data.test)
        assert report.task == "regression"
        assert report.rmse is not None and report.rmse >= 0
        assert report.nasa_score is not None
        assert report.macro_f1 is None
        # last-window mode: one evaluation point per unit
        assert report.n_windows == len({w.unit_id for w in tiny_regression_data.test})

    def test_all_windows_mode(self, tiny_regression_data):
        ckpt = train(tiny_regression_config(epochs=0), tiny_regression_data, regression_anchors())
        report = evaluate(ckpt, tiny_regression_data.test, eval_windows="all")
        assert report.n_windows == len(tiny_regression_data.test)

    def test_predictions_within_anchor_range(self, tiny_regression_data):
        ckpt = train(tiny_regression_config(), tiny_regression_data, regression_anchors())
        preds = predict_windows(ckpt, tiny_regression_data.test)
        for p in preds:
            assert 0.0 <= p.value <= 20.0
            assert p.voting_set.weight_sum >= min(0.9, 1.0) - 1e-9 or len(p.voting_set) == len(ckpt.anchor_payloads)

    def test_argmax_inference_variant(self, tiny_regression_data):
        ckpt = train(tiny_regression_config(epochs=0), tiny_regression_data, regression_anchors())
        grid = evaluate(ckpt, tiny_regression_data.test, regression_inference="argmax")
        assert grid.rmse is not None

    def test_shape_mismatch(self, tiny_regression_data):
        from kpruning.datasets import Window

        ckpt = train(tiny_regression_config(epochs=0), tiny_regression_data, regression_anchors())
        bad = [Window(data=np.zeros((2, 5)), target=0.0)]
        with pytest.raises(DataError, match="match"):
            predict_windows(ckpt, bad)


class TestCheckpointRoundtrip:
    def test_save_load_exact(self, tmp_path, tiny_regression_data):
        ckpt = train(tiny_regression_config(), tiny_regression_data, regression_anchors())
        p = tmp_path / "model.ckpt"
        ckpt.save(p)
        loaded = Checkpoint.load(p)
        assert loaded.task == ckpt.task
        assert loaded.config == ckpt.config
        assert loaded.anchor_payloads == ckpt.anchor_payloads
        for name, arr in ckpt.encoder_arrays.items():
            assert np.array_equal(loaded.encoder_arrays[name], arr)
        assert np.array_equal(loaded.aligned_anchors, ckpt.aligned_anchors)
        before = evaluate(ckpt, tiny_regression_data.test)
        after = evaluate(loaded, tiny_regression_data.test)
        assert before == after

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "junk.ckpt"
        p.write_bytes(b"not a checkpoint")
        from kpruning.exceptions import FormatError

        with pytest.raises(FormatError):
            Checkpoint.load(p)

    def test_classification_checkpoint(self, tmp_path):
        data = synth_generate(seed=30, kind="classification", n_classes=3,
                              samples_per_class=8, length=16)
        anchors = class_anchors(data.meta["class_names"])
        cfg = TrainConfig(epochs=1, batch_size=8, window_length=16,
                          encoder=EncoderSpec(kind="conv1d", channels=(4, 8),
                                              kernel_sizes=(5, 3), feature_dim=8))
        ckpt = train(cfg, data, anchors)
        p = tmp_path / "cls.ckpt"
        ckpt.save(p)
        loaded = Checkpoint.load(p)
        before = evaluate(ckpt, data.test)
        after = evaluate(loaded, data.test)
        assert before == after
        assert before.macro_f1 is not None
        assert before.confusion is not None
