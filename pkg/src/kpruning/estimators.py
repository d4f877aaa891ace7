"""Scikit-learn style wrappers around the anchor-distillation trainer.

KPRegressor and KPClassifier take [n_samples, n_channels, length] windows,
build pseudo anchors automatically (or accept a prebuilt AnchorSet / anchor
file path) and expose fit/predict/get_params so they compose with
pipelines, grid search and cross-validation.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin

from .anchors import (
    CLASSIFICATION_TEMPLATE,
    REGRESSION_TEMPLATE,
    AnchorSet,
    AnchorSpec,
    PromptTemplate,
    expand_prompts,
    load_anchor_file,
    pseudo_embed,
)
from .datasets import DatasetSplit, Window
from .exceptions import DataError, UsageError
from .training import EncoderSpec, TrainConfig, evaluate, predict_windows, train
from .validation import check_target_length, check_windows_array


class _KPBase(BaseEstimator):
    def _resolve_anchors(self, payloads, template_text, mode) -> AnchorSet:
        if self.anchors is not None:
            if isinstance(self.anchors, AnchorSet):
                return self.anchors
            return load_anchor_file(self.anchors)
        kind = "classification" if isinstance(payloads[0], str) else "regression"
        template = PromptTemplate(template_text, kind)
        spec = (
            AnchorSpec(class_names=tuple(payloads))
            if kind == "classification"
            else AnchorSpec(numeric_range=(self.y_min, self.r_max, self.anchor_step))
        )
        prompts = expand_prompts(template, spec)
        return pseudo_embed(
            prompts, spec.payloads(), dim=self.anchor_dim, seed=self.seed,
            mode=mode, template=template_text,
        )

    def _config(self, length: int) -> TrainConfig:
        return TrainConfig(
            tau=self.tau,
            theta=self.theta,
            kl_direction=self.kl_direction,
            distance=self.distance,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=self.seed,
            encoder=EncoderSpec(
                kind=self.encoder,
                hidden=tuple(self.hidden),
                channels=tuple(self.channels),
                kernel_sizes=tuple(self.kernel_sizes),
                feature_dim=self.feature_dim,
            ),
            r_max=getattr(self, "r_max", 125.0),
            window_length=length,
            logit_scale=self.logit_scale,
            early_stopping_patience=self.patience,
        )

    def _split(self, windows: list[Window]) -> DatasetSplit:
        rng = np.random.default_rng(self.seed)
        order = rng.permutation(len(windows))
        n_val = max(1, int(round(self.validation_fraction * len(windows))))
        if len(windows) - n_val < 2:
            raise DataError("too few samples to hold out a validation set")
        val_idx = set(order[:n_val].tolist())
        train_ws = [windows[i] for i in range(len(windows)) if i not in val_idx]
        val_ws = [windows[i] for i in sorted(val_idx)]
        return DatasetSplit(train=train_ws, val=val_ws, test=[], meta={})

    def _check_fitted(self):
        if not hasattr(self, "checkpoint_"):
            raise UsageError("estimator is not fitted; call fit first")


class KPRegressor(RegressorMixin, _KPBase):
    """Anchor-distilled time-series regressor with voting-based inference."""

    def __init__(
        self,
        tau=10.0,
        theta=0.9,
        r_max=125.0,
        y_min=0.0,
        anchor_step=1.0,
        anchor_dim=64,
        anchor_mode="structured",
        anchors=None,
        encoder="mlp",
        hidden=(256,),
        channels=(16, 32),
        kernel_sizes=(7, 5),
        feature_dim=64,
        learning_rate=1e-3,
        epochs=100,
        batch_size=64,
        seed=0,
        kl_direction="forward",
        distance="cosine",
        logit_scale=1.0,
        validation_fraction=0.15,
        patience=10,
    ):
        self.tau = tau
        self.theta = theta
        self.r_max = r_max
        self.y_min = y_min
        self.anchor_step = anchor_step
        self.anchor_dim = anchor_dim
        self.anchor_mode = anchor_mode
        self.anchors = anchors
        self.encoder = encoder
        self.hidden = hidden
        self.channels = channels
        self.kernel_sizes = kernel_sizes
        self.feature_dim = feature_dim
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.kl_direction = kl_direction
        self.distance = distance
        self.logit_scale = logit_scale
        self.validation_fraction = validation_fraction
        self.patience = patience

    def fit(self, X, y):
        X = check_windows_array(X)
        targets = [float(v) for v in check_target_length(X, y)]
        anchor_set = self._resolve_anchors(targets, REGRESSION_TEMPLATE, self.anchor_mode)
        windows = [
            Window(data=X[i], target=targets[i], unit_id=f"s{i}", end_step=X.shape[2] - 1)
            for i in range(X.shape[0])
        ]
        dataset = self._split(windows)
        self.checkpoint_ = train(self._config(X.shape[2]), dataset, anchor_set)
        self.n_channels_ = X.shape[1]
        self.window_length_ = X.shape[2]
        return self

    def predict(self, X, theta=None):
        self._check_fitted()
        X = check_windows_array(X)
        windows = [Window(data=X[i], target=0.0, unit_id=f"q{i}") for i in range(X.shape[0])]
        preds = predict_windows(self.checkpoint_, windows, theta=theta)
        return np.array([p.value for p in preds])


class KPClassifier(ClassifierMixin, _KPBase):
    """Anchor-distilled time-series classifier (best-scoring anchor wins)."""

    def __init__(
        self,
        tau=10.0,
        theta=0.9,
        anchor_dim=64,
        anchor_mode="gaussian",
        anchors=None,
        encoder="conv1d",
        hidden=(256,),
        channels=(16, 32),
        kernel_sizes=(7, 5),
        feature_dim=64,
        learning_rate=1e-3,
        epochs=100,
        batch_size=64,
        seed=0,
        kl_direction="forward",
        distance="cosine",
        logit_scale=1.0,
        validation_fraction=0.15,
        patience=10,
    ):
        self.tau = tau
        self.theta = theta
        self.anchor_dim = anchor_dim
        self.anchor_mode = anchor_mode
        self.anchors = anchors
        self.encoder = encoder
        self.hidden = hidden
        self.channels = channels
        self.kernel_sizes = kernel_sizes
        self.feature_dim = feature_dim
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.kl_direction = kl_direction
        self.distance = distance
        self.logit_scale = logit_scale
        self.validation_fraction = validation_fraction
        self.patience = patience

    def fit(self, X, y):
        X = check_windows_array(X)
        raw = check_target_length(X, y)
        self.classes_ = np.array(sorted(set(raw), key=str))
        self._by_name_ = {str(c): c for c in self.classes_}
        if len(self.classes_) < 2:
            raise DataError("need at least two classes")
        anchor_set = self._resolve_anchors(
            [str(c) for c in self.classes_], CLASSIFICATION_TEMPLATE, self.anchor_mode
        )
        windows = [
            Window(data=X[i], target=str(raw[i]), unit_id=f"s{i}", end_step=X.shape[2] - 1)
            for i in range(X.shape[0])
        ]
        dataset = self._split(windows)
        self.checkpoint_ = train(self._config(X.shape[2]), dataset, anchor_set)
        self.n_channels_ = X.shape[1]
        self.window_length_ = X.shape[2]
        return self

    def predict(self, X):
        self._check_fitted()
        X = check_windows_array(X)
        windows = [Window(data=X[i], target="", unit_id=f"q{i}") for i in range(X.shape[0])]
        preds = predict_windows(self.checkpoint_, windows)
        return np.array([self._by_name_[str(p.value)] for p in preds])

    def predict_proba(self, X):
        self._check_fitted()
        X = check_windows_array(X)
        from .datasets import zscore_apply
        from .training import _forward_scores

        windows = [Window(data=X[i], target="", unit_id=f"q{i}") for i in range(X.shape[0])]
        normed = zscore_apply(self.checkpoint_.stats, windows)
        encoder = self.checkpoint_.build_encoder()
        probs = _forward_scores(encoder, self.checkpoint_.aligned_anchors, normed,
                                self.checkpoint_.config)
        # anchor order equals sorted class order used at fit time
        return probs / probs.sum(axis=1, keepdims=True)
