"""Scikit-learn style wrapper around featurization, training and prediction."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .featurize import HashingPairFeaturizer
from .graph import LABELS, ClaimEvidenceGraph
from .model import ModelConfig
from .training import MODES, TrainConfig, evaluate, mean_row_entropy, predict_proba, train

__all__ = ["CausalWalkClassifier", "check_records"]


def check_records(X, y=None):
    """Validate ``(claim, evidences)`` records and optional labels.

    Records may be graphs, ``(claim, evidences)`` tuples or dicts with
    ``claim`` and ``evidence`` keys. Returns the records as a list and the
    labels as an object array.
    """
    X = list(X)
    if not X:
        raise ValueError("empty dataset")
    for i, rec in enumerate(X):
        if isinstance(rec, (ClaimEvidenceGraph, dict)):
            continue
        if not (isinstance(rec, (tuple, list)) and len(rec) == 2 and isinstance(rec[0], str)):
            raise ValueError(f"record {i} is not a (claim, evidences) pair")
    if y is None:
        return X, None
    y = np.asarray(y, dtype=object)
    if y.ndim != 1 or len(y) != len(X):
        raise ValueError(f"y must be 1-d with {len(X)} entries, got shape {y.shape}")
    return X, y


class CausalWalkClassifier(ClassifierMixin, BaseEstimator):
    """Claim verifier over fully connected claim-evidence graphs.

    Parameters
    ----------
    mode : {"causal", "walk-only"}
        ``causal`` predicts with the intervention head; ``walk-only`` uses the
        beam-weighted path classifier and trains on the walk loss alone.
    labels : tuple of str
        Class order. Defaults to the three verification labels.
    random_state : int
        Seeds parameter initialisation, K-Means and batch shuffling.

    Attributes
    ----------
    params_, dictionary_, history_, classes_
    """

    def __init__(
        self,
        mode="causal",
        labels=LABELS,
        feature_dim=256,
        hidden_dim=64,
        layers=2,
        beam_width=3,
        max_len=5,
        alpha=0.1,
        n_clusters=5,
        learning_rate=3e-3,
        epochs=10,
        batch_size=4,
        evidence_supervision=False,
        random_state=0,
        n_jobs=1,
    ):
        self.mode = mode
        self.labels = labels
        self.feature_dim = feature_dim
        self.hidden_dim = hidden_dim
        self.layers = layers
        self.beam_width = beam_width
        self.max_len = max_len
        self.alpha = alpha
        self.n_clusters = n_clusters
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.evidence_supervision = evidence_supervision
        self.random_state = random_state
        self.n_jobs = n_jobs

    def _configs(self):
        model = ModelConfig(
            feature_dim=self.feature_dim,
            hidden_dim=self.hidden_dim,
            layers=self.layers,
            beam_width=self.beam_width,
            max_len=self.max_len,
            alpha=self.alpha,
            n_clusters=self.n_clusters,
            labels=tuple(self.labels),
        )
        tc = TrainConfig(
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            batch_size=self.batch_size,
            seed=int(self.random_state),
            mode=self.mode,
            evidence_supervision=self.evidence_supervision,
        )
        return model, tc

    def _graphs(self, X, y=None):
        graphs = HashingPairFeaturizer(dim=self.feature_dim).transform(X)
        if y is None:
            return graphs
        unknown = set(map(str, y)) - set(self.labels)
        if unknown:
            raise ValueError(f"labels {sorted(unknown)} are not among {tuple(self.labels)}")
        return [replace(g, label=str(label)) for g, label in zip(graphs, y)]

    def fit(self, X, y=None):
        """Train on records; labels come from ``y`` or from the records."""
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        X, y = check_records(X, y)
        model_config, train_config = self._configs()
        graphs = self._graphs(X, y)
        result = train(graphs, model_config, train_config)
        self.model_config_ = model_config
        self.params_ = result.params
        self.dictionary_ = result.dictionary
        self.history_ = result.history
        self.classes_ = np.array(model_config.labels, dtype=object)
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "params_")
        X, _ = check_records(X)
        return predict_proba(
            self._graphs(X), self.params_, self.dictionary_, self.model_config_, self.mode, self.n_jobs
        )

    def predict(self, X) -> np.ndarray:
        proba = self.predict_proba(X)
        return self.classes_[proba.argmax(axis=1)]

    def evaluate(self, X, y=None):
        """Accuracy with per-class precision and recall."""
        check_is_fitted(self, "params_")
        X, y = check_records(X, y)
        return evaluate(
            self._graphs(X, y), self.params_, self.dictionary_, self.model_config_, self.mode, self.n_jobs
        )

    def transition_entropy(self, X) -> float:
        """Mean entropy of the learned transition rows over ``X``."""
        check_is_fitted(self, "params_")
        X, _ = check_records(X)
        return mean_row_entropy(self._graphs(X), self.params_, self.model_config_)
