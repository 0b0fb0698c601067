"""Mini-batch Adam training and accuracy evaluation."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .graph import ClaimEvidenceGraph
from .model import (
    ConfounderDictionary,
    ModelConfig,
    WalkParams,
    compute_losses,
    evidence_supervision_loss,
    forward_causal,
    init_confounder_dictionary,
    node_representations,
    walk_transitions,
)
from .walk import row_entropy

__all__ = [
    "MODES",
    "TrainConfig",
    "EpochMetrics",
    "TrainResult",
    "EvalResult",
    "NonFiniteLossError",
    "Adam",
    "train",
    "evaluate",
    "predict_proba",
    "mean_row_entropy",
]

log = logging.getLogger(__name__)

MODES = ("causal", "walk-only")


class NonFiniteLossError(FloatingPointError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Optimisation settings.

    ``mode="causal"`` minimises ``L_walk + L_causal``; ``mode="walk-only"``
    drops the intervention branch and minimises ``L_walk`` alone.
    """

    learning_rate: float = 3e-3
    epochs: int = 10
    batch_size: int = 4
    seed: int = 0
    mode: str = "causal"
    evidence_supervision: bool = False
    supervision_weight: float = 0.5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.learning_rate < 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and learning_rate >= 0 are required")


@dataclass
class EpochMetrics:
    epoch: int
    L_walk: float
    L_causal: float
    L_total: float
    dev_accuracy: float | None = None


@dataclass
class TrainResult:
    params: WalkParams
    dictionary: ConfounderDictionary
    history: list[EpochMetrics] = field(default_factory=list)


@dataclass
class EvalResult:
    accuracy: float
    n: int
    mode: str
    precision: dict[str, float]
    recall: dict[str, float]
    predictions: np.ndarray
    gold: np.ndarray

    def as_row(self) -> dict:
        return {"n": self.n, "mode": self.mode, "accuracy": self.accuracy}


class Adam:
    def __init__(self, params: WalkParams, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros(t.shape) for k, t in params.items()}
        self.v = {k: np.zeros(t.shape) for k, t in params.items()}
        self.t = 0

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            if p.grad is None:
                continue
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _gold_index(graph: ClaimEvidenceGraph, config: ModelConfig) -> int:
    if graph.label is None:
        raise ValueError("training and evaluation need labelled graphs")
    return config.label_index(graph.label)


def train(
    graphs: Sequence[ClaimEvidenceGraph],
    model_config: ModelConfig,
    train_config: TrainConfig = TrainConfig(),
    dev: Sequence[ClaimEvidenceGraph] | None = None,
    params: WalkParams | None = None,
    on_epoch: Callable[[EpochMetrics], None] | None = None,
) -> TrainResult:
    """Fit parameters with Adam; fully deterministic for a given seed.

    The confounder dictionary is built once from the initial parameters and
    stays frozen during training.
    """
    graphs = list(graphs)
    if not graphs:
        raise ValueError("empty dataset")
    tc = train_config
    params = params if params is not None else WalkParams.init(model_config, tc.seed)
    dictionary = init_confounder_dictionary(graphs, params, model_config, seed=tc.seed)
    gold = [_gold_index(g, model_config) for g in graphs]
    opt = Adam(params, tc.learning_rate, tc.beta1, tc.beta2, tc.eps)
    rng = np.random.default_rng(tc.seed)
    result = TrainResult(params, dictionary)

    for epoch in range(1, tc.epochs + 1):
        order = rng.permutation(len(graphs))
        sums = np.zeros(3)
        for b, start in enumerate(range(0, len(order), tc.batch_size)):
            batch = order[start : start + tc.batch_size]
            params.zero_grad()
            objective = None
            for i in batch:
                out = forward_causal(graphs[i], params, dictionary, model_config)
                L_causal, L_walk, L_total = compute_losses(out, gold[i])
                sums += (L_walk.item(), L_causal.item(), L_total.item())
                term = L_total if tc.mode == "causal" else L_walk
                if tc.evidence_supervision:
                    sup = evidence_supervision_loss(out, graphs[i])
                    if sup is not None:
                        term = ad.add(term, ad.scale(sup, tc.supervision_weight))
                objective = term if objective is None else ad.add(objective, term)
            objective = ad.scale(objective, 1.0 / len(batch))
            if not np.isfinite(objective.item()):
                norms = ", ".join(f"{k}={v:.3g}" for k, v in params.norms().items())
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch} batch {b}; parameter norms: {norms}"
                )
            ad.backward(objective)
            opt.step()
        means = sums / len(graphs)
        dev_acc = None
        if dev:
            dev_acc = evaluate(dev, params, dictionary, model_config, mode=tc.mode).accuracy
        metrics = EpochMetrics(epoch, *map(float, means), dev_accuracy=dev_acc)
        log.info("epoch %d: %s", epoch, asdict(metrics))
        result.history.append(metrics)
        if on_epoch is not None:
            on_epoch(metrics)
    params.zero_grad()
    return result


def predict_proba(
    graphs: Sequence[ClaimEvidenceGraph],
    params: WalkParams,
    dictionary: ConfounderDictionary,
    config: ModelConfig,
    mode: str = "causal",
    n_jobs: int = 1,
) -> np.ndarray:
    """Class distributions, ``l_causal`` for mode ``causal`` else ``l_pred``."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")

    def one(g):
        with ad.no_grad():
            out = forward_causal(g, params, dictionary, config)
        return out.causal_probs if mode == "causal" else out.walk_probs

    graphs = list(graphs)
    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            rows = list(pool.map(one, graphs))
    else:
        rows = [one(g) for g in graphs]
    return np.array(rows).reshape(len(graphs), config.n_classes)


def evaluate(
    graphs: Sequence[ClaimEvidenceGraph],
    params: WalkParams,
    dictionary: ConfounderDictionary,
    config: ModelConfig,
    mode: str = "causal",
    n_jobs: int = 1,
) -> EvalResult:
    graphs = list(graphs)
    if not graphs:
        raise ValueError("empty dataset")
    gold = np.array([_gold_index(g, config) for g in graphs])
    pred = predict_proba(graphs, params, dictionary, config, mode, n_jobs).argmax(axis=1)
    precision, recall = {}, {}
    for c, label in enumerate(config.labels):
        tp = int(np.sum((pred == c) & (gold == c)))
        n_pred = int(np.sum(pred == c))
        n_gold = int(np.sum(gold == c))
        precision[label] = tp / n_pred if n_pred else math.nan
        recall[label] = tp / n_gold if n_gold else math.nan
    accuracy = float(np.mean(pred == gold))
    return EvalResult(accuracy, len(graphs), mode, precision, recall, pred, gold)


def mean_row_entropy(graphs: Sequence[ClaimEvidenceGraph], params: WalkParams, config: ModelConfig) -> float:
    """Average transition-row entropy over all rows of all graphs."""
    ents = []
    with ad.no_grad():
        for g in graphs:
            if g.n_nodes < 2:
                continue
            ents.append(row_entropy(walk_transitions(node_representations(g, params, config), params)))
    if not ents:
        raise ValueError("no graph with at least two nodes")
    return float(np.mean(np.concatenate(ents)))
