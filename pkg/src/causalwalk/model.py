"""The causal walk estimator: walk-sampled paths plus deconfounded path classification.

The prediction for a claim-evidence graph is a front-door style mixture:
paths sampled from a learned random walk carry the effect of the graph on
the path, and each path is classified with a head that mixes in an
expectation over a frozen per-class dictionary of graph representations.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .graph import LABELS, ClaimEvidenceGraph, GconvConfig, gconv_forward
from .kmeans import kmeans
from .walk import (
    BeamSet,
    ReasoningPath,
    TransitionMatrix,
    beam_search_paths,
    edge_scores,
    path_log_probs,
    transition_probs,
)

__all__ = [
    "ModelConfig",
    "WalkParams",
    "ConfounderDictionary",
    "ModelOutput",
    "node_representations",
    "graph_summary",
    "lstm_cell",
    "encode_path",
    "encode_paths",
    "path_only_classify",
    "expected_graph_rep",
    "intervene",
    "walk_transitions",
    "forward_causal",
    "compute_losses",
    "evidence_supervision_loss",
    "init_confounder_dictionary",
    "LOG_CLAMP",
]

LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class ModelConfig:
    feature_dim: int = 256
    hidden_dim: int = 64
    layers: int = 2
    beam_width: int = 3
    max_len: int = 5
    alpha: float = 0.1
    n_clusters: int = 5
    labels: tuple[str, ...] = ("SUPPORTS", "REFUTES", "NEI")
    self_loops: bool = True
    degree_normalization: str = "symmetric"
    root_weight: bool = True

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) < 2 or any(l not in LABELS for l in self.labels):
            raise ValueError(f"labels must be at least two of {LABELS}, got {self.labels}")
        if self.beam_width < 1 or self.max_len < 1 or self.n_clusters < 1:
            raise ValueError("beam_width, max_len and n_clusters must be positive")

    @property
    def n_classes(self) -> int:
        return len(self.labels)

    @property
    def gconv(self) -> GconvConfig:
        return GconvConfig(
            layers=self.layers,
            hidden_dim=self.hidden_dim,
            self_loops=self.self_loops,
            degree_normalization=self.degree_normalization,
            root_weight=self.root_weight,
        )

    def label_index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValueError(f"label {label!r} is not one of {self.labels}") from None


class WalkParams:
    """Named parameter tensors of the whole model.

    Layout (``d`` hidden width, ``F`` feature width, ``N`` classes):

    - ``gconv.<l>.weight`` / ``gconv.<l>.root``: ``F x d`` then ``d x d``
    - ``edge.*``: edge-score MLP, hidden width ``d``, tanh
    - ``attn.*``: graph-attention MLP over ``(x_0, x_i)``
    - ``lstm.W_x``, ``lstm.W_h`` (``d x 4d``, gate order i, f, g, o), ``lstm.b``
    - ``W_r``, ``W_g`` (``N x d``), ``W_q``, ``W_k`` (``d x d``)
    - ``classifier.W`` (``N x d``), ``classifier.b`` (``1 x N``)
    """

    def __init__(self, tensors: "OrderedDict[str, Tensor]"):
        self.tensors = OrderedDict(tensors)
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t.data)):
                raise ValueError(f"parameter {name} has non-finite entries")

    @classmethod
    def shapes(cls, config: ModelConfig) -> "OrderedDict[str, tuple[int, int]]":
        F, d, N = config.feature_dim, config.hidden_dim, config.n_classes
        s: OrderedDict[str, tuple[int, int]] = OrderedDict()
        for l in range(config.layers):
            fan_in = F if l == 0 else d
            s[f"gconv.{l}.weight"] = (fan_in, d)
            if config.root_weight:
                s[f"gconv.{l}.root"] = (fan_in, d)
        s.update(
            {
                "edge.W_i": (d, d),
                "edge.W_j": (d, d),
                "edge.W_0": (d, d),
                "edge.b1": (1, d),
                "edge.w2": (d, 1),
                "edge.b2": (1, 1),
                "attn.W_0": (d, d),
                "attn.W_e": (d, d),
                "attn.b1": (1, d),
                "attn.w2": (d, 1),
                "attn.b2": (1, 1),
                "lstm.W_x": (d, 4 * d),
                "lstm.W_h": (d, 4 * d),
                "lstm.b": (1, 4 * d),
                "W_r": (N, d),
                "W_g": (N, d),
                "W_q": (d, d),
                "W_k": (d, d),
                "classifier.W": (N, d),
                "classifier.b": (1, N),
            }
        )
        return s

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0) -> "WalkParams":
        """Glorot-uniform weights, zero biases."""
        rng = np.random.default_rng(seed)
        tensors = OrderedDict()
        for name, shape in cls.shapes(config).items():
            if shape[0] == 1 or name.endswith(".b2"):
                values = np.zeros(shape)
            else:
                fan_in, fan_out = shape
                if name.startswith("lstm."):
                    fan_out //= 4
                limit = np.sqrt(6.0 / (fan_in + fan_out))
                values = rng.uniform(-limit, limit, size=shape)
            tensors[name] = Tensor(values, requires_grad=True)
        return cls(tensors)

    @classmethod
    def zeros(cls, config: ModelConfig) -> "WalkParams":
        return cls(
            OrderedDict(
                (name, Tensor(np.zeros(shape), requires_grad=True))
                for name, shape in cls.shapes(config).items()
            )
        )

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __setitem__(self, name: str, value) -> None:
        self.tensors[name].data = np.array(value, dtype=np.float64).reshape(self.tensors[name].shape)

    def __iter__(self):
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def values(self):
        return self.tensors.values()

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def copy(self) -> "WalkParams":
        return WalkParams(
            OrderedDict((k, Tensor(t.data.copy(), requires_grad=True)) for k, t in self.tensors.items())
        )

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.tensors.items()}

    def norms(self) -> dict[str, float]:
        return {k: float(np.linalg.norm(t.data)) for k, t in self.tensors.items()}


@dataclass
class ConfounderDictionary:
    """Per-class cluster centres of graph representations, shape ``N x k x d``."""

    D_g: np.ndarray
    frozen: bool = True

    def __post_init__(self):
        self.D_g = np.asarray(self.D_g, dtype=np.float64)
        if self.D_g.ndim != 3:
            raise ValueError(f"dictionary must be N x k x d, got shape {self.D_g.shape}")
        if not np.all(np.isfinite(self.D_g)):
            raise ValueError("dictionary centres must be finite")

    @property
    def n_classes(self) -> int:
        return self.D_g.shape[0]

    @property
    def k(self) -> int:
        return self.D_g.shape[1]


@dataclass
class ModelOutput:
    l_causal: Tensor
    l_pred: Tensor
    beam: BeamSet
    transitions: TransitionMatrix | None
    path_weights: Tensor
    per_path: list[tuple[ReasoningPath, np.ndarray, np.ndarray]] = field(default_factory=list)

    @property
    def causal_probs(self) -> np.ndarray:
        return self.l_causal.data[0]

    @property
    def walk_probs(self) -> np.ndarray:
        return self.l_pred.data[0]


def _ones(rows: int, cols: int = 1) -> Tensor:
    return Tensor(np.ones((rows, cols)))


def _add_bias(x: Tensor, b: Tensor) -> Tensor:
    return ad.add(x, ad.matmul(_ones(x.shape[0]), b))


def node_representations(graph: ClaimEvidenceGraph, params: WalkParams, config: ModelConfig) -> Tensor:
    weights = [params[f"gconv.{l}.weight"] for l in range(config.layers)]
    roots = [params[f"gconv.{l}.root"] for l in range(config.layers)] if config.root_weight else None
    return gconv_forward(graph, weights, config.gconv, roots)


def graph_summary(H: Tensor, params: WalkParams) -> Tensor:
    """Attention-pooled evidence representation ``x_g`` as a ``1 x d`` row.

    Scores come from ``MLP(x_0, x_i)`` and are softmaxed over evidence nodes
    only. A claim-only graph yields the zero vector.
    """
    n = H.shape[0] - 1
    if n == 0:
        return Tensor(np.zeros((1, H.shape[1])))
    ev = ad.select(H, np.arange(1, n + 1))
    claim = ad.select(H, np.zeros(n, dtype=int))
    pre = ad.add(ad.matmul(claim, params["attn.W_0"]), ad.matmul(ev, params["attn.W_e"]))
    hidden = ad.tanh(_add_bias(pre, params["attn.b1"]))
    scores = _add_bias(ad.matmul(hidden, params["attn.w2"]), params["attn.b2"])
    alpha = ad.softmax(ad.reshape(scores, (1, n)))
    return ad.matmul(alpha, ev)


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, params: WalkParams) -> tuple[Tensor, Tensor]:
    """One LSTM step on a batch of rows; returns the new ``(h, c)``."""
    d = h.shape[1]
    gates = _add_bias(
        ad.add(ad.matmul(x, params["lstm.W_x"]), ad.matmul(h, params["lstm.W_h"])), params["lstm.b"]
    )
    i = ad.sigmoid(ad.columns(gates, 0, d))
    f = ad.sigmoid(ad.columns(gates, d, 2 * d))
    g = ad.tanh(ad.columns(gates, 2 * d, 3 * d))
    o = ad.sigmoid(ad.columns(gates, 3 * d, 4 * d))
    c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
    h_new = ad.mul(o, ad.tanh(c_new))
    return h_new, c_new


def encode_paths(paths: Sequence[Sequence[int]], H: Tensor, x_g: Tensor, params: WalkParams) -> Tensor:
    """Final LSTM hidden state for each path (equal lengths), ``w x d``.

    Both the hidden and the cell state start from the graph summary ``x_g``.
    """
    lengths = {len(p) for p in paths}
    if len(lengths) != 1:
        raise ValueError("encode_paths needs paths of equal length")
    for p in paths:
        if p[0] != 0 or max(p) >= H.shape[0] or min(p) < 0:
            raise ValueError(f"path {tuple(p)} is not valid for a graph with {H.shape[0]} nodes")
    w = len(paths)
    h = ad.matmul(_ones(w), x_g)
    c = h
    for t in range(lengths.pop()):
        x = ad.select(H, [p[t] for p in paths])
        h, c = lstm_cell(x, h, c, params)
    return h


def encode_path(path: Sequence[int], H: Tensor, x_g: Tensor, params: WalkParams) -> Tensor:
    return encode_paths([path], H, x_g, params)


def path_only_classify(X_r: Tensor, params: WalkParams) -> Tensor:
    logits = _add_bias(ad.matmul(X_r, ad.transpose(params["classifier.W"])), params["classifier.b"])
    return ad.softmax(logits)


def expected_graph_rep(X_r: Tensor, l_r: Tensor, dictionary: ConfounderDictionary, params: WalkParams) -> Tensor:
    """Dictionary expectation of the graph representation, one row per path.

    For each class the path representation attends over that class's
    centres (``Q = W_q x_r``, ``K = W_k z``), and the attended centres are
    mixed by the path-only class probabilities and scaled by ``1/N``.
    """
    if not dictionary.frozen:
        raise ValueError("confounder dictionary must be frozen before use")
    N, _, d = dictionary.D_g.shape
    if l_r.shape[1] != N:
        raise ad.ShapeError(f"l_r has {l_r.shape[1]} classes, dictionary has {N}")
    Q = ad.matmul(X_r, ad.transpose(params["W_q"]))
    Wk_t = ad.transpose(params["W_k"])
    spread = _ones(1, d)
    total = None
    for i in range(N):
        Z = Tensor(dictionary.D_g[i])
        K = ad.matmul(Z, Wk_t)
        att = ad.softmax(ad.matmul(Q, ad.transpose(K)))
        z_prime = ad.matmul(att, Z)
        weight = ad.matmul(ad.columns(l_r, i, i + 1), spread)
        term = ad.mul(weight, z_prime)
        total = term if total is None else ad.add(total, term)
    return ad.scale(total, 1.0 / N)


def intervene(X_r: Tensor, E_xg: Tensor, params: WalkParams, alpha: float = 0.1) -> Tensor:
    """``softmax(W_r x_r + alpha W_g E[x_g])`` for each path row."""
    logits = ad.matmul(X_r, ad.transpose(params["W_r"]))
    if alpha != 0.0:
        logits = ad.add(logits, ad.scale(ad.matmul(E_xg, ad.transpose(params["W_g"])), alpha))
    return ad.softmax(logits)


def walk_transitions(H: Tensor, params: WalkParams) -> TransitionMatrix:
    a = edge_scores(
        H,
        params["edge.W_i"],
        params["edge.W_j"],
        params["edge.W_0"],
        params["edge.b1"],
        params["edge.w2"],
        params["edge.b2"],
    )
    return transition_probs(a)


def forward_causal(
    graph: ClaimEvidenceGraph,
    params: WalkParams,
    dictionary: ConfounderDictionary,
    config: ModelConfig,
    keep_paths: bool = False,
) -> ModelOutput:
    """Full forward pass producing ``l_causal`` and ``l_pred`` (both ``1 x N``).

    Beam paths are weighted by their walk probabilities renormalized over the
    beam; the selection itself is treated as a constant.
    """
    H = node_representations(graph, params, config)
    x_g = graph_summary(H, params)
    if graph.n_nodes == 1:
        T = None
        beam = BeamSet([ReasoningPath((0,), 0.0)], config.beam_width)
    else:
        T = walk_transitions(H, params)
        beam = beam_search_paths(T, config.beam_width, config.max_len)
    paths = [p.nodes for p in beam]
    if T is None:
        weights = Tensor(np.ones((1, 1)))
    else:
        weights = ad.softmax(path_log_probs(paths, T))
    X_r = encode_paths(paths, H, x_g, params)
    l_r = path_only_classify(X_r, params)
    E_xg = expected_graph_rep(X_r, l_r, dictionary, params)
    do_r = intervene(X_r, E_xg, params, config.alpha)
    l_causal = ad.matmul(weights, do_r)
    l_pred = ad.matmul(weights, l_r)
    per_path = []
    if keep_paths:
        per_path = [(p, l_r.data[k].copy(), do_r.data[k].copy()) for k, p in enumerate(beam)]
    return ModelOutput(l_causal, l_pred, beam, T, weights, per_path)


def _nll(probs: Tensor, gold: int) -> Tensor:
    p = ad.columns(probs, gold, gold + 1)
    if p.data[0, 0] < LOG_CLAMP:
        p = Tensor([[LOG_CLAMP]])
    return ad.scale(ad.log(p), -1.0)


def compute_losses(output: ModelOutput, gold: int | np.ndarray) -> tuple[Tensor, Tensor, Tensor]:
    """Cross-entropies of ``l_causal`` and ``l_pred`` against the gold class.

    ``gold`` is a class index or a one-hot vector. Returns
    ``(L_causal, L_walk, L_total)`` with ``L_total = L_walk + L_causal``.
    """
    if not np.isscalar(gold):
        onehot = np.asarray(gold)
        if onehot.ndim != 1 or onehot.sum() != 1 or set(np.unique(onehot)) - {0, 1}:
            raise ValueError("gold label must be a class index or a one-hot vector")
        gold = int(onehot.argmax())
    gold = int(gold)
    L_causal = _nll(output.l_causal, gold)
    L_walk = _nll(output.l_pred, gold)
    return L_causal, L_walk, ad.add(L_walk, L_causal)


def evidence_supervision_loss(output: ModelOutput, graph: ClaimEvidenceGraph) -> Tensor | None:
    """Cross-entropy pulling transition rows towards gold-evidence columns.

    Rows of the claim and of each gold evidence node get a uniform target over
    the other gold evidence nodes. Returns ``None`` when there is nothing to
    supervise.
    """
    if output.transitions is None or graph.evidence_flags is None:
        return None
    flags = graph.evidence_flags
    gold = [j for j in range(1, graph.n_nodes) if flags[j]]
    if not gold:
        return None
    n1 = graph.n_nodes
    idx, weights = [], []
    rows = [0] + gold
    for i in rows:
        targets = [j for j in gold if j != i]
        for j in targets:
            idx.append(i * n1 + j)
            weights.append(1.0 / (len(targets) * len(rows)))
    if not idx:
        return None
    logp = ad.log(ad.select(ad.reshape(output.transitions.P, (n1 * n1, 1)), idx))
    return ad.scale(ad.matmul(Tensor([weights]), logp), -1.0)


def init_confounder_dictionary(
    graphs: Iterable[ClaimEvidenceGraph],
    params: WalkParams,
    config: ModelConfig,
    seed: int = 0,
) -> ConfounderDictionary:
    """K-Means centres of ``x_g`` per gold class, computed once and frozen."""
    reps: dict[str, list[np.ndarray]] = {l: [] for l in config.labels}
    for g in graphs:
        if g.label is None:
            raise ValueError("dictionary initialization needs labelled graphs")
        H = node_representations(g, params, config)
        reps[g.label].append(graph_summary(H, params).data[0])
    rng = np.random.default_rng(seed)
    centers = []
    for label in config.labels:
        pts = reps[label]
        if len(pts) < config.n_clusters:
            raise ValueError(
                f"class {label} has {len(pts)} training graphs, fewer than k={config.n_clusters}"
            )
        centers.append(kmeans(np.array(pts), config.n_clusters, seed=rng).centers)
    return ConfounderDictionary(np.stack(centers), frozen=True)
