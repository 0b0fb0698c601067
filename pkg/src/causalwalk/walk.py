"""Edge scoring, transition probabilities and beam-searched reasoning paths."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

__all__ = [
    "TransitionMatrix",
    "ReasoningPath",
    "BeamSet",
    "edge_scores",
    "transition_probs",
    "path_probability",
    "path_log_probs",
    "beam_search_paths",
    "row_entropy",
]


@dataclass
class TransitionMatrix:
    """Row-stochastic jump probabilities restricted to ``neighbor_mask``."""

    P: Tensor
    neighbor_mask: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.P.data

    @property
    def n_nodes(self) -> int:
        return self.neighbor_mask.shape[0]


@dataclass(frozen=True)
class ReasoningPath:
    nodes: tuple[int, ...]
    log_prob: float

    @property
    def prob(self) -> float:
        return math.exp(self.log_prob)

    @property
    def length(self) -> int:
        return len(self.nodes)


@dataclass
class BeamSet:
    paths: list[ReasoningPath] = field(default_factory=list)
    width: int = 3

    def __len__(self) -> int:
        return len(self.paths)

    def __iter__(self):
        return iter(self.paths)


def _ones(rows: int) -> Tensor:
    return Tensor(np.ones((rows, 1)))


def edge_scores(H: Tensor, W_i: Tensor, W_j: Tensor, W_0: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Tensor:
    """Score ``a[i, j] = MLP(x_i, x_j, x_0)`` for every ordered node pair.

    The hidden layer acts on the concatenation ``[x_i; x_j; x_0]``; its weight
    is kept as the three row blocks ``W_i``, ``W_j``, ``W_0`` so each block is
    applied once per node instead of once per pair.
    """
    n1 = H.shape[0]
    if n1 < 1:
        raise ad.ShapeError("edge_scores: graph has no nodes")
    rows = np.repeat(np.arange(n1), n1)
    cols = np.tile(np.arange(n1), n1)
    pre = ad.add(ad.select(ad.matmul(H, W_i), rows), ad.select(ad.matmul(H, W_j), cols))
    pre = ad.add(pre, ad.select(ad.matmul(H, W_0), np.zeros(n1 * n1, dtype=int)))
    ones = _ones(n1 * n1)
    pre = ad.add(pre, ad.matmul(ones, b1))
    out = ad.add(ad.matmul(ad.tanh(pre), w2), ad.matmul(ones, b2))
    return ad.reshape(out, (n1, n1))


def transition_probs(a: Tensor, neighbor_mask: np.ndarray | None = None) -> TransitionMatrix:
    """Masked row softmax of edge scores over each node's neighbours."""
    n1 = a.shape[0]
    if neighbor_mask is None:
        neighbor_mask = ~np.eye(n1, dtype=bool)
    neighbor_mask = np.asarray(neighbor_mask, dtype=bool)
    if neighbor_mask.shape != a.shape:
        raise ad.ShapeError(f"transition_probs: mask {neighbor_mask.shape} vs scores {a.shape}")
    empty = np.flatnonzero(~neighbor_mask.any(axis=1))
    if empty.size:
        raise ValueError(f"transition_probs: node {int(empty[0])} has no neighbours")
    penalty = np.where(neighbor_mask, 0.0, -np.inf)
    return TransitionMatrix(ad.softmax(ad.add(a, Tensor(penalty))), neighbor_mask)


def _check_step(T: TransitionMatrix, i: int, j: int) -> None:
    if not T.neighbor_mask[i, j]:
        raise ValueError(f"path step {i}->{j} is not an edge of the graph")


def path_probability(path: Sequence[int], T: TransitionMatrix) -> float:
    """Product of step transition probabilities, accumulated in log space."""
    P = T.values
    logp = 0.0
    for i, j in zip(path[:-1], path[1:]):
        _check_step(T, i, j)
        logp += math.log(P[i, j])
    return math.exp(logp)


def path_log_probs(paths: Sequence[Sequence[int]], T: TransitionMatrix) -> Tensor:
    """Differentiable log walk-probabilities of ``paths`` as a ``(1, len(paths))`` row."""
    n1 = T.n_nodes
    flat_idx = []
    owner = []
    for p, nodes in enumerate(paths):
        for i, j in zip(nodes[:-1], nodes[1:]):
            _check_step(T, i, j)
            flat_idx.append(i * n1 + j)
            owner.append(p)
    if not flat_idx:
        return Tensor(np.zeros((1, len(paths))))
    membership = np.zeros((len(flat_idx), len(paths)))
    membership[np.arange(len(flat_idx)), owner] = 1.0
    steps = ad.log(ad.select(ad.reshape(T.P, (n1 * n1, 1)), flat_idx))
    return ad.matmul(ad.transpose(steps), Tensor(membership))


def beam_search_paths(T: TransitionMatrix, width: int = 3, max_len: int = 5) -> BeamSet:
    """Top-``width`` node-distinct walks from the claim node.

    Every path has ``min(max_len + 1, n_nodes)`` nodes and never revisits a
    node. Candidates are ranked by log probability; ties go to the
    lexicographically smaller node sequence, i.e. the smaller next node.
    """
    if width < 1 or max_len < 1:
        raise ValueError("beam width and max_len must be >= 1")
    P = T.values
    mask = T.neighbor_mask
    n1 = T.n_nodes
    target = min(max_len + 1, n1)
    with np.errstate(divide="ignore"):
        logP = np.log(P)
    beams: list[tuple[tuple[int, ...], float]] = [((0,), 0.0)]
    for _ in range(target - 1):
        candidates = []
        for nodes, lp in beams:
            last = nodes[-1]
            visited = set(nodes)
            for j in range(n1):
                if mask[last, j] and j not in visited:
                    candidates.append((nodes + (j,), lp + logP[last, j]))
        candidates.sort(key=lambda c: (-c[1], c[0]))
        beams = candidates[:width]
    return BeamSet([ReasoningPath(nodes, float(lp)) for nodes, lp in beams], width)


def row_entropy(T: TransitionMatrix | np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) of each transition row."""
    P = T.values if isinstance(T, TransitionMatrix) else np.asarray(T)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, -P * np.log(P), 0.0)
    return terms.sum(axis=1)
