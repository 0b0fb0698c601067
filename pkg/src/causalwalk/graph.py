"""Claim-evidence graphs and stacked graph convolutions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .featurize import FeaturizerConfig, featurize_pair, featurize_sentence

__all__ = [
    "MAX_EVIDENCE",
    "LABELS",
    "ClaimEvidenceGraph",
    "GconvConfig",
    "build_graph",
    "as_graphs",
    "normalized_adjacency",
    "gconv_forward",
]

MAX_EVIDENCE = 20
LABELS = ("SUPPORTS", "REFUTES", "NEI")


@dataclass
class ClaimEvidenceGraph:
    """Node 0 is the claim, nodes ``1..n`` are evidence sentences.

    ``A`` is the binary adjacency without self-loops; self-loops are added
    at convolution time when the convolution config asks for them.
    """

    node_texts: list[str]
    X: np.ndarray
    A: np.ndarray
    label: str | None = None
    evidence_flags: np.ndarray | None = None

    def __post_init__(self):
        n1 = len(self.node_texts)
        if self.X.shape[0] != n1 or self.A.shape != (n1, n1):
            raise ValueError(
                f"graph with {n1} nodes has X of shape {self.X.shape} and A of shape {self.A.shape}"
            )
        if not np.array_equal(self.A, self.A.T):
            raise ValueError("adjacency must be symmetric")
        if self.evidence_flags is not None:
            flags = np.asarray(self.evidence_flags, dtype=bool)
            if flags.shape != (n1,) or not flags[0]:
                raise ValueError("evidence_flags must have one entry per node with the claim flagged")
            self.evidence_flags = flags

    @property
    def n_evidence(self) -> int:
        return len(self.node_texts) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.node_texts)

    @property
    def claim(self) -> str:
        return self.node_texts[0]


def build_graph(
    claim: str,
    evidences: Sequence[str],
    featurizer: FeaturizerConfig = FeaturizerConfig(),
    label: str | None = None,
    evidence_labels: Sequence[int] | None = None,
    max_evidence: int = MAX_EVIDENCE,
) -> ClaimEvidenceGraph:
    """Fully connected graph over the claim and its evidence sentences."""
    evidences = list(evidences)
    if len(evidences) > max_evidence:
        raise ValueError(f"{len(evidences)} evidence sentences exceed the limit of {max_evidence}")
    if label is not None and label not in LABELS:
        raise ValueError(f"unknown label {label!r}; expected one of {LABELS}")
    n1 = len(evidences) + 1
    X = np.empty((n1, featurizer.dim))
    X[0] = featurize_sentence(claim, featurizer)
    for i, ev in enumerate(evidences, start=1):
        X[i] = featurize_pair(ev, claim, featurizer)
    A = np.ones((n1, n1)) - np.eye(n1)
    flags = None
    if evidence_labels is not None:
        if len(evidence_labels) != len(evidences):
            raise ValueError("evidence_labels must match evidence in length")
        flags = np.array([True] + [bool(v) for v in evidence_labels])
    return ClaimEvidenceGraph([claim, *evidences], X, A, label, flags)


def as_graphs(records, featurizer: FeaturizerConfig, max_evidence: int = MAX_EVIDENCE) -> list[ClaimEvidenceGraph]:
    """Accept graphs, ``(claim, evidences)`` pairs, or dataset-style dicts."""
    out = []
    for rec in records:
        if isinstance(rec, ClaimEvidenceGraph):
            out.append(rec)
        elif isinstance(rec, dict):
            out.append(
                build_graph(
                    rec["claim"],
                    rec["evidence"],
                    featurizer,
                    label=rec.get("label"),
                    evidence_labels=rec.get("evidence_labels"),
                    max_evidence=max_evidence,
                )
            )
        else:
            claim, evidences = rec
            out.append(build_graph(claim, evidences, featurizer, max_evidence=max_evidence))
    return out


@dataclass(frozen=True)
class GconvConfig:
    """Graph convolution settings.

    With ``root_weight`` each layer adds a separate self transform,
    ``relu(norm(A) H W + H W_root)``. Without it a fully connected graph with
    self-loops collapses every node onto the mean after one layer.
    """

    layers: int = 2
    hidden_dim: int = 64
    self_loops: bool = True
    degree_normalization: str = "symmetric"
    activation: str = "relu"
    root_weight: bool = True

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("gconv needs at least one layer")
        if self.hidden_dim < 4:
            raise ValueError("hidden_dim must be >= 4")
        if self.degree_normalization not in ("symmetric", "row", "none"):
            raise ValueError(f"unknown degree_normalization {self.degree_normalization!r}")
        if self.activation != "relu":
            raise ValueError("only relu activation is supported")


def normalized_adjacency(A: np.ndarray, config: GconvConfig) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if config.self_loops:
        A = A + np.eye(A.shape[0])
    if config.degree_normalization == "none":
        return A
    deg = A.sum(axis=1)
    if config.degree_normalization == "row":
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        return A * inv[:, None]
    inv_sqrt = np.divide(1.0, np.sqrt(deg), out=np.zeros_like(deg), where=deg > 0)
    return A * inv_sqrt[:, None] * inv_sqrt[None, :]


def gconv_forward(
    graph: ClaimEvidenceGraph,
    weights: Sequence[Tensor],
    config: GconvConfig = GconvConfig(),
    roots: Sequence[Tensor] | None = None,
) -> Tensor:
    """Node representations after ``config.layers`` graph convolutions."""
    if len(weights) != config.layers:
        raise ad.ShapeError(f"gconv: expected {config.layers} weight matrices, got {len(weights)}")
    if config.root_weight and (roots is None or len(roots) != config.layers):
        raise ad.ShapeError("gconv: root_weight needs one root matrix per layer")
    A_hat = Tensor(normalized_adjacency(graph.A, config))
    H = Tensor(graph.X)
    for layer, W in enumerate(weights):
        if W.shape[0] != H.shape[1]:
            raise ad.ShapeError(f"gconv layer {layer}: weight {W.shape} does not accept inputs of width {H.shape[1]}")
        Z = ad.matmul(ad.matmul(A_hat, H), W)
        if config.root_weight:
            Z = ad.add(Z, ad.matmul(H, roots[layer]))
        H = ad.relu(Z)
    return H
