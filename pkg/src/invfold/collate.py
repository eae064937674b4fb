"""Padding-aware batch assembly for the model forward pass."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .geometry import FeatureSet, GraphConfig, ResidueGraph, featurize
from .structure import BackboneStructure
from .vocab import PAD


@dataclass
class BatchItem:
    tokens: np.ndarray  # (L,) int64, already masked as desired
    features: FeatureSet
    graph: ResidueGraph
    targets: np.ndarray | None = None
    loss_mask: np.ndarray | None = None


@dataclass
class Batch:
    tokens: torch.Tensor  # (B, L) int64
    pad_mask: torch.Tensor  # (B, L) bool, True at real residues
    positions: torch.Tensor  # (B, L) int64
    node: torch.Tensor  # (B, L, Dn)
    edge: torch.Tensor  # (B, L, K, De)
    neighbors: torch.Tensor  # (B, L, K) int64
    edge_mask: torch.Tensor  # (B, L, K) bool
    targets: torch.Tensor | None
    loss_mask: torch.Tensor | None
    lengths: list[int]


def make_item(
    structure: BackboneStructure,
    tokens: np.ndarray,
    config: GraphConfig,
    targets: np.ndarray | None = None,
    loss_mask: np.ndarray | None = None,
) -> BatchItem:
    features, graph = featurize(structure, config)
    return BatchItem(
        tokens=np.asarray(tokens, dtype=np.int64),
        features=features,
        graph=graph,
        targets=targets,
        loss_mask=loss_mask,
    )


def collate(items: list[BatchItem], dtype=torch.float32, device="cpu") -> Batch:
    if not items:
        raise ValueError("empty batch")
    bsz = len(items)
    lengths = [len(it.tokens) for it in items]
    max_len = max(lengths)
    max_k = max(it.graph.neighbors.shape[1] for it in items)
    node_dim = items[0].features.node.shape[1]
    edge_dim = items[0].features.edge.shape[2] if items[0].features.edge.ndim == 3 else 0

    tokens = np.full((bsz, max_len), PAD, dtype=np.int64)
    pad_mask = np.zeros((bsz, max_len), dtype=bool)
    node = np.zeros((bsz, max_len, node_dim))
    edge = np.zeros((bsz, max_len, max_k, edge_dim))
    neighbors = np.zeros((bsz, max_len, max_k), dtype=np.int64)
    edge_mask = np.zeros((bsz, max_len, max_k), dtype=bool)
    has_targets = all(it.targets is not None for it in items)
    targets = np.zeros((bsz, max_len), dtype=np.int64) if has_targets else None
    loss_mask = np.zeros((bsz, max_len), dtype=bool) if has_targets else None

    for row, it in enumerate(items):
        L = lengths[row]
        k_eff = it.graph.neighbors.shape[1]
        tokens[row, :L] = it.tokens
        pad_mask[row, :L] = True
        node[row, :L] = it.features.node
        if k_eff:
            edge[row, :L, :k_eff] = it.features.edge
            neighbors[row, :L, :k_eff] = it.graph.neighbors
            edge_mask[row, :L, :k_eff] = True
        if has_targets:
            targets[row, :L] = it.targets
            if it.loss_mask is not None:
                loss_mask[row, :L] = it.loss_mask

    positions = np.tile(np.arange(max_len, dtype=np.int64), (bsz, 1))
    as_t = lambda a, dt: torch.as_tensor(a, dtype=dt, device=device)  # noqa: E731
    return Batch(
        tokens=as_t(tokens, torch.int64),
        pad_mask=as_t(pad_mask, torch.bool),
        positions=as_t(positions, torch.int64),
        node=as_t(node, dtype),
        edge=as_t(edge, dtype),
        neighbors=as_t(neighbors, torch.int64),
        edge_mask=as_t(edge_mask, torch.bool),
        targets=as_t(targets, torch.int64) if has_targets else None,
        loss_mask=as_t(loss_mask, torch.bool) if has_targets else None,
        lengths=lengths,
    )
