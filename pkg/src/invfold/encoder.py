"""Message-passing encoder over the residue k-NN graph.

Each layer computes messages m_ij = MLP([h_i; h_j; e_ij]) over the directed
neighbor lists, aggregates by mean, and applies residual + LayerNorm followed
by a feed-forward residual block. A linear head on the final states gives
per-residue amino-acid proposal logits, which double as the initialization
distribution for iterative decoding.

Neighbor lists are sorted (distance, then position), so summation order is
fixed and consistently permuting the inputs permutes the outputs exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from .geometry import GraphConfig
from .vocab import N_AMINO_ACIDS


@dataclass
class EncoderConfig:
    d_model: int = 128
    n_layers: int = 3
    dropout: float = 0.0
    graph: GraphConfig = field(default_factory=GraphConfig)

    def __post_init__(self):
        if isinstance(self.graph, dict):
            self.graph = GraphConfig(**self.graph)
        if self.d_model < 1:
            raise ValueError(f"d_model must be positive, got {self.d_model}")
        if self.n_layers < 0:
            raise ValueError(f"n_layers must be >= 0, got {self.n_layers}")


class MessagePassingLayer(nn.Module):
    def __init__(self, d_model: int, edge_dim: int, dropout: float):
        super().__init__()
        self.message = nn.Sequential(
            nn.Linear(2 * d_model + edge_dim, d_model),
            nn.GELU(),
            nn.Linear(d_model, d_model),
            nn.GELU(),
            nn.Linear(d_model, d_model),
        )
        self.norm1 = nn.LayerNorm(d_model)
        self.norm2 = nn.LayerNorm(d_model)
        self.ffn = nn.Sequential(
            nn.Linear(d_model, 2 * d_model), nn.GELU(), nn.Linear(2 * d_model, d_model)
        )
        self.drop = nn.Dropout(dropout)

    def forward(self, h, edge, neighbors, edge_mask):
        bsz, length, k = neighbors.shape
        if k == 0:
            agg = torch.zeros_like(h)
        else:
            idx = neighbors.reshape(bsz, length * k, 1).expand(-1, -1, h.size(-1))
            h_j = torch.gather(h, 1, idx).reshape(bsz, length, k, -1)
            h_i = h.unsqueeze(2).expand(-1, -1, k, -1)
            m = self.message(torch.cat([h_i, h_j, edge], dim=-1))
            m = m * edge_mask.unsqueeze(-1)
            count = edge_mask.sum(dim=-1, keepdim=True).clamp(min=1)
            agg = m.sum(dim=2) / count
        h = self.norm1(h + self.drop(agg))
        h = self.norm2(h + self.drop(self.ffn(h)))
        return h


class StructureEncoder(nn.Module):
    """Returns (states, proposal_logits). With n_layers=0 the states are just
    the node-feature projection. Padded rows come back zeroed."""

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        self.embed = nn.Linear(config.graph.node_dim, config.d_model)
        self.layers = nn.ModuleList(
            MessagePassingLayer(config.d_model, config.graph.edge_dim, config.dropout)
            for _ in range(config.n_layers)
        )
        self.proposal_head = nn.Linear(config.d_model, N_AMINO_ACIDS)
        nn.init.normal_(self.proposal_head.weight, std=0.01)
        nn.init.zeros_(self.proposal_head.bias)

    def forward(self, node, edge, neighbors, pad_mask, edge_mask):
        h = self.embed(node)
        for layer in self.layers:
            h = layer(h, edge, neighbors, edge_mask)
        h = h * pad_mask.unsqueeze(-1)
        return h, self.proposal_head(h)
