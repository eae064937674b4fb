"""Structural adapter: cross-attention from sequence states into structure.

One adapter sits after the LM's last layer. It queries the structure-encoder
states with the LM states (rotary embeddings on Q and K over the shared
residue index), then applies a bottleneck feed-forward (d -> d/2 -> d). Both
residual branches end in zero-initialized projections, so at initialization
the adapter passes LM states through untouched and fine-tuning starts from
the pretrained model's behavior. A linear design head maps fused states to
the 20 amino-acid logits.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .lm import apply_rope, attention, rope_tables
from .vocab import N_AMINO_ACIDS


@dataclass
class AdapterConfig:
    d_model: int  # LM width (query side)
    d_struct: int  # encoder width (key/value side)
    n_heads: int = 4
    rope_base: float = 10000.0
    zero_init_output: bool = True

    def __post_init__(self):
        if self.d_model % 2 != 0:
            raise ValueError("d_model must be even (bottleneck is d_model/2)")
        if self.d_model % self.n_heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by {self.n_heads} heads"
            )
        if (self.d_model // self.n_heads) % 2 != 0:
            raise ValueError("head dimension must be even for rotary embeddings")

    @property
    def bottleneck_dim(self) -> int:
        return self.d_model // 2


class StructuralAdapter(nn.Module):
    def __init__(self, config: AdapterConfig):
        super().__init__()
        self.config = config
        d, ds = config.d_model, config.d_struct
        self.n_heads = config.n_heads
        self.head_dim = d // config.n_heads
        self.norm_attn = nn.LayerNorm(d)
        self.q_proj = nn.Linear(d, d)
        self.k_proj = nn.Linear(ds, d)
        self.v_proj = nn.Linear(ds, d)
        self.out_proj = nn.Linear(d, d)
        self.norm_ffn = nn.LayerNorm(d)
        self.w_down = nn.Linear(d, config.bottleneck_dim)
        self.w_up = nn.Linear(config.bottleneck_dim, d)
        self.act = nn.GELU()
        self.design_head = nn.Linear(d, N_AMINO_ACIDS)
        nn.init.normal_(self.design_head.weight, std=0.01)
        nn.init.zeros_(self.design_head.bias)
        if config.zero_init_output:
            nn.init.zeros_(self.out_proj.weight)
            nn.init.zeros_(self.out_proj.bias)
            nn.init.zeros_(self.w_up.weight)
            nn.init.zeros_(self.w_up.bias)

    def _split(self, x):
        bsz, length, _ = x.shape
        return x.view(bsz, length, self.n_heads, self.head_dim).transpose(1, 2)

    def forward(self, seq_states, struct_states, pad_mask, positions=None):
        """(B, L, d_model) x (B, L, d_struct) -> (fused states, design logits).

        pad_mask is shared between the two sides (they are residue-aligned);
        positions default to 0..L-1 and index the rotary tables on both Q
        (sequence side) and K (structure side).
        """
        if seq_states.shape[:2] != struct_states.shape[:2]:
            raise ValueError(
                f"sequence states {tuple(seq_states.shape)} and structure states "
                f"{tuple(struct_states.shape)} are not residue-aligned"
            )
        dtype = seq_states.dtype
        bsz, length, _ = seq_states.shape
        if pad_mask is None:
            pad_mask = torch.ones(
                bsz, length, dtype=torch.bool, device=seq_states.device
            )
        if positions is None:
            positions = torch.arange(length, device=seq_states.device)
            positions = positions.unsqueeze(0).expand(bsz, -1)
        cos, sin = rope_tables(positions.to(dtype), self.head_dim, self.config.rope_base)
        cos = cos.unsqueeze(1)
        sin = sin.unsqueeze(1)
        q = apply_rope(self._split(self.q_proj(self.norm_attn(seq_states))), cos, sin)
        k = apply_rope(self._split(self.k_proj(struct_states)), cos, sin)
        v = self._split(self.v_proj(struct_states))
        attn = attention(q, k, v, pad_mask)
        attn = attn.transpose(1, 2).reshape(bsz, length, -1)
        h = seq_states + self.out_proj(attn)
        h = h + self.w_up(self.act(self.w_down(self.norm_ffn(h))))
        return h, self.design_head(h)


def trainable_ratio(model: nn.Module):
    """(trainable, total, ratio) over a module's parameters, honoring
    requires_grad flags set by the training mode."""
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    total = sum(p.numel() for p in model.parameters())
    return trainable, total, trainable / total if total else 0.0
