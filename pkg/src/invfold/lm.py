"""Bidirectional masked language model with rotary position embeddings.

Pre-norm transformer blocks; rotary embeddings rotate query/key pairs by the
absolute residue index, so attention logits depend only on relative offsets
(prepending attention-masked padding shifts nothing at content positions).
The output head scores the full vocabulary; training loss is restricted to
the 20 amino-acid columns since targets are always amino acids.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import rand
from .vocab import MASK, N_AMINO_ACIDS, PAD, VOCAB_SIZE


class LMError(ValueError):
    pass


@dataclass
class LMConfig:
    vocab_size: int = VOCAB_SIZE
    d_model: int = 256
    n_layers: int = 4
    n_heads: int = 4
    ffn_dim: int | None = None
    dropout: float = 0.0
    rope_base: float = 10000.0

    def __post_init__(self):
        if self.ffn_dim is None:
            self.ffn_dim = 4 * self.d_model
        if self.d_model % self.n_heads != 0:
            raise LMError(f"d_model {self.d_model} not divisible by {self.n_heads} heads")
        if (self.d_model // self.n_heads) % 2 != 0:
            raise LMError("head dimension must be even for rotary embeddings")


def rope_tables(positions: torch.Tensor, head_dim: int, base: float):
    """cos/sin tables of shape (..., L, head_dim/2) for integer positions."""
    half = head_dim // 2
    inv_freq = base ** (
        -torch.arange(half, dtype=positions.dtype, device=positions.device) * 2.0 / head_dim
    )
    angles = positions.unsqueeze(-1) * inv_freq
    return torch.cos(angles), torch.sin(angles)


def apply_rope(x: torch.Tensor, cos: torch.Tensor, sin: torch.Tensor) -> torch.Tensor:
    """Rotate interleaved (even, odd) feature pairs of x (..., L, head_dim)."""
    x1 = x[..., 0::2]
    x2 = x[..., 1::2]
    y1 = x1 * cos - x2 * sin
    y2 = x1 * sin + x2 * cos
    return torch.stack((y1, y2), dim=-1).flatten(-2)


def attention(q, k, v, pad_mask):
    """Scaled dot-product attention; pad_mask (B, L) True for real tokens."""
    scores = torch.matmul(q, k.transpose(-2, -1)) / math.sqrt(q.size(-1))
    scores = scores.masked_fill(~pad_mask[:, None, None, :], float("-inf"))
    return torch.matmul(torch.softmax(scores, dim=-1), v)


class SelfAttention(nn.Module):
    def __init__(self, config: LMConfig):
        super().__init__()
        d = config.d_model
        self.n_heads = config.n_heads
        self.head_dim = d // config.n_heads
        self.q_proj = nn.Linear(d, d)
        self.k_proj = nn.Linear(d, d)
        self.v_proj = nn.Linear(d, d)
        self.out_proj = nn.Linear(d, d)

    def _split(self, x):
        bsz, length, _ = x.shape
        return x.view(bsz, length, self.n_heads, self.head_dim).transpose(1, 2)

    def forward(self, x, pad_mask, cos, sin):
        q = apply_rope(self._split(self.q_proj(x)), cos, sin)
        k = apply_rope(self._split(self.k_proj(x)), cos, sin)
        v = self._split(self.v_proj(x))
        out = attention(q, k, v, pad_mask)
        bsz, _, length, _ = out.shape
        out = out.transpose(1, 2).reshape(bsz, length, -1)
        return self.out_proj(out)


class TransformerBlock(nn.Module):
    def __init__(self, config: LMConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(config.d_model)
        self.attn = SelfAttention(config)
        self.norm2 = nn.LayerNorm(config.d_model)
        self.ffn = nn.Sequential(
            nn.Linear(config.d_model, config.ffn_dim),
            nn.GELU(),
            nn.Linear(config.ffn_dim, config.d_model),
        )
        self.drop = nn.Dropout(config.dropout)

    def forward(self, x, pad_mask, cos, sin):
        x = x + self.drop(self.attn(self.norm1(x), pad_mask, cos, sin))
        x = x + self.drop(self.ffn(self.norm2(x)))
        return x


class MaskedLM(nn.Module):
    def __init__(self, config: LMConfig):
        super().__init__()
        self.config = config
        self.embed = nn.Embedding(config.vocab_size, config.d_model)
        nn.init.normal_(self.embed.weight, std=0.02)
        self.blocks = nn.ModuleList(TransformerBlock(config) for _ in range(config.n_layers))
        self.final_norm = nn.LayerNorm(config.d_model)
        self.lm_head = nn.Linear(config.d_model, config.vocab_size)
        nn.init.normal_(self.lm_head.weight, std=0.01)
        nn.init.zeros_(self.lm_head.bias)

    def forward(self, tokens, pad_mask=None, positions=None):
        """tokens (B, L) int64 -> (hidden (B, L, d), logits (B, L, vocab)).

        pad_mask is True at real tokens; padded rows are excluded from
        attention and zeroed in the returned hidden states.
        """
        if tokens.dim() != 2:
            raise LMError(f"tokens must be (batch, length), got {tuple(tokens.shape)}")
        bad = (tokens < 0) | (tokens >= self.config.vocab_size)
        if bad.any():
            b, i = [int(x) for x in bad.nonzero()[0]]
            raise LMError(
                f"token id {int(tokens[b, i])} out of range at batch {b} position {i}"
            )
        if pad_mask is None:
            pad_mask = torch.ones_like(tokens, dtype=torch.bool)
        dtype = self.embed.weight.dtype
        if positions is None:
            positions = torch.arange(tokens.size(1), device=tokens.device)
            positions = positions.unsqueeze(0).expand(tokens.size(0), -1)
        cos, sin = rope_tables(
            positions.to(dtype), self.config.d_model // self.config.n_heads,
            self.config.rope_base,
        )
        cos = cos.unsqueeze(1)  # broadcast over heads
        sin = sin.unsqueeze(1)
        x = self.embed(tokens)
        for block in self.blocks:
            x = block(x, pad_mask, cos, sin)
        x = self.final_norm(x)
        x = x * pad_mask.unsqueeze(-1)
        return x, self.lm_head(x)


def mlm_forward(tokens: np.ndarray, model: MaskedLM):
    """Single-sequence convenience wrapper returning numpy (hidden, logits)."""
    device = next(model.parameters()).device
    t = torch.as_tensor(np.asarray(tokens), dtype=torch.int64, device=device).unsqueeze(0)
    with torch.no_grad():
        hidden, logits = model(t)
    return hidden[0].cpu().numpy(), logits[0].cpu().numpy()


# ---------------------------------------------------------------------------
# Pretraining


@dataclass
class PretrainSchedule:
    seed: int = 0
    epochs: int = 5
    batch_residues: int = 6000
    warmup: int = 400
    adam_betas: tuple[float, float] = (0.9, 0.98)
    adam_eps: float = 1e-9
    lr_scale: float = 1.0
    select_rate: float = 0.15
    mask_frac: float = 0.8
    random_frac: float = 0.1


def noam_lr(step: int, d_model: int, warmup: int, scale: float = 1.0) -> float:
    """Inverse-sqrt schedule with linear warmup:
    scale * d_model^-0.5 * min(step^-0.5, step * warmup^-1.5)."""
    if step < 1:
        raise ValueError("schedule steps start at 1")
    return scale * d_model ** -0.5 * min(step ** -0.5, step * warmup ** -1.5)


def corrupt_tokens(tokens: np.ndarray, rng: np.random.Generator, schedule: PretrainSchedule):
    """BERT-style corruption. Draw order: the selected-position subset via
    ``choice(L, n_sel, replace=False)`` with n_sel = max(1, round(rate*L));
    then per selected position ``u = random()``: u < mask_frac -> MASK,
    u < mask_frac+random_frac -> ``integers(20)``, else keep."""
    length = tokens.shape[0]
    n_sel = max(1, int(round(schedule.select_rate * length)))
    selected = rng.choice(length, size=n_sel, replace=False)
    corrupted = tokens.copy()
    for pos in selected:
        u = rng.random()
        if u < schedule.mask_frac:
            corrupted[pos] = MASK
        elif u < schedule.mask_frac + schedule.random_frac:
            corrupted[pos] = int(rng.integers(N_AMINO_ACIDS))
    loss_mask = np.zeros(length, dtype=bool)
    loss_mask[selected] = True
    return corrupted, loss_mask


def _pack_batches(lengths, order, budget):
    batches = []
    current, used = [], 0
    for idx in order:
        need = lengths[idx]
        if current and used + need > budget:
            batches.append(current)
            current, used = [], 0
        current.append(idx)
        used += need
    if current:
        batches.append(current)
    return batches


def aa_cross_entropy(logits: torch.Tensor, targets: torch.Tensor, loss_mask: torch.Tensor):
    """Mean cross-entropy over the amino-acid columns at masked-in positions.
    Positions whose target is not an amino acid are skipped."""
    valid = loss_mask & (targets >= 0) & (targets < N_AMINO_ACIDS)
    if not bool(valid.any()):
        raise ValueError("no scorable positions in batch")
    logp = torch.log_softmax(logits[..., :N_AMINO_ACIDS], dim=-1)
    picked = torch.gather(logp, -1, targets.clamp(0, N_AMINO_ACIDS - 1).unsqueeze(-1))
    return -(picked.squeeze(-1)[valid]).mean()


def pretrain_lm(corpus, model: MaskedLM, schedule: PretrainSchedule):
    """Train the LM on raw sequences (list/array of token vectors).

    Returns (model, curve) where curve is a list of {step, epoch, loss, lr}
    rows. Deterministic for a fixed seed: data order and corruption come from
    named streams keyed by (seed, epoch, record index).
    """
    corpus = [np.asarray(seq, dtype=np.int64) for seq in corpus]
    if not corpus:
        raise ValueError("empty pretraining corpus")
    device = next(model.parameters()).device
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=1.0, betas=schedule.adam_betas, eps=schedule.adam_eps)
    lengths = [len(seq) for seq in corpus]
    curve = []
    step = 0
    for epoch in range(schedule.epochs):
        order = rand.stream(schedule.seed, "order", epoch).permutation(len(corpus))
        for batch_idx in _pack_batches(lengths, order, schedule.batch_residues):
            step += 1
            lr = noam_lr(step, model.config.d_model, schedule.warmup, schedule.lr_scale)
            for group in opt.param_groups:
                group["lr"] = lr
            max_len = max(lengths[i] for i in batch_idx)
            toks = np.full((len(batch_idx), max_len), PAD, dtype=np.int64)
            targets = np.zeros((len(batch_idx), max_len), dtype=np.int64)
            loss_mask = np.zeros((len(batch_idx), max_len), dtype=bool)
            pad = np.zeros((len(batch_idx), max_len), dtype=bool)
            for row, i in enumerate(batch_idx):
                rng = rand.stream(schedule.seed, "corrupt", epoch, int(i))
                corrupted, sel = corrupt_tokens(corpus[i], rng, schedule)
                L = lengths[i]
                toks[row, :L] = corrupted
                targets[row, :L] = corpus[i]
                loss_mask[row, :L] = sel
                pad[row, :L] = True
            t_toks = torch.as_tensor(toks, device=device)
            t_pad = torch.as_tensor(pad, device=device)
            _, logits = model(t_toks, t_pad)
            loss = aa_cross_entropy(
                logits,
                torch.as_tensor(targets, device=device),
                torch.as_tensor(loss_mask, device=device),
            )
            if not torch.isfinite(loss):
                raise RuntimeError(f"pretraining diverged at step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            curve.append(
                {"step": step, "epoch": epoch, "loss": float(loss.detach()), "lr": lr}
            )
    return model, curve


def heldout_masked_accuracy(corpus, model: MaskedLM, seed: int, select_rate: float = 0.15):
    """Masked-token argmax accuracy under the same corruption recipe, drawn
    from streams (seed, "eval", index)."""
    schedule = PretrainSchedule(select_rate=select_rate)
    device = next(model.parameters()).device
    hits, total = 0, 0
    for i, seq in enumerate(corpus):
        seq = np.asarray(seq, dtype=np.int64)
        rng = rand.stream(seed, "eval", i)
        corrupted, sel = corrupt_tokens(seq, rng, schedule)
        t = torch.as_tensor(corrupted, device=device).unsqueeze(0)
        with torch.no_grad():
            _, logits = model(t)
        pred = logits[0, :, :N_AMINO_ACIDS].argmax(dim=-1).cpu().numpy()
        sel &= seq < N_AMINO_ACIDS
        hits += int((pred[sel] == seq[sel]).sum())
        total += int(sel.sum())
    return hits / max(total, 1)
