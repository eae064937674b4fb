"""Composite design model: structure encoder -> masked LM -> adapter."""

from __future__ import annotations

from contextlib import nullcontext
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import rand
from .adapter import AdapterConfig, StructuralAdapter
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .collate import Batch
from .config import from_dict, to_jsonable
from .encoder import EncoderConfig, StructureEncoder
from .lm import LMConfig, MaskedLM


@dataclass
class ModelConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    lm: LMConfig = field(default_factory=LMConfig)
    adapter_heads: int = 4

    def __post_init__(self):
        if isinstance(self.encoder, dict):
            self.encoder = from_dict(EncoderConfig, self.encoder)
        if isinstance(self.lm, dict):
            self.lm = from_dict(LMConfig, self.lm)

    def adapter_config(self) -> AdapterConfig:
        return AdapterConfig(
            d_model=self.lm.d_model,
            d_struct=self.encoder.d_model,
            n_heads=self.adapter_heads,
            rope_base=self.lm.rope_base,
        )


@dataclass
class ModelOutput:
    design_logits: torch.Tensor  # (B, L, 20)
    proposal_logits: torch.Tensor  # (B, L, 20)
    lm_hidden: torch.Tensor
    fused: torch.Tensor
    lm_logits: torch.Tensor


class DesignModel(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.encoder = StructureEncoder(config.encoder)
        self.lm = MaskedLM(config.lm)
        self.adapter = StructuralAdapter(config.adapter_config())

    def lm_trainable(self) -> bool:
        return any(p.requires_grad for p in self.lm.parameters())

    def forward(self, batch: Batch, zero_structure: bool = False) -> ModelOutput:
        struct_states, proposal_logits = self.encoder(
            batch.node, batch.edge, batch.neighbors, batch.pad_mask, batch.edge_mask
        )
        if zero_structure:
            struct_states = torch.zeros_like(struct_states)
            proposal_logits = self.encoder.proposal_head(struct_states)
        # a frozen LM is a fixed feature extractor: skip building its graph
        lm_ctx = nullcontext() if (self.lm_trainable() and torch.is_grad_enabled()) else torch.no_grad()
        with lm_ctx:
            lm_hidden, lm_logits = self.lm(batch.tokens, batch.pad_mask, batch.positions)
        if not self.lm_trainable():
            lm_hidden = lm_hidden.detach()
        fused, design_logits = self.adapter(
            lm_hidden, struct_states, batch.pad_mask, batch.positions
        )
        return ModelOutput(
            design_logits=design_logits,
            proposal_logits=proposal_logits,
            lm_hidden=lm_hidden,
            fused=fused,
            lm_logits=lm_logits,
        )


def build_model(config: ModelConfig, seed: int = 0, dtype=torch.float32) -> DesignModel:
    """Deterministic construction: parameter init consumes a torch generator
    seeded from (seed, "init")."""
    torch.manual_seed(rand.child_seed(seed, "init") & 0x7FFFFFFFFFFFFFFF)
    model = DesignModel(config)
    if dtype == torch.float64:
        model = model.double()
    return model


def state_as_numpy(module: nn.Module) -> dict[str, np.ndarray]:
    return {name: t.detach().cpu().numpy().copy() for name, t in module.state_dict().items()}


def load_state_numpy(module: nn.Module, tensors: dict[str, np.ndarray]) -> None:
    expected = set(module.state_dict())
    missing = sorted(expected - set(tensors))
    if missing:
        raise CheckpointError(f"checkpoint is missing tensor {missing[0]!r}")
    dtype = next(module.parameters()).dtype
    state = {
        name: torch.as_tensor(arr).to(dtype) for name, arr in tensors.items() if name in expected
    }
    module.load_state_dict(state)


def save_model(path, model: DesignModel, *, step: int = 0, seed: int = 0) -> None:
    save_checkpoint(
        path,
        state_as_numpy(model),
        kind="design",
        config=to_jsonable(model.config),
        step=step,
        seed=seed,
    )


def load_model(path, dtype=torch.float32) -> tuple[DesignModel, dict]:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "design":
        raise CheckpointError(f"expected a design checkpoint, found kind={ckpt.kind!r}")
    config = from_dict(ModelConfig, ckpt.config)
    model = DesignModel(config)
    if dtype == torch.float64:
        model = model.double()
    load_state_numpy(model, ckpt.tensors)
    return model, ckpt.manifest


def save_encoder(path, encoder: StructureEncoder, *, step: int = 0, seed: int = 0) -> None:
    save_checkpoint(
        path,
        state_as_numpy(encoder),
        kind="encoder",
        config=to_jsonable(encoder.config),
        step=step,
        seed=seed,
    )


def load_encoder_into(model: DesignModel, path) -> None:
    """Initialize a model's encoder from an encoder (or full design)
    checkpoint produced by an earlier run."""
    ckpt = load_checkpoint(path)
    if ckpt.kind == "encoder":
        tensors = ckpt.tensors
    elif ckpt.kind == "design":
        prefix = "encoder."
        tensors = {
            name[len(prefix) :]: arr
            for name, arr in ckpt.tensors.items()
            if name.startswith(prefix)
        }
    else:
        raise CheckpointError(f"cannot read an encoder from kind={ckpt.kind!r}")
    load_state_numpy(model.encoder, tensors)


def save_lm(path, model: MaskedLM, *, step: int = 0, seed: int = 0) -> None:
    save_checkpoint(
        path,
        state_as_numpy(model),
        kind="lm",
        config=to_jsonable(model.config),
        step=step,
        seed=seed,
    )


def load_lm_into(model: DesignModel, path) -> None:
    """Initialize a model's LM from an lm (or full design) checkpoint."""
    ckpt = load_checkpoint(path)
    if ckpt.kind == "lm":
        tensors = ckpt.tensors
    elif ckpt.kind == "design":
        prefix = "lm."
        tensors = {
            name[len(prefix) :]: arr
            for name, arr in ckpt.tensors.items()
            if name.startswith(prefix)
        }
    else:
        raise CheckpointError(f"cannot read an lm from kind={ckpt.kind!r}")
    load_state_numpy(model.lm, tensors)


def load_lm(path, dtype=torch.float32) -> tuple[MaskedLM, dict]:
    ckpt = load_checkpoint(path)
    if ckpt.kind != "lm":
        raise CheckpointError(f"expected an lm checkpoint, found kind={ckpt.kind!r}")
    model = MaskedLM(from_dict(LMConfig, ckpt.config))
    if dtype == torch.float64:
        model = model.double()
    load_state_numpy(model, ckpt.tensors)
    return model, ckpt.manifest
