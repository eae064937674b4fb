"""Iterative-refinement sequence design.

The sequence starts from the encoder's proposal head (or from all-MASK) and
is re-predicted for up to T steps, feeding the previous round's sequence back
into the LM as fully observed tokens. Any strategy stops early once a full
pass leaves the sequence unchanged, so cooling the sampling temperature until
every draw picks the modal token reproduces argmax decoding exactly,
termination included. Sampling applies a temperature to the design logits.

Randomness contract (replayable): each design draws from
``stream(seed)`` in this exact order:

1. ``random(L)`` once if init="proposal" and strategy="sample" (inverse-CDF
   selection from the temperature-scaled proposal probabilities);
2. ``random(L)`` once per executed refinement step if strategy="sample".

Argmax designs consume no randomness. ``batch_design`` derives the per-item
seed as ``child_seed(seed, "item", index)`` and per-sample seeds as
``child_seed(item_seed, "sample", j)``, so parallel execution, batch order
and batch size cannot change any output.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import torch

from . import rand
from .collate import collate, make_item
from .model import DesignModel
from .structure import BackboneStructure
from .vocab import MASK, detokenize

STRATEGIES = ("argmax", "sample")
INITS = ("proposal", "full-mask")
REMASKS = ("none", "confidence")


@dataclass
class DecodingConfig:
    steps: int = 5
    strategy: str = "argmax"
    temperature: float = 1.0
    init: str = "proposal"
    remask: str = "none"
    remask_fraction: float = 0.5
    fuse_encoder_logits: bool = False
    n_samples: int = 1
    seed: int = 0
    zero_structure: bool = False
    record_trajectory: bool = False

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.init not in INITS:
            raise ValueError(f"init must be one of {INITS}, got {self.init!r}")
        if self.remask not in REMASKS:
            raise ValueError(f"remask must be one of {REMASKS}, got {self.remask!r}")
        if self.strategy == "sample" and self.temperature <= 0:
            raise ValueError(f"temperature must be > 0, got {self.temperature}")
        if self.remask == "confidence" and not 0.0 < self.remask_fraction < 1.0:
            raise ValueError(
                f"remask_fraction must be in (0, 1), got {self.remask_fraction}"
            )
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.n_samples > 1 and self.strategy != "sample":
            raise ValueError("n_samples > 1 requires strategy='sample'")


@dataclass
class DesignResult:
    tokens: np.ndarray  # (L,) final amino-acid ids
    logprobs: np.ndarray  # (L,) log-probability of each emitted token
    steps_used: int
    converged: bool
    trajectory: list[np.ndarray] = field(default_factory=list)  # S^(0)..S^(final)

    @property
    def sequence(self) -> str:
        return detokenize(self.tokens)


@dataclass
class DesignOutcome:
    index: int
    structure_id: str
    results: list[DesignResult] | None = None
    error: str | None = None


def temperature_scale(logits: torch.Tensor, tau: float) -> torch.Tensor:
    """softmax(logits / tau); tau must be strictly positive (argmax decoding
    is a separate strategy, not tau=0)."""
    if tau <= 0:
        raise ValueError(f"temperature must be > 0, got {tau}")
    return torch.softmax(logits / tau, dim=-1)


def _inverse_cdf_sample(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise inverse-CDF draw: smallest index whose cumulative mass
    exceeds u. With one-hot rows this is exactly the argmax for any u."""
    cum = np.cumsum(probs, axis=-1)
    idx = (cum <= u[:, None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1).astype(np.int64)


class _EncoderCache:
    """Structure features and encoder states, computed once per design."""

    def __init__(self, model: DesignModel, structure: BackboneStructure, zero_structure: bool):
        dtype = next(model.parameters()).dtype
        graph_config = model.config.encoder.graph
        length = structure.atom_arrays().n.shape[0]
        placeholder = np.full(length, MASK, dtype=np.int64)
        self.batch = collate([make_item(structure, placeholder, graph_config)], dtype=dtype)
        self.length = length
        with torch.no_grad():
            states, proposal_logits = model.encoder(
                self.batch.node,
                self.batch.edge,
                self.batch.neighbors,
                self.batch.pad_mask,
                self.batch.edge_mask,
            )
            if zero_structure:
                states = torch.zeros_like(states)
                proposal_logits = model.encoder.proposal_head(states)
        self.struct_states = states
        self.proposal_logits = proposal_logits  # (1, L, 20)


def _step_logits(model: DesignModel, cache: _EncoderCache, tokens: np.ndarray, fuse: bool):
    dtype = next(model.parameters()).dtype
    token_t = torch.as_tensor(tokens, dtype=torch.int64).unsqueeze(0)
    with torch.no_grad():
        lm_hidden, _ = model.lm(token_t, cache.batch.pad_mask, cache.batch.positions)
        _, logits = model.adapter(
            lm_hidden.to(dtype), cache.struct_states, cache.batch.pad_mask, cache.batch.positions
        )
        if fuse:
            logits = logits + cache.proposal_logits
    return logits[0]  # (L, 20)


def _select(logits: torch.Tensor, config: DecodingConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    """Pick one token per row; returns (choices, confidence). Confidence is
    the plain-softmax probability of the chosen token regardless of strategy
    (the temperature shapes sampling, not the model's belief)."""
    belief = torch.softmax(logits, dim=-1).cpu().double().numpy()
    if config.strategy == "argmax":
        choices = logits.argmax(dim=-1).cpu().numpy().astype(np.int64)
    else:
        probs = temperature_scale(logits.double(), config.temperature).cpu().numpy()
        choices = _inverse_cdf_sample(probs, rng.random(logits.shape[0]))
    confidence = belief[np.arange(len(choices)), choices]
    return choices, confidence


def init_sequence(cache: _EncoderCache, config: DecodingConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    """S^(0): all MASK, or argmax/sample of the encoder's proposal logits.
    Returns (tokens, confidence); full-mask confidence is zero everywhere."""
    if config.init == "full-mask":
        return (
            np.full(cache.length, MASK, dtype=np.int64),
            np.zeros(cache.length, dtype=np.float64),
        )
    return _select(cache.proposal_logits[0], config, rng)


def _design_once(model: DesignModel, cache: _EncoderCache, config: DecodingConfig, seed: int) -> DesignResult:
    rng = rand.stream(seed)
    tokens, confidence = init_sequence(cache, config, rng)
    trajectory = [tokens.copy()]
    length = cache.length
    steps_used = 0
    converged = False
    final_logits = None
    for _ in range(config.steps):
        fed = tokens
        refresh = np.ones(length, dtype=bool)
        if config.remask == "confidence":
            m = min(length, max(1, round(config.remask_fraction * length)))
            lowest = np.argsort(confidence, kind="stable")[:m]
            refresh = np.zeros(length, dtype=bool)
            refresh[lowest] = True
            fed = tokens.copy()
            fed[lowest] = MASK
        logits = _step_logits(model, cache, fed, config.fuse_encoder_logits)
        choices, fresh_confidence = _select(logits, config, rng)
        new_tokens = tokens.copy()
        new_tokens[refresh] = choices[refresh]
        new_tokens[tokens == MASK] = choices[tokens == MASK]
        confidence = np.where(refresh | (tokens == MASK), fresh_confidence, confidence)
        steps_used += 1
        final_logits = logits
        stopped = np.array_equal(new_tokens, tokens)
        tokens = new_tokens
        trajectory.append(tokens.copy())
        if stopped:
            converged = True
            break
    logprob_rows = torch.log_softmax(final_logits.double(), dim=-1).cpu().numpy()
    logprobs = logprob_rows[np.arange(length), tokens]
    return DesignResult(
        tokens=tokens,
        logprobs=logprobs,
        steps_used=steps_used,
        converged=converged,
        trajectory=trajectory,
    )


def design_samples(
    model: DesignModel,
    structure: BackboneStructure,
    config: DecodingConfig,
    index: int = 0,
) -> list[DesignResult]:
    """All n_samples designs for one structure, with the same seed path the
    structure would get at position ``index`` of a batch."""
    model.eval()
    cache = _EncoderCache(model, structure, config.zero_structure)
    item_seed = rand.child_seed(config.seed, "item", index)
    return [
        _design_once(model, cache, config, rand.child_seed(item_seed, "sample", j))
        for j in range(config.n_samples)
    ]


def design(
    model: DesignModel,
    structure: BackboneStructure,
    config: DecodingConfig,
    index: int = 0,
) -> DesignResult:
    if config.n_samples != 1:
        raise ValueError("design() returns one result; use design_samples for n_samples > 1")
    return design_samples(model, structure, config, index)[0]


def batch_design(
    model: DesignModel,
    structures: list[BackboneStructure],
    config: DecodingConfig,
    n_workers: int = 0,
) -> list[DesignOutcome]:
    """Design every structure. Per-item failures are captured in the outcome
    rather than aborting the batch; n_workers > 1 runs items on a thread pool
    with outputs identical to the serial order."""
    model.eval()

    def run(i: int) -> DesignOutcome:
        sid = structures[i].id
        try:
            return DesignOutcome(
                index=i, structure_id=sid, results=design_samples(model, structures[i], config, i)
            )
        except Exception as exc:  # noqa: BLE001 - aggregated per item by contract
            return DesignOutcome(index=i, structure_id=sid, error=f"{type(exc).__name__}: {exc}")

    if n_workers and n_workers > 1:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            return list(pool.map(run, range(len(structures))))
    return [run(i) for i in range(len(structures))]
