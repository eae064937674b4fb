"""Conditional masked-LM training and finite-difference gradient checking.

Per sample, a mask ratio r ~ uniform(0, 1] picks m = max(1, round(r*L))
positions to hide; the loss is mean cross-entropy over exactly those (and
only non-padded) positions, from both the adapter's design head and the
encoder's proposal head so the decoding initializer is trained in every mode.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from . import rand
from .collate import BatchItem, collate, make_item  # noqa: F401 - BatchItem in annotations
from .geometry import perturb
from .lm import aa_cross_entropy, noam_lr
from .model import DesignModel
from .structure import SequenceState
from .vocab import MASK, N_AMINO_ACIDS

logger = logging.getLogger(__name__)

MODES = ("scratch-joint", "pretrained-encoder-frozen", "pretrained-encoder-finetune")
LM_MODES = ("lm-frozen", "lm-finetune")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    mode: str = "scratch-joint"
    lm_mode: str = "lm-frozen"
    epochs: int = 20
    batch_residues: int = 6000
    warmup: int = 400
    adam_betas: tuple[float, float] = (0.9, 0.98)
    adam_eps: float = 1e-9
    lr_scale: float = 1.0
    seed: int = 0
    eps_noise: float = 0.0
    mask_ratio_law: str = "uniform"
    proposal_loss_weight: float = 1.0
    val_fraction: float = 0.05
    val_every: int = 50

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.lm_mode not in LM_MODES:
            raise ValueError(f"lm_mode must be one of {LM_MODES}, got {self.lm_mode!r}")
        if self.mask_ratio_law != "uniform":
            raise ValueError(f"unsupported mask_ratio_law {self.mask_ratio_law!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must be in [0, 1)")


def cmlm_mask(state: SequenceState, ratio_law: str, seed: int):
    """Mask a random subset of positions for CMLM training.

    Draw order on ``stream(seed)``: ``r = 1.0 - random()`` (uniform over
    (0, 1]); ``m = max(1, round(r * L))`` with Python's round; the position
    subset via ``choice(L, size=m, replace=False)``.

    Returns (masked state, target tokens, loss mask).
    """
    if ratio_law != "uniform":
        raise ValueError(f"unsupported mask_ratio_law {ratio_law!r}")
    rng = rand.stream(seed)
    length = len(state)
    r = 1.0 - rng.random()
    m = max(1, round(r * length))
    positions = rng.choice(length, size=m, replace=False)
    tokens = state.tokens.copy()
    tokens[positions] = MASK
    loss_mask = np.zeros(length, dtype=bool)
    loss_mask[positions] = True
    return SequenceState(tokens), state.tokens.copy(), loss_mask


def cmlm_loss(logits: torch.Tensor, targets: torch.Tensor, loss_mask: torch.Tensor):
    """Mean cross-entropy over masked, non-padded positions (pad columns must
    already be absent from loss_mask). Gradients at observed or padded
    positions are exactly zero because those positions never enter the mean."""
    return aa_cross_entropy(logits, targets, loss_mask)


def apply_mode(model: DesignModel, mode: str, lm_mode: str = "lm-frozen") -> None:
    """Set requires_grad flags. The encoder's proposal head stays trainable in
    every mode so the decoding initializer tracks the adapter."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if lm_mode not in LM_MODES:
        raise ValueError(f"lm_mode must be one of {LM_MODES}, got {lm_mode!r}")
    encoder_trainable = mode != "pretrained-encoder-frozen"
    for p in model.encoder.parameters():
        p.requires_grad = encoder_trainable
    for p in model.encoder.proposal_head.parameters():
        p.requires_grad = True
    for p in model.lm.parameters():
        p.requires_grad = lm_mode == "lm-finetune"
    for p in model.adapter.parameters():
        p.requires_grad = True


@dataclass
class TrainResult:
    model: DesignModel
    metrics: list[dict] = field(default_factory=list)
    val_history: list[dict] = field(default_factory=list)


def _pack_by_residues(lengths, order, budget):
    batches, current, used = [], [], 0
    for idx in order:
        if current and used + lengths[idx] > budget:
            batches.append(current)
            current, used = [], 0
        current.append(int(idx))
        used += lengths[idx]
    if current:
        batches.append(current)
    return batches


def _masked_item(structure, state, graph_config, seed) -> BatchItem:
    masked, targets, loss_mask = cmlm_mask(state, "uniform", seed)
    return make_item(structure, masked.tokens, graph_config, targets, loss_mask)


def quick_recovery(model: DesignModel, records, dtype=torch.float32) -> float:
    """Mean single-pass full-mask argmax recovery; used for validation."""
    if not records:
        return float("nan")
    graph_config = model.config.encoder.graph
    hits, total = 0, 0
    model.eval()
    with torch.no_grad():
        for structure, state in records:
            tokens = np.full(len(state), MASK, dtype=np.int64)
            batch = collate([make_item(structure, tokens, graph_config)], dtype=dtype)
            out = model(batch)
            pred = out.design_logits[0].argmax(dim=-1).cpu().numpy()
            native = state.tokens
            ok = native < N_AMINO_ACIDS
            hits += int((pred[ok] == native[ok]).sum())
            total += int(ok.sum())
    model.train()
    return hits / max(total, 1)


def train(dataset, model: DesignModel, config: TrainConfig, dtype=torch.float32) -> TrainResult:
    """CMLM training over (structure, native state) pairs.

    Deterministic for a fixed seed and thread count: data order, masking and
    coordinate noise all come from named streams; the optimizer only ever
    sees trainable parameters, so frozen tensors stay bitwise intact.
    """
    if not dataset:
        raise ValueError("empty training dataset")
    apply_mode(model, config.mode, config.lm_mode)
    graph_config = model.config.encoder.graph
    lengths = [len(state) for _, state in dataset]
    max_len = max(lengths)
    if config.batch_residues < max_len:
        raise ValueError(
            f"batch_residues={config.batch_residues} is below the longest "
            f"protein ({max_len} residues)"
        )

    n_val = int(round(config.val_fraction * len(dataset)))
    val_records = dataset[len(dataset) - n_val :] if n_val else []
    train_records = dataset[: len(dataset) - n_val]
    train_lengths = lengths[: len(train_records)]
    if not train_records:
        raise ValueError("validation split consumed the whole dataset")

    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=1.0, betas=config.adam_betas, eps=config.adam_eps)
    result = TrainResult(model=model)
    step = 0
    model.train()
    for epoch in range(config.epochs):
        order = rand.stream(config.seed, "order", epoch).permutation(len(train_records))
        for batch_idx in _pack_by_residues(train_lengths, order, config.batch_residues):
            step += 1
            lr = noam_lr(step, model.config.lm.d_model, config.warmup, config.lr_scale)
            for group in opt.param_groups:
                group["lr"] = lr
            items = []
            for i in batch_idx:
                structure, state = train_records[i]
                mask_seed = rand.child_seed(config.seed, "mask", epoch, i)
                masked, targets, loss_mask = cmlm_mask(state, config.mask_ratio_law, mask_seed)
                if config.eps_noise > 0.0:
                    structure = perturb(
                        structure,
                        config.eps_noise,
                        rand.child_seed(config.seed, "noise", epoch, i),
                    )
                items.append(
                    make_item(structure, masked.tokens, graph_config, targets, loss_mask)
                )
            batch = collate(items, dtype=dtype)
            out = model(batch)
            design_loss = cmlm_loss(out.design_logits, batch.targets, batch.loss_mask)
            proposal_loss = cmlm_loss(out.proposal_logits, batch.targets, batch.loss_mask)
            loss = design_loss + config.proposal_loss_weight * proposal_loss
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at step {step} (epoch {epoch}): "
                    f"{float(loss.detach())}"
                )
            opt.zero_grad()
            loss.backward()
            opt.step()
            result.metrics.append(
                {
                    "step": step,
                    "epoch": epoch,
                    "loss": float(loss.detach()),
                    "design_loss": float(design_loss.detach()),
                    "proposal_loss": float(proposal_loss.detach()),
                    "lr": lr,
                }
            )
            if val_records and config.val_every and step % config.val_every == 0:
                rec = quick_recovery(model, val_records, dtype=dtype)
                result.val_history.append({"step": step, "val_recovery": rec})
                logger.info("step %d: val_recovery %.4f", step, rec)
    if val_records:
        rec = quick_recovery(model, val_records, dtype=dtype)
        result.val_history.append({"step": step, "val_recovery": rec})
    return result


# ---------------------------------------------------------------------------
# Finite-difference gradient checking


@dataclass
class GradCheckGroup:
    group: str
    n_checked: int
    max_rel_err: float


@dataclass
class GradCheckReport:
    groups: list[GradCheckGroup]
    tolerance: float

    @property
    def max_rel_err(self) -> float:
        return max((g.max_rel_err for g in self.groups), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= self.tolerance


def _group_of(name: str) -> str:
    return name.split(".", 1)[0]


def gradcheck(
    loss_fn,
    named_params: dict[str, torch.Tensor],
    epsilon: float = 1e-4,
    n_per_group: int = 32,
    seed: int = 0,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Compare autograd gradients against central finite differences.

    ``loss_fn()`` must return a scalar tensor computed from ``named_params``
    (float64 strongly recommended). At least ``n_per_group`` coordinates are
    sampled per parameter group (group = name prefix before the first dot).
    Relative error per coordinate: |g_a - g_n| / max(|g_a|, |g_n|, 1e-6).
    The 1e-6 floor keeps near-zero coordinates from amplifying the ~1e-12
    cancellation noise a float64 central difference carries on an O(1) loss;
    a genuinely wrong gradient still lands orders of magnitude above it.
    """
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    for t in named_params.values():
        t.grad = None
    loss = loss_fn()
    loss.backward()
    analytic = {
        name: (t.grad.detach().clone() if t.grad is not None else torch.zeros_like(t))
        for name, t in named_params.items()
    }

    groups: dict[str, list[tuple[str, int]]] = {}
    for name, t in named_params.items():
        coords = groups.setdefault(_group_of(name), [])
        coords.extend((name, i) for i in range(t.numel()))

    report_groups = []
    with torch.no_grad():
        for group_name in sorted(groups):
            coords = groups[group_name]
            rng = rand.stream(seed, "gradcheck", group_name)
            n = min(n_per_group, len(coords))
            chosen = rng.choice(len(coords), size=n, replace=False)
            worst = 0.0
            for ci in chosen:
                name, flat_idx = coords[int(ci)]
                t = named_params[name]
                flat = t.view(-1)
                orig = flat[flat_idx].item()
                flat[flat_idx] = orig + epsilon
                up = float(loss_fn())
                flat[flat_idx] = orig - epsilon
                down = float(loss_fn())
                flat[flat_idx] = orig
                numeric = (up - down) / (2.0 * epsilon)
                g = float(analytic[name].view(-1)[flat_idx])
                rel = abs(g - numeric) / max(abs(g), abs(numeric), 1e-6)
                worst = max(worst, rel)
            report_groups.append(
                GradCheckGroup(group=group_name, n_checked=n, max_rel_err=worst)
            )
    return GradCheckReport(groups=report_groups, tolerance=tolerance)


def model_gradcheck(
    model: DesignModel,
    dataset,
    epsilon: float = 1e-4,
    n_per_group: int = 32,
    seed: int = 0,
    tolerance: float = 1e-4,
) -> GradCheckReport:
    """Gradcheck the full stack on a small batch (model must be float64)."""
    dtype = next(model.parameters()).dtype
    if dtype != torch.float64:
        raise ValueError("gradcheck requires a float64 model")
    graph_config = model.config.encoder.graph
    items = []
    for i, (structure, state) in enumerate(dataset):
        items.append(
            _masked_item(structure, state, graph_config, rand.child_seed(seed, "gc-mask", i))
        )
    batch = collate(items, dtype=dtype)
    model.train()

    def loss_fn():
        out = model(batch)
        return cmlm_loss(out.design_logits, batch.targets, batch.loss_mask) + cmlm_loss(
            out.proposal_logits, batch.targets, batch.loss_mask
        )

    named = {n: p for n, p in model.named_parameters() if p.requires_grad}
    return gradcheck(
        loss_fn, named, epsilon=epsilon, n_per_group=n_per_group, seed=seed, tolerance=tolerance
    )
