"""Backbone structures and sequence states.

A :class:`BackboneStructure` is an ordered list of chains, each an ordered run
of residues with N/CA/C (and optionally O) coordinates. Geometry code operates
on the flat :class:`AtomArrays` view, which carries explicit residue position
labels and chain indices so that row order is incidental: permuting the rows
of an ``AtomArrays`` (tests do this) permutes every derived quantity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .vocab import MASK, VOCAB_SIZE

# Consecutive intra-chain CA-CA distances outside this open interval are
# geometrically implausible unless the pair is flagged as a chain break.
CA_STEP_RANGE = (1.0, 5.0)


class StructureError(ValueError):
    pass


def _as_coords(a, name: str, length: int | None = None) -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise StructureError(f"{name}: expected shape (L, 3), got {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise StructureError(f"{name}: expected {length} residues, got {arr.shape[0]}")
    return arr


@dataclass
class ChainBackbone:
    """One chain's backbone atoms. ``breaks[i]`` flags a discontinuity between
    residues i and i+1 (e.g. an unresolved gap); the final entry is unused."""

    chain_id: str
    n: np.ndarray
    ca: np.ndarray
    c: np.ndarray
    o: np.ndarray | None = None
    breaks: np.ndarray | None = None

    def __post_init__(self):
        self.n = _as_coords(self.n, f"chain {self.chain_id} N")
        length = self.n.shape[0]
        self.ca = _as_coords(self.ca, f"chain {self.chain_id} CA", length)
        self.c = _as_coords(self.c, f"chain {self.chain_id} C", length)
        if self.o is not None:
            self.o = _as_coords(self.o, f"chain {self.chain_id} O", length)
        if self.breaks is not None:
            self.breaks = np.asarray(self.breaks, dtype=bool)
            if self.breaks.shape != (length,):
                raise StructureError(
                    f"chain {self.chain_id}: breaks must have shape ({length},)"
                )

    def __len__(self) -> int:
        return self.n.shape[0]


@dataclass
class BackboneStructure:
    id: str
    chains: list[ChainBackbone]
    native_tokens: np.ndarray | None = None

    def __post_init__(self):
        if not self.chains:
            raise StructureError(f"structure {self.id}: no chains")
        for ch in self.chains:
            if len(ch) < 1:
                raise StructureError(
                    f"structure {self.id}: chain {ch.chain_id} is empty"
                )
        if self.native_tokens is not None:
            self.native_tokens = np.asarray(self.native_tokens, dtype=np.int64)

    def __len__(self) -> int:
        return sum(len(ch) for ch in self.chains)

    @property
    def chain_index(self) -> np.ndarray:
        return np.concatenate(
            [np.full(len(ch), i, dtype=np.int64) for i, ch in enumerate(self.chains)]
        )

    @property
    def ca(self) -> np.ndarray:
        return np.concatenate([ch.ca for ch in self.chains], axis=0)

    def has_oxygen(self) -> bool:
        return all(ch.o is not None for ch in self.chains)

    def atom_arrays(self) -> "AtomArrays":
        n = np.concatenate([ch.n for ch in self.chains], axis=0)
        ca = np.concatenate([ch.ca for ch in self.chains], axis=0)
        c = np.concatenate([ch.c for ch in self.chains], axis=0)
        o = (
            np.concatenate([ch.o for ch in self.chains], axis=0)
            if self.has_oxygen()
            else None
        )
        total = n.shape[0]
        break_after = np.zeros(total, dtype=bool)
        offset = 0
        for ch in self.chains:
            if ch.breaks is not None:
                break_after[offset : offset + len(ch)] |= ch.breaks
            offset += len(ch)
            if offset < total:
                break_after[offset - 1] = True  # boundary between chains
        return AtomArrays(
            n=n,
            ca=ca,
            c=c,
            o=o,
            chain_index=self.chain_index,
            position=np.arange(total, dtype=np.int64),
            break_after=break_after,
        )

    def validate(self) -> None:
        """Raise :class:`StructureError` on non-finite coordinates, a native
        sequence of the wrong length, or implausible CA steps that are not
        flagged as breaks."""
        total = len(self)
        for ch in self.chains:
            for name, arr in (("N", ch.n), ("CA", ch.ca), ("C", ch.c), ("O", ch.o)):
                if arr is not None and not np.isfinite(arr).all():
                    raise StructureError(
                        f"structure {self.id}: non-finite {name} coordinates in "
                        f"chain {ch.chain_id}"
                    )
            if len(ch) > 1:
                steps = np.linalg.norm(np.diff(ch.ca, axis=0), axis=1)
                flagged = (
                    ch.breaks[:-1] if ch.breaks is not None else np.zeros(len(ch) - 1, bool)
                )
                bad = ((steps <= CA_STEP_RANGE[0]) | (steps >= CA_STEP_RANGE[1])) & ~flagged
                if bad.any():
                    i = int(np.nonzero(bad)[0][0])
                    raise StructureError(
                        f"structure {self.id}: chain {ch.chain_id} CA step "
                        f"{steps[i]:.3f} A between residues {i} and {i + 1} is outside "
                        f"{CA_STEP_RANGE} and not flagged as a break"
                    )
        if self.native_tokens is not None:
            if self.native_tokens.shape != (total,):
                raise StructureError(
                    f"structure {self.id}: native sequence length "
                    f"{self.native_tokens.shape} does not match {total} residues"
                )
            if ((self.native_tokens < 0) | (self.native_tokens >= VOCAB_SIZE)).any():
                raise StructureError(f"structure {self.id}: native token out of range")


@dataclass
class AtomArrays:
    """Flat per-residue view used by geometry code.

    ``position`` labels residues along the concatenated protein; sequence
    adjacency means positions p and p+1, regardless of row order.
    ``break_after`` is aligned with rows and refers to the gap between a
    residue and the residue at the next position.
    """

    n: np.ndarray
    ca: np.ndarray
    c: np.ndarray
    o: np.ndarray | None
    chain_index: np.ndarray
    position: np.ndarray
    break_after: np.ndarray

    def __len__(self) -> int:
        return self.ca.shape[0]

    def permute(self, order) -> "AtomArrays":
        order = np.asarray(order, dtype=np.int64)
        return AtomArrays(
            n=self.n[order],
            ca=self.ca[order],
            c=self.c[order],
            o=self.o[order] if self.o is not None else None,
            chain_index=self.chain_index[order],
            position=self.position[order],
            break_after=self.break_after[order],
        )

    def slot_of_position(self) -> np.ndarray:
        """Inverse of ``position``: maps a position label to its row."""
        inv = np.full(len(self), -1, dtype=np.int64)
        inv[self.position] = np.arange(len(self), dtype=np.int64)
        return inv


@dataclass
class SequenceState:
    """Tokens plus per-position observedness. A position is masked (MASK token)
    exactly when it is not observed."""

    tokens: np.ndarray
    observed: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.tokens = np.asarray(self.tokens, dtype=np.int64)
        if self.tokens.ndim != 1:
            raise StructureError(f"tokens must be 1-D, got shape {self.tokens.shape}")
        if self.observed is None:
            self.observed = self.tokens != MASK
        self.observed = np.asarray(self.observed, dtype=bool)
        if self.observed.shape != self.tokens.shape:
            raise StructureError("observed mask length does not match tokens")
        if ((self.tokens < 0) | (self.tokens >= VOCAB_SIZE)).any():
            bad = int(np.nonzero((self.tokens < 0) | (self.tokens >= VOCAB_SIZE))[0][0])
            raise StructureError(f"token out of range at position {bad}")
        if ((self.tokens == MASK) == self.observed).any():
            bad = int(np.nonzero((self.tokens == MASK) == self.observed)[0][0])
            raise StructureError(
                f"position {bad}: mask token and observed flag disagree"
            )

    def __len__(self) -> int:
        return self.tokens.shape[0]

    @classmethod
    def full_mask(cls, length: int) -> "SequenceState":
        return cls(np.full(length, MASK, dtype=np.int64))
