"""Token vocabulary: 20 amino acids plus control symbols.

Amino acids are indexed alphabetically by one-letter code (A=0 ... Y=19),
followed by MASK=20, PAD=21, UNK=22 and CHAINBREAK=23. The integer layout is
part of the checkpoint format, so it must never change silently; checkpoints
embed the symbol list and loaders verify it.
"""

from __future__ import annotations

import numpy as np

AA_LETTERS = "ACDEFGHIKLMNPQRSTVWY"
N_AMINO_ACIDS = 20

MASK = 20
PAD = 21
UNK = 22
CHAINBREAK = 23
VOCAB_SIZE = 24

# Single-character forms so detokenized strings stay position-aligned.
_SPECIAL_CHARS = {MASK: "#", PAD: "-", UNK: "X", CHAINBREAK: "|"}

SYMBOLS = list(AA_LETTERS) + ["<mask>", "<pad>", "<unk>", "<chainbreak>"]

_AA_TO_TOKEN = {aa: i for i, aa in enumerate(AA_LETTERS)}
_TOKEN_TO_CHAR = {i: aa for i, aa in enumerate(AA_LETTERS)} | _SPECIAL_CHARS


def tokenize(seq: str) -> np.ndarray:
    """Map a sequence string to token ids; unrecognized letters become UNK."""
    return np.array([_AA_TO_TOKEN.get(ch, UNK) for ch in seq], dtype=np.int64)


def count_unknown(seq: str) -> int:
    return sum(1 for ch in seq if ch not in _AA_TO_TOKEN)


def detokenize(tokens) -> str:
    """Inverse of :func:`tokenize` on amino acids; control tokens map to
    '#' (mask), '-' (pad), 'X' (unk) and '|' (chain break)."""
    out = []
    for t in np.asarray(tokens).ravel():
        t = int(t)
        if t not in _TOKEN_TO_CHAR:
            raise ValueError(f"token id {t} outside vocabulary (size {VOCAB_SIZE})")
        out.append(_TOKEN_TO_CHAR[t])
    return "".join(out)


def is_amino_acid(tokens) -> np.ndarray:
    """Boolean mask of positions holding one of the 20 amino-acid tokens."""
    arr = np.asarray(tokens)
    return (arr >= 0) & (arr < N_AMINO_ACIDS)
