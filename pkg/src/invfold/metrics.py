"""Evaluation metrics: recovery, perplexity, structural-context dissection,
diversity sweeps and the antibody-style region metrics.

Everything here is a pure function over numpy arrays so each metric can be
checked against a brute-force reference implementation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch

from .collate import collate, make_item
from .decoding import DecodingConfig, batch_design
from .geometry import backbone_dihedrals
from .structure import BackboneStructure
from .vocab import AA_LETTERS, MASK, N_AMINO_ACIDS, tokenize

HELIX_CENTER_DEG = (-60.0, -45.0)
STRAND_CENTER_DEG = (-135.0, 135.0)
SS_BOX_DEG = 40.0
CORE_RADIUS = 10.0
CORE_MIN_NEIGHBORS = 16
INTERFACE_RADIUS = 8.0


def _as_tokens(seq) -> np.ndarray:
    if isinstance(seq, str):
        return tokenize(seq)
    return np.asarray(seq, dtype=np.int64)


def recovery(pred, native) -> float:
    """Fraction of positions where the two sequences agree."""
    p, n = _as_tokens(pred), _as_tokens(native)
    if p.shape != n.shape:
        raise ValueError(f"length mismatch: {p.shape[0]} vs {n.shape[0]}")
    if p.size == 0:
        raise ValueError("empty sequence")
    return float((p == n).mean())


def median_recovery(values) -> float:
    """Lower-middle order statistic: sorted[(n - 1) // 2]."""
    vals = sorted(float(v) for v in values)
    if not vals:
        raise ValueError("empty value list")
    return vals[(len(vals) - 1) // 2]


def perplexity(model, dataset) -> float:
    """exp(mean per-residue NLL) under one full-mask pass per protein.

    All positions are masked, structure observed; the NLL of each native
    amino acid is pooled over every scorable residue in the dataset.
    """
    if not dataset:
        raise ValueError("empty dataset")
    graph_config = model.config.encoder.graph
    dtype = next(model.parameters()).dtype
    total_nll = 0.0
    total_count = 0
    model.eval()
    with torch.no_grad():
        for structure, state in dataset:
            tokens = np.full(len(state), MASK, dtype=np.int64)
            batch = collate([make_item(structure, tokens, graph_config)], dtype=dtype)
            logp = torch.log_softmax(model(batch).design_logits[0].double(), dim=-1).numpy()
            native = state.tokens
            ok = native < N_AMINO_ACIDS
            total_nll += float(-logp[np.flatnonzero(ok), native[ok]].sum())
            total_count += int(ok.sum())
    if total_count == 0:
        raise ValueError("no scorable residues in dataset")
    return math.exp(total_nll / total_count)


@dataclass
class ContextLabels:
    burial: np.ndarray  # "core" / "surface" per residue
    secondary: np.ndarray  # "helix" / "strand" / "loop"
    interface: np.ndarray  # bool


def _in_box_deg(phi_deg, psi_deg, center) -> bool:
    dphi = (phi_deg - center[0] + 180.0) % 360.0 - 180.0
    dpsi = (psi_deg - center[1] + 180.0) % 360.0 - 180.0
    return abs(dphi) <= SS_BOX_DEG and abs(dpsi) <= SS_BOX_DEG


def label_contexts(structure: BackboneStructure) -> ContextLabels:
    """Per-residue context labels in position order.

    Burial uses a CA-neighbor count proxy: core iff at least 16 other CA
    atoms lie within 10 A. Secondary structure is a 40 degree (phi, psi) box
    around canonical helix/strand centers, with undefined dihedrals labeled
    loop. Interface means any other-chain CA within 8 A.
    """
    arrays = structure.atom_arrays()
    length = len(arrays)
    inv = arrays.slot_of_position()
    ca = arrays.ca[inv]
    chain = arrays.chain_index[inv]

    diff = ca[:, None, :] - ca[None, :, :]
    dist = np.sqrt((diff**2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    burial = np.where(
        (dist <= CORE_RADIUS).sum(axis=1) >= CORE_MIN_NEIGHBORS, "core", "surface"
    )

    phi, psi, _, defined = backbone_dihedrals(structure)
    phi, psi, defined = phi[inv], psi[inv], defined[inv]
    secondary = np.full(length, "loop", dtype=object)
    for i in range(length):
        if not (defined[i, 0] and defined[i, 1]):
            continue
        phi_d, psi_d = math.degrees(phi[i]), math.degrees(psi[i])
        if _in_box_deg(phi_d, psi_d, HELIX_CENTER_DEG):
            secondary[i] = "helix"
        elif _in_box_deg(phi_d, psi_d, STRAND_CENTER_DEG):
            secondary[i] = "strand"

    other = chain[:, None] != chain[None, :]
    interface = ((dist <= INTERFACE_RADIUS) & other).any(axis=1)
    return ContextLabels(
        burial=burial.astype(object), secondary=secondary, interface=interface
    )


def dissect_recovery(preds, natives, labels: list[ContextLabels]) -> dict:
    """Residue-pooled recovery per context class.

    Returns {category: {class: {"hits", "count", "recovery"}}}; classes with
    zero residues are absent. Within a category the integer hits/counts sum
    to the overall totals, so the residue-weighted mean over classes equals
    overall recovery exactly.
    """
    if not (len(preds) == len(natives) == len(labels)):
        raise ValueError("preds, natives and labels must align")
    table: dict[str, dict[str, list[int]]] = {
        "burial": {},
        "secondary": {},
        "interface": {},
    }
    for pred, native, lab in zip(preds, natives, labels):
        p, n = _as_tokens(pred), _as_tokens(native)
        if p.shape != n.shape or p.shape[0] != len(lab.interface):
            raise ValueError("prediction, native and labels must share a length")
        hit = p == n
        classes = {
            "burial": lab.burial,
            "secondary": lab.secondary,
            "interface": np.where(lab.interface, "interface", "non-interface"),
        }
        for category, per_res in classes.items():
            for cls in np.unique(per_res):
                sel = per_res == cls
                cell = table[category].setdefault(str(cls), [0, 0])
                cell[0] += int(hit[sel].sum())
                cell[1] += int(sel.sum())
    return {
        category: {
            cls: {"hits": h, "count": c, "recovery": h / c}
            for cls, (h, c) in sorted(cells.items())
        }
        for category, cells in table.items()
    }


def longest_run_ratio(seq: str) -> float:
    """Longest single-letter run divided by sequence length."""
    if not seq:
        raise ValueError("empty sequence")
    best = run = 1
    for a, b in zip(seq, seq[1:]):
        run = run + 1 if a == b else 1
        best = max(best, run)
    return best / len(seq)


def aa_entropy(seq: str) -> float:
    """Shannon entropy (natural log) of the letter frequencies."""
    if not seq:
        raise ValueError("empty sequence")
    _, counts = np.unique(list(seq), return_counts=True)
    freq = counts / counts.sum()
    return float(-(freq * np.log(freq)).sum())


def _substring_in_enough(seqs: list[str], k: int, threshold: int) -> bool:
    counts: dict[str, int] = {}
    for s in seqs:
        seen = {s[i : i + k] for i in range(len(s) - k + 1)}
        for sub in seen:
            counts[sub] = counts.get(sub, 0) + 1
            if counts[sub] >= threshold:
                return True
    return False


def longest_common_substring(seqs: list[str], threshold: int) -> int:
    """Length of the longest contiguous substring present in at least
    ``threshold`` of the sequences. Feasibility is monotone in length (every
    substring of a shared string is shared), so binary search is exact."""
    if not seqs:
        raise ValueError("empty sequence list")
    lo, hi = 0, max(len(s) for s in seqs)
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if _substring_in_enough(seqs, mid, threshold):
            lo = mid
        else:
            hi = mid - 1
    return lo


def antibody_metrics(designs, native, region_mask, contact_mask=None) -> dict:
    """Region-design metrics over a set of designed sequences.

    designs: full-length token arrays (or strings); native: full-length
    reference; region_mask: designed positions; contact_mask: subset of the
    region scored separately (cAAR is None when absent or empty).
    """
    if not designs:
        raise ValueError("empty design set")
    native_t = _as_tokens(native)
    region = np.asarray(region_mask, dtype=bool)
    if region.shape != native_t.shape:
        raise ValueError("region mask must align with the native sequence")
    if not region.any():
        raise ValueError("empty design region")
    if contact_mask is not None:
        contact = np.asarray(contact_mask, dtype=bool)
        if (contact & ~region).any():
            raise ValueError("contact mask extends outside the designed region")
    else:
        contact = None

    tokens = [_as_tokens(d) for d in designs]
    for t in tokens:
        if t.shape != native_t.shape:
            raise ValueError("design length differs from native length")
    region_strings = ["".join(AA_LETTERS[i] for i in t[region]) for t in tokens]

    aar = float(np.mean([(t[region] == native_t[region]).mean() for t in tokens]))
    caar = None
    if contact is not None and contact.any():
        caar = float(np.mean([(t[contact] == native_t[contact]).mean() for t in tokens]))
    threshold = math.ceil(0.3 * len(tokens))
    return {
        "aar": aar,
        "caar": caar,
        "longest_comm_subseq": longest_common_substring(region_strings, threshold),
        "longest_cons_ratio": float(np.mean([longest_run_ratio(s) for s in region_strings])),
        "aa_entropy": float(np.mean([aa_entropy(s) for s in region_strings])),
    }


def pairwise_identity(seqs: list[str]) -> float:
    """Mean per-position identity over unordered pairs; 1.0 when there are
    fewer than two sequences (a singleton is trivially self-identical)."""
    if not seqs:
        raise ValueError("empty sequence list")
    if len(seqs) < 2:
        return 1.0
    total, pairs = 0.0, 0
    for i in range(len(seqs)):
        for j in range(i + 1, len(seqs)):
            a, b = seqs[i], seqs[j]
            if len(a) != len(b):
                raise ValueError("pairwise identity requires equal lengths")
            total += sum(x == y for x, y in zip(a, b)) / len(a)
            pairs += 1
    return total / pairs


def diversity_sweep(model, dataset, taus, n_samples: int, base: DecodingConfig) -> list[dict]:
    """Sample ``n_samples`` designs per structure at each temperature and
    aggregate recovery, distinct-design fraction and pairwise identity.

    The same seed path is reused across temperatures (coupled uniforms), so
    rows differ only through the temperature itself.
    """
    structures = [s for s, _ in dataset]
    natives = [state.tokens for _, state in dataset]
    rows = []
    for tau in taus:
        config = replace(base, strategy="sample", temperature=float(tau), n_samples=n_samples)
        recs, distinct, ident = [], [], []
        for outcome in batch_design(model, structures, config):
            if outcome.error is not None:
                raise RuntimeError(
                    f"design failed for {outcome.structure_id}: {outcome.error}"
                )
            seqs = [r.sequence for r in outcome.results]
            native = natives[outcome.index]
            recs.extend(recovery(r.tokens, native) for r in outcome.results)
            distinct.append(len(set(seqs)) / len(seqs))
            ident.append(pairwise_identity(seqs))
        rows.append(
            {
                "tau": float(tau),
                "mean_recovery": float(np.mean(recs)),
                "distinct_fraction": float(np.mean(distinct)),
                "mean_pairwise_identity": float(np.mean(ident)),
            }
        )
    return rows


def evaluate(model, dataset, decoding: DecodingConfig, with_contexts: bool = True) -> dict:
    """Full report: designs every structure with the given decoding config,
    then scores recovery (median and mean), perplexity and, optionally, the
    per-context recovery table."""
    if not dataset:
        raise ValueError("empty dataset")
    structures = [s for s, _ in dataset]
    natives = [state.tokens for _, state in dataset]
    outcomes = batch_design(model, structures, decoding)
    preds = []
    for outcome in outcomes:
        if outcome.error is not None:
            raise RuntimeError(f"design failed for {outcome.structure_id}: {outcome.error}")
        preds.append(outcome.results[0].tokens)
    recoveries = [recovery(p, n) for p, n in zip(preds, natives)]
    report = {
        "n_proteins": len(dataset),
        "median_recovery": median_recovery(recoveries),
        "mean_recovery": float(np.mean(recoveries)),
        "perplexity": perplexity(model, dataset),
        "per_protein_recovery": [float(r) for r in recoveries],
    }
    if with_contexts:
        labels = [label_contexts(s) for s in structures]
        report["contexts"] = dissect_recovery(preds, natives, labels)
    return report
