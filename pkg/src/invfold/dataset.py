"""Dataset I/O and the synthetic structure/sequence generator.

File format (one JSON object per line)::

    {"id": "...", "chains": [{"chain_id": "A", "seq": "ACD...",
        "coords": {"N": [[x,y,z],...], "CA": [...], "C": [...], "O": [...]|null}}]}

The generator emits single-chain records with ideal backbone geometry built by
internal-coordinate extension from per-residue (phi, psi) dihedrals, and
sequences from a first-order rule table coupled to the secondary-structure
class. Everything is drawn from per-record streams (see :mod:`invfold.rand`),
so generating record i alone gives byte-identical output to generating the
whole dataset.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import rand
from .structure import BackboneStructure, ChainBackbone, SequenceState
from .vocab import N_AMINO_ACIDS, count_unknown, detokenize, tokenize

logger = logging.getLogger(__name__)


class DataError(ValueError):
    pass


# ---------------------------------------------------------------------------
# JSONL I/O


class ParsedDataset(list):
    """List of (BackboneStructure, SequenceState) pairs plus a counter of
    sequence letters that had to be mapped to UNK."""

    unknown_residues: int = 0


def _parse_chain(obj: dict, record_id: str, line_no: int) -> tuple[ChainBackbone, str]:
    try:
        chain_id = obj["chain_id"]
        seq = obj["seq"]
        coords = obj["coords"]
    except (KeyError, TypeError) as exc:
        raise DataError(f"line {line_no}: record {record_id!r}: missing field {exc}")
    arrays = {}
    for name in ("N", "CA", "C", "O"):
        raw = coords.get(name)
        if raw is None:
            if name == "O":
                arrays["O"] = None
                continue
            raise DataError(
                f"line {line_no}: record {record_id!r} chain {chain_id!r}: "
                f"missing {name} coordinates"
            )
        for i, xyz in enumerate(raw):
            if len(xyz) != 3:
                raise DataError(
                    f"line {line_no}: record {record_id!r} chain {chain_id!r}: "
                    f"{name}[{i}] has {len(xyz)} components, expected 3"
                )
        arrays[name] = np.asarray(raw, dtype=np.float64)
    if arrays["N"].shape[0] != len(seq):
        raise DataError(
            f"line {line_no}: record {record_id!r} chain {chain_id!r}: "
            f"{arrays['N'].shape[0]} residues but sequence length {len(seq)}"
        )
    chain = ChainBackbone(
        chain_id=chain_id, n=arrays["N"], ca=arrays["CA"], c=arrays["C"], o=arrays["O"]
    )
    return chain, seq


def parse_dataset(path, format: str = "jsonl") -> ParsedDataset:
    """Read a dataset file into (structure, fully-observed state) pairs.

    Unknown sequence letters become UNK tokens; their total count is logged
    and exposed as ``result.unknown_residues``.
    """
    if format != "jsonl":
        raise DataError(f"unsupported dataset format: {format!r}")
    out = ParsedDataset()
    unknown = 0
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {line_no}: malformed JSON: {exc}") from exc
            try:
                record_id = obj["id"]
                chain_objs = obj["chains"]
            except (KeyError, TypeError):
                raise DataError(f"line {line_no}: record missing 'id' or 'chains'")
            if not chain_objs:
                raise DataError(f"line {line_no}: record {record_id!r} has no chains")
            chains, seqs = [], []
            for chain_obj in chain_objs:
                chain, seq = _parse_chain(chain_obj, record_id, line_no)
                chains.append(chain)
                seqs.append(seq)
            full_seq = "".join(seqs)
            n_unknown = count_unknown(full_seq)
            if n_unknown:
                logger.warning(
                    "record %r: %d unknown sequence letter(s) mapped to UNK",
                    record_id,
                    n_unknown,
                )
                unknown += n_unknown
            tokens = tokenize(full_seq)
            structure = BackboneStructure(
                id=record_id, chains=chains, native_tokens=tokens
            )
            out.append((structure, SequenceState(tokens)))
    out.unknown_residues = unknown
    return out


def write_dataset(records, path) -> None:
    """Inverse of :func:`parse_dataset`."""
    with open(path, "w", encoding="utf-8") as fh:
        for structure, state in records:
            chains = []
            offset = 0
            for ch in structure.chains:
                length = len(ch)
                seq = detokenize(state.tokens[offset : offset + length])
                chains.append(
                    {
                        "chain_id": ch.chain_id,
                        "seq": seq,
                        "coords": {
                            "N": ch.n.tolist(),
                            "CA": ch.ca.tolist(),
                            "C": ch.c.tolist(),
                            "O": ch.o.tolist() if ch.o is not None else None,
                        },
                    }
                )
                offset += length
            fh.write(json.dumps({"id": structure.id, "chains": chains}) + "\n")


# ---------------------------------------------------------------------------
# Synthetic generator

CLASS_HELIX, CLASS_STRAND, CLASS_COIL = 0, 1, 2
N_CLASSES = 3
START_TOKEN = N_AMINO_ACIDS  # rule-table column for "no previous residue"

# (phi, psi) targets in degrees; coil is sampled uniformly outside both boxes.
CLASS_DIHEDRALS = {CLASS_HELIX: (-60.0, -45.0), CLASS_STRAND: (-135.0, 135.0)}
DIHEDRAL_NOISE_DEG = 8.0
SS_BOX_HALF_WIDTH_DEG = 40.0

# Ideal backbone internal coordinates (lengths in Angstrom, angles in degrees).
BOND_N_CA = 1.458
BOND_CA_C = 1.525
BOND_C_N = 1.329
BOND_C_O = 1.231
ANGLE_N_CA_C = 111.0
ANGLE_CA_C_N = 116.6
ANGLE_C_N_CA = 121.7
ANGLE_CA_C_O = 120.5
OMEGA_TRANS_DEG = 180.0


def default_rule_tables() -> np.ndarray:
    """Benchmark rule table, shape (3 classes, 21 predecessors).

    Each class owns a two-letter alternation (entry, partner). A predecessor
    inside the pair advances the alternation; any other predecessor (the
    previous segment's exit letter, the start of the chain, or a noise hit
    outside the pair) restarts it at the entry letter. Segment boundaries
    therefore resynchronize the pattern, and within a segment the letter
    encodes the parity of the distance to the segment start. Local geometry
    alone reveals the class and the boundary residue but not that parity, so
    the previous token stays informative deep into every segment.
    """
    letters = {
        CLASS_HELIX: (0, 3),  # A, E
        CLASS_STRAND: (17, 7),  # V, I
        CLASS_COIL: (5, 15),  # G, S
    }
    lut = np.empty((N_CLASSES, N_AMINO_ACIDS + 1), dtype=np.int64)
    for cls, (entry, partner) in letters.items():
        for prev in range(N_AMINO_ACIDS + 1):
            lut[cls, prev] = partner if prev == entry else entry
    return lut


@dataclass
class SyntheticSpec:
    n_samples: int = 100
    length_range: tuple[int, int] = (30, 60)
    segment_length_range: tuple[int, int] = (2, 4)
    noise_rate: float = 0.1
    rule_tables: np.ndarray = field(default_factory=default_rule_tables)
    seed: int = 0

    def __post_init__(self):
        self.rule_tables = np.asarray(self.rule_tables, dtype=np.int64)
        if self.rule_tables.shape != (N_CLASSES, N_AMINO_ACIDS + 1):
            raise DataError(
                f"rule_tables must have shape ({N_CLASSES}, {N_AMINO_ACIDS + 1}), "
                f"got {self.rule_tables.shape}"
            )
        if ((self.rule_tables < 0) | (self.rule_tables >= N_AMINO_ACIDS)).any():
            raise DataError("rule_tables entries must be amino-acid tokens")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise DataError(f"noise_rate must be in [0, 1], got {self.noise_rate}")
        lo, hi = self.length_range
        if not (0 < lo <= hi):
            raise DataError(f"bad length_range {self.length_range}")
        slo, shi = self.segment_length_range
        if not (0 < slo <= shi):
            raise DataError(f"bad segment_length_range {self.segment_length_range}")


def bayes_optimal_recovery(spec: SyntheticSpec) -> float:
    """Expected per-residue accuracy of the predictor that knows the class and
    the previous residue: right unless a noise draw lands elsewhere."""
    eta = spec.noise_rate
    return (1.0 - eta) + eta / N_AMINO_ACIDS


def segment_plan(spec: SyntheticSpec, index: int) -> np.ndarray:
    """Per-residue class labels for record ``index``.

    Draw order on ``stream(seed, index, "plan")``: the protein length
    ``L = integers(lo, hi+1)``; then per segment, the class (first segment
    ``integers(3)``; afterwards ``integers(2)`` indexing the ascending list of
    the other two classes) and the segment length ``integers(slo, shi+1)``,
    until L residues are covered (the last segment is truncated).
    """
    rng = rand.stream(spec.seed, index, "plan")
    lo, hi = spec.length_range
    length = int(rng.integers(lo, hi + 1))
    slo, shi = spec.segment_length_range
    classes = np.empty(length, dtype=np.int64)
    covered = 0
    prev_cls = None
    while covered < length:
        if prev_cls is None:
            cls = int(rng.integers(N_CLASSES))
        else:
            others = [c for c in range(N_CLASSES) if c != prev_cls]
            cls = others[int(rng.integers(len(others)))]
        seg_len = int(rng.integers(slo, shi + 1))
        take = min(seg_len, length - covered)
        classes[covered : covered + take] = cls
        covered += take
        prev_cls = cls
    return classes


def _sample_dihedrals(spec: SyntheticSpec, index: int, classes: np.ndarray):
    """Per-residue (phi, psi) in degrees.

    Draw order on ``stream(seed, index, "angles")``, residue by residue:
    helix/strand draw ``normal(0, 8)`` for phi then psi around the class
    values; coil repeatedly draws ``uniform(-180, 0)`` for phi and
    ``uniform(-180, 180)`` for psi until the pair falls outside both class
    boxes, then adds the same two normal draws.
    """
    rng = rand.stream(spec.seed, index, "angles")
    length = classes.shape[0]
    phi = np.empty(length)
    psi = np.empty(length)
    for i, cls in enumerate(classes):
        if cls in CLASS_DIHEDRALS:
            phi0, psi0 = CLASS_DIHEDRALS[int(cls)]
        else:
            while True:
                phi0 = rng.uniform(-180.0, 0.0)
                psi0 = rng.uniform(-180.0, 180.0)
                if not _inside_any_ss_box(phi0, psi0):
                    break
        phi[i] = phi0 + rng.normal(0.0, DIHEDRAL_NOISE_DEG)
        psi[i] = psi0 + rng.normal(0.0, DIHEDRAL_NOISE_DEG)
    return phi, psi


def _inside_any_ss_box(phi_deg: float, psi_deg: float) -> bool:
    for phi0, psi0 in CLASS_DIHEDRALS.values():
        if (
            abs(phi_deg - phi0) <= SS_BOX_HALF_WIDTH_DEG
            and abs(psi_deg - psi0) <= SS_BOX_HALF_WIDTH_DEG
        ):
            return True
    return False


def _extend(a, b, c, bond: float, angle_deg: float, torsion_deg: float) -> np.ndarray:
    """Place atom d so |cd| = bond, angle(b,c,d) = angle and dihedral(a,b,c,d)
    = torsion (standard atan2 sign convention)."""
    theta = np.deg2rad(angle_deg)
    chi = np.deg2rad(torsion_deg)
    bc = c - b
    bc = bc / np.linalg.norm(bc)
    n = np.cross(b - a, bc)
    n = n / np.linalg.norm(n)
    m = np.cross(n, bc)
    return c + bond * (
        -np.cos(theta) * bc + np.sin(theta) * np.cos(chi) * m + np.sin(theta) * np.sin(chi) * n
    )


def build_backbone(phi_deg: np.ndarray, psi_deg: np.ndarray):
    """Build N/CA/C/O coordinates from dihedrals with ideal bond geometry and
    trans peptide bonds (omega = 180)."""
    length = phi_deg.shape[0]
    n = np.empty((length, 3))
    ca = np.empty((length, 3))
    c = np.empty((length, 3))
    o = np.empty((length, 3))
    n[0] = (0.0, 0.0, 0.0)
    ca[0] = (BOND_N_CA, 0.0, 0.0)
    ang = np.deg2rad(ANGLE_N_CA_C)
    c[0] = ca[0] + BOND_CA_C * np.array([-np.cos(ang), np.sin(ang), 0.0])
    for i in range(1, length):
        n[i] = _extend(n[i - 1], ca[i - 1], c[i - 1], BOND_C_N, ANGLE_CA_C_N, psi_deg[i - 1])
        ca[i] = _extend(ca[i - 1], c[i - 1], n[i], BOND_N_CA, ANGLE_C_N_CA, OMEGA_TRANS_DEG)
        c[i] = _extend(c[i - 1], n[i], ca[i], BOND_CA_C, ANGLE_N_CA_C, phi_deg[i])
    for i in range(length):
        o[i] = _extend(n[i], ca[i], c[i], BOND_C_O, ANGLE_CA_C_O, psi_deg[i] + 180.0)
    return n, ca, c, o


def _sample_sequence(spec: SyntheticSpec, index: int, classes: np.ndarray) -> np.ndarray:
    """Draw order on ``stream(seed, index, "seq")``, residue by residue:
    ``u = random()``; if ``u < noise_rate`` the residue is ``integers(20)``,
    otherwise ``rule_tables[class, prev]`` (prev = 20 at the chain start)."""
    rng = rand.stream(spec.seed, index, "seq")
    length = classes.shape[0]
    tokens = np.empty(length, dtype=np.int64)
    prev = START_TOKEN
    for i in range(length):
        if rng.random() < spec.noise_rate:
            tokens[i] = int(rng.integers(N_AMINO_ACIDS))
        else:
            tokens[i] = spec.rule_tables[classes[i], prev]
        prev = tokens[i]
    return tokens


def gen_record(spec: SyntheticSpec, index: int) -> tuple[BackboneStructure, SequenceState]:
    """Generate record ``index`` of the dataset described by ``spec``."""
    classes = segment_plan(spec, index)
    phi, psi = _sample_dihedrals(spec, index, classes)
    n, ca, c, o = build_backbone(phi, psi)
    tokens = _sample_sequence(spec, index, classes)
    structure = BackboneStructure(
        id=f"syn-{index:06d}",
        chains=[ChainBackbone(chain_id="A", n=n, ca=ca, c=c, o=o)],
        native_tokens=tokens,
    )
    return structure, SequenceState(tokens)


def gen_synthetic(spec: SyntheticSpec) -> list[tuple[BackboneStructure, SequenceState]]:
    return [gen_record(spec, i) for i in range(spec.n_samples)]
