"""Backbone geometry: dihedrals, local frames, k-NN graph, features.

All functions accept either a :class:`BackboneStructure` or its
:class:`AtomArrays` view. Sequence adjacency is defined by residue position
labels (not row order), so consistently permuting the rows of an
``AtomArrays`` permutes every output exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rand
from .structure import AtomArrays, BackboneStructure, ChainBackbone

FRAME_DEGENERACY_EPS = 1e-8


class GeometryError(ValueError):
    pass


@dataclass
class GraphConfig:
    k_neighbors: int = 30
    rbf_bins: int = 16
    rbf_range: tuple[float, float] = (2.0, 22.0)
    offset_clip: int = 32

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise GeometryError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.rbf_bins < 2:
            raise GeometryError(f"rbf_bins must be >= 2, got {self.rbf_bins}")
        lo, hi = self.rbf_range
        if not lo < hi:
            raise GeometryError(f"bad rbf_range {self.rbf_range}")
        if self.offset_clip < 1:
            raise GeometryError(f"offset_clip must be >= 1, got {self.offset_clip}")

    @property
    def node_dim(self) -> int:
        return 9  # sin/cos of (phi, psi, omega) + one defined-flag each

    @property
    def edge_dim(self) -> int:
        return self.rbf_bins + 3 + 9 + (2 * self.offset_clip + 1) + 1


@dataclass
class ResidueGraph:
    """Directed k-NN graph. ``neighbors[i]`` lists the min(k, L-1) nearest
    residues of i by CA distance, ascending, ties broken by ascending
    position label."""

    neighbors: np.ndarray  # (L, k_eff) int64 row indices


@dataclass
class FeatureSet:
    node: np.ndarray  # (L, node_dim)
    edge: np.ndarray  # (L, k_eff, edge_dim)
    frames: np.ndarray  # (L, 3, 3), columns are the basis vectors
    frame_degenerate: np.ndarray  # (L,) bool


def _arrays(structure) -> AtomArrays:
    if isinstance(structure, AtomArrays):
        return structure
    if isinstance(structure, BackboneStructure):
        return structure.atom_arrays()
    raise TypeError(f"expected BackboneStructure or AtomArrays, got {type(structure)}")


def dihedral_angle(p0, p1, p2, p3) -> np.ndarray:
    """Signed dihedral (radians) of the chain p0-p1-p2-p3, standard atan2
    convention. Vectorized over leading dimensions."""
    b0 = np.asarray(p0) - np.asarray(p1)
    b1 = np.asarray(p2) - np.asarray(p1)
    b2 = np.asarray(p3) - np.asarray(p2)
    b1n = b1 / np.linalg.norm(b1, axis=-1, keepdims=True)
    v = b0 - np.sum(b0 * b1n, axis=-1, keepdims=True) * b1n
    w = b2 - np.sum(b2 * b1n, axis=-1, keepdims=True) * b1n
    x = np.sum(v * w, axis=-1)
    y = np.sum(np.cross(b1n, v) * w, axis=-1)
    return np.arctan2(y, x)


def backbone_dihedrals(structure):
    """Per-residue (phi, psi, omega) in radians plus a (L, 3) defined-mask.

    phi and omega are undefined at a chain start, psi at a chain end; a
    flagged break between positions p and p+1 severs both directions.
    Undefined angles are reported as 0 with their mask entry False.
    """
    arrays = _arrays(structure)
    length = len(arrays)
    inv = arrays.slot_of_position()
    phi = np.zeros(length)
    psi = np.zeros(length)
    omega = np.zeros(length)
    defined = np.zeros((length, 3), dtype=bool)
    if length == 0:
        return phi, psi, omega, defined

    order = inv  # order[p] = row holding position p
    pos = np.arange(length)
    # link between position p-1 and p exists if same protein run and no break
    has_prev = np.zeros(length, dtype=bool)
    has_prev[1:] = ~arrays.break_after[order[:-1]]
    has_next = np.zeros(length, dtype=bool)
    has_next[:-1] = has_prev[1:]

    p_prev = pos[has_prev]
    rows = order[p_prev]
    rows_m1 = order[p_prev - 1]
    phi_vals = dihedral_angle(
        arrays.c[rows_m1], arrays.n[rows], arrays.ca[rows], arrays.c[rows]
    )
    omega_vals = dihedral_angle(
        arrays.ca[rows_m1], arrays.c[rows_m1], arrays.n[rows], arrays.ca[rows]
    )
    phi[rows] = phi_vals
    omega[rows] = omega_vals
    defined[rows, 0] = True
    defined[rows, 2] = True

    p_next = pos[has_next]
    rows = order[p_next]
    rows_p1 = order[p_next + 1]
    psi_vals = dihedral_angle(
        arrays.n[rows], arrays.ca[rows], arrays.c[rows], arrays.n[rows_p1]
    )
    psi[rows] = psi_vals
    defined[rows, 1] = True
    return phi, psi, omega, defined


def _frames_impl(arrays: AtomArrays):
    u = arrays.c - arrays.ca
    v = arrays.n - arrays.ca
    cross_norm = np.linalg.norm(np.cross(u, v), axis=-1)
    degenerate = cross_norm < FRAME_DEGENERACY_EPS
    frames = np.tile(np.eye(3), (len(arrays), 1, 1))
    ok = ~degenerate
    if ok.any():
        b1 = u[ok] / np.linalg.norm(u[ok], axis=-1, keepdims=True)
        w = v[ok] - np.sum(v[ok] * b1, axis=-1, keepdims=True) * b1
        b2 = w / np.linalg.norm(w, axis=-1, keepdims=True)
        b3 = np.cross(b1, b2)
        frames[ok] = np.stack([b1, b2, b3], axis=-1)  # columns
    return frames, degenerate


def local_frames(structure, strict: bool = True):
    """Right-handed orthonormal frame per residue via Gram-Schmidt on
    (C - CA, N - CA). Returns (frames, degenerate_mask); in strict mode a
    degenerate (collinear) residue raises instead."""
    arrays = _arrays(structure)
    frames, degenerate = _frames_impl(arrays)
    if strict and degenerate.any():
        row = int(np.nonzero(degenerate)[0][0])
        raise GeometryError(
            f"degenerate backbone frame at residue position "
            f"{int(arrays.position[row])}: C-CA and N-CA are collinear"
        )
    return frames, degenerate


def knn_graph(structure, config: GraphConfig) -> ResidueGraph:
    arrays = _arrays(structure)
    length = len(arrays)
    if length < 2:
        return ResidueGraph(neighbors=np.zeros((length, 0), dtype=np.int64))
    diff = arrays.ca[:, None, :] - arrays.ca[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    k_eff = min(config.k_neighbors, length - 1)
    neighbors = np.empty((length, k_eff), dtype=np.int64)
    pos = arrays.position
    for i in range(length):
        order = np.lexsort((pos, dist[i]))
        order = order[order != i][:k_eff]
        neighbors[i] = order
    return ResidueGraph(neighbors=neighbors)


def rbf_expand(dist: np.ndarray, config: GraphConfig) -> np.ndarray:
    """Radial basis expansion with centers evenly spaced over rbf_range and
    width equal to the center spacing."""
    lo, hi = config.rbf_range
    centers = np.linspace(lo, hi, config.rbf_bins)
    sigma = centers[1] - centers[0]
    z = (np.asarray(dist)[..., None] - centers) / sigma
    return np.exp(-0.5 * z * z)


def featurize(structure, config: GraphConfig, strict: bool = False):
    """Node/edge features plus the k-NN graph.

    Node features: sin/cos of (phi, psi, omega) with undefined angles zeroed,
    followed by the three defined-flags. Edge features (source i, neighbor j):
    RBF of the CA-CA distance, the unit displacement CA_j - CA_i expressed in
    i's frame, the relative rotation R_i^T R_j flattened, a one-hot of the
    clipped signed position offset, and a same-chain flag.

    In strict mode degenerate frames raise; otherwise they fall back to the
    identity frame and are reported in ``FeatureSet.frame_degenerate``.
    """
    arrays = _arrays(structure)
    frames, degenerate = local_frames(arrays, strict=strict)
    graph = knn_graph(arrays, config)
    phi, psi, omega, defined = backbone_dihedrals(arrays)

    angles = np.stack([phi, psi, omega], axis=-1)
    # undefined angles contribute zeros, not cos(0)=1
    node = np.concatenate(
        [np.sin(angles) * defined, np.cos(angles) * defined, defined.astype(np.float64)],
        axis=-1,
    )

    length = len(arrays)
    k_eff = graph.neighbors.shape[1]
    edge = np.zeros((length, k_eff, config.edge_dim), dtype=np.float64)
    if k_eff > 0:
        src = np.repeat(np.arange(length), k_eff)
        dst = graph.neighbors.ravel()
        delta = arrays.ca[dst] - arrays.ca[src]
        dist = np.linalg.norm(delta, axis=-1)
        rbf = rbf_expand(dist, config)
        safe = np.where(dist > 0.0, dist, 1.0)
        local = np.einsum("nij,ni->nj", frames[src], delta)  # R_i^T delta
        unit = np.where(dist[:, None] > 0.0, local / safe[:, None], 0.0)
        relrot = np.einsum("nij,nik->njk", frames[src], frames[dst]).reshape(-1, 9)
        offset = np.clip(
            arrays.position[dst] - arrays.position[src],
            -config.offset_clip,
            config.offset_clip,
        )
        onehot = np.zeros((len(src), 2 * config.offset_clip + 1))
        onehot[np.arange(len(src)), offset + config.offset_clip] = 1.0
        same_chain = (arrays.chain_index[src] == arrays.chain_index[dst]).astype(
            np.float64
        )[:, None]
        edge = np.concatenate([rbf, unit, relrot, onehot, same_chain], axis=-1).reshape(
            length, k_eff, config.edge_dim
        )
    features = FeatureSet(
        node=node, edge=edge, frames=frames, frame_degenerate=degenerate
    )
    return features, graph


def perturb(structure: BackboneStructure, eps: float, seed: int) -> BackboneStructure:
    """Add iid N(0, eps^2) noise to every atom coordinate.

    Draw order on ``stream(seed, "perturb")``: chains in order; within a chain
    one ``standard_normal`` block per atom kind in (N, CA, C, O-if-present).
    eps = 0 returns an identical copy without consuming randomness.
    """
    if eps < 0:
        raise GeometryError(f"eps must be >= 0, got {eps}")
    rng = rand.stream(seed, "perturb")
    chains = []
    for ch in structure.chains:
        arrays = {}
        for name in ("n", "ca", "c", "o"):
            arr = getattr(ch, name)
            if arr is None:
                arrays[name] = None
            elif eps == 0.0:
                arrays[name] = arr.copy()
            else:
                arrays[name] = arr + eps * rng.standard_normal(arr.shape)
        chains.append(
            ChainBackbone(
                chain_id=ch.chain_id,
                breaks=ch.breaks.copy() if ch.breaks is not None else None,
                **arrays,
            )
        )
    return BackboneStructure(
        id=structure.id,
        chains=chains,
        native_tokens=(
            structure.native_tokens.copy() if structure.native_tokens is not None else None
        ),
    )
