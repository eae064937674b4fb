import numpy as np
import pytest

from invfold.structure import (
    AtomArrays,
    BackboneStructure,
    ChainBackbone,
    SequenceState,
    StructureError,
)
from invfold.vocab import MASK


def _line_chain(chain_id="A", n_res=4, x0=0.0):
    """Residues along x with plausible 3.8 A CA steps."""
    base = np.arange(n_res)[:, None] * np.array([3.8, 0.0, 0.0]) + np.array([x0, 0.0, 0.0])
    return ChainBackbone(
        chain_id=chain_id,
        n=base + np.array([-0.5, 0.3, 0.0]),
        ca=base,
        c=base + np.array([0.6, 0.4, 0.0]),
        o=base + np.array([0.7, 1.5, 0.1]),
    )


def test_chain_shape_validation():
    with pytest.raises(StructureError):
        ChainBackbone(chain_id="A", n=np.zeros((3, 2)), ca=np.zeros((3, 3)), c=np.zeros((3, 3)))
    with pytest.raises(StructureError):
        ChainBackbone(chain_id="A", n=np.zeros((3, 3)), ca=np.zeros((2, 3)), c=np.zeros((3, 3)))


def test_structure_requires_chains():
    with pytest.raises(StructureError):
        BackboneStructure(id="x", chains=[])


def test_atom_arrays_break_at_chain_boundary():
    s = BackboneStructure(id="x", chains=[_line_chain("A", 3), _line_chain("B", 2, x0=50.0)])
    arrays = s.atom_arrays()
    assert len(arrays) == 5
    assert arrays.break_after.tolist() == [False, False, True, False, False]
    assert arrays.chain_index.tolist() == [0, 0, 0, 1, 1]
    assert arrays.position.tolist() == [0, 1, 2, 3, 4]


def test_explicit_breaks_survive_concatenation():
    ch = _line_chain("A", 4)
    ch.breaks = np.array([False, True, False, False])
    arrays = BackboneStructure(id="x", chains=[ch]).atom_arrays()
    assert arrays.break_after.tolist() == [False, True, False, False]


def test_validate_rejects_nonfinite():
    ch = _line_chain("A", 3)
    ch.ca[1, 0] = np.nan
    with pytest.raises(StructureError, match="finite"):
        BackboneStructure(id="x", chains=[ch]).validate()


def test_validate_rejects_huge_ca_step():
    ch = _line_chain("A", 3)
    ch.n[2] += 100.0
    ch.ca[2] += 100.0
    ch.c[2] += 100.0
    with pytest.raises(StructureError):
        BackboneStructure(id="x", chains=[ch]).validate()


def test_validate_allows_flagged_break():
    ch = _line_chain("A", 3)
    ch.n[2] += 100.0
    ch.ca[2] += 100.0
    ch.c[2] += 100.0
    ch.breaks = np.array([False, True, False])
    BackboneStructure(id="x", chains=[ch]).validate()


def test_validate_native_length():
    s = BackboneStructure(id="x", chains=[_line_chain("A", 3)], native_tokens=np.array([0, 1]))
    with pytest.raises(StructureError):
        s.validate()


def test_permute_round_trip():
    arrays = BackboneStructure(id="x", chains=[_line_chain("A", 5)]).atom_arrays()
    order = np.array([3, 0, 4, 1, 2])
    p = arrays.permute(order)
    assert np.array_equal(p.ca, arrays.ca[order])
    assert np.array_equal(p.position, order)
    inv = p.slot_of_position()
    assert np.array_equal(p.ca[inv], arrays.ca)


def test_sequence_state_mask_consistency():
    tokens = np.array([0, MASK, 2])
    state = SequenceState(tokens)
    assert state.observed.tolist() == [True, False, True]
    with pytest.raises(StructureError):
        SequenceState(tokens, observed=np.array([True, True, True]))


def test_sequence_state_full_mask():
    state = SequenceState.full_mask(4)
    assert len(state) == 4
    assert (state.tokens == MASK).all()
    assert not state.observed.any()


def test_sequence_state_rejects_out_of_range():
    with pytest.raises(StructureError):
        SequenceState(np.array([0, 99]))
