import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from invfold import vocab


def test_alphabet_layout():
    assert vocab.AA_LETTERS == "ACDEFGHIKLMNPQRSTVWY"
    assert vocab.N_AMINO_ACIDS == 20
    assert vocab.MASK == 20
    assert vocab.PAD == 21
    assert vocab.UNK == 22
    assert vocab.CHAINBREAK == 23
    assert vocab.VOCAB_SIZE == 24


def test_tokenize_known_letters():
    toks = vocab.tokenize("ACDW")
    assert toks.tolist() == [0, 1, 2, 18]


def test_tokenize_unknown_to_unk():
    toks = vocab.tokenize("AXB")
    assert toks[0] == 0
    assert toks[1] == vocab.UNK
    assert toks[2] == vocab.UNK
    assert vocab.count_unknown("AXB") == 2


def test_detokenize_specials():
    ids = np.array([0, vocab.MASK, vocab.PAD, vocab.UNK, vocab.CHAINBREAK])
    assert vocab.detokenize(ids) == "A#-X|"


def test_detokenize_rejects_out_of_vocab():
    with pytest.raises(ValueError):
        vocab.detokenize(np.array([0, 24]))


def test_is_amino_acid():
    assert vocab.is_amino_acid(0)
    assert vocab.is_amino_acid(19)
    assert not vocab.is_amino_acid(vocab.MASK)


@given(st.text(alphabet=vocab.AA_LETTERS, min_size=1, max_size=40))
def test_round_trip_on_amino_letters(s):
    assert vocab.detokenize(vocab.tokenize(s)) == s


@given(st.lists(st.integers(min_value=0, max_value=19), min_size=1, max_size=40))
def test_round_trip_on_token_ids(ids):
    arr = np.asarray(ids, dtype=np.int64)
    assert np.array_equal(vocab.tokenize(vocab.detokenize(arr)), arr)
