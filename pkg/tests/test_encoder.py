"""Message-passing structure encoder."""

import numpy as np
import pytest
import torch

from invfold.collate import collate, make_item
from invfold.dataset import SyntheticSpec, gen_record
from invfold.encoder import EncoderConfig, StructureEncoder
from invfold.geometry import featurize
from invfold.vocab import MASK


def _structure(length=14, seed=9):
    spec = SyntheticSpec(n_samples=1, length_range=(length, length), seed=seed)
    structure, _ = gen_record(spec, 0)
    return structure


def _encoder(d_model=32, n_layers=2, k=6, seed=0):
    config = EncoderConfig(d_model=d_model, n_layers=n_layers, graph={"k_neighbors": k})
    torch.manual_seed(seed)
    return StructureEncoder(config).eval()


def _run(encoder, arrays):
    features, graph = featurize(arrays, encoder.config.graph)
    length, k_eff = graph.neighbors.shape
    node = torch.tensor(features.node, dtype=torch.float32)[None]
    edge = torch.tensor(features.edge, dtype=torch.float32)[None]
    neighbors = torch.tensor(graph.neighbors)[None]
    pad_mask = torch.ones(1, length, dtype=torch.bool)
    edge_mask = torch.ones(1, length, k_eff, dtype=torch.bool)
    with torch.no_grad():
        return encoder(node, edge, neighbors, pad_mask, edge_mask)


class TestConfig:
    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            EncoderConfig(d_model=0)
        with pytest.raises(ValueError):
            EncoderConfig(n_layers=-1)

    def test_graph_dict_coercion(self):
        config = EncoderConfig(graph={"k_neighbors": 5})
        assert config.graph.k_neighbors == 5


class TestEncoder:
    def test_zero_layers_is_node_projection(self):
        encoder = _encoder(n_layers=0)
        arrays = _structure().atom_arrays()
        states, _ = _run(encoder, arrays)
        features, _ = featurize(arrays, encoder.config.graph)
        node = torch.tensor(features.node, dtype=torch.float32)
        with torch.no_grad():
            want = encoder.embed(node)
        assert torch.equal(states[0], want)

    def test_permutation_equivariance_bitwise(self):
        encoder = _encoder()
        arrays = _structure().atom_arrays()
        states, proposal = _run(encoder, arrays)
        order = np.random.default_rng(1).permutation(len(arrays))
        states_p, proposal_p = _run(encoder, arrays.permute(order))
        assert torch.equal(states_p[0], states[0][order])
        assert torch.equal(proposal_p[0], proposal[0][order])

    def test_padding_does_not_leak_into_real_rows(self):
        encoder = _encoder()
        short = _structure(length=10, seed=1)
        long = _structure(length=17, seed=2)
        graph_config = encoder.config.graph
        item_short = make_item(short, np.full(10, MASK, dtype=np.int64), graph_config)
        item_long = make_item(long, np.full(17, MASK, dtype=np.int64), graph_config)
        alone = collate([item_short])
        padded = collate([item_short, item_long])
        with torch.no_grad():
            states_a, prop_a = encoder(
                alone.node, alone.edge, alone.neighbors, alone.pad_mask, alone.edge_mask
            )
            states_b, prop_b = encoder(
                padded.node, padded.edge, padded.neighbors, padded.pad_mask, padded.edge_mask
            )
        assert torch.equal(states_a[0], states_b[0, :10])
        assert torch.equal(prop_a[0], prop_b[0, :10])

    def test_padded_rows_come_back_zero(self):
        encoder = _encoder()
        short = _structure(length=10, seed=1)
        long = _structure(length=17, seed=2)
        graph_config = encoder.config.graph
        batch = collate(
            [
                make_item(short, np.full(10, MASK, dtype=np.int64), graph_config),
                make_item(long, np.full(17, MASK, dtype=np.int64), graph_config),
            ]
        )
        with torch.no_grad():
            states, proposal = encoder(
                batch.node, batch.edge, batch.neighbors, batch.pad_mask, batch.edge_mask
            )
        assert torch.equal(states[0, 10:], torch.zeros(7, 32))
        # proposal bias is zero-initialized, so padded logits are exactly zero
        assert torch.equal(proposal[0, 10:], torch.zeros(7, 20))

    def test_proposal_shape(self):
        encoder = _encoder()
        arrays = _structure(length=12).atom_arrays()
        states, proposal = _run(encoder, arrays)
        assert states.shape == (1, 12, 32)
        assert proposal.shape == (1, 12, 20)

    def test_single_residue_no_edges(self):
        encoder = _encoder()
        node = torch.zeros(1, 1, encoder.config.graph.node_dim)
        edge = torch.zeros(1, 1, 0, encoder.config.graph.edge_dim)
        neighbors = torch.zeros(1, 1, 0, dtype=torch.int64)
        pad_mask = torch.ones(1, 1, dtype=torch.bool)
        edge_mask = torch.zeros(1, 1, 0, dtype=torch.bool)
        with torch.no_grad():
            states, proposal = encoder(node, edge, neighbors, pad_mask, edge_mask)
        assert states.shape == (1, 1, 32)
        assert torch.isfinite(states).all()

    def test_build_determinism(self):
        a = _encoder(seed=3)
        b = _encoder(seed=3)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)
