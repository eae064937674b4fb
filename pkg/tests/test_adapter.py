"""Structural adapter: identity at init, cross-attention, trainable counts."""

import numpy as np
import pytest
import torch

from invfold.adapter import AdapterConfig, StructuralAdapter, trainable_ratio
from invfold.collate import collate, make_item
from invfold.lm import aa_cross_entropy
from invfold.training import apply_mode, cmlm_mask
from invfold.vocab import MASK


def _adapter(d_model=32, d_struct=16, n_heads=2, seed=0, **kwargs):
    torch.manual_seed(seed)
    return StructuralAdapter(
        AdapterConfig(d_model=d_model, d_struct=d_struct, n_heads=n_heads, **kwargs)
    ).eval()


def _states(length=11, d_model=32, d_struct=16, seed=1, dtype=torch.float32):
    gen = torch.Generator().manual_seed(seed)
    seq = torch.randn(1, length, d_model, generator=gen, dtype=dtype)
    struct = torch.randn(1, length, d_struct, generator=gen, dtype=dtype)
    return seq, struct


class TestConfig:
    def test_rejects_odd_width(self):
        with pytest.raises(ValueError):
            AdapterConfig(d_model=33, d_struct=16, n_heads=1)

    def test_rejects_indivisible_heads(self):
        with pytest.raises(ValueError):
            AdapterConfig(d_model=32, d_struct=16, n_heads=3)

    def test_rejects_odd_head_dim(self):
        with pytest.raises(ValueError):
            AdapterConfig(d_model=12, d_struct=16, n_heads=4)

    def test_bottleneck_dim(self):
        assert AdapterConfig(d_model=32, d_struct=16).bottleneck_dim == 16


class TestIdentityAtInit:
    def test_fused_equals_lm_states_bitwise(self):
        adapter = _adapter()
        seq, struct = _states()
        with torch.no_grad():
            fused, _ = adapter(seq, struct, None)
        assert torch.equal(fused, seq)

    def test_design_logits_ignore_structure_at_init(self):
        adapter = _adapter()
        seq, struct_a = _states(seed=1)
        _, struct_b = _states(seed=2)
        with torch.no_grad():
            _, logits_a = adapter(seq, struct_a, None)
            _, logits_b = adapter(seq, struct_b, None)
        assert torch.equal(logits_a, logits_b)

    def test_zero_init_flag_off_breaks_identity(self):
        adapter = _adapter(zero_init_output=False)
        seq, struct = _states()
        with torch.no_grad():
            fused, _ = adapter(seq, struct, None)
        assert not torch.equal(fused, seq)

    def test_trained_weights_mix_structure_in(self):
        adapter = _adapter()
        torch.manual_seed(7)
        with torch.no_grad():
            adapter.out_proj.weight.normal_(std=0.05)
            adapter.w_up.weight.normal_(std=0.05)
        seq, struct_a = _states(seed=1)
        _, struct_b = _states(seed=2)
        with torch.no_grad():
            _, logits_a = adapter(seq, struct_a, None)
            _, logits_b = adapter(seq, struct_b, None)
        assert not torch.equal(logits_a, logits_b)


class TestForward:
    def test_misaligned_lengths_rejected(self):
        adapter = _adapter()
        seq, struct = _states()
        with pytest.raises(ValueError, match="residue-aligned"):
            adapter(seq, struct[:, :-1], None)

    def test_position_shift_invariance(self):
        adapter = _adapter(seed=3).double()
        torch.manual_seed(8)
        with torch.no_grad():
            adapter.out_proj.weight.normal_(std=0.1)
            adapter.w_up.weight.normal_(std=0.1)
        seq, struct = _states(dtype=torch.float64)
        base_pos = torch.arange(11).unsqueeze(0)
        with torch.no_grad():
            fused_a, _ = adapter(seq, struct, None, base_pos)
            fused_b, _ = adapter(seq, struct, None, base_pos + 37)
        np.testing.assert_allclose(fused_a.numpy(), fused_b.numpy(), atol=1e-10)

    def test_padded_keys_excluded(self):
        adapter = _adapter(seed=4)
        torch.manual_seed(9)
        with torch.no_grad():
            adapter.out_proj.weight.normal_(std=0.1)
        seq, struct = _states(length=8)
        pad = torch.ones(1, 8, dtype=torch.bool)
        with torch.no_grad():
            fused_full, _ = adapter(seq[:, :5], struct[:, :5], pad[:, :5])
        # growing the batch with masked-out columns must not change real rows
        pad_cut = pad.clone()
        pad_cut[0, 5:] = False
        with torch.no_grad():
            fused_padded, _ = adapter(seq, struct, pad_cut)
        np.testing.assert_allclose(
            fused_padded[0, :5].numpy(), fused_full[0].numpy(), atol=1e-6
        )


class TestTrainableCounts:
    @staticmethod
    def _adapter_param_count(d, ds):
        attn = 2 * d + (d * d + d) + 2 * (ds * d + d) + (d * d + d)
        ffn = 2 * d + (d * (d // 2) + d // 2) + ((d // 2) * d + d)
        head = 20 * d + 20
        return attn + ffn + head

    def test_closed_form_matches_module(self):
        adapter = _adapter(d_model=32, d_struct=16)
        trainable, total, ratio = trainable_ratio(adapter)
        want = self._adapter_param_count(32, 16)
        assert total == want
        assert trainable == want
        assert ratio == 1.0

    def test_adapter_only_mode_counts(self, tiny_model):
        apply_mode(tiny_model, "pretrained-encoder-frozen", "lm-frozen")
        trainable, total, ratio = trainable_ratio(tiny_model)
        d = tiny_model.config.lm.d_model
        ds = tiny_model.config.encoder.d_model
        proposal = 20 * ds + 20
        want = self._adapter_param_count(d, ds) + proposal
        assert trainable == want
        assert ratio == trainable / total

    def test_respects_requires_grad_flags(self):
        adapter = _adapter()
        for p in adapter.design_head.parameters():
            p.requires_grad = False
        trainable, total, _ = trainable_ratio(adapter)
        assert total - trainable == 20 * 32 + 20


class TestFrozenGradients:
    def test_no_gradients_reach_frozen_lm_and_encoder(self, tiny_model, tiny_data):
        apply_mode(tiny_model, "pretrained-encoder-frozen", "lm-frozen")
        structure, state = tiny_data[0]
        masked, targets, loss_mask = cmlm_mask(state, "uniform", seed=5)
        item = make_item(
            structure, masked.tokens, tiny_model.config.encoder.graph,
            targets=targets, loss_mask=loss_mask,
        )
        batch = collate([item])
        out = tiny_model(batch)
        loss = aa_cross_entropy(out.design_logits, batch.targets, batch.loss_mask)
        loss.backward()
        for name, p in tiny_model.lm.named_parameters():
            assert p.grad is None, f"lm.{name} received a gradient"
        for name, p in tiny_model.encoder.named_parameters():
            if name.startswith("proposal_head"):
                continue
            assert p.grad is None, f"encoder.{name} received a gradient"
        grads = [p.grad for p in tiny_model.adapter.parameters()]
        assert any(g is not None and g.abs().sum() > 0 for g in grads)
