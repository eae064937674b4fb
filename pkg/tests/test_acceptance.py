"""Acceptance checks for the full design stack.

One test per numbered criterion; each prints a single PASS/FAIL line with
the measured quantities (run with ``pytest tests/test_acceptance.py -v -s``).
Criteria 3-5 share one benchmark model trained inside the session fixture;
everything else runs on purpose-built small models.
"""

import math
import shutil
import subprocess
import time
from collections import Counter
from types import SimpleNamespace

import numpy as np
import pytest
import torch

from invfold.collate import collate, make_item
from invfold.dataset import SyntheticSpec, gen_synthetic
from invfold.decoding import DecodingConfig, batch_design
from invfold.geometry import GraphConfig, knn_graph, perturb
from invfold.metrics import (
    aa_entropy,
    antibody_metrics,
    dissect_recovery,
    diversity_sweep,
    longest_run_ratio,
    median_recovery,
    perplexity,
    recovery,
)
from invfold.model import ModelConfig, build_model
from invfold.structure import BackboneStructure, ChainBackbone
from invfold.training import TrainConfig, apply_mode, cmlm_loss, model_gradcheck, train
from invfold.vocab import AA_LETTERS, MASK

LN20 = math.log(20.0)

# Benchmark setup shared by criteria 3-5. The encoder is deliberately
# narrow-receptive-field (one layer, two neighbors): its linear proposal head
# then captures only local structure cues, while the full model can pool
# structure globally through cross-attention and propagate confident tokens
# through iterative re-masking. That is the capability gap criterion 3
# measures. Confidence re-masking is the benchmark decode because CMLM
# training never covers re-prediction at observed positions.
BAYES_RECOVERY = 0.905
BENCH_MODEL = ModelConfig(
    encoder={"d_model": 32, "n_layers": 1, "graph": {"k_neighbors": 2}},
    lm={"d_model": 128, "n_layers": 3, "n_heads": 4},
    adapter_heads=4,
)
BENCH_TRAIN = TrainConfig(
    mode="scratch-joint",
    lm_mode="lm-finetune",
    epochs=100,
    batch_residues=6000,
    warmup=400,
    lr_scale=1.0,
    seed=7,
    val_fraction=0.01,
    val_every=200,
)
BENCH_DECODE = DecodingConfig(
    steps=5, strategy="argmax", init="full-mask", remask="confidence", remask_fraction=0.5
)


def _report(number, name, ok, detail):
    line = f"criterion {number} ({name}): {'PASS' if ok else 'FAIL'} - {detail}"
    print(line, flush=True)
    assert ok, line


@pytest.fixture(scope="session")
def benchmark():
    train_data = gen_synthetic(SyntheticSpec(n_samples=2000, length_range=(30, 60), seed=101))
    test_data = gen_synthetic(SyntheticSpec(n_samples=200, length_range=(30, 60), seed=202))
    model = build_model(BENCH_MODEL, seed=BENCH_TRAIN.seed)
    t0 = time.monotonic()
    result = train(train_data, model, BENCH_TRAIN)
    train_seconds = time.monotonic() - t0
    model.eval()
    design_loss_200 = next(r["design_loss"] for r in result.metrics if r["step"] == 200)
    assert design_loss_200 < 2.9, f"design loss at step 200 is {design_loss_200:.3f}"
    return SimpleNamespace(
        model=model,
        test_data=test_data,
        structures=[s for s, _ in test_data],
        natives=[state.tokens for _, state in test_data],
        train_seconds=train_seconds,
        design_loss_200=design_loss_200,
    )


def _decode_recoveries(bench, config):
    outcomes = batch_design(bench.model, bench.structures, config)
    for outcome in outcomes:
        assert outcome.error is None, outcome.error
    recs = [recovery(o.results[0].tokens, bench.natives[o.index]) for o in outcomes]
    return recs, outcomes


def _proposal_recoveries(bench):
    graph = bench.model.config.encoder.graph
    recs = []
    with torch.no_grad():
        for structure, state in bench.test_data:
            batch = collate([make_item(structure, np.full(len(state), MASK, np.int64), graph)])
            pred = bench.model(batch).proposal_logits[0].argmax(-1).numpy()
            recs.append(float((pred == state.tokens).mean()))
    return recs


def test_criterion_1_gradient_fidelity():
    t0 = time.monotonic()
    config = ModelConfig(
        encoder={"d_model": 16, "n_layers": 2, "graph": {"k_neighbors": 8}},
        lm={"d_model": 16, "n_layers": 2, "n_heads": 2},
        adapter_heads=2,
    )
    model = build_model(config, seed=0, dtype=torch.float64)
    dataset = gen_synthetic(SyntheticSpec(n_samples=2, length_range=(12, 16), seed=0))
    report = model_gradcheck(model, dataset, epsilon=1e-4, n_per_group=24, seed=0, tolerance=1e-4)
    elapsed = time.monotonic() - t0
    ok = report.passed and report.max_rel_err <= 1e-4 and elapsed < 60.0
    _report(
        1,
        "gradient fidelity",
        ok,
        f"max rel err {report.max_rel_err:.3e} (tolerance 1e-4), {elapsed:.1f}s",
    )


def _random_rigid(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q, rng.uniform(-50.0, 50.0, size=3)


def _transform(structure, rot, shift):
    chains = [
        ChainBackbone(
            chain_id=ch.chain_id,
            n=ch.n @ rot.T + shift,
            ca=ch.ca @ rot.T + shift,
            c=ch.c @ rot.T + shift,
            o=ch.o @ rot.T + shift if ch.o is not None else None,
            breaks=ch.breaks,
        )
        for ch in structure.chains
    ]
    return BackboneStructure(id=structure.id, chains=chains)


def test_criterion_2_rigid_motion_invariance():
    t0 = time.monotonic()
    config = ModelConfig(
        encoder={"d_model": 32, "n_layers": 1, "graph": {"k_neighbors": 8}},
        lm={"d_model": 32, "n_layers": 1, "n_heads": 2},
        adapter_heads=2,
    )
    model = build_model(config, seed=1, dtype=torch.float64).eval()
    # at init the adapter output is zeroed, which would make the design
    # logits trivially structure-independent; randomize its projections so
    # the check exercises the full structure path
    torch.manual_seed(2)
    with torch.no_grad():
        model.adapter.out_proj.weight.normal_(std=0.2)
        model.adapter.w_up.weight.normal_(std=0.2)
    # perturbed coordinates put CA distances in general position; the clean
    # generator has exact i-1/i+1 distance ties whose neighbor order is not
    # rotation-stable in floats
    base_structures = [
        perturb(s, eps=0.01, seed=9 + i)
        for i, (s, _) in enumerate(
            gen_synthetic(SyntheticSpec(n_samples=3, length_range=(30, 60), seed=5))
        )
    ]
    graph = config.encoder.graph
    rng = np.random.default_rng(11)
    max_rel = 0.0
    edges_ok = True
    with torch.no_grad():
        for structure in base_structures:
            tokens = np.full(len(structure), MASK, np.int64)
            batch = collate([make_item(structure, tokens, graph)], dtype=torch.float64)
            base_logits = model(batch).design_logits
            base_edges = knn_graph(structure, graph).neighbors
            scale = float(base_logits.abs().max())
            for _ in range(100 // len(base_structures) + 1):
                rot, shift = _random_rigid(rng)
                moved = _transform(structure, rot, shift)
                batch_t = collate([make_item(moved, tokens, graph)], dtype=torch.float64)
                logits_t = model(batch_t).design_logits
                max_rel = max(max_rel, float((logits_t - base_logits).abs().max()) / scale)
                edges_ok &= np.array_equal(knn_graph(moved, graph).neighbors, base_edges)
    elapsed = time.monotonic() - t0
    ok = max_rel < 1e-5 and edges_ok and elapsed < 60.0
    _report(
        2,
        "rigid-motion invariance",
        ok,
        f"102 transforms: max rel logit change {max_rel:.2e} (< 1e-5), "
        f"edge lists identical {edges_ok}, {elapsed:.1f}s",
    )


def test_criterion_3_structure_sequence_ablation(benchmark):
    full, _ = _decode_recoveries(benchmark, BENCH_DECODE)
    prop = _proposal_recoveries(benchmark)
    seq_only, _ = _decode_recoveries(
        benchmark, DecodingConfig(**{**BENCH_DECODE.__dict__, "zero_structure": True})
    )
    full_med = median_recovery(full)
    prop_med = median_recovery(prop)
    seq_med = median_recovery(seq_only)
    gap_prop = full_med - prop_med
    gap_seq = full_med - seq_med
    floor = BAYES_RECOVERY - 0.12
    ok = (
        gap_prop >= 0.05
        and gap_seq >= 0.15
        and full_med >= floor
        and benchmark.train_seconds <= 1800.0
    )
    _report(
        3,
        "structure+sequence ablation",
        ok,
        f"full {full_med:.4f} vs proposal {prop_med:.4f} (gap {gap_prop:+.4f} >= +0.05), "
        f"vs sequence-only {seq_med:.4f} (gap {gap_seq:+.4f} >= +0.15), "
        f"floor {floor:.3f}, train {benchmark.train_seconds:.0f}s <= 1800s, "
        f"design loss@200 {benchmark.design_loss_200:.3f} < 2.9",
    )


def test_criterion_4_iterative_refinement(benchmark):
    t5, _ = _decode_recoveries(benchmark, BENCH_DECODE)
    t1, _ = _decode_recoveries(benchmark, DecodingConfig(**{**BENCH_DECODE.__dict__, "steps": 1}))
    mean5, mean1 = float(np.mean(t5)), float(np.mean(t1))
    med5, med1 = median_recovery(t5), median_recovery(t1)
    # a trajectory reached its fixed point within 5 steps when one extra pass
    # leaves it unchanged, so convergence is checked on a 6-step budget
    _, outcomes6 = _decode_recoveries(
        benchmark, DecodingConfig(**{**BENCH_DECODE.__dict__, "steps": 6})
    )
    fixed = float(np.mean([o.results[0].converged for o in outcomes6]))
    ok = mean5 >= mean1 and med5 >= med1 - 0.005 and fixed >= 0.9
    _report(
        4,
        "iterative refinement",
        ok,
        f"mean T=5 {mean5:.4f} >= T=1 {mean1:.4f}; median T=5 {med5:.4f} >= "
        f"T=1-0.005 {med1 - 0.005:.4f}; fixed point <= 5 steps for {fixed:.1%} (>= 90%)",
    )


def test_criterion_5_temperature_behavior(benchmark):
    subset = benchmark.structures[:50]
    argmax_out = batch_design(benchmark.model, subset, BENCH_DECODE)
    cold = DecodingConfig(
        **{**BENCH_DECODE.__dict__, "strategy": "sample", "temperature": 1e-4, "seed": 13}
    )
    cold_out = batch_design(benchmark.model, subset, cold)
    exact = all(
        np.array_equal(a.results[0].tokens, c.results[0].tokens)
        for a, c in zip(argmax_out, cold_out)
    )
    sweep_base = DecodingConfig(steps=1, strategy="sample", init="full-mask", seed=17)
    rows = diversity_sweep(benchmark.model, benchmark.test_data, (0.1, 0.5, 1.0, 1.5), 20, sweep_base)
    fractions = [row["distinct_fraction"] for row in rows]
    monotone = all(a <= b + 1e-12 for a, b in zip(fractions, fractions[1:]))
    ok = exact and monotone
    _report(
        5,
        "temperature behavior",
        ok,
        f"tau=1e-4 == argmax on 50 structures: {exact}; distinct fraction over "
        f"tau (0.1, 0.5, 1.0, 1.5) = {[round(f, 4) for f in fractions]} non-decreasing: {monotone}",
    )


def test_criterion_6_cmlm_semantics(tmp_path):
    dataset = gen_synthetic(SyntheticSpec(n_samples=12, length_range=(12, 16), seed=21))
    config = ModelConfig(
        encoder={"d_model": 16, "n_layers": 1, "graph": {"k_neighbors": 4}},
        lm={"d_model": 16, "n_layers": 1, "n_heads": 2},
        adapter_heads=2,
    )
    model = build_model(config, seed=3, dtype=torch.float64)

    # gradient support: two lengths force padding; mask half of each sequence
    items = []
    rng = np.random.default_rng(0)
    for structure, state in dataset[:2]:
        tokens = state.tokens.copy()
        loss_mask = rng.random(len(tokens)) < 0.5
        loss_mask[0] = True
        targets = tokens.copy()
        tokens[loss_mask] = MASK
        items.append(
            make_item(structure, tokens, config.encoder.graph, targets=targets, loss_mask=loss_mask)
        )
    batch = collate(items, dtype=torch.float64)
    out = model(batch)
    out.design_logits.retain_grad()
    loss = cmlm_loss(out.design_logits, batch.targets, batch.loss_mask)
    loss.backward()
    grads = out.design_logits.grad
    # loss_mask is False at observed and padded positions alike
    observed_zero = bool((grads[~batch.loss_mask] == 0).all())

    uniform_err = abs(
        float(cmlm_loss(torch.zeros_like(out.design_logits), batch.targets, batch.loss_mask))
        - LN20
    )

    # freeze: 100 steps with encoder and LM frozen must leave them bitwise
    frozen_model = build_model(config, seed=4)
    apply_mode(frozen_model, "pretrained-encoder-frozen", "lm-frozen")
    before = {
        name: p.detach().clone()
        for name, p in frozen_model.named_parameters()
        if not p.requires_grad
    }
    train(
        dataset,
        frozen_model,
        TrainConfig(
            mode="pretrained-encoder-frozen",
            lm_mode="lm-frozen",
            epochs=100,
            batch_residues=200,
            warmup=10,
            seed=4,
            val_fraction=0.0,
        ),
    )
    after = dict(frozen_model.named_parameters())
    frozen_bitwise = all(torch.equal(before[name], after[name]) for name in before)

    ok = observed_zero and uniform_err <= 1e-6 and frozen_bitwise and len(before) > 0
    _report(
        6,
        "masked-LM training semantics",
        ok,
        f"observed/padded logit grads exactly zero: {observed_zero}; uniform-logit "
        f"loss |err| {uniform_err:.2e} <= 1e-6; {len(before)} frozen tensors bitwise "
        f"stable over 100 steps: {frozen_bitwise}",
    )


def _adapter_param_count(d, ds):
    attn = 2 * d + (d * d + d) + 2 * (ds * d + d) + (d * d + d)
    ffn = 2 * d + (d * (d // 2) + d // 2) + ((d // 2) * d + d)
    head = 20 * d + 20
    return attn + ffn + head


def test_criterion_7_adapter_identity_and_footprint():
    config = ModelConfig(
        encoder={"d_model": 24, "n_layers": 2, "graph": {"k_neighbors": 6}},
        lm={"d_model": 48, "n_layers": 2, "n_heads": 4},
        adapter_heads=4,
    )
    model = build_model(config, seed=6).eval()
    dataset = gen_synthetic(SyntheticSpec(n_samples=2, length_range=(14, 20), seed=6))
    items = [
        make_item(s, np.full(len(state), MASK, np.int64), config.encoder.graph)
        for s, state in dataset
    ]
    out = model(collate(items))
    identity = bool(torch.equal(out.fused, out.lm_hidden))

    apply_mode(model, "pretrained-encoder-frozen", "lm-frozen")
    trainable = sum(p.numel() for p in model.parameters() if p.requires_grad)
    total = sum(p.numel() for p in model.parameters())
    # adapter block plus the always-trainable encoder proposal head
    expected = _adapter_param_count(48, 24) + (20 * 24 + 20)
    ratio_ok = trainable == expected
    ok = identity and ratio_ok
    _report(
        7,
        "adapter identity at init",
        ok,
        f"fused == LM states exactly: {identity}; trainable {trainable} == closed form "
        f"{expected} ({trainable / total:.2%} of {total})",
    )


class _FixedLogits:
    """Stand-in model returning precomputed design logits keyed by length."""

    def __init__(self, graph, tables):
        self.config = SimpleNamespace(encoder=SimpleNamespace(graph=graph))
        self.tables = tables

    def eval(self):
        return self

    def parameters(self):
        return iter([torch.zeros(1)])

    def __call__(self, batch):
        table = self.tables[batch.tokens.shape[1]]
        return SimpleNamespace(design_logits=torch.from_numpy(table).unsqueeze(0))


def _brute_lcs(seqs, threshold):
    best = 0
    for s in seqs:
        for i in range(len(s)):
            for j in range(i + 1, len(s) + 1):
                if sum(s[i:j] in t for t in seqs) >= threshold:
                    best = max(best, j - i)
    return best


def _brute_run_ratio(s):
    best = cur = 1
    for a, b in zip(s, s[1:]):
        cur = cur + 1 if a == b else 1
        best = max(best, cur)
    return best / len(s)


def test_criterion_8_metric_oracle_equivalence():
    rng = np.random.default_rng(31)
    graph = GraphConfig(k_neighbors=4)

    # recovery: 1000 fuzzed pairs vs a position loop
    for _ in range(1000):
        length = int(rng.integers(1, 40))
        pred = rng.integers(0, 20, size=length)
        native = rng.integers(0, 20, size=length)
        want = sum(int(a == b) for a, b in zip(pred, native)) / length
        assert abs(recovery(pred, native) - want) <= 1e-12
    hand_run = longest_run_ratio("GGGGY") == 0.8
    hand_entropy = aa_entropy("AAAA") == 0.0

    # perplexity accumulation: fixed random logits, independent pooling
    pool_structures = gen_synthetic(SyntheticSpec(n_samples=40, length_range=(4, 43), seed=33))
    by_length = {}
    for s, state in pool_structures:
        by_length.setdefault(len(state), (s, state))
    pool = list(by_length.values())
    perp_ok = True
    bound_ok = True
    for case in range(1000):
        chosen = [pool[int(i)] for i in rng.choice(len(pool), size=int(rng.integers(1, 4)), replace=False)]
        tables = {
            len(state): rng.standard_normal((len(state), 20)) * 2.0 for _, state in chosen
        }
        stub = _FixedLogits(graph, tables)
        got = perplexity(stub, chosen)
        total = count = 0
        for _, state in chosen:
            logits = tables[len(state)]
            logp = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
            total -= logp[np.arange(len(state)), state.tokens].sum()
            count += len(state)
        perp_ok &= abs(got - math.exp(total / count)) <= 1e-9 * max(1.0, got)
        bound_ok &= got >= 1.0
    uniform = perplexity(
        _FixedLogits(graph, {len(pool[0][1]): np.zeros((len(pool[0][1]), 20))}), [pool[0]]
    )
    ln20_bound = abs(uniform - 20.0) <= 1e-9

    # context dissection: 1000 fuzzed instances vs a triple loop
    from invfold.metrics import ContextLabels

    dissect_ok = True
    for _ in range(1000):
        n_prot = int(rng.integers(1, 4))
        preds, natives, labels = [], [], []
        for _ in range(n_prot):
            length = int(rng.integers(1, 12))
            preds.append(rng.integers(0, 20, size=length))
            natives.append(rng.integers(0, 20, size=length))
            labels.append(
                ContextLabels(
                    burial=np.array(rng.choice(["core", "surface"], size=length), dtype=object),
                    secondary=np.array(
                        rng.choice(["helix", "strand", "loop"], size=length), dtype=object
                    ),
                    interface=rng.random(length) < 0.4,
                )
            )
        table = dissect_recovery(preds, natives, labels)
        want: dict = {}
        for p, n, lab in zip(preds, natives, labels):
            for i in range(len(p)):
                for category, cls in (
                    ("burial", lab.burial[i]),
                    ("secondary", lab.secondary[i]),
                    ("interface", "interface" if lab.interface[i] else "non-interface"),
                ):
                    cell = want.setdefault(category, {}).setdefault(str(cls), [0, 0])
                    cell[0] += int(p[i] == n[i])
                    cell[1] += 1
        for category, cells in want.items():
            for cls, (h, c) in cells.items():
                dissect_ok &= (
                    table[category][cls]["hits"] == h and table[category][cls]["count"] == c
                )

    # antibody metrics: 1000 fuzzed instances, all five outputs
    antibody_ok = True
    for _ in range(1000):
        length = int(rng.integers(5, 14))
        native = rng.integers(0, 20, size=length)
        region = np.zeros(length, dtype=bool)
        start = int(rng.integers(0, length - 2))
        region[start : int(rng.integers(start + 2, length)) + 1] = True
        contact = region & (rng.random(length) < 0.4)
        designs = [
            np.where(rng.random(length) < 0.6, native, rng.integers(0, 20, size=length))
            for _ in range(int(rng.integers(1, 5)))
        ]
        got = antibody_metrics(designs, native, region, contact)
        aar = float(np.mean([(d[region] == native[region]).mean() for d in designs]))
        antibody_ok &= abs(got["aar"] - aar) <= 1e-12
        if contact.any():
            caar = float(np.mean([(d[contact] == native[contact]).mean() for d in designs]))
            antibody_ok &= abs(got["caar"] - caar) <= 1e-12
        else:
            antibody_ok &= got["caar"] is None
        strings = ["".join(AA_LETTERS[t] for t in d[region]) for d in designs]
        antibody_ok &= got["longest_comm_subseq"] == _brute_lcs(
            strings, math.ceil(0.3 * len(designs))
        )
        runs = [_brute_run_ratio(x) for x in strings]
        antibody_ok &= abs(got["longest_cons_ratio"] - float(np.mean(runs))) <= 1e-12
        entropies = []
        for x in strings:
            counts = Counter(x)
            entropies.append(
                -sum((c / len(x)) * math.log(c / len(x)) for c in counts.values())
            )
        antibody_ok &= abs(got["aa_entropy"] - float(np.mean(entropies))) <= 1e-12

    ok = (
        hand_run
        and hand_entropy
        and perp_ok
        and bound_ok
        and ln20_bound
        and dissect_ok
        and antibody_ok
    )
    _report(
        8,
        "metric oracle equivalence",
        ok,
        "1000-instance fuzz vs brute force: recovery ok, perplexity "
        f"{perp_ok}, dissection {dissect_ok}, antibody {antibody_ok}; hand cases: "
        f"uniform perplexity 20 {ln20_bound}, GGGGY->0.8 {hand_run}, AAAA->0 {hand_entropy}",
    )


def _run_cli(args, cwd):
    proc = subprocess.run(
        ["invfold", *args], cwd=cwd, capture_output=True, text=True, timeout=600
    )
    assert proc.returncode == 0, f"invfold {args[0]} failed:\n{proc.stdout}\n{proc.stderr}"
    return proc


def _checkpoint_bytes(path):
    return (path / "manifest.json").read_bytes() + (path / "tensors.bin").read_bytes()


def test_criterion_9_pipeline_determinism(tmp_path):
    small_model = [
        "--set", "model.encoder.d_model=16",
        "--set", "model.encoder.n_layers=1",
        "--set", "model.encoder.graph.k_neighbors=4",
        "--set", "model.lm.d_model=16",
        "--set", "model.lm.n_layers=1",
        "--set", "model.lm.n_heads=2",
        "--set", "model.adapter_heads=2",
    ]
    _run_cli(
        ["gen-data", "--out", "data.jsonl", "--n-samples", "8", "--seed", "3",
         "--set", "spec.length_range=[12, 16]"],
        tmp_path,
    )
    _run_cli(
        ["gen-data", "--out", "data2.jsonl", "--n-samples", "8", "--seed", "3",
         "--set", "spec.length_range=[12, 16]"],
        tmp_path,
    )
    data_same = (tmp_path / "data.jsonl").read_bytes() == (tmp_path / "data2.jsonl").read_bytes()

    for out in ("model_a.ckpt", "model_b.ckpt"):
        _run_cli(
            ["train", "--data", "data.jsonl", "--out", out, *small_model,
             "--set", "train.epochs=2", "--set", "train.warmup=2",
             "--set", "train.val_fraction=0.0", "--seed", "7"],
            tmp_path,
        )
    ckpt_same = _checkpoint_bytes(tmp_path / "model_a.ckpt") == _checkpoint_bytes(
        tmp_path / "model_b.ckpt"
    )

    design_args = [
        "design", "--data", "data.jsonl", "--checkpoint", "model_a.ckpt",
        "--strategy", "sample", "--n-samples", "2", "--seed", "9", "--steps", "3",
    ]
    _run_cli(design_args + ["--out", "designs_a.jsonl"], tmp_path)
    _run_cli(design_args + ["--out", "designs_b.jsonl"], tmp_path)
    _run_cli(
        design_args + ["--out", "designs_par.jsonl", "--set", "n_workers=3"], tmp_path
    )
    designs_same = (tmp_path / "designs_a.jsonl").read_bytes() == (
        tmp_path / "designs_b.jsonl"
    ).read_bytes()
    parallel_same = (tmp_path / "designs_a.jsonl").read_bytes() == (
        tmp_path / "designs_par.jsonl"
    ).read_bytes()

    ok = data_same and ckpt_same and designs_same and parallel_same
    _report(
        9,
        "pipeline determinism",
        ok,
        f"gen-data bytes {data_same}; checkpoints bitwise {ckpt_same}; designs bitwise "
        f"{designs_same}; parallel == serial {parallel_same}",
    )
