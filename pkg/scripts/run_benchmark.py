#!/usr/bin/env python3
"""Drive the full synthetic benchmark through the CLI.

Generates the 2000/200 train/test split, trains the benchmark model, then
produces the ablation table (full iterative decode, single-step decode,
sequence-only decode, encoder-proposal readout) plus the temperature sweep.
Artifacts land in --workdir; rerunning with --skip-train reuses a finished
checkpoint.
"""

import argparse
import json
import subprocess
import sys
import time
from pathlib import Path

MODEL_SETS = [
    "--set", "model.encoder.d_model=32",
    "--set", "model.encoder.n_layers=1",
    "--set", "model.encoder.graph.k_neighbors=2",
    "--set", "model.lm.d_model=128",
    "--set", "model.lm.n_layers=3",
    "--set", "model.lm.n_heads=4",
    "--set", "model.adapter_heads=4",
]
TRAIN_SETS = [
    "--set", "train.mode=scratch-joint",
    "--set", "train.lm_mode=lm-finetune",
    "--set", "train.epochs=100",
    "--set", "train.batch_residues=6000",
    "--set", "train.warmup=400",
    "--set", "train.val_fraction=0.01",
    "--set", "train.val_every=200",
]
DECODE_SETS = [
    "--set", "decoding.steps=5",
    "--set", "decoding.init=full-mask",
    "--set", "decoding.remask=confidence",
    "--set", "decoding.remask_fraction=0.5",
]


def run(args, **kwargs):
    print("+ invfold " + " ".join(args), flush=True)
    subprocess.run(["invfold", *args], check=True, **kwargs)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="benchmark_run")
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--skip-train", action="store_true",
                        help="reuse an existing checkpoint in the workdir")
    args = parser.parse_args(argv)

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    train_jsonl = work / "train.jsonl"
    test_jsonl = work / "test.jsonl"
    ckpt = work / "model.ckpt"

    run(["gen-data", "--out", str(train_jsonl), "--n-samples", "2000", "--seed", "101"])
    run(["gen-data", "--out", str(test_jsonl), "--n-samples", "200", "--seed", "202"])

    if not (args.skip_train and (ckpt / "manifest.json").exists()):
        t0 = time.monotonic()
        run([
            "train", "--data", str(train_jsonl), "--out", str(ckpt),
            "--set", f"metrics_out={work / 'metrics.jsonl'}",
            "--seed", str(args.seed), *MODEL_SETS, *TRAIN_SETS,
        ])
        print(f"training wall time {time.monotonic() - t0:.0f}s", flush=True)

    run([
        "eval", "--data", str(test_jsonl), "--checkpoint", str(ckpt),
        "--out", str(work / "eval_full.json"), *DECODE_SETS,
    ])
    run([
        "eval", "--data", str(test_jsonl), "--checkpoint", str(ckpt),
        "--out", str(work / "eval_t1.json"), *DECODE_SETS[2:],
        "--set", "decoding.steps=1", "--set", "decoding.init=full-mask",
    ])
    run([
        "eval", "--data", str(test_jsonl), "--checkpoint", str(ckpt),
        "--out", str(work / "eval_seq_only.json"), *DECODE_SETS,
        "--set", "decoding.zero_structure=true", "--set", "contexts=false",
    ])
    run([
        "sweep", "--data", str(test_jsonl), "--checkpoint", str(ckpt),
        "--out", str(work / "sweep.jsonl"), "--n-samples", "20",
        "--set", "taus=[0.1, 0.5, 1.0, 1.5]",
        "--set", "decoding.steps=1", "--set", "decoding.init=full-mask",
    ])
    run([
        "design", "--data", str(test_jsonl), "--checkpoint", str(ckpt),
        "--out", str(work / "designs.jsonl"), *DECODE_SETS,
    ])

    # closed-form baseline the CLI has no decode mode for: argmax of the
    # encoder proposal head on a fully masked input
    import numpy as np
    import torch

    from invfold.collate import collate, make_item
    from invfold.dataset import parse_dataset
    from invfold.metrics import median_recovery
    from invfold.model import load_model
    from invfold.vocab import MASK

    model, _ = load_model(str(ckpt))
    model.eval()
    graph = model.config.encoder.graph
    recs = []
    with torch.no_grad():
        for structure, state in parse_dataset(str(test_jsonl)):
            batch = collate([make_item(structure, np.full(len(state), MASK, np.int64), graph)])
            pred = model(batch).proposal_logits[0].argmax(-1).numpy()
            recs.append(float((pred == state.tokens).mean()))
    proposal_median = median_recovery(recs)

    print("\n=== ablation (median recovery, 200 test proteins) ===")
    for name, path in (
        ("full, T=5", work / "eval_full.json"),
        ("full, T=1", work / "eval_t1.json"),
        ("sequence-only", work / "eval_seq_only.json"),
    ):
        report = json.loads(path.read_text())
        print(f"{name:<16s} {report['median_recovery']:.4f}")
    print(f"{'proposal-only':<16s} {proposal_median:.4f}")
    print("bayes optimal    0.905 (analytic)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
