#!/usr/bin/env python3
"""Runs a weights container through Hugging Face's GPT2LMHeadModel and
freezes reference outputs into tests/fixtures/model_cases.json.

The container is produced by `headprobe synth` (seeded random GPT2-small
weights), so the C++ tests can regenerate the identical model without any
downloaded checkpoint. Head removal is emulated by zeroing post-softmax
attention probabilities inside the eager attention kernel.

usage: model_oracle.py MODEL VOCAB MERGES SEED OUT_JSON
"""
import json
import math
import sys

import numpy as np
import torch
import transformers.models.gpt2.modeling_gpt2 as gpt2
from safetensors.torch import load_file
from transformers import GPT2Config, GPT2LMHeadModel

from tokenizer_oracle import Encoder

SENTENCES = [
    "Sue remembered that the plate that the butler with the cup accidentally shattered was expensive.",
    "The quick brown fox jumps over the lazy dog.",
    "In 1998, prices rose 3.5% and nobody's surprised!",
    "  Leading spaces\tand tabs\nnewline's edge-cases ...",
    "Mira found a small brass key under the rug, tried it in every lock she could find, and at last the key "
    "turned in the back of the old clock that had stopped at noon.",
]

# (sentence index, heads removed as (layer, head))
CASES = [
    (0, []),
    (1, []),
    (2, []),
    (3, []),
    (4, []),
    (0, [(0, 10)]),
    (1, [(0, 1), (5, 10), (11, 11)]),
    (2, [(0, h) for h in range(12)]),
]

NEXT_TOKEN = [
    ("Sue remembered the", " plate", []),
    ("Sue remembered the", " letter", []),
    ("Sue remembered the", " plate", [(0, 10)]),
    ("The", " cat", [(3, 4), (7, 1)]),
]

CAPTURED_HEADS = [(0, 10), (5, 10), (11, 0)]
N_COLUMNS = 256

MASK = {"heads": set()}


def masked_eager(module, query, key, value, attention_mask, scaling=None, dropout=0.0, **kwargs):
    if scaling is None:
        scaling = query.size(-1) ** -0.5
    w = torch.matmul(query, key.transpose(-1, -2)) * scaling
    if attention_mask is not None:
        w = w + attention_mask
    w = torch.nn.functional.softmax(w, dim=-1).type(value.dtype)
    for layer, head in MASK["heads"]:
        if layer == module.layer_idx:
            w[:, head] = 0.0
    out = torch.matmul(w, value).transpose(1, 2)
    return out, w


gpt2.eager_attention_forward = masked_eager


def load(model_path):
    tensors = load_file(model_path)
    n_layer = 1 + max(int(k.split(".")[1]) for k in tensors if k.startswith("h."))
    vocab, d = tensors["wte.weight"].shape
    config = GPT2Config(
        vocab_size=vocab,
        n_positions=tensors["wpe.weight"].shape[0],
        n_embd=d,
        n_layer=n_layer,
        n_head=12,
        activation_function="gelu_new",
        resid_pdrop=0.0,
        embd_pdrop=0.0,
        attn_pdrop=0.0,
        layer_norm_epsilon=1e-5,
        tie_word_embeddings=True,
    )
    config._attn_implementation = "eager"
    model = GPT2LMHeadModel(config)
    missing, unexpected = model.transformer.load_state_dict(tensors, strict=False)
    missing = [k for k in missing if not k.endswith(".attn.bias") and not k.endswith(".attn.masked_bias")]
    if missing or unexpected:
        raise SystemExit(f"state dict mismatch: missing={missing} unexpected={unexpected}")
    model.tie_weights()
    assert torch.equal(model.lm_head.weight, model.transformer.wte.weight)
    return model.eval(), tensors


def run(model, ids, heads):
    MASK["heads"] = set(heads)
    with torch.no_grad():
        out = model(torch.tensor([ids]), output_attentions=True)
    MASK["heads"] = set()
    return out.logits[0].numpy(), [a[0].numpy() for a in out.attentions]


def log2_softmax(row):
    row = row.astype(np.float64)
    m = row.max()
    lse = m + math.log(np.exp(row - m).sum())
    return (row - lse) / math.log(2.0), lse


def main(model_path, vocab, merges, seed, out_path):
    model, tensors = load(model_path)
    enc = Encoder(vocab, merges)
    rng = np.random.default_rng(int(seed))
    columns = sorted(rng.choice(tensors["wte.weight"].shape[0], N_COLUMNS, replace=False).tolist())

    cases = []
    for sentence, heads in CASES:
        ids = enc.encode(SENTENCES[sentence])
        logits, attentions = run(model, ids, heads)
        lse, next_log2 = [], []
        for t in range(len(ids)):
            lp, z = log2_softmax(logits[t])
            lse.append(z)
            if t + 1 < len(ids):
                next_log2.append(float(lp[ids[t + 1]]))
        cases.append(
            {
                "text": SENTENCES[sentence],
                "mask": [f"{l}.{h}" for l, h in heads],
                "ids": ids,
                "columns": columns,
                "logits": logits[:, columns].astype(np.float64).tolist(),
                "logsumexp": lse,
                "argmax": logits.argmax(axis=1).tolist(),
                "next_token_log2prob": next_log2,
                "attention": {
                    f"{l}.{h}": attentions[l][h].astype(np.float64).tolist() for l, h in CAPTURED_HEADS
                },
            }
        )

    next_cases = []
    for prefix, target, heads in NEXT_TOKEN:
        ids = enc.encode(prefix)
        (target_id,) = enc.encode(target)
        logits, _ = run(model, ids, heads)
        lp, _ = log2_softmax(logits[-1])
        next_cases.append(
            {"prefix": prefix, "target": target, "target_id": target_id, "mask": [f"{l}.{h}" for l, h in heads],
             "ids": ids, "log2prob": float(lp[target_id])}
        )

    probe = {
        name: tensors[name].flatten()[:4].double().tolist()
        for name in ["wte.weight", "h.0.attn.c_attn.weight", "h.11.mlp.c_proj.weight", "ln_f.weight"]
    }
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump({"seed": int(seed), "weight_probe": probe, "cases": cases, "next_token": next_cases}, f)
        f.write("\n")


if __name__ == "__main__":
    main(*sys.argv[1:6])
