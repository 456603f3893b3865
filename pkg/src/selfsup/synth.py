"""Seeded planted-signal corpus generator for experiments and acceptance runs.

Two balanced classes. Each document is background noise with a sprinkle
of class-specific signal tokens, deliberately ambiguous tokens (equally
frequent in both classes), and one rare unique token. The rare tail keeps
the planted tokens inside the top-2.5% document-frequency universe.
"""

from __future__ import annotations

import json
import os

import numpy as np

N_SIGNAL_PER_CLASS = 30
N_AMBIGUOUS = 10
BACKGROUND_VOCAB = 1000
LABELS = ("neg", "pos")


def signal_tokens(cls: int) -> list[str]:
    return [f"sig{cls}_{k:02d}" for k in range(N_SIGNAL_PER_CLASS)]


def ambiguous_tokens() -> list[str]:
    return [f"amb{k:02d}" for k in range(N_AMBIGUOUS)]


def _make_doc(rng: np.random.Generator, cls: int, rare: str, p_signal: float, p_leak: float, p_amb: float) -> str:
    n = int(rng.integers(30, 61))
    words = [f"w{int(i):04d}" for i in rng.integers(0, BACKGROUND_VOCAB, n)]
    specials = [rare]
    for t in signal_tokens(cls):
        if rng.random() < p_signal:
            specials.append(t)
    for t in signal_tokens(1 - cls):
        if rng.random() < p_leak:
            specials.append(t)
    for t in ambiguous_tokens():
        if rng.random() < p_amb:
            specials.append(t)
    positions = rng.choice(n, size=min(len(specials), n), replace=False)
    for pos, tok in zip(positions, specials):
        words[int(pos)] = tok
    return " ".join(words)


def generate(
    out_dir: str,
    seed: int = 7,
    n_train: int = 2000,
    n_test: int = 1000,
    p_signal: float = 0.15,
    p_leak: float = 0.01,
    p_ambiguous: float = 0.25,
) -> dict:
    """Write train.jsonl / test.jsonl / params.json; returns the params dict."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(seed)
    params = {
        "seed": seed,
        "n_train": n_train,
        "n_test": n_test,
        "p_signal": p_signal,
        "p_leak": p_leak,
        "p_ambiguous": p_ambiguous,
        "background_vocab": BACKGROUND_VOCAB,
        "labels": list(LABELS),
        "signal_tokens": {LABELS[c]: signal_tokens(c) for c in (0, 1)},
        "ambiguous_tokens": ambiguous_tokens(),
    }
    for split, count in (("train", n_train), ("test", n_test)):
        path = os.path.join(out_dir, f"{split}.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(count):
                cls = i % 2  # balanced by construction
                rare = f"rare_{split}_{i:05d}"
                text = _make_doc(rng, cls, rare, p_signal, p_leak, p_ambiguous)
                fh.write(json.dumps({"id": i, "text": text, "label": LABELS[cls]}) + "\n")
    with open(os.path.join(out_dir, "params.json"), "w", encoding="utf-8") as fh:
        json.dump(params, fh, indent=2)
    return params


def seed_records(tokens_per_class: int, weight: float = 2.2) -> list[dict]:
    """Seed evidence records: the first k signal tokens of each class."""
    out = []
    for c, label in enumerate(LABELS):
        for t in signal_tokens(c)[:tokens_per_class]:
            out.append({"kind": "token_label", "token": t, "label": label, "weight": weight})
    return out


def write_seeds(path: str, tokens_per_class: int, weight: float = 2.2) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in seed_records(tokens_per_class, weight):
            fh.write(json.dumps(rec) + "\n")
