"""Lightweight attention text classifier with hand-written gradients.

Embeddings -> global-context attention pooling -> linear softmax. The
attention weights and pooled document vectors are part of the public
surface because proposal scoring depends on them. The interface is small
enough that a heavier encoder can be swapped in behind it.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from selfsup.corpus import Corpus, Instance

CHECKPOINT_VERSION = 1


class TrainingError(RuntimeError):
    pass


@dataclass
class PredictorConfig:
    dim: int = 64
    context_dim: int = 5
    lr: float = 0.01
    epochs: int = 5
    batch_size: int = 32
    seed: int = 0


def pad_batch(instances: list[Instance]) -> tuple[np.ndarray, np.ndarray]:
    """Pad token sequences into (tokens, mask) int/bool matrices."""
    s = max(len(inst.tokens) for inst in instances)
    tokens = np.zeros((len(instances), s), dtype=np.int64)
    mask = np.zeros((len(instances), s), dtype=bool)
    for r, inst in enumerate(instances):
        tokens[r, : len(inst.tokens)] = inst.tokens
        mask[r, : len(inst.tokens)] = True
    return tokens, mask


class AttentionClassifier:
    """Predictor state: parameter tensors plus an Adam optimizer."""

    PARAM_NAMES = ("emb", "att_w", "att_b", "ctx", "out_w", "out_b")

    def __init__(self, vocab_size: int, n_labels: int, cfg: PredictorConfig | None = None):
        self.cfg = cfg or PredictorConfig()
        self.vocab_size = vocab_size
        self.n_labels = n_labels
        rng = np.random.default_rng(self.cfg.seed)
        d, k = self.cfg.dim, self.cfg.context_dim
        # zero output projection => uniform initial predictions
        self.params: dict[str, np.ndarray] = {
            "emb": rng.normal(0, 0.1, (vocab_size, d)),
            "att_w": rng.normal(0, 0.1, (d, k)),
            "att_b": np.zeros(k),
            "ctx": rng.normal(0, 0.1, k),
            "out_w": np.zeros((d, n_labels)),
            "out_b": np.zeros(n_labels),
        }
        self._rng = np.random.default_rng(self.cfg.seed + 1)
        self.reset_optimizer()

    # ---- forward ----

    def _forward(self, tokens: np.ndarray, mask: np.ndarray) -> dict[str, np.ndarray]:
        p = self.params
        x = p["emb"][tokens]  # B,S,d
        u = np.tanh(x @ p["att_w"] + p["att_b"])  # B,S,k
        scores = u @ p["ctx"]  # B,S
        scores = np.where(mask, scores, -np.inf)
        a = softmax(scores, axis=1)  # B,S
        h = np.einsum("bs,bsd->bd", a, x)  # B,d
        z = h @ p["out_w"] + p["out_b"]  # B,L
        probs = softmax(z, axis=1)
        return {"x": x, "u": u, "a": a, "h": h, "probs": probs}

    def predict_batch(self, tokens: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return self._forward(tokens, mask)["probs"]

    def predict_corpus(self, corpus: Corpus, batch_size: int = 256) -> np.ndarray:
        out = np.empty((len(corpus), self.n_labels))
        for start in range(0, len(corpus), batch_size):
            chunk = corpus.instances[start : start + batch_size]
            tokens, mask = pad_batch(chunk)
            out[start : start + len(chunk)] = self.predict_batch(tokens, mask)
        return out

    def predict(self, x: Instance) -> np.ndarray:
        tokens, mask = pad_batch([x])
        return self.predict_batch(tokens, mask)[0]

    def attention(self, x: Instance) -> np.ndarray:
        tokens, mask = pad_batch([x])
        return self._forward(tokens, mask)["a"][0]

    def attention_batch(self, tokens: np.ndarray, mask: np.ndarray) -> np.ndarray:
        return self._forward(tokens, mask)["a"]

    def embed(self, x: Instance) -> np.ndarray:
        tokens, mask = pad_batch([x])
        return self._forward(tokens, mask)["h"][0]

    def embed_corpus(self, corpus: Corpus, batch_size: int = 256) -> np.ndarray:
        out = np.empty((len(corpus), self.cfg.dim))
        for start in range(0, len(corpus), batch_size):
            chunk = corpus.instances[start : start + batch_size]
            tokens, mask = pad_batch(chunk)
            out[start : start + len(chunk)] = self._forward(tokens, mask)["h"]
        return out

    # ---- loss / gradients ----

    def loss_and_grads(
        self, tokens: np.ndarray, mask: np.ndarray, targets: np.ndarray
    ) -> tuple[float, dict[str, np.ndarray]]:
        """Mean cross-entropy against soft targets, with analytic gradients."""
        p = self.params
        f = self._forward(tokens, mask)
        x, u, a, h, probs = f["x"], f["u"], f["a"], f["h"], f["probs"]
        b = tokens.shape[0]
        loss = float(-np.sum(targets * np.log(np.clip(probs, 1e-300, None))) / b)

        dz = (probs - targets) / b  # B,L
        g = {
            "out_w": h.T @ dz,
            "out_b": dz.sum(axis=0),
        }
        dh = dz @ p["out_w"].T  # B,d
        da = np.einsum("bd,bsd->bs", dh, x)  # B,S
        dx = a[:, :, None] * dh[:, None, :]  # B,S,d (pooling path)
        ds = a * (da - np.sum(a * da, axis=1, keepdims=True))  # softmax jacobian
        g["ctx"] = np.einsum("bs,bsk->k", ds, u)
        du = ds[:, :, None] * p["ctx"]  # B,S,k
        dpre = du * (1 - u * u)
        g["att_w"] = np.einsum("bsd,bsk->dk", x, dpre)
        g["att_b"] = dpre.sum(axis=(0, 1))
        dx += dpre @ p["att_w"].T
        demb = np.zeros_like(p["emb"])
        np.add.at(demb, tokens[mask], dx[mask])
        g["emb"] = demb
        return loss, g

    # ---- optimization ----

    def reset_optimizer(self) -> None:
        """Drop Adam moment history (done between EM iterations)."""
        self._adam_m = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._adam_v = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._adam_t = 0

    def _adam_step(self, grads: dict[str, np.ndarray], lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self._adam_t += 1
        t = self._adam_t
        for name, grad in grads.items():
            m = self._adam_m[name] = b1 * self._adam_m[name] + (1 - b1) * grad
            v = self._adam_v[name] = b2 * self._adam_v[name] + (1 - b2) * grad * grad
            mhat = m / (1 - b1**t)
            vhat = v / (1 - b2**t)
            self.params[name] -= lr * mhat / (np.sqrt(vhat) + eps)

    def train(
        self,
        corpus: Corpus,
        targets: np.ndarray,
        epochs: int | None = None,
        lr: float | None = None,
        reset_optimizer: bool = True,
        instance_ids: list[int] | None = None,
    ) -> float:
        """Fit to probabilistic labels by minibatch Adam; returns final epoch loss.

        Warm-starts from the current parameters; epochs=0 is the identity.
        """
        epochs = self.cfg.epochs if epochs is None else epochs
        lr = self.cfg.lr if lr is None else lr
        ids = np.asarray(instance_ids if instance_ids is not None else range(len(corpus)))
        targets = np.asarray(targets, dtype=float)
        row_sums = targets.sum(axis=1)
        if not np.allclose(row_sums, 1.0, atol=1e-9):
            raise TrainingError("target rows must sum to 1")
        if reset_optimizer:
            self.reset_optimizer()
        final_loss = 0.0
        for _ in range(epochs):
            order = self._rng.permutation(len(ids))
            epoch_loss = 0.0
            for start in range(0, len(ids), self.cfg.batch_size):
                batch_ids = ids[order[start : start + self.cfg.batch_size]]
                insts = [corpus.instances[i] for i in batch_ids]
                tokens, mask = pad_batch(insts)
                loss, grads = self.loss_and_grads(tokens, mask, targets[batch_ids])
                if not np.isfinite(loss):
                    raise TrainingError(
                        f"non-finite loss {loss} on batch {batch_ids[:5]}...; "
                        f"param norms: { {k: float(np.linalg.norm(v)) for k, v in self.params.items()} }"
                    )
                self._adam_step(grads, lr)
                epoch_loss += loss * len(batch_ids)
            final_loss = epoch_loss / len(ids)
        return final_loss

    # ---- persistence / snapshots ----

    def clone(self) -> "AttentionClassifier":
        return copy.deepcopy(self)

    def save(self, path: str) -> None:
        np.savez(
            path,
            __version__=CHECKPOINT_VERSION,
            vocab_size=self.vocab_size,
            n_labels=self.n_labels,
            dim=self.cfg.dim,
            context_dim=self.cfg.context_dim,
            lr=self.cfg.lr,
            epochs=self.cfg.epochs,
            batch_size=self.cfg.batch_size,
            seed=self.cfg.seed,
            **self.params,
        )

    @classmethod
    def load(cls, path: str) -> "AttentionClassifier":
        data = np.load(path if str(path).endswith(".npz") else str(path) + ".npz")
        cfg = PredictorConfig(
            dim=int(data["dim"]),
            context_dim=int(data["context_dim"]),
            lr=float(data["lr"]),
            epochs=int(data["epochs"]),
            batch_size=int(data["batch_size"]),
            seed=int(data["seed"]),
        )
        model = cls(int(data["vocab_size"]), int(data["n_labels"]), cfg)
        for name in cls.PARAM_NAMES:
            model.params[name] = data[name].copy()
        model.reset_optimizer()
        return model
