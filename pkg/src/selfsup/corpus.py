"""Corpus loading, tokenization, and the candidate feature universe."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

DEFAULT_MAX_TOKENS = 512
DEFAULT_TOP_FRACTION = 0.025

# words (incl. internal apostrophes) or single punctuation marks
_TOKEN_RE = re.compile(r"[\w']+|[^\w\s]")


class CorpusError(ValueError):
    pass


class EmptyTextError(CorpusError):
    pass


class GoldAccess:
    """Capability object required to read gold labels.

    Learning code never receives one; only evaluation and oracle
    simulation construct it, which lets tests prove that training
    is blind to the labels.
    """

    __slots__ = ()


def tokenize(text: str, max_tokens: int = DEFAULT_MAX_TOKENS) -> list[str]:
    """Lowercase, split on whitespace/punctuation, truncate to max_tokens."""
    tokens = _TOKEN_RE.findall(text.lower())
    if not tokens:
        raise EmptyTextError(f"text is empty after normalization: {text!r}")
    return tokens[:max_tokens]


class Vocabulary:
    """Token string <-> id map with document frequencies and occurrence counts."""

    def __init__(self) -> None:
        self._id: dict[str, int] = {}
        self._token: list[str] = []
        self.doc_freq: list[int] = []
        self.occurrences: list[int] = []

    def __len__(self) -> int:
        return len(self._token)

    def __contains__(self, token: str) -> bool:
        return token in self._id

    def id_for(self, token: str) -> int:
        return self._id[token]

    def token(self, token_id: int) -> str:
        return self._token[token_id]

    def _add_document(self, tokens: list[str]) -> list[int]:
        ids = []
        for t in tokens:
            i = self._id.get(t)
            if i is None:
                i = len(self._token)
                self._id[t] = i
                self._token.append(t)
                self.doc_freq.append(0)
                self.occurrences.append(0)
            self.occurrences[i] += 1
            ids.append(i)
        for i in set(ids):
            self.doc_freq[i] += 1
        return ids


@dataclass(frozen=True)
class Instance:
    """One input: a token-id sequence plus its raw text."""

    id: int
    tokens: tuple[int, ...]
    raw_text: str
    token_set: frozenset[int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if len(self.tokens) < 1:
            raise CorpusError(f"instance {self.id} has no tokens")
        object.__setattr__(self, "token_set", frozenset(self.tokens))


class Corpus:
    """Immutable collection of instances with a shared vocabulary.

    Gold labels, when present in the source file, are stored but only
    readable through :meth:`gold_label` with a :class:`GoldAccess`
    capability.
    """

    def __init__(
        self,
        instances: list[Instance],
        labels: list[str],
        vocab: Vocabulary,
        gold: list[int | None],
    ) -> None:
        for i, inst in enumerate(instances):
            if inst.id != i:
                raise CorpusError(f"instance ids must be dense 0..N-1, got {inst.id} at {i}")
        self.instances = instances
        self.labels = labels
        self.vocab = vocab
        self._gold = gold
        self.gold_reads = 0

    def __len__(self) -> int:
        return len(self.instances)

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def label_id(self, name: str) -> int:
        try:
            return self.labels.index(name)
        except ValueError:
            raise CorpusError(f"unknown label {name!r}; allowed: {self.labels}") from None

    def gold_label(self, instance_id: int, access: GoldAccess) -> int | None:
        if not isinstance(access, GoldAccess):
            raise PermissionError("gold labels require a GoldAccess capability")
        self.gold_reads += 1
        return self._gold[instance_id]

    def has_gold(self) -> bool:
        return any(g is not None for g in self._gold)

    def instances_with_token(self, token_id: int) -> list[int]:
        return [inst.id for inst in self.instances if token_id in inst.token_set]


def load_corpus(
    path: str,
    format: str = "jsonl",
    labels: list[str] | None = None,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> Corpus:
    """Load a dataset file into a Corpus, preserving file order.

    jsonl records: {"id": optional, "text": required, "label": optional}.
    tsv lines: label<TAB>text.
    """
    if format not in ("jsonl", "tsv"):
        raise CorpusError(f"unknown format {format!r}; expected jsonl or tsv")

    records: list[tuple[str, str | None]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            if format == "jsonl":
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{path}:{lineno}: malformed record: {exc}") from exc
                if not isinstance(rec, dict) or "text" not in rec:
                    raise CorpusError(f"{path}:{lineno}: record missing 'text' field")
                records.append((rec["text"], rec.get("label")))
            else:
                parts = line.rstrip("\n").split("\t", 1)
                if len(parts) != 2:
                    raise CorpusError(f"{path}:{lineno}: expected label<TAB>text")
                records.append((parts[1], parts[0]))

    label_names = list(labels) if labels is not None else []
    vocab = Vocabulary()
    instances: list[Instance] = []
    gold: list[int | None] = []
    for idx, (text, label) in enumerate(records):
        try:
            tokens = tokenize(text, max_tokens)
        except EmptyTextError as exc:
            raise CorpusError(f"{path}: record {idx}: {exc}") from exc
        ids = vocab._add_document(tokens)
        instances.append(Instance(id=idx, tokens=tuple(ids), raw_text=text))
        if label is None:
            gold.append(None)
        else:
            label = str(label)
            if label not in label_names:
                if labels is not None:
                    raise CorpusError(
                        f"{path}: record {idx}: unknown label {label!r}; allowed: {label_names}"
                    )
                label_names.append(label)
            gold.append(label_names.index(label))

    return Corpus(instances, label_names, vocab, gold)


def load_eval_corpus(
    path: str,
    train_corpus: Corpus,
    format: str = "jsonl",
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> Corpus:
    """Load an evaluation set sharing the training vocabulary.

    Out-of-vocabulary tokens are dropped so the predictor can score the
    instances directly; the shared vocabulary is not updated.
    """
    raw = load_corpus(path, format=format, labels=train_corpus.labels, max_tokens=max_tokens)
    vocab = train_corpus.vocab
    instances = []
    gold = []
    for inst in raw.instances:
        toks = [vocab.id_for(t) for t in tokenize(inst.raw_text, max_tokens) if t in vocab]
        if not toks:
            raise CorpusError(f"instance {inst.id} has no in-vocabulary tokens")
        instances.append(Instance(id=inst.id, tokens=tuple(toks), raw_text=inst.raw_text))
        gold.append(raw._gold[inst.id])
    return Corpus(instances, train_corpus.labels, vocab, gold)


@dataclass(frozen=True)
class FeatureUniverse:
    """Tokens eligible for proposal/query: top fraction by document frequency."""

    token_ids: tuple[int, ...]
    occurrences: dict[int, int] = field(repr=False)  # C_t: total occurrence count
    doc_counts: dict[int, int] = field(repr=False)  # number of instances containing t

    def __contains__(self, token_id: int) -> bool:
        return token_id in self.occurrences

    def __len__(self) -> int:
        return len(self.token_ids)

    def count(self, token_id: int) -> int:
        return self.occurrences[token_id]


def build_feature_universe(
    corpus: Corpus,
    top_fraction: float = DEFAULT_TOP_FRACTION,
    stop_tokens: tuple[str, ...] = (),
) -> FeatureUniverse:
    """Keep the top ceil(top_fraction * |vocab|) tokens by document frequency."""
    if not 0 < top_fraction <= 1:
        raise CorpusError(f"top_fraction must be in (0, 1], got {top_fraction}")
    vocab = corpus.vocab
    stop_ids = {vocab.id_for(t) for t in stop_tokens if t in vocab}
    keep = int(np.ceil(top_fraction * len(vocab)))
    df = np.asarray(vocab.doc_freq)
    # rank by document frequency desc, ties by token id for determinism
    order = np.lexsort((np.arange(len(vocab)), -df))
    ranked = [int(t) for t in order if int(t) not in stop_ids][:keep]
    return FeatureUniverse(
        token_ids=tuple(ranked),
        occurrences={t: vocab.occurrences[t] for t in ranked},
        doc_counts={t: vocab.doc_freq[t] for t in ranked},
    )
