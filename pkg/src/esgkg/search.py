"""Asymmetric semantic search of report sentences against ESG category titles."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .clients import CORPUS_INSTRUCTION, QUERY_INSTRUCTION, EmbeddingClient
from .errors import DimensionMismatch, EmptyCorpus, ZeroVector
from .ingest import Sentence


@dataclass(frozen=True)
class SearchConfig:
    t_sim: float = 0.6
    k: int = 30

    def __post_init__(self):
        if not 0.0 <= self.t_sim <= 1.0:
            raise ValueError("t_sim must lie in [0, 1]")
        if self.k < 1:
            raise ValueError("k must be >= 1")


@dataclass(frozen=True)
class CategoryQuery:
    name: str
    embedding: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class SentenceMatch:
    sentence: Sentence
    category: str
    score: float


@dataclass
class SelectedSentence:
    sentence: Sentence
    matched_categories: list[str]
    max_score: float

    def to_dict(self) -> dict:
        d = self.sentence.to_dict()
        d["matched_categories"] = list(self.matched_categories)
        d["max_score"] = self.max_score
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SelectedSentence":
        return cls(Sentence.from_dict(d), list(d["matched_categories"]), float(d["max_score"]))


def cosine_similarity(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"{a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine similarity undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


class CorpusIndex:
    """Immutable matrix of unit sentence embeddings, rows in provenance order."""

    def __init__(self, sentences: Sequence[Sentence], vectors: np.ndarray):
        order = sorted(range(len(sentences)), key=lambda i: sentences[i].key)
        self.sentences = tuple(sentences[i] for i in order)
        self.vectors = np.asarray(vectors, dtype=float)[order]
        self.vectors.setflags(write=False)

    def __len__(self):
        return len(self.sentences)

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def build_index(sentences: Sequence[Sentence], client: EmbeddingClient,
                instruction: str = CORPUS_INSTRUCTION) -> CorpusIndex:
    if not sentences:
        raise EmptyCorpus("cannot index an empty sentence list")
    vectors = client.embed(instruction, [s.text for s in sentences])
    return CorpusIndex(list(sentences), vectors)


def embed_queries(client: EmbeddingClient, names: Sequence[str],
                  instruction: str = QUERY_INSTRUCTION) -> list[CategoryQuery]:
    vectors = client.embed(instruction, list(names))
    return [CategoryQuery(n, v) for n, v in zip(names, vectors)]


def retrieve(index: CorpusIndex, query: CategoryQuery, cfg: SearchConfig = SearchConfig()) -> list[SentenceMatch]:
    q = np.asarray(query.embedding, dtype=float)
    if q.shape != (index.dim,):
        raise DimensionMismatch(f"query dim {q.shape} vs index dim {index.dim}")
    scores = index.vectors @ (q / np.linalg.norm(q))
    hits = np.flatnonzero(scores >= cfg.t_sim)
    # rows are already in provenance order, so a stable sort breaks ties by it
    hits = hits[np.argsort(-scores[hits], kind="stable")][: cfg.k]
    return [SentenceMatch(index.sentences[i], query.name, float(scores[i])) for i in hits]


def select_esg_sentences(index: CorpusIndex, queries: Iterable[CategoryQuery],
                         cfg: SearchConfig = SearchConfig()) -> list[SelectedSentence]:
    """Union of per-category retrievals, one entry per sentence, in provenance order."""
    selected: dict[tuple, SelectedSentence] = {}
    for q in queries:
        for m in retrieve(index, q, cfg):
            entry = selected.get(m.sentence.key)
            if entry is None:
                selected[m.sentence.key] = SelectedSentence(m.sentence, [q.name], m.score)
            else:
                entry.matched_categories.append(q.name)
                entry.max_score = max(entry.max_score, m.score)
    return [selected[k] for k in sorted(selected)]


def read_categories(path: str | Path) -> list[str]:
    with Path(path).open(encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


def write_selected(selected: Iterable[SelectedSentence], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in selected:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")


def read_selected(path: str | Path) -> list[SelectedSentence]:
    with Path(path).open(encoding="utf-8") as fh:
        return [SelectedSentence.from_dict(json.loads(line)) for line in fh if line.strip()]
