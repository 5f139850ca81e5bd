"""Semantic clustering of category and predicate labels, and triple relabeling."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .clients import TITLE_INSTRUCTION, EmbeddingClient
from .errors import UnmappedLabel
from .extraction import EsgTriple

KINDS = ("category", "predicate")


@dataclass(frozen=True)
class ConsolidationConfig:
    threshold: float = 0.8
    embed_instruction: str = TITLE_INSTRUCTION

    def __post_init__(self):
        if not 0.5 <= self.threshold <= 1.0:
            raise ValueError("threshold must lie in [0.5, 1.0]")


@dataclass(frozen=True)
class LabelCluster:
    members: frozenset[str]
    centroid_label: str
    kind: str


def _medoid(names: Sequence[str], sims: np.ndarray) -> str:
    off = sims.copy()
    np.fill_diagonal(off, 0.0)
    scores = off.sum(axis=1)
    best = scores.max()
    # exact float ties only; lexicographic among them
    return min(n for n, s in zip(names, scores) if s == best)


def cluster_labels(strings: Iterable[str], client: EmbeddingClient,
                   cfg: ConsolidationConfig = ConsolidationConfig(),
                   kind: str = "predicate") -> list[LabelCluster]:
    """Connected components of the ``cosine >= threshold`` graph, each named by its medoid."""
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    names = sorted(set(strings))
    if not names:
        raise ValueError("nothing to cluster")
    vectors = client.embed(cfg.embed_instruction, names)
    sims = vectors @ vectors.T
    sims = (sims + sims.T) / 2  # exact symmetry so medoid ties are genuine
    adjacency = csr_matrix(sims >= cfg.threshold)
    _, labels = connected_components(adjacency, directed=False)
    clusters = []
    for comp in np.unique(labels):
        idx = np.flatnonzero(labels == comp)
        members = [names[i] for i in idx]
        label = _medoid(members, sims[np.ix_(idx, idx)])
        clusters.append(LabelCluster(frozenset(members), label, kind))
    return sorted(clusters, key=lambda c: c.centroid_label)


def label_map(clusters: Iterable[LabelCluster]) -> dict[str, str]:
    return {m: c.centroid_label for c in clusters for m in c.members}


def relabel_triples(triples: Sequence[EsgTriple], cat_clusters: Iterable[LabelCluster],
                    pred_clusters: Iterable[LabelCluster]) -> list[EsgTriple]:
    cats, preds = label_map(cat_clusters), label_map(pred_clusters)
    out = []
    for t in triples:
        try:
            cat, pred = cats[t.cat], preds[t.pred]
        except KeyError as exc:
            raise UnmappedLabel(f"label {exc.args[0]!r} is not in any cluster") from None
        out.append(EsgTriple(cat, pred, t.obj, t.company_id, t.doc_index))
    return out


def write_clusters(clusters: Sequence[LabelCluster], path: str | Path, kind: str) -> None:
    doc = {"kind": kind, "clusters": [
        {"label": c.centroid_label, "members": sorted(c.members)} for c in clusters]}
    Path(path).write_text(json.dumps(doc, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def read_clusters(path: str | Path) -> list[LabelCluster]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return [LabelCluster(frozenset(c["members"]), c["label"], doc["kind"]) for c in doc["clusters"]]
