"""Knowledge graph of companies, categories and objects, plus bipartite projections."""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .extraction import EsgTriple, action_label

PROJECTIONS = ("cocat", "catpred", "coact")


@dataclass(frozen=True)
class CatObjEdge:
    cat: str
    obj: str
    pred: str
    company_id: str
    doc_index: int | None


@dataclass(frozen=True)
class KnowledgeGraph:
    company_nodes: tuple[str, ...]
    category_nodes: tuple[str, ...]
    object_nodes: tuple[str, ...]
    co_cat_edges: frozenset[tuple[str, str]]
    cat_obj_edges: tuple[CatObjEdge, ...]

    @property
    def triples(self) -> list[EsgTriple]:
        return [EsgTriple(e.cat, e.pred, e.obj, e.company_id, e.doc_index) for e in self.cat_obj_edges]

    def triple_counts(self) -> Counter:
        """Multiplicity of each distinct (company, cat, pred, obj)."""
        return Counter((e.company_id, e.cat, e.pred, e.obj) for e in self.cat_obj_edges)

    def to_dict(self) -> dict:
        return {
            "nodes": {
                "company": list(self.company_nodes),
                "category": list(self.category_nodes),
                "object": list(self.object_nodes),
            },
            "edges": {
                "company_category": [list(e) for e in sorted(self.co_cat_edges)],
                "category_object": [
                    {"cat": e.cat, "obj": e.obj, "pred": e.pred,
                     "company_id": e.company_id, "doc_index": e.doc_index}
                    for e in self.cat_obj_edges
                ],
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnowledgeGraph":
        return cls(
            tuple(d["nodes"]["company"]), tuple(d["nodes"]["category"]), tuple(d["nodes"]["object"]),
            frozenset(tuple(e) for e in d["edges"]["company_category"]),
            tuple(CatObjEdge(e["cat"], e["obj"], e["pred"], e["company_id"], e["doc_index"])
                  for e in d["edges"]["category_object"]),
        )


def _edge_sort_key(e: CatObjEdge):
    return (e.company_id, -1 if e.doc_index is None else e.doc_index, e.cat, e.pred, e.obj)


def build_kg(triples: Iterable[EsgTriple]) -> KnowledgeGraph:
    triples = list(triples)
    for t in triples:
        if t.company_id is None:
            raise ValueError(f"triple without provenance: {t}")
    edges = sorted((CatObjEdge(t.cat, t.obj, t.pred, t.company_id, t.doc_index) for t in triples),
                   key=_edge_sort_key)
    return KnowledgeGraph(
        tuple(sorted({t.company_id for t in triples})),
        tuple(sorted({t.cat for t in triples})),
        tuple(sorted({t.obj for t in triples})),
        frozenset((t.company_id, t.cat) for t in triples),
        tuple(edges),
    )


@dataclass(frozen=True)
class BipartiteGraph:
    """Two ordered node partitions and the binary bi-adjacency matrix between them."""

    left: tuple[str, ...]
    right: tuple[str, ...]
    B: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=np.uint8)
        if B.shape != (len(self.left), len(self.right)):
            raise ValueError(f"B has shape {B.shape}, expected {(len(self.left), len(self.right))}")
        if B.size and B.max() > 1:
            raise ValueError("B must be binary")
        B.setflags(write=False)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return len(self.left)

    @property
    def m(self) -> int:
        return len(self.right)

    @property
    def n_edges(self) -> int:
        return int(self.B.sum())

    def edges(self) -> list[tuple[str, str]]:
        rows, cols = np.nonzero(self.B)
        return [(self.left[i], self.right[j]) for i, j in zip(rows, cols)]

    @classmethod
    def from_edges(cls, edges: Iterable[tuple[str, str]],
                   left: Sequence[str] | None = None, right: Sequence[str] | None = None) -> "BipartiteGraph":
        edges = set(edges)
        left = tuple(sorted({u for u, _ in edges})) if left is None else tuple(left)
        right = tuple(sorted({v for _, v in edges})) if right is None else tuple(right)
        li = {u: i for i, u in enumerate(left)}
        ri = {v: j for j, v in enumerate(right)}
        B = np.zeros((len(left), len(right)), dtype=np.uint8)
        for u, v in edges:
            B[li[u], ri[v]] = 1
        return cls(left, right, B)


def project(kg: KnowledgeGraph, which: str) -> BipartiteGraph:
    if which == "cocat":
        return BipartiteGraph.from_edges(kg.co_cat_edges, kg.company_nodes, kg.category_nodes)
    if which == "catpred":
        return BipartiteGraph.from_edges((e.cat, e.pred) for e in kg.cat_obj_edges)
    if which == "coact":
        return BipartiteGraph.from_edges((e.company_id, action_label(e.cat, e.pred))
                                         for e in kg.cat_obj_edges)
    raise ValueError(f"unknown projection {which!r}; expected one of {PROJECTIONS}")


def density(g: BipartiteGraph) -> float:
    if g.n < 1 or g.m < 1:
        raise ValueError("density needs both partitions non-empty")
    return g.n_edges / (g.n * g.m)


def write_edge_list(g: BipartiteGraph, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["left", "right"])
        w.writerows(g.edges())


def read_edge_list(path: str | Path) -> BipartiteGraph:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return BipartiteGraph.from_edges((r["left"], r["right"]) for r in rows)


def write_kg(kg: KnowledgeGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(kg.to_dict(), indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


def read_kg(path: str | Path) -> KnowledgeGraph:
    return KnowledgeGraph.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
