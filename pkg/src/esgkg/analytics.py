"""Bipartite network statistics, entropy, set similarity and rank correlation."""

from __future__ import annotations

import csv
import math
from collections import Counter, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy import sparse
from scipy.special import erfc

from .clients import TITLE_INSTRUCTION, EmbeddingClient
from .errors import AllZero, CardinalityExceedsPool, DegenerateInput, UnknownNode
from .extraction import action_label
from .graph import BipartiteGraph, KnowledgeGraph


# --------------------------------------------------------------------------
# centralities
#
# All three return one value per node, left partition first then right,
# i.e. aligned with ``g.left + g.right``.

def _adjacency(g: BipartiteGraph) -> list[list[int]]:
    n = g.n
    adj: list[list[int]] = [[] for _ in range(n + g.m)]
    for i, j in zip(*np.nonzero(g.B)):
        adj[i].append(n + j)
        adj[n + j].append(i)
    return adj


def _bfs(adj, source: int) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def degree_centrality(g: BipartiteGraph) -> np.ndarray:
    if g.n == 0 or g.m == 0:
        raise ValueError("both partitions must be non-empty")
    B = g.B.astype(float)
    return np.concatenate([B.sum(axis=1) / g.m, B.sum(axis=0) / g.n])


def closeness_centrality(g: BipartiteGraph) -> np.ndarray:
    """Bipartite closeness.

    Within the node's component the total distance is compared with its
    bipartite minimum (every opposite node at 1, every same-side node at 2);
    the ratio is then scaled by ``(reach - 1) / (N - 1)``. Isolated nodes get 0.
    """
    if g.n == 0 or g.m == 0:
        raise ValueError("both partitions must be non-empty")
    adj = _adjacency(g)
    n, total = g.n, g.n + g.m
    out = np.zeros(total)
    for u in range(total):
        dist = _bfs(adj, u)
        totsp = sum(dist.values())
        if totsp == 0:
            continue
        left_side = u < n
        same = sum(1 for v in dist if (v < n) == left_side)
        opposite = len(dist) - same
        out[u] = (opposite + 2 * (same - 1)) / totsp * (len(dist) - 1) / (total - 1)
    return out


def _max_betweenness(own: int, other: int) -> float:
    """Largest attainable betweenness of a node whose side has ``own`` nodes."""
    s, t = divmod(own - 1, other)
    return ((other ** 2) * (s + 1) ** 2
            + other * (s + 1) * (2 * t - s - 1)
            - t * (2 * s - t + 3)) / 2.0


def betweenness_centrality(g: BipartiteGraph) -> np.ndarray:
    """Brandes betweenness over unordered pairs, scaled by the bipartite maximum."""
    if g.n == 0 or g.m == 0:
        raise ValueError("both partitions must be non-empty")
    adj = _adjacency(g)
    total = g.n + g.m
    bc = np.zeros(total)
    for s in range(total):
        stack = []
        preds: list[list[int]] = [[] for _ in range(total)]
        sigma = np.zeros(total)
        sigma[s] = 1.0
        dist = np.full(total, -1)
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = np.zeros(total)
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    bc /= 2.0  # each unordered pair was counted from both ends
    left_max = _max_betweenness(g.n, g.m)
    right_max = _max_betweenness(g.m, g.n)
    scale = np.concatenate([np.full(g.n, left_max), np.full(g.m, right_max)])
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(scale > 0, bc / np.where(scale > 0, scale, 1.0), 0.0)
    return out


@dataclass(frozen=True)
class CentralityReport:
    node: str
    partition: str
    degree: float
    closeness: float
    betweenness: float


def centrality_report(g: BipartiteGraph) -> list[CentralityReport]:
    deg, clo, bet = degree_centrality(g), closeness_centrality(g), betweenness_centrality(g)
    sides = ["left"] * g.n + ["right"] * g.m
    return [CentralityReport(node, side, float(d), float(c), float(b))
            for node, side, d, c, b in zip(g.left + g.right, sides, deg, clo, bet)]


# --------------------------------------------------------------------------
# entropy

def shannon_entropy(counts: Iterable[int]) -> float:
    """Shannon entropy in nats of an occurrence-count vector."""
    c = np.asarray(list(counts), dtype=float)
    if c.size == 0 or np.any(c < 0) or c.sum() <= 0:
        raise AllZero("entropy needs at least one positive count and no negatives")
    p = c[c > 0] / c.sum()
    return float(-(p * np.log(p)).sum())


def _grouped_entropy(pairs: Iterable[tuple[str, str]], only: Sequence[str] | None) -> dict[str, float]:
    groups: dict[str, Counter] = {}
    for key, event in pairs:
        groups.setdefault(key, Counter())[event] += 1
    if only is not None:
        missing = [k for k in only if k not in groups]
        if missing:
            raise UnknownNode(f"no triples for {missing}")
        keys = list(only)
    else:
        keys = sorted(groups)
    return {k: shannon_entropy(groups[k].values()) for k in keys}


def category_entropy(kg: KnowledgeGraph, categories: Sequence[str] | None = None) -> dict[str, float]:
    """Entropy of predicate occurrences within each category, across all companies."""
    return _grouped_entropy(((e.cat, e.pred) for e in kg.cat_obj_edges), categories)


def company_entropy(kg: KnowledgeGraph, kind: str = "category",
                    companies: Sequence[str] | None = None) -> dict[str, float]:
    """Entropy of a company's category (or action) occurrences."""
    if kind == "category":
        pairs = ((e.company_id, e.cat) for e in kg.cat_obj_edges)
    elif kind == "action":
        pairs = ((e.company_id, action_label(e.cat, e.pred)) for e in kg.cat_obj_edges)
    else:
        raise ValueError("kind must be 'category' or 'action'")
    return _grouped_entropy(pairs, companies)


# --------------------------------------------------------------------------
# Jaccard similarity and its null model

@dataclass(frozen=True)
class ActionSet:
    company_id: str
    actions: frozenset[str]


def action_sets(coact: BipartiteGraph) -> list[ActionSet]:
    return [ActionSet(c, frozenset(coact.right[j] for j in np.flatnonzero(coact.B[i])))
            for i, c in enumerate(coact.left)]


def jaccard_similarity(a: ActionSet | frozenset, b: ActionSet | frozenset) -> float:
    a = a.actions if isinstance(a, ActionSet) else a
    b = b.actions if isinstance(b, ActionSet) else b
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def _jaccard_matrix(M: sparse.csr_matrix) -> np.ndarray:
    inter = (M @ M.T).toarray().astype(float)
    sizes = np.asarray(M.sum(axis=1)).ravel().astype(float)
    union = sizes[:, None] + sizes[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)


class NullModelResult(NamedTuple):
    ids: list[str]
    observed: np.ndarray
    null: np.ndarray
    adjusted: np.ndarray


def null_adjusted_similarity(sets: Sequence[ActionSet], pool: Iterable[str] | None = None,
                             sims: int = 1000, seed: int = 0) -> NullModelResult:
    """Observed Jaccard minus its mean under size-preserving uniform random action sets."""
    universe = sorted(set(pool) if pool is not None else set().union(*(s.actions for s in sets)))
    index = {a: i for i, a in enumerate(universe)}
    P = len(universe)
    sizes = [len(s.actions) for s in sets]
    for s in sets:
        if not s.actions <= index.keys():
            raise CardinalityExceedsPool(f"{s.company_id} has actions outside the pool")
    if any(k > P for k in sizes):
        raise CardinalityExceedsPool("an action set is larger than the pool")

    def indicator(rows: Sequence[np.ndarray]) -> sparse.csr_matrix:
        indptr = np.concatenate([[0], np.cumsum([len(r) for r in rows])])
        cols = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
        return sparse.csr_matrix((np.ones(len(cols)), cols, indptr), shape=(len(rows), P))

    observed = _jaccard_matrix(indicator(
        [np.array(sorted(index[a] for a in s.actions), dtype=int) for s in sets]))
    rng = np.random.default_rng(seed)
    acc = np.zeros_like(observed)
    for _ in range(sims):
        draws = [np.sort(rng.choice(P, size=k, replace=False)) for k in sizes]
        acc += _jaccard_matrix(indicator(draws))
    null = acc / sims
    return NullModelResult([s.company_id for s in sets], observed, null, observed - null)


def similarity_edges(ids: Sequence[str], matrix: np.ndarray, threshold: float = 0.06):
    """Upper-triangle pairs with similarity at or above ``threshold``."""
    out = []
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if matrix[i, j] >= threshold:
                out.append((ids[i], ids[j], float(matrix[i, j])))
    return out


# --------------------------------------------------------------------------
# rank correlation

class KendallResult(NamedTuple):
    tau: float
    p_value: float
    concordant: int
    discordant: int


def _tie_sums(x: np.ndarray):
    _, t = np.unique(x, return_counts=True)
    t = t.astype(float)
    return (t * (t - 1)).sum(), (t * (t - 1) * (t - 2)).sum(), (t * (t - 1) * (2 * t + 5)).sum()


def kendall_tau(x: Sequence[float], y: Sequence[float]) -> KendallResult:
    """Kendall's tau as (concordant - discordant) / (concordant + discordant).

    Pairs tied in either variable count as neither. The two-sided p-value
    uses the normal approximation to the null distribution of
    ``concordant - discordant``, with the usual tie correction of its variance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    n = len(x)
    if n < 2:
        raise ValueError("need at least two observations")
    nc = nd = 0
    for i in range(n - 1):
        prod = np.sign(x[i + 1:] - x[i]) * np.sign(y[i + 1:] - y[i])
        nc += int((prod > 0).sum())
        nd += int((prod < 0).sum())
    if nc + nd == 0:
        raise DegenerateInput("every pair is tied")
    tau = (nc - nd) / (nc + nd)

    tx1, tx2, tx3 = _tie_sums(x)
    ty1, ty2, ty3 = _tie_sums(y)
    var = (n * (n - 1) * (2 * n + 5) - tx3 - ty3) / 18.0
    var += tx1 * ty1 / (2.0 * n * (n - 1))
    if n > 2:
        var += tx2 * ty2 / (9.0 * n * (n - 1) * (n - 2))
    p = float(erfc(abs(nc - nd) / math.sqrt(2 * var))) if var > 0 else 1.0
    return KendallResult(tau, min(p, 1.0), nc, nd)


def similarity_correlation(a: np.ndarray, b: np.ndarray) -> KendallResult:
    """Kendall tau between the off-diagonal upper triangles of two similarity matrices."""
    iu = np.triu_indices(a.shape[0], k=1)
    x, y = a[iu], b[iu]
    keep = np.isfinite(x) & np.isfinite(y)
    return kendall_tau(x[keep], y[keep])


# --------------------------------------------------------------------------
# feature similarity

def _minmax_pairs(raw: np.ndarray, invert: bool) -> np.ndarray:
    n = raw.shape[0]
    off = ~np.eye(n, dtype=bool) & np.isfinite(raw)
    out = np.full((n, n), np.nan)
    np.fill_diagonal(out, 1.0)
    vals = raw[off]
    if vals.size == 0:
        return out
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        out[off] = 1.0
        return out
    scaled = (raw[off] - lo) / (hi - lo)
    out[off] = 1.0 - scaled if invert else scaled
    return out


def feature_similarity(values: Sequence, kind: str = "numeric",
                       client: EmbeddingClient | None = None) -> np.ndarray:
    """Pairwise similarity of one company feature, min-max scaled to [0, 1].

    Missing values (``None`` or NaN, or empty strings for textual columns)
    give NaN similarities. A column whose pairwise spread is zero yields 1
    everywhere.
    """
    n = len(values)
    if kind == "numeric":
        v = np.array([np.nan if x is None else float(x) for x in values])
        present = np.isfinite(v)
        if present.sum() < 2:
            raise ValueError("need at least two non-missing values")
        raw = np.abs(v[:, None] - v[None, :])
        return _minmax_pairs(raw, invert=True)
    if kind == "textual":
        if client is None:
            raise ValueError("textual similarity needs an embedding client")
        present = [isinstance(x, str) and x.strip() != "" for x in values]
        if sum(present) < 2:
            raise ValueError("need at least two non-missing values")
        idx = [i for i in range(n) if present[i]]
        vecs = client.embed(TITLE_INSTRUCTION, [values[i] for i in idx])
        raw = np.full((n, n), np.nan)
        raw[np.ix_(idx, idx)] = vecs @ vecs.T
        return _minmax_pairs(raw, invert=False)
    raise ValueError("kind must be 'numeric' or 'textual'")


# --------------------------------------------------------------------------
# writers

def _fmt(x: float) -> str:
    return repr(float(x))


def write_centralities(reports: Sequence[CentralityReport], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "degree", "closeness", "betweenness"])
        for r in reports:
            w.writerow([r.node, _fmt(r.degree), _fmt(r.closeness), _fmt(r.betweenness)])


def write_entropies(values: Mapping[str, float], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "entropy_nats"])
        for k, v in values.items():
            w.writerow([k, _fmt(v)])


def write_matrix(ids: Sequence[str], matrix: np.ndarray, path: str | Path, corner: str = "company_id") -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([corner, *ids])
        for i, row in zip(ids, matrix):
            w.writerow([i, *(_fmt(x) for x in row)])


def read_matrix(path: str | Path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    ids = rows[0][1:]
    return ids, np.array([[float(x) for x in r[1:]] for r in rows[1:]])


def write_similarity_edges(edges, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "target", "similarity"])
        for a, b, s in edges:
            w.writerow([a, b, _fmt(s)])
