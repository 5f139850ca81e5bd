"""Stage orchestration: config loading, artifact manifests and the stage bodies."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import yaml

from . import analytics as an
from . import interpret as it
from .clients import EmbeddingClient, GenerationConfig, embedding_client_from_env, generation_client_from_env
from .consolidation import ConsolidationConfig, cluster_labels, relabel_triples, write_clusters
from .errors import ConfigInvalid, DegenerateInput, EsgKgError, MissingArtifact, TooFewSamples
from .extraction import default_examples, default_schema, load_examples, read_triples, run_extraction, \
    write_triples
from .graph import PROJECTIONS, build_kg, density, project, read_kg, write_edge_list, write_kg
from .ingest import extract_text, read_manifest, read_sentences, segment_sentences, write_sentences
from .search import SearchConfig, build_index, embed_queries, read_categories, read_selected, \
    select_esg_sentences, write_selected

log = logging.getLogger(__name__)

STAGES = ("ingest", "search", "extract", "consolidate", "graph", "analyze", "interpret")
MANIFEST = "_manifest.json"
DATA_DIR = Path(__file__).parent / "data"


@dataclass
class RunConfig:
    corpus_manifest: Path
    output_dir: Path
    category_file: Path = DATA_DIR / "categories.txt"
    example_file: Path = DATA_DIR / "examples.json"
    pillar_map: Path = DATA_DIR / "pillar_map.json"
    company_records: Path | None = None
    stub_replies: Path | None = None
    search: SearchConfig = field(default_factory=SearchConfig)
    consolidation: ConsolidationConfig = field(default_factory=ConsolidationConfig)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    seed: int = 42
    include_schema: bool = True
    include_examples: bool = True
    null_sims: int = 1000
    similarity_threshold: float = 0.06
    folds: int = 8
    alphas: tuple[float, ...] = it.DEFAULT_ALPHAS
    l1_ratios: tuple[float, ...] = it.DEFAULT_L1_RATIOS

    def with_seed(self, seed: int | None) -> "RunConfig":
        return self if seed is None else dataclasses.replace(self, seed=int(seed))


_PATH_KEYS = ("corpus_manifest", "output_dir", "category_file", "example_file", "pillar_map",
              "company_records", "stub_replies")
_SECTIONS = {"search": SearchConfig, "consolidation": ConsolidationConfig, "generation": GenerationConfig}


def load_config(path: str | Path) -> RunConfig:
    """Read a YAML run config; relative paths resolve against the config's directory."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigInvalid(f"{path}: top level must be a mapping")
    known = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigInvalid(f"unknown config keys: {unknown}")
    for key in ("corpus_manifest", "output_dir"):
        if key not in raw:
            raise ConfigInvalid(f"missing required key {key!r}")
    kw = {}
    try:
        for k, v in raw.items():
            if k in _PATH_KEYS:
                if v is None:
                    continue
                p = Path(v)
                kw[k] = p if p.is_absolute() else (path.parent / p).resolve()
            elif k in _SECTIONS:
                kw[k] = _SECTIONS[k](**(v or {}))
            elif k in ("alphas", "l1_ratios"):
                kw[k] = tuple(float(x) for x in v)
            else:
                kw[k] = v
        cfg = RunConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    for k in _PATH_KEYS:
        p = getattr(cfg, k)
        if k != "output_dir" and p is not None and not Path(p).exists():
            raise ConfigInvalid(f"{k}: {p} does not exist")
    return cfg


# --------------------------------------------------------------------------
# hashing and manifests

def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


# config fields each stage depends on; input files enter by content, not location
_STAGE_KEYS = {
    "ingest": ("corpus_manifest",),
    "search": ("category_file", "search"),
    "extract": ("category_file", "example_file", "stub_replies", "generation",
                "include_schema", "include_examples"),
    "consolidate": ("consolidation",),
    "graph": (),
    "analyze": ("company_records", "seed", "null_sims", "similarity_threshold"),
    "interpret": ("company_records", "pillar_map", "seed", "folds", "alphas", "l1_ratios"),
}


def _corpus_digest(manifest: Path) -> dict:
    docs = read_manifest(manifest)
    return {"manifest": sha256_file(manifest),
            "documents": [sha256_file(d.source_path) if Path(d.source_path).exists() else None
                          for d in docs]}


def stage_hash(cfg: RunConfig, stage: str) -> str:
    parts = {"stage": stage}
    for k in _STAGE_KEYS[stage]:
        v = getattr(cfg, k)
        if k == "corpus_manifest":
            v = _corpus_digest(v)
        elif k in _PATH_KEYS:
            v = None if v is None else sha256_file(v)
        elif dataclasses.is_dataclass(v):
            v = dataclasses.asdict(v)
        parts[k] = v
    i = STAGES.index(stage)
    if i > 0:
        prev = Path(cfg.output_dir) / STAGES[i - 1] / MANIFEST
        parts["upstream"] = sha256_file(prev) if prev.exists() else None
    return _digest(parts)


def write_manifest(stage_dir: Path, stage: str, config_hash: str) -> None:
    files = {p.name: sha256_file(p) for p in sorted(stage_dir.iterdir())
             if p.is_file() and p.name != MANIFEST}
    doc = {"stage": stage, "config_hash": config_hash, "files": files}
    (stage_dir / MANIFEST).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def is_complete(stage_dir: Path, config_hash: str) -> bool:
    m = stage_dir / MANIFEST
    if not m.exists():
        return False
    doc = json.loads(m.read_text(encoding="utf-8"))
    if doc.get("config_hash") != config_hash:
        return False
    return all((stage_dir / n).exists() and sha256_file(stage_dir / n) == h for n, h in doc["files"].items())


def require(stage_dir: Path, *names: str) -> None:
    if not (stage_dir / MANIFEST).exists():
        raise MissingArtifact(f"{stage_dir} has no completed manifest; run that stage first")
    for n in names:
        if not (stage_dir / n).exists():
            raise MissingArtifact(f"{stage_dir / n} is missing")


# --------------------------------------------------------------------------
# clients

def _embed_client(cfg: RunConfig) -> EmbeddingClient:
    return embedding_client_from_env(Path(cfg.output_dir) / ".cache" / "embeddings.sqlite")


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


# --------------------------------------------------------------------------
# stage bodies; each reads its predecessor's directory and fills its own

def stage_ingest(cfg: RunConfig, out: Path) -> None:
    """Sentences per company, numbered consecutively across that company's documents."""
    per_company: dict[str, list] = {}
    for doc in read_manifest(cfg.corpus_manifest):
        sents = segment_sentences(extract_text(doc))
        bucket = per_company.setdefault(doc.company_id, [])
        bucket.extend(dataclasses.replace(s, doc_index=len(bucket) + i) for i, s in enumerate(sents))
    sentences = [s for c in sorted(per_company) for s in per_company[c]]
    write_sentences(sentences, out / "sentences.jsonl")
    _dump_json({c: len(v) for c, v in sorted(per_company.items())}, out / "counts.json")


def stage_search(cfg: RunConfig, out: Path) -> None:
    src = out.parent / "ingest"
    require(src, "sentences.jsonl")
    sentences = read_sentences(src / "sentences.jsonl")
    client = _embed_client(cfg)
    queries = embed_queries(client, read_categories(cfg.category_file))
    by_company: dict[str, list] = {}
    for s in sentences:
        by_company.setdefault(s.company_id, []).append(s)
    selected = []
    for c in sorted(by_company):
        selected.extend(select_esg_sentences(build_index(by_company[c], client), queries, cfg.search))
    write_selected(selected, out / "selected.jsonl")


def stage_extract(cfg: RunConfig, out: Path) -> None:
    src = out.parent / "search"
    require(src, "selected.jsonl")
    sentences = [s.sentence for s in read_selected(src / "selected.jsonl")]
    client = generation_client_from_env(cfg.stub_replies)
    examples = load_examples(cfg.example_file) if cfg.example_file else default_examples()
    report = run_extraction(sentences, client, default_schema(read_categories(cfg.category_file)),
                            examples, cfg.generation, cfg.include_schema, cfg.include_examples)
    write_triples(report.triples, out / "triples.jsonl")
    _dump_json({"n_sentences": report.n_sentences, "n_yielding": report.n_yielding,
                "n_malformed": report.n_malformed, "n_skipped_items": report.n_skipped_items,
                "n_triples": len(report.triples), "coverage": report.coverage}, out / "report.json")


def stage_consolidate(cfg: RunConfig, out: Path) -> None:
    src = out.parent / "extract"
    require(src, "triples.jsonl")
    triples = read_triples(src / "triples.jsonl")
    if not triples:
        raise EsgKgError("extraction produced no triples")
    client = _embed_client(cfg)
    cats = cluster_labels((t.cat for t in triples), client, cfg.consolidation, "category")
    preds = cluster_labels((t.pred for t in triples), client, cfg.consolidation, "predicate")
    write_clusters(cats, out / "clusters_category.json", "category")
    write_clusters(preds, out / "clusters_predicate.json", "predicate")
    write_triples(relabel_triples(triples, cats, preds), out / "triples.jsonl")


def stage_graph(cfg: RunConfig, out: Path) -> None:
    src = out.parent / "consolidate"
    require(src, "triples.jsonl")
    kg = build_kg(read_triples(src / "triples.jsonl"))
    write_kg(kg, out / "kg.json")
    stats = {"companies": len(kg.company_nodes), "categories": len(kg.category_nodes),
             "objects": len(kg.object_nodes), "triples": len(kg.cat_obj_edges)}
    for which in PROJECTIONS:
        g = project(kg, which)
        write_edge_list(g, out / f"edges_{which}.csv")
        stats[f"density_{which}"] = density(g)
    _dump_json(stats, out / "stats.json")


# company features compared against disclosure similarity
NUMERIC_RECORD_FIELDS = ("esg_combined", "env_score", "social_score", "gov_score", *it.NUMERIC_FIELDS)
TEXT_RECORD_FIELDS = ("sector", "industry", "country", "region", "subregion", "continent")


def stage_analyze(cfg: RunConfig, out: Path) -> None:
    src = out.parent / "graph"
    require(src, "kg.json")
    kg = read_kg(src / "kg.json")
    for which in PROJECTIONS:
        an.write_centralities(an.centrality_report(project(kg, which)), out / f"centralities_{which}.csv")
    an.write_entropies(an.category_entropy(kg), out / "entropy_category_predicates.csv")
    an.write_entropies(an.company_entropy(kg, "category"), out / "entropy_company_categories.csv")
    an.write_entropies(an.company_entropy(kg, "action"), out / "entropy_company_actions.csv")

    null = an.null_adjusted_similarity(an.action_sets(project(kg, "coact")), sims=cfg.null_sims, seed=cfg.seed)
    an.write_matrix(null.ids, null.observed, out / "jaccard_observed.csv")
    an.write_matrix(null.ids, null.null, out / "jaccard_null.csv")
    an.write_matrix(null.ids, null.adjusted, out / "jaccard_adjusted.csv")
    an.write_similarity_edges(an.similarity_edges(null.ids, null.adjusted, cfg.similarity_threshold),
                              out / "similarity_edges.csv")

    if cfg.company_records is None:
        return
    records = {r.company_id: r for r in it.read_records(cfg.company_records)}
    keep = [i for i, c in enumerate(null.ids) if c in records]
    ids = [null.ids[i] for i in keep]
    adjusted = null.adjusted[np.ix_(keep, keep)]
    client = _embed_client(cfg)
    rows = []
    for name in NUMERIC_RECORD_FIELDS + TEXT_RECORD_FIELDS:
        kind = "numeric" if name in NUMERIC_RECORD_FIELDS else "textual"
        entry = {"feature": name, "kind": kind}
        try:
            sim = an.feature_similarity([getattr(records[c], name) for c in ids], kind, client)
            res = an.similarity_correlation(adjusted, sim)
            entry.update(tau=res.tau, p_value=res.p_value, concordant=res.concordant, discordant=res.discordant)
        except (DegenerateInput, ValueError) as exc:
            entry.update(tau=None, p_value=None, error=str(exc))
        rows.append(entry)
    _dump_json(rows, out / "correlations.json")


def stage_interpret(cfg: RunConfig, out: Path) -> None:
    src = out.parent / "consolidate"
    require(src, "triples.jsonl")
    if cfg.company_records is None:
        raise ConfigInvalid("the interpret stage needs company_records")
    triples = read_triples(src / "triples.jsonl")
    with_triples = {t.company_id for t in triples}
    records = [r for r in it.read_records(cfg.company_records) if r.company_id in with_triples]
    X = it.build_features(triples, records, it.load_pillar_map(cfg.pillar_map), _embed_client(cfg))
    X.to_csv(out / "features.csv")
    y = np.array([r.esg_combined for r in sorted(records, key=lambda r: r.company_id)])

    folds = cfg.folds
    if len(y) < folds:
        warnings.warn(f"only {len(y)} companies; using {len(y)} CV folds instead of {folds}")
        folds = len(y)
    model = it.fit_elastic_net(X, y, cfg.alphas, cfg.l1_ratios, folds, cfg.seed)
    _dump_json(model.to_dict(), out / "model.json")

    expl = [it.shap_linear(model, X, i) for i in range(len(X.rows))]
    it.write_shap(X.rows, expl, out / "shap.csv")
    continents = [r.continent for r in sorted(records, key=lambda r: r.company_id)]
    summary = {"all": it.shap_summary(expl)}
    for cont in sorted(set(continents)):
        summary[f"continent={cont}"] = it.shap_summary(expl, [c == cont for c in continents])
    _dump_json(summary, out / "shap_summary.json")

    pred = model.predict(X)
    diagnostics = {"metrics": it.metrics_from_predictions(y, pred), "folds": folds}
    try:
        diagnostics["normality"] = it.residual_normality(y - pred)
    except TooFewSamples as exc:
        diagnostics["normality"] = {"error": str(exc)}
    _dump_json(diagnostics, out / "diagnostics.json")


STAGE_FUNCS: dict[str, Callable[[RunConfig, Path], None]] = {
    "ingest": stage_ingest, "search": stage_search, "extract": stage_extract,
    "consolidate": stage_consolidate, "graph": stage_graph, "analyze": stage_analyze,
    "interpret": stage_interpret,
}


def run_stage(cfg: RunConfig, stage: str, force: bool = False) -> bool:
    """Run one stage. Returns False when it was already complete and skipped."""
    out = Path(cfg.output_dir) / stage
    h = stage_hash(cfg, stage)
    if not force and is_complete(out, h):
        log.info("%s: up to date", stage)
        return False
    i = STAGES.index(stage)
    if i > 0:
        require(Path(cfg.output_dir) / STAGES[i - 1])
    out.mkdir(parents=True, exist_ok=True)
    for p in out.iterdir():
        if p.is_file():
            p.unlink()
    STAGE_FUNCS[stage](cfg, out)
    write_manifest(out, stage, h)
    log.info("%s: done", stage)
    return True


def run(stage: str, cfg: RunConfig, force: bool = False) -> int:
    """Run ``stage`` (or ``all``) and map failures to exit codes 1 and 2."""
    if stage != "all" and stage not in STAGES:
        log.error("unknown stage %r", stage)
        return 2
    try:
        for s in (STAGES if stage == "all" else (stage,)):
            run_stage(cfg, s, force)
    except (MissingArtifact, ConfigInvalid) as exc:
        log.error("%s", exc)
        return 2
    except Exception as exc:  # noqa: BLE001 - any stage failure maps to exit 1
        log.error("stage failed: %s: %s", type(exc).__name__, exc)
        return 1
    return 0
