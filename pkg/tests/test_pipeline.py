import json
import shutil
import subprocess
import sys

import pytest
import yaml

from conftest import SYNTHETIC
from esgkg.cli import main
from esgkg.errors import ConfigInvalid
from esgkg.pipeline import MANIFEST, STAGES, load_config, run, stage_hash

EXPECTED = {
    "ingest": {"sentences.jsonl", "counts.json"},
    "search": {"selected.jsonl"},
    "extract": {"triples.jsonl", "report.json"},
    "consolidate": {"clusters_category.json", "clusters_predicate.json", "triples.jsonl"},
    "graph": {"kg.json", "edges_cocat.csv", "edges_catpred.csv", "edges_coact.csv", "stats.json"},
    "analyze": {"centralities_cocat.csv", "centralities_catpred.csv", "centralities_coact.csv",
                "entropy_category_predicates.csv", "entropy_company_categories.csv",
                "entropy_company_actions.csv", "jaccard_observed.csv", "jaccard_null.csv",
                "jaccard_adjusted.csv", "similarity_edges.csv", "correlations.json"},
    "interpret": {"features.csv", "model.json", "shap.csv", "shap_summary.json", "diagnostics.json"},
}


@pytest.fixture(autouse=True)
def offline(monkeypatch):
    monkeypatch.delenv("EMBED_URL", raising=False)
    monkeypatch.delenv("LLM_URL", raising=False)


@pytest.fixture(scope="module")
def finished(tmp_path_factory):
    """One complete synthetic run shared by the read-only tests below."""
    root = tmp_path_factory.mktemp("run")
    dst = root / "synthetic"
    shutil.copytree(SYNTHETIC, dst)
    cfg_path = dst / "config.yaml"
    cfg_path.write_text(cfg_path.read_text().replace("output_dir: ../../runs/synthetic",
                                                     f"output_dir: {root / 'out'}"))
    cfg = load_config(cfg_path)
    assert run("all", cfg) == 0
    return cfg


def test_all_produces_full_tree(finished):
    out = finished.output_dir
    for stage, names in EXPECTED.items():
        files = {p.name for p in (out / stage).iterdir()}
        assert files == names | {MANIFEST}, stage


def test_manifests_declare_stage_and_hash(finished):
    for stage in STAGES:
        doc = json.loads((finished.output_dir / stage / MANIFEST).read_text())
        assert doc["stage"] == stage
        assert doc["config_hash"] == stage_hash(finished, stage)
        assert set(doc["files"]) == EXPECTED[stage]


def test_synthetic_run_content(finished):
    out = finished.output_dir
    report = json.loads((out / "extract" / "report.json").read_text())
    assert report["n_malformed"] >= 1
    assert 0 < report["coverage"] < 1
    preds = json.loads((out / "consolidate" / "clusters_predicate.json").read_text())
    merged = [c for c in preds["clusters"] if len(c["members"]) > 1]
    assert any(c["label"] == "Investment in" and "Investments in" in c["members"] for c in merged)
    diag = json.loads((out / "interpret" / "diagnostics.json").read_text())
    assert set(diag["metrics"]) == {"r2", "rmse", "wmape"}
    model = json.loads((out / "interpret" / "model.json").read_text())
    assert model["seed"] == 42
    header = (out / "interpret" / "features.csv").read_text().splitlines()[0].split(",")
    assert header[0] == "company_id" and "Pillar:E" in header


def test_rerun_is_noop(finished):
    before = {p: p.stat().st_mtime_ns for p in (finished.output_dir / "extract").iterdir()}
    assert run("extract", finished) == 0
    assert {p: p.stat().st_mtime_ns for p in (finished.output_dir / "extract").iterdir()} == before


def test_force_reruns_with_same_bytes(finished):
    path = finished.output_dir / "graph" / "kg.json"
    data, stamp = path.read_bytes(), path.stat().st_mtime_ns
    assert run("graph", finished, force=True) == 0
    assert path.read_bytes() == data
    assert path.stat().st_mtime_ns != stamp


def test_analyze_without_graph_is_exit_2(synthetic_config):
    cfg = load_config(synthetic_config)
    assert run("ingest", cfg) == 0
    assert run("analyze", cfg) == 2


def test_stage_failure_is_exit_1(synthetic_config):
    cfg = load_config(synthetic_config)
    (synthetic_config.parent / "manifest.csv").write_text(
        "company_id,fiscal_year,media,source_path\nacme,2022,plain_text,reports/missing.txt\n")
    assert run("ingest", cfg, force=True) == 1


def test_config_change_invalidates_stage(synthetic_config):
    cfg = load_config(synthetic_config)
    h = stage_hash(cfg, "search")
    text = synthetic_config.read_text().replace("t_sim: 0.3", "t_sim: 0.35")
    synthetic_config.write_text(text)
    assert stage_hash(load_config(synthetic_config), "search") != h
    assert stage_hash(cfg.with_seed(7), "search") == h
    assert stage_hash(cfg.with_seed(7), "analyze") != stage_hash(cfg, "analyze")


@pytest.mark.parametrize("edit", [
    lambda d: d.update(bogus=1),
    lambda d: d.pop("corpus_manifest"),
    lambda d: d.update(corpus_manifest="nope.csv"),
    lambda d: d["search"].update(t_sim=3.0),
])
def test_invalid_config(synthetic_config, edit):
    doc = yaml.safe_load(synthetic_config.read_text())
    edit(doc)
    synthetic_config.write_text(yaml.safe_dump(doc))
    with pytest.raises(ConfigInvalid):
        load_config(synthetic_config)
    assert main(["ingest", "--config", str(synthetic_config)]) == 2


def test_config_paths_resolve_against_config_dir(synthetic_config):
    cfg = load_config(synthetic_config)
    assert cfg.corpus_manifest == (synthetic_config.parent / "manifest.csv").resolve()
    assert cfg.search.t_sim == 0.3 and cfg.folds == 5


def test_cli_seed_override(synthetic_config):
    assert main(["all", "--config", str(synthetic_config), "--seed", "7"]) == 0
    cfg = load_config(synthetic_config)
    model = json.loads((cfg.output_dir / "interpret" / "model.json").read_text())
    assert model["seed"] == 7


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "esgkg.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "--config" in res.stdout
