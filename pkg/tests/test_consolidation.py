import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from esgkg.clients import EmbeddingClient, HashingEmbedder, TableEmbedder
from esgkg.consolidation import (
    ConsolidationConfig, LabelCluster, cluster_labels, label_map, read_clusters, relabel_triples,
    write_clusters,
)
from esgkg.errors import UnmappedLabel
from esgkg.extraction import EsgTriple


def unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


# "Partnership with" sits at the centre; the variants lean off it in
# different directions so each is closer to it than to one another
PARTNER = {
    "Partnership with": unit([1, 0, 0, 0, 0]),
    "Working together with": unit([1, 0.3, 0, 0, 0]),
    "Partnering with others to": unit([1, 0, 0.3, 0, 0]),
    "Collaborating of": unit([1, 0, 0, 0.3, 0]),
    "Reduction of": unit([0, 0, 0, 0, 1]),
}


@pytest.fixture
def crafted():
    return EmbeddingClient(TableEmbedder(PARTNER), max_workers=1)


def test_partnership_cluster(crafted):
    clusters = cluster_labels(PARTNER, crafted)
    assert len(clusters) == 2
    big = next(c for c in clusters if len(c.members) == 4)
    assert big.centroid_label == "Partnership with"
    assert big.kind == "predicate"


def test_singleton(crafted):
    (c,) = cluster_labels(["Reduction of"], crafted)
    assert c.members == {"Reduction of"} and c.centroid_label == "Reduction of"


def test_threshold_one_gives_singletons(crafted):
    clusters = cluster_labels(PARTNER, crafted, ConsolidationConfig(threshold=1.0))
    assert len(clusters) == len(PARTNER)
    assert all(len(c.members) == 1 for c in clusters)


def test_medoid_ties_are_lexicographic():
    emb = EmbeddingClient(TableEmbedder({"b": [1.0, 0.0], "a": [1.0, 0.0]}))
    (c,) = cluster_labels(["b", "a"], emb)
    assert c.centroid_label == "a"


def test_lower_threshold_merges_more(crafted):
    # centre-variant cosine is 1/sqrt(1.09) ~ 0.958, variant-variant 1/1.09 ~ 0.917
    assert len(cluster_labels(PARTNER, crafted, ConsolidationConfig(threshold=0.5))) == 2
    assert len(cluster_labels(PARTNER, crafted, ConsolidationConfig(threshold=0.95))) == 2
    assert len(cluster_labels(PARTNER, crafted, ConsolidationConfig(threshold=0.96))) == 5


def test_config_validation(crafted):
    with pytest.raises(ValueError):
        ConsolidationConfig(threshold=0.4)
    with pytest.raises(ValueError):
        cluster_labels([], crafted)
    with pytest.raises(ValueError):
        cluster_labels(["Reduction of"], crafted, kind="object")


def test_relabel(crafted):
    clusters = cluster_labels(PARTNER, crafted)
    cats = [LabelCluster(frozenset({"Community Relations"}), "Community Relations", "category")]
    t = EsgTriple("Community Relations", "Collaborating of", "Local NGOs", "acme", 4)
    (out,) = relabel_triples([t], cats, clusters)
    assert out == EsgTriple("Community Relations", "Partnership with", "Local NGOs", "acme", 4)
    assert out.cat == t.cat  # already a centroid


def test_relabel_unmapped(crafted):
    clusters = cluster_labels(PARTNER, crafted)
    with pytest.raises(UnmappedLabel):
        relabel_triples([EsgTriple("Waste", "Reduction of", "X")], [], clusters)
    with pytest.raises(UnmappedLabel):
        relabel_triples([EsgTriple("Waste", "Use of", "X")],
                        [LabelCluster(frozenset({"Waste"}), "Waste", "category")], clusters)


labels = st.lists(st.text(alphabet="abcde ", min_size=1, max_size=8), min_size=1, max_size=15)


@settings(max_examples=60, deadline=None)
@given(labels, st.floats(0.5, 1.0))
def test_partition_and_relabel_properties(strings, threshold):
    emb = EmbeddingClient(HashingEmbedder(dim=16), max_workers=1)
    clusters = cluster_labels(strings, emb, ConsolidationConfig(threshold=threshold))
    members = [m for c in clusters for m in c.members]
    assert sorted(members) == sorted(set(strings))
    assert all(c.centroid_label in c.members for c in clusters)

    cats = [LabelCluster(frozenset({"Waste"}), "Waste", "category")]
    triples = [EsgTriple("Waste", s, "obj", "c", i) for i, s in enumerate(strings)]
    once = relabel_triples(triples, cats, clusters)
    assert len(once) == len(triples)
    assert relabel_triples(once, cats, clusters) == once
    assert len({t.pred for t in once}) <= len({t.pred for t in triples})
    assert [(t.obj, t.provenance) for t in once] == [(t.obj, t.provenance) for t in triples]


def test_members_are_connected_above_threshold(crafted):
    cfg = ConsolidationConfig()
    vec = {k: v for k, v in PARTNER.items()}
    for c in cluster_labels(PARTNER, crafted, cfg):
        ms = sorted(c.members)
        if len(ms) == 1:
            continue
        for m in ms:
            assert any(vec[m] @ vec[o] >= cfg.threshold for o in ms if o != m)


def test_label_map_and_json_round_trip(crafted, tmp_path):
    clusters = cluster_labels(PARTNER, crafted)
    assert label_map(clusters)["Working together with"] == "Partnership with"
    write_clusters(clusters, tmp_path / "c.json", "predicate")
    doc = json.loads((tmp_path / "c.json").read_text())
    assert doc["kind"] == "predicate"
    assert set(doc["clusters"][0]) == {"label", "members"}
    assert read_clusters(tmp_path / "c.json") == clusters
