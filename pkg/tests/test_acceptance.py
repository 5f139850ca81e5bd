"""One test per primary acceptance criterion.

Each test records a PASS/FAIL line (printed in the terminal summary) before
asserting, so a failing criterion still reports its measured numbers.
"""

import filecmp
import math
import shutil
import time
import warnings

import numpy as np

import oracles
from conftest import ACCEPTANCE, REPO, SYNTHETIC
from esgkg.analytics import (
    betweenness_centrality, closeness_centrality, degree_centrality, kendall_tau, null_adjusted_similarity,
    shannon_entropy, ActionSet,
)
from esgkg.cli import main
from esgkg.errors import DegenerateInput, NonConvergence
from esgkg.extraction import (
    EsgTriple, canonical_category, canonical_object, canonical_predicate, compile_prompt, default_examples,
    default_schema, parse_response, serialize_triples,
)
from esgkg.graph import BipartiteGraph
from esgkg.interpret import (
    CompanyRecord, build_features, coordinate_descent, elastic_net_objective, fit_elastic_net,
    load_pillar_map, metrics_from_predictions, residual_normality, shap_linear,
)
from esgkg.pipeline import DATA_DIR

GOLDEN = REPO / "tests" / "golden"
GOLDEN_SENTENCE = "We reduced plastic packaging by 30 percent across our stores."


def record(name, ok, detail):
    ACCEPTANCE[name] = (bool(ok), detail)
    assert ok, detail


def test_centrality_oracle_equivalence():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, largest = 0.0, 0
    for _ in range(200):
        B = oracles.random_bipartite(rng, max_nodes=12)
        largest = max(largest, sum(B.shape))
        g = BipartiteGraph(tuple(f"l{i}" for i in range(B.shape[0])), tuple(f"r{j}" for j in range(B.shape[1])), B)
        for got, want in ((degree_centrality(g), oracles.degree_oracle(B)),
                          (closeness_centrality(g), oracles.closeness_oracle(B)),
                          (betweenness_centrality(g), oracles.betweenness_oracle(B))):
            worst = max(worst, float(np.max(np.abs(got - np.asarray(want)))))
    elapsed = time.perf_counter() - t0
    record("centralities", worst <= 1e-9 and elapsed < 10 and largest <= 12,
           f"200 graphs (n+m <= {largest}), max abs error {worst:.2e}, {elapsed:.2f} s")


def test_entropy():
    uniform = max(abs(shannon_entropy([1] * n) - math.log(n)) for n in range(2, 51))
    five = shannon_entropy([7, 7, 7, 7, 7])
    record("entropy", uniform <= 1e-12 and abs(five - 1.61) <= 5e-3,
           f"uniform max error {uniform:.1e}; five at 20% = {five:.4f} vs printed 1.61")


def test_jaccard_null_model():
    pool = [f"A{i}" for i in range(6)]
    sets = [ActionSet("x", frozenset(pool[:3])), ActionSet("y", frozenset(pool[1:4]))]
    res = null_adjusted_similarity(sets, pool, sims=1000, seed=42)
    exact = oracles.exhaustive_null_jaccard(6, 3, 3)
    gap = abs(res.null[0, 1] - exact)
    record("jaccard_null", gap <= 0.02, f"simulated {res.null[0, 1]:.4f} vs exhaustive {exact:.4f} (gap {gap:.4f})")


def test_kendall_tau():
    rng = np.random.default_rng(7)
    mismatches, tied = 0, 0
    for _ in range(500):
        n = int(rng.integers(2, 51))
        hi = int(rng.integers(2, 12))
        x, y = rng.integers(0, hi, n).tolist(), rng.integers(0, hi, n).tolist()
        nc, nd = oracles.kendall_pairs_oracle(x, y)
        tied += len(set(x)) < n or len(set(y)) < n
        if nc + nd == 0:
            try:
                kendall_tau(x, y)
                mismatches += 1
            except DegenerateInput:
                pass
            continue
        r = kendall_tau(x, y)
        if (r.concordant, r.discordant) != (nc, nd) or r.tau != (nc - nd) / (nc + nd):
            mismatches += 1
    perm = rng.permutation(30).astype(float)
    aligned = kendall_tau(perm, 2 * perm + 1).tau
    anti = kendall_tau(perm, -perm).tau
    record("kendall", mismatches == 0 and aligned == 1.0 and anti == -1.0,
           f"500 sequences ({tied} with ties), {mismatches} mismatches; tau aligned {aligned}, anti {anti}")


def test_elastic_net():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    X = rng.normal(size=(30, 8))
    beta = rng.normal(size=8)
    res = coordinate_descent(X, X @ beta - 0.7, 0.0, 0.5)
    recovery = float(max(np.max(np.abs(res.beta - beta)), abs(res.intercept + 0.7)))

    y_noisy = X @ beta + np.random.default_rng(12).normal(size=30)
    values = []
    coordinate_descent(X, y_noisy, 0.05, 0.5,
                       on_sweep=lambda b, b0: values.append(elastic_net_objective(X, y_noisy, b, b0, 0.05, 0.5)))
    rises = sum(b > a + 1e-12 for a, b in zip(values, values[1:]))

    gaps = []
    for k in range(20):
        r = np.random.default_rng(100 + k)
        N, p = int(r.integers(10, 31)), int(r.integers(2, 9))
        Xk = r.normal(size=(N, p))
        yk = Xk @ (r.normal(size=p) * (r.uniform(size=p) < 0.6)) + r.normal(size=N)
        alpha, rho = float(10 ** r.uniform(-3, 0)), float(r.choice([0.1, 0.5, 0.9, 1.0]))
        cd = coordinate_descent(Xk, yk, alpha, rho)
        ob, ob0 = oracles.enet_fista(Xk, yk, alpha, rho)
        gaps.append(abs(elastic_net_objective(Xk, yk, cd.beta, cd.intercept, alpha, rho)
                        - oracles.enet_objective(Xk, yk, ob, ob0, alpha, rho)))
    elapsed = time.perf_counter() - t0
    ok = recovery <= 1e-6 and rises == 0 and max(gaps) <= 1e-6 and elapsed < 30
    record("elastic_net", ok, f"recovery {recovery:.1e}; {rises} objective rises over {len(values)} sweeps; "
                              f"max oracle gap {max(gaps):.1e} on 20 instances; {elapsed:.2f} s")


def test_linear_shap():
    worst, fits, rows = 0.0, 0, 0
    mean_phi, zero_phi = [], []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergence)
        for k in range(10):
            r = np.random.default_rng(300 + k)
            X = r.normal(size=(24, 6))
            y = X @ r.normal(size=6) + r.normal(size=24)
            model = fit_elastic_net(X, y, (0.01, 0.1, 1.0), (0.5, 1.0), folds=8, seed=k)
            fits += 1
            pred = model.predict(X)
            for i in range(len(X)):
                e = shap_linear(model, X, i)
                worst = max(worst, abs(e.base_value + e.phi.sum() - pred[i]))
                rows += 1
            x = X[0].copy()
            x[3] = X[:, 3].mean()
            mean_phi.append(shap_linear(model, X, x).phi[3])
            zero_phi.extend(shap_linear(model, X, 0).phi[model.weights == 0])
    ok = worst <= 1e-9 and all(v == 0 for v in mean_phi) and all(v == 0 for v in zero_phi)
    record("linear_shap", ok, f"{rows} rows over {fits} fits, max additivity error {worst:.1e}; "
                              f"mean-valued phi max {max(map(abs, mean_phi)):.1e}; {len(zero_phi)} zero-weight phi all 0")


def test_regression_metrics():
    m = metrics_from_predictions([10, 20], [11, 18])
    y = np.array([3.0, 5.0, 9.0, 1.0])
    perfect = metrics_from_predictions(y, y)["r2"]
    const = metrics_from_predictions(y, np.full(4, y.mean()))["r2"]
    ok = abs(m["rmse"] - 1.5811) <= 1e-4 and m["wmape"] == 0.1 and perfect == 1.0 and const == 0.0
    record("regression_metrics", ok, f"rmse {m['rmse']:.5f}, wmape {m['wmape']!r}, r2 {perfect} and {const}")


def test_residual_normality():
    p_norm = residual_normality(np.random.default_rng(42).normal(size=1000))["p_value"]
    p_unif = residual_normality(np.random.default_rng(42).uniform(size=1000))["p_value"]
    record("residual_normality", p_norm > 0.05 and p_unif < 0.01, f"normal p {p_norm:.3f}, uniform p {p_unif:.2e}")


def test_prompt_golden_files():
    schema, examples = default_schema(), default_examples()
    full = compile_prompt(schema, examples, GOLDEN_SENTENCE)
    no_ex = compile_prompt(schema, examples, GOLDEN_SENTENCE, include_examples=False)
    no_schema = compile_prompt(schema, examples, GOLDEN_SENTENCE, include_schema=False)
    match = [full.encode() == (GOLDEN / "prompt_full.txt").read_bytes(),
             no_ex.encode() == (GOLDEN / "prompt_no_examples.txt").read_bytes(),
             no_schema.encode() == (GOLDEN / "prompt_no_schema.txt").read_bytes()]
    ex_block = full[full.index("input: " + examples[0].input):full.rindex("\n\ninput: ")]
    exact = (full.replace("\n\n" + ex_block, "") == no_ex
             and full.replace("\n\n" + schema.render(), "") == no_schema)
    tag = "Wrap the JSON in <json> tags" in full
    record("prompt_golden", all(match) and exact and tag,
           f"byte matches {match}; ablations drop exactly their block: {exact}; json-tag instruction present: {tag}")


def _random_triples(rng):
    alphabet = list("abcdefghijklmnop qrstuvwxyz-'\",&%0123456789éü") + ["ESG", "CO2", " of", " and "]
    def text():
        s = "".join(rng.choice(alphabet, size=int(rng.integers(1, 12))))
        return s if s.strip(" -") else "x" + s
    return [EsgTriple(canonical_category(text()), canonical_predicate(text()), canonical_object(text()))
            for _ in range(int(rng.integers(0, 8)))]


def test_parser_round_trip():
    rng = np.random.default_rng(5)
    failures = 0
    for _ in range(100):
        ts = _random_triples(rng)
        failures += parse_response(serialize_triples(ts)).triples != ts
    sample_reply = ('<json>{"esg actions": [{"esg_category": "Supply Chain", "predicate": "Review of", '
               '"object": "Our supply chain responsibility and risk assessment"}]}</json>')
    got = parse_response(sample_reply).triples
    want = [EsgTriple("Supply Chain", "Review of", "Our supply chain responsibility and risk assessment")]
    record("parser_round_trip", failures == 0 and got == want,
           f"{100 - failures}/100 lists round-trip; sample model reply parses to {got[0].cat}/{got[0].pred}")


def _diff(a, b):
    cmp = filecmp.dircmp(a, b, ignore=[".cache"])
    out = [f"{p}" for p in cmp.left_only + cmp.right_only + cmp.funny_files]
    _, mismatch, errors = filecmp.cmpfiles(a, b, cmp.common_files, shallow=False)
    out += mismatch + errors
    for sub in cmp.common_dirs:
        out += [f"{sub}/{x}" for x in _diff(a / sub, b / sub)]
    return out


def test_end_to_end_determinism(tmp_path, monkeypatch):
    monkeypatch.delenv("EMBED_URL", raising=False)
    monkeypatch.delenv("LLM_URL", raising=False)
    outs, times = [], []
    for k in range(2):
        dst = tmp_path / f"corpus{k}"
        shutil.copytree(SYNTHETIC, dst)
        cfg = dst / "config.yaml"
        cfg.write_text(cfg.read_text().replace("output_dir: ../../runs/synthetic", f"output_dir: {tmp_path / f'out{k}'}"))
        t0 = time.perf_counter()
        code = main(["all", "--config", str(cfg), "--seed", "42"])
        times.append(time.perf_counter() - t0)
        assert code == 0
        outs.append(tmp_path / f"out{k}")
    diffs = _diff(*outs)
    n_files = sum(1 for p in outs[0].rglob("*") if p.is_file() and ".cache" not in p.parts)
    record("e2e_determinism", not diffs and max(times) < 60,
           f"{n_files} artifacts, {len(diffs)} differ {diffs[:3]}; runs {times[0]:.1f} s and {times[1]:.1f} s")


def test_feature_construction():
    rec = CompanyRecord("acme", 60.0, 60.0, 60.0, 60.0, "Energy", "Utilities", "Germany", "EMEA",
                        "Western Europe", "Europe", 1950, 100, 1e9, 1e8, 5e8)
    cats = ["Waste"] + ["Water"] * 2 + ["Energy"] * 2 + ["Biodiversity"] * 2 + ["Human Rights"] * 3
    triples = [EsgTriple(c, "Use of", f"o{i}", "acme", i) for i, c in enumerate(cats)]
    fm = build_features(triples, [rec], load_pillar_map(DATA_DIR / "pillar_map.json"))
    v = float(fm.column("Category:Waste")[0])
    record("feature_construction", v == 0.1, f"Category:Waste = {v!r} for 1 of 10 triples")
