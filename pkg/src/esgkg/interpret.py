"""Regression of ESG scores on disclosure features, with linear SHAP attributions."""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from numba import njit
from scipy.stats import norm

from .analytics import company_entropy
from .clients import TITLE_INSTRUCTION, EmbeddingClient
from .errors import (ColumnMismatch, EmptyCohort, EmptyGrid, MissingRecord, NonConvergence,
                     TooFewSamples, UnmappablePillar, ZeroVariance)
from .extraction import EsgTriple
from .graph import build_kg

log = logging.getLogger(__name__)

NUMERIC_FIELDS = ("incorporation_year", "employees", "market_cap", "ebitda", "liabilities")
DUMMY_FIELDS = ("sector", "country", "region", "continent")
PILLARS = ("E", "S", "G")


@dataclass(frozen=True)
class CompanyRecord:
    company_id: str
    esg_combined: float
    env_score: float
    social_score: float
    gov_score: float
    sector: str
    industry: str
    country: str
    region: str
    subregion: str
    continent: str
    incorporation_year: int
    employees: int
    market_cap: float
    ebitda: float
    liabilities: float

    def __post_init__(self):
        for name in ("esg_combined", "env_score", "social_score", "gov_score"):
            if not 0 <= getattr(self, name) <= 100:
                raise ValueError(f"{self.company_id}: {name} must lie in [0, 100]")


RECORD_FIELDS = tuple(CompanyRecord.__dataclass_fields__)


def read_records(path: str | Path) -> list[CompanyRecord]:
    types = {f: t for f, t in CompanyRecord.__annotations__.items()}
    conv = {"str": str, "float": float, "int": int}
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(CompanyRecord(**{f: conv[types[f]](row[f]) for f in RECORD_FIELDS}))
    return out


def load_pillar_map(path: str | Path) -> dict[str, str]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    bad = {k: v for k, v in data.items() if v not in PILLARS}
    if bad:
        raise ValueError(f"pillar map values must be E, S or G: {bad}")
    return data


# --------------------------------------------------------------------------
# features

@dataclass
class FeatureMatrix:
    rows: list[str]
    columns: list[str]
    values: np.ndarray
    column_kinds: list[str]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["company_id", *self.columns])
            for rid, row in zip(self.rows, self.values):
                w.writerow([rid, *(repr(float(x)) for x in row)])


def top_categories(counts: Counter, k: int = 10) -> list[str]:
    return [c for c, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:k]]


def map_pillars(categories: Sequence[str], pillar_map: Mapping[str, str],
                client: EmbeddingClient | None = None, floor: float = 0.5) -> dict[str, str]:
    """Pillar of each extracted category, via the nearest reference category."""
    lower = {k.lower(): v for k, v in pillar_map.items()}
    out, unresolved = {}, []
    for c in categories:
        if c.lower() in lower:
            out[c] = lower[c.lower()]
        else:
            unresolved.append(c)
    if unresolved:
        if client is None:
            raise UnmappablePillar(f"no embedding client to map {unresolved}")
        refs = list(pillar_map)
        R = client.embed(TITLE_INSTRUCTION, refs)
        Q = client.embed(TITLE_INSTRUCTION, unresolved)
        sims = Q @ R.T
        for c, row in zip(unresolved, sims):
            j = int(np.argmax(row))
            if row[j] < floor:
                raise UnmappablePillar(f"{c!r}: best reference {refs[j]!r} at {row[j]:.3f} < {floor}")
            out[c] = pillar_map[refs[j]]
    return out


def standardize(x: np.ndarray) -> np.ndarray:
    sd = x.std()
    return np.zeros_like(x) if sd == 0 else (x - x.mean()) / sd


def build_features(triples: Sequence[EsgTriple], records: Sequence[CompanyRecord],
                   pillar_map: Mapping[str, str], client: EmbeddingClient | None = None,
                   top_k: int = 10, pillar_floor: float = 0.5) -> FeatureMatrix:
    by_company: dict[str, list[EsgTriple]] = {}
    for t in triples:
        by_company.setdefault(t.company_id, []).append(t)
    records = sorted(records, key=lambda r: r.company_id)
    for r in records:
        if r.company_id not in by_company:
            raise MissingRecord(f"no triples for company {r.company_id!r}")
    ids = [r.company_id for r in records]
    extra = sorted(set(by_company) - set(ids))
    if extra:
        log.info("ignoring %d companies without records: %s", len(extra), extra)

    kept = [t for c in ids for t in by_company[c]]
    cat_counts = {c: Counter(t.cat for t in by_company[c]) for c in ids}
    tops = {c: top_categories(cat_counts[c], top_k) for c in ids}
    pillar_of = map_pillars(sorted({t.cat for t in kept}), pillar_map, client, pillar_floor)
    kg = build_kg(kept)
    h_cat = company_entropy(kg, "category", ids)
    h_act = company_entropy(kg, "action", ids)

    cols: list[tuple[str, str, np.ndarray]] = []
    for cat in sorted({c for top in tops.values() for c in top}):
        v = np.array([cat_counts[c][cat] / len(by_company[c]) if cat in tops[c] else 0.0 for c in ids])
        cols.append((f"Category:{cat}", "category_share", v))
    for p in PILLARS:
        v = np.array([sum(n for cat, n in cat_counts[c].items() if pillar_of[cat] == p) / len(by_company[c])
                      for c in ids])
        cols.append((f"Pillar:{p}", "pillar_share", v))
    cols.append(("Entropy:Category", "entropy", np.array([h_cat[c] for c in ids])))
    cols.append(("Entropy:Action", "entropy", np.array([h_act[c] for c in ids])))
    for f in NUMERIC_FIELDS:
        raw = np.array([float(getattr(r, f)) for r in records])
        cols.append((f, "numeric_financial", standardize(raw)))
    for f in DUMMY_FIELDS:
        levels = sorted({getattr(r, f) for r in records})
        for lev in levels:
            cols.append((f"{f.capitalize()}:{lev}", "dummy",
                         np.array([1.0 if getattr(r, f) == lev else 0.0 for r in records])))
    values = np.column_stack([v for _, _, v in cols]) if ids else np.zeros((0, len(cols)))
    return FeatureMatrix(ids, [n for n, _, _ in cols], values, [k for _, k, _ in cols])


# --------------------------------------------------------------------------
# elastic net

DEFAULT_ALPHAS = (0.001, 0.01, 0.1, 1.0, 10.0)
DEFAULT_L1_RATIOS = (0.1, 0.5, 0.9)


def elastic_net_objective(X, y, beta, intercept, alpha, l1_ratio) -> float:
    r = y - X @ beta - intercept
    penalty = l1_ratio * np.abs(beta).sum() + 0.5 * (1 - l1_ratio) * (beta @ beta)
    return float(r @ r / (2 * len(y)) + alpha * penalty)


@dataclass
class CDResult:
    beta: np.ndarray
    intercept: float
    converged: bool
    sweeps: int


@njit(cache=True)
def _cd_sweeps(X, y, col_sq, beta, b0, l1, l2, tol, n_sweeps):
    """Run up to ``n_sweeps`` cyclic sweeps in place on ``beta``.

    Returns (intercept, sweeps done, converged). Each sweep first sets the
    intercept to its exact minimizer, then visits every coefficient in order.
    """
    N, p = X.shape
    r = np.empty(N)
    for i in range(N):
        acc = y[i] - b0
        for j in range(p):
            acc -= X[i, j] * beta[j]
        r[i] = acc
    for sweep in range(1, n_sweeps + 1):
        shift = 0.0
        for i in range(N):
            shift += r[i]
        shift /= N
        for i in range(N):
            r[i] -= shift
        b0 += shift
        change = abs(shift)
        for j in range(p):
            denom = col_sq[j] + l2
            old = beta[j]
            new = 0.0
            if denom > 0:
                rho = 0.0
                for i in range(N):
                    rho += X[i, j] * r[i]
                rho = rho / N + col_sq[j] * old
                mag = abs(rho) - l1
                if mag > 0:
                    new = (mag if rho > 0 else -mag) / denom
            delta = new - old
            if delta != 0.0:
                for i in range(N):
                    r[i] -= X[i, j] * delta
                beta[j] = new
                if abs(delta) > change:
                    change = abs(delta)
        if change < tol:
            return b0, sweep, True
    return b0, n_sweeps, False


def coordinate_descent(X: np.ndarray, y: np.ndarray, alpha: float, l1_ratio: float,
                       tol: float = 1e-7, max_sweeps: int = 10_000,
                       on_sweep: Callable[[np.ndarray, float], None] | None = None,
                       beta0: np.ndarray | None = None, intercept0: float = 0.0) -> CDResult:
    """Cyclic coordinate descent on the elastic-net objective with a free intercept.

    Stops when no coefficient (intercept included) moves by ``tol`` or more
    in a sweep. ``on_sweep(beta, intercept)`` is called after every sweep;
    ``beta0``/``intercept0`` warm-start the iterate.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError(f"X {X.shape} and y {y.shape} do not align")
    if alpha < 0 or not 0 <= l1_ratio <= 1:
        raise ValueError("need alpha >= 0 and l1_ratio in [0, 1]")
    N, p = X.shape
    l1 = alpha * l1_ratio
    l2 = alpha * (1 - l1_ratio)
    col_sq = (X ** 2).sum(axis=0) / N
    beta = np.zeros(p) if beta0 is None else np.array(beta0, dtype=np.float64)
    b0 = float(intercept0)
    if on_sweep is None:
        b0, sweeps, ok = _cd_sweeps(X, y, col_sq, beta, b0, l1, l2, tol, max_sweeps)
    else:
        sweeps, ok = 0, False
        while sweeps < max_sweeps and not ok:
            b0, _, ok = _cd_sweeps(X, y, col_sq, beta, b0, l1, l2, tol, 1)
            sweeps += 1
            on_sweep(beta.copy(), b0)
    if not ok:
        warnings.warn(f"coordinate descent did not converge in {max_sweeps} sweeps", NonConvergence)
    return CDResult(beta, float(b0), bool(ok), int(sweeps))


@dataclass
class LinearModel:
    intercept: float
    weights: np.ndarray
    columns: list[str]
    alpha: float
    l1_ratio: float
    seed: int | None = None
    converged: bool = True
    cv_errors: dict[tuple[float, float], float] = field(default_factory=dict)

    def predict(self, X) -> np.ndarray:
        X = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
        return X @ self.weights + self.intercept

    def to_dict(self) -> dict:
        return {
            "intercept": self.intercept,
            "weights": {c: float(w) for c, w in zip(self.columns, self.weights)},
            "alpha": self.alpha,
            "l1_ratio": self.l1_ratio,
            "seed": self.seed,
            "converged": self.converged,
            "cv_errors": [{"alpha": a, "l1_ratio": r, "mse": e} for (a, r), e in self.cv_errors.items()],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LinearModel":
        cols = list(d["weights"])
        return cls(d["intercept"], np.array([d["weights"][c] for c in cols]), cols,
                   d["alpha"], d["l1_ratio"], d.get("seed"), d.get("converged", True),
                   {(e["alpha"], e["l1_ratio"]): e["mse"] for e in d.get("cv_errors", [])})


def fold_assignment(n: int, folds: int, seed: int) -> np.ndarray:
    """Seeded shuffle, then round-robin fold labels."""
    order = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=int)
    labels[order] = np.arange(n) % folds
    return labels


def fit_elastic_net(X, y, alphas: Sequence[float] = DEFAULT_ALPHAS,
                    l1_ratios: Sequence[float] = DEFAULT_L1_RATIOS, folds: int = 8,
                    seed: int = 0, tol: float = 1e-7, max_sweeps: int = 10_000) -> LinearModel:
    """Grid-search (alpha, l1_ratio) by k-fold CV error, then refit on all rows."""
    columns = list(X.columns) if isinstance(X, FeatureMatrix) else [f"x{j}" for j in range(np.shape(X)[1])]
    Xv = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not alphas or not l1_ratios:
        raise EmptyGrid("alpha and l1_ratio grids must be non-empty")
    if not np.all(np.isfinite(y)):
        raise ValueError("y must be finite")
    if len(y) < folds:
        raise ValueError(f"{len(y)} rows cannot be split into {folds} folds")
    labels = fold_assignment(len(y), folds, seed)
    cv = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergence)
        for a in alphas:
            for rho in l1_ratios:
                errs = []
                for k in range(folds):
                    tr, te = labels != k, labels == k
                    res = coordinate_descent(Xv[tr], y[tr], a, rho, tol, max_sweeps)
                    pred = Xv[te] @ res.beta + res.intercept
                    errs.append(float(np.mean((y[te] - pred) ** 2)))
                cv[(float(a), float(rho))] = float(np.mean(errs))
    best = min(cv, key=cv.get)  # first in grid order on ties
    res = coordinate_descent(Xv, y, best[0], best[1], tol, max_sweeps)
    return LinearModel(res.intercept, res.beta, columns, best[0], best[1], seed, res.converged, cv)


# --------------------------------------------------------------------------
# SHAP

@dataclass(frozen=True)
class ShapExplanation:
    base_value: float
    phi: np.ndarray
    columns: tuple[str, ...]
    prediction: float


def shap_linear(model: LinearModel, X, row) -> ShapExplanation:
    """Exact SHAP values of a linear model with independent features.

    ``X`` is the training matrix (its column means define the baseline);
    ``row`` is a row index into ``X`` or a feature vector.
    """
    Xv = X.values if isinstance(X, FeatureMatrix) else np.asarray(X, dtype=float)
    if isinstance(X, FeatureMatrix) and list(X.columns) != list(model.columns):
        raise ColumnMismatch("feature columns differ from the model's")
    if Xv.shape[1] != len(model.weights):
        raise ColumnMismatch(f"{Xv.shape[1]} columns vs {len(model.weights)} weights")
    x = Xv[row] if isinstance(row, (int, np.integer)) else np.asarray(row, dtype=float)
    if x.shape != (len(model.weights),):
        raise ColumnMismatch(f"row has shape {x.shape}")
    # column by column, so a value taken as X[:, j].mean() gives phi exactly 0
    mean = np.ascontiguousarray(Xv.T).mean(axis=1)
    base = float(model.intercept + mean @ model.weights)
    phi = model.weights * (x - mean)
    return ShapExplanation(base, phi, tuple(model.columns), float(x @ model.weights + model.intercept))


def shap_summary(explanations: Sequence[ShapExplanation],
                 mask: Sequence[bool] | None = None) -> dict[str, dict[str, float]]:
    if not explanations:
        raise ValueError("no explanations to summarize")
    chosen = list(explanations) if mask is None else [e for e, keep in zip(explanations, mask) if keep]
    if not chosen:
        raise EmptyCohort("the cohort filter selected no rows")
    phi = np.vstack([e.phi for e in chosen])
    return {
        col: {"mean_phi": float(phi[:, j].mean()),
              "mean_abs_phi": float(np.abs(phi[:, j]).mean()),
              "median_phi": float(np.median(phi[:, j]))}
        for j, col in enumerate(chosen[0].columns)
    }


# --------------------------------------------------------------------------
# diagnostics

def metrics_from_predictions(y, y_pred) -> dict[str, float]:
    y = np.asarray(y, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    if len(y) < 2:
        raise TooFewSamples("need at least two rows")
    resid = y - y_pred
    ss_tot = float(((y - y.mean()) ** 2).sum())
    if ss_tot == 0:
        raise ZeroVariance("y is constant")
    return {
        "r2": 1.0 - float(resid @ resid) / ss_tot,
        "rmse": math.sqrt(float(np.mean(resid ** 2))),
        "wmape": float(np.abs(resid).sum() / np.abs(y).sum()),
    }


def regression_metrics(model: LinearModel, X, y) -> dict[str, float]:
    return metrics_from_predictions(y, model.predict(X))


def anderson_darling_statistic(x) -> float:
    """A-squared against a normal with mean and sd estimated from ``x``."""
    x = np.sort(np.asarray(x, dtype=float))
    n = len(x)
    sd = x.std(ddof=1)
    if sd == 0:
        raise TooFewSamples("residuals have zero variance")
    z = (x - x.mean()) / sd
    i = np.arange(1, n + 1)
    return float(-n - np.sum((2 * i - 1) * (norm.logcdf(z) + norm.logsf(z[::-1]))) / n)


def _ad_pvalue(a: float) -> float:
    if a >= 0.6:
        p = math.exp(1.2937 - 5.709 * a + 0.0186 * a * a)
    elif a >= 0.34:
        p = math.exp(0.9177 - 4.279 * a - 1.38 * a * a)
    elif a >= 0.2:
        p = 1 - math.exp(-8.318 + 42.796 * a - 59.938 * a * a)
    else:
        p = 1 - math.exp(-13.436 + 101.14 * a - 223.73 * a * a)
    return min(max(p, 0.0), 1.0)


def residual_normality(residuals) -> dict[str, float]:
    """Anderson-Darling normality test with estimated mean and variance.

    The statistic is corrected for sample size by ``1 + 0.75/n + 2.25/n**2``
    and the p-value comes from the piecewise exponential approximation for
    that case.
    """
    r = np.asarray(residuals, dtype=float)
    n = len(r)
    if n < 8:
        raise TooFewSamples(f"need at least 8 residuals, got {n}")
    a2 = anderson_darling_statistic(r)
    adj = a2 * (1 + 0.75 / n + 2.25 / n ** 2)
    return {"ad_statistic": adj, "p_value": _ad_pvalue(adj)}


# --------------------------------------------------------------------------
# files

def write_shap(ids: Sequence[str], explanations: Sequence[ShapExplanation], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["company_id", "feature", "phi"])
        for cid, e in zip(ids, explanations):
            for col, v in zip(e.columns, e.phi):
                w.writerow([cid, col, repr(float(v))])
