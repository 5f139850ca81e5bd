"""Schema-driven prompting of a generative model for ESG triples."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .clients import GenerationClient, GenerationConfig
from .errors import MalformedResponse, ResponseTooLong
from .ingest import Sentence

log = logging.getLogger(__name__)

PREAMBLE = (
    "Your goal is to extract structured information from the user's input that matches "
    "the form described below. When extracting information please make sure it matches "
    "the type of information exactly. Do not add any attributes that do not appear in the "
    "schema shown below."
)
INSTRUCTIONS = (
    "Please output the extracted information in JSON format. Do not output anything except "
    "for the extracted information. Do not add any clarifying information. Do not add any "
    "fields that are not in the schema. If the text contains attributes that do not appear "
    "in the schema, please ignore them. All output must be in JSON format and follow the "
    "schema specified above. Wrap the JSON in <json> tags."
)

ROOT_KEY = "esg_actions"
CATEGORY_KEYS = ("esg_category", "esg category")
ROOT_KEYS = ("esg_actions", "esg actions")


# --------------------------------------------------------------------------
# canonical strings

_SMALL_WORDS = frozenset("a an and as at by for from in nor of on or per the to via with".split())
_WS = re.compile(r"\s+")


def _squash(s: str) -> str:
    return _WS.sub(" ", s).strip()


def _cap(word: str) -> str:
    return word[:1].upper() + word[1:]


def canonical_category(s: str) -> str:
    words = _squash(s).split(" ")
    return " ".join(
        w.lower() if i and w.lower() in _SMALL_WORDS else "-".join(_cap(p) for p in w.split("-"))
        for i, w in enumerate(words)
    )


def canonical_predicate(s: str) -> str:
    return _cap(_squash(s))


canonical_object = canonical_predicate


# --------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class EsgTriple:
    cat: str
    pred: str
    obj: str
    company_id: str | None = None
    doc_index: int | None = None

    @property
    def action(self) -> str:
        return action_label(self.cat, self.pred)

    @property
    def provenance(self) -> tuple[str | None, int | None]:
        return (self.company_id, self.doc_index)

    def with_provenance(self, company_id: str, doc_index: int) -> "EsgTriple":
        return EsgTriple(self.cat, self.pred, self.obj, company_id, doc_index)

    def to_dict(self) -> dict:
        return {"company_id": self.company_id, "doc_index": self.doc_index,
                "cat": self.cat, "pred": self.pred, "obj": self.obj}

    @classmethod
    def from_dict(cls, d: dict) -> "EsgTriple":
        return cls(d["cat"], d["pred"], d["obj"], d.get("company_id"), d.get("doc_index"))


def action_label(cat: str, pred: str) -> str:
    """Canonical action string, e.g. ``WASTE:Investment in``."""
    return f"{cat.upper()}:{pred}"


@dataclass(frozen=True)
class SchemaAttribute:
    name: str
    description: str


@dataclass(frozen=True)
class SemanticSchema:
    attributes: tuple[SchemaAttribute, ...]
    root: str = ROOT_KEY
    root_description: str = "ESG-related actions disclosed in the input"

    def __post_init__(self):
        names = tuple(a.name for a in self.attributes)
        if names != ("esg_category", "predicate", "object"):
            raise ValueError(f"schema attributes must be esg_category, predicate, object; got {names}")
        if any(not a.description.strip() for a in self.attributes):
            raise ValueError("schema descriptions must be non-empty")

    def render(self) -> str:
        lines = ["```TypeScript", "", f"{self.root}: Array<{{ // {self.root_description}"]
        lines += [f" {a.name}: string // {a.description}" for a in self.attributes]
        lines += ["}>", "```"]
        return "\n".join(lines)


def default_schema(categories: Sequence[str] | None = None) -> SemanticSchema:
    if categories is None:
        categories = default_categories()
    cat_desc = ("an issue related to an ESG aspect, for example one of the following ESG categories: "
                + ", ".join(categories))
    return SemanticSchema((
        SchemaAttribute("esg_category", cat_desc),
        SchemaAttribute("predicate", "a nominalised verb affecting that aspect"),
        SchemaAttribute("object", "an entity undergoing the predicate"),
    ))


@dataclass(frozen=True)
class LabelledExample:
    input: str
    output: tuple[EsgTriple, ...]

    def to_dict(self) -> dict:
        return {"input": self.input, "output": [_triple_payload(t) for t in self.output]}


def _triple_payload(t: EsgTriple) -> dict:
    return {"esg_category": t.cat, "predicate": t.pred, "object": t.obj}


def load_examples(path: str | Path) -> list[LabelledExample]:
    with Path(path).open(encoding="utf-8") as fh:
        data = json.load(fh)
    return [
        LabelledExample(d["input"], tuple(
            EsgTriple(o["esg_category"], o["predicate"], o["object"]) for o in d["output"]))
        for d in data
    ]


def _data_file(name: str):
    return resources.files("esgkg") / "data" / name


def default_examples() -> list[LabelledExample]:
    with resources.as_file(_data_file("examples.json")) as p:
        return load_examples(p)


def default_categories() -> list[str]:
    text = _data_file("categories.txt").read_text(encoding="utf-8")
    return [line.strip() for line in text.splitlines() if line.strip()]


# --------------------------------------------------------------------------
# prompts and responses

def serialize_triples(triples: Iterable[EsgTriple]) -> str:
    payload = {ROOT_KEY: [_triple_payload(t) for t in triples]}
    return "<json>" + json.dumps(payload, ensure_ascii=False) + "</json>"


def compile_prompt(schema: SemanticSchema, examples: Sequence[LabelledExample], input: str,
                   include_schema: bool = True, include_examples: bool = True) -> str:
    if not input:
        raise ValueError("input must be non-empty")
    blocks = [PREAMBLE]
    if include_schema:
        blocks.append(schema.render())
    blocks.append(INSTRUCTIONS)
    if include_examples and examples:
        blocks.append("\n".join(
            f"input: {ex.input}\noutput: {serialize_triples(ex.output)}" for ex in examples))
    blocks.append(f"input: {input}\noutput:")
    return "\n\n".join(blocks)


@dataclass
class ParsedResponse:
    triples: list[EsgTriple] = field(default_factory=list)
    skipped: int = 0


_JSON_SPAN = re.compile(r"<json>(.*?)(?:</json>|$)", re.S)


def _first(d: dict, keys):
    for k in keys:
        if k in d:
            return d[k]
    return None


def parse_response(raw: str) -> ParsedResponse:
    """Triples from the first ``<json>`` span of a model reply.

    Raises MalformedResponse when there is no span or it is not valid JSON.
    Items missing an attribute are skipped and counted in ``skipped``.
    """
    m = _JSON_SPAN.search(raw)
    if m is None:
        raise MalformedResponse("no <json> span in response")
    try:
        payload = json.loads(m.group(1))
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"invalid JSON: {exc}") from exc

    if isinstance(payload, list):
        items = payload
    elif isinstance(payload, dict):
        items = _first(payload, ROOT_KEYS)
        if items is None:
            # a single bare triple object
            items = [payload] if _first(payload, CATEGORY_KEYS) is not None else []
        elif isinstance(items, dict):
            items = [items]
        elif not isinstance(items, list):
            raise MalformedResponse(f"{ROOT_KEY} must be an array")
    else:
        raise MalformedResponse("JSON payload must be an object or an array")

    out = ParsedResponse()
    for item in items:
        if not isinstance(item, dict):
            out.skipped += 1
            continue
        values = (_first(item, CATEGORY_KEYS), item.get("predicate"), item.get("object"))
        if not all(isinstance(v, str) and v.strip() for v in values):
            out.skipped += 1
            continue
        cat, pred, obj = values
        out.triples.append(EsgTriple(canonical_category(cat), canonical_predicate(pred),
                                     canonical_object(obj)))
    return out


# --------------------------------------------------------------------------
# extraction

@dataclass
class ExtractionReport:
    triples: list[EsgTriple]
    n_sentences: int
    n_yielding: int
    n_malformed: int
    n_skipped_items: int

    @property
    def coverage(self) -> float:
        return self.n_yielding / self.n_sentences if self.n_sentences else 0.0


def run_extraction(sentences: Sequence[Sentence], client: GenerationClient,
                   schema: SemanticSchema | None = None,
                   examples: Sequence[LabelledExample] | None = None,
                   cfg: GenerationConfig = GenerationConfig(),
                   include_schema: bool = True, include_examples: bool = True) -> ExtractionReport:
    schema = schema if schema is not None else default_schema()
    examples = examples if examples is not None else default_examples()

    def one(sentence: Sentence):
        prompt = compile_prompt(schema, examples, sentence.text, include_schema, include_examples)
        try:
            parsed = parse_response(client.generate(prompt, cfg))
        except (MalformedResponse, ResponseTooLong) as exc:
            log.debug("sentence %s yielded nothing: %s", sentence.key, exc)
            return None
        return parsed

    with ThreadPoolExecutor(max_workers=getattr(client, "max_workers", 8)) as pool:
        results = list(pool.map(one, sentences))

    report = ExtractionReport([], len(sentences), 0, 0, 0)
    for sentence, parsed in zip(sentences, results):
        if parsed is None:
            report.n_malformed += 1
            continue
        report.n_skipped_items += parsed.skipped
        if parsed.triples:
            report.n_yielding += 1
        report.triples.extend(t.with_provenance(sentence.company_id, sentence.doc_index)
                              for t in parsed.triples)
    return report


def extract_triples(sentences, client, schema=None, examples=None,
                    cfg: GenerationConfig = GenerationConfig(), **ablation) -> tuple[list[EsgTriple], float]:
    report = run_extraction(sentences, client, schema, examples, cfg, **ablation)
    return report.triples, report.coverage


# --------------------------------------------------------------------------
# self-evaluation

EVALUATION_INSTRUCTION = (
    "You will be given a sentence from a corporate sustainability report and an ESG-oriented "
    "triple extracted from it. The triple has an ESG category (an issue related to an ESG "
    "aspect), a predicate (a nominalised verb affecting that aspect) and an object (an entity "
    "undergoing the predicate). Judge each attribute for its coherence with the sentence and "
    "with the other attributes, and give it an integer score from 0 (wrong or missing) to "
    "3 (fully correct). Output a JSON object with the keys cat, pred, obj and avg, where avg "
    "is the mean of the three scores. Wrap the JSON in <json> tags."
)


@dataclass(frozen=True)
class TripleScore:
    cat_score: int | None
    pred_score: int | None
    obj_score: int | None
    avg: float | None

    @property
    def evaluated(self) -> bool:
        return self.avg is not None


UNEVALUATED = TripleScore(None, None, None, None)


def evaluation_prompt(sentence: str, triple: EsgTriple) -> str:
    return (f"{EVALUATION_INSTRUCTION}\n\nsentence: {sentence}\n"
            f"triple: {json.dumps(_triple_payload(triple), ensure_ascii=False)}\nscores:")


def _score(payload: dict, name: str) -> int:
    v = _first(payload, (name, f"{name}_score"))
    if isinstance(v, bool) or not isinstance(v, (int, float)) or v != int(v) or not 0 <= v <= 3:
        raise MalformedResponse(f"{name} score must be an integer in 0..3, got {v!r}")
    return int(v)


def parse_scores(raw: str) -> TripleScore:
    m = _JSON_SPAN.search(raw)
    if m is None:
        raise MalformedResponse("no <json> span in response")
    try:
        payload = json.loads(m.group(1))
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise MalformedResponse("scores must be a JSON object")
    c, p, o = (_score(payload, k) for k in ("cat", "pred", "obj"))
    return TripleScore(c, p, o, (c + p + o) / 3)


def evaluate_triples(sample: Sequence[tuple[Sentence | str, EsgTriple]], client: GenerationClient,
                     cfg: GenerationConfig = GenerationConfig()) -> list[TripleScore]:
    if not sample:
        raise ValueError("evaluation sample must be non-empty")
    out = []
    for sentence, triple in sample:
        text = sentence.text if isinstance(sentence, Sentence) else sentence
        try:
            out.append(parse_scores(client.generate(evaluation_prompt(text, triple), cfg)))
        except MalformedResponse as exc:
            log.debug("evaluation reply unusable: %s", exc)
            out.append(UNEVALUATED)
    return out


# --------------------------------------------------------------------------
# files

def write_triples(triples: Iterable[EsgTriple], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for t in triples:
            fh.write(json.dumps(t.to_dict(), ensure_ascii=False) + "\n")


def read_triples(path: str | Path) -> list[EsgTriple]:
    with Path(path).open(encoding="utf-8") as fh:
        return [EsgTriple.from_dict(json.loads(line)) for line in fh if line.strip()]
