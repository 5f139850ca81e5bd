"""Embedding and generation clients.

Backends are plain callables. ``HttpEmbedder``/``HttpLLM`` speak the JSON
wire contract (``POST /embed``, ``POST /generate``); ``HashingEmbedder`` and
``ScriptedLLM`` are deterministic in-process stand-ins used when
``EMBED_URL``/``LLM_URL`` are unset.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import sqlite3
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import httpx
import numpy as np

from .errors import DimensionMismatch, ResponseTooLong, ServiceUnavailable

log = logging.getLogger(__name__)

CORPUS_INSTRUCTION = "Represent the statement for retrieval"
QUERY_INSTRUCTION = "Represent the title for retrieving relevant statements"
TITLE_INSTRUCTION = "Represent the title"

EMPTY_REPLY = '<json>{"esg_actions": []}</json>'


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 0.0
    num_beams: int = 6
    max_tokens: int = 512

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.num_beams < 1 or self.max_tokens < 1:
            raise ValueError("num_beams and max_tokens must be positive")


EmbedBackend = Callable[[str, Sequence[str]], Sequence[Sequence[float]]]
GenerateBackend = Callable[[str, GenerationConfig], str]


# --------------------------------------------------------------------------
# caches

class _Store:
    """Thread-safe key/value store, in memory or backed by one sqlite file."""

    def __init__(self, path: str | Path | None = None):
        self._lock = threading.Lock()
        self._mem: dict[str, bytes] = {}
        self._db = None
        if path is not None:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            self._db = sqlite3.connect(str(path), check_same_thread=False)
            self._db.execute("CREATE TABLE IF NOT EXISTS kv (k TEXT PRIMARY KEY, v BLOB)")
            self._db.commit()

    def get(self, key: str) -> bytes | None:
        with self._lock:
            if key in self._mem:
                return self._mem[key]
            if self._db is None:
                return None
            row = self._db.execute("SELECT v FROM kv WHERE k = ?", (key,)).fetchone()
            if row is not None:
                self._mem[key] = bytes(row[0])
                return self._mem[key]
            return None

    def put(self, key: str, value: bytes) -> None:
        with self._lock:
            self._mem[key] = value
            if self._db is not None:
                self._db.execute("INSERT OR REPLACE INTO kv VALUES (?, ?)", (key, value))
                self._db.commit()

    def __len__(self):
        with self._lock:
            return len(self._mem)


def _sha(*parts: str) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


class EmbeddingCache(_Store):
    def key(self, instruction: str, text: str) -> str:
        return _sha(instruction, text)

    def get_vector(self, instruction: str, text: str) -> np.ndarray | None:
        raw = self.get(self.key(instruction, text))
        return None if raw is None else np.frombuffer(raw, dtype=np.float64).copy()

    def put_vector(self, instruction: str, text: str, vec: np.ndarray) -> None:
        self.put(self.key(instruction, text), np.asarray(vec, dtype=np.float64).tobytes())


class GenerationCache(_Store):
    def key(self, prompt: str, config: GenerationConfig) -> str:
        return _sha(prompt, json.dumps(asdict(config), sort_keys=True))


# --------------------------------------------------------------------------
# retries

def _with_retries(fn, attempts: int, backoff: float, sleep):
    delay = backoff
    for attempt in range(1, attempts + 1):
        try:
            return fn()
        except ServiceUnavailable as exc:
            if attempt == attempts:
                raise ServiceUnavailable(f"giving up after {attempts} attempts: {exc}") from exc
            log.warning("service call failed (%s), retrying in %.2fs", exc, delay)
            sleep(delay)
            delay *= 2


# --------------------------------------------------------------------------
# stub backends

_WORD = re.compile(r"[a-z0-9]+")
STOPWORDS = frozenset(
    "a an and are as at be by for from has have in is it its of on or our that the "
    "their this to was we were will with".split()
)


def _unit_gaussian(seed_text: str, dim: int) -> np.ndarray:
    seed = int.from_bytes(hashlib.sha256(seed_text.encode("utf-8")).digest()[:8], "little")
    v = np.random.default_rng(seed).standard_normal(dim)
    return v / np.linalg.norm(v)


def _stem(word: str) -> str:
    if len(word) > 3 and word.endswith("s") and not word.endswith("ss"):
        return word[:-1]
    return word


class HashingEmbedder:
    """Bag-of-words embedding built from seeded hash vectors.

    Each content word maps to a fixed pseudo-random direction; a text's
    vector is the sum of its word directions plus a small component seeded
    by the full ``(instruction, text)`` pair, so distinct texts never
    coincide while texts sharing vocabulary stay close.
    """

    def __init__(self, dim: int = 384, residual: float = 0.15, seed: int = 0):
        self.dim = dim
        self.residual = residual
        self.seed = seed

    def _words(self, text: str) -> list[str]:
        return [_stem(w) for w in _WORD.findall(text.lower()) if w not in STOPWORDS]

    def vector(self, instruction: str, text: str) -> np.ndarray:
        bag = np.zeros(self.dim)
        for w in self._words(text):
            bag += _unit_gaussian(f"{self.seed}|w|{w}", self.dim)
        norm = np.linalg.norm(bag)
        bag = bag / norm if norm > 0 else bag
        noise = _unit_gaussian(f"{self.seed}|t|{instruction}\x00{text}", self.dim)
        v = bag + self.residual * noise
        return v / np.linalg.norm(v)

    def __call__(self, instruction: str, texts: Sequence[str]) -> list[list[float]]:
        return [self.vector(instruction, t).tolist() for t in texts]


class TableEmbedder:
    """Fixed vectors for listed strings, falling back to another backend."""

    def __init__(self, table: Mapping[str, Sequence[float]], fallback: EmbedBackend | None = None):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}
        self.fallback = fallback

    def __call__(self, instruction, texts):
        out = []
        for t in texts:
            if t in self.table:
                out.append(self.table[t].tolist())
            elif self.fallback is not None:
                out.extend(self.fallback(instruction, [t]))
            else:
                raise KeyError(t)
        return out


def prompt_input(prompt: str) -> str | None:
    """The sentence in the final ``input:`` block of an extraction prompt."""
    head, sep, tail = prompt.rpartition("input: ")
    if not sep or (head and not head.endswith("\n")):
        return None
    body, sep, rest = tail.rpartition("\noutput:")
    if not sep or rest.strip():
        return None
    return body


class ScriptedLLM:
    """Replays canned replies keyed by full prompt or by the prompt's input sentence."""

    def __init__(self, replies: Mapping[str, str] | None = None, default: str = EMPTY_REPLY):
        self.replies = dict(replies or {})
        self.default = default
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedLLM":
        with Path(path).open(encoding="utf-8") as fh:
            return cls(json.load(fh))

    def __call__(self, prompt: str, config: GenerationConfig) -> str:
        self.calls += 1
        if prompt in self.replies:
            return self.replies[prompt]
        sentence = prompt_input(prompt)
        if sentence is not None and sentence in self.replies:
            return self.replies[sentence]
        return self.default


# --------------------------------------------------------------------------
# HTTP backends

def _endpoint(url: str, path: str) -> str:
    url = url.rstrip("/")
    return url if url.endswith(path) else url + path


def _post(http: httpx.Client, url: str, body: dict) -> httpx.Response:
    try:
        resp = http.post(url, json=body)
    except httpx.TransportError as exc:
        raise ServiceUnavailable(f"{url}: {exc}") from exc
    if resp.status_code >= 500:
        raise ServiceUnavailable(f"{url}: HTTP {resp.status_code}")
    return resp


class HttpEmbedder:
    def __init__(self, url: str, timeout: float = 60.0, http: httpx.Client | None = None):
        self.url = _endpoint(url, "/embed")
        self.http = http or httpx.Client(timeout=timeout)

    def __call__(self, instruction, texts):
        resp = _post(self.http, self.url, {"instruction": instruction, "texts": list(texts)})
        if resp.status_code != 200:
            raise ServiceUnavailable(f"{self.url}: HTTP {resp.status_code}")
        vectors = resp.json()["vectors"]
        if len(vectors) != len(texts):
            raise DimensionMismatch(f"asked for {len(texts)} vectors, got {len(vectors)}")
        return vectors


class HttpLLM:
    """Generation backend; HTTP 413 or ``finish_reason == "length"`` means too long."""

    def __init__(self, url: str, timeout: float = 300.0, http: httpx.Client | None = None):
        self.url = _endpoint(url, "/generate")
        self.http = http or httpx.Client(timeout=timeout)

    def __call__(self, prompt, config):
        body = {"prompt": prompt, "temperature": config.temperature,
                "num_beams": config.num_beams, "max_tokens": config.max_tokens}
        resp = _post(self.http, self.url, body)
        if resp.status_code == 413:
            raise ResponseTooLong(f"{self.url}: exceeded max_tokens={config.max_tokens}")
        if resp.status_code != 200:
            raise ServiceUnavailable(f"{self.url}: HTTP {resp.status_code}")
        payload = resp.json()
        if payload.get("finish_reason") == "length":
            raise ResponseTooLong(f"{self.url}: exceeded max_tokens={config.max_tokens}")
        return payload["text"]


# --------------------------------------------------------------------------
# clients

class EmbeddingClient:
    def __init__(self, backend: EmbedBackend, cache: EmbeddingCache | None = None, *,
                 attempts: int = 3, backoff: float = 0.5, max_workers: int = 8,
                 batch_size: int = 64, sleep=time.sleep):
        self.backend = backend
        self.cache = cache if cache is not None else EmbeddingCache()
        self.attempts = attempts
        self.backoff = backoff
        self.max_workers = max_workers
        self.batch_size = batch_size
        self._sleep = sleep
        self.backend_calls = 0

    def _call(self, instruction, batch):
        self.backend_calls += 1
        return _with_retries(lambda: self.backend(instruction, batch),
                             self.attempts, self.backoff, self._sleep)

    def embed(self, instruction: str, texts: Sequence[str]) -> np.ndarray:
        """Unit vectors for ``texts`` as an ``(len(texts), d)`` array."""
        texts = list(texts)
        if not texts:
            return np.zeros((0, 0))
        if not instruction:
            raise ValueError("instruction must be non-empty")
        found = {}
        missing = []
        for t in dict.fromkeys(texts):
            v = self.cache.get_vector(instruction, t)
            if v is None:
                missing.append(t)
            else:
                found[t] = v
        batches = [missing[i:i + self.batch_size] for i in range(0, len(missing), self.batch_size)]
        if batches:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                results = list(pool.map(lambda b: self._call(instruction, b), batches))
            for batch, vectors in zip(batches, results):
                for t, v in zip(batch, vectors):
                    v = np.asarray(v, dtype=np.float64)
                    if v.ndim != 1 or not np.all(np.isfinite(v)):
                        raise ServiceUnavailable("backend returned a non-finite or malformed vector")
                    norm = np.linalg.norm(v)
                    if norm == 0:
                        raise ServiceUnavailable("backend returned a zero vector")
                    v = v / norm
                    self.cache.put_vector(instruction, t, v)
                    found[t] = v
        dims = {found[t].shape[0] for t in texts}
        if len(dims) != 1:
            raise DimensionMismatch(f"inconsistent embedding dimensions {sorted(dims)}")
        return np.vstack([found[t] for t in texts])


class GenerationClient:
    def __init__(self, backend: GenerateBackend, cache: GenerationCache | None = None, *,
                 attempts: int = 3, backoff: float = 0.5, max_workers: int = 8, sleep=time.sleep):
        self.backend = backend
        self.cache = cache if cache is not None else GenerationCache()
        self.attempts = attempts
        self.backoff = backoff
        self.max_workers = max_workers
        self._sleep = sleep

    def generate(self, prompt: str, config: GenerationConfig = GenerationConfig()) -> str:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        key = self.cache.key(prompt, config)
        hit = self.cache.get(key)
        if hit is not None:
            return hit.decode("utf-8")
        text = _with_retries(lambda: self.backend(prompt, config),
                             self.attempts, self.backoff, self._sleep)
        self.cache.put(key, text.encode("utf-8"))
        return text


def embedding_client_from_env(cache_path: str | Path | None = None, **kw) -> EmbeddingClient:
    url = os.environ.get("EMBED_URL")
    backend = HttpEmbedder(url) if url else HashingEmbedder()
    return EmbeddingClient(backend, EmbeddingCache(cache_path), **kw)


def generation_client_from_env(stub_replies: str | Path | Mapping[str, str] | None = None,
                               cache_path: str | Path | None = None, **kw) -> GenerationClient:
    url = os.environ.get("LLM_URL")
    if url:
        backend = HttpLLM(url)
    elif isinstance(stub_replies, (str, Path)):
        backend = ScriptedLLM.from_file(stub_replies)
    else:
        backend = ScriptedLLM(stub_replies)
    return GenerationClient(backend, GenerationCache(cache_path), **kw)
