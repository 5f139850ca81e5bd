"""Report ingestion: text extraction, normalization and sentence segmentation."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

from .errors import UnreadableFile, UnsupportedMedia

MEDIA = ("pdf", "plain_text")

DEFAULT_ABBREVIATIONS = (
    "e.g.", "i.e.", "U.S.", "U.K.", "Inc.", "Ltd.", "Co.", "Corp.",
    "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "St.", "No.", "Fig.", "vs.", "approx.",
)

MIN_SENTENCE_TOKENS = 3


@dataclass(frozen=True)
class RawDocument:
    company_id: str
    fiscal_year: int
    source_path: Path
    media: str = "plain_text"

    def __post_init__(self):
        if not str(self.company_id).strip():
            raise ValueError("company_id must be non-empty")
        if not 1990 <= int(self.fiscal_year) <= 2100:
            raise ValueError(f"fiscal_year out of range: {self.fiscal_year}")
        if self.media not in MEDIA:
            raise UnsupportedMedia(f"unknown media {self.media!r}")


@dataclass(frozen=True)
class CleanText:
    company_id: str
    text: str


@dataclass(frozen=True)
class Sentence:
    company_id: str
    doc_index: int
    text: str
    start_char: int
    end_char: int

    @property
    def key(self) -> tuple[str, int]:
        return (self.company_id, self.doc_index)

    def to_dict(self) -> dict:
        return {
            "company_id": self.company_id,
            "doc_index": self.doc_index,
            "text": self.text,
            "start_char": self.start_char,
            "end_char": self.end_char,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Sentence":
        return cls(d["company_id"], int(d["doc_index"]), d["text"],
                   int(d["start_char"]), int(d["end_char"]))


# --------------------------------------------------------------------------
# PDF backends

PdfBackend = Callable[[Path], str]
_pdf_backend: PdfBackend | None = None


def register_pdf_backend(backend: PdfBackend | None) -> None:
    """Install the callable used for ``media="pdf"`` (``None`` unregisters)."""
    global _pdf_backend
    _pdf_backend = backend


def get_pdf_backend() -> PdfBackend | None:
    return _pdf_backend


def pymupdf_backend(path: Path) -> str:
    import fitz  # PyMuPDF

    with fitz.open(path) as pdf:
        return "\n".join(page.get_text() for page in pdf)


try:  # best effort: only available when PyMuPDF is installed
    import fitz  # noqa: F401
except ImportError:
    pass
else:
    register_pdf_backend(pymupdf_backend)


# --------------------------------------------------------------------------
# normalization

_BREAK = re.compile(r"[ \t]*\n[\s]*")
_SPACES = re.compile(r"[ \t]{2,}")
_TERMINAL = ".!?:;"


def _fix_break(m: re.Match) -> str:
    text = m.string
    run = m.group(0)
    prev = text[m.start() - 1] if m.start() > 0 else ""
    nxt = text[m.end()] if m.end() < len(text) else ""
    paragraph = run.count("\n") > 1
    if nxt and (nxt.islower() or nxt.isdigit()):
        return " "
    if nxt.isupper() and prev and prev not in _TERMINAL:
        return ".\n" if paragraph else ". "
    return "\n"


def normalize_text(raw: str) -> str:
    """Repair line-break artefacts left by text extraction.

    Every whitespace run containing a newline is treated as one break:
    it becomes a space when the next character is lowercase or a digit,
    gains a full stop when it separates two sentences without terminal
    punctuation, and otherwise collapses to a single newline. Remaining
    runs of spaces collapse to one.
    """
    text = raw.replace("\r\n", "\n").replace("\r", "\n")
    text = text.replace("\xa0", " ").replace("\f", "\n")
    text = text.strip()
    text = _BREAK.sub(_fix_break, text)
    text = _SPACES.sub(" ", text)
    return text


def extract_text(doc: RawDocument) -> CleanText:
    path = Path(doc.source_path)
    if doc.media == "plain_text":
        try:
            raw = path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise UnreadableFile(f"{path}: {exc}") from exc
    elif doc.media == "pdf":
        if not path.is_file():
            raise UnreadableFile(f"{path}: no such file")
        backend = get_pdf_backend()
        if backend is None:
            raise UnsupportedMedia("no PDF backend registered (install PyMuPDF)")
        try:
            raw = backend(path)
        except Exception as exc:
            raise UnreadableFile(f"{path}: {exc}") from exc
    else:
        raise UnsupportedMedia(doc.media)
    return CleanText(doc.company_id, normalize_text(raw))


# --------------------------------------------------------------------------
# segmentation

# terminator, optional closing quotes/brackets, whitespace, then a sentence start
_BOUNDARY = re.compile(r"[.!?]+[\"'”’)\]]*(?=\s+[A-Z0-9\"'“‘(\[])")
_TOKEN = re.compile(r"\w+|[^\w\s]")


def count_tokens(text: str) -> int:
    return len(_TOKEN.findall(text))


def _ends_with_abbreviation(text: str, end: int, abbreviations: Iterable[str]) -> bool:
    for abbr in abbreviations:
        start = end - len(abbr)
        if start < 0 or text[start:end] != abbr:
            continue
        if start == 0 or not text[start - 1].isalnum():
            return True
    return False


def _raw_spans(text: str, abbreviations) -> Iterator[tuple[int, int]]:
    start = 0
    for m in _BOUNDARY.finditer(text):
        term_end = m.start() + len(m.group(0).rstrip("\"'”’)]"))
        if text[term_end - 1] == "." and _ends_with_abbreviation(text, term_end, abbreviations):
            continue
        yield start, m.end()
        start = m.end()
    if start < len(text):
        yield start, len(text)


def segment_sentences(clean: CleanText, abbreviations: Iterable[str] | None = None,
                      min_tokens: int = MIN_SENTENCE_TOKENS) -> list[Sentence]:
    """Split normalized text into sentences with character spans.

    Pieces with fewer than ``min_tokens`` tokens (punctuation counts as a
    token) are dropped; pass ``min_tokens=1`` to keep every piece.
    """
    abbreviations = tuple(DEFAULT_ABBREVIATIONS if abbreviations is None else abbreviations)
    text = clean.text
    out = []
    for start, end in _raw_spans(text, abbreviations):
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        piece = text[start:end]
        if not piece or count_tokens(piece) < min_tokens:
            continue
        out.append(Sentence(clean.company_id, len(out), piece, start, end))
    return out


# --------------------------------------------------------------------------
# file interfaces

MANIFEST_HEADER = ["company_id", "fiscal_year", "media", "source_path"]


def read_manifest(path: str | Path) -> list[RawDocument]:
    path = Path(path)
    docs = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise ValueError(f"manifest header must be {','.join(MANIFEST_HEADER)}")
        for row in reader:
            src = Path(row["source_path"])
            if not src.is_absolute():
                src = path.parent / src
            docs.append(RawDocument(row["company_id"], int(row["fiscal_year"]), src, row["media"]))
    return docs


def write_sentences(sentences: Iterable[Sentence], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for s in sentences:
            fh.write(json.dumps(s.to_dict(), ensure_ascii=False) + "\n")


def read_sentences(path: str | Path) -> list[Sentence]:
    with Path(path).open(encoding="utf-8") as fh:
        return [Sentence.from_dict(json.loads(line)) for line in fh if line.strip()]
