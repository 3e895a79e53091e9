"""Documents, passages and the line-delimited vector file format.

Vector files hold one JSON object per line::

    {"id": "doc7#0", "vector": {"12": 0.53, "981": 1.25}}

Passage ids are ``<doc_id>#<ordinal>``; query vectors use the bare query id.
Weights go through ``json``'s shortest-repr float formatting, which
round-trips doubles exactly.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .sparse_core import SparseVector

MAX_PASSAGE_TOKENS = 256


class CorpusError(ValueError):
    """Malformed input file; message carries the file and line number."""


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str

    def __post_init__(self):
        if not self.doc_id:
            raise CorpusError("doc_id must be non-empty")


@dataclass(frozen=True)
class Passage:
    doc_id: str
    ordinal: int
    tokens: tuple[int, ...]

    @property
    def id(self) -> str:
        return passage_id(self.doc_id, self.ordinal)


@dataclass(frozen=True, eq=False)
class VectorRecord:
    id: str
    vector: SparseVector

    def __post_init__(self):
        if not self.id:
            raise CorpusError("record id must be non-empty")

    def __eq__(self, other):
        if not isinstance(other, VectorRecord):
            return NotImplemented
        return self.id == other.id and self.vector == other.vector


def passage_id(doc_id: str, ordinal: int) -> str:
    return f"{doc_id}#{ordinal}"


def parse_passage_id(pid: str) -> tuple[str, int]:
    """Split ``doc#ordinal``; the doc part may itself contain ``#``."""
    doc_id, sep, ordinal = pid.rpartition("#")
    if not sep or not doc_id or not ordinal.isdigit():
        raise CorpusError(f"passage id {pid!r} is not of the form doc_id#ordinal")
    return doc_id, int(ordinal)


# Scripts written without inter-word spaces: each codepoint is its own unit.
_UNSPACED = (
    "\u0e00-\u0eff"  # Thai, Lao
    "\u1000-\u109f"  # Myanmar
    "\u1780-\u17ff"  # Khmer
    "\u3040-\u30ff"  # Hiragana, Katakana
    "\u3400-\u4dbf"  # CJK Ext A
    "\u4e00-\u9fff"  # CJK Unified
    "\uf900-\ufaff"  # CJK Compatibility
    "\U00020000-\U0002fa1f"  # CJK Ext B..F, Compatibility Supplement
)
_UNIT_RE = re.compile(f"[{_UNSPACED}]|[^\\s{_UNSPACED}]+")


def term_id(unit: str, vocab_size: int) -> int:
    """Stable id: first 8 bytes of BLAKE2b(utf-8), little-endian, mod ``vocab_size``."""
    digest = hashlib.blake2b(unit.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % vocab_size


def tokenize(text: str, vocab_size: int) -> list[int]:
    if vocab_size <= 0:
        raise ValueError("vocab_size must be positive")
    return [term_id(u, vocab_size) for u in _UNIT_RE.findall(text)]


def split_tokens(tokens: list[int] | tuple[int, ...], max_passage_tokens: int = MAX_PASSAGE_TOKENS):
    if max_passage_tokens < 1:
        raise ValueError("max_passage_tokens must be >= 1")
    return [tuple(tokens[i : i + max_passage_tokens]) for i in range(0, len(tokens), max_passage_tokens)]


def split_passages(
    doc: Document, vocab_size: int, max_passage_tokens: int = MAX_PASSAGE_TOKENS
) -> list[Passage]:
    """Tokenize ``doc`` and cut it into consecutive, non-overlapping windows."""
    chunks = split_tokens(tokenize(doc.text, vocab_size), max_passage_tokens)
    return [Passage(doc.doc_id, i, chunk) for i, chunk in enumerate(chunks)]


# -- files -------------------------------------------------------------------


def _vector_to_json(rec: VectorRecord) -> str:
    vec = {str(t): w for t, w in rec.vector}
    return json.dumps({"id": rec.id, "vector": vec}, ensure_ascii=False)


def write_vectors(records: Iterable[VectorRecord], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(_vector_to_json(rec))
            f.write("\n")
            n += 1
    return n


def read_vectors(path, vocab_size: int) -> Iterator[VectorRecord]:
    """Stream records; raises :class:`CorpusError` naming the bad line."""
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
                rid = obj["id"]
                raw = obj["vector"]
                if not isinstance(rid, str) or not isinstance(raw, dict):
                    raise TypeError("id must be a string and vector an object")
                mapping = {int(t): float(w) for t, w in raw.items()}
                if any(w < 0 for w in mapping.values()):
                    raise ValueError("negative weight")
                vec = SparseVector.from_mapping(mapping, vocab_size)
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusError(f"{where}: malformed vector record ({exc})") from None
            if rid in seen:
                raise CorpusError(f"{where}: duplicate id {rid!r}")
            seen.add(rid)
            yield VectorRecord(rid, vec)


def read_documents(path) -> Iterator[Document]:
    """JSONL with ``doc_id`` and ``text`` fields, or TSV ``doc_id<TAB>text``."""
    seen: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                if line.lstrip().startswith("{"):
                    obj = json.loads(line)
                    doc = Document(str(obj["doc_id"]), str(obj.get("text", "")))
                else:
                    doc_id, sep, text = line.partition("\t")
                    if not sep:
                        raise ValueError("expected doc_id<TAB>text")
                    doc = Document(doc_id, text)
            except (ValueError, KeyError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed document ({exc})") from None
            if doc.doc_id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate doc_id {doc.doc_id!r}")
            seen.add(doc.doc_id)
            yield doc


def read_topics(path) -> list[tuple[str, str]]:
    """``query_id<TAB>title`` per line, in file order."""
    topics = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            qid, sep, title = line.partition("\t")
            if not sep or not qid:
                raise CorpusError(f"{path}:{lineno}: expected query_id<TAB>title")
            if qid in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate query id {qid!r}")
            seen.add(qid)
            topics.append((qid, title))
    return topics


def write_topics(topics: Iterable[tuple[str, str]], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for qid, title in topics:
            f.write(f"{qid}\t{title}\n")


def write_passages(passages: Iterable[Passage], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for p in passages:
            f.write(json.dumps({"id": p.id, "tokens": list(p.tokens)}))
            f.write("\n")


def read_passages(path) -> Iterator[Passage]:
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                doc_id, ordinal = parse_passage_id(obj["id"])
                tokens = tuple(int(t) for t in obj["tokens"])
            except (ValueError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: malformed passage ({exc})") from None
            yield Passage(doc_id, ordinal, tokens)


def ensure_parent(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path
