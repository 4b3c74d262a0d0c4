"""Corpus ingestion and token-bounded chunking.

Documents are split into overlapping text units with a sliding window over an
approximate token sequence. The tokenizer is a deterministic rule (whitespace
split, then leading/trailing punctuation runs become their own tokens) rather
than a model tokenizer, so unit boundaries and token statistics are identical
across platforms. Unit text is reconstructed from original character spans,
so no re-tokenization loss occurs.
"""

from __future__ import annotations

import hashlib
import re
import string
from dataclasses import dataclass
from pathlib import Path

from .errors import BadParams, EmptyCorpus

_PUNCT = set(string.punctuation)
_WS_RUN = re.compile(r"\S+")


@dataclass(frozen=True)
class Document:
    doc_id: str
    title: str
    source_path: str
    text: str
    token_count: int


@dataclass(frozen=True)
class TextUnit:
    unit_id: str
    doc_id: str
    ordinal: int
    text: str
    token_start: int
    token_end: int
    token_count: int


@dataclass(frozen=True)
class Token:
    """One approximate token with its character span in the source text."""

    text: str
    start: int
    end: int


def tokenize(text: str) -> list[Token]:
    """Split into approximate tokens, keeping character offsets.

    Each whitespace-delimited chunk yields up to three tokens: a leading
    punctuation run, the core, and a trailing punctuation run. A chunk that
    is all punctuation is a single token.
    """
    tokens: list[Token] = []
    for match in _WS_RUN.finditer(text):
        chunk = match.group()
        base = match.start()
        lead = 0
        while lead < len(chunk) and chunk[lead] in _PUNCT:
            lead += 1
        if lead == len(chunk):
            tokens.append(Token(chunk, base, base + len(chunk)))
            continue
        trail = len(chunk)
        while trail > lead and chunk[trail - 1] in _PUNCT:
            trail -= 1
        if lead:
            tokens.append(Token(chunk[:lead], base, base + lead))
        tokens.append(Token(chunk[lead:trail], base + lead, base + trail))
        if trail < len(chunk):
            tokens.append(Token(chunk[trail:], base + trail, base + len(chunk)))
    return tokens


def count_tokens(text: str) -> int:
    """Deterministic approximate token count used for all statistics."""
    return len(tokenize(text))


def ingest_documents(
    root: str | Path, pattern: str = "*.txt"
) -> tuple[list[Document], list[str]]:
    """Read every file under ``root`` matching ``pattern``.

    Files are visited in lexicographic order of their relative path, so ids
    and ordering are reproducible. Unreadable files are collected as error
    strings instead of aborting the run.

    Raises:
        EmptyCorpus: if the glob matches zero files.
    """
    root = Path(root)
    if not root.is_dir():
        raise EmptyCorpus(f"corpus root {root} is not a directory")
    paths = sorted(
        (p for p in root.glob(pattern) if p.is_file()),
        key=lambda p: p.relative_to(root).as_posix(),
    )
    if not paths:
        raise EmptyCorpus(f"no files match {pattern!r} under {root}")

    documents: list[Document] = []
    errors: list[str] = []
    for path in paths:
        raw = path.read_bytes()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            errors.append(f"{path}: {exc}")
            continue
        digest = hashlib.sha256(raw).hexdigest()
        title = next(
            (line.strip() for line in text.splitlines() if line.strip()),
            path.stem,
        )
        documents.append(
            Document(
                doc_id=f"{digest[:10]}-{path.name}",
                title=title,
                source_path=str(path),
                text=text,
                token_count=count_tokens(text),
            )
        )
    return documents, errors


def chunk_document(
    doc: Document, chunk_tokens: int, overlap_tokens: int
) -> list[TextUnit]:
    """Slide a window of ``chunk_tokens`` with stride chunk - overlap.

    Window starts are every multiple of the stride below the document token
    count, so consecutive units overlap by exactly ``overlap_tokens`` except
    at the tail, where the final unit may be short.
    """
    if not (chunk_tokens > overlap_tokens >= 0):
        raise BadParams(
            f"need chunk_tokens > overlap_tokens >= 0, "
            f"got {chunk_tokens}/{overlap_tokens}"
        )
    tokens = tokenize(doc.text)
    n = len(tokens)
    if n == 0:
        return []

    stride = chunk_tokens - overlap_tokens
    units: list[TextUnit] = []
    for ordinal, start in enumerate(range(0, n, stride)):
        end = min(start + chunk_tokens, n)
        text = doc.text[tokens[start].start : tokens[end - 1].end]
        units.append(
            TextUnit(
                unit_id=f"{doc.doc_id}-u{ordinal:04d}",
                doc_id=doc.doc_id,
                ordinal=ordinal,
                text=text,
                token_start=start,
                token_end=end,
                token_count=end - start,
            )
        )
    return units
