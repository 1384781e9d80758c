"""Core record types, text segmentation and corpus file I/O."""
from __future__ import annotations

import enum
import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

logger = logging.getLogger(__name__)

PARAGRAPH_DELIMITER = "\n"

# Closed set of drop reasons. Anything emitted by a stage must be listed here.
REASON_CODES = frozenset(
    {
        "url.blacklist",
        "url.low_rating",
        "keyword.blocklist",
        "exact.url",
        "exact.body",
        "lang.mismatch",
        "lang.mixed_cjk",
        "junk.empty",
        "doc_rule.punct_ratio",
        "doc_rule.ellipsis_end",
        "doc_rule.no_punct_end",
        "doc_rule.abnormal_word",
        "doc_rule.dup_sentence",
        "doc_rule.short_para",
        "doc_rule.rep_ngram",
        "quality.low",
        "quality.unscored",
        "dedup.doc",
        "dedup.para_empty",
        "dedup.sent_empty",
    }
)


class ConfigError(ValueError):
    """Invalid configuration, list file or vocabulary."""


class Verdict(str, enum.Enum):
    KEEP = "keep"
    DROP = "drop"


class Status(str, enum.Enum):
    CONTENT = "content"
    JUNK = "junk"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class StageDecision:
    verdict: Verdict
    reason: str = ""
    detail: Optional[str] = None

    def __post_init__(self):
        if self.verdict is Verdict.DROP and self.reason not in REASON_CODES:
            raise ValueError(f"unknown drop reason {self.reason!r}")

    @property
    def keep(self) -> bool:
        return self.verdict is Verdict.KEEP


KEEP = StageDecision(Verdict.KEEP)


def drop(reason: str, detail: Optional[str] = None) -> StageDecision:
    return StageDecision(Verdict.DROP, reason, detail)


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    url: Optional[str] = None
    source: str = "webpages"
    lang: Optional[str] = None
    topic: Optional[str] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.id:
            raise ValueError("document id must be nonempty")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "url": self.url,
            "source": self.source,
            "lang": self.lang,
            "topic": self.topic,
            "text": self.text,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "Document":
        if not isinstance(rec, dict):
            raise ValueError("record is not an object")
        doc_id, text = rec.get("id"), rec.get("text")
        if not isinstance(doc_id, str) or not isinstance(text, str):
            raise ValueError("record needs string 'id' and 'text'")
        meta = rec.get("meta")
        if meta is None:
            meta = {}
        if not isinstance(meta, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
        ):
            raise ValueError("'meta' must be a flat string map")
        opt = {}
        for key in ("url", "lang", "topic"):
            val = rec.get(key)
            if val is not None and not isinstance(val, str):
                raise ValueError(f"'{key}' must be a string or null")
            opt[key] = val
        source = rec.get("source")
        if source is None:
            source = "webpages"
        elif not isinstance(source, str):
            raise ValueError("'source' must be a string")
        return cls(id=doc_id, text=text, source=source, meta=meta, **opt)


@dataclass(frozen=True)
class Paragraph:
    index: int
    text: str
    status: Status = Status.UNDECIDED


class CorpusReader:
    """Iterate a JSONL corpus, skipping (and counting) malformed lines.

    Opening happens eagerly so a missing or unreadable file fails at
    construction time rather than on first iteration.
    """

    def __init__(self, path):
        self.path = Path(path)
        self.skipped = 0
        with open(self.path, "rb"):
            pass

    def __iter__(self) -> Iterator[Document]:
        with open(self.path, "r", encoding="utf-8", errors="strict") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    doc = Document.from_record(json.loads(line))
                except ValueError as exc:  # JSONDecodeError is a ValueError
                    self.skipped += 1
                    logger.warning("%s:%d: skipping malformed record (%s)", self.path, lineno, exc)
                    continue
                yield doc


def read_corpus(path) -> CorpusReader:
    return CorpusReader(path)


def write_corpus(docs: Iterable[Document], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False))
            fh.write("\n")
            n += 1
    return n


def split_paragraphs(text: str) -> list[Paragraph]:
    return [Paragraph(i, part) for i, part in enumerate(text.split(PARAGRAPH_DELIMITER))]


def join_paragraphs(paragraphs: Iterable) -> str:
    return PARAGRAPH_DELIMITER.join(p.text if isinstance(p, Paragraph) else p for p in paragraphs)


_CJK_CLASS = "㐀-䶿一-鿿豈-﫿"
_CLOSERS = "\"'”’)\\]}」』》）】"
# Full-width terminators always end a sentence; ASCII ones only when followed
# by whitespace, a CJK character or end of text (so "3.14" stays intact).
_SENT_END = re.compile(
    rf"[。！？；]+[{_CLOSERS}]*"
    rf"|[.!?]+[{_CLOSERS}]*(?=\s|[{_CJK_CLASS}]|$)"
)


def split_sentences(text: str) -> list[str]:
    out = []
    start = 0
    for m in _SENT_END.finditer(text):
        end = m.end()
        if end >= len(text):
            break
        out.append(text[start:end])
        start = end
    out.append(text[start:])
    return out


_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """NFC, whitespace runs collapsed to one space, trimmed."""
    return _WS.sub(" ", unicodedata.normalize("NFC", text)).strip()


_TOKEN = re.compile(rf"[{_CJK_CLASS}]|[^\s{_CJK_CLASS}]+")
_CJK_CHAR = re.compile(rf"[{_CJK_CLASS}]")


def word_tokens(text: str) -> list[str]:
    """Whitespace-delimited words, with every CJK ideograph its own token."""
    return _TOKEN.findall(text)


def has_cjk(text: str) -> bool:
    return any("一" <= ch <= "鿿" for ch in text)


def count_cjk(text: str) -> int:
    return len(_CJK_CHAR.findall(text))


@dataclass
class DedupStats:
    docs_in: int = 0
    docs_out: int = 0
    dropped: dict = field(default_factory=dict)

    def record(self, decision: StageDecision):
        self.docs_in += 1
        if decision.keep:
            self.docs_out += 1
        else:
            self.dropped[decision.reason] = self.dropped.get(decision.reason, 0) + 1
