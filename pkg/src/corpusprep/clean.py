"""Content cleaning: junk paragraphs, document rules, quality scoring, PII."""
from __future__ import annotations

import functools
import json
import logging
import re
import time
import unicodedata
import urllib.error
import urllib.request
from collections import Counter
from dataclasses import dataclass, replace
from importlib import resources
from typing import Callable, Optional, Sequence

from .config import DocRuleThresholds
from .model import (
    KEEP,
    ConfigError,
    Document,
    Paragraph,
    StageDecision,
    Status,
    drop,
    join_paragraphs,
    split_paragraphs,
    split_sentences,
    word_tokens,
)

logger = logging.getLogger(__name__)

__all__ = [
    "DocRuleThresholds",
    "HeuristicJunkScorer",
    "JunkScorer",
    "PiiRules",
    "apply_document_rules",
    "apply_junk_filter",
    "document_metrics",
    "filter_quality",
    "redact_pii",
    "score_junk",
    "score_quality",
    "smooth_statuses",
]


# ------------------------------------------------------------------ junk


@functools.lru_cache(maxsize=None)
def default_boilerplate() -> tuple:
    text = (resources.files("corpusprep") / "data" / "boilerplate.txt").read_text(encoding="utf-8")
    return tuple(load_phrases_text(text))


def load_phrases_text(text: str) -> list:
    return [ln.strip().lower() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def load_phrases(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return load_phrases_text(fh.read())


_LINKY = re.compile(r"^(?:https?://|www\.)|\.(?:html?|php|aspx?)\b|^[|»>›/·•]+$")


class HeuristicJunkScorer:
    """Rule-table stand-in for a trained junk-paragraph classifier.

    score = 0.4 * (distinct boilerplate phrases found)
          + 0.5 * (fraction of tokens that are links or nav separators)
          + 0.3 * max(0, 1 - chars / 40)
    clipped to [0, 1]; blank paragraphs score 1.
    """

    PHRASE_WEIGHT = 0.4
    LINK_WEIGHT = 0.5
    SHORT_WEIGHT = 0.3
    SHORT_CHARS = 40

    def __init__(self, phrases: Optional[Sequence[str]] = None):
        self.phrases = tuple(p.lower() for p in (default_boilerplate() if phrases is None else phrases))

    def rule_hits(self, text: str) -> dict:
        lowered = text.lower()
        tokens = lowered.split()
        links = sum(1 for t in tokens if _LINKY.search(t))
        return {
            "phrases": [p for p in self.phrases if p in lowered],
            "link_density": links / len(tokens) if tokens else 0.0,
            "chars": len(text.strip()),
        }

    def __call__(self, paragraph: Paragraph) -> float:
        if not paragraph.text.strip():
            return 1.0
        hits = self.rule_hits(paragraph.text)
        score = (
            self.PHRASE_WEIGHT * len(hits["phrases"])
            + self.LINK_WEIGHT * hits["link_density"]
            + self.SHORT_WEIGHT * max(0.0, 1.0 - hits["chars"] / self.SHORT_CHARS)
        )
        return min(1.0, score)


@dataclass
class JunkScorer:
    scorer: Callable[[Paragraph], float]
    threshold: float = 0.5
    failures: int = 0

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("junk threshold must lie in (0, 1)")


def score_junk(doc: Document, scorer: JunkScorer) -> list:
    statuses = []
    for para in split_paragraphs(doc.text):
        try:
            junk = scorer.scorer(para) >= scorer.threshold
        except Exception:  # fail open: a scorer crash must not eat content
            scorer.failures += 1
            logger.warning("junk scorer failed on %s paragraph %d", doc.id, para.index)
            junk = False
        statuses.append(Status.JUNK if junk else Status.CONTENT)
    return statuses


def smooth_statuses(statuses: Sequence[Status]) -> list:
    """Flip isolated interior junk paragraphs back to content.

    Junk runs touching either end of the document stay junk, as do interior
    runs of two or more.
    """
    out = list(statuses)
    n = len(out)
    for i in range(1, n - 1):
        if (
            statuses[i] is Status.JUNK
            and statuses[i - 1] is Status.CONTENT
            and statuses[i + 1] is Status.CONTENT
        ):
            out[i] = Status.CONTENT
    return out


def apply_junk_filter(doc: Document, statuses: Sequence[Status]):
    """Return ``(decision, doc_or_None)`` keeping only content paragraphs."""
    paragraphs = split_paragraphs(doc.text)
    if len(paragraphs) != len(statuses):
        raise AssertionError(
            f"{doc.id}: {len(statuses)} statuses for {len(paragraphs)} paragraphs"
        )
    kept = [p for p, s in zip(paragraphs, statuses) if s is Status.CONTENT]
    text = join_paragraphs(kept)
    if not kept or not text.strip():
        return drop("junk.empty"), None
    if len(kept) == len(paragraphs):
        return KEEP, doc
    return KEEP, replace(doc, text=text)


def clean_junk(doc: Document, scorer: JunkScorer):
    return apply_junk_filter(doc, smooth_statuses(score_junk(doc, scorer)))


# -------------------------------------------------------- document rules

_TERMINAL_END = tuple(".!?。！？；…\"'”’)」』）")
_ASCII_WORD = re.compile(r"[A-Za-z0-9]+")

RULE_ORDER = (
    "punct_ratio",
    "ellipsis_end",
    "no_punct_end",
    "abnormal_word",
    "dup_sentence",
    "short_para",
    "rep_ngram",
)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _top_ngram_char_frac(tokens: list, n: int) -> float:
    if len(tokens) < n:
        return 0.0
    total = sum(len(t) for t in tokens)
    if total == 0:
        return 0.0
    counts = Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    top = max(counts.values())
    if top < 2:
        return 0.0
    # most frequent n-gram; ties go to the one covering more characters
    width = max(sum(len(t) for t in g) for g, c in counts.items() if c == top)
    return min(1.0, top * width / total)


def document_metrics(text: str, short_para_char_len: int = 10) -> dict:
    """The seven rule metrics; paragraph metrics only count non-blank paragraphs."""
    paras = [p.strip() for p in text.split("\n") if p.strip()]
    n_paras = len(paras)
    words = _ASCII_WORD.findall(text)
    sentences = [s.strip() for s in split_sentences(text) if s.strip()]
    tokens = word_tokens(text)

    def abnormal(w):
        return len(w) > 40 or sum(c.isdigit() for c in w) / len(w) > 0.5

    return {
        "punct_ratio": sum(map(_is_punct, text)) / len(text) if text else 0.0,
        "ellipsis_end": (
            sum(p.endswith("...") or p.endswith("…") for p in paras) / n_paras if n_paras else 0.0
        ),
        "no_punct_end": (
            sum(not p.endswith(_TERMINAL_END) for p in paras) / n_paras if n_paras else 0.0
        ),
        "abnormal_word": sum(map(abnormal, words)) / len(words) if words else 0.0,
        "dup_sentence": (
            (len(sentences) - len(set(sentences))) / len(sentences) if sentences else 0.0
        ),
        "short_para": (
            sum(len(p) < short_para_char_len for p in paras) / n_paras if n_paras else 0.0
        ),
        "rep_ngram": tuple(_top_ngram_char_frac(tokens, n) for n in (1, 2, 3)),
    }


def apply_document_rules(
    doc: Document,
    t: Optional[DocRuleThresholds] = None,
    exam_source_tags=frozenset({"exam"}),
) -> StageDecision:
    t = t or DocRuleThresholds()
    if doc.source in exam_source_tags:
        t = t.loosened()
    m = document_metrics(doc.text, t.short_para_char_len)
    limits = {
        "punct_ratio": t.punct_ratio_max,
        "ellipsis_end": t.ellipsis_end_ratio_max,
        "no_punct_end": t.no_punct_end_ratio_max,
        "abnormal_word": t.abnormal_word_ratio_max,
        "dup_sentence": t.dup_sentence_frac_max,
        "short_para": t.short_para_ratio_max,
    }
    for name in RULE_ORDER[:-1]:
        if m[name] > limits[name]:
            return drop(f"doc_rule.{name}", f"{m[name]:.4f}>{limits[name]:.4f}")
    for n, (value, limit) in enumerate(zip(m["rep_ngram"], t.rep_ngram_frac_max), 1):
        if value > limit:
            return drop("doc_rule.rep_ngram", f"n={n} {value:.4f}>{limit:.4f}")
    return KEEP


# --------------------------------------------------------------- quality

MATTR_WINDOW = 50
MIN_QUALITY_TOKENS = 20


def heuristic_quality(text: str) -> float:
    """Length factor times moving-average type/token ratio (window 50).

    Short texts are scaled down linearly below 20 tokens; heavy repetition
    drives the lexical-diversity term toward ``distinct / window``.
    """
    tokens = [t.lower() for t in word_tokens(text)]
    if not tokens:
        return 0.0
    length_factor = min(1.0, len(tokens) / MIN_QUALITY_TOKENS)
    w = MATTR_WINDOW
    if len(tokens) <= w:
        diversity = len(set(tokens)) / len(tokens)
    else:
        window = Counter(tokens[:w])
        acc = len(window)
        for i in range(w, len(tokens)):
            old = tokens[i - w]
            window[old] -= 1
            if not window[old]:
                del window[old]
            window[tokens[i]] += 1
            acc += len(window)
        diversity = acc / (len(tokens) - w + 1) / w
    return length_factor * diversity


class ScorerUnavailable(RuntimeError):
    pass


class HttpQualityScorer:
    """Client for an external scorer: POST ``{"id", "text"}`` -> ``{"score"}``."""

    def __init__(self, url: str, timeout: float = 5.0, retries: int = 2, backoff: float = 0.2):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff

    def __call__(self, doc: Document) -> float:
        body = json.dumps({"id": doc.id, "text": doc.text}).encode("utf-8")
        last = None
        for attempt in range(self.retries + 1):
            req = urllib.request.Request(
                self.url, data=body, headers={"Content-Type": "application/json"}, method="POST"
            )
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    score = float(json.loads(resp.read())["score"])
                if not 0.0 <= score <= 1.0:
                    raise ValueError(f"score {score} outside [0, 1]")
                return score
            except (urllib.error.URLError, OSError, ValueError, KeyError, TypeError) as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(self.backoff * 2**attempt)
        raise ScorerUnavailable(f"{self.url}: {last}")


def score_quality(doc: Document, scorer: Optional[Callable[[Document], float]] = None) -> float:
    if scorer is None:
        return heuristic_quality(doc.text)
    return scorer(doc)


def filter_quality(
    doc: Document,
    threshold: float = 0.4,
    scorer: Optional[Callable[[Document], float]] = None,
    fail_open: bool = True,
) -> StageDecision:
    try:
        score = score_quality(doc, scorer)
    except ScorerUnavailable as exc:
        logger.warning("quality scorer unavailable for %s: %s", doc.id, exc)
        return KEEP if fail_open else drop("quality.unscored", str(exc))
    if score < threshold:
        return drop("quality.low", f"{score:.4f}")
    return KEEP


# ------------------------------------------------------------------- PII


_MAX_PII_PASSES = 8


@dataclass(frozen=True)
class PiiRules:
    rules: tuple  # ((pattern_id, regex_source, token), ...)

    def __post_init__(self):
        parts = []
        for i, (pid, pattern, token) in enumerate(self.rules):
            if not re.fullmatch(r"\[[A-Z_]+\]", token):
                raise ConfigError(f"replacement token {token!r} must be a bracketed uppercase marker")
            try:
                re.compile(pattern)
            except re.error as exc:
                raise ConfigError(f"bad regex for {pid}: {exc}") from exc
            parts.append(f"(?P<r{i}>{pattern})")
        object.__setattr__(self, "combined", re.compile("|".join(parts)) if parts else None)

    @classmethod
    def from_text(cls, text: str) -> "PiiRules":
        rules = []
        for lineno, line in enumerate(text.splitlines(), 1):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ConfigError(f"PII rules line {lineno}: expected id<TAB>regex<TAB>token")
            rules.append(tuple(parts))
        return cls(tuple(rules))

    @classmethod
    def load(cls, path) -> "PiiRules":
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    @classmethod
    def default(cls) -> "PiiRules":
        return _default_pii()


@functools.lru_cache(maxsize=None)
def _default_pii() -> PiiRules:
    return PiiRules.from_text(
        (resources.files("corpusprep") / "data" / "pii_rules.tsv").read_text(encoding="utf-8")
    )


def redact_pii(text: str, rules: Optional[PiiRules] = None):
    """Replace PII matches with their tokens; return ``(text, counts)``.

    Matching is leftmost, non-overlapping, earliest rule first. Passes repeat
    until nothing matches, since a replacement can expose a match whose
    boundary check failed against the original neighbouring character.
    With the bundled rules every match holds a digit or ``@`` and no token
    does, so this settles in a pass or two; custom rules are capped.
    """
    rules = rules or _default_pii()
    counts: Counter = Counter()
    if rules.combined is None:
        return text, {}
    ids = [pid for pid, _, _ in rules.rules]
    tokens = [tok for _, _, tok in rules.rules]

    def _sub(m):
        idx = next(i for i in range(len(ids)) if m.group(f"r{i}") is not None)
        counts[ids[idx]] += 1
        return tokens[idx]

    for _ in range(_MAX_PII_PASSES):
        new = rules.combined.sub(_sub, text)
        if new == text:
            break
        text = new
    return text, dict(counts)
