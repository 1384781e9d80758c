"""Document-level preparation filters: site lists, exact dedup, language."""
from __future__ import annotations

import functools
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Iterable, Optional, Sequence
from urllib.parse import urlsplit

from .kernels import hash64
from .model import KEEP, ConfigError, DedupStats, Document, StageDecision, drop, has_cjk, normalize_text

logger = logging.getLogger(__name__)

LanguageDetector = Callable[[str], "tuple[str, float]"]

MIN_DETECT_CHARS = 20
PROFILE_SIZE = 300
_DETECT_PREFIX = 4096


# --------------------------------------------------------------------- URLs


@dataclass
class SiteLists:
    blacklist: set = field(default_factory=set)
    whitelist: set = field(default_factory=set)
    keyword_blocklist: set = field(default_factory=set)
    site_ratings: dict = field(default_factory=dict)
    rating_threshold: float = 0.5
    default_rating: float = 0.5

    def __post_init__(self):
        self.blacklist = {_clean_pattern(p) for p in self.blacklist}
        self.whitelist = {_clean_pattern(p) for p in self.whitelist}
        self.keyword_blocklist = {k.lower() for k in self.keyword_blocklist if k}
        self.site_ratings = {_clean_pattern(d): float(s) for d, s in self.site_ratings.items()}
        overlap = self.blacklist & self.whitelist
        if overlap:
            raise ConfigError(f"domains on both black- and whitelist: {sorted(overlap)}")
        if not 0.0 <= self.rating_threshold <= 1.0:
            raise ConfigError("rating_threshold must lie in [0, 1]")
        for dom, score in self.site_ratings.items():
            if not 0.0 <= score <= 1.0:
                raise ConfigError(f"rating for {dom} outside [0, 1]")

    @classmethod
    def from_files(cls, blacklist=None, whitelist=None, keywords=None, ratings=None, **kw):
        return cls(
            blacklist=load_list(blacklist) if blacklist else set(),
            whitelist=load_list(whitelist) if whitelist else set(),
            keyword_blocklist=load_list(keywords) if keywords else set(),
            site_ratings=load_ratings(ratings) if ratings else {},
            **kw,
        )


def _clean_pattern(pattern: str) -> str:
    pattern = pattern.strip().lower()
    if pattern.startswith("*."):
        pattern = pattern[2:]
    return pattern.strip(".")


def load_list(path) -> set:
    """One entry per line; blank lines and ``#`` comments ignored."""
    out = set()
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                out.add(line)
    return out


def load_ratings(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'domain<TAB>score'")
            try:
                out[parts[0].strip()] = float(parts[1])
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad score {parts[1]!r}") from exc
    return out


def extract_domain(url: Optional[str]) -> Optional[str]:
    if not url:
        return None
    url = url.strip()
    try:
        host = urlsplit(url if "//" in url else "//" + url).hostname
    except ValueError:
        return None
    if not host or "." not in host and host != "localhost":
        return None
    return host.strip(".").lower()


def _suffixes(domain: str):
    """``a.b.example.com`` -> ``a.b.example.com``, ``b.example.com``, ..."""
    parts = domain.split(".")
    for i in range(len(parts)):
        yield ".".join(parts[i:])


def _matches(domain: str, patterns: set) -> bool:
    return any(s in patterns for s in _suffixes(domain))


def _rating(domain: str, lists: SiteLists) -> float:
    for s in _suffixes(domain):
        if s in lists.site_ratings:
            return lists.site_ratings[s]
    return lists.default_rating


def filter_url(doc: Document, lists: SiteLists) -> StageDecision:
    domain = extract_domain(doc.url)
    if domain is not None:
        if _matches(domain, lists.blacklist):
            return drop("url.blacklist", domain)
        if _matches(domain, lists.whitelist):
            return KEEP
        if _rating(domain, lists) < lists.rating_threshold:
            return drop("url.low_rating", domain)
    if lists.keyword_blocklist:
        lowered = doc.text.lower()
        for kw in sorted(lists.keyword_blocklist):
            if kw in lowered:
                return drop("keyword.blocklist", kw)
    return KEEP


# ------------------------------------------------------------- exact dedup


def body_key(text: str) -> int:
    return hash64(normalize_text(text))


class ExactDeduper:
    """First-seen-wins URL and body-hash filter."""

    def __init__(self):
        self.seen_urls: set = set()
        self.seen_bodies: set = set()
        self.stats = DedupStats()

    def check(self, doc: Document) -> StageDecision:
        url = doc.url.strip() if doc.url else None
        if url and url in self.seen_urls:
            decision = drop("exact.url", url)
        else:
            key = body_key(doc.text)
            if key in self.seen_bodies:
                decision = drop("exact.body")
            else:
                self.seen_bodies.add(key)
                if url:
                    self.seen_urls.add(url)
                decision = KEEP
        self.stats.record(decision)
        return decision


def exact_dedup(docs: Iterable[Document]):
    """Return ``(kept_docs_iterator, stats)``; stats fill in as the iterator is consumed."""
    deduper = ExactDeduper()

    def _gen():
        for doc in docs:
            if deduper.check(doc).keep:
                yield doc

    return _gen(), deduper.stats


# ------------------------------------------------------------- language id


@dataclass(frozen=True)
class LanguageProfile:
    lang: str
    ngram_ranks: dict

    @classmethod
    def from_text(cls, lang: str, text: str, size: int = PROFILE_SIZE) -> "LanguageProfile":
        return cls(lang, rank_ngrams(text, size))


def _letters_only(text: str) -> str:
    chars = [ch if unicodedata.category(ch).startswith("L") else " " for ch in text.lower()]
    return "".join(chars)


def ngram_counts(text: str) -> Counter:
    counts: Counter = Counter()
    for word in _letters_only(text).split():
        padded = f"_{word}_"
        for n in range(1, 5):
            for i in range(len(padded) - n + 1):
                gram = padded[i : i + n]
                if gram != "_":
                    counts[gram] += 1
    return counts


def rank_ngrams(text: str, size: int = PROFILE_SIZE) -> dict:
    ordered = sorted(ngram_counts(text).items(), key=lambda kv: (-kv[1], kv[0]))
    return {gram: rank for rank, (gram, _) in enumerate(ordered[:size])}


def out_of_place(doc_ranks: dict, profile: LanguageProfile, penalty: int = PROFILE_SIZE) -> int:
    ranks = profile.ngram_ranks
    total = 0
    for gram, rank in doc_ranks.items():
        other = ranks.get(gram)
        total += penalty if other is None else abs(rank - other)
    return total


@functools.lru_cache(maxsize=None)
def default_profiles() -> tuple:
    base = resources.files("corpusprep") / "data" / "lang"
    out = []
    for entry in sorted(base.iterdir(), key=lambda p: p.name):
        if entry.name.endswith(".txt"):
            out.append(LanguageProfile.from_text(entry.name[:-4], entry.read_text(encoding="utf-8")))
    return tuple(out)


def detect_language(text: str, profiles: Optional[Sequence[LanguageProfile]] = None):
    """Closest profile by out-of-place rank distance, with a margin confidence.

    N-grams absent from every profile add the same penalty to every distance,
    so they are left out; this does not change the ranking but keeps the
    margin ``(d2 - d1) / d2`` meaningful for short texts.
    """
    if len(text.strip()) < MIN_DETECT_CHARS:
        return "und", 0.0
    profiles = default_profiles() if profiles is None else profiles
    if not profiles:
        raise ConfigError("no language profiles given")
    doc_ranks = rank_ngrams(text[:_DETECT_PREFIX])
    doc_ranks = {g: r for g, r in doc_ranks.items() if any(g in p.ngram_ranks for p in profiles)}
    if not doc_ranks:
        return "und", 0.0
    scored = sorted((out_of_place(doc_ranks, p), p.lang) for p in profiles)
    best, lang = scored[0]
    if len(scored) == 1:
        return lang, 1.0 - best / (len(doc_ranks) * PROFILE_SIZE)
    runner_up = scored[1][0]
    conf = (runner_up - best) / runner_up if runner_up else 0.0
    return lang, conf


def filter_language(
    doc: Document,
    target_langs,
    detector: Optional[LanguageDetector] = None,
) -> tuple:
    """Return ``(decision, doc)``; kept documents get ``lang`` set to the detected code."""
    lang, conf = (detector or detect_language)(doc.text)
    if lang not in target_langs:
        return drop("lang.mismatch", f"{lang}:{conf:.3f}"), doc
    if lang == "en" and has_cjk(doc.text):
        return drop("lang.mixed_cjk"), doc
    if doc.lang != lang:
        doc = replace(doc, lang=lang)
    return KEEP, doc
