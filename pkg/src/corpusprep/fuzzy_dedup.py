"""Multi-level deduplication: MinHash/LSH documents, paragraphs, sentences."""
from __future__ import annotations

import logging
import math
import random
import struct
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from . import kernels
from .kernels import hash64
from .model import (
    KEEP,
    ConfigError,
    DedupStats,
    Document,
    drop,
    normalize_text,
    split_sentences,
    word_tokens,
)

logger = logging.getLogger(__name__)

NUM_PERM = 128
MERSENNE_61 = (1 << 61) - 1
VERIFY_AUTO_LIMIT = 10**6


class EmptyShinglesError(ValueError):
    code = "dedup.empty_shingles"

    def __init__(self, detail=""):
        super().__init__(f"{self.code}: {detail}" if detail else self.code)


# ---------------------------------------------------------------- shingles


def shingle(text: str, w: int = 5) -> frozenset:
    """64-bit hashes of every w-word window (lowercased, whitespace-collapsed).

    CJK ideographs count as words. Texts with fewer than ``w`` words give a
    single shingle of the whole normalized text; blank text gives none.
    """
    words = word_tokens(normalize_text(text).lower())
    if not words:
        return frozenset()
    if len(words) < w:
        return frozenset({hash64(" ".join(words))})
    return frozenset(hash64(" ".join(words[i : i + w])) for i in range(len(words) - w + 1))


def jaccard(a, b) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


# ------------------------------------------------------------------ minhash


@dataclass(frozen=True)
class MinHashSignature:
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != (NUM_PERM,):
            raise ValueError(f"signature must have {NUM_PERM} components")

    def jaccard(self, other: "MinHashSignature") -> float:
        return float(np.count_nonzero(self.values == other.values)) / NUM_PERM

    def __eq__(self, other):
        return isinstance(other, MinHashSignature) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())


class MinHasher:
    """128 universal hashes ``(a*x + b) mod (2**61 - 1)`` seeded from one integer."""

    def __init__(self, seed: int = 0, num_perm: int = NUM_PERM):
        if num_perm != NUM_PERM:
            raise ConfigError(f"signatures have exactly {NUM_PERM} components")
        rng = np.random.default_rng(seed)
        self.seed = seed
        self.a = rng.integers(1, MERSENNE_61, size=num_perm, dtype=np.uint64)
        self.b = rng.integers(0, MERSENNE_61, size=num_perm, dtype=np.uint64)

    def signature(self, shingles) -> MinHashSignature:
        return self.signatures([shingles])[0]

    def signatures(self, shingle_sets: Sequence) -> list:
        offsets = np.zeros(len(shingle_sets) + 1, dtype=np.int64)
        for i, s in enumerate(shingle_sets):
            if not s:
                raise EmptyShinglesError(f"set #{i} is empty")
            offsets[i + 1] = offsets[i] + len(s)
        flat = np.fromiter(
            (h for s in shingle_sets for h in s), dtype=np.uint64, count=int(offsets[-1])
        )
        mat = kernels.minhash_batch(flat, offsets, self.a, self.b)
        return [MinHashSignature(row) for row in np.asarray(mat)]


def minhash_signature(shingles, seed: int = 0) -> MinHashSignature:
    return MinHasher(seed).signature(shingles)


# ---------------------------------------------------------------------- LSH


def _check_bands(b: int, r: int):
    if b < 1 or r < 1 or b * r != NUM_PERM:
        raise ConfigError(f"bands*rows must equal {NUM_PERM}, got {b}*{r}")


class LshIndex:
    def __init__(self, bands: int = 16, rows: int = 8):
        _check_bands(bands, rows)
        self.bands, self.rows = bands, rows
        self.buckets: list = [defaultdict(list) for _ in range(bands)]

    def insert(self, key, sig: MinHashSignature):
        raw = sig.values
        for band in range(self.bands):
            chunk = raw[band * self.rows : (band + 1) * self.rows].tobytes()
            self.buckets[band][chunk].append(key)

    def candidate_pairs(self) -> set:
        pairs = set()
        for table in self.buckets:
            for members in table.values():
                if len(members) < 2:
                    continue
                for i, a in enumerate(members):
                    for b in members[i + 1 :]:
                        pairs.add((a, b) if a < b else (b, a))
        return pairs


def lsh_candidates(signatures, b: int = 16, r: int = 8) -> set:
    """Pairs of keys whose signatures agree on every row of at least one band.

    ``signatures`` is a sequence (keys are indices) or a mapping key -> signature.
    """
    index = LshIndex(b, r)
    items = signatures.items() if hasattr(signatures, "items") else enumerate(signatures)
    for key, sig in items:
        index.insert(key, sig)
    return index.candidate_pairs()


def detection_probability(j: float, b: int = 16, r: int = 8) -> float:
    return 1.0 - (1.0 - j**r) ** b


# -------------------------------------------------------------- union-find


class UnionFind:
    """Disjoint sets over integers; the root of a set is its smallest member."""

    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        parent = self.parent
        root = x
        while parent.get(root, root) != root:
            root = parent[root]
        while x != root:
            nxt = parent.get(x, x)
            parent[x] = root
            x = nxt
        return root

    def union(self, x, y) -> bool:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return False
        if ry < rx:
            rx, ry = ry, rx
        self.parent[ry] = rx
        self.parent.setdefault(rx, rx)
        return True

    def clusters(self) -> list:
        groups = defaultdict(list)
        for x in self.parent:
            groups[self.find(x)].append(x)
        return sorted(sorted(g) for g in groups.values() if len(g) > 1)


# ---------------------------------------------------------- document dedup


@dataclass
class DocDedupResult:
    kept: list
    decisions: list
    clusters: list
    stats: DedupStats
    candidates: int = 0
    verified: int = 0


def doc_dedup(
    docs: Iterable[Document],
    bands: int = 16,
    rows: int = 8,
    seed: int = 0,
    shingle_words: int = 5,
    verify: Optional[bool] = None,
    verify_threshold: float = 0.8,
    signature_cache: Optional[dict] = None,
) -> DocDedupResult:
    """Cluster near-duplicates and keep the earliest document of each cluster.

    With ``verify`` on (default below a million documents) a candidate pair
    is only merged when the exact Jaccard of the shingle sets reaches
    ``verify_threshold``; otherwise every LSH candidate pair is merged.
    """
    _check_bands(bands, rows)
    docs = list(docs)
    if verify is None:
        verify = len(docs) < VERIFY_AUTO_LIMIT
    shingles = [shingle(d.text, shingle_words) for d in docs]
    hasher = MinHasher(seed)
    index = LshIndex(bands, rows)
    cache = signature_cache if signature_cache is not None else {}
    sigs: dict = {}
    todo = []
    for i, s in enumerate(shingles):
        if not s:
            continue
        if docs[i].id in cache:
            sigs[i] = cache[docs[i].id]
        else:
            todo.append(i)
    if todo:
        for i, sig in zip(todo, hasher.signatures([shingles[i] for i in todo])):
            sigs[i] = sig
            if signature_cache is not None:
                signature_cache[docs[i].id] = sig
    for i in sorted(sigs):
        index.insert(i, sigs[i])

    uf = UnionFind()
    pairs = sorted(index.candidate_pairs())
    verified = 0
    for a, b in pairs:
        if uf.find(a) == uf.find(b):
            continue
        if verify:
            if jaccard(shingles[a], shingles[b]) < verify_threshold:
                continue
            verified += 1
        uf.union(a, b)

    stats = DedupStats()
    kept, decisions = [], []
    for i, doc in enumerate(docs):
        root = uf.find(i)
        decision = KEEP if root == i else drop("dedup.doc", docs[root].id)
        stats.record(decision)
        decisions.append(decision)
        if decision.keep:
            kept.append(doc)
    return DocDedupResult(kept, decisions, uf.clusters(), stats, len(pairs), verified)


# --------------------------------------------------------- signature cache

_CACHE_MAGIC = b"CPMHSIG1"
_CACHE_HEADER = struct.Struct("<8sIQ")


def write_signature_cache(path, signatures: dict, seed: int):
    """Binary cache: header (magic, k, seed) then (id length, id, k x u64) records."""
    with open(path, "wb") as fh:
        fh.write(_CACHE_HEADER.pack(_CACHE_MAGIC, NUM_PERM, seed))
        for doc_id, sig in signatures.items():
            raw = doc_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(sig.values.astype("<u8").tobytes())


def read_signature_cache(path, seed: Optional[int] = None) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(_CACHE_HEADER.size)
        if len(head) != _CACHE_HEADER.size:
            raise ValueError(f"{path}: truncated signature cache header")
        magic, k, file_seed = _CACHE_HEADER.unpack(head)
        if magic != _CACHE_MAGIC or k != NUM_PERM:
            raise ValueError(f"{path}: not a {NUM_PERM}-component signature cache")
        if seed is not None and file_seed != seed:
            raise ValueError(f"{path}: cache seed {file_seed} != {seed}")
        out = {}
        while True:
            raw_len = fh.read(4)
            if not raw_len:
                break
            (n,) = struct.unpack("<I", raw_len)
            doc_id = fh.read(n).decode("utf-8")
            values = np.frombuffer(fh.read(8 * NUM_PERM), dtype="<u8")
            if values.shape != (NUM_PERM,):
                raise ValueError(f"{path}: truncated record for {doc_id!r}")
            out[doc_id] = MinHashSignature(values.astype(np.uint64))
    return out


# --------------------------------------------------------- paragraph dedup


@dataclass
class ParaDedupResult:
    kept: list
    decisions: list
    stats: DedupStats
    groups: int = 0
    deleted: int = 0
    # normalized-paragraph hash -> (group size, survivors)
    group_sizes: dict = field(default_factory=dict)


def paragraph_dedup(docs: Iterable[Document], delete_ratio: float = 0.30, seed: int = 0) -> ParaDedupResult:
    """Delete ``floor(ratio * g)`` later copies from every group of ``g`` identical paragraphs.

    Blank lines are not paragraphs for grouping purposes. The first copy in
    corpus order always survives; which later copies go is a seeded draw.
    """
    if not 0.0 <= delete_ratio < 1.0:
        raise ConfigError("delete_ratio must lie in [0, 1)")
    docs = list(docs)
    lines = [d.text.split("\n") for d in docs]
    groups: dict = {}
    for di, doc_lines in enumerate(lines):
        for pi, line in enumerate(doc_lines):
            norm = normalize_text(line)
            if norm:
                groups.setdefault(hash64(norm), []).append((di, pi))

    rng = random.Random(seed)
    doomed = set()
    sizes = {}
    n_groups = 0
    for key, occ in groups.items():
        g = len(occ)
        if g < 2:
            continue
        n_groups += 1
        k = math.floor(delete_ratio * g + 1e-9)
        if k:
            doomed.update(rng.sample(occ[1:], k))
        sizes[key] = (g, g - k)

    stats = DedupStats()
    kept, decisions = [], []
    for di, doc in enumerate(docs):
        doc_lines = lines[di]
        survivors = [ln for pi, ln in enumerate(doc_lines) if (di, pi) not in doomed]
        if len(survivors) == len(doc_lines):
            decision, new = KEEP, doc
        else:
            text = "\n".join(survivors)
            if text.strip():
                decision, new = KEEP, replace(doc, text=text)
            else:
                decision, new = drop("dedup.para_empty"), None
        stats.record(decision)
        decisions.append(decision)
        if new is not None:
            kept.append(new)
    return ParaDedupResult(kept, decisions, stats, n_groups, len(doomed), sizes)


# ---------------------------------------------------------- sentence dedup


@dataclass
class SentDedupResult:
    kept: list
    decisions: list
    stats: DedupStats
    counts: dict
    retained: dict
    deleted: int = 0


def _sentence_layout(text: str, ngram_n: int):
    """Per document: list of (paragraph sentences, per-sentence key or None)."""
    paragraphs = [split_sentences(p) for p in text.split("\n")]
    flat = []  # (para index, sentence index, words)
    stream = []
    for pi, sents in enumerate(paragraphs):
        for si, sent in enumerate(sents):
            words = word_tokens(normalize_text(sent))
            flat.append((pi, si, len(stream), words))
            stream.extend(words)
    keys = {}
    for pi, si, start, words in flat:
        if not words:
            continue
        if len(words) >= ngram_n:
            keys[(pi, si)] = "s\x00" + " ".join(words)
        else:
            # near the end the window shifts left; the offset keeps the last
            # few short sentences of one document from sharing a key
            lo = min(start, max(0, len(stream) - ngram_n))
            keys[(pi, si)] = f"w\x00{start - lo}\x00" + " ".join(stream[lo : lo + ngram_n])
    return paragraphs, {k: hash64(v) for k, v in keys.items()}


def sentence_key_counts(docs: Iterable[Document], ngram_n: int = 16) -> dict:
    counts: dict = defaultdict(int)
    for doc in docs:
        _, keys = _sentence_layout(doc.text, ngram_n)
        for key in keys.values():
            counts[key] += 1
    return dict(counts)


def sentence_dedup(docs: Iterable[Document], ngram_n: int = 16) -> SentDedupResult:
    """Keep the first ``isqrt(N)`` occurrences of every sentence key seen N times.

    Sentences of at least ``ngram_n`` words are keyed by their own normalized
    text. Shorter ones are keyed by the ``ngram_n``-word window starting at
    their first word (shifted left at the end of a document, with the
    sentence's offset inside the window), so a short sentence only repeats
    when its surrounding context repeats too.
    """
    if ngram_n < 2:
        raise ConfigError("ngram_n must be >= 2")
    docs = list(docs)
    layouts = [_sentence_layout(d.text, ngram_n) for d in docs]
    counts: dict = defaultdict(int)
    for _, keys in layouts:
        for key in keys.values():
            counts[key] += 1
    budget = {key: math.isqrt(n) for key, n in counts.items()}
    retained: dict = defaultdict(int)

    stats = DedupStats()
    kept, decisions = [], []
    deleted = 0
    for doc, (paragraphs, keys) in zip(docs, layouts):
        changed = False
        out_paras = []
        for pi, sents in enumerate(paragraphs):
            survivors = []
            for si, sent in enumerate(sents):
                key = keys.get((pi, si))
                if key is not None:
                    if retained[key] >= budget[key]:
                        deleted += 1
                        changed = True
                        continue
                    retained[key] += 1
                survivors.append(sent)
            para = "".join(survivors)
            if sents and "".join(sents).strip() and not para.strip():
                continue  # paragraph emptied by deletion: drop the line
            out_paras.append(para)
        if not changed:
            decision, new = KEEP, doc
        else:
            text = "\n".join(out_paras)
            if text.strip():
                decision, new = KEEP, replace(doc, text=text)
            else:
                decision, new = drop("dedup.sent_empty"), None
        stats.record(decision)
        decisions.append(decision)
        if new is not None:
            kept.append(new)
    return SentDedupResult(kept, decisions, stats, dict(counts), dict(retained), deleted)
