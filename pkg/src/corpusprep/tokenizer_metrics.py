"""Byte-level BPE encoding with digit splitting and indentation tokens.

Vocabulary files use the usual printable byte-to-unicode alphabet for byte
tokens (one token per line, id = line number); merge files hold one
``left right`` pair per line in the same alphabet.
"""
from __future__ import annotations

import functools
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from . import kernels
from .model import ConfigError, Document

SPACE_TOKENS = (("[space8]", 8), ("[space4]", 4), ("[space3]", 3), ("[space2]", 2))
SPACE_WIDTH = dict(SPACE_TOKENS)
_DIGIT_SPLIT = re.compile(r"[0-9]|[^0-9]+")
_DIGIT_SPLIT_B = re.compile(rb"[0-9]|[^0-9]+")
_MAX_ID = 2**31 - 1
_CACHE_LIMIT = 1 << 16


@functools.lru_cache(maxsize=None)
def bytes_to_unicode() -> dict:
    printable = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    chars = printable[:]
    n = 0
    for b in range(256):
        if b not in printable:
            printable.append(b)
            chars.append(256 + n)
            n += 1
    return {b: chr(c) for b, c in zip(printable, chars)}


@functools.lru_cache(maxsize=None)
def unicode_to_bytes() -> dict:
    return {c: b for b, c in bytes_to_unicode().items()}


def _to_bytes(token) -> bytes:
    if isinstance(token, bytes):
        return token
    table = unicode_to_bytes()
    try:
        return bytes(table[ch] for ch in token)
    except KeyError as exc:
        raise ConfigError(f"token {token!r} is not in the byte alphabet") from exc


def _to_printable(token: bytes) -> str:
    table = bytes_to_unicode()
    return "".join(table[b] for b in token)


# --------------------------------------------------------- pretokenization


def pretokenize_digits(text: str) -> list:
    """Split so every ASCII digit is its own piece; concatenation gives ``text`` back."""
    return _DIGIT_SPLIT.findall(text)


def indent_tokens(n_spaces: int) -> list:
    """Greedy decomposition of a leading-space run; a leftover single space stays literal."""
    out = []
    for name, width in SPACE_TOKENS:
        while n_spaces >= width:
            out.append(name)
            n_spaces -= width
    if n_spaces:
        out.append(" ")
    return out


def encode_indent(line: str) -> str:
    stripped = line.lstrip(" ")
    return "".join(indent_tokens(len(line) - len(stripped))) + stripped


_INDENT_PREFIX = re.compile(r"^(?:\[space(?:8|4|3|2)\])+ ?")


def decode_indent(line: str) -> str:
    m = _INDENT_PREFIX.match(line)
    if not m:
        return line
    prefix = m.group(0)
    width = sum(SPACE_WIDTH[t] for t in re.findall(r"\[space\d\]", prefix))
    return " " * (width + prefix.endswith(" ")) + line[m.end() :]


# --------------------------------------------------------------- vocabulary


@dataclass
class BpeVocab:
    tokens: list  # id -> bytes (specials hold their name encoded)
    merges: list  # (left_id, right_id, merged_id) in priority order
    specials: dict = field(default_factory=dict)  # name -> id

    def __post_init__(self):
        if len(self.tokens) > _MAX_ID:
            raise ConfigError("vocabulary too large")
        special_ids = set(self.specials.values())
        self.token_to_id = {}
        for i, tok in enumerate(self.tokens):
            if i not in special_ids:
                self.token_to_id.setdefault(tok, i)
        for b in range(256):
            if bytes([b]) not in self.token_to_id:
                raise ConfigError(f"vocabulary lacks base byte 0x{b:02x}")
        for name, _ in SPACE_TOKENS:
            if name not in self.specials:
                raise ConfigError(f"vocabulary lacks special token {name}")
        self.byte_ids = [self.token_to_id[bytes([b])] for b in range(256)]
        self.space_ids = {name: self.specials[name] for name, _ in SPACE_TOKENS}
        self.id_bytes = list(self.tokens)
        for name, tid in self.specials.items():
            self.id_bytes[tid] = b" " * SPACE_WIDTH.get(name, 0)
        reachable = {self.byte_ids[b] for b in range(256)}
        self.ranks = {}
        for rank, (left, right, merged) in enumerate(self.merges):
            if left not in reachable or right not in reachable:
                raise ConfigError(f"merge #{rank} uses a token not derivable from earlier merges")
            if self.tokens[merged] != self.tokens[left] + self.tokens[right]:
                raise ConfigError(f"merge #{rank} result does not equal left+right")
            if merged in special_ids:
                raise ConfigError(f"merge #{rank} produces a special token")
            key = (left << 32) | right
            self.ranks.setdefault(key, (rank << 32) | merged)
            reachable.add(merged)
        self._cache: dict = {}

    def __len__(self):
        return len(self.tokens)

    @classmethod
    def byte_level(cls, merges: Sequence = ()) -> "BpeVocab":
        """256 byte tokens, one new token per merge, then the indent specials."""
        tokens = [bytes([b]) for b in range(256)]
        index = {t: i for i, t in enumerate(tokens)}
        merge_ids = []
        for left, right in merges:
            lb, rb = _to_bytes(left), _to_bytes(right)
            if lb not in index or rb not in index:
                raise ConfigError(f"merge ({left!r}, {right!r}) references unknown tokens")
            merged = lb + rb
            if merged not in index:
                index[merged] = len(tokens)
                tokens.append(merged)
            merge_ids.append((index[lb], index[rb], index[merged]))
        specials = {}
        for name, _ in SPACE_TOKENS:
            specials[name] = len(tokens)
            tokens.append(name.encode("latin-1"))
        return cls(tokens, merge_ids, specials)

    @classmethod
    def from_files(cls, vocab_path, merges_path) -> "BpeVocab":
        tokens, specials = [], {}
        with open(vocab_path, encoding="utf-8") as fh:
            for line in fh:
                tok = line.rstrip("\n")
                if tok in SPACE_WIDTH:
                    specials[tok] = len(tokens)
                    tokens.append(tok.encode("latin-1"))
                elif tok:
                    tokens.append(_to_bytes(tok))
                else:
                    raise ConfigError(f"{vocab_path}:{len(tokens) + 1}: empty token")
        for name, _ in SPACE_TOKENS:
            if name not in specials:
                specials[name] = len(tokens)
                tokens.append(name.encode("latin-1"))
        index = {}
        for i, t in enumerate(tokens):
            if i not in specials.values():
                index.setdefault(t, i)
        merges = []
        with open(merges_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line or line.startswith("#version"):
                    continue
                parts = line.split(" ")
                if len(parts) != 2:
                    raise ConfigError(f"{merges_path}:{lineno}: expected 'left right'")
                lb, rb = _to_bytes(parts[0]), _to_bytes(parts[1])
                try:
                    merges.append((index[lb], index[rb], index[lb + rb]))
                except KeyError as exc:
                    raise ConfigError(f"{merges_path}:{lineno}: token missing from vocabulary") from exc
        return cls(tokens, merges, specials)

    def save(self, vocab_path, merges_path):
        special_ids = {i: n for n, i in self.specials.items()}
        with open(vocab_path, "w", encoding="utf-8") as fh:
            for i, tok in enumerate(self.tokens):
                fh.write((special_ids[i] if i in special_ids else _to_printable(tok)) + "\n")
        with open(merges_path, "w", encoding="utf-8") as fh:
            for left, right, _ in self.merges:
                fh.write(f"{_to_printable(self.tokens[left])} {_to_printable(self.tokens[right])}\n")

    def encode_piece(self, piece: bytes) -> list:
        cached = self._cache.get(piece)
        if cached is not None:
            return cached
        ids = [self.byte_ids[b] for b in piece]
        if self.ranks and len(ids) > 1:
            ids = kernels.bpe_merge(ids, self.ranks)
        if len(self._cache) < _CACHE_LIMIT and len(piece) < 256:
            self._cache[piece] = ids
        return ids


# ------------------------------------------------------------ encode/decode


def bpe_encode_bytes(data: bytes, vocab: BpeVocab, indent: bool = True) -> list:
    out: list = []
    lines = data.split(b"\n")
    for n, line in enumerate(lines):
        if n:
            out.append(vocab.byte_ids[0x0A])
        if indent:
            body = line.lstrip(b" ")
            for tok in indent_tokens(len(line) - len(body)):
                out.append(vocab.byte_ids[0x20] if tok == " " else vocab.space_ids[tok])
            line = body
        for piece in _DIGIT_SPLIT_B.findall(line):
            out.extend(vocab.encode_piece(piece))
    return out


def bpe_encode(text: str, vocab: BpeVocab, indent: bool = True) -> list:
    return bpe_encode_bytes(text.encode("utf-8"), vocab, indent)


def bpe_decode_bytes(ids: Iterable[int], vocab: BpeVocab) -> bytes:
    table = vocab.id_bytes
    return b"".join(table[i] for i in ids)


def bpe_decode(ids: Iterable[int], vocab: BpeVocab) -> str:
    return bpe_decode_bytes(ids, vocab).decode("utf-8")


# ------------------------------------------------------------- compression


@dataclass
class CompressionReport:
    utf8_bytes: int
    token_count: int
    documents: int

    @property
    def rate(self) -> float:
        return self.utf8_bytes / self.token_count if self.token_count else 0.0

    def to_dict(self) -> dict:
        return {
            "documents": self.documents,
            "utf8_bytes": self.utf8_bytes,
            "token_count": self.token_count,
            "rate": self.rate,
        }


def compression_rate(corpus: Iterable, vocab: BpeVocab, indent: bool = True) -> CompressionReport:
    """UTF-8 bytes per token over a corpus of documents or strings."""
    n_bytes = n_tokens = n_docs = 0
    for item in corpus:
        text = item.text if isinstance(item, Document) else item
        data = text.encode("utf-8")
        n_bytes += len(data)
        n_tokens += len(bpe_encode_bytes(data, vocab, indent))
        n_docs += 1
    if n_docs == 0:
        raise ValueError("compression rate needs a nonempty corpus")
    return CompressionReport(n_bytes, n_tokens, n_docs)


def default_vocab(merges: Optional[Sequence] = None) -> BpeVocab:
    return BpeVocab.byte_level(merges or ())
