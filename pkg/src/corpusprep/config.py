"""Pipeline configuration: one dataclass per stage, loaded from JSON.

Every field has a default; a config file only needs the keys it changes.
Unknown keys are rejected so typos fail loudly instead of silently using
defaults.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .model import ConfigError

UINT64_MAX = 2**64 - 1


@dataclass
class DocRuleThresholds:
    punct_ratio_max: float = 0.5
    ellipsis_end_ratio_max: float = 0.3
    no_punct_end_ratio_max: float = 0.85
    abnormal_word_ratio_max: float = 0.2
    dup_sentence_frac_max: float = 0.3
    short_para_ratio_max: float = 0.7
    short_para_char_len: int = 10
    rep_ngram_frac_max: tuple = (0.20, 0.18, 0.16)
    exam_loosen_multiplier: float = 1.5

    def validate(self):
        ratios = [
            self.punct_ratio_max,
            self.ellipsis_end_ratio_max,
            self.no_punct_end_ratio_max,
            self.abnormal_word_ratio_max,
            self.dup_sentence_frac_max,
            self.short_para_ratio_max,
            *self.rep_ngram_frac_max,
        ]
        if len(self.rep_ngram_frac_max) != 3:
            raise ConfigError("rep_ngram_frac_max needs exactly three values (n=1,2,3)")
        if not all(0 < r <= 1 for r in ratios):
            raise ConfigError("document-rule ratios must lie in (0, 1]")
        if self.short_para_char_len < 1:
            raise ConfigError("short_para_char_len must be positive")
        if not self.exam_loosen_multiplier > 1.0:
            raise ConfigError("exam_loosen_multiplier must be > 1")

    def loosened(self, factor: Optional[float] = None) -> "DocRuleThresholds":
        """Thresholds scaled by ``factor`` (default: the exam multiplier), capped at 1."""
        f = self.exam_loosen_multiplier if factor is None else factor
        return dataclasses.replace(
            self,
            punct_ratio_max=min(1.0, self.punct_ratio_max * f),
            ellipsis_end_ratio_max=min(1.0, self.ellipsis_end_ratio_max * f),
            no_punct_end_ratio_max=min(1.0, self.no_punct_end_ratio_max * f),
            abnormal_word_ratio_max=min(1.0, self.abnormal_word_ratio_max * f),
            dup_sentence_frac_max=min(1.0, self.dup_sentence_frac_max * f),
            short_para_ratio_max=min(1.0, self.short_para_ratio_max * f),
            rep_ngram_frac_max=tuple(min(1.0, r * f) for r in self.rep_ngram_frac_max),
        )


@dataclass
class PrepareConfig:
    enabled: bool = True
    blacklist: Optional[str] = None
    whitelist: Optional[str] = None
    keywords: Optional[str] = None
    ratings: Optional[str] = None
    rating_threshold: float = 0.5
    default_rating: float = 0.5
    exact_dedup: bool = True
    language_filter: bool = True
    target_langs: tuple = ("en", "zh")

    def validate(self):
        for name in ("rating_threshold", "default_rating"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"prepare.{name} must lie in [0, 1]")
        if self.language_filter and not self.target_langs:
            raise ConfigError("prepare.target_langs is empty")


@dataclass
class CleanConfig:
    enabled: bool = True
    junk_threshold: float = 0.5
    boilerplate: Optional[str] = None
    doc_rules: DocRuleThresholds = field(default_factory=DocRuleThresholds)
    quality_threshold: float = 0.4
    quality_endpoint: Optional[str] = None
    quality_timeout: float = 5.0
    quality_fail_open: bool = True
    pii_rules: Optional[str] = None

    def validate(self):
        if not 0.0 < self.junk_threshold < 1.0:
            raise ConfigError("clean.junk_threshold must lie in (0, 1)")
        if not 0.0 <= self.quality_threshold <= 1.0:
            raise ConfigError("clean.quality_threshold must lie in [0, 1]")
        if self.quality_timeout <= 0:
            raise ConfigError("clean.quality_timeout must be positive")
        self.doc_rules.validate()


@dataclass
class DedupConfig:
    doc: bool = True
    bands: int = 16
    rows: int = 8
    shingle_words: int = 5
    # None = automatic: verify candidate pairs when the corpus is below 10**6 docs
    verify: Optional[bool] = None
    verify_threshold: float = 0.8
    para: bool = True
    para_ratio: float = 0.30
    sent: bool = True
    sent_ngram: int = 16

    def validate(self):
        if self.bands < 1 or self.rows < 1 or self.bands * self.rows != 128:
            raise ConfigError("dedup.bands * dedup.rows must equal 128")
        if self.shingle_words < 1:
            raise ConfigError("dedup.shingle_words must be positive")
        if not 0.0 < self.verify_threshold <= 1.0:
            raise ConfigError("dedup.verify_threshold must lie in (0, 1]")
        if not 0.0 <= self.para_ratio < 1.0:
            raise ConfigError("dedup.para_ratio must lie in [0, 1)")
        if self.sent_ngram < 2:
            raise ConfigError("dedup.sent_ngram must be >= 2")


@dataclass
class MixConfig:
    enabled: bool = False
    targets: dict = field(default_factory=dict)
    budget_tokens: Optional[int] = None
    max_epochs: float = 5.0

    def validate(self):
        if self.max_epochs <= 0:
            raise ConfigError("mix.max_epochs must be positive")
        if not self.enabled:
            return
        if not self.targets:
            raise ConfigError("mix.targets is empty")
        if abs(sum(self.targets.values()) - 1.0) > 1e-9:
            raise ConfigError("mix.targets must sum to 1")
        if any(v < 0 for v in self.targets.values()):
            raise ConfigError("mix.targets must be non-negative")
        if self.budget_tokens is None or self.budget_tokens <= 0:
            raise ConfigError("mix.budget_tokens must be a positive integer")


@dataclass
class PipelineConfig:
    prepare: PrepareConfig = field(default_factory=PrepareConfig)
    clean: CleanConfig = field(default_factory=CleanConfig)
    dedup: DedupConfig = field(default_factory=DedupConfig)
    mix: MixConfig = field(default_factory=MixConfig)
    rng_seed: int = 0
    exam_source_tags: frozenset = frozenset({"exam"})

    def validate(self) -> "PipelineConfig":
        if not 0 <= self.rng_seed <= UINT64_MAX:
            raise ConfigError("rng_seed must be a 64-bit unsigned integer")
        self.prepare.validate()
        self.clean.validate()
        self.dedup.validate()
        self.mix.validate()
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        return _build(cls, data, "").validate()

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        base = Path(path).resolve().parent
        for section, keys in _PATH_KEYS.items():
            sub = data.get(section)
            if isinstance(sub, dict):
                for key in keys:
                    value = sub.get(key)
                    if isinstance(value, str) and value and not Path(value).is_absolute():
                        sub[key] = str(base / value)
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["exam_source_tags"] = sorted(self.exam_source_tags)
        return out


# resource paths inside a config file are relative to the file itself
_PATH_KEYS = {
    "prepare": ("blacklist", "whitelist", "keywords", "ratings"),
    "clean": ("boilerplate", "pii_rules"),
}

_NESTED = {
    "prepare": PrepareConfig,
    "clean": CleanConfig,
    "dedup": DedupConfig,
    "mix": MixConfig,
    "doc_rules": DocRuleThresholds,
}


def _build(cls, data, prefix):
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or 'config'} must be an object")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config key {prefix}{key!r}")
        if key in _NESTED:
            value = _build(_NESTED[key], value, f"{prefix}{key}.")
        elif key in ("target_langs", "rep_ngram_frac_max"):
            value = tuple(value)
        elif key == "exam_source_tags":
            value = frozenset(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
