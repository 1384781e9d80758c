"""Stage cascade: prepare -> clean -> dedup (-> mix), with retention accounting."""
from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from . import clean, fuzzy_dedup, mixture, prepare
from .config import PipelineConfig
from .model import REASON_CODES, ConfigError, Document, read_corpus, write_corpus

logger = logging.getLogger(__name__)

STAGE_GROUPS = {
    "url_keyword": "prepare",
    "exact_dedup": "prepare",
    "language": "prepare",
    "junk": "clean",
    "doc_rules": "clean",
    "quality": "clean",
    "pii": "clean",
    "doc_dedup": "dedup",
    "para_dedup": "dedup",
    "sent_dedup": "dedup",
}


def _pct(n_in: int, n_out: int) -> float:
    return 100.0 * (n_in - n_out) / n_in if n_in else 0.0


@dataclass
class StageEntry:
    stage: str
    docs_in: int
    docs_out: int
    chars_in: int
    chars_out: int
    drops: dict = field(default_factory=dict)
    notes: dict = field(default_factory=dict)

    @property
    def group(self) -> str:
        return STAGE_GROUPS.get(self.stage, self.stage)

    @property
    def removal_pct_docs(self) -> float:
        return _pct(self.docs_in, self.docs_out)

    @property
    def removal_pct_chars(self) -> float:
        return _pct(self.chars_in, self.chars_out)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "group": self.group,
            "docs_in": self.docs_in,
            "docs_out": self.docs_out,
            "chars_in": self.chars_in,
            "chars_out": self.chars_out,
            "removal_pct_docs": self.removal_pct_docs,
            "removal_pct_chars": self.removal_pct_chars,
            "drops": dict(sorted(self.drops.items())),
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "StageEntry":
        return cls(
            stage=d["stage"],
            docs_in=d["docs_in"],
            docs_out=d["docs_out"],
            chars_in=d["chars_in"],
            chars_out=d["chars_out"],
            drops=dict(d.get("drops", {})),
            notes=dict(d.get("notes", {})),
        )


@dataclass
class CascadeReport:
    stages: list = field(default_factory=list)
    skipped_lines: int = 0
    seed: int = 0
    mixture: Optional[dict] = None

    @property
    def docs_in(self) -> int:
        return self.stages[0].docs_in if self.stages else 0

    @property
    def docs_out(self) -> int:
        return self.stages[-1].docs_out if self.stages else 0

    @property
    def overall_retention_docs(self) -> float:
        return self.docs_out / self.docs_in if self.docs_in else 1.0

    def group_summary(self) -> list:
        """Per stage group: (group, docs_in, docs_out, chars_in, chars_out)."""
        out = []
        for entry in self.stages:
            if out and out[-1][0] == entry.group:
                g = out[-1]
                out[-1] = (g[0], g[1], entry.docs_out, g[3], entry.chars_out)
            else:
                out.append((entry.group, entry.docs_in, entry.docs_out, entry.chars_in, entry.chars_out))
        return out

    def check(self):
        """Raise AssertionError when the accounting invariants do not hold."""
        prev = None
        for e in self.stages:
            assert 0 <= e.docs_out <= e.docs_in, e.stage
            assert sum(e.drops.values()) == e.docs_in - e.docs_out, e.stage
            assert set(e.drops) <= REASON_CODES, e.stage
            if prev is not None:
                assert prev.docs_out == e.docs_in, (prev.stage, e.stage)
                assert prev.chars_out == e.chars_in, (prev.stage, e.stage)
            prev = e
        dropped = sum(sum(e.drops.values()) for e in self.stages)
        assert self.docs_in == dropped + self.docs_out

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "skipped_lines": self.skipped_lines,
            "docs_in": self.docs_in,
            "docs_out": self.docs_out,
            "stages": [e.to_dict() for e in self.stages],
            "mixture": self.mixture,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "CascadeReport":
        return cls(
            stages=[StageEntry.from_dict(s) for s in d.get("stages", [])],
            skipped_lines=d.get("skipped_lines", 0),
            seed=d.get("seed", 0),
            mixture=d.get("mixture"),
        )

    @classmethod
    def from_json(cls, text: str) -> "CascadeReport":
        return cls.from_dict(json.loads(text))


def report_cascade(report: CascadeReport, fmt: str = "table") -> str:
    if fmt == "json":
        return report.to_json()
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    header = f"{'stage':<12} {'group':<8} {'docs_in':>9} {'docs_out':>9} {'docs%':>7} {'chars_in':>12} {'chars_out':>12} {'chars%':>7}  top reasons"
    lines = [header, "-" * len(header)]
    for e in report.stages:
        reasons = ", ".join(f"{r}={n}" for r, n in sorted(e.drops.items(), key=lambda kv: (-kv[1], kv[0]))[:3])
        lines.append(
            f"{e.stage:<12} {e.group:<8} {e.docs_in:>9} {e.docs_out:>9} {e.removal_pct_docs:>6.2f}%"
            f" {e.chars_in:>12} {e.chars_out:>12} {e.removal_pct_chars:>6.2f}%  {reasons}"
        )
    lines.append("-" * len(header))
    for group, d_in, d_out, c_in, c_out in report.group_summary():
        lines.append(
            f"{group:<12} {'':<8} {d_in:>9} {d_out:>9} {_pct(d_in, d_out):>6.2f}%"
            f" {c_in:>12} {c_out:>12} {_pct(c_in, c_out):>6.2f}%"
        )
    total_chars_in = report.stages[0].chars_in if report.stages else 0
    total_chars_out = report.stages[-1].chars_out if report.stages else 0
    lines.append(
        f"{'overall':<12} {'':<8} {report.docs_in:>9} {report.docs_out:>9}"
        f" {_pct(report.docs_in, report.docs_out):>6.2f}% {total_chars_in:>12} {total_chars_out:>12}"
        f" {_pct(total_chars_in, total_chars_out):>6.2f}%"
    )
    if report.skipped_lines:
        lines.append(f"malformed input lines skipped: {report.skipped_lines}")
    return "\n".join(lines) + "\n"


# ------------------------------------------------------------------ stages


@dataclass
class Resources:
    """Everything loaded from disk up front so bad paths fail before any work."""

    site_lists: prepare.SiteLists
    junk: clean.JunkScorer
    pii: clean.PiiRules
    quality_scorer: Optional[object] = None
    language_detector: Optional[object] = None


def load_resources(config: PipelineConfig) -> Resources:
    config.validate()
    try:
        return _load_resources(config)
    except OSError as exc:
        raise ConfigError(f"cannot read resource file: {exc}") from exc


def _load_resources(config: PipelineConfig) -> Resources:
    p, c = config.prepare, config.clean
    lists = prepare.SiteLists.from_files(
        blacklist=p.blacklist,
        whitelist=p.whitelist,
        keywords=p.keywords,
        ratings=p.ratings,
        rating_threshold=p.rating_threshold,
        default_rating=p.default_rating,
    )
    phrases = clean.load_phrases(c.boilerplate) if c.boilerplate else None
    junk = clean.JunkScorer(clean.HeuristicJunkScorer(phrases), c.junk_threshold)
    pii = clean.PiiRules.load(c.pii_rules) if c.pii_rules else clean.PiiRules.default()
    scorer = clean.HttpQualityScorer(c.quality_endpoint, c.quality_timeout) if c.quality_endpoint else None
    return Resources(lists, junk, pii, scorer)


def _chars(docs: Sequence[Document]) -> int:
    return sum(len(d.text) for d in docs)


class _Recorder:
    def __init__(self, report: CascadeReport):
        self.report = report

    def per_doc(self, name, docs, fn, notes=None):
        """Run ``fn(doc) -> (decision, doc_out)`` over ``docs``."""
        kept, drops = [], Counter()
        for doc in docs:
            decision, new = fn(doc)
            if decision.keep:
                kept.append(new)
            else:
                drops[decision.reason] += 1
        self.add(name, docs, kept, drops, notes)
        return kept

    def add(self, name, docs_in, docs_out, drops, notes=None):
        self.report.stages.append(
            StageEntry(name, len(docs_in), len(docs_out), _chars(docs_in), _chars(docs_out), dict(drops), notes or {})
        )


def _drops(decisions) -> Counter:
    return Counter(d.reason for d in decisions if not d.keep)


def run_stages(
    docs: Sequence[Document],
    config: PipelineConfig,
    resources: Optional[Resources] = None,
    signature_cache: Optional[dict] = None,
):
    """Run the filtering cascade in memory; returns ``(docs_out, CascadeReport)``."""
    resources = resources or load_resources(config)
    report = CascadeReport(seed=config.rng_seed)
    rec = _Recorder(report)
    p, c, dd = config.prepare, config.clean, config.dedup
    docs = list(docs)

    if p.enabled:
        docs = rec.per_doc("url_keyword", docs, lambda d: (prepare.filter_url(d, resources.site_lists), d))
        if p.exact_dedup:
            deduper = prepare.ExactDeduper()
            docs = rec.per_doc("exact_dedup", docs, lambda d: (deduper.check(d), d))
        if p.language_filter:
            targets = set(p.target_langs)
            docs = rec.per_doc(
                "language",
                docs,
                lambda d: prepare.filter_language(d, targets, resources.language_detector),
            )

    if c.enabled:
        docs = rec.per_doc("junk", docs, lambda d: clean.clean_junk(d, resources.junk))
        docs = rec.per_doc(
            "doc_rules",
            docs,
            lambda d: (clean.apply_document_rules(d, c.doc_rules, config.exam_source_tags), d),
        )
        docs = rec.per_doc(
            "quality",
            docs,
            lambda d: (
                clean.filter_quality(d, c.quality_threshold, resources.quality_scorer, c.quality_fail_open),
                d,
            ),
        )
        pii_counts: Counter = Counter()

        def _redact(d):
            text, counts = clean.redact_pii(d.text, resources.pii)
            pii_counts.update(counts)
            return clean.KEEP, (d if text == d.text else replace(d, text=text))

        docs = rec.per_doc("pii", docs, _redact)
        report.stages[-1].notes = {"replacements": dict(sorted(pii_counts.items()))}

    if dd.doc:
        res = fuzzy_dedup.doc_dedup(
            docs,
            bands=dd.bands,
            rows=dd.rows,
            seed=config.rng_seed,
            shingle_words=dd.shingle_words,
            verify=dd.verify,
            verify_threshold=dd.verify_threshold,
            signature_cache=signature_cache,
        )
        rec.add(
            "doc_dedup",
            docs,
            res.kept,
            _drops(res.decisions),
            {"clusters": len(res.clusters), "candidate_pairs": res.candidates},
        )
        docs = res.kept
    if dd.para:
        res = fuzzy_dedup.paragraph_dedup(docs, dd.para_ratio, config.rng_seed)
        rec.add("para_dedup", docs, res.kept, _drops(res.decisions), {"groups": res.groups, "deleted": res.deleted})
        docs = res.kept
    if dd.sent:
        res = fuzzy_dedup.sentence_dedup(docs, dd.sent_ngram)
        rec.add("sent_dedup", docs, res.kept, _drops(res.decisions), {"deleted": res.deleted})
        docs = res.kept
    return docs, report


def mix_documents(docs: Sequence[Document], config: PipelineConfig):
    """Apply the configured mixture to ``docs`` grouped by source tag."""
    m = config.mix
    by_source: dict = {}
    for d in docs:
        by_source.setdefault(d.source, []).append(d)
    stats = mixture.source_stats(docs)
    known = {s.source for s in stats}
    stats += [mixture.SourceStats(s, 0) for s in m.targets if s not in known]
    plan = mixture.plan_mixture(stats, m.targets, m.budget_tokens, m.max_epochs)
    out = list(unique_ids(mixture.sample_stream(by_source, plan, config.rng_seed)))
    return out, plan


def unique_ids(stream):
    """Suffix repeated document ids (``id~2``, ``id~3``...) so output ids stay unique."""
    seen: Counter = Counter()
    for doc in stream:
        seen[doc.id] += 1
        n = seen[doc.id]
        yield doc if n == 1 else replace(doc, id=f"{doc.id}~{n}")


def run_pipeline(
    config: PipelineConfig,
    input_path,
    output_path,
    report_path=None,
) -> CascadeReport:
    resources = load_resources(config)  # fail fast on bad config before reading input
    reader = read_corpus(input_path)
    docs = list(reader)
    out, report = run_stages(docs, config, resources)
    report.skipped_lines = reader.skipped
    if config.mix.enabled:
        out, plan = mix_documents(out, config)
        report.mixture = plan.to_dict()
        report.mixture["docs_out"] = len(out)
    report.check()
    write_corpus(out, output_path)
    if report_path is not None:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
    return report


__all__ = [
    "CascadeReport",
    "ConfigError",
    "Resources",
    "StageEntry",
    "load_resources",
    "mix_documents",
    "report_cascade",
    "run_pipeline",
    "run_stages",
]
