"""Source mixture planning, interleaved sampling and topic-level holdout."""
from __future__ import annotations

import json
import logging
import math
import random
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Optional, Sequence

from .model import ConfigError, Document, count_cjk

logger = logging.getLogger(__name__)

# Reference pretraining mixture, fraction of tokens per source.
REFERENCE_TARGETS = {
    "webpages": 0.6333,
    "code": 0.0925,
    "math": 0.0731,
    "books": 0.0620,
    "patents": 0.0285,
    "papers": 0.0238,
    "encyclopedia": 0.0096,
    "other": 0.0772,
}

DEFAULT_MAX_EPOCHS = 5.0
_FRACTION_TOL = 1e-9

_CJK_RUN = re.compile(r"[㐀-䶿一-鿿豈-﫿]")


class EmptySourceError(ValueError):
    code = "mixture.empty_source"

    def __init__(self, source):
        super().__init__(f"{self.code}: source {source!r} has no tokens but a positive target")
        self.source = source


def count_tokens(text: str) -> int:
    """Token proxy: whitespace words of the non-CJK text plus one per CJK character."""
    return count_cjk(text) + len(_CJK_RUN.sub(" ", text).split())


@dataclass(frozen=True)
class SourceStats:
    source: str
    available_tokens: int

    def __post_init__(self):
        if self.available_tokens < 0:
            raise ValueError("available_tokens must be >= 0")


def source_stats(docs: Sequence[Document], token_counter: Callable[[str], int] = count_tokens) -> list:
    totals: dict = defaultdict(int)
    for doc in docs:
        totals[doc.source] += token_counter(doc.text)
    return [SourceStats(s, n) for s, n in sorted(totals.items())]


@dataclass
class SourcePlan:
    source: str
    target_fraction: float
    available_tokens: int
    epochs: float
    achieved_fraction: float
    capped: bool

    @property
    def tokens(self) -> float:
        return self.epochs * self.available_tokens


@dataclass
class MixturePlan:
    sources: dict = field(default_factory=dict)  # source -> SourcePlan
    budget_tokens: float = 0.0
    max_epochs: float = DEFAULT_MAX_EPOCHS

    @property
    def capped(self) -> list:
        return sorted(s for s, p in self.sources.items() if p.capped)

    @property
    def planned_tokens(self) -> float:
        return sum(p.tokens for p in self.sources.values())

    def to_dict(self) -> dict:
        return {
            "budget_tokens": self.budget_tokens,
            "max_epochs": self.max_epochs,
            "planned_tokens": self.planned_tokens,
            "capped": self.capped,
            "sources": {
                s: {
                    "target_fraction": p.target_fraction,
                    "available_tokens": p.available_tokens,
                    "epochs": p.epochs,
                    "achieved_fraction": p.achieved_fraction,
                    "capped": p.capped,
                }
                for s, p in sorted(self.sources.items())
            },
        }


def validate_targets(targets: Mapping[str, float]):
    if not targets:
        raise ConfigError("no mixture targets")
    if any(v < 0 or v > 1 for v in targets.values()):
        raise ConfigError("target fractions must lie in [0, 1]")
    total = math.fsum(targets.values())
    if abs(total - 1.0) > _FRACTION_TOL:
        raise ConfigError(f"target fractions sum to {total!r}, not 1")


def plan_mixture(
    stats: Sequence[SourceStats],
    targets: Mapping[str, float],
    total_budget_tokens: float,
    max_epochs: float = DEFAULT_MAX_EPOCHS,
) -> MixturePlan:
    """Epochs per source meeting the target fractions under an epoch cap.

    Each source first asks for ``target * budget / available`` epochs. A source
    that would exceed ``max_epochs`` is pinned at the cap and the budget it
    cannot fill is shared among the uncapped sources in proportion to their
    targets; this repeats until no further source hits the cap.
    """
    validate_targets(targets)
    if total_budget_tokens <= 0:
        raise ConfigError("budget must be positive")
    if max_epochs <= 0:
        raise ConfigError("max_epochs must be positive")
    avail = {s.source: s.available_tokens for s in stats}
    for src, frac in targets.items():
        if src not in avail:
            raise ConfigError(f"target source {src!r} missing from stats")
        if frac > 0 and avail[src] == 0:
            raise EmptySourceError(src)

    active = {s for s, f in targets.items() if f > 0}
    epochs = {s: 0.0 for s in targets}
    capped: set = set()
    while True:
        remaining = total_budget_tokens - sum(max_epochs * avail[s] for s in capped)
        free = active - capped
        weight = math.fsum(targets[s] for s in free)
        newly = set()
        for s in free:
            need = remaining * targets[s] / weight if weight > 0 else 0.0
            e = need / avail[s]
            if e > max_epochs:
                newly.add(s)
            epochs[s] = e
        if not newly:
            break
        capped |= newly
        for s in capped:
            epochs[s] = max_epochs
        if not active - capped:
            break

    achieved_tokens = {s: epochs[s] * avail[s] for s in targets}
    total = math.fsum(achieved_tokens.values())
    plan = MixturePlan(budget_tokens=total_budget_tokens, max_epochs=max_epochs)
    for s in targets:
        plan.sources[s] = SourcePlan(
            source=s,
            target_fraction=targets[s],
            available_tokens=avail[s],
            epochs=epochs[s],
            achieved_fraction=achieved_tokens[s] / total if total else 0.0,
            capped=s in capped,
        )
    if plan.capped:
        logger.warning("sources capped at %s epochs: %s", max_epochs, ", ".join(plan.capped))
    return plan


def sample_stream(
    corpora: Mapping[str, Sequence[Document]],
    plan: MixturePlan,
    seed: int = 0,
    token_counter: Callable[[str], int] = count_tokens,
) -> Iterator[Document]:
    """Interleave sources by seeded weighted draws over achieved fractions.

    Each source walks through reshuffled passes of its corpus until it has
    emitted ``epochs * available_tokens`` tokens. The stream stops as soon as
    the running total reaches the planned total, so it overshoots by at most
    one document.
    """
    rng = random.Random(seed)
    names = sorted(s for s, p in plan.sources.items() if p.epochs > 0 and corpora.get(s))
    quota = {s: plan.sources[s].tokens for s in names}
    emitted = {s: 0 for s in names}
    order: dict = {}
    pos = {s: 0 for s in names}
    sizes = {s: [token_counter(d.text) for d in corpora[s]] for s in names}

    def _next(src):
        if src not in order or pos[src] >= len(order[src]):
            order[src] = list(range(len(corpora[src])))
            rng.shuffle(order[src])
            pos[src] = 0
        idx = order[src][pos[src]]
        pos[src] += 1
        return idx

    target_total = sum(quota.values()) - 1e-9
    total = 0
    live = [s for s in names if quota[s] > 0]
    while live and total < target_total:
        weights = [plan.sources[s].achieved_fraction for s in live]
        src = rng.choices(live, weights=weights)[0]
        idx = _next(src)
        emitted[src] += sizes[src][idx]
        total += sizes[src][idx]
        yield corpora[src][idx]
        if emitted[src] >= quota[src] - 1e-9:
            live.remove(src)


def holdout_split(
    docs: Sequence[Document],
    topic_field: str = "topic",
    holdout_fraction: float = 0.01,
    seed: int = 0,
):
    """Split into ``(train, valid)`` sampling ``ceil(fraction * n)`` docs per topic.

    Topics with a single document stay in train. Without any topic labels the
    split falls back to grouping by source tag.
    """
    if not 0.0 < holdout_fraction <= 0.5:
        raise ConfigError("holdout_fraction must lie in (0, 0.5]")

    def label(doc):
        if topic_field == "topic":
            return doc.topic
        if topic_field == "source":
            return doc.source
        return doc.meta.get(topic_field)

    labels = [label(d) for d in docs]
    if docs and all(lab is None for lab in labels):
        logger.warning("no %r labels in corpus; grouping by source instead", topic_field)
        labels = [d.source for d in docs]
    groups: dict = defaultdict(list)
    for i, lab in enumerate(labels):
        groups["" if lab is None else lab].append(i)

    rng = random.Random(seed)
    valid_idx = set()
    for lab in sorted(groups):
        members = groups[lab]
        if len(members) < 2:
            continue
        k = min(len(members) - 1, math.ceil(holdout_fraction * len(members) - 1e-9))
        valid_idx.update(rng.sample(members, k))
    train = [d for i, d in enumerate(docs) if i not in valid_idx]
    valid = [d for i, d in enumerate(docs) if i in valid_idx]
    return train, valid


def load_mixture_config(path) -> dict:
    """``{"sources": {name: {"target_fraction": f, "path": p}}}`` -> name -> (fraction, path)."""
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    sources = data.get("sources") if isinstance(data, dict) else None
    if not isinstance(sources, dict) or not sources:
        raise ConfigError(f"{path}: expected a non-empty 'sources' object")
    out = {}
    for name, spec in sources.items():
        try:
            out[name] = (float(spec["target_fraction"]), spec["path"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: source {name!r} needs target_fraction and path") from exc
    validate_targets({k: v[0] for k, v in out.items()})
    return out
