import json
import math
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpusprep.mixture import (
    REFERENCE_TARGETS,
    EmptySourceError,
    SourceStats,
    count_tokens,
    holdout_split,
    load_mixture_config,
    plan_mixture,
    sample_stream,
    source_stats,
)
from corpusprep.model import ConfigError, Document


def test_count_tokens():
    assert count_tokens("one two  three") == 3
    assert count_tokens("汉字 ok") == 3
    assert count_tokens("") == 0


def test_plan_equal_split():
    plan = plan_mixture([SourceStats("a", 1000), SourceStats("b", 1000)], {"a": 0.5, "b": 0.5}, 2000)
    assert plan.sources["a"].epochs == pytest.approx(1.0)
    assert plan.sources["b"].epochs == pytest.approx(1.0)
    assert plan.capped == []


def test_plan_caps_and_redistributes():
    # "a" would need 6 epochs; pinned at 5, its shortfall goes to "b"
    stats = [SourceStats("a", 1000), SourceStats("b", 100000)]
    plan = plan_mixture(stats, {"a": 0.3, "b": 0.7}, 20000, max_epochs=5)
    assert plan.capped == ["a"]
    assert plan.sources["a"].epochs == 5
    assert plan.sources["b"].tokens == pytest.approx(15000)
    assert plan.planned_tokens == pytest.approx(20000)
    assert plan.sources["a"].achieved_fraction == pytest.approx(0.25)


def test_table1_targets():
    assert math.fsum(REFERENCE_TARGETS.values()) == pytest.approx(1.0, abs=1e-9)
    assert REFERENCE_TARGETS["webpages"] == pytest.approx(0.6333)
    stats = [SourceStats(s, 10**6) for s in REFERENCE_TARGETS]
    plan = plan_mixture(stats, REFERENCE_TARGETS, 10**7, max_epochs=math.inf)
    for s, t in REFERENCE_TARGETS.items():
        assert plan.sources[s].achieved_fraction == pytest.approx(t, abs=1e-12)


def test_plan_errors():
    with pytest.raises(ConfigError):
        plan_mixture([SourceStats("a", 1)], {"a": 0.9}, 10)
    with pytest.raises(ConfigError):
        plan_mixture([SourceStats("a", 1)], {"a": 1.0}, 0)
    with pytest.raises(ConfigError):
        plan_mixture([SourceStats("a", 1)], {"b": 1.0}, 10)
    with pytest.raises(EmptySourceError):
        plan_mixture([SourceStats("a", 0), SourceStats("b", 5)], {"a": 0.5, "b": 0.5}, 10)
    # zero target on an empty source is fine
    plan_mixture([SourceStats("a", 0), SourceStats("b", 5)], {"a": 0.0, "b": 1.0}, 10)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(1, 10**6), min_size=1, max_size=6),
    st.lists(st.floats(0.01, 1.0), min_size=6, max_size=6),
    st.floats(1.0, 1e8),
    st.floats(0.5, 10.0),
)
def test_plan_invariants(avail, raw, budget, cap):
    names = [f"s{i}" for i in range(len(avail))]
    w = raw[: len(avail)]
    targets = {n: x / math.fsum(w) for n, x in zip(names, w)}
    targets[names[-1]] = 1.0 - math.fsum(targets[n] for n in names[:-1])
    if targets[names[-1]] < 0:
        return
    plan = plan_mixture([SourceStats(n, a) for n, a in zip(names, avail)], targets, budget, cap)
    for p in plan.sources.values():
        assert p.epochs <= cap + 1e-9
    assert plan.planned_tokens <= budget * (1 + 1e-9)
    if not plan.capped:
        assert plan.planned_tokens == pytest.approx(budget)
        for n in names:
            assert plan.sources[n].achieved_fraction == pytest.approx(targets[n], abs=1e-9)


def _corpus(source, n, words=10):
    return [Document(f"{source}{i}", " ".join(["w"] * words), source=source) for i in range(n)]


def test_sample_stream_deterministic():
    corpora = {"a": _corpus("a", 20), "b": _corpus("b", 20)}
    plan = plan_mixture(source_stats(corpora["a"] + corpora["b"]), {"a": 0.7, "b": 0.3}, 600)
    ids1 = [d.id for d in sample_stream(corpora, plan, seed=3)]
    ids2 = [d.id for d in sample_stream(corpora, plan, seed=3)]
    assert ids1 == ids2
    counts = Counter(i[0] for i in ids1)
    assert counts == {"a": 42, "b": 18}


def test_sample_stream_exchangeable_sources():
    corpora = {"a": _corpus("a", 10), "b": _corpus("b", 10)}
    plan = plan_mixture(source_stats(corpora["a"] + corpora["b"]), {"a": 0.5, "b": 0.5}, 400)
    counts = Counter(d.source for d in sample_stream(corpora, plan, seed=1))
    assert counts["a"] == counts["b"] == 20


def test_single_source_one_epoch_is_permutation():
    docs = _corpus("a", 30)
    plan = plan_mixture(source_stats(docs), {"a": 1.0}, 300)
    out = list(sample_stream({"a": docs}, plan, seed=5))
    assert sorted(d.id for d in out) == sorted(d.id for d in docs)
    assert [d.id for d in out] != [d.id for d in docs]


def _topical(n_topics, per_topic):
    return [Document(f"t{t}-{i}", f"text {t} {i}", topic=f"topic{t}") for t in range(n_topics) for i in range(per_topic)]


def test_holdout_one_percent_per_topic():
    docs = _topical(10, 100)
    train, valid = holdout_split(docs, holdout_fraction=0.01, seed=2)
    assert len(valid) == 10 and len(train) == 990
    assert Counter(d.topic for d in valid) == {f"topic{t}": 1 for t in range(10)}
    assert {d.id for d in train} | {d.id for d in valid} == {d.id for d in docs}
    assert not {d.id for d in train} & {d.id for d in valid}


def test_holdout_edge_cases():
    docs = [Document("solo", "x", topic="lonely")] + _topical(1, 3)
    train, valid = holdout_split(docs, holdout_fraction=0.01)
    assert "solo" in {d.id for d in train} and len(valid) == 1
    untagged = [Document(str(i), "x", source="code" if i % 2 else "books") for i in range(10)]
    train, valid = holdout_split(untagged, holdout_fraction=0.2)
    assert Counter(d.source for d in valid) == {"code": 1, "books": 1}
    with pytest.raises(ConfigError):
        holdout_split(docs, holdout_fraction=0.9)


def test_holdout_deterministic():
    docs = _topical(3, 50)
    assert holdout_split(docs, holdout_fraction=0.1, seed=4) == holdout_split(docs, holdout_fraction=0.1, seed=4)


def test_load_mixture_config(tmp_path):
    p = tmp_path / "mix.json"
    p.write_text(json.dumps({"sources": {"a": {"target_fraction": 0.25, "path": "a.jsonl"}, "b": {"target_fraction": 0.75, "path": "b.jsonl"}}}))
    assert load_mixture_config(p) == {"a": (0.25, "a.jsonl"), "b": (0.75, "b.jsonl")}
    p.write_text(json.dumps({"sources": {"a": {"target_fraction": 0.5, "path": "a"}}}))
    with pytest.raises(ConfigError):
        load_mixture_config(p)
    p.write_text(json.dumps({"sources": {"a": {"path": "a"}}}))
    with pytest.raises(ConfigError):
        load_mixture_config(p)
