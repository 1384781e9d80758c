import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corpusprep.model import (
    KEEP,
    REASON_CODES,
    DedupStats,
    Document,
    StageDecision,
    Verdict,
    drop,
    join_paragraphs,
    normalize_text,
    read_corpus,
    split_paragraphs,
    split_sentences,
    word_tokens,
    write_corpus,
)


def _write_lines(path, lines):
    path.write_text("".join(line + "\n" for line in lines), encoding="utf-8")


def test_read_three_lines(tmp_path):
    p = tmp_path / "c.jsonl"
    _write_lines(p, [json.dumps({"id": str(i), "text": f"t{i}"}) for i in range(3)])
    docs = list(read_corpus(p))
    assert [d.id for d in docs] == ["0", "1", "2"]
    assert docs[0].source == "webpages" and docs[0].url is None


def test_malformed_line_skipped(tmp_path):
    p = tmp_path / "c.jsonl"
    _write_lines(p, [json.dumps({"id": "a", "text": "x"}), "{broken", json.dumps({"id": "b", "text": "y"})])
    reader = read_corpus(p)
    assert [d.id for d in reader] == ["a", "b"]
    assert reader.skipped == 1


@pytest.mark.parametrize(
    "record",
    [
        {"text": "no id"},
        {"id": "x"},
        {"id": 3, "text": "t"},
        {"id": "x", "text": "t", "meta": []},
        {"id": "x", "text": "t", "meta": {"k": 1}},
        [1, 2],
    ],
)
def test_records_missing_fields_are_malformed(tmp_path, record):
    p = tmp_path / "c.jsonl"
    _write_lines(p, [json.dumps(record)])
    reader = read_corpus(p)
    assert list(reader) == [] and reader.skipped == 1


def test_empty_file(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text("")
    reader = read_corpus(p)
    assert list(reader) == [] and reader.skipped == 0


def test_missing_file_fails_eagerly(tmp_path):
    with pytest.raises(OSError):
        read_corpus(tmp_path / "nope.jsonl")


def test_write_empty(tmp_path):
    p = tmp_path / "o.jsonl"
    assert write_corpus([], p) == 0
    assert p.read_bytes() == b""


def test_multiscript_roundtrip(tmp_path):
    text = "Hello 世界 – café 🎉\nсекунда"
    p = tmp_path / "o.jsonl"
    write_corpus([Document("m", text, meta={"k": "二"})], p)
    (doc,) = read_corpus(p)
    assert doc.text == text and doc.text.encode() == text.encode()
    assert doc.meta == {"k": "二"}


doc_strategy = st.builds(
    Document,
    id=st.text(min_size=1, max_size=8),
    text=st.text(max_size=60),
    url=st.none() | st.text(max_size=20),
    source=st.sampled_from(["webpages", "code", "exam", "books"]),
    lang=st.none() | st.sampled_from(["en", "zh"]),
    topic=st.none() | st.text(max_size=5),
    meta=st.dictionaries(st.text(max_size=4), st.text(max_size=4), max_size=3),
)


@settings(max_examples=50, deadline=None)
@given(st.lists(doc_strategy, max_size=12))
def test_roundtrip_property(tmp_path_factory, docs):
    p = tmp_path_factory.mktemp("rt") / "c.jsonl"
    assert write_corpus(docs, p) == len(docs)
    assert list(read_corpus(p)) == docs


def test_roundtrip_100_random_docs(tmp_path):
    import random

    rng = random.Random(3)
    alphabet = "abc xyz 汉字\t\n😀é"
    docs = [
        Document(f"id{i}", "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 40))), url=f"u{i}")
        for i in range(100)
    ]
    p = tmp_path / "c.jsonl"
    write_corpus(docs, p)
    assert list(read_corpus(p)) == docs


def test_split_paragraphs_examples():
    assert [p.text for p in split_paragraphs("a\nb\nc")] == ["a", "b", "c"]
    assert [p.text for p in split_paragraphs("a\n\nb")] == ["a", "", "b"]
    assert [p.text for p in split_paragraphs("")] == [""]


def test_split_sentences_examples():
    assert split_sentences("Hi. Bye!") == ["Hi.", " Bye!"]
    assert split_sentences("你好。再见！") == ["你好。", "再见！"]
    assert split_sentences("no terminal punctuation here") == ["no terminal punctuation here"]
    # a period between digits is not a boundary
    assert split_sentences("Pi is 3.14 today. Yes") == ["Pi is 3.14 today.", " Yes"]
    assert split_sentences('He said "stop." Then left.') == ['He said "stop."', " Then left."]


@settings(max_examples=200, deadline=None)
@given(st.text())
def test_reconstruction(text):
    assert join_paragraphs(split_paragraphs(text)) == text
    assert "".join(split_sentences(text)) == text


def test_word_tokens_cjk():
    assert word_tokens("hello 世界 ok") == ["hello", "世", "界", "ok"]
    assert word_tokens("ab汉cd") == ["ab", "汉", "cd"]


def test_normalize_text():
    assert normalize_text("  a \t b\n\nc ") == "a b c"
    assert normalize_text("é") == "é"


def test_stage_decision_contract():
    assert KEEP.verdict is Verdict.KEEP and KEEP.keep
    d = drop("url.blacklist", "x")
    assert not d.keep and d.reason == "url.blacklist"
    with pytest.raises(ValueError):
        drop("not.a.reason")
    with pytest.raises(ValueError):
        StageDecision(Verdict.DROP, None)
    assert "dedup.doc" in REASON_CODES


def test_dedup_stats():
    s = DedupStats()
    for dec in (KEEP, drop("exact.url"), drop("exact.url"), KEEP):
        s.record(dec)
    assert (s.docs_in, s.docs_out, s.dropped) == (4, 2, {"exact.url": 2})


def test_document_is_immutable():
    d = Document("a", "t")
    with pytest.raises(Exception):
        d.text = "u"
