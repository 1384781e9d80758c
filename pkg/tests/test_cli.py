import json
import random
import subprocess
import sys

import pytest

from corpusprep.cli import main
from corpusprep.model import Document, read_corpus, write_corpus
from synth import BLACKLIST, en_doc_text, site_list_files


@pytest.fixture
def corpus(tmp_path):
    rng = random.Random(0)
    docs = [Document(f"d{i}", en_doc_text(rng, 3), url=f"https://fine.test/{i}", topic=f"t{i % 3}") for i in range(12)]
    docs.append(Document("bad", en_doc_text(rng, 2), url=f"https://{BLACKLIST[0]}/x"))
    docs.append(Document("dup", docs[0].text))
    docs.append(Document("mail", en_doc_text(rng, 2) + "\nWrite to the editor at a@b.io for details.", url="https://fine.test/m"))
    path = tmp_path / "in.jsonl"
    write_corpus(docs, path)
    return path


def _ids(path):
    return [d.id for d in read_corpus(path)]


def test_pipeline_run(tmp_path, corpus):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"prepare": site_list_files(tmp_path), "rng_seed": 1}))
    out, rep = tmp_path / "o.jsonl", tmp_path / "r.json"
    assert main(["pipeline", "run", "--config", str(cfg), "--in", str(corpus), "--out", str(out), "--report", str(rep)]) == 0
    report = json.loads(rep.read_text())
    assert report["docs_in"] == 15
    assert report["stages"][0]["drops"] == {"url.blacklist": 1}
    assert "bad" not in _ids(out) and "dup" not in _ids(out)
    assert "[EMAIL]" in next(d.text for d in read_corpus(out) if d.id == "mail")


def test_report_subcommand(tmp_path, corpus, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{}")
    rep = tmp_path / "r.json"
    main(["pipeline", "run", "--config", str(cfg), "--in", str(corpus), "--out", str(tmp_path / "o.jsonl"), "--report", str(rep)])
    capsys.readouterr()
    assert main(["report", "--in", str(rep), "--format", "table"]) == 0
    table = capsys.readouterr().out
    assert table.splitlines()[0].startswith("stage") and "overall" in table
    assert main(["report", "--in", str(rep), "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["docs_in"] == 15


def test_prepare_subcommand(tmp_path, corpus):
    paths = site_list_files(tmp_path)
    out, rep = tmp_path / "o.jsonl", tmp_path / "r.json"
    args = ["prepare", "--in", str(corpus), "--out", str(out), "--report", str(rep), "--blacklist", paths["blacklist"], "--target-langs", "en"]
    assert main(args) == 0
    stages = [s["stage"] for s in json.loads(rep.read_text())["stages"]]
    assert stages == ["url_keyword", "exact_dedup", "language"]
    assert len(_ids(out)) == 13


def test_clean_subcommand(tmp_path, corpus):
    rules = tmp_path / "rules.json"
    rules.write_text(json.dumps({"punct_ratio_max": 0.5}))
    out, rep = tmp_path / "o.jsonl", tmp_path / "r.json"
    assert main(["clean", "--in", str(corpus), "--out", str(out), "--report", str(rep), "--doc-rules", str(rules)]) == 0
    stages = json.loads(rep.read_text())["stages"]
    assert [s["stage"] for s in stages] == ["junk", "doc_rules", "quality", "pii"]
    assert stages[-1]["notes"]["replacements"] == {"email": 1}
    rules.write_text(json.dumps({"colour": 1}))
    assert main(["clean", "--in", str(corpus), "--out", str(out), "--doc-rules", str(rules)]) == 2


@pytest.mark.parametrize("level, extra", [("doc", ["--bands", "32", "--rows", "4"]), ("para", ["--ratio", "0.5"]), ("sent", ["--ngram", "8"])])
def test_dedup_subcommands(tmp_path, corpus, level, extra):
    out, rep = tmp_path / "o.jsonl", tmp_path / "r.json"
    assert main(["dedup", level, "--in", str(corpus), "--out", str(out), "--report", str(rep)] + extra) == 0
    (stage,) = json.loads(rep.read_text())["stages"]
    assert stage["stage"] == f"{level}_dedup"


def test_dedup_doc_signature_cache(tmp_path, corpus):
    cache = tmp_path / "sig.bin"
    out = tmp_path / "o.jsonl"
    base = ["dedup", "doc", "--in", str(corpus), "--out", str(out), "--signature-cache", str(cache), "--report", str(tmp_path / "r.json")]
    assert main(base) == 0 and cache.exists()
    first = out.read_bytes()
    assert main(base) == 0 and out.read_bytes() == first
    assert _ids(out).count("dup") == 0
    assert main(["dedup", "doc", "--bands", "10", "--rows", "10", "--in", str(corpus), "--out", str(out)]) == 2


def test_mix_and_holdout(tmp_path, capsys):
    rng = random.Random(1)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_corpus([Document(f"a{i}", en_doc_text(rng, 1), topic=f"t{i % 2}") for i in range(10)], a)
    write_corpus([Document(f"b{i}", en_doc_text(rng, 1), topic="t9") for i in range(10)], b)
    mix_cfg = tmp_path / "mix.json"
    mix_cfg.write_text(json.dumps({"sources": {"web": {"target_fraction": 0.6, "path": str(a)}, "code": {"target_fraction": 0.4, "path": str(b)}}}))
    out, plan = tmp_path / "m.jsonl", tmp_path / "plan.json"
    args = ["mix", "--config", str(mix_cfg), "--budget-tokens", "3000", "--seed", "2", "--out", str(out), "--plan", str(plan)]
    assert main(args) == 0
    summary = json.loads(plan.read_text())
    ids = _ids(out)
    assert summary["docs_out"] == len(ids) and len(set(ids)) == len(ids)
    assert summary["sources"]["web"]["target_fraction"] == 0.6

    train, valid = tmp_path / "train.jsonl", tmp_path / "valid.jsonl"
    assert main(["holdout", "--in", str(out), "--train-out", str(train), "--valid-out", str(valid), "--fraction", "0.1"]) == 0
    assert len(_ids(train)) + len(_ids(valid)) == len(ids) and _ids(valid)
    assert main(["mix", "--config", str(tmp_path / "none.json"), "--budget-tokens", "10", "--out", str(out)]) == 2


def test_tok_rate(tmp_path, capsys):
    text = tmp_path / "code.txt"
    text.write_text("def f():\n        return 1\n")
    assert main(["tok", "rate", "--corpus", str(text), "--text"]) == 0
    with_indent = json.loads(capsys.readouterr().out)
    assert main(["tok", "rate", "--corpus", str(text), "--text", "--no-indent"]) == 0
    without = json.loads(capsys.readouterr().out)
    assert with_indent["utf8_bytes"] == without["utf8_bytes"] == 26
    assert with_indent["token_count"] == without["token_count"] - 7
    assert main(["tok", "rate", "--corpus", str(text), "--text", "--vocab", str(text)]) == 2


def test_exit_codes(tmp_path, corpus):
    out = tmp_path / "o.jsonl"
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{}")
    # missing input -> I/O error
    assert main(["pipeline", "run", "--config", str(cfg), "--in", str(tmp_path / "nope.jsonl"), "--out", str(out)]) == 3
    # unwritable output -> I/O error
    assert main(["pipeline", "run", "--config", str(cfg), "--in", str(corpus), "--out", str(tmp_path / "no" / "dir" / "o.jsonl")]) == 3
    # bad or missing config -> config error
    assert main(["pipeline", "run", "--config", str(tmp_path / "missing.json"), "--in", str(corpus), "--out", str(out)]) == 2
    cfg.write_text(json.dumps({"dedup": {"bands": 3}}))
    assert main(["pipeline", "run", "--config", str(cfg), "--in", str(corpus), "--out", str(out)]) == 2
    cfg.write_text(json.dumps({"prepare": {"blacklist": "absent.txt"}}))
    assert main(["pipeline", "run", "--config", str(cfg), "--in", str(corpus), "--out", str(out)]) == 2
    # undecodable input -> I/O error
    binary = tmp_path / "bin.jsonl"
    binary.write_bytes(b'{"id": "a", "text": "\xff\xfe"}\n')
    cfg.write_text("{}")
    assert main(["pipeline", "run", "--config", str(cfg), "--in", str(binary), "--out", str(out)]) == 3
    assert main(["report", "--in", str(tmp_path / "nope.json")]) == 3


def test_module_entry_point(tmp_path, corpus):
    out = tmp_path / "o.jsonl"
    proc = subprocess.run(
        [sys.executable, "-m", "corpusprep", "dedup", "sent", "--in", str(corpus), "--out", str(out)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "sent_dedup" in proc.stderr
    # every sentence of "dup" repeats d0, and isqrt(2) = 1 copy survives
    assert "dup" not in _ids(out) and len(_ids(out)) == 14
