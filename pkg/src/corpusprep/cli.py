"""Command line entry point: ``corpusprep <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from dataclasses import replace

from . import mixture, pipeline
from .config import DocRuleThresholds, PipelineConfig
from .model import ConfigError, read_corpus, write_corpus

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 2, 3

logger = logging.getLogger("corpusprep")


class _IOFailure(Exception):
    pass


def _read_docs(path):
    try:
        reader = read_corpus(path)
        return list(reader), reader.skipped
    except (OSError, UnicodeDecodeError) as exc:
        raise _IOFailure(f"cannot read {path}: {exc}") from exc


def _write_docs(docs, path) -> int:
    try:
        return write_corpus(docs, path)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc}") from exc


def _write_text(text, path):
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc}") from exc


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc


def _only(config: PipelineConfig, *, prepare=False, clean=False, doc=False, para=False, sent=False):
    """Copy of ``config`` with every stage outside the selection switched off."""
    return replace(
        config,
        prepare=replace(config.prepare, enabled=prepare),
        clean=replace(config.clean, enabled=clean),
        dedup=replace(config.dedup, doc=doc, para=para, sent=sent),
        mix=replace(config.mix, enabled=False),
    ).validate()


def _run_partial(args, config):
    resources = pipeline.load_resources(config)
    docs, skipped = _read_docs(args.inp)
    cache = None
    cache_path = getattr(args, "signature_cache", None)
    if cache_path:
        from .fuzzy_dedup import read_signature_cache, write_signature_cache

        try:
            cache = read_signature_cache(cache_path, seed=config.rng_seed)
        except FileNotFoundError:
            cache = {}
    out, report = pipeline.run_stages(docs, config, resources, signature_cache=cache)
    report.skipped_lines = skipped
    report.check()
    _write_docs(out, args.out)
    if cache_path:
        try:
            write_signature_cache(cache_path, cache, config.rng_seed)
        except OSError as exc:
            raise _IOFailure(f"cannot write {cache_path}: {exc}") from exc
    if args.report:
        _write_text(report.to_json(), args.report)
    else:
        sys.stderr.write(pipeline.report_cascade(report, "table"))
    return EXIT_OK


def _base_config(args) -> PipelineConfig:
    config = PipelineConfig()
    if getattr(args, "config", None):
        try:
            config = PipelineConfig.load(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read {args.config}: {exc}") from exc
    if getattr(args, "seed", None) is not None:
        config = replace(config, rng_seed=args.seed)
    return config.validate()


# --------------------------------------------------------------- handlers


def cmd_pipeline_run(args):
    config = _base_config(args)
    pipeline.load_resources(config)
    try:
        read_corpus(args.inp)
    except OSError as exc:
        raise _IOFailure(f"cannot read {args.inp}: {exc}") from exc
    try:
        report = pipeline.run_pipeline(config, args.inp, args.out, args.report)
    except (OSError, UnicodeDecodeError) as exc:
        raise _IOFailure(str(exc)) from exc
    if not args.report:
        sys.stderr.write(pipeline.report_cascade(report, "table"))
    return EXIT_OK


def cmd_prepare(args):
    config = _base_config(args)
    p = config.prepare
    updates = {
        k: v
        for k, v in (
            ("blacklist", args.blacklist),
            ("whitelist", args.whitelist),
            ("keywords", args.keywords),
            ("ratings", args.ratings),
        )
        if v is not None
    }
    if args.target_langs:
        updates["target_langs"] = tuple(x.strip() for x in args.target_langs.split(",") if x.strip())
    config = replace(config, prepare=replace(p, **updates))
    return _run_partial(args, _only(config, prepare=True))


def cmd_clean(args):
    config = _base_config(args)
    c = config.clean
    updates = {}
    if args.doc_rules:
        data = _load_json(args.doc_rules)
        known = {f.name for f in dataclasses.fields(DocRuleThresholds)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown doc-rule keys: {sorted(unknown)}")
        if "rep_ngram_frac_max" in data:
            data["rep_ngram_frac_max"] = tuple(data["rep_ngram_frac_max"])
        updates["doc_rules"] = DocRuleThresholds(**data)
    for key in ("pii_rules", "junk_threshold", "quality_threshold", "quality_endpoint", "boilerplate"):
        value = getattr(args, key)
        if value is not None:
            updates[key] = value
    if args.fail_closed:
        updates["quality_fail_open"] = False
    config = replace(config, clean=replace(c, **updates))
    return _run_partial(args, _only(config, clean=True))


def cmd_dedup(args):
    config = _base_config(args)
    d = config.dedup
    if args.level == "doc":
        d = replace(d, bands=args.bands, rows=args.rows, verify=args.verify)
        config = replace(config, dedup=d)
        return _run_partial(args, _only(config, doc=True))
    if args.level == "para":
        config = replace(config, dedup=replace(d, para_ratio=args.ratio))
        return _run_partial(args, _only(config, para=True))
    config = replace(config, dedup=replace(d, sent_ngram=args.ngram))
    return _run_partial(args, _only(config, sent=True))


def cmd_mix(args):
    try:
        sources = mixture.load_mixture_config(args.config)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc}") from exc
    corpora = {}
    for name, (_, path) in sorted(sources.items()):
        docs, _ = _read_docs(path)
        corpora[name] = [d if d.source == name else replace(d, source=name) for d in docs]
    stats = [
        mixture.SourceStats(name, sum(mixture.count_tokens(d.text) for d in docs))
        for name, docs in corpora.items()
    ]
    targets = {name: frac for name, (frac, _) in sources.items()}
    plan = mixture.plan_mixture(stats, targets, args.budget_tokens, args.max_epochs)
    out = list(pipeline.unique_ids(mixture.sample_stream(corpora, plan, args.seed)))
    _write_docs(out, args.out)
    summary = plan.to_dict()
    summary["docs_out"] = len(out)
    _write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", args.plan)
    return EXIT_OK


def cmd_holdout(args):
    docs, _ = _read_docs(args.inp)
    train, valid = mixture.holdout_split(docs, args.by, args.fraction, args.seed)
    _write_docs(train, args.train_out)
    _write_docs(valid, args.valid_out)
    sys.stderr.write(f"train {len(train)} docs, valid {len(valid)} docs\n")
    return EXIT_OK


def cmd_tok_rate(args):
    from .tokenizer_metrics import BpeVocab, compression_rate, default_vocab

    try:
        if args.vocab:
            if not args.merges:
                raise ConfigError("--vocab needs --merges")
            vocab = BpeVocab.from_files(args.vocab, args.merges)
        else:
            vocab = default_vocab()
    except OSError as exc:
        raise ConfigError(f"cannot read vocabulary: {exc}") from exc
    if args.text:
        try:
            with open(args.corpus, encoding="utf-8") as fh:
                corpus = [fh.read()]
        except OSError as exc:
            raise _IOFailure(f"cannot read {args.corpus}: {exc}") from exc
    else:
        corpus, _ = _read_docs(args.corpus)
    report = compression_rate(corpus, vocab, indent=not args.no_indent)
    _write_text(json.dumps(report.to_dict(), sort_keys=True) + "\n", None)
    return EXIT_OK


def cmd_report(args):
    try:
        with open(args.inp, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise _IOFailure(f"cannot read {args.inp}: {exc}") from exc
    try:
        report = pipeline.CascadeReport.from_json(text)
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"{args.inp}: not a cascade report ({exc})") from exc
    _write_text(pipeline.report_cascade(report, args.format), None)
    return EXIT_OK


# ----------------------------------------------------------------- parser


def _io_args(p, report=True):
    p.add_argument("--in", dest="inp", required=True, help="input JSONL corpus")
    p.add_argument("--out", required=True, help="output JSONL corpus")
    p.add_argument("--config", help="pipeline config (JSON) supplying defaults")
    p.add_argument("--seed", type=int)
    if report:
        p.add_argument("--report", help="write the stage report JSON here (default: table on stderr)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corpusprep", description="Web-corpus preparation pipeline.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run the full cascade")
    psub = p.add_subparsers(dest="action", required=True)
    run = psub.add_parser("run")
    run.add_argument("--config", required=True)
    run.add_argument("--in", dest="inp", required=True)
    run.add_argument("--out", required=True)
    run.add_argument("--report")
    run.add_argument("--seed", type=int)
    run.set_defaults(func=cmd_pipeline_run)

    p = sub.add_parser("prepare", help="URL/keyword filter, exact dedup, language id")
    _io_args(p)
    p.add_argument("--blacklist")
    p.add_argument("--whitelist")
    p.add_argument("--keywords")
    p.add_argument("--ratings")
    p.add_argument("--target-langs", help="comma separated, e.g. en,zh")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("clean", help="junk removal, document rules, quality, PII")
    _io_args(p)
    p.add_argument("--doc-rules", help="JSON object of rule thresholds")
    p.add_argument("--pii-rules", dest="pii_rules")
    p.add_argument("--boilerplate")
    p.add_argument("--junk-threshold", dest="junk_threshold", type=float)
    p.add_argument("--quality-threshold", dest="quality_threshold", type=float)
    p.add_argument("--quality-endpoint", dest="quality_endpoint")
    p.add_argument("--fail-closed", action="store_true", help="drop documents the scorer cannot score")
    p.set_defaults(func=cmd_clean)

    p = sub.add_parser("dedup", help="document, paragraph or sentence deduplication")
    dsub = p.add_subparsers(dest="level", required=True)
    d = dsub.add_parser("doc")
    _io_args(d)
    d.add_argument("--bands", type=int, default=16)
    d.add_argument("--rows", type=int, default=8)
    d.add_argument("--verify", action=argparse.BooleanOptionalAction, default=None)
    d.add_argument("--signature-cache", dest="signature_cache")
    d = dsub.add_parser("para")
    _io_args(d)
    d.add_argument("--ratio", type=float, default=0.30)
    d = dsub.add_parser("sent")
    _io_args(d)
    d.add_argument("--ngram", type=int, default=16)
    p.set_defaults(func=cmd_dedup)

    p = sub.add_parser("mix", help="plan and sample a source mixture")
    p.add_argument("--config", required=True, help="mixture config JSON")
    p.add_argument("--budget-tokens", dest="budget_tokens", type=float, required=True)
    p.add_argument("--max-epochs", dest="max_epochs", type=float, default=mixture.DEFAULT_MAX_EPOCHS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--plan", help="write the plan JSON here (default stdout)")
    p.set_defaults(func=cmd_mix)

    p = sub.add_parser("holdout", help="topic-stratified validation split")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--train-out", dest="train_out", required=True)
    p.add_argument("--valid-out", dest="valid_out", required=True)
    p.add_argument("--fraction", type=float, default=0.01)
    p.add_argument("--by", default="topic")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_holdout)

    p = sub.add_parser("tok", help="tokenizer metrics")
    tsub = p.add_subparsers(dest="action", required=True)
    t = tsub.add_parser("rate", help="UTF-8 bytes per token")
    t.add_argument("--vocab")
    t.add_argument("--merges")
    t.add_argument("--corpus", required=True)
    t.add_argument("--text", action="store_true", help="corpus is a plain text file, not JSONL")
    t.add_argument("--no-indent", action="store_true")
    t.set_defaults(func=cmd_tok_rate)

    p = sub.add_parser("report", help="render a stage report")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--format", choices=("table", "json"), default="table")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except _IOFailure as exc:
        print(f"corpusprep: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ValueError) as exc:
        print(f"corpusprep: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"corpusprep: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
