"""Command line interface covering the full pipeline.

Subcommands map 1:1 onto module entry points: ingest, build-graph, screen,
ask, eval, serve. ``--mock`` (the default) forces the deterministic provider
and ``--seed`` fixes all randomness, making every command byte-reproducible.
Usage errors exit 2 (argparse), operational errors exit 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import kgindex
from .agent import Agent
from .corpus import load_corpus, write_corpus, write_rejections
from .errors import EngineError
from .evalharness import (
    aggregate,
    format_report,
    load_manual_scores,
    load_questions,
    load_score_records,
    score_response,
)
from .mock_provider import MockProvider
from .providers import HttpProvider, ProviderConfig
from .retrieval import RetrievalConfig
from .screening import ResultsStore, ScreeningConfig, run_screening
from .utils import Clock, DeterministicClock

BUNDLED_DATA = Path(__file__).parent / "data"
BUNDLED_CORPUS = BUNDLED_DATA / "synthetic_corpus.jsonl"
BUNDLED_QUESTIONS = BUNDLED_DATA / "questions.tsv"
BUNDLED_PAPER_SCORES = BUNDLED_DATA / "paper_scores.csv"


def _provider(args):
    if getattr(args, "real", False):
        return HttpProvider(
            ProviderConfig(
                endpoint=args.endpoint or "",
                model_name=args.model or "",
                auth_source=args.auth_env,
            )
        )
    return MockProvider(seed=args.seed)


def _clock(args) -> Clock:
    return DeterministicClock() if not getattr(args, "real", False) else Clock()


def cmd_ingest(args) -> int:
    records, report = load_corpus(args.infile, args.format)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_corpus(records, out / "corpus.accepted.jsonl")
    write_rejections(report, out / "rejections.jsonl")
    print(f"accepted {len(records)} records, rejected {len(report)}")
    for rej in report:
        print(f"  reject {rej.key}: {rej.reason.value}")
    return 0


def cmd_build_graph(args) -> int:
    records, _ = load_corpus(args.corpus, args.format)
    if args.screening and Path(args.screening).exists():
        results = ResultsStore.load(args.screening)
        included = {r.key for r in results.records() if r.picos.verdict == "INCLUDE"}
        records = [r for r in records if r.key in included]
        print(f"screening gate: {len(records)} INCLUDE documents feed the graph")
    provider = _provider(args)
    store = kgindex.build_store(records, provider)
    kgindex.persist(store, args.store)
    print(
        f"built store v{store.version}: {len(store.entities)} entities, "
        f"{len(store.relations)} relations, {len(store.chunks)} chunks -> {args.store}"
    )
    return 0


def cmd_screen(args) -> int:
    records, _ = load_corpus(args.corpus, args.format)
    results = (
        ResultsStore.load(args.results) if Path(args.results).exists() else ResultsStore()
    )
    provider = _provider(args)
    stats = run_screening(
        records, results, provider, ScreeningConfig(batch_size=args.batch_size), _clock(args)
    )
    results.save(args.results)
    partitions = results.partitions()
    print(f"screened {stats.processed} records in {stats.batches} batches")
    for verdict, rows in partitions.items():
        print(f"  {verdict}: {len(rows)}")
    return 0


def cmd_ask(args) -> int:
    store = kgindex.load(args.store)
    agent = Agent(store, _provider(args), RetrievalConfig(), _clock(args))
    result = agent.answer(args.query)
    response = result.response
    print("== executive summary ==")
    print(response.executive_summary)
    print("\n== picos analysis ==")
    print(response.picos_analysis)
    print("\n== causal graph ==")
    print(response.diagram_text)
    print("\n== research context ==")
    print(response.research_context)
    print("\n== limitations ==")
    print(response.limitations)
    print("\ncitations:", ", ".join(response.citations) or "(none)")
    if args.trace:
        print("\ntrace:")
        print(result.trace.to_lines())
    return 0


def cmd_eval(args) -> int:
    questions = load_questions(args.questions)
    if args.live:
        store = kgindex.load(args.store)
        records, _ = load_corpus(args.corpus, "record-lines")
        agent = Agent(store, _provider(args), RetrievalConfig(), _clock(args))
        manual = load_manual_scores(args.manual) if args.manual else None
        score_records = []
        for q in questions:
            result = agent.answer(q.text)
            score_records.append(
                score_response(result.response, result.trace, q, records, "causal_agent", manual)
            )
    else:
        score_records = load_score_records(args.fixture)
    report = aggregate(score_records, questions)
    print(format_report(report))
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(report.to_dict(), indent=2))
        print(f"\nmachine-readable report -> {args.json_out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import ServiceConfig, create_app

    host, _, port = args.bind.rpartition(":")
    cfg = ServiceConfig(
        bind=args.bind,
        store_path=args.store or "",
        corpus_path=args.corpus or "",
        provider_mode="real" if args.real else "mock",
        provider=ProviderConfig(
            endpoint=args.endpoint or "", model_name=args.model or "", auth_source=args.auth_env
        ),
        seed=args.seed,
        deterministic_clock=not args.real,
    )
    app = create_app(cfg)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8080), log_level="warning")
    return 0


def _add_provider_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--mock", action="store_true", default=True, help="use the deterministic provider (default)")
    parser.add_argument("--real", action="store_true", help="use the HTTP provider instead of the mock")
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomness (mock provider)")
    parser.add_argument("--endpoint", help="chat-completion endpoint URL (real provider)")
    parser.add_argument("--model", help="model name (real provider)")
    parser.add_argument("--auth-env", default="EVIGRAPH_API_TOKEN", help="env var holding the bearer token")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="evigraph",
        description="Evidence-grounded knowledge-graph retrieval and causal question answering",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="clean and filter a raw corpus file")
    p.add_argument("--in", dest="infile", default=str(BUNDLED_CORPUS), help="raw corpus file")
    p.add_argument("--format", choices=["record-lines", "delimited-table"], default="record-lines")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("build-graph", help="build and persist the knowledge graph store")
    p.add_argument("--corpus", default=str(BUNDLED_CORPUS))
    p.add_argument("--format", choices=["record-lines", "delimited-table"], default="record-lines")
    p.add_argument("--store", required=True, help="store file to write")
    p.add_argument("--screening", help="screening results csv; only INCLUDE documents feed the graph")
    _add_provider_flags(p)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("screen", help="run batched PICOS and measurement screening")
    p.add_argument("--corpus", default=str(BUNDLED_CORPUS))
    p.add_argument("--format", choices=["record-lines", "delimited-table"], default="record-lines")
    p.add_argument("--results", required=True, help="results csv (resumable)")
    p.add_argument("--batch-size", type=int, default=15)
    _add_provider_flags(p)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("ask", help="answer a question against a built store")
    p.add_argument("--store", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--trace", action="store_true", help="print the execution trace")
    _add_provider_flags(p)
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("eval", help="score answers and print the report tables")
    p.add_argument("--questions", default=str(BUNDLED_QUESTIONS))
    p.add_argument("--fixture", default=str(BUNDLED_PAPER_SCORES), help="transcribed score records csv")
    p.add_argument("--live", action="store_true", help="run the agent over the question bank instead")
    p.add_argument("--store", help="store file (live mode)")
    p.add_argument("--corpus", default=str(BUNDLED_CORPUS), help="corpus file (live mode)")
    p.add_argument("--manual", help="manual accuracy entries csv")
    p.add_argument("--json-out", help="write the machine-readable report here")
    _add_provider_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--bind", default=os.environ.get("EVIGRAPH_BIND", "127.0.0.1:8080"))
    p.add_argument("--store", help="store file to load at startup")
    p.add_argument("--corpus", default=str(BUNDLED_CORPUS))
    _add_provider_flags(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EngineError as exc:
        print(f"error [{exc.code}]: {exc.message}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error [FILE_NOT_FOUND]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
