"""HTTP service: sessions, pipeline jobs and the ask endpoint.

Thin request/response layer over the engine modules. Long operations (graph
build, screening) run as background jobs with polled status; the store
snapshot swaps atomically when a build finishes. Errors cross the wire as
``{"error": {"code", "message"}}`` with stable codes and no stack traces.
"""

from __future__ import annotations

import logging
import threading
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import kgindex
from .agent import Agent, AnswerResult
from .corpus import DocumentRecord, load_corpus, write_corpus
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
from .providers import HttpProvider, Provider, ProviderConfig
from .retrieval import RetrievalConfig
from .screening import ResultsStore, ScreeningConfig, run_screening
from .utils import Clock, DeterministicClock

logger = logging.getLogger(__name__)


class StoreNotLoaded(EngineError):
    code = "STORE_NOT_LOADED"
    http_status = 409


class SessionNotFound(EngineError):
    code = "SESSION_NOT_FOUND"
    http_status = 404


class JobNotFound(EngineError):
    code = "JOB_NOT_FOUND"
    http_status = 404


@dataclass
class ServiceConfig:
    bind: str = "127.0.0.1:8080"
    store_path: str = ""
    corpus_path: str = ""
    corpus_format: str = "record-lines"
    provider_mode: str = "mock"  # mock | real
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    retrieval: RetrievalConfig = field(default_factory=RetrievalConfig)
    screening: ScreeningConfig = field(default_factory=ScreeningConfig)
    seed: int = 0
    deterministic_clock: bool = False
    only_included: bool = True  # gate graph builds on INCLUDE screening verdicts
    inline_jobs: bool = False  # run jobs synchronously (tests, CLI)
    cors_origins: tuple[str, ...] = ("*",)  # the web client runs on another origin


def build_provider(cfg: ServiceConfig) -> Provider:
    if cfg.provider_mode == "mock":
        return MockProvider(seed=cfg.seed)
    return HttpProvider(cfg.provider)


@dataclass
class Session:
    session_id: str
    created_at: str
    history: list[tuple[str, dict]] = field(default_factory=list)


@dataclass
class Job:
    job_id: str
    kind: str
    status: str = "pending"  # pending | running | done | failed
    detail: dict = field(default_factory=dict)
    error: str = ""


class ServiceState:
    """All mutable service state behind one lock."""

    def __init__(self, cfg: ServiceConfig):
        self.cfg = cfg
        self.clock: Clock = DeterministicClock() if cfg.deterministic_clock else Clock()
        self.provider = build_provider(cfg)
        self.lock = threading.RLock()
        self.corpus: list[DocumentRecord] = []
        self.store: kgindex.GraphStore | None = None
        self.screening = ResultsStore()
        self.sessions: dict[str, Session] = {}
        self.jobs: dict[str, Job] = {}
        self._counter = 0
        if cfg.corpus_path:
            self.corpus, _ = load_corpus(cfg.corpus_path, cfg.corpus_format)
        if cfg.store_path and Path(cfg.store_path).exists():
            self.store = kgindex.load(cfg.store_path)

    def next_id(self, prefix: str) -> str:
        with self.lock:
            self._counter += 1
            return f"{prefix}-{self._counter:04d}"

    def agent(self) -> Agent:
        if self.store is None:
            raise StoreNotLoaded("no graph store loaded; run a build first")
        return Agent(self.store, self.provider, self.cfg.retrieval, self.clock)

    def graph_documents(self) -> list[DocumentRecord]:
        """Documents feeding the graph build; INCLUDE-gated when results exist."""
        docs = self.corpus
        if self.cfg.only_included and len(self.screening):
            included = {
                r.key for r in self.screening.records() if r.picos.verdict == "INCLUDE"
            }
            docs = [d for d in docs if d.key in included]
        return docs

    def run_job(self, kind: str, work) -> Job:
        job = Job(job_id=self.next_id("job"), kind=kind)
        self.jobs[job.job_id] = job

        def runner():
            job.status = "running"
            try:
                job.detail = work()
                job.status = "done"
            except EngineError as exc:
                job.status = "failed"
                job.error = f"{exc.code}: {exc.message}"
            except Exception as exc:  # pragma: no cover - defensive
                job.status = "failed"
                job.error = f"INTERNAL: {exc}"
                logger.error("job %s failed:\n%s", job.job_id, traceback.format_exc())

        if self.cfg.inline_jobs:
            runner()
        else:
            threading.Thread(target=runner, daemon=True).start()
        return job


class AskPayload(BaseModel):
    session_id: Optional[str] = None
    query: str


class IngestPayload(BaseModel):
    path: str
    format: str = "record-lines"
    out_path: Optional[str] = None


class BuildPayload(BaseModel):
    persist_path: Optional[str] = None


class EvalPayload(BaseModel):
    fixture_path: Optional[str] = None
    questions_path: Optional[str] = None
    manual_path: Optional[str] = None
    live: bool = False


def serialize_answer(result: AnswerResult, state: ServiceState) -> dict:
    """Wire form of an answer: sections, diagram, citations with documents, trace."""
    response = result.response
    by_key = {d.key: d for d in state.corpus}
    cited_documents = {}
    for key in response.citations:
        doc = by_key.get(key)
        if doc:
            cited_documents[key] = {
                "title": doc.title,
                "abstract": doc.abstract,
                "year": doc.year,
                "issn": doc.issn,
            }
    graph = response.causal_graph
    return {
        "sections": response.sections(),
        "diagram_text": response.diagram_text,
        "graph": {
            "nodes": [
                {"id": n.id, "label": n.label, "role": n.role} for n in graph.nodes
            ],
            "edges": [
                {
                    "from": e.from_id,
                    "to": e.to_id,
                    "kind": e.edge_kind,
                    "evidence": [
                        {"doc_key": doc, "chunk_id": chunk} for doc, chunk in e.evidence
                    ],
                }
                for e in graph.edges
            ],
        },
        "citations": response.citations,
        "cited_documents": cited_documents,
        "trace_id": result.trace.trace_id,
        "trace": [
            {
                "seq": e.seq,
                "timestamp": e.timestamp,
                "kind": e.kind,
                "name": e.name,
                "detail": e.detail,
            }
            for e in result.trace.events
        ],
        "word_count": response.word_count,
    }


def create_app(cfg: ServiceConfig | None = None) -> FastAPI:
    state = ServiceState(cfg or ServiceConfig())
    app = FastAPI(title="evigraph", version="0.1.0")
    app.state.engine = state
    app.add_middleware(
        CORSMiddleware,
        allow_origins=list(state.cfg.cors_origins),
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(EngineError)
    async def engine_error_handler(_: Request, exc: EngineError):
        return JSONResponse(
            status_code=exc.http_status,
            content={"error": {"code": exc.code, "message": exc.message}},
        )

    @app.exception_handler(Exception)
    async def internal_error_handler(_: Request, exc: Exception):
        logger.error("unhandled error: %s", exc, exc_info=True)
        return JSONResponse(
            status_code=500,
            content={"error": {"code": "INTERNAL", "message": "internal error"}},
        )

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "store_version": state.store.version if state.store else None,
            "provider_mode": state.cfg.provider_mode,
        }

    @app.post("/corpus/ingest")
    def corpus_ingest(payload: IngestPayload):
        records, report = load_corpus(payload.path, payload.format)
        with state.lock:
            state.corpus = records
        if payload.out_path:
            write_corpus(records, payload.out_path)
        return {
            "accepted": len(records),
            "rejected": [{"key": r.key, "reason": r.reason.value} for r in report],
        }

    @app.post("/graph/build")
    def graph_build(payload: BuildPayload):
        docs = state.graph_documents()
        if not docs:
            raise StoreNotLoaded("no corpus loaded; ingest first")

        def work():
            store = kgindex.build_store(docs, state.provider)
            with state.lock:
                state.store = store
            if payload.persist_path:
                kgindex.persist(store, payload.persist_path)
            return {
                "documents": len(docs),
                "entities": len(store.entities),
                "relations": len(store.relations),
                "version": store.version,
            }

        job = state.run_job("graph-build", work)
        return {"job_id": job.job_id, "status": job.status}

    @app.get("/graph/status")
    def graph_status(job_id: Optional[str] = None):
        jobs = [j for j in state.jobs.values() if j.kind == "graph-build"]
        if job_id:
            job = state.jobs.get(job_id)
            if job is None:
                raise JobNotFound(f"unknown job: {job_id}")
        elif jobs:
            job = jobs[-1]
        else:
            raise JobNotFound("no graph build has been started")
        return {
            "job_id": job.job_id,
            "status": job.status,
            "detail": job.detail,
            "error": job.error,
            "store_version": state.store.version if state.store else None,
        }

    @app.post("/screen/run")
    def screen_run():
        if not state.corpus:
            raise StoreNotLoaded("no corpus loaded; ingest first")

        def work():
            stats = run_screening(
                state.corpus, state.screening, state.provider, state.cfg.screening, state.clock
            )
            return {"batches": stats.batches, "processed": stats.processed}

        job = state.run_job("screening", work)
        return {"job_id": job.job_id, "status": job.status}

    @app.get("/screen/results")
    def screen_results():
        records = state.screening.records()
        return {
            "count": len(records),
            "records": [
                {
                    "key": r.key,
                    "picos_verdict": r.picos.verdict,
                    "picos_rationale": r.picos.rationale,
                    "measurement_category": r.measurement.category,
                    "instruments": list(r.measurement.instruments),
                    "processed_at": r.processed_at,
                }
                for r in records
            ],
            "partitions": {
                verdict: [r.key for r in rows]
                for verdict, rows in state.screening.partitions().items()
            },
        }

    @app.post("/ask")
    def ask(payload: AskPayload):
        agent = state.agent()
        result = agent.answer(payload.query)
        serialized = serialize_answer(result, state)
        with state.lock:
            session_id = payload.session_id or state.next_id("session")
            session = state.sessions.get(session_id)
            if session is None:
                session = Session(session_id=session_id, created_at=state.clock.now_iso())
                state.sessions[session_id] = session
            session.history.append((payload.query, serialized))
        return {"session_id": session_id, "response": serialized}

    @app.get("/session/{session_id}")
    def get_session(session_id: str):
        session = state.sessions.get(session_id)
        if session is None:
            raise SessionNotFound(f"unknown session: {session_id}")
        return {
            "session_id": session.session_id,
            "created_at": session.created_at,
            "messages": [
                {"query": query, "response": response} for query, response in session.history
            ],
        }

    @app.post("/eval/run")
    def eval_run(payload: EvalPayload):
        bundled = Path(__file__).parent / "data"
        questions = load_questions(payload.questions_path or bundled / "questions.tsv")
        if payload.live:
            agent = state.agent()
            manual = load_manual_scores(payload.manual_path) if payload.manual_path else None
            records = []
            for q in questions:
                result = agent.answer(q.text)
                records.append(
                    score_response(result.response, result.trace, q, state.corpus, "causal_agent", manual)
                )
        else:
            records = load_score_records(payload.fixture_path or bundled / "paper_scores.csv")
        report = aggregate(records, questions)
        return {"report": report.to_dict(), "table": format_report(report)}

    return app
