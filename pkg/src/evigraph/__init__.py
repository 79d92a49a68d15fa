"""Evidence-grounded knowledge-graph retrieval, screening and causal QA engine."""

from .agent import Agent, AgentResponse, AnswerResult, ThinkPlan
from .causal import CausalEdge, CausalGraph, CausalNode, build_graph, parse_diagram_text, to_diagram_text, validate
from .corpus import CorpusFilterConfig, DocumentRecord, RawRecord, clean_text, filter_record, load_corpus
from .kgindex import GraphStore, build_store, incremental_update, load, persist
from .mock_provider import MockProvider
from .providers import HttpProvider, Provider, ProviderConfig
from .retrieval import RetrievalBundle, RetrievalConfig, extract_keywords, retrieve
from .screening import ResultsStore, ScreeningConfig, classify_measurement, classify_picos, next_batch, run_screening

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "AgentResponse",
    "AnswerResult",
    "CausalEdge",
    "CausalGraph",
    "CausalNode",
    "CorpusFilterConfig",
    "DocumentRecord",
    "GraphStore",
    "HttpProvider",
    "MockProvider",
    "Provider",
    "ProviderConfig",
    "RawRecord",
    "ResultsStore",
    "RetrievalBundle",
    "RetrievalConfig",
    "ScreeningConfig",
    "ThinkPlan",
    "build_graph",
    "build_store",
    "classify_measurement",
    "classify_picos",
    "clean_text",
    "extract_keywords",
    "filter_record",
    "incremental_update",
    "load",
    "load_corpus",
    "next_batch",
    "parse_diagram_text",
    "persist",
    "retrieve",
    "run_screening",
    "to_diagram_text",
    "validate",
    "__version__",
]
