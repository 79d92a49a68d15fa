from pathlib import Path

import pytest

import evigraph
from evigraph.agent import Agent
from evigraph.corpus import load_corpus
from evigraph.kgindex import build_store
from evigraph.mock_provider import MockProvider
from evigraph.retrieval import RetrievalConfig
from evigraph.utils import DeterministicClock

DATA_DIR = Path(evigraph.__file__).parent / "data"
CORPUS_PATH = DATA_DIR / "synthetic_corpus.jsonl"
QUESTIONS_PATH = DATA_DIR / "questions.tsv"
PAPER_SCORES_PATH = DATA_DIR / "paper_scores.csv"


@pytest.fixture(scope="session")
def provider():
    return MockProvider(seed=0)


@pytest.fixture(scope="session")
def corpus_records(provider):
    records, report = load_corpus(CORPUS_PATH)
    assert not report, "bundled corpus must be fully valid"
    return records


@pytest.fixture(scope="session")
def store(corpus_records, provider):
    # Shared read-only store; tests that mutate build their own.
    return build_store(list(corpus_records), provider)


@pytest.fixture()
def agent(store, provider):
    return Agent(store, provider, RetrievalConfig(), DeterministicClock())
