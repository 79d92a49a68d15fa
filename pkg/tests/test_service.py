import pytest
from fastapi.testclient import TestClient

from evigraph.service import ServiceConfig, create_app

from conftest import CORPUS_PATH


@pytest.fixture()
def client():
    cfg = ServiceConfig(
        corpus_path=str(CORPUS_PATH),
        deterministic_clock=True,
        inline_jobs=True,
    )
    app = create_app(cfg)
    with TestClient(app, raise_server_exceptions=False) as client:
        yield client


@pytest.fixture()
def built_client(client):
    response = client.post("/graph/build", json={})
    assert response.status_code == 200
    assert response.json()["status"] == "done"
    return client


def test_healthz_reports_mode_and_version(client):
    body = client.get("/healthz").json()
    assert body["status"] == "ok"
    assert body["provider_mode"] == "mock"
    assert body["store_version"] is None
    client.post("/graph/build", json={})
    assert client.get("/healthz").json()["store_version"] is not None


def test_ask_before_build_returns_stable_code(client):
    response = client.post("/ask", json={"query": "anything"})
    assert response.status_code == 409
    assert response.json()["error"]["code"] == "STORE_NOT_LOADED"


def test_ingest_endpoint(client):
    response = client.post(
        "/corpus/ingest", json={"path": str(CORPUS_PATH), "format": "record-lines"}
    )
    assert response.status_code == 200
    body = response.json()
    assert body["accepted"] == 20
    assert body["rejected"] == []


def test_graph_build_and_status(client):
    build = client.post("/graph/build", json={}).json()
    status = client.get("/graph/status", params={"job_id": build["job_id"]}).json()
    assert status["status"] == "done"
    assert status["detail"]["documents"] == 20
    assert status["store_version"] == status["detail"]["version"]
    latest = client.get("/graph/status").json()
    assert latest["job_id"] == build["job_id"]


def test_graph_status_without_build_is_404(client):
    response = client.get("/graph/status")
    assert response.status_code == 404
    assert response.json()["error"]["code"] == "JOB_NOT_FOUND"


def test_ask_returns_sections_citations_and_documents(built_client):
    response = built_client.post(
        "/ask", json={"query": "how does aerobic exercise improve memory in dementia?"}
    )
    assert response.status_code == 200
    body = response.json()
    payload = body["response"]
    assert set(payload["sections"]) == {
        "executive_summary",
        "picos_analysis",
        "causal_graph",
        "research_context",
        "limitations",
    }
    assert payload["citations"]
    for key in payload["citations"]:
        assert key in payload["cited_documents"]
        assert payload["cited_documents"][key]["title"]
    assert payload["diagram_text"].startswith("graph LR")
    assert payload["graph"]["edges"]
    assert payload["trace"][0]["kind"] == "analysis"


def test_session_history_appends_in_order(built_client):
    first = built_client.post("/ask", json={"query": "tai chi and memory in dementia"}).json()
    session_id = first["session_id"]
    built_client.post("/ask", json={"session_id": session_id, "query": "what about yoga?"})
    session = built_client.get(f"/session/{session_id}").json()
    assert len(session["messages"]) == 2
    assert session["messages"][0]["query"] == "tai chi and memory in dementia"
    assert session["messages"][1]["query"] == "what about yoga?"


def test_unknown_session_is_404(client):
    response = client.get("/session/nope")
    assert response.status_code == 404
    assert response.json()["error"]["code"] == "SESSION_NOT_FOUND"


def test_screening_endpoints(client):
    run = client.post("/screen/run").json()
    assert run["status"] == "done"
    results = client.get("/screen/results").json()
    assert results["count"] == 20
    assert set(results["partitions"]) == {"INCLUDE", "EXCLUDE", "UNCERTAIN"}
    assert len(results["partitions"]["INCLUDE"]) == 15


def test_screening_gates_graph_build(client):
    client.post("/screen/run")
    build = client.post("/graph/build", json={}).json()
    status = client.get("/graph/status", params={"job_id": build["job_id"]}).json()
    # Only INCLUDE documents feed the graph once screening results exist.
    assert status["detail"]["documents"] == 15


def test_eval_run_fixture_mode(client):
    response = client.post("/eval/run", json={})
    assert response.status_code == 200
    body = response.json()
    systems = body["report"]["systems"]
    assert systems["vanilla"]["total"] == 34
    assert systems["causal_agent"]["total"] == 95
    assert systems["rag_only"]["total"] == 94
    assert "8.75/10 (87.5%)" in body["table"]


def test_eval_run_live_mode(built_client):
    response = built_client.post("/eval/run", json={"live": True})
    assert response.status_code == 200
    body = response.json()
    summary = body["report"]["systems"]["causal_agent"]
    assert summary["total"] == 100
    assert summary["retrieval_rate_pct"] == 100.0
    assert summary["hallucinations"] == 0


def test_validation_errors_have_no_stack_traces(client):
    response = client.post("/ask", json={"nope": 1})
    assert response.status_code == 422  # fastapi validation shape, no traceback body
    assert "Traceback" not in response.text
