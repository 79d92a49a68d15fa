"""Uniform gateway to text-generation and embedding backends.

All model interaction flows through :class:`Provider` subclasses so that every
other module is testable against the deterministic mock. Prompts live in a
registry keyed by template id; a request names a template and binds its
placeholders, which lets the mock dispatch on template id with rule-based
behavior while a real backend receives the rendered prompt.

Embeddings are computed locally by a seeded feature-hashing scheme shared by
every backend: lowercased word tokens (stopwords dropped, lightly stemmed)
are hashed to several signed coordinates of a fixed-length vector, which is
then L2-normalized. Texts sharing more content words score higher under
cosine similarity, and results are reproducible across runs and platforms
for a fixed seed.

The real generation backend speaks a JSON-over-HTTP chat-completion wire
format: request ``{model, messages[{role, content}], max_tokens}``, response
``{choices[{message{content}}]}``, bearer auth from a configured environment
variable.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import string
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import EngineError
from .utils import token_count

STOPWORDS = frozenset(
    """a an and are as at be been between but by can could do does did for from
    has have how in into is it its may more most no not of on or over s should
    t that the their there these this those through to under was were what
    which will with would""".split()
)

_WORD_RE = re.compile(r"[a-z0-9]+")

# (index, sign) pairs drawn per token; several pairs keep accidental
# collisions between unrelated tokens far below any match threshold.
_HASHES_PER_TOKEN = 8


def light_stem(word: str) -> str:
    """Crude suffix stripper that unifies simple inflections (improved/improves)."""
    for suffix in ("ing", "ed", "es", "s"):
        if len(word) > len(suffix) + 2 and word.endswith(suffix):
            word = word[: -len(suffix)]
            break
    if len(word) > 3 and word.endswith("e"):
        word = word[:-1]
    return word


def content_tokens(text: str) -> list[str]:
    """Lowercased, stopword-free, stemmed word tokens of ``text``."""
    return [
        light_stem(w) for w in _WORD_RE.findall(text.lower()) if w not in STOPWORDS
    ]


class ProviderUnavailable(EngineError):
    code = "PROVIDER_UNAVAILABLE"
    http_status = 503


class TemplateUnknown(EngineError):
    code = "TEMPLATE_UNKNOWN"


class OutputTooLong(EngineError):
    code = "OUTPUT_TOO_LONG"


class EmptyText(EngineError):
    code = "EMPTY_TEXT"


PROMPT_TEMPLATES: dict[str, str] = {
    "extract_elements": (
        "Extract knowledge-graph elements from the abstract below.\n"
        "Emit one element per line, nothing else:\n"
        "ENTITY|name|type|description\n"
        "RELATION|source|target|kind|keyword1,keyword2|description\n"
        "Entity types: population, intervention, outcome, mechanism, study_design, "
        "instrument, moderator, confounder, other.\n"
        "Relation kinds: causal, correlational, moderates, confounds, measures, methodological.\n"
        "Document {doc_key}:\n{text}"
    ),
    "extract_keywords": (
        "Split the query into low-level keywords (specific entities, chosen from the "
        "list below when present) and high-level keywords (broad themes).\n"
        "Emit exactly two lines:\nLOW: a, b\nHIGH: c, d\n"
        "Known entities:\n{entity_names}\n"
        "Query: {query}"
    ),
    "classify_picos": (
        "Screen the abstract against the review protocol (older adults 60+ with "
        "dementia or cognitive impairment, exercise interventions, randomized or "
        "otherwise rigorous designs).\n"
        "Emit one line: VERDICT: INCLUDE|EXCLUDE|UNCERTAIN; RATIONALE: <short reason>\n"
        "Title: {title}\nAbstract: {abstract}"
    ),
    "classify_measurement": (
        "Classify the outcome measurement approach of the abstract.\n"
        "Emit one line: CATEGORY: subjective_scales|objective_only|mixed_methods|"
        "survey_only|insufficient_information; INSTRUMENTS: a, b\n"
        "Title: {title}\nAbstract: {abstract}"
    ),
    "summarize": (
        "Merge the description fragments below into one summary paragraph.\n{fragments}"
    ),
    "think": (
        "Analyze the query against the retrieved evidence only. Emit tagged lines:\n"
        "POPULATION: / INTERVENTION: / COMPARISON: / OUTCOMES: (one each)\n"
        "CLAIM: <finding> | keys=<doc keys>\n"
        "PATHWAY: label:role -> label:role -> ...\n"
        "CONFOUNDER: <label>\nNODE: <label> | <role>\nEDGE: <from> -> <to> | <kind>\n"
        "LIMITATION: <gap>\n"
        "Query: {query}\nEntities:\n{entities}\nRelations:\n{relations}\nChunks:\n{chunks}"
    ),
    "compose_response": (
        "Compose the response sections strictly from the supplied evidence. Emit\n"
        "SUMMARY: / PICOS: / CONTEXT: / LIMITATIONS: blocks, each non-empty, with\n"
        "[doc-key] citation markers next to supported statements.\n"
        "Query: {query}\nNoEvidence: {no_evidence}\nDecomposition:\n{decomposition}\n"
        "Claims:\n{claims}\nPathways:\n{pathways}\nExcerpts:\n{excerpts}\n"
        "Limitations:\n{limitations}\nCitationKeys: {citation_keys}"
    ),
}


@dataclass(frozen=True)
class GenerationRequest:
    template_id: str
    variables: Mapping[str, str]
    max_output_tokens: int = 4096


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    output_token_count: int


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-length, L2-normalized embedding."""

    values: np.ndarray

    def cosine(self, other: "EmbeddingVector") -> float:
        return float(np.dot(self.values, other.values))


@dataclass
class ProviderConfig:
    endpoint: str = ""
    model_name: str = ""
    timeout: float = 30.0
    max_retries: int = 2
    auth_source: str = "EVIGRAPH_API_TOKEN"

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def render_template(template_id: str, variables: Mapping[str, str]) -> str:
    """Render a registered template; every placeholder must be bound."""
    if template_id not in PROMPT_TEMPLATES:
        raise TemplateUnknown(f"unknown template: {template_id}")
    template = PROMPT_TEMPLATES[template_id]
    placeholders = {
        name for _, name, _, _ in string.Formatter().parse(template) if name
    }
    missing = placeholders - set(variables)
    if missing:
        raise ValueError(f"unbound template placeholders: {sorted(missing)}")
    return template.format(**{k: str(v) for k, v in variables.items()})


@lru_cache(maxsize=65536)
def _token_coordinates(token: str, seed: int, dimension: int) -> tuple[tuple[int, int], ...]:
    digest = hashlib.blake2b(
        token.encode("utf-8"), digest_size=4 * _HASHES_PER_TOKEN, key=str(seed).encode()
    ).digest()
    coords = []
    for i in range(_HASHES_PER_TOKEN):
        block = digest[4 * i : 4 * i + 4]
        index = int.from_bytes(block[:3], "big") % dimension
        sign = 1 if block[3] & 1 else -1
        coords.append((index, sign))
    return tuple(coords)


class Provider:
    """Interface shared by the mock and real backends."""

    dimension: int = 4096
    seed: int = 0
    truncation_policy: str = "truncate"  # or "error"

    def generate(self, req: GenerationRequest) -> GenerationResponse:
        """Run one generation request, applying the output-length policy."""
        if req.template_id not in PROMPT_TEMPLATES:
            raise TemplateUnknown(f"unknown template: {req.template_id}")
        text = self._generate_text(req)
        words = text.split()
        if len(words) > req.max_output_tokens:
            if self.truncation_policy == "error":
                raise OutputTooLong(
                    f"{len(words)} tokens exceeds limit {req.max_output_tokens}"
                )
            text = " ".join(words[: req.max_output_tokens])
        return GenerationResponse(text=text, output_token_count=token_count(text))

    def embed(self, text: str) -> EmbeddingVector:
        """Embed non-empty text into a unit-norm vector."""
        if not text.strip():
            raise EmptyText("cannot embed empty text")
        return EmbeddingVector(self._embed_text(text))

    def rerank(self, query: str, candidates: Sequence[tuple[str, float]]) -> list[tuple[str, float]]:
        """Re-sort (text, score) candidates by cosine similarity to the query.

        The default hook recomputes cosine scores with this provider's own
        embeddings, which is a stable re-sort for scores produced the same way.
        """
        if not candidates:
            return []
        qv = self.embed(query)
        rescored = [(text, qv.cosine(self.embed(text))) for text, _ in candidates]
        rescored.sort(key=lambda pair: (-pair[1], pair[0]))
        return rescored

    def summarize(self, fragments: Sequence[str]) -> str:
        """Merge description fragments into one paragraph."""
        resp = self.generate(
            GenerationRequest("summarize", {"fragments": "\n".join(fragments)})
        )
        return resp.text

    def _generate_text(self, req: GenerationRequest) -> str:
        raise NotImplementedError

    def _embed_text(self, text: str) -> np.ndarray:
        tokens = content_tokens(text)
        if not tokens:
            # Nothing but stopwords/punctuation: hash the trimmed text whole so
            # the unit-norm invariant still holds.
            tokens = [text.strip().lower()]
        vec = np.zeros(self.dimension, dtype=np.float64)
        for token in tokens:
            for index, sign in _token_coordinates(token, self.seed, self.dimension):
                vec[index] += sign
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            # Signed hashes of a token multiset can cancel exactly only in
            # contrived cases; fall back to a deterministic unit basis vector.
            vec[_token_coordinates(tokens[0], self.seed + 1, self.dimension)[0][0]] = 1.0
            norm = 1.0
        return vec / norm


class HttpProvider(Provider):
    """Chat-completion backend over JSON/HTTP with bounded retries.

    ``post`` is injectable for tests: a callable ``(url, headers, payload) ->
    (status, body_bytes)``. Transient failures (network errors, HTTP 5xx/429)
    are retried up to ``config.max_retries`` times before raising
    :class:`ProviderUnavailable`.
    """

    def __init__(
        self,
        config: ProviderConfig,
        post: Callable[[str, dict, dict], tuple[int, bytes]] | None = None,
        retry_wait: float = 0.5,
    ):
        if not config.endpoint:
            raise ValueError("HttpProvider requires an endpoint")
        self.config = config
        self._post = post or self._urllib_post
        self._retry_wait = retry_wait

    def _urllib_post(self, url: str, headers: dict, payload: dict) -> tuple[int, bytes]:
        request = urllib.request.Request(
            url,
            data=json.dumps(payload).encode("utf-8"),
            headers=headers,
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=self.config.timeout) as resp:
                return resp.status, resp.read()
        except urllib.error.HTTPError as exc:
            return exc.code, exc.read()
        except (urllib.error.URLError, OSError) as exc:
            raise ConnectionError(str(exc)) from exc

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.config.auth_source, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _generate_text(self, req: GenerationRequest) -> str:
        prompt = render_template(req.template_id, req.variables)
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": req.max_output_tokens,
        }
        attempts = self.config.max_retries + 1
        last_error = "no attempt made"
        for attempt in range(attempts):
            try:
                status, body = self._post(self.config.endpoint, self._headers(), payload)
            except ConnectionError as exc:
                last_error = str(exc)
            else:
                if status == 200:
                    try:
                        data = json.loads(body)
                        return data["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError):
                        raise ProviderUnavailable("malformed provider response body")
                if status in (429,) or status >= 500:
                    last_error = f"HTTP {status}"
                else:
                    raise ProviderUnavailable(f"HTTP {status} from provider")
            if attempt < attempts - 1 and self._retry_wait:
                time.sleep(self._retry_wait)
        raise ProviderUnavailable(
            f"provider failed after {attempts} attempts: {last_error}"
        )

    # Embeddings stay local (inherited hashing scheme): retrieval scoring is
    # deterministic and auditable regardless of the generation backend.
