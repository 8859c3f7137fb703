"""Generation backends: a chat-completion HTTP client and a seeded oracle.

Both expose ``generate(GenerationRequest) -> RawGeneration``. The oracle
plants a known authorship bias so the metric code can be checked against
ground truth.
"""
from __future__ import annotations

import functools
import json
import logging
import math
import os
import random
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import httpx

from .corpus import SYNTHETIC_SUFFIX, Author, Document
from .seeding import derive_seed

logger = logging.getLogger(__name__)

ORACLE_DELTA = 0.2
DEFAULT_PARAPHRASE_TEMPERATURE = 0.0

Tag = Tuple[str, str]


class GenerationError(RuntimeError):
    """A single request failed; the run continues without it."""


class AuthenticationError(GenerationError):
    """Credentials rejected; fatal for the whole run."""


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    temperature: float = 0.0
    max_tokens: int = 512
    want_logprobs: bool = True
    tag: Tag = ("", "")
    kind: str = "answer"
    # Only read by the oracle backend; never sent over the wire.
    context: object = field(default=None, compare=False, repr=False)
    reference_answer: Optional[str] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")


@dataclass(frozen=True)
class RawGeneration:
    text: str
    tokens: Tuple[Tuple[str, float], ...] = ()
    model_id: str = ""
    tag: Tag = ("", "")
    logprobs_missing: bool = False

    def __post_init__(self):
        if self.tokens:
            if "".join(t for t, _ in self.tokens) != self.text:
                raise ValueError("token texts do not reconstruct the generation text")
            if any(lp > 0 for _, lp in self.tokens):
                raise ValueError("token logprobs must be <= 0")

    def to_json(self) -> dict:
        return {"tag": list(self.tag), "model_id": self.model_id, "text": self.text,
                "tokens": [[t, lp] for t, lp in self.tokens], "logprobs_missing": self.logprobs_missing}

    @classmethod
    def from_json(cls, obj: dict) -> "RawGeneration":
        return cls(obj["text"], tuple((t, float(lp)) for t, lp in obj.get("tokens", [])),
                   obj.get("model_id", ""), tuple(obj["tag"]), bool(obj.get("logprobs_missing", False)))


@dataclass(frozen=True)
class OraclePolicy:
    bias_strength: float = 0.0
    cite_relevant_base: float = 0.7
    extra_cite_rate: float = 0.1
    confidence_relevant: float = 0.95
    confidence_nonrelevant: float = 0.85
    seed: int = 0

    def __post_init__(self):
        if not -1.0 <= self.bias_strength <= 1.0:
            raise ValueError("bias_strength must lie in [-1, 1]")
        for name in ("cite_relevant_base", "extra_cite_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("confidence_relevant", "confidence_nonrelevant"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")


_TEXT_TOKEN_RE = re.compile(r"\s*\S+|\s+")

_FIRST = ("James", "Mary", "Robert", "Patricia", "John", "Jennifer", "Michael", "Linda", "David",
          "Elizabeth", "William", "Barbara", "Richard", "Susan", "Joseph", "Jessica", "Thomas",
          "Sarah", "Daniel", "Karen")
_LAST = ("Smith", "Johnson", "Williams", "Brown", "Jones", "Garcia", "Miller", "Davis", "Rodriguez",
         "Martinez", "Hernandez", "Lopez", "Wilson", "Anderson", "Taylor", "Moore", "Jackson",
         "Martin", "Lee", "Porter")


@functools.lru_cache(maxsize=8192)
def _oracle_uniforms(seed: int, query_id: str, n: int) -> Tuple[float, ...]:
    rng = random.Random(derive_seed(seed, "oracle", query_id))
    return tuple(rng.random() for _ in range(n))


@functools.lru_cache(maxsize=8192)
def _sentence_tokens(answer: Optional[str]) -> Tuple[Tuple[str, float], ...]:
    if answer:
        sentence = "The answer is " + answer.replace("[", "(").replace("]", ")")
    else:
        sentence = "The answer is unknown"
    return tuple((t, 0.0) for t in _TEXT_TOKEN_RE.findall(sentence))


@functools.lru_cache(maxsize=4096)
def _citation_tokens(index: int, conf: float) -> Tuple[Tuple[str, float], ...]:
    # "[", one token per digit sharing ln(conf) equally, "]"
    digits = str(index)
    return (("[", 0.0),) + tuple((ch, math.log(conf) / len(digits)) for ch in digits) + (("]", 0.0),)


def oracle_generate(ctx, policy: OraclePolicy, answer: Optional[str] = None,
                    tag: Tag = ("", ""), model_id: str = "oracle") -> RawGeneration:
    """Seeded synthetic answer with a planted authorship bias.

    Position ``i`` is cited iff ``u_i < p_i`` where the uniforms depend only
    on (policy.seed, query_id), so every condition of a query shares them.
    ``p_i`` is the base rate for the document's relevance, shifted by
    +bias*DELTA for a human-kind label and -bias*DELTA for an llm-kind one.
    """
    uniforms = _oracle_uniforms(policy.seed, ctx.query_id, ctx.k)
    shift = policy.bias_strength * ORACLE_DELTA
    cited = []
    for d in ctx.docs:
        rel = d.index in ctx.relevant_set
        p = policy.cite_relevant_base if rel else policy.extra_cite_rate
        if d.label is not None:
            p += shift if d.label.kind.human_kind else -shift
        if uniforms[d.index] < min(1.0, max(0.0, p)):
            cited.append(d.index)

    hit = any(i in ctx.relevant_set for i in cited)
    tokens: List[Tuple[str, float]] = list(_sentence_tokens(answer if hit else None))
    if cited:
        tokens.append((" ", 0.0))
    for i in cited:
        conf = policy.confidence_relevant if i in ctx.relevant_set else policy.confidence_nonrelevant
        tokens.extend(_citation_tokens(i, conf))
    tokens.append((".", 0.0))
    text = "".join(t for t, _ in tokens)
    return RawGeneration(text, tuple(tokens), model_id, tag)


class OracleGateway:
    """In-process backend. Answers come from :func:`oracle_generate`;
    paraphrase requests echo the passage, name requests list seeded names."""

    model_id = "oracle"

    def __init__(self, policy: Optional[OraclePolicy] = None,
                 paraphraser: Optional[Callable[[str], str]] = None):
        self.policy = policy or OraclePolicy()
        self.paraphraser = paraphraser or (lambda s: s)

    def generate(self, req: GenerationRequest) -> RawGeneration:
        if req.kind == "answer":
            if req.context is None:
                raise GenerationError("oracle answer generation needs the request context")
            return oracle_generate(req.context, self.policy, req.reference_answer, req.tag, self.model_id)
        if req.kind == "paraphrase":
            passage = req.prompt.split("Passage: ", 1)[-1]
            return RawGeneration(self.paraphraser(passage), (), self.model_id, req.tag)
        if req.kind == "names":
            rng = random.Random(derive_seed(self.policy.seed, "names", *req.tag))
            pairs = rng.sample([(f, l) for f in _FIRST for l in _LAST], 100)
            text = "\n".join(f"{i}. {f} {l}" for i, (f, l) in enumerate(pairs, 1))
            return RawGeneration(text, (), self.model_id, req.tag)
        raise GenerationError(f"unknown request kind {req.kind!r}")


@dataclass
class HttpSettings:
    base_url: str
    model_id: str
    path: str = "/v1/chat/completions"
    api_key_env: str = "OPENAI_API_KEY"
    parallelism: int = 4
    timeout_s: float = 60.0
    max_retries: int = 4
    backoff_base_s: float = 1.0
    backoff_cap_s: float = 30.0


class HttpGateway:
    """Client for endpoints speaking the chat-completion schema with logprobs."""

    def __init__(self, settings: HttpSettings, transport: Optional[httpx.BaseTransport] = None,
                 sleep: Callable[[float], None] = time.sleep):
        self.settings = settings
        self.model_id = settings.model_id
        self._sleep = sleep
        headers = {}
        key = os.environ.get(settings.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        self._client = httpx.Client(base_url=settings.base_url, headers=headers,
                                    timeout=settings.timeout_s, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _payload(self, req: GenerationRequest) -> dict:
        body = {"model": self.model_id, "messages": [{"role": "user", "content": req.prompt}],
                "temperature": req.temperature, "max_tokens": req.max_tokens}
        if req.want_logprobs:
            body["logprobs"] = True
        return body

    def generate(self, req: GenerationRequest) -> RawGeneration:
        s = self.settings
        last_err = None
        for attempt in range(s.max_retries + 1):
            if attempt:
                self._sleep(min(s.backoff_cap_s, s.backoff_base_s * 2 ** (attempt - 1)))
            try:
                resp = self._client.post(s.path, json=self._payload(req))
            except httpx.TransportError as e:
                last_err = f"{type(e).__name__}: {e}"
                continue
            if resp.status_code in (401, 403):
                raise AuthenticationError(f"endpoint rejected credentials ({resp.status_code})")
            if resp.status_code == 429 or resp.status_code >= 500:
                last_err = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise GenerationError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            return parse_completion(resp.json(), req, self.model_id)
        raise GenerationError(f"request {req.tag} failed after {s.max_retries + 1} attempts: {last_err}")


def parse_completion(body: dict, req: GenerationRequest, model_id: str) -> RawGeneration:
    """Turn a chat (or legacy text) completion response into a RawGeneration."""
    try:
        choice = body["choices"][0]
    except (KeyError, IndexError, TypeError):
        raise GenerationError("response has no choices") from None
    msg = choice.get("message")
    text = msg.get("content") if isinstance(msg, dict) else choice.get("text")
    if text is None:
        raise GenerationError("response has no text")
    tokens: Tuple[Tuple[str, float], ...] = ()
    lp = choice.get("logprobs")
    if isinstance(lp, dict):
        if isinstance(lp.get("content"), list):
            tokens = tuple((str(t["token"]), min(0.0, float(t["logprob"]))) for t in lp["content"])
        elif isinstance(lp.get("tokens"), list):
            tokens = tuple((str(t), min(0.0, float(p)))
                           for t, p in zip(lp["tokens"], lp.get("token_logprobs", [])))
    if tokens and "".join(t for t, _ in tokens) != text:
        logger.warning("tag %s: tokens do not reconstruct text; dropping logprobs", req.tag)
        tokens = ()
    missing = req.want_logprobs and not tokens
    if missing:
        logger.warning("tag %s: logprobs requested but missing; confidence disabled", req.tag)
    return RawGeneration(text, tokens, body.get("model", model_id) or model_id, req.tag, missing)


class GenerationLog:
    """Append-only JSONL log of RawGeneration records, one per tag."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._fh = None

    def read(self) -> Dict[Tag, RawGeneration]:
        out: Dict[Tag, RawGeneration] = {}
        if not self.path.exists():
            return out
        with open(self.path, "r", encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    rec = RawGeneration.from_json(json.loads(line))
                    out.setdefault(rec.tag, rec)
        return out

    def append(self, gen: RawGeneration) -> None:
        line = json.dumps(gen.to_json(), ensure_ascii=False, sort_keys=True) + "\n"
        with self._lock:
            if self._fh is None:
                self._fh = open(self.path, "a", encoding="utf-8")
            self._fh.write(line)
            self._fh.flush()

    def close(self) -> None:
        with self._lock:
            if self._fh is not None:
                self._fh.close()
                self._fh = None


def run_generations(gateway, requests: Iterable[GenerationRequest], log: Optional[GenerationLog] = None,
                    parallelism: int = 1) -> Tuple[Dict[Tag, RawGeneration], Dict[Tag, str]]:
    """Execute ``requests`` not already in ``log``; return (records, failures).

    Records previously logged are reused, so an interrupted run resumes. An
    authentication failure stops everything and propagates.
    """
    done = log.read() if log is not None else {}
    todo, seen = [], set(done)
    for r in requests:
        if r.tag not in seen:
            seen.add(r.tag)
            todo.append(r)
    results = dict(done)
    failures: Dict[Tag, str] = {}

    def one(req):
        gen = gateway.generate(req)
        if log is not None:
            log.append(gen)
        return gen

    def collect(req, fn):
        try:
            results[req.tag] = fn()
        except AuthenticationError:
            raise
        except GenerationError as e:
            logger.warning("generation failed for %s: %s", req.tag, e)
            failures[req.tag] = str(e)

    try:
        if parallelism <= 1:
            for req in todo:
                collect(req, lambda: one(req))
            return results, failures
        pool = ThreadPoolExecutor(max_workers=parallelism)
        try:
            futures = {pool.submit(one, req): req for req in todo}
            for fut in as_completed(futures):
                collect(futures[fut], fut.result)
        finally:
            # on an authentication error, queued requests are dropped
            pool.shutdown(wait=True, cancel_futures=True)
        return results, failures
    finally:
        if log is not None:
            log.close()


def paraphrase(doc: Document, gateway, temperature: float = DEFAULT_PARAPHRASE_TEMPERATURE,
               template: Optional[str] = None) -> Document:
    """LLM-written counterpart of a human document."""
    from .context import fill, load_template

    if doc.actual_author is not Author.HUMAN:
        raise ValueError(f"{doc.doc_id!r} is not human-written; only originals are paraphrased")
    prompt = fill(template or load_template("paraphrase"), passage=doc.text)
    req = GenerationRequest(prompt, temperature=temperature, max_tokens=1024, want_logprobs=False,
                            tag=(doc.doc_id, "paraphrase"), kind="paraphrase")
    text = gateway.generate(req).text.strip()
    if not text:
        raise GenerationError(f"empty paraphrase for {doc.doc_id!r}")
    return Document(doc.doc_id + SYNTHETIC_SUFFIX, text, Author.LLM, paraphrase_of=doc.doc_id)
