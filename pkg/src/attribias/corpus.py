"""Benchmark loading: queries, passage collection and relevance judgments.

Files are JSONL for queries and documents and 4-column TREC qrels. Loading
validates identifiers and cross references; everything is read-only after.
"""
from __future__ import annotations

import enum
import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

SYNTHETIC_SUFFIX = "::synthetic"


class CorpusError(ValueError):
    """Malformed or inconsistent benchmark input."""


class Author(str, enum.Enum):
    HUMAN = "human"
    LLM = "llm"

    def flipped(self) -> "Author":
        return Author.LLM if self is Author.HUMAN else Author.HUMAN


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    actual_author: Author = Author.HUMAN
    paraphrase_of: Optional[str] = None

    def __post_init__(self):
        if not self.doc_id:
            raise CorpusError("empty doc_id")
        if not self.text:
            raise CorpusError(f"document {self.doc_id!r} has empty text")
        if self.paraphrase_of is not None and self.actual_author is not Author.LLM:
            raise CorpusError(f"document {self.doc_id!r} is a paraphrase but not LLM-authored")

    def to_json(self) -> dict:
        obj = {"doc_id": self.doc_id, "text": self.text, "actual_author": self.actual_author.value}
        if self.paraphrase_of is not None:
            obj["paraphrase_of"] = self.paraphrase_of
        return obj


@dataclass(frozen=True)
class Query:
    query_id: str
    text: str
    gold_answers: Tuple[str, ...]

    def __post_init__(self):
        if not self.query_id:
            raise CorpusError("empty query_id")
        if not self.gold_answers:
            raise CorpusError(f"query {self.query_id!r} has no gold answers")

    def to_json(self) -> dict:
        return {"query_id": self.query_id, "text": self.text, "gold_answers": list(self.gold_answers)}


Qrels = Dict[Tuple[str, str], int]


@dataclass
class Benchmark:
    queries: List[Query]
    collection: Dict[str, Document]
    qrels: Qrels = field(default_factory=dict)

    def __post_init__(self):
        self.validate()
        self._relevant: Dict[str, set] = {}
        for (qid, did), g in self.qrels.items():
            if g > 0:
                self._relevant.setdefault(qid, set()).add(did)

    def validate(self) -> None:
        seen = set()
        for q in self.queries:
            if q.query_id in seen:
                raise CorpusError(f"duplicate query_id {q.query_id!r}")
            seen.add(q.query_id)
        for doc_id, doc in self.collection.items():
            if doc_id != doc.doc_id:
                raise CorpusError(f"collection key {doc_id!r} does not match doc_id {doc.doc_id!r}")
            if doc.paraphrase_of is not None:
                src = self.collection.get(doc.paraphrase_of)
                if src is None:
                    raise CorpusError(
                        f"dangling reference: {doc_id!r} paraphrases unknown doc {doc.paraphrase_of!r}")
                if src.actual_author is not Author.HUMAN:
                    raise CorpusError(f"{doc_id!r} paraphrases non-human doc {src.doc_id!r}")
        for (qid, did), grade in self.qrels.items():
            if grade < 0:
                raise CorpusError(f"negative grade for ({qid}, {did})")
            if qid not in seen:
                raise CorpusError(f"dangling reference: qrels query_id {qid!r} not in queries")
            if did not in self.collection:
                raise CorpusError(f"dangling reference: qrels doc_id {did!r} not in collection")

    @property
    def query_map(self) -> Dict[str, Query]:
        return {q.query_id: q for q in self.queries}

    def relevant_docs(self, query_id: str) -> set:
        return set(self._relevant.get(query_id, ()))

    def is_relevant(self, query_id: str, doc_id: str) -> bool:
        return doc_id in self._relevant.get(query_id, ())

    def human_collection(self) -> Dict[str, Document]:
        return {k: d for k, d in self.collection.items() if d.actual_author is Author.HUMAN}

    def synthetic_of(self, doc_id: str) -> Optional[Document]:
        return self.collection.get(doc_id + SYNTHETIC_SUFFIX)


def _read_jsonl(path: Path) -> Iterable[Tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise CorpusError(f"{path}:{lineno}: malformed JSON ({e.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def load_queries(path) -> List[Query]:
    path = Path(path)
    out, seen = [], set()
    for lineno, obj in _read_jsonl(path):
        try:
            qid, text, answers = str(obj["query_id"]), obj["text"], obj["gold_answers"]
        except KeyError as e:
            raise CorpusError(f"{path}:{lineno}: missing field {e.args[0]!r}") from None
        if not isinstance(answers, list) or not answers:
            raise CorpusError(f"{path}:{lineno}: gold_answers must be a non-empty list")
        if qid in seen:
            raise CorpusError(f"{path}:{lineno}: duplicate query_id {qid!r}")
        seen.add(qid)
        out.append(Query(qid, text, tuple(str(a) for a in answers)))
    return out


def load_collection(path) -> Dict[str, Document]:
    path = Path(path)
    out: Dict[str, Document] = {}
    for lineno, obj in _read_jsonl(path):
        try:
            did, text = str(obj["doc_id"]), obj["text"]
            author = Author(obj.get("actual_author", "human").lower())
        except KeyError as e:
            raise CorpusError(f"{path}:{lineno}: missing field {e.args[0]!r}") from None
        except ValueError:
            raise CorpusError(f"{path}:{lineno}: bad actual_author {obj.get('actual_author')!r}") from None
        if did in out:
            raise CorpusError(f"{path}:{lineno}: duplicate doc_id {did!r}")
        try:
            out[did] = Document(did, text, author, obj.get("paraphrase_of"))
        except CorpusError as e:
            raise CorpusError(f"{path}:{lineno}: {e}") from None
    return out


def load_qrels(path) -> Qrels:
    path = Path(path)
    qrels: Qrels = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 4:
                raise CorpusError(f"{path}:{lineno}: expected 4 columns, got {len(parts)}")
            qid, _, did, grade = parts
            try:
                g = int(grade)
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: non-integer grade {grade!r}") from None
            if g < 0:
                raise CorpusError(f"{path}:{lineno}: negative grade")
            qrels[(qid, did)] = g
    return qrels


def load_benchmark(queries_path, collection_path, qrels_path) -> Benchmark:
    return Benchmark(load_queries(queries_path), load_collection(collection_path), load_qrels(qrels_path))


def write_queries(queries: Iterable[Query], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for q in queries:
            f.write(json.dumps(q.to_json(), ensure_ascii=False) + "\n")


def write_collection(collection: Mapping[str, Document], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in collection.values():
            f.write(json.dumps(doc.to_json(), ensure_ascii=False) + "\n")


def write_qrels(qrels: Qrels, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for (qid, did), g in qrels.items():
            f.write(f"{qid} 0 {did} {g}\n")


def save_benchmark(bench: Benchmark, directory) -> Tuple[Path, Path, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = d / "queries.jsonl", d / "collection.jsonl", d / "qrels.txt"
    write_queries(bench.queries, paths[0])
    write_collection(bench.collection, paths[1])
    write_qrels(bench.qrels, paths[2])
    return paths


def filter_single_relevant(
    bench: Benchmark, contexts: Mapping[str, Sequence[str]]
) -> List[str]:
    """Query ids whose context holds exactly one relevant document.

    Queries absent from ``contexts`` are skipped with a log message. Order
    follows ``bench.queries``.
    """
    kept = []
    missing = []
    for q in bench.queries:
        ctx = contexts.get(q.query_id)
        if ctx is None:
            missing.append(q.query_id)
            continue
        n_rel = sum(1 for d in ctx if bench.is_relevant(q.query_id, d))
        if n_rel == 1:
            kept.append(q.query_id)
    if missing:
        logger.info("filter_single_relevant: %d queries without a context skipped", len(missing))
    return kept


def sample_queries(pool, n: int, seed: int) -> List[str]:
    """Seeded uniform sample without replacement.

    ``pool`` is a Benchmark (all its query ids) or a sequence of ids. The
    result is a prefix of a seeded permutation of the pool, so growing ``n``
    under the same seed only appends.
    """
    if isinstance(pool, Benchmark):
        pool = [q.query_id for q in pool.queries]
    pool = list(pool)
    if n > len(pool):
        raise CorpusError(f"cannot sample {n} queries from a population of {len(pool)}")
    perm = pool[:]
    random.Random(seed).shuffle(perm)
    return perm[:n]
