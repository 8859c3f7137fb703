"""LLM-written counterpart collection and the relevance-preservation audit."""
from __future__ import annotations

import csv
import enum
import functools
import logging
import os
import random
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from .corpus import Author, Benchmark, Document
from .gateway import DEFAULT_PARAPHRASE_TEMPERATURE, GenerationError, paraphrase
from .seeding import derive_seed

logger = logging.getLogger(__name__)

MAX_FAILURE_RATE = 0.01
WORKSHEET_FIELDS = ["item_id", "query_text", "original_text", "synthetic_text", "gold_answer",
                    "expected_status", "verdict"]


class SynthesisError(RuntimeError):
    pass


class AuditError(ValueError):
    pass


def build_synthetic_collection(
    bench: Benchmark, gateway, temperature: float = DEFAULT_PARAPHRASE_TEMPERATURE,
    sources: Optional[Sequence[str]] = None,
) -> Tuple[Dict[str, Document], Dict[str, str]]:
    """Paraphrase every source document; return (synthetic docs, skipped).

    ``skipped`` maps source doc_id to the failure reason. More than 1%
    failures raises SynthesisError.
    """
    ids = list(sources) if sources is not None else list(bench.collection)
    for did in ids:
        if bench.collection[did].actual_author is not Author.HUMAN:
            raise ValueError(f"source document {did!r} is already LLM-written")
    out: Dict[str, Document] = {}
    skipped: Dict[str, str] = {}
    for did in ids:
        try:
            doc = paraphrase(bench.collection[did], gateway, temperature)
        except GenerationError as e:
            skipped[did] = str(e)
            logger.warning("paraphrase failed for %s: %s", did, e)
            continue
        out[doc.doc_id] = doc
    if ids and len(skipped) > MAX_FAILURE_RATE * len(ids):
        raise SynthesisError(f"{len(skipped)} of {len(ids)} paraphrases failed (limit 1%)")
    return out, skipped


def length_ratio(bench: Benchmark, synth: Mapping[str, Document]) -> float:
    """Mean synthetic/original length in characters (reported, not gated)."""
    ratios = [len(d.text) / len(bench.collection[d.paraphrase_of].text) for d in synth.values()]
    return sum(ratios) / len(ratios) if ratios else float("nan")


class ExpectedStatus(str, enum.Enum):
    STILL_RELEVANT = "still_relevant"
    STILL_NONRELEVANT = "still_nonrelevant"


class Verdict(str, enum.Enum):
    PASS = "pass"
    FAIL = "fail"


@dataclass(frozen=True)
class AuditItem:
    query_id: str
    original_doc_id: str
    synthetic_doc_id: str
    gold_answer: str
    expected_status: ExpectedStatus
    verdict: Optional[Verdict] = None

    @property
    def item_id(self) -> str:
        return f"{self.query_id}|{self.original_doc_id}"


def make_audit_sample(
    bench: Benchmark,
    synth: Mapping[str, Document],
    fraction: float = 0.1,
    seed: int = 0,
    contexts: Optional[Mapping[str, Sequence[str]]] = None,
    query_ids: Optional[Sequence[str]] = None,
) -> List[AuditItem]:
    """Audit items: every relevant pair of the given queries, plus the
    non-relevant context passages of a seeded ``fraction`` of those queries.

    Without ``contexts`` the non-relevant passages are the grade-0 qrels rows.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    qmap = bench.query_map
    qids = list(query_ids) if query_ids is not None else [q.query_id for q in bench.queries]
    by_original = {d.paraphrase_of: d.doc_id for d in synth.values()}

    def item(qid, did, status):
        return AuditItem(qid, did, by_original[did], qmap[qid].gold_answers[0], status)

    items = []
    for qid in qids:
        for did in sorted(bench.relevant_docs(qid)):
            if did in by_original:
                items.append(item(qid, did, ExpectedStatus.STILL_RELEVANT))
    n_sub = min(len(qids), max(1, round(fraction * len(qids))))
    sub = random.Random(derive_seed(seed, "audit")).sample(qids, n_sub)
    for qid in sub:
        if contexts is not None:
            cands = contexts.get(qid, ())
        else:
            cands = sorted(d for (q, d), g in bench.qrels.items() if q == qid and g == 0)
        for did in cands:
            if not bench.is_relevant(qid, did) and did in by_original:
                items.append(item(qid, did, ExpectedStatus.STILL_NONRELEVANT))
    return items


def write_audit_worksheet(items: Sequence[AuditItem], bench: Benchmark, synth: Mapping[str, Document],
                          path) -> None:
    qmap = bench.query_map
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=WORKSHEET_FIELDS)
        w.writeheader()
        for it in items:
            w.writerow({
                "item_id": it.item_id,
                "query_text": qmap[it.query_id].text,
                "original_text": bench.collection[it.original_doc_id].text,
                "synthetic_text": synth[it.synthetic_doc_id].text,
                "gold_answer": it.gold_answer,
                "expected_status": it.expected_status.value,
                "verdict": it.verdict.value if it.verdict else "",
            })


@dataclass(frozen=True)
class AuditSummary:
    n_items: int
    pass_rate: float
    pass_rate_by_status: Dict[str, float]
    threshold: float
    gate_open: bool


@functools.lru_cache(maxsize=8)
def _read_verdicts(path: str, mtime_ns: int, size: int) -> Dict[str, Verdict]:
    # keyed on the file's stat so repeated runs skip re-parsing an unchanged sheet
    verdicts: Dict[str, Verdict] = {}
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            v = (row.get("verdict") or "").strip().lower()
            if v:
                try:
                    verdicts[row["item_id"]] = Verdict(v)
                except ValueError:
                    raise AuditError(f"bad verdict {v!r} for item {row['item_id']!r}") from None
    return verdicts


def record_audit(items: Sequence[AuditItem], verdicts_path, threshold: float = 1.0
                 ) -> Tuple[AuditSummary, List[AuditItem]]:
    """Attach verdicts from a filled worksheet and summarise pass rates."""
    if not items:
        raise AuditError("audit item list is empty; run the audit before using synthetic documents")
    st = os.stat(verdicts_path)
    verdicts = _read_verdicts(os.path.abspath(verdicts_path), st.st_mtime_ns, st.st_size)
    missing = [it.item_id for it in items if it.item_id not in verdicts]
    if missing:
        raise AuditError(f"missing verdicts for {len(missing)} items: {', '.join(missing[:20])}")
    judged = [AuditItem(it.query_id, it.original_doc_id, it.synthetic_doc_id, it.gold_answer,
                        it.expected_status, verdicts[it.item_id]) for it in items]

    def rate(group):
        return sum(it.verdict is Verdict.PASS for it in group) / len(group)

    by_status = {}
    for status in ExpectedStatus:
        group = [it for it in judged if it.expected_status is status]
        if group:
            by_status[status.value] = rate(group)
    overall = rate(judged)
    return AuditSummary(len(judged), overall, by_status, threshold, overall >= threshold), judged
