"""Citation parsing, attribution precision/recall, Exact Match, and
per-citation generation probabilities."""
from __future__ import annotations

import bisect
import functools
import itertools
import logging
import math
import re
import string
from dataclasses import dataclass
from typing import FrozenSet, Iterable, Iterator, Optional, Sequence, Tuple

logger = logging.getLogger(__name__)

_GROUP_RE = re.compile(r"\[\s*\d+(?:\s*,\s*\d+)*\s*\]")
_NUM_RE = re.compile(r"\d+")


@dataclass(frozen=True)
class CitationSet:
    cited: Tuple[int, ...]
    out_of_range: Tuple[int, ...]
    k: int

    @property
    def distinct(self) -> FrozenSet[int]:
        return frozenset(self.cited)

    def serialize(self) -> str:
        return "".join(f"[{i}]" for i in self.cited + self.out_of_range)


def _citation_spans(text: str) -> Iterator[Tuple[int, int, int, int, int]]:
    """Yield (index, numeral_start, numeral_end, group_start, group_end)."""
    for g in _GROUP_RE.finditer(text):
        for m in _NUM_RE.finditer(text, g.start(), g.end()):
            yield int(m.group()), m.start(), m.end(), g.start(), g.end()


def parse_citations(answer_text: str, k: int) -> CitationSet:
    """Every bracketed index, including runs like ``[2][5]`` and ``[1, 3]``.

    Indices >= k go to ``out_of_range``; repeats are kept in ``cited``.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    cited, oor = [], []
    for group in _GROUP_RE.findall(answer_text or ""):
        for num in _NUM_RE.findall(group):
            idx = int(num)
            (cited if idx < k else oor).append(idx)
    return CitationSet(tuple(cited), tuple(oor), k)


def score_attribution(cits: CitationSet, relevant_set: Iterable[int]) -> Tuple[float, float, int, int]:
    """(precision, recall, n_cited, n_cited_relevant) in percent.

    Set semantics over in-range citations; an answer citing nothing gets
    precision 0.
    """
    rel = frozenset(relevant_set)
    if not rel:
        raise ValueError("relevant_set must be non-empty")
    distinct = cits.distinct
    hits = len(distinct & rel)
    precision = 100.0 * hits / len(distinct) if distinct else 0.0
    recall = 100.0 * hits / len(rel)
    return precision, recall, len(distinct), hits


_ARTICLES_RE = re.compile(r"\b(a|an|the)\b")
_PUNCT = str.maketrans("", "", string.punctuation)


@functools.lru_cache(maxsize=4096)
def normalize_answer(s: str) -> str:
    """Lowercase, drop punctuation and articles, collapse whitespace."""
    s = s.lower().translate(_PUNCT)
    s = _ARTICLES_RE.sub(" ", s)
    return " ".join(s.split())


def exact_match(answer_text: str, gold_answers: Sequence[str]) -> int:
    """1 if some normalized gold answer occurs inside the normalized answer."""
    answer = normalize_answer(answer_text or "")
    if not answer:
        return 0
    for gold in gold_answers:
        g = normalize_answer(gold)
        if g and g in answer:
            return 1
    return 0


@dataclass(frozen=True)
class QueryScore:
    query_id: str
    condition: str
    precision: float
    recall: float
    em: int
    n_cited: int
    n_cited_relevant: int

    def to_json(self) -> dict:
        return {"query_id": self.query_id, "condition": self.condition, "precision": self.precision,
                "recall": self.recall, "em": self.em, "n_cited": self.n_cited,
                "n_cited_relevant": self.n_cited_relevant}

    @classmethod
    def from_json(cls, obj: dict) -> "QueryScore":
        return cls(obj["query_id"], obj["condition"], float(obj["precision"]), float(obj["recall"]),
                   int(obj["em"]), int(obj["n_cited"]), int(obj["n_cited_relevant"]))


def score_query(query_id: str, condition: str, answer_text: str, k: int, relevant_set,
                gold_answers: Sequence[str], cits: Optional[CitationSet] = None) -> QueryScore:
    if cits is None:
        cits = parse_citations(answer_text, k)
    p, r, n, nr = score_attribution(cits, relevant_set)
    return QueryScore(query_id, condition, p, r, exact_match(answer_text, gold_answers), n, nr)


class MissingLogprobs(ValueError):
    """The generation carries no token log-probabilities."""


@dataclass(frozen=True)
class CitationConfidence:
    entries: Tuple[Tuple[int, float, bool], ...]

    def to_json(self) -> list:
        return [list(e) for e in self.entries]

    @classmethod
    def from_json(cls, obj: list) -> "CitationConfidence":
        return cls(tuple((int(i), float(p), bool(r)) for i, p, r in obj))


def extract_citation_confidence(gen, cits: CitationSet, relevant_set) -> CitationConfidence:
    """Probability of each in-range citation occurrence in ``gen``.

    The log-probabilities of the tokens overlapping a citation's numeral are
    summed and exponentiated. If one of those tokens also carries digits
    outside the numeral its probability cannot be attributed, and the
    citation is skipped with a warning.
    """
    if not gen.tokens:
        raise MissingLogprobs(f"generation {gen.tag} has no token logprobs")
    ends = list(itertools.accumulate(len(t) for t, _ in gen.tokens))
    starts = [0] + ends[:-1]
    rel = frozenset(relevant_set)
    out = []
    for idx, ns, ne, _, _ in _citation_spans(gen.text):
        if idx >= cits.k:
            continue
        first = bisect.bisect_right(starts, ns) - 1
        j, total, ok = first, 0.0, True
        while j < len(starts) and starts[j] < ne:
            if ends[j] > ns:
                tok = gen.tokens[j][0]
                outside = tok[:max(0, ns - starts[j])] + tok[ne - starts[j]:]
                if any(ch.isdigit() for ch in outside):
                    ok = False
                    break
                total += gen.tokens[j][1]
            j += 1
        if not ok:
            logger.warning("tag %s: citation [%d] shares a token with other digits; skipped", gen.tag, idx)
            continue
        out.append((idx, math.exp(total), idx in rel))
    return CitationConfidence(tuple(out))
