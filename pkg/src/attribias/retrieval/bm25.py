"""In-memory BM25 index over a passage collection."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from . import kernel
from .ranked import RankedList

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)
TIE_RTOL = 1e-12  # relative gap below which two scores are treated as tied


def tokenize(text: str) -> List[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Bm25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self):
        if not self.k1 > 0:
            raise ValueError(f"k1 must be > 0, got {self.k1}")
        if not 0.0 <= self.b <= 1.0:
            raise ValueError(f"b must be in [0, 1], got {self.b}")


def idf_weight(n_docs: int, df: int) -> float:
    # Lucene variant; strictly positive for every df <= n_docs.
    return math.log(1.0 + (n_docs - df + 0.5) / (df + 0.5))


class Index:
    """Postings in CSR layout: ``offsets[t]:offsets[t+1]`` slices the
    ``post_docs``/``post_tf`` arrays for term id ``t``."""

    def __init__(self, doc_ids, vocab, offsets, post_docs, post_tf, doc_len):
        self.doc_ids: List[str] = doc_ids
        self.vocab: Dict[str, int] = vocab
        self.offsets = offsets
        self.post_docs = post_docs
        self.post_tf = post_tf
        self.doc_len = doc_len
        self.n_docs = len(doc_ids)
        self.avgdl = float(doc_len.mean()) if self.n_docs else 0.0
        self.df = np.diff(offsets)
        self.idf = np.array([idf_weight(self.n_docs, int(df)) for df in self.df], dtype=np.float64)
        self._norm_cache: Dict[Bm25Params, np.ndarray] = {}

    def postings(self, term: str) -> Dict[str, int]:
        t = self.vocab.get(term)
        if t is None:
            return {}
        lo, hi = self.offsets[t], self.offsets[t + 1]
        return {self.doc_ids[d]: int(tf) for d, tf in zip(self.post_docs[lo:hi], self.post_tf[lo:hi])}

    def doc_freq(self, term: str) -> int:
        t = self.vocab.get(term)
        return 0 if t is None else int(self.df[t])

    def norm(self, params: Bm25Params) -> np.ndarray:
        out = self._norm_cache.get(params)
        if out is None:
            avgdl = self.avgdl if self.avgdl > 0 else 1.0
            out = params.k1 * (1.0 - params.b + params.b * self.doc_len / avgdl)
            self._norm_cache[params] = out
        return out


def build_index(collection: Mapping) -> Index:
    """Build an index over ``collection`` (doc_id -> Document or text)."""
    if not collection:
        raise ValueError("cannot index an empty collection")
    doc_ids = list(collection)
    vocab: Dict[str, int] = {}
    per_term: List[List[tuple]] = []
    doc_len = np.zeros(len(doc_ids), dtype=np.float64)
    for d, doc_id in enumerate(doc_ids):
        doc = collection[doc_id]
        toks = tokenize(doc if isinstance(doc, str) else doc.text)
        doc_len[d] = len(toks)
        for term, tf in Counter(toks).items():
            t = vocab.get(term)
            if t is None:
                t = vocab[term] = len(per_term)
                per_term.append([])
            per_term[t].append((d, tf))
    offsets = np.zeros(len(per_term) + 1, dtype=np.int64)
    for t, plist in enumerate(per_term):
        offsets[t + 1] = offsets[t] + len(plist)
    post_docs = np.empty(int(offsets[-1]), dtype=np.int32)
    post_tf = np.empty(int(offsets[-1]), dtype=np.int32)
    for t, plist in enumerate(per_term):
        lo = offsets[t]
        for j, (d, tf) in enumerate(plist):
            post_docs[lo + j] = d
            post_tf[lo + j] = tf
    return Index(doc_ids, vocab, offsets, post_docs, post_tf, doc_len)


def query_terms(index: Index, text: str) -> np.ndarray:
    """Distinct in-vocabulary term ids in first-occurrence order."""
    seen = {}
    for tok in tokenize(text):
        t = index.vocab.get(tok)
        if t is not None and t not in seen:
            seen[t] = None
    return np.fromiter(seen, dtype=np.int64, count=len(seen))


def score_all(index: Index, text: str, params: Optional[Bm25Params] = None, backend=None) -> np.ndarray:
    params = params or Bm25Params()
    accumulate = backend or kernel.accumulate
    scores = np.zeros(index.n_docs, dtype=np.float64)
    accumulate(query_terms(index, text), index.idf, index.offsets, index.post_docs,
               index.post_tf, index.norm(params), params.k1, scores)
    return scores


def retrieve(index: Index, query, k: int = 10, params: Optional[Bm25Params] = None,
             backend=None) -> RankedList:
    """Top-``k`` documents by BM25, ties broken by doc_id ascending.

    ``query`` is a Query or raw text. Documents sharing no term with the
    query are never returned.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    text = query if isinstance(query, str) else query.text
    qid = "" if isinstance(query, str) else query.query_id
    scores = score_all(index, text, params, backend)
    cand = np.flatnonzero(scores > 0.0)
    if len(cand) > k:
        # keep everything tied with the k-th score so the doc_id tie-break is exact
        kth = np.partition(scores[cand], len(cand) - k)[len(cand) - k]
        cand = cand[scores[cand] >= kth - _tie_tol(kth)]
    ranked = sorted(((index.doc_ids[d], float(scores[d])) for d in cand), key=lambda e: -e[1])
    return RankedList(qid, tuple(_break_ties(ranked)[:k]), k)


def _tie_tol(score: float) -> float:
    return TIE_RTOL * max(1.0, abs(score))


def _break_ties(ranked: List[Tuple[str, float]]) -> List[Tuple[str, float]]:
    """Order runs of near-equal scores by doc_id.

    Mathematically equal scores can differ in the last bits depending on the
    order the terms were summed; such scores count as tied.
    """
    out: List[Tuple[str, float]] = []
    group: List[Tuple[str, float]] = []
    for entry in ranked:
        if group and group[-1][1] - entry[1] > _tie_tol(group[-1][1]):
            out.extend(_tied_group(group))
            group = []
        group.append(entry)
    out.extend(_tied_group(group))
    return out


def _tied_group(group):
    # the group's leading score stands for all of them so the list stays non-increasing
    if len(group) < 2:
        return group
    top = group[0][1]
    return [(d, top) for d, _ in sorted(group)]
