"""Ranked document lists and relevant-document placement."""
from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Iterable, Tuple


@dataclass(frozen=True)
class RankedList:
    query_id: str
    entries: Tuple[Tuple[str, float], ...]
    k: int

    def __post_init__(self):
        if len(self.entries) > self.k:
            raise ValueError(f"{len(self.entries)} entries exceed k={self.k}")
        ids = [d for d, _ in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate doc_id in ranked list for {self.query_id!r}")
        for (d1, s1), (d2, s2) in zip(self.entries, self.entries[1:]):
            if s1 < s2 or (s1 == s2 and d1 > d2):
                raise ValueError(f"ranked list for {self.query_id!r} is not in (score desc, doc_id asc) order")

    @property
    def doc_ids(self) -> list:
        return [d for d, _ in self.entries]

    @classmethod
    def from_unsorted(cls, query_id: str, entries: Iterable[Tuple[str, float]], k: int) -> "RankedList":
        ordered = sorted(entries, key=lambda e: (-e[1], e[0]))
        return cls(query_id, tuple(ordered[:k]), k)


def place_relevant_random(ranked: RankedList, relevant_doc: str, k: int, seed: int) -> RankedList:
    """Top-``k`` list with ``relevant_doc`` at a seeded uniform position.

    The other ``k - 1`` slots take the leading entries of ``ranked`` other
    than ``relevant_doc``, in their original order. Scores are synthetic
    (k, k-1, ..., 1) so the result still satisfies the RankedList ordering.
    """
    others = [d for d in ranked.doc_ids if d != relevant_doc]
    if len(others) < k - 1:
        raise ValueError(
            f"query {ranked.query_id!r}: need {k - 1} non-relevant candidates, have {len(others)}")
    pos = random.Random(seed).randrange(k)
    docs = others[: k - 1]
    docs.insert(pos, relevant_doc)
    return RankedList(ranked.query_id, tuple((d, float(k - i)) for i, d in enumerate(docs)), k)
