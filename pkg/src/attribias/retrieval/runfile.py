"""TREC run files: ``query_id Q0 doc_id rank score tag``."""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, Iterable

from .ranked import RankedList

logger = logging.getLogger(__name__)


class RunFileError(ValueError):
    pass


def load_run_file(path, k: int = 10) -> Dict[str, RankedList]:
    """Read a run file into per-query ranked lists cut at ``k``.

    Rows are ordered by rank; if that disagrees with score order the list
    is re-sorted by score and a warning is logged.
    """
    path = Path(path)
    rows: Dict[str, list] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 6:
                raise RunFileError(f"{path}:{lineno}: expected 6 columns, got {len(parts)}")
            qid, _, did, rank, score, _tag = parts
            try:
                rows.setdefault(qid, []).append((int(rank), did, float(score)))
            except ValueError:
                raise RunFileError(f"{path}:{lineno}: bad rank or score") from None
    out = {}
    for qid, rs in rows.items():
        rs.sort(key=lambda r: (r[0], r[1]))
        seen, entries = set(), []
        for _, did, score in rs:
            if did in seen:
                raise RunFileError(f"{path}: duplicate doc {did!r} for query {qid!r}")
            seen.add(did)
            entries.append((did, score))
        by_score = sorted(entries, key=lambda e: (-e[1], e[0]))
        if by_score != entries:
            logger.warning("run file %s: query %s rank order disagrees with scores; using score order",
                           path, qid)
        out[qid] = RankedList(qid, tuple(by_score[:k]), k)
    return out


def write_run_file(lists: Iterable[RankedList], path, tag: str = "attribias") -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rl in lists:
            for rank, (did, score) in enumerate(rl.entries, 1):
                f.write(f"{rl.query_id} Q0 {did} {rank} {score!r} {tag}\n")
