"""Small synthetic benchmark for smoke tests, demos and the oracle checks.

Query ``i`` asks about a topic token ``topic{i}`` and a cue token ``cue{i}``.
Its one relevant passage holds both tokens and the answer; ``n_distractors``
further passages hold only the cue, so BM25 ranks the relevant passage first
and fills the rest of the top-k with distractors.
"""
from __future__ import annotations

import csv
import json
import random
from pathlib import Path

from .corpus import Author, Benchmark, Document, Query, save_benchmark
from .gateway import OracleGateway
from .synthetic import WORKSHEET_FIELDS, build_synthetic_collection

_FILLER = ("river", "mountain", "history", "city", "season", "record", "album", "league", "province",
           "election", "festival", "museum", "bridge", "novel", "island", "harbor", "railway", "castle")


def make_toy_benchmark(n_queries: int = 20, n_distractors: int = 12, seed: int = 0,
                       with_synthetic: bool = True) -> Benchmark:
    rng = random.Random(seed)
    queries, docs, qrels = [], {}, {}
    for i in range(n_queries):
        qid = f"q{i}"
        answer = f"Answer{i} {rng.choice(_FILLER).title()}"
        queries.append(Query(qid, f"what about topic{i} and cue{i}", (answer,)))
        filler = " ".join(rng.choice(_FILLER) for _ in range(8))
        docs[f"d{i}r"] = Document(f"d{i}r", f"topic{i} cue{i} is {answer}. {filler}.")
        qrels[(qid, f"d{i}r")] = 1
        for j in range(n_distractors):
            filler = " ".join(rng.choice(_FILLER) for _ in range(6 + j % 5))
            did = f"d{i}n{j}"
            docs[did] = Document(did, f"cue{i} {filler}.")
            qrels[(qid, did)] = 0
    bench = Benchmark(queries, docs, qrels)
    if with_synthetic:
        synth, _ = build_synthetic_collection(bench, OracleGateway())
        bench = Benchmark(queries, {**docs, **synth}, qrels)
    return bench


def write_toy_benchmark(directory, **kwargs):
    return save_benchmark(make_toy_benchmark(**kwargs), directory)


def write_all_pass_verdicts(bench: Benchmark, path) -> Path:
    """Verdict sheet passing every (query, passage) pair of ``bench``.

    Only meaningful for the identity-paraphrase toy corpus, where relevance
    is preserved by construction.
    """
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=WORKSHEET_FIELDS, extrasaction="ignore")
        w.writeheader()
        for (qid, did) in bench.qrels:
            if bench.collection[did].actual_author is Author.HUMAN:
                w.writerow({"item_id": f"{qid}|{did}", "verdict": "pass"})
    return path


def write_demo_workspace(directory, n_queries: int = 40, seed: int = 0, bias_strength: float = 0.5) -> Path:
    """Toy benchmark, all-pass verdicts and a ready-to-run oracle config."""
    d = Path(directory)
    bench = make_toy_benchmark(n_queries=n_queries, seed=seed)
    save_benchmark(bench, d / "bench")
    write_all_pass_verdicts(bench, d / "verdicts.csv")
    cfg = {
        "benchmark": {"queries": "bench/queries.jsonl", "collection": "bench/collection.jsonl",
                      "qrels": "bench/qrels.txt"},
        "output_dir": "run",
        "seed": seed,
        "audit": {"verdicts": "verdicts.csv"},
        "gateway": {"kind": "oracle", "oracle": {"bias_strength": bias_strength}},
    }
    path = d / "config.yaml"
    # JSON is valid YAML
    path.write_text(json.dumps(cfg, indent=2) + "\n", encoding="utf-8")
    return path
