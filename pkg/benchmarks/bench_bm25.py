"""Time the compiled and pure-Python BM25 accumulation kernels.

    python benchmarks/bench_bm25.py --docs 20000 --queries 200

Both backends score the same queries against the same index; the script
checks their outputs are bit-identical before reporting timings.
"""
from __future__ import annotations

import argparse
import random
import statistics
import time

import numpy as np

from attribias.retrieval import Bm25Params, build_index
from attribias.retrieval.bm25 import score_all
from attribias.retrieval.kernel import BACKENDS


def make_corpus(n_docs: int, vocab: int, seed: int) -> dict:
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(vocab)]
    # Zipf-like term frequencies so some postings lists are long
    weights = [1.0 / (i + 1) for i in range(vocab)]
    return {f"d{i}": " ".join(rng.choices(words, weights, k=rng.randint(20, 120))) for i in range(n_docs)}


def time_backend(index, queries, fn, params, repeat):
    runs = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for q in queries:
            score_all(index, q, params, fn)
        runs.append(time.perf_counter() - t0)
    return min(runs), statistics.median(runs)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--docs", type=int, default=20000)
    ap.add_argument("--vocab", type=int, default=5000)
    ap.add_argument("--queries", type=int, default=200)
    ap.add_argument("--terms", type=int, default=6, help="terms per query")
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    t0 = time.perf_counter()
    index = build_index(make_corpus(args.docs, args.vocab, args.seed))
    print(f"index: {index.n_docs} docs, {len(index.vocab)} terms, {len(index.post_docs)} postings "
          f"({time.perf_counter() - t0:.2f} s)")

    rng = random.Random(args.seed + 1)
    vocab = list(index.vocab)
    queries = [" ".join(rng.choices(vocab, k=args.terms)) for _ in range(args.queries)]
    params = Bm25Params()

    if len(BACKENDS) > 1:
        for q in queries[:20]:
            ref = score_all(index, q, params, BACKENDS["python"])
            for name, fn in BACKENDS.items():
                if not np.array_equal(ref, score_all(index, q, params, fn)):
                    raise SystemExit(f"backend {name} disagrees with the Python kernel on {q!r}")

    results = {}
    for name, fn in sorted(BACKENDS.items()):
        best, median = time_backend(index, queries, fn, params, args.repeat)
        results[name] = best
        print(f"{name:7s} {1000 * best / len(queries):8.3f} ms/query best, "
              f"{1000 * median / len(queries):8.3f} median")
    if "cython" in results:
        print(f"speedup: {results['python'] / results['cython']:.1f}x")
    else:
        print("compiled extension not built; only the Python kernel was timed")


if __name__ == "__main__":
    main()
