import csv

import pytest

from attribias.corpus import Author, Benchmark, Document, Query
from attribias.gateway import OracleGateway
from attribias.synthetic import (AuditError, ExpectedStatus, SynthesisError, Verdict, build_synthetic_collection,
                                 length_ratio, make_audit_sample, record_audit, write_audit_worksheet)


def corpus(n_docs=10, n_queries=0):
    docs = {f"d{i}": Document(f"d{i}", f"passage number {i}") for i in range(n_docs)}
    queries = [Query(f"q{i}", f"question {i}", (f"ans{i}",)) for i in range(n_queries)]
    qrels = {}
    for i in range(n_queries):
        qrels[(f"q{i}", f"d{i % n_docs}")] = 1
        qrels[(f"q{i}", f"d{(i + 1) % n_docs}")] = 0
    return Benchmark(queries, docs, qrels)


def test_identity_paraphrase():
    bench = corpus()
    synth, skipped = build_synthetic_collection(bench, OracleGateway())
    assert len(synth) == 10 and not skipped
    for d in synth.values():
        assert d.actual_author is Author.LLM
        assert d.text == bench.collection[d.paraphrase_of].text
        assert d.doc_id == d.paraphrase_of + "::synthetic"
    assert length_ratio(bench, synth) == 1.0


def test_rejects_synthetic_source():
    bench = Benchmark([], {"a": Document("a", "x"), "a::synthetic": Document("a::synthetic", "y", Author.LLM, "a")})
    with pytest.raises(ValueError, match="already LLM-written"):
        build_synthetic_collection(bench, OracleGateway())


def test_failures_skipped_then_abort():
    bench = corpus(200)
    flaky = OracleGateway(paraphraser=lambda s: "" if s.endswith(" 7") else s)
    synth, skipped = build_synthetic_collection(bench, flaky)
    # bijection with the skip report
    assert list(skipped) == ["d7"] and len(synth) == 200 - 1
    bad = OracleGateway(paraphraser=lambda s: "" if s[-1] in "78" else s)
    with pytest.raises(SynthesisError, match="limit 1%"):
        build_synthetic_collection(bench, bad)


def test_audit_sample_sizes():
    bench = corpus(600, 500)
    synth, _ = build_synthetic_collection(bench, OracleGateway())
    items = make_audit_sample(bench, synth, 0.1, seed=3)
    rel = [i for i in items if i.expected_status is ExpectedStatus.STILL_RELEVANT]
    non = [i for i in items if i.expected_status is ExpectedStatus.STILL_NONRELEVANT]
    assert len(rel) == 500
    assert len({i.query_id for i in non}) == 50
    assert make_audit_sample(bench, synth, 0.1, seed=3) == items
    assert make_audit_sample(bench, synth, 0.1, seed=4) != items
    full = make_audit_sample(bench, synth, 1.0, seed=3)
    assert len({i.query_id for i in full if i.expected_status is ExpectedStatus.STILL_NONRELEVANT}) == 500


def test_audit_sample_from_contexts():
    bench = corpus(10, 4)
    synth, _ = build_synthetic_collection(bench, OracleGateway())
    ctxs = {f"q{i}": [f"d{j}" for j in range(5)] for i in range(4)}
    items = make_audit_sample(bench, synth, 1.0, 0, contexts=ctxs, query_ids=["q0", "q1"])
    non = [(i.query_id, i.original_doc_id) for i in items if i.expected_status is ExpectedStatus.STILL_NONRELEVANT]
    assert sorted(non) == sorted([("q0", f"d{j}") for j in range(1, 5)] + [("q1", f"d{j}") for j in (0, 2, 3, 4)])


def fill_worksheet(items, bench, synth, path, fail=()):
    write_audit_worksheet(items, bench, synth, path)
    rows = list(csv.DictReader(open(path, newline="")))
    for r in rows:
        r["verdict"] = "fail" if r["item_id"] in fail else "pass"
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    return rows


def test_audit_all_pass(tmp_path):
    bench = corpus(60, 50)
    synth, _ = build_synthetic_collection(bench, OracleGateway())
    items = make_audit_sample(bench, synth, 0.1)
    rows = fill_worksheet(items, bench, synth, tmp_path / "w.csv")
    assert list(rows[0]) == ["item_id", "query_text", "original_text", "synthetic_text", "gold_answer",
                             "expected_status", "verdict"]
    summary, judged = record_audit(items, tmp_path / "w.csv")
    assert summary.pass_rate == 1.0 and summary.gate_open
    assert all(j.verdict is Verdict.PASS for j in judged)


def test_audit_one_fail_in_fifty(tmp_path):
    bench = corpus(60, 50)
    synth, _ = build_synthetic_collection(bench, OracleGateway())
    items = [i for i in make_audit_sample(bench, synth, 0.1) if i.expected_status is ExpectedStatus.STILL_RELEVANT]
    assert len(items) == 50
    fill_worksheet(items, bench, synth, tmp_path / "w.csv", fail={items[7].item_id})
    summary, _ = record_audit(items, tmp_path / "w.csv")
    assert summary.pass_rate == pytest.approx(0.98)
    assert not summary.gate_open
    assert record_audit(items, tmp_path / "w.csv", threshold=0.95)[0].gate_open


def test_audit_missing_and_empty(tmp_path):
    bench = corpus(10, 5)
    synth, _ = build_synthetic_collection(bench, OracleGateway())
    items = make_audit_sample(bench, synth, 1.0)
    write_audit_worksheet(items, bench, synth, tmp_path / "w.csv")
    with pytest.raises(AuditError, match=r"missing verdicts for \d+ items: q"):
        record_audit(items, tmp_path / "w.csv")
    with pytest.raises(AuditError, match="empty"):
        record_audit([], tmp_path / "w.csv")
