"""End-to-end run: ingest, retrieve, select, label, generate, score, report.

Every stage writes its output into the run directory. Scoring and
aggregation read only those files, so ``rescore(run_dir)`` reproduces the
report of a finished run exactly.
"""
from __future__ import annotations

import contextlib
import copy
import datetime as _dt
import gc
import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from . import __version__
from .context import (ConfigError, ContextAssembly, LabelScheme, Mode, NamePool, RagCondition,
                      assemble_context, assign_labels, generate_name_pool, render_prompt)
from .corpus import Author, Benchmark, CorpusError, filter_single_relevant, load_benchmark, sample_queries
from .gateway import (AuthenticationError, GenerationLog, GenerationRequest, HttpGateway, HttpSettings,
                      OracleGateway, OraclePolicy, RawGeneration, run_generations)
from .metrics import ConditionKey, ConditionRun, MetricReport, build_report
from .report import emit_report
from .retrieval import Bm25Params, RankedList, build_index, load_run_file, place_relevant_random, retrieve, write_run_file
from .scoring import MissingLogprobs, extract_citation_confidence, parse_citations, score_query
from .seeding import derive_seed
from .synthetic import AuditError, make_audit_sample, record_audit, write_audit_worksheet

logger = logging.getLogger(__name__)

CONTEXTS_FILE = "contexts.jsonl"
QUERIES_FILE = "selected_queries.jsonl"
GENERATIONS_FILE = "generations.jsonl"
FAILURES_FILE = "failures.jsonl"
SCORES_FILE = "scores.jsonl"
MANIFEST_FILE = "manifest.json"


class AuditGateError(RuntimeError):
    pass


class GenerationStageError(RuntimeError):
    pass


def _digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """Run provenance. Reopening a run directory resumes it, which is only
    allowed with the same configuration since logged generations are reused."""

    def __init__(self, run_dir: Path, cfg: dict):
        self.path = run_dir / MANIFEST_FILE
        self.data = {"config": cfg, "code_version": __version__, "created_at": _now(),
                     "input_digests": {}, "stages": {}}
        if self.path.exists():
            old = json.loads(self.path.read_text(encoding="utf-8"))
            if old.get("config") != json.loads(json.dumps(cfg)):
                raise ConfigError(f"{run_dir} holds a run with a different configuration; "
                                  "use a fresh output_dir")
            self.data["created_at"] = old.get("created_at", self.data["created_at"])
            self.data["resumed_at"] = _now()

    def stage(self, name: str) -> None:
        self.data["stages"][name] = _now()
        self.save()

    def save(self) -> None:
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


_AUTHORSHIPS = {"human/human": (Author.HUMAN, Author.HUMAN), "human/llm": (Author.HUMAN, Author.LLM),
                "llm/human": (Author.LLM, Author.HUMAN), "llm/llm": (Author.LLM, Author.LLM)}


def expand_conditions(cfg: dict) -> List[ConditionKey]:
    """The condition grid: modes x authorships, plus both mixed assignments
    for each all-human / all-LLM corpus listed under ``mixed``."""
    c = cfg["conditions"]
    scheme = LabelScheme(c["label_scheme"])
    k = cfg["k"]
    keys = []
    for auth in c["authorships"]:
        rel, non = _AUTHORSHIPS[auth]
        for mode in c["modes"]:
            keys.append(ConditionKey(rel, non, RagCondition(Mode(mode), label_scheme=scheme), k))
    for a in c["mixed"]:
        author = Author(a)
        for r, n in ((Mode.INFORMED, Mode.CF_INFORMED), (Mode.CF_INFORMED, Mode.INFORMED)):
            keys.append(ConditionKey(author, author, RagCondition(Mode.MIXED, r, n, scheme), k))
    ids = [key.id for key in keys]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate conditions in config")
    return keys


def needs_synthetic(keys: Sequence[ConditionKey]) -> bool:
    return any(Author.LLM in (k.relevant_author, k.nonrelevant_author) for k in keys)


def make_gateway(cfg: dict):
    g = cfg["gateway"]
    if g["kind"] == "oracle":
        opts = dict(g.get("oracle") or {})
        opts.setdefault("seed", derive_seed(cfg["seed"], "oracle"))
        return OracleGateway(OraclePolicy(**opts))
    return HttpGateway(HttpSettings(parallelism=g["parallelism"], **g["http"]))


# Parsed inputs keyed by content digest, so repeated runs in one process
# (sweeps, seed repetitions) skip re-parsing and re-indexing.
_CACHE: Dict[tuple, object] = {}


def _memo(key: tuple, build):
    val = _CACHE.get(key)
    if val is None:
        val = build()
        if len(_CACHE) >= 8:
            _CACHE.pop(next(iter(_CACHE)))
        _CACHE[key] = val
    return val


def _cached_benchmark(paths: dict, digests: dict) -> Benchmark:
    key = ("benchmark", digests["queries"], digests["collection"], digests["qrels"])
    return _memo(key, lambda: load_benchmark(paths["queries"], paths["collection"], paths["qrels"]))


def _cached_index(bench: Benchmark, digest: str):
    return _memo(("index", digest), lambda: build_index(bench.human_collection()))


@dataclass
class Selection:
    bench: Benchmark
    ranked: Dict[str, RankedList]
    query_ids: List[str]


def select_queries(cfg: dict, manifest: Optional[Manifest] = None) -> Selection:
    """Ingest, retrieve, filter to single-relevant contexts and sample."""
    b = cfg["benchmark"]
    digests = {name: _digest(b[name]) for name in ("queries", "collection", "qrels")}
    bench = _cached_benchmark(b, digests)
    if manifest is not None:
        manifest.data["input_digests"].update(digests)
        manifest.stage("ingest")

    k, r = cfg["k"], cfg["retrieval"]
    random_placement = cfg["placement"] == "random"
    depth = max(k, r["depth"]) if random_placement else k
    if r["method"] == "run_file":
        ranked = load_run_file(r["run_file"], depth)
        if manifest is not None:
            manifest.data["input_digests"]["run_file"] = _digest(r["run_file"])
        unknown = sorted({d for rl in ranked.values() for d in rl.doc_ids if d not in bench.collection})
        if unknown:
            raise CorpusError(f"run file references unknown documents: {', '.join(unknown[:10])}")
    else:
        params = Bm25Params(r["k1"], r["b"])
        index = _cached_index(bench, digests["collection"])
        ranked = _memo(("ranked", digests["queries"], digests["collection"], depth, params),
                       lambda: {q.query_id: retrieve(index, q, depth, params) for q in bench.queries})

    if random_placement:
        placed = {}
        for q in bench.queries:
            rel = bench.relevant_docs(q.query_id)
            if len(rel) != 1 or q.query_id not in ranked:
                continue
            try:
                placed[q.query_id] = place_relevant_random(
                    ranked[q.query_id], next(iter(rel)), k, derive_seed(cfg["seed"], "placement", q.query_id, k))
            except ValueError as e:
                logger.info("skipping %s: %s", q.query_id, e)
        ranked = placed
    if manifest is not None:
        write_run_file(ranked.values(), manifest.path.parent / "retrieval.trec")
        manifest.stage("retrieve")

    eligible = filter_single_relevant(bench, {q: rl.doc_ids for q, rl in ranked.items()})
    if manifest is not None:
        manifest.data["n_eligible"] = len(eligible)
        manifest.stage("filter")
    n = cfg["sample"]["n"]
    chosen = sample_queries(eligible, len(eligible) if n is None else n, derive_seed(cfg["seed"], "sample"))
    if manifest is not None:
        manifest.stage("sample")
    return Selection(bench, ranked, chosen)


def audit_items(cfg: dict, sel: Selection):
    synth = {d.doc_id: d for d in sel.bench.collection.values() if d.paraphrase_of is not None}
    contexts = {q: sel.ranked[q].doc_ids for q in sel.query_ids}
    return make_audit_sample(sel.bench, synth, cfg["audit"]["fraction"], derive_seed(cfg["seed"], "audit"),
                             contexts=contexts, query_ids=sel.query_ids), synth


def check_audit_gate(cfg: dict, sel: Selection, run_dir: Path):
    items, synth = audit_items(cfg, sel)
    write_audit_worksheet(items, sel.bench, synth, run_dir / "audit_worksheet.csv")
    verdicts = cfg["audit"]["verdicts"]
    if not verdicts:
        raise AuditGateError("synthetic documents are used but no audit verdicts are configured "
                             f"(worksheet written to {run_dir / 'audit_worksheet.csv'})")
    try:
        summary, _ = record_audit(items, verdicts, cfg["audit"]["threshold"])
    except AuditError as e:
        raise AuditGateError(str(e)) from None
    if not summary.gate_open:
        raise AuditGateError(f"audit pass rate {summary.pass_rate:.3f} below threshold {summary.threshold}")
    return summary


def _jsonl(path: Path, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def _read_jsonl(path: Path):
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            if line.strip():
                yield json.loads(line)


@contextlib.contextmanager
def _collector_paused():
    # A run allocates a few hundred thousand acyclic records; with the cyclic
    # collector on, its repeated full passes over them dominate small runs.
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


def run_pipeline(cfg: dict, gateway=None) -> MetricReport:
    """Execute a normalized config; returns the report also written to output_dir."""
    with _collector_paused():
        return _run_pipeline(cfg, gateway)


def _run_pipeline(cfg: dict, gateway=None) -> MetricReport:
    run_dir = Path(cfg["output_dir"])
    run_dir.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(run_dir, cfg)
    manifest.save()
    keys = expand_conditions(cfg)

    sel = select_queries(cfg, manifest)
    if needs_synthetic(keys):
        summary = check_audit_gate(cfg, sel, run_dir)
        manifest.data["audit"] = {"pass_rate": summary.pass_rate, "n_items": summary.n_items}
    manifest.stage("audit")

    gateway = gateway or make_gateway(cfg)
    pool: Optional[NamePool] = None
    if cfg["conditions"]["label_scheme"] == "names":
        pool = generate_name_pool(gateway, derive_seed(cfg["seed"], "name_pool"), run_dir,
                                  static_file=cfg["name_pool"])

    qmap = sel.bench.query_map
    _jsonl(run_dir / QUERIES_FILE,
           [dict(qmap[q].to_json(), context=sel.ranked[q].doc_ids) for q in sel.query_ids])
    label_seed = derive_seed(cfg["seed"], "labels")
    contexts: List[Tuple[ConditionKey, ContextAssembly]] = []
    assembled: Dict[tuple, ContextAssembly] = {}
    for key in keys:
        for qid in sel.query_ids:
            akey = (key.relevant_author, key.nonrelevant_author, qid)
            if akey not in assembled:
                assembled[akey] = assemble_context(sel.bench, sel.ranked[qid], key.relevant_author,
                                                   key.nonrelevant_author)
            contexts.append((key, assign_labels(assembled[akey], key.condition, pool, label_seed)))
    # passage text is left out; it is recoverable from the collection, whose digest the manifest holds
    key_json = {key: key.to_json() for key in keys}
    _jsonl(run_dir / CONTEXTS_FILE,
           [{"key": key_json[key], "context": ctx.to_json(with_text=False)} for key, ctx in contexts])
    manifest.stage("assemble")

    g = cfg["gateway"]
    requests = [
        GenerationRequest(render_prompt(ctx, key.condition, qmap[ctx.query_id], cfg["templates"]),
                          g["temperature"], g["max_tokens"], g["logprobs"], (ctx.query_id, key.id),
                          context=ctx, reference_answer=qmap[ctx.query_id].gold_answers[0])
        for key, ctx in contexts]
    log = GenerationLog(run_dir / GENERATIONS_FILE)
    try:
        results, failures = run_generations(gateway, requests, log, g["parallelism"])
    except AuthenticationError as e:
        manifest.data["failed_stage"] = "generate"
        manifest.save()
        raise GenerationStageError(str(e)) from e
    _jsonl(run_dir / FAILURES_FILE,
           [{"tag": list(t), "error": err} for t, err in sorted(failures.items())])
    if requests and not any(r.tag in results for r in requests):
        manifest.data["failed_stage"] = "generate"
        manifest.save()
        raise GenerationStageError("every generation request failed")
    manifest.data["n_generation_failures"] = len(failures)
    manifest.stage("generate")

    # scored from memory; ``rescore`` reproduces this from the persisted files
    gold = {q: qmap[q].gold_answers for q in sel.query_ids}
    runs = _score(((key, ctx.query_id, ctx.k, ctx.relevant_set) for key, ctx in contexts), results, gold, run_dir)
    report = build_report(runs)
    emit_report(report, run_dir)
    manifest.stage("report")
    return report


def _score(items, gens: Dict[tuple, RawGeneration], gold: Dict[str, Sequence[str]], run_dir: Path
           ) -> List[ConditionRun]:
    """Score (key, query_id, k, relevant positions) items against ``gens``."""
    runs: Dict[str, ConditionRun] = {}
    rows = []
    for key, qid, k, relevant in items:
        run = runs.get(key.id) or runs.setdefault(key.id, ConditionRun(key))
        gen = gens.get((qid, key.id))
        if gen is None:
            continue
        cits = parse_citations(gen.text, k)
        score = score_query(qid, key.id, gen.text, k, relevant, gold[qid], cits)
        run.scores[qid] = score
        row = score.to_json()
        if gen.tokens:
            try:
                conf = extract_citation_confidence(gen, cits, relevant)
            except MissingLogprobs:
                conf = None
            if conf is not None:
                run.confidences[qid] = conf
                row["confidence"] = conf.to_json()
        rows.append(row)
    _jsonl(run_dir / SCORES_FILE, rows)
    return list(runs.values())


def score_run_dir(run_dir) -> List[ConditionRun]:
    """Per-condition scores from the persisted contexts and generation log."""
    run_dir = Path(run_dir)
    gold = {q["query_id"]: q["gold_answers"] for q in _read_jsonl(run_dir / QUERIES_FILE)}
    keys: Dict[str, ConditionKey] = {}

    def items():
        for rec in _read_jsonl(run_dir / CONTEXTS_FILE):
            # scoring needs only the query, cutoff and relevant positions
            kjson = json.dumps(rec["key"], sort_keys=True)
            key = keys.get(kjson) or keys.setdefault(kjson, ConditionKey.from_json(rec["key"]))
            ctx = rec["context"]
            yield key, ctx["query_id"], len(ctx["doc_ids"]), frozenset(ctx["relevant_set"])

    return _score(items(), GenerationLog(run_dir / GENERATIONS_FILE).read(), gold, run_dir)


def rescore(run_dir, formats=("json", "md", "csv")) -> MetricReport:
    run_dir = Path(run_dir)
    report = build_report(score_run_dir(run_dir))
    emit_report(report, run_dir, formats)
    return report


def run_sweep(cfg: dict, ks: Optional[Sequence[int]] = None, gateway=None) -> Dict[int, MetricReport]:
    """One run per cutoff with the relevant document placed at random."""
    ks = list(ks or cfg["sweep"]["ks"])
    base = Path(cfg["output_dir"])
    reports = {}
    for k in ks:
        sub = copy.deepcopy(cfg)
        sub["k"] = k
        sub["placement"] = "random"
        sub["output_dir"] = str(base / f"k{k}")
        reports[k] = run_pipeline(sub, gateway)
    summary = {str(k): [vars(e) for e in r.counterfactual] for k, r in reports.items()}
    base.mkdir(parents=True, exist_ok=True)
    (base / "sweep.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return reports
