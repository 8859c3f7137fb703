"""Command line entry point: ``attribias <subcommand> ...``.

Exit codes: 0 success, 2 config/input error, 3 audit gate closed,
4 generation stage failed.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import load_config
from .context import ConfigError
from .corpus import CorpusError, load_benchmark, write_collection
from .pipeline import (AuditGateError, GenerationStageError, audit_items, make_gateway, rescore, run_pipeline,
                       run_sweep, select_queries)
from .report import emit_report, load_report
from .retrieval import RunFileError, write_run_file
from .synthetic import AuditError, SynthesisError, build_synthetic_collection, record_audit, write_audit_worksheet

EXIT_OK, EXIT_CONFIG, EXIT_AUDIT, EXIT_GENERATION = 0, 2, 3, 4

log = logging.getLogger("attribias")


def _cfg(args):
    return load_config(args.config, args.set or [])


def cmd_ingest(args) -> int:
    cfg = _cfg(args)
    b = cfg["benchmark"]
    bench = load_benchmark(b["queries"], b["collection"], b["qrels"])
    n_syn = sum(1 for d in bench.collection.values() if d.paraphrase_of is not None)
    n_rel = sum(1 for g in bench.qrels.values() if g > 0)
    print(json.dumps({"queries": len(bench.queries), "documents": len(bench.collection),
                      "synthetic_documents": n_syn, "qrels": len(bench.qrels), "relevant_pairs": n_rel}))
    return EXIT_OK


def cmd_synth(args) -> int:
    cfg = _cfg(args)
    b = cfg["benchmark"]
    bench = load_benchmark(b["queries"], b["collection"], b["qrels"])
    originals = [d for d, doc in bench.collection.items() if doc.paraphrase_of is None
                 and bench.synthetic_of(d) is None]
    synth, skipped = build_synthetic_collection(bench, make_gateway(cfg), cfg["gateway"]["temperature"],
                                                sources=originals)
    out = Path(args.out)
    write_collection({**bench.collection, **synth}, out)
    (out.parent / (out.stem + ".skipped.json")).write_text(json.dumps(skipped, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(synth)} synthetic documents to {out} ({len(skipped)} skipped)")
    return EXIT_OK


def cmd_retrieve(args) -> int:
    cfg = _cfg(args)
    sel = select_queries(cfg)
    out = Path(args.out)
    write_run_file(sel.ranked.values(), out)
    print(f"wrote {len(sel.ranked)} ranked lists to {out}; {len(sel.query_ids)} queries selected")
    return EXIT_OK


def cmd_audit(args) -> int:
    cfg = _cfg(args)
    sel = select_queries(cfg)
    items, synth = audit_items(cfg, sel)
    if args.verdicts:
        try:
            summary, _ = record_audit(items, args.verdicts, cfg["audit"]["threshold"])
        except AuditError as e:
            print(f"audit: {e}", file=sys.stderr)
            return EXIT_AUDIT
        print(json.dumps(vars(summary), sort_keys=True))
        return EXIT_OK if summary.gate_open else EXIT_AUDIT
    out = Path(args.out or Path(cfg["output_dir"]) / "audit_worksheet.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    write_audit_worksheet(items, sel.bench, synth, out)
    print(f"wrote {len(items)} audit items to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    report = run_pipeline(_cfg(args))
    print(f"{len(report.conditions)} conditions, {len(report.counterfactual)} counterfactual metrics")
    return EXIT_OK


def cmd_report(args) -> int:
    formats = args.formats.split(",")
    if args.from_json:
        emit_report(load_report(args.from_json), args.run_dir, formats)
    else:
        rescore(args.run_dir, formats)
    print(f"report written to {args.run_dir}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _cfg(args)
    ks = [int(k) for k in args.ks.split(",")] if args.ks else None
    reports = run_sweep(cfg, ks)
    print(f"sweep finished for k in {sorted(reports)}")
    return EXIT_OK


def cmd_demo(args) -> int:
    from .demo import write_demo_workspace

    path = write_demo_workspace(args.directory, args.queries, args.seed, args.bias)
    print(f"wrote toy benchmark and {path}; try: attribias run {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="attribias", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(name, fn, help):
        sp = sub.add_parser(name, help=help)
        sp.add_argument("config", help="YAML or JSON run configuration")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a config field, e.g. --set k=5 (repeatable)")
        sp.set_defaults(fn=fn)
        return sp

    with_config("ingest", cmd_ingest, "validate the benchmark files and print counts")
    with_config("synth", cmd_synth, "paraphrase the collection into LLM-written counterparts") \
        .add_argument("--out", required=True, help="collection JSONL to write (originals + synthetic)")
    with_config("retrieve", cmd_retrieve, "retrieve and write a TREC run file") \
        .add_argument("--out", required=True)
    sp = with_config("audit", cmd_audit, "write the audit worksheet, or summarise filled verdicts")
    sp.add_argument("--out")
    sp.add_argument("--verdicts")
    with_config("run", cmd_run, "run the full pipeline")
    sp = sub.add_parser("report", help="re-score a run directory and re-emit its report")
    sp.add_argument("run_dir")
    sp.add_argument("--formats", default="json,md,csv")
    sp.add_argument("--from-json", help="re-emit from a saved report.json instead of re-scoring")
    sp.set_defaults(fn=cmd_report)
    with_config("sweep", cmd_sweep, "cutoff sweep with random relevant placement") \
        .add_argument("--ks", help="comma-separated cutoffs (default from config: 2,5,8,10)")
    sp = sub.add_parser("demo", help="write a toy benchmark, audit verdicts and an oracle config")
    sp.add_argument("directory")
    sp.add_argument("--queries", type=int, default=40)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--bias", type=float, default=0.5, help="oracle bias strength in [-1, 1]")
    sp.set_defaults(fn=cmd_demo)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, CorpusError, RunFileError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except AuditGateError as e:
        print(f"audit gate: {e}", file=sys.stderr)
        return EXIT_AUDIT
    except (GenerationStageError, SynthesisError) as e:
        print(f"generation failed: {e}", file=sys.stderr)
        return EXIT_GENERATION


if __name__ == "__main__":
    sys.exit(main())
