"""MetricReport serialisation: JSON, Markdown tables and CSV."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Dict, Iterable, Optional

from .metrics import MetricReport

DAGGER = "†"
CONDITION_COLUMNS = ["relevant_author", "nonrelevant_author", "mode", "precision", "recall", "em"]
_AUTHOR = {"human": "Human", "llm": "LLM"}
_MODE = {"vanilla": "Vanilla", "informed": "Informed", "cf_informed": "CF-informed",
         "mixed(informed/cf_informed)": "Informed/CF-informed",
         "mixed(cf_informed/informed)": "CF-informed/Informed"}


def report_json(report: MetricReport) -> str:
    return json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n"


def load_report(path) -> MetricReport:
    return MetricReport.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def _fmt(x: Optional[float], digits: int = 1, dagger: bool = False, signed: bool = False) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "-"
    s = f"{x:+.{digits}f}" if signed else f"{x:.{digits}f}"
    return s + (DAGGER if dagger else "")


def report_markdown(report: MetricReport) -> str:
    out = io.StringIO()
    out.write("## Attribution quality and correctness\n\n")
    out.write("| k | Labels | Relevant documents | Non-relevant documents | RAG mode "
              "| Precision | Recall | EM | AC (relevant) | AC (non-relevant) | Cited | Cited relevant |\n")
    out.write("|---|---|---|---|---|---|---|---|---|---|---|---|\n")
    for c in report.conditions:
        sig = c.significant
        out.write(f"| {c.k} | {c.label_scheme} | {_AUTHOR[c.relevant_author]} | {_AUTHOR[c.nonrelevant_author]} "
                  f"| {_MODE.get(c.mode, c.mode)} | {_fmt(c.precision, 1, sig.get('precision'))} "
                  f"| {_fmt(c.recall, 1, sig.get('recall'))} | {_fmt(c.em, 3, sig.get('em'))} "
                  f"| {_fmt(c.ac_relevant, 3)} | {_fmt(c.ac_nonrelevant, 3)} "
                  f"| {_fmt(c.mean_cited, 2)} | {_fmt(c.mean_cited_relevant, 2)} |\n")
    for metric, title in (("CAS", "Attribution sensitivity (CAS)"), ("CAB", "Attribution bias (CAB)"),
                          ("CAB-mixed", "Attribution bias, mixed mode (CAB)")):
        rows = [e for e in report.counterfactual if e.metric == metric]
        if not rows:
            continue
        out.write(f"\n## {title}\n\n")
        out.write("| k | Labels | Relevant documents | Non-relevant documents | omega | Precision | Recall | n |\n")
        out.write("|---|---|---|---|---|---|---|---|\n")
        signed = metric != "CAS"
        for e in rows:
            sig = e.significant
            omega = "" if e.omega is None else f"{e.omega:+d}"
            out.write(f"| {e.k} | {e.label_scheme} | {_AUTHOR[e.relevant_author]} "
                      f"| {_AUTHOR[e.nonrelevant_author]} | {omega} "
                      f"| {_fmt(e.precision, 1, sig['precision'], signed)} "
                      f"| {_fmt(e.recall, 1, sig['recall'], signed)} | {e.n_queries} |\n")
    out.write(f"\n{DAGGER} two-sided paired t-test, p < 0.05.\n")
    return out.getvalue()


def report_csv(report: MetricReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CONDITION_COLUMNS + ["significant", "label_scheme", "k", "n_queries", "ac_relevant",
                                    "ac_nonrelevant", "mean_cited", "mean_cited_relevant"])
    for c in report.conditions:
        sig = ";".join(m for m in ("precision", "recall", "em") if c.significant.get(m))
        w.writerow([c.relevant_author, c.nonrelevant_author, c.mode, repr(c.precision), repr(c.recall),
                    repr(c.em), sig, c.label_scheme, c.k, c.n_queries, c.ac_relevant, c.ac_nonrelevant,
                    repr(c.mean_cited), repr(c.mean_cited_relevant)])
    return out.getvalue()


def counterfactual_csv(report: MetricReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["metric", "relevant_author", "nonrelevant_author", "label_scheme", "k", "first", "second",
                "omega", "n_queries", "precision", "recall", "p_precision", "p_recall"])
    for e in report.counterfactual:
        w.writerow([e.metric, e.relevant_author, e.nonrelevant_author, e.label_scheme, e.k, e.first,
                    e.second, e.omega, e.n_queries, repr(e.precision), repr(e.recall),
                    repr(e.p_precision), repr(e.p_recall)])
    return out.getvalue()


def emit_report(report: MetricReport, directory, formats: Iterable[str] = ("json", "md", "csv"),
                stem: str = "report") -> Dict[str, Path]:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    written = {}
    for fmt in formats:
        if fmt == "json":
            written["json"] = d / f"{stem}.json"
            written["json"].write_text(report_json(report), encoding="utf-8")
        elif fmt == "md":
            written["md"] = d / f"{stem}.md"
            written["md"].write_text(report_markdown(report), encoding="utf-8")
        elif fmt == "csv":
            written["csv"] = d / f"{stem}.csv"
            written["csv"].write_text(report_csv(report), encoding="utf-8")
            written["counterfactual_csv"] = d / f"{stem}_counterfactual.csv"
            written["counterfactual_csv"].write_text(counterfactual_csv(report), encoding="utf-8")
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    return written
