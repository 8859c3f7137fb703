"""Authorship labelling of retrieved contexts and prompt rendering."""
from __future__ import annotations

import csv
import enum
import functools
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, Tuple

from .corpus import Author, Benchmark, CorpusError, Query
from .retrieval import RankedList
from .seeding import derive_seed

HUMAN_TOKEN = "[Human]"
LLM_TOKEN = "[LLM]"
AI_TOKEN = "[AI]"
NAME_POOL_SIZE = 100


class ConfigError(ValueError):
    """Inconsistent run or condition configuration."""


class LabelKind(str, enum.Enum):
    HUMAN = "human"
    LLM = "llm"
    AI = "ai"
    NAMED = "named"

    @property
    def human_kind(self) -> bool:
        return self in _HUMAN_KINDS


_HUMAN_KINDS = frozenset((LabelKind.HUMAN, LabelKind.NAMED))


@dataclass(frozen=True)
class AuthorLabel:
    kind: LabelKind
    display: str

    def __post_init__(self):
        fixed = {LabelKind.HUMAN: HUMAN_TOKEN, LabelKind.LLM: LLM_TOKEN, LabelKind.AI: AI_TOKEN}
        if self.kind is LabelKind.NAMED:
            if not self.display.strip():
                raise ValueError("named author label needs a display name")
        elif self.display != fixed[self.kind]:
            raise ValueError(f"{self.kind.value} label must display {fixed[self.kind]!r}")

    @property
    def author(self) -> Author:
        return Author.HUMAN if self.kind.human_kind else Author.LLM

    def to_json(self) -> dict:
        return {"kind": self.kind._value_, "display": self.display}

    @classmethod
    def from_json(cls, obj: dict) -> "AuthorLabel":
        return _label_from_json(obj["kind"], obj["display"])


HUMAN_LABEL = AuthorLabel(LabelKind.HUMAN, HUMAN_TOKEN)
LLM_LABEL = AuthorLabel(LabelKind.LLM, LLM_TOKEN)
AI_LABEL = AuthorLabel(LabelKind.AI, AI_TOKEN)


@functools.lru_cache(maxsize=4096)
def _label_from_json(kind: str, display: str) -> AuthorLabel:
    return AuthorLabel(LabelKind(kind), display)


class Mode(str, enum.Enum):
    VANILLA = "vanilla"
    INFORMED = "informed"
    CF_INFORMED = "cf_informed"
    MIXED = "mixed"


class LabelScheme(str, enum.Enum):
    TOKENS = "tokens"
    NAMES = "names"


@dataclass(frozen=True)
class RagCondition:
    mode: Mode
    mixed_relevant_mode: Optional[Mode] = None
    mixed_nonrelevant_mode: Optional[Mode] = None
    label_scheme: LabelScheme = LabelScheme.TOKENS

    def __post_init__(self):
        sub = (self.mixed_relevant_mode, self.mixed_nonrelevant_mode)
        if self.mode is Mode.MIXED:
            if None in sub:
                raise ConfigError("mixed mode needs both mixed_relevant_mode and mixed_nonrelevant_mode")
            if any(m not in (Mode.INFORMED, Mode.CF_INFORMED) for m in sub):
                raise ConfigError("mixed sub-modes must be informed or cf_informed")
        elif sub != (None, None):
            raise ConfigError("mixed sub-modes are only allowed with mode=mixed")

    @property
    def name(self) -> str:
        if self.mode is Mode.MIXED:
            return f"mixed({self.mixed_relevant_mode.value}/{self.mixed_nonrelevant_mode.value})"
        return self.mode.value

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "mixed_relevant_mode": self.mixed_relevant_mode and self.mixed_relevant_mode.value,
            "mixed_nonrelevant_mode": self.mixed_nonrelevant_mode and self.mixed_nonrelevant_mode.value,
            "label_scheme": self.label_scheme.value,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RagCondition":
        def m(v):
            return None if v is None else Mode(v)
        return cls(Mode(obj["mode"]), m(obj.get("mixed_relevant_mode")),
                   m(obj.get("mixed_nonrelevant_mode")),
                   LabelScheme(obj.get("label_scheme", "tokens")))


@dataclass(frozen=True)
class ContextDoc:
    index: int
    doc_id: str
    text: str
    actual_author: Author
    label: Optional[AuthorLabel] = None

    def to_json(self) -> dict:
        return {"index": self.index, "doc_id": self.doc_id, "text": self.text,
                "actual_author": self.actual_author.value,
                "label": self.label.to_json() if self.label else None}

    @classmethod
    def from_json(cls, obj: dict) -> "ContextDoc":
        lab = obj.get("label")
        return cls(obj["index"], obj["doc_id"], obj["text"], Author(obj["actual_author"]),
                   AuthorLabel.from_json(lab) if lab else None)


@dataclass(frozen=True)
class ContextAssembly:
    query_id: str
    docs: Tuple[ContextDoc, ...]
    relevant_set: FrozenSet[int]
    nonrelevant_set: FrozenSet[int]

    def __post_init__(self):
        idx = [d.index for d in self.docs]
        if idx != list(range(len(idx))):
            raise ValueError("context indices must be contiguous from 0")
        if self.relevant_set & self.nonrelevant_set:
            raise ValueError("relevant and non-relevant index sets overlap")
        if self.relevant_set | self.nonrelevant_set != set(idx):
            raise ValueError("relevant and non-relevant sets must cover every index")

    @property
    def k(self) -> int:
        return len(self.docs)

    def to_json(self, with_text: bool = True) -> dict:
        """Column-per-field record; position in each list is the context index."""
        # _value_ skips the enum descriptor; this runs once per persisted context
        out = {"query_id": self.query_id, "doc_ids": [d.doc_id for d in self.docs],
               "actual_authors": [d.actual_author._value_ for d in self.docs],
               "labels": [[d.label.kind._value_, d.label.display] if d.label else None for d in self.docs],
               "relevant_set": sorted(self.relevant_set), "nonrelevant_set": sorted(self.nonrelevant_set)}
        if with_text:
            out["texts"] = [d.text for d in self.docs]
        return out

    @classmethod
    def from_json(cls, obj: dict, texts: Optional[Mapping[str, str]] = None) -> "ContextAssembly":
        """``texts`` (doc_id -> text) fills in records persisted without text."""
        ids = obj["doc_ids"]
        body = obj["texts"] if "texts" in obj or texts is None else [texts[d] for d in ids]
        docs = tuple(ContextDoc(i, d, t, Author(a), _label_from_json(*lab) if lab else None)
                     for i, (d, t, a, lab) in enumerate(zip(ids, body, obj["actual_authors"], obj["labels"])))
        return cls(obj["query_id"], docs, frozenset(obj["relevant_set"]), frozenset(obj["nonrelevant_set"]))


@dataclass(frozen=True)
class NamePool:
    names: Tuple[Tuple[str, str], ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("name pool contains duplicate pairs")
        if not self.names:
            raise ValueError("empty name pool")

    @property
    def size(self) -> int:
        return len(self.names)


def assemble_context(
    bench: Benchmark,
    ranked: RankedList,
    relevant_author: Author = Author.HUMAN,
    nonrelevant_author: Author = Author.HUMAN,
) -> ContextAssembly:
    """Materialise a ranked list as a context, swapping in the LLM-written
    counterpart of each document whose side is configured as ``llm``."""
    docs, rel, nonrel = [], set(), set()
    for i, doc_id in enumerate(ranked.doc_ids):
        is_rel = bench.is_relevant(ranked.query_id, doc_id)
        want = relevant_author if is_rel else nonrelevant_author
        doc = bench.collection[doc_id]
        if doc.actual_author is not want:
            if want is Author.LLM:
                doc = bench.synthetic_of(doc_id)
                if doc is None:
                    raise CorpusError(f"no synthetic counterpart for {doc_id!r}")
            elif doc.paraphrase_of is not None:
                doc = bench.collection[doc.paraphrase_of]
            else:
                raise CorpusError(f"no human-written version of {doc_id!r}")
        docs.append(ContextDoc(i, doc.doc_id, doc.text, doc.actual_author))
        (rel if is_rel else nonrel).add(i)
    return ContextAssembly(ranked.query_id, tuple(docs), frozenset(rel), frozenset(nonrel))


def _label_for(author: Author, scheme: LabelScheme, name: Optional[str]) -> AuthorLabel:
    if scheme is LabelScheme.TOKENS:
        return HUMAN_LABEL if author is Author.HUMAN else LLM_LABEL
    if author is Author.HUMAN:
        return AuthorLabel(LabelKind.NAMED, name)
    return AI_LABEL


def assign_labels(
    ctx: ContextAssembly,
    cond: RagCondition,
    pool: Optional[NamePool] = None,
    seed: int = 0,
) -> ContextAssembly:
    """Return ``ctx`` with per-document labels for ``cond``.

    Under the names scheme one name is drawn per position from a stream
    seeded by (seed, query_id), whether or not it is used, so a given
    position gets the same name in every condition.
    """
    if cond.mode is Mode.VANILLA:
        return ContextAssembly(ctx.query_id, tuple(ContextDoc(d.index, d.doc_id, d.text, d.actual_author)
                                                   for d in ctx.docs), ctx.relevant_set, ctx.nonrelevant_set)
    names: List[Optional[str]] = [None] * ctx.k
    if cond.label_scheme is LabelScheme.NAMES:
        if pool is None:
            raise ConfigError("names label scheme needs a name pool")
        rng = random.Random(derive_seed(seed, "names", ctx.query_id))
        names = [" ".join(rng.choice(pool.names)) for _ in ctx.docs]
    if cond.mode is Mode.MIXED:
        modes = {True: cond.mixed_relevant_mode, False: cond.mixed_nonrelevant_mode}
    else:
        modes = {True: cond.mode, False: cond.mode}
    rel, scheme = ctx.relevant_set, cond.label_scheme
    out = []
    for d in ctx.docs:
        author = d.actual_author if modes[d.index in rel] is Mode.INFORMED else d.actual_author.flipped()
        out.append(ContextDoc(d.index, d.doc_id, d.text, d.actual_author,
                              _label_for(author, scheme, names[d.index])))
    return ContextAssembly(ctx.query_id, tuple(out), ctx.relevant_set, ctx.nonrelevant_set)


_PLACEHOLDER_RE = re.compile(r"\{(documents|question|author|index|text|passage)\}")


class _KeepMissing(dict):
    def __missing__(self, name):
        return "{" + name + "}"


@functools.lru_cache(maxsize=64)
def _format_string(template: str) -> str:
    # escape literal braces so only the known placeholders are substituted
    parts = _PLACEHOLDER_RE.split(template)
    for i in range(0, len(parts), 2):
        parts[i] = parts[i].replace("{", "{{").replace("}", "}}")
    for i in range(1, len(parts), 2):
        parts[i] = "{" + parts[i] + "}"
    return "".join(parts)


def fill(template: str, **values) -> str:
    """Single-pass placeholder substitution; braces inside values are kept."""
    return _format_string(template).format_map(_KeepMissing(values))


def load_template(name: str, directory: Optional[Path] = None) -> str:
    if directory is not None:
        text = (Path(directory) / f"{name}.txt").read_text(encoding="utf-8")
    else:
        text = resources.files("attribias").joinpath(f"templates/{name}.txt").read_text(encoding="utf-8")
    return text.rstrip("\n")


_template_cache: Dict[Tuple[str, Optional[str]], str] = {}


def _template(name: str, directory) -> str:
    key = (name, None if directory is None else str(directory))
    if key not in _template_cache:
        _template_cache[key] = load_template(name, directory)
    return _template_cache[key]


def render_prompt(ctx: ContextAssembly, cond: RagCondition, query: Query, template_dir=None) -> str:
    """Render the answer-generation prompt for one labelled context."""
    vanilla = cond.mode is Mode.VANILLA
    if vanilla and any(d.label is not None for d in ctx.docs):
        raise ConfigError("vanilla context must not carry labels")
    if not vanilla and any(d.label is None for d in ctx.docs):
        raise ConfigError(f"{cond.name} context has unlabelled documents")
    prefix = "vanilla" if vanilla else "informed"
    line = _template(prefix + "_document", template_dir)
    lines = [fill(line, index=d.index, text=d.text, author=d.label.display if d.label else "")
             for d in ctx.docs]
    return fill(_template(prefix, template_dir), documents="\n".join(lines), question=query.text)


def load_name_pool(path) -> NamePool:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames[:2]] != ["first", "last"]:
            raise ValueError(f"{path}: name pool CSV must have header first,last")
        return NamePool(tuple((r["first"].strip(), r["last"].strip()) for r in reader))


def save_name_pool(pool: NamePool, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["first", "last"])
        w.writerows(pool.names)


_NAME_LINE_RE = re.compile(
    r"^\s*(?:\d+[.)]\s*)?[(\"']?\s*([A-Z][\w'\-]*)\s*[,\s]\s*([A-Z][\w'\-]*)\s*[)\"']?\s*,?\s*$")


def parse_name_pairs(text: str) -> List[Tuple[str, str]]:
    """Pull (first, last) pairs out of a line-per-name listing."""
    out = []
    for line in text.splitlines():
        m = _NAME_LINE_RE.match(line)
        if m:
            out.append((m.group(1), m.group(2)))
    return out


def generate_name_pool(gateway=None, seed: int = 0, run_dir=None, static_file=None,
                       size: int = NAME_POOL_SIZE) -> NamePool:
    """Obtain the author-name pool from a static CSV or by asking ``gateway``.

    A generated pool must hold ``size`` distinct pairs; one retry is made
    before giving up. The pool is written to ``run_dir/name_pool.csv``.
    """
    if static_file is not None:
        pool = load_name_pool(static_file)
    else:
        if gateway is None:
            raise ConfigError("need a gateway or a static name pool file")
        from .gateway import GenerationRequest

        prompt = load_template("name_pool")
        pool = None
        for attempt in range(2):
            req = GenerationRequest(prompt, temperature=1.0, max_tokens=2048, want_logprobs=False,
                                    tag=("__names__", f"seed={seed}:try={attempt}"), kind="names")
            pairs = parse_name_pairs(gateway.generate(req).text)
            if len(pairs) == len(set(pairs)) and len(pairs) >= size:
                pool = NamePool(tuple(pairs[:size]))
                break
        if pool is None:
            raise ValueError(f"gateway did not return {size} distinct (first, last) pairs")
    if run_dir is not None:
        save_name_pool(pool, Path(run_dir) / "name_pool.csv")
    return pool
