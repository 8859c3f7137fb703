"""Counterfactual aggregate metrics over per-query attribution scores.

CAS: mean absolute per-query change between informed and vanilla runs.
CAB: omega-signed mean per-query difference between two labelings of the
same documents (informed vs counterfactual, or the two mixed assignments).
AC: pooled mean generation probability of citations into a document subset.
"""
from __future__ import annotations

import enum
import functools
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

from .context import LabelKind, LabelScheme, Mode, RagCondition
from .corpus import Author
from .scoring import CitationConfidence, QueryScore

METRICS = ("precision", "recall")
ALPHA = 0.05


@dataclass(frozen=True)
class ConditionKey:
    """A RAG condition applied to one actual-authorship configuration at cutoff k."""

    relevant_author: Author
    nonrelevant_author: Author
    condition: RagCondition
    k: int

    @functools.cached_property
    def id(self) -> str:
        return (f"rel={self.relevant_author.value}|nonrel={self.nonrelevant_author.value}"
                f"|mode={self.condition.name}|labels={self.condition.label_scheme.value}|k={self.k}")

    @functools.cached_property
    def group(self) -> Tuple[str, str, str, int]:
        return (self.relevant_author.value, self.nonrelevant_author.value,
                self.condition.label_scheme.value, self.k)

    def to_json(self) -> dict:
        return {"relevant_author": self.relevant_author.value,
                "nonrelevant_author": self.nonrelevant_author.value,
                "condition": self.condition.to_json(), "k": self.k}

    @classmethod
    def from_json(cls, obj: dict) -> "ConditionKey":
        return cls(Author(obj["relevant_author"]), Author(obj["nonrelevant_author"]),
                   RagCondition.from_json(obj["condition"]), int(obj["k"]))


@dataclass
class ConditionRun:
    key: ConditionKey
    scores: Dict[str, QueryScore] = field(default_factory=dict)
    confidences: Dict[str, CitationConfidence] = field(default_factory=dict)

    def __post_init__(self):
        for s in self.scores.values():
            if s.condition != self.key.id:
                raise ValueError(f"score for {s.query_id} belongs to {s.condition!r}, not {self.key.id!r}")


class PairedMetric(NamedTuple):
    precision: float
    recall: float
    queries: Tuple[str, ...]


def _paired(a: ConditionRun, b: ConditionRun) -> Tuple[str, ...]:
    common = tuple(sorted(set(a.scores) & set(b.scores)))
    if not common:
        raise ValueError(f"no common queries between {a.key.id} and {b.key.id}")
    return common


def _same_documents(a: ConditionRun, b: ConditionRun) -> None:
    if a.key.group != b.key.group:
        raise ValueError(f"runs differ in authorship, label scheme or k: {a.key.id} vs {b.key.id}")


def _values(run: ConditionRun, qids, metric: str) -> List[float]:
    return [getattr(run.scores[q], metric) for q in qids]


def compute_cas(informed: ConditionRun, vanilla: ConditionRun) -> PairedMetric:
    _same_documents(informed, vanilla)
    qids = _paired(informed, vanilla)
    out = [math.fsum(abs(x - y) for x, y in zip(_values(informed, qids, m), _values(vanilla, qids, m)))
           / len(qids) for m in METRICS]
    return PairedMetric(out[0], out[1], qids)


@dataclass(frozen=True)
class OmegaContext:
    relevant_label: LabelKind
    nonrelevant_label: LabelKind


def compute_omega(ctx: OmegaContext) -> int:
    """+1 when the first term shows relevant docs as human and the rest as LLM."""
    if ctx.relevant_label.human_kind and not ctx.nonrelevant_label.human_kind:
        return 1
    return -1


def _kind(author: Author, scheme: LabelScheme) -> LabelKind:
    if scheme is LabelScheme.NAMES:
        return LabelKind.NAMED if author is Author.HUMAN else LabelKind.AI
    return LabelKind.HUMAN if author is Author.HUMAN else LabelKind.LLM


def omega_for(first: ConditionKey) -> int:
    """omega from the labels the first-term condition shows for R and N."""
    cond = first.condition
    if cond.mode is Mode.MIXED:
        rel_mode, non_mode = cond.mixed_relevant_mode, cond.mixed_nonrelevant_mode
    else:
        rel_mode = non_mode = cond.mode
    if Mode.VANILLA in (rel_mode, non_mode):
        raise ValueError("vanilla runs carry no labels; omega is undefined")

    def shown(author, mode):
        return author if mode is Mode.INFORMED else author.flipped()

    scheme = cond.label_scheme
    return compute_omega(OmegaContext(_kind(shown(first.relevant_author, rel_mode), scheme),
                                      _kind(shown(first.nonrelevant_author, non_mode), scheme)))


def _signed_mean_diff(a: ConditionRun, b: ConditionRun, omega: int) -> PairedMetric:
    if omega not in (1, -1):
        raise ValueError("omega must be +1 or -1")
    _same_documents(a, b)
    qids = _paired(a, b)
    out = [omega * math.fsum(x - y for x, y in zip(_values(a, qids, m), _values(b, qids, m))) / len(qids)
           for m in METRICS]
    return PairedMetric(out[0], out[1], qids)


def compute_cab(informed: ConditionRun, cf_informed: ConditionRun, omega: int) -> PairedMetric:
    return _signed_mean_diff(informed, cf_informed, omega)


def compute_mixed_cab(first: ConditionRun, second: ConditionRun, omega: int) -> PairedMetric:
    for run, (r, n) in ((first, (Mode.INFORMED, Mode.CF_INFORMED)), (second, (Mode.CF_INFORMED, Mode.INFORMED))):
        c = run.key.condition
        if c.mode is not Mode.MIXED or (c.mixed_relevant_mode, c.mixed_nonrelevant_mode) != (r, n):
            raise ValueError(f"expected mixed({r.value}/{n.value}), got {c.name}")
    return _signed_mean_diff(first, second, omega)


class Subset(str, enum.Enum):
    RELEVANT = "relevant"
    NONRELEVANT = "nonrelevant"


def compute_ac(run: ConditionRun, subset: Subset) -> Optional[float]:
    """Pooled mean citation probability into ``subset``; None if it was never cited."""
    want = subset is Subset.RELEVANT
    probs = [p for conf in run.confidences.values() for _, p, rel in conf.entries if rel == want]
    if not probs:
        return None
    return math.fsum(probs) / len(probs)


def citation_frequency(run: ConditionRun, qids: Optional[Sequence[str]] = None) -> Tuple[float, float]:
    qids = list(run.scores) if qids is None else list(qids)
    if not qids:
        raise ValueError("empty run")
    n = len(qids)
    return (math.fsum(run.scores[q].n_cited for q in qids) / n,
            math.fsum(run.scores[q].n_cited_relevant for q in qids) / n)


# -- significance ---------------------------------------------------------

_BETA_EPS = 1e-15
_BETA_TINY = 1e-300
_BETA_MAXIT = 10_000


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c, d = 1.0, 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _BETA_TINY else _BETA_TINY)
    h = d
    for m in range(1, _BETA_MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _BETA_TINY else _BETA_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _BETA_TINY else _BETA_TINY
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = 1.0 / (d if abs(d) > _BETA_TINY else _BETA_TINY)
        c = 1.0 + aa / c
        c = c if abs(c) > _BETA_TINY else _BETA_TINY
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge (a={a}, b={b}, x={x})")


def regularized_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b) for a, b > 0 and 0 <= x <= 1."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def t_two_sided_p(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return regularized_beta(df / (df + t * t), 0.5 * df, 0.5)


class TTest(NamedTuple):
    t: float
    p: float
    degenerate: bool = False


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTest:
    """Two-sided paired t-test of mean(a - b) = 0 with n - 1 degrees of freedom.

    All-zero differences give t = nan, p = 1 and ``degenerate=True``.
    """
    if len(a) != len(b):
        raise ValueError("paired samples differ in length")
    n = len(a)
    if n < 2:
        raise ValueError("paired t-test needs at least two pairs")
    diffs = [x - y for x, y in zip(a, b)]
    if all(d == 0 for d in diffs):
        return TTest(float("nan"), 1.0, True)
    mean = math.fsum(diffs) / n
    var = math.fsum((d - mean) ** 2 for d in diffs) / (n - 1)
    if var == 0.0:
        return TTest(math.copysign(math.inf, mean), 0.0)
    t = mean / math.sqrt(var / n)
    return TTest(t, t_two_sided_p(t, n - 1))


def _safe_ttest(a, b) -> TTest:
    if len(a) < 2:
        return TTest(float("nan"), 1.0, True)
    return paired_t_test(a, b)


# -- report ----------------------------------------------------------------

@dataclass
class ConditionSummary:
    condition: str
    relevant_author: str
    nonrelevant_author: str
    mode: str
    label_scheme: str
    k: int
    n_queries: int
    precision: float
    recall: float
    em: float
    ac_relevant: Optional[float]
    ac_nonrelevant: Optional[float]
    mean_cited: float
    mean_cited_relevant: float
    significant: Dict[str, bool] = field(default_factory=dict)


@dataclass
class CounterfactualEntry:
    metric: str  # "CAS", "CAB" or "CAB-mixed"
    relevant_author: str
    nonrelevant_author: str
    label_scheme: str
    k: int
    first: str
    second: str
    omega: Optional[int]
    n_queries: int
    precision: float
    recall: float
    p_precision: float
    p_recall: float

    @property
    def significant(self) -> Dict[str, bool]:
        return {"precision": self.p_precision < ALPHA, "recall": self.p_recall < ALPHA}


@dataclass
class MetricReport:
    conditions: List[ConditionSummary]
    counterfactual: List[CounterfactualEntry]

    def to_json(self) -> dict:
        return {"conditions": [vars(c) for c in self.conditions],
                "counterfactual": [vars(e) for e in self.counterfactual]}

    @classmethod
    def from_json(cls, obj: dict) -> "MetricReport":
        return cls([ConditionSummary(**c) for c in obj["conditions"]],
                   [CounterfactualEntry(**e) for e in obj["counterfactual"]])

    def entry(self, metric: str, relevant_author: str, nonrelevant_author: str, **match) -> CounterfactualEntry:
        for e in self.counterfactual:
            if (e.metric, e.relevant_author, e.nonrelevant_author) == (metric, relevant_author, nonrelevant_author) \
                    and all(getattr(e, k) == v for k, v in match.items()):
                return e
        raise KeyError((metric, relevant_author, nonrelevant_author, match))


_MODE_ORDER = {"vanilla": 0, "informed": 1, "cf_informed": 2,
               "mixed(informed/cf_informed)": 3, "mixed(cf_informed/informed)": 4}


def _find(runs: Sequence[ConditionRun], name: str) -> Optional[ConditionRun]:
    for r in runs:
        if r.key.condition.name == name:
            return r
    return None


def _mean(run: ConditionRun, qids, metric: str) -> float:
    return math.fsum(_values(run, qids, metric)) / len(qids) if qids else float("nan")


def _p_values(metric: str, a: ConditionRun, b: ConditionRun, qids) -> List[float]:
    out = []
    for m in METRICS:
        x, y = _values(a, qids, m), _values(b, qids, m)
        if metric == "CAS":
            # sensitivity is tested as mean |difference| against zero
            x, y = [abs(u - v) for u, v in zip(x, y)], [0.0] * len(x)
        out.append(_safe_ttest(x, y).p)
    return out


def build_report(runs: Sequence[ConditionRun]) -> MetricReport:
    """Per-condition means plus every CAS/CAB the given runs support."""
    groups: Dict[tuple, List[ConditionRun]] = {}
    for r in runs:
        groups.setdefault(r.key.group, []).append(r)
    conditions: List[ConditionSummary] = []
    entries: List[CounterfactualEntry] = []
    for g in sorted(groups):
        members = sorted(groups[g], key=lambda r: _MODE_ORDER.get(r.key.condition.name, 99))
        common = sorted(set.intersection(*(set(r.scores) for r in members)))
        rows = []
        for r in members:
            sub = ConditionRun(r.key, r.scores, {q: r.confidences[q] for q in common if q in r.confidences})
            cited, cited_rel = citation_frequency(r, common) if common else (float("nan"), float("nan"))
            rows.append(ConditionSummary(
                r.key.id, g[0], g[1], r.key.condition.name, g[2], g[3], len(common),
                _mean(r, common, "precision"), _mean(r, common, "recall"), _mean(r, common, "em"),
                compute_ac(sub, Subset.RELEVANT), compute_ac(sub, Subset.NONRELEVANT), cited, cited_rel))
        _mark_significance(rows, {r.key.condition.name: r for r in members}, common)
        conditions.extend(rows)

        def add(metric, a, b, omega, result):
            pp, pr = _p_values(metric, a, b, result.queries)
            entries.append(CounterfactualEntry(
                metric, g[0], g[1], g[2], g[3], a.key.condition.name, b.key.condition.name, omega,
                len(result.queries), result.precision, result.recall, pp, pr))

        inf, van, cf = _find(members, "informed"), _find(members, "vanilla"), _find(members, "cf_informed")
        if inf and van:
            add("CAS", inf, van, None, compute_cas(inf, van))
        if inf and cf:
            w = omega_for(inf.key)
            add("CAB", inf, cf, w, compute_cab(inf, cf, w))
        m1, m2 = _find(members, "mixed(informed/cf_informed)"), _find(members, "mixed(cf_informed/informed)")
        if m1 and m2:
            w = omega_for(m1.key)
            add("CAB-mixed", m1, m2, w, compute_mixed_cab(m1, m2, w))
    return MetricReport(conditions, entries)


def _mark_significance(rows: List[ConditionSummary], runs: Dict[str, ConditionRun], common) -> None:
    """Flag a metric on a row when it beats every rival mode (paired, p < ALPHA)."""
    families = [("vanilla", "informed", "cf_informed"),
                ("mixed(informed/cf_informed)", "mixed(cf_informed/informed)")]
    for row in rows:
        family = next((f for f in families if row.mode in f), ())
        rivals = [runs[m] for m in family if m != row.mode and m in runs]
        for metric in ("precision", "recall", "em"):
            ok = bool(rivals) and len(common) >= 2
            for rival in rivals:
                if not ok:
                    break
                mine = _values(runs[row.mode], common, metric)
                theirs = _values(rival, common, metric)
                res = paired_t_test(mine, theirs)
                ok = not res.degenerate and res.t > 0 and res.p < ALPHA
            row.significant[metric] = ok
