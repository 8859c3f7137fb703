from attribias.context import LabelScheme, Mode, RagCondition
from attribias.corpus import Author
from attribias.metrics import ConditionKey, ConditionRun
from attribias.scoring import CitationConfidence, QueryScore

H, L = Author.HUMAN, Author.LLM
CONDITIONS = {
    "vanilla": RagCondition(Mode.VANILLA),
    "informed": RagCondition(Mode.INFORMED),
    "cf_informed": RagCondition(Mode.CF_INFORMED),
    "mixed_ic": RagCondition(Mode.MIXED, Mode.INFORMED, Mode.CF_INFORMED),
    "mixed_ci": RagCondition(Mode.MIXED, Mode.CF_INFORMED, Mode.INFORMED),
}


def make_run(mode, precision, recall=None, rel=H, nonrel=L, k=10, qids=None, scheme=LabelScheme.TOKENS,
             confidences=None):
    cond = CONDITIONS[mode]
    if scheme is not LabelScheme.TOKENS:
        cond = RagCondition(cond.mode, cond.mixed_relevant_mode, cond.mixed_nonrelevant_mode, scheme)
    key = ConditionKey(rel, nonrel, cond, k)
    recall = precision if recall is None else recall
    qids = qids or [f"q{i}" for i in range(len(precision))]
    scores = {q: QueryScore(q, key.id, float(p), float(r), 0, 1, 1) for q, p, r in zip(qids, precision, recall)}
    confs = {q: CitationConfidence(tuple(c)) for q, c in (confidences or {}).items()}
    return ConditionRun(key, scores, confs)
