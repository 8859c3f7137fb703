import pytest
from hypothesis import given, settings, strategies as st

from attribias.corpus import Author, Benchmark, Document, Query
from attribias.context import (AI_LABEL, HUMAN_LABEL, LLM_LABEL, AuthorLabel, ConfigError, ContextAssembly,
                               ContextDoc, LabelKind, LabelScheme, Mode, NamePool, RagCondition,
                               assemble_context, assign_labels, fill, generate_name_pool, load_name_pool,
                               parse_name_pairs, render_prompt, save_name_pool)
from attribias.gateway import RawGeneration
from attribias.retrieval import RankedList

VANILLA = RagCondition(Mode.VANILLA)
INFORMED = RagCondition(Mode.INFORMED)
CF = RagCondition(Mode.CF_INFORMED)
MIXED_IC = RagCondition(Mode.MIXED, Mode.INFORMED, Mode.CF_INFORMED)
QUERY = Query("q", "who built the tower", ("eiffel",))


def make_ctx(authors, relevant=(0,)):
    docs = tuple(ContextDoc(i, f"d{i}", f"text {i}", a) for i, a in enumerate(authors))
    rel = frozenset(relevant)
    return ContextAssembly("q", docs, rel, frozenset(range(len(authors))) - rel)


POOL = NamePool(tuple((f"First{i}", f"Last{i}") for i in range(100)))


def test_fixed_label_displays():
    assert (HUMAN_LABEL.display, LLM_LABEL.display, AI_LABEL.display) == ("[Human]", "[LLM]", "[AI]")
    with pytest.raises(ValueError):
        AuthorLabel(LabelKind.HUMAN, "[Person]")
    with pytest.raises(ValueError):
        AuthorLabel(LabelKind.NAMED, " ")


def test_condition_validation():
    with pytest.raises(ConfigError):
        RagCondition(Mode.MIXED, Mode.INFORMED)
    with pytest.raises(ConfigError):
        RagCondition(Mode.INFORMED, Mode.INFORMED, Mode.CF_INFORMED)
    with pytest.raises(ConfigError):
        RagCondition(Mode.MIXED, Mode.VANILLA, Mode.INFORMED)
    assert MIXED_IC.name == "mixed(informed/cf_informed)"
    assert RagCondition.from_json(MIXED_IC.to_json()) == MIXED_IC


def test_context_validation():
    d = (ContextDoc(0, "a", "t", Author.HUMAN), ContextDoc(1, "b", "t", Author.HUMAN))
    with pytest.raises(ValueError, match="contiguous"):
        ContextAssembly("q", d[1:], frozenset({1}), frozenset())
    with pytest.raises(ValueError, match="overlap"):
        ContextAssembly("q", d, frozenset({0, 1}), frozenset({1}))
    with pytest.raises(ValueError, match="cover"):
        ContextAssembly("q", d, frozenset({0}), frozenset())


def test_cf_informed_llm_doc_gets_human():
    out = assign_labels(make_ctx([Author.LLM]), CF)
    assert out.docs[0].label.display == "[Human]"


def test_informed_human_doc_gets_human():
    assert assign_labels(make_ctx([Author.HUMAN]), INFORMED).docs[0].label.display == "[Human]"


def test_mixed_on_human_corpus():
    out = assign_labels(make_ctx([Author.HUMAN] * 4, relevant=(2,)), MIXED_IC)
    assert [d.label.display for d in out.docs] == ["[LLM]", "[LLM]", "[Human]", "[LLM]"]


def test_vanilla_has_no_labels():
    labelled = assign_labels(make_ctx([Author.HUMAN, Author.LLM]), INFORMED)
    out = assign_labels(labelled, VANILLA)
    assert all(d.label is None for d in out.docs)


def test_names_scheme():
    cond = RagCondition(Mode.INFORMED, label_scheme=LabelScheme.NAMES)
    ctx = make_ctx([Author.HUMAN, Author.LLM, Author.HUMAN])
    out = assign_labels(ctx, cond, POOL, seed=4)
    assert out.docs[0].label.kind is LabelKind.NAMED
    assert out.docs[1].label == AI_LABEL
    assert out.docs[0].label.display.split(" ")[0].startswith("First")
    assert assign_labels(ctx, cond, POOL, seed=4) == out
    with pytest.raises(ConfigError):
        assign_labels(ctx, cond, None)


def test_names_stable_across_conditions():
    # a position shown as human-kind gets the same name in every condition
    ctx = make_ctx([Author.HUMAN, Author.LLM])
    inf = assign_labels(ctx, RagCondition(Mode.INFORMED, label_scheme=LabelScheme.NAMES), POOL, 1)
    cf = assign_labels(ctx, RagCondition(Mode.CF_INFORMED, label_scheme=LabelScheme.NAMES), POOL, 1)
    assert inf.docs[0].label.display != "[AI]" and cf.docs[1].label.kind is LabelKind.NAMED
    assert cf.docs[0].label == AI_LABEL


def _authors():
    return st.lists(st.sampled_from([Author.HUMAN, Author.LLM]), min_size=1, max_size=10)


@settings(max_examples=80)
@given(_authors(), st.data())
def test_label_properties(authors, data):
    rel = data.draw(st.sets(st.integers(0, len(authors) - 1)))
    ctx = make_ctx(authors, rel)
    inf = assign_labels(ctx, INFORMED)
    cf = assign_labels(ctx, CF)
    # completeness and the involution: flipping the counterfactual label restores the informed one
    for a, b in zip(inf.docs, cf.docs):
        assert a.label is not None and b.label is not None
        assert a.label.author is a.actual_author
        assert b.label.author.flipped() is a.label.author
    for sub_rel in (Mode.INFORMED, Mode.CF_INFORMED):
        for sub_non in (Mode.INFORMED, Mode.CF_INFORMED):
            mixed = assign_labels(ctx, RagCondition(Mode.MIXED, sub_rel, sub_non))
            for d in mixed.docs:
                src = sub_rel if d.index in ctx.relevant_set else sub_non
                ref = inf if src is Mode.INFORMED else cf
                assert d.label == ref.docs[d.index].label


def test_render_vanilla():
    p = render_prompt(make_ctx([Author.HUMAN, Author.HUMAN]), VANILLA, QUERY)
    assert "Document [0](text 0)\nDocument [1](text 1)" in p
    assert "(written by" not in p
    assert p.startswith("Instruction: Write a concise answer")
    assert p.endswith("Question: who built the tower.")
    assert "Some documents are authored" not in p


def test_render_informed():
    ctx = assign_labels(make_ctx([Author.HUMAN, Author.LLM]), INFORMED)
    p = render_prompt(ctx, INFORMED, QUERY)
    lines = [l for l in p.splitlines() if l.startswith("Document [")]
    assert lines == ["Document [0](text 0) (written by [Human])", "Document [1](text 1) (written by [LLM])"]
    assert "3. Some documents are authored by humans, while others are generated by a Large Language " \
           "Model (LLM). We denote this distinction for each document." in p
    assert render_prompt(ctx, INFORMED, QUERY) == p


def test_render_rejects_inconsistent_labels():
    ctx = make_ctx([Author.HUMAN])
    with pytest.raises(ConfigError):
        render_prompt(ctx, INFORMED, QUERY)
    with pytest.raises(ConfigError):
        render_prompt(assign_labels(ctx, INFORMED), VANILLA, QUERY)


def test_braces_in_document_text_kept():
    docs = (ContextDoc(0, "a", "set {question} here", Author.HUMAN),)
    ctx = ContextAssembly("q", docs, frozenset({0}), frozenset())
    p = render_prompt(ctx, VANILLA, QUERY)
    assert "Document [0](set {question} here)" in p


def test_fill_leaves_unknown_placeholders():
    assert fill("{question} {other}", question="x") == "x {other}"


def test_custom_template_dir(tmp_path):
    (tmp_path / "vanilla.txt").write_text("Q={question}\n{documents}\n")
    (tmp_path / "vanilla_document.txt").write_text("<{index}:{text}>")
    p = render_prompt(make_ctx([Author.HUMAN]), VANILLA, QUERY, template_dir=tmp_path)
    assert p == "Q=who built the tower\n<0:text 0>"


def _bench():
    docs = {
        "r": Document("r", "relevant human"),
        "r::synthetic": Document("r::synthetic", "relevant llm", Author.LLM, "r"),
        "n": Document("n", "other human"),
        "n::synthetic": Document("n::synthetic", "other llm", Author.LLM, "n"),
        "x": Document("x", "no paraphrase"),
    }
    return Benchmark([QUERY], docs, {("q", "r"): 1})


def test_assemble_context_swaps_counterparts():
    bench = _bench()
    rl = RankedList("q", (("n", 2.0), ("r", 1.0)), 10)
    ctx = assemble_context(bench, rl, Author.LLM, Author.HUMAN)
    assert [d.doc_id for d in ctx.docs] == ["n", "r::synthetic"]
    assert ctx.relevant_set == {1} and ctx.nonrelevant_set == {0}
    back = assemble_context(bench, RankedList("q", (("n::synthetic", 1.0),), 10), Author.HUMAN, Author.HUMAN)
    assert back.docs[0].doc_id == "n"


def test_assemble_context_missing_counterpart():
    from attribias.corpus import CorpusError
    with pytest.raises(CorpusError, match="synthetic"):
        assemble_context(_bench(), RankedList("q", (("x", 1.0),), 10), Author.HUMAN, Author.LLM)


def test_context_json_round_trip():
    ctx = assign_labels(make_ctx([Author.HUMAN, Author.LLM], relevant=(1,)), CF)
    assert ContextAssembly.from_json(ctx.to_json()) == ctx
    bare = ctx.to_json(with_text=False)
    assert "texts" not in bare and bare["labels"][0] == ["llm", "[LLM]"]
    assert ContextAssembly.from_json(bare, {d.doc_id: d.text for d in ctx.docs}) == ctx


def test_name_pool_static_file(tmp_path):
    path = tmp_path / "names.csv"
    save_name_pool(POOL, path)

    class NoCalls:
        def generate(self, req):
            raise AssertionError("gateway must not be called")

    pool = generate_name_pool(NoCalls(), static_file=path, run_dir=tmp_path)
    assert pool.size == 100 and pool == POOL
    assert load_name_pool(tmp_path / "name_pool.csv") == POOL


class ListGateway:
    def __init__(self, texts):
        self.texts = list(texts)
        self.calls = 0

    def generate(self, req):
        self.calls += 1
        text = self.texts.pop(0)
        return RawGeneration(text, (), "fake", req.tag, True)


def _listing(pairs):
    return "\n".join(f"{i + 1}. {a}, {b}" for i, (a, b) in enumerate(pairs))


def test_name_pool_retry_then_error():
    dup = list(POOL.names[:99]) + [POOL.names[0]]
    gw = ListGateway([_listing(dup), _listing(dup)])
    with pytest.raises(ValueError, match="100 distinct"):
        generate_name_pool(gw)
    assert gw.calls == 2


def test_name_pool_retry_succeeds(tmp_path):
    gw = ListGateway([_listing(POOL.names[:50]), _listing(POOL.names)])
    assert generate_name_pool(gw, run_dir=tmp_path) == POOL
    assert (tmp_path / "name_pool.csv").exists()


def test_parse_name_pairs():
    text = "Here you go:\n1. (Jane, Porter)\n2) Amir Haddad\n- not a name\nLi, Wei,\n"
    assert parse_name_pairs(text) == [("Jane", "Porter"), ("Amir", "Haddad"), ("Li", "Wei")]


def test_name_pool_duplicates_rejected():
    with pytest.raises(ValueError):
        NamePool((("a", "b"), ("a", "b")))
