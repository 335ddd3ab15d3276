import pytest
from hypothesis import given, strategies as st

from bridgeprompt.dataset_io import ActionVocab, AnnotatedVideo
from bridgeprompt.prompts import (VariantTable, build_prompt_bundle, load_variant_table,
                                  make_integrated_prompts, make_ordinal_prompt,
                                  make_semantic_prompts, make_statistical_prompt,
                                  num_to_cardinal, ord_to_text, write_variant_table)
from bridgeprompt.sampler import extract_cut

import numpy as np


@pytest.mark.parametrize("n,word", [(1, "one"), (2, "two"), (13, "thirteen"), (20, "twenty"),
                                    (21, "twenty-one"), (99, "ninety-nine")])
def test_cardinal(n, word):
    assert num_to_cardinal(n) == word


@pytest.mark.parametrize("n,word", [(1, "first"), (2, "second"), (3, "third"), (5, "fifth"),
                                    (8, "eighth"), (9, "ninth"), (12, "twelfth"), (20, "twentieth"),
                                    (21, "twenty-first"), (42, "forty-second")])
def test_ordinal(n, word):
    assert ord_to_text(n) == word


@pytest.mark.parametrize("fn", [num_to_cardinal, ord_to_text])
@pytest.mark.parametrize("n", [0, 100, -3])
def test_numeral_range(fn, n):
    with pytest.raises(ValueError):
        fn(n)


def test_statistical_prompt():
    assert make_statistical_prompt(2) == "this video clip contains two actions in total"
    assert make_statistical_prompt(1) == "this video clip contains one action in total"
    assert make_statistical_prompt(4) == "this video clip contains four actions in total"


def test_ordinal_prompt():
    assert make_ordinal_prompt(1) == "this is the first action in the video"
    assert make_ordinal_prompt(2) == "this is the second action in the video"
    assert make_ordinal_prompt(5) == "this is the fifth action in the video"


def test_semantic_prompt_canonical():
    t = VariantTable.canonical()
    assert make_semantic_prompts(1, "take bread", t) == [
        "first, the person is performing the action step of take bread"]
    assert make_semantic_prompts(2, "pour water", t) == [
        "second, the person is performing the action step of pour water"]
    with pytest.raises(ValueError):
        make_semantic_prompts(1, "", t)


def test_default_table_sizes():
    t = VariantTable()
    assert len(t.semantic_variants) == 19
    assert len(t.integrated_variants) == 9
    assert len(make_semantic_prompts(3, "stir tea", t)) == 19
    assert make_semantic_prompts(1, "x", t)[0] == "first, the person is performing the action step of x"


def test_integrated_prompts():
    t = VariantTable(["{ord}, {vp}"], ["{ord}, {vp}"])
    assert make_integrated_prompts(["take bread"], t) == ["first, take bread"]
    assert make_integrated_prompts(["take bread", "put cheese on bread"], t) == [
        "first, take bread, second, put cheese on bread"]
    with pytest.raises(ValueError):
        make_integrated_prompts([], t)


def test_variant_table_file_roundtrip(tmp_path):
    t = VariantTable()
    write_variant_table(tmp_path / "v.txt", t)
    assert load_variant_table(tmp_path / "v.txt") == t


def _cut(labels):
    labels = np.asarray(labels)
    v = AnnotatedVideo("v", labels, np.zeros((len(labels), 2)))
    return extract_cut(v, np.arange(len(labels)))


def test_bundle_single_step():
    vocab = ActionVocab([(0, "take bread"), (1, "put cheese on bread")])
    b = build_prompt_bundle(_cut([0, 0, 0]), vocab, VariantTable())
    assert b.K == 1
    assert b.statistical == "this video clip contains one action in total"
    assert b.ordinal == ["this is the first action in the video"]


def test_bundle_two_steps():
    vocab = ActionVocab([(0, "take bread"), (1, "put cheese on bread")])
    b = build_prompt_bundle(_cut([0, 0, 1, 1]), vocab, VariantTable())
    assert b.semantic[0][0].startswith("first, the person is performing the action step of take bread")
    assert len(b.semantic) == len(b.ordinal) == 2
    assert len(b.integrated) == 9


def test_bundle_needs_steps():
    vocab = ActionVocab([(0, "a")])
    cut = _cut([0])
    cut.step_labels = []
    with pytest.raises(ValueError):
        build_prompt_bundle(cut, vocab, VariantTable())


phrases = st.sampled_from(["take bread", "pour water", "Stir Tea", "cut tomato", "open lid"])


@given(st.lists(phrases, min_size=1, max_size=6))
def test_integrated_contains_each_phrase_in_order(vps):
    for s in make_integrated_prompts(vps, VariantTable()):
        pos = 0
        for i, vp in enumerate(vps):
            piece = f"{ord_to_text(i + 1)}"
            j = s.find(piece, pos)
            assert j >= 0
            k = s.find(vp, j)
            assert k >= 0
            pos = k + len(vp)


@given(st.lists(phrases, min_size=1, max_size=5), st.lists(phrases, min_size=1, max_size=5))
def test_integrated_injective(a, b):
    t = VariantTable.canonical()
    if a != b:
        assert make_integrated_prompts(a, t) != make_integrated_prompts(b, t)


@given(st.integers(1, 20), phrases)
def test_rendered_lowercase_except_phrase(i, vp):
    for s in make_semantic_prompts(i, vp, VariantTable()) + [make_statistical_prompt(i), make_ordinal_prompt(i)]:
        assert s.replace(vp, "") == s.replace(vp, "").lower()
