from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from arabocr.metrics import EvalPair, EvalReport, edit_distance, evaluate

from metric_cases import CASES
from oracles import levenshtein

text = st.text(alphabet="ابتث ab", max_size=8)


def test_edit_distance_examples():
    assert edit_distance("كتاب", "كتاب") == 0
    assert edit_distance("", "abc") == 3
    assert edit_distance("kitten", "sitting") == 3


@given(text, text)
def test_edit_distance_matches_oracle(a, b):
    assert edit_distance(a, b) == levenshtein(a, b)


@given(text, text, text)
def test_edit_distance_is_a_metric(a, b, c):
    assert edit_distance(a, b) == edit_distance(b, a)
    assert (edit_distance(a, b) == 0) == (a == b)
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)


@pytest.mark.parametrize("name, granularity, pairs, crr, wrr, lrr", CASES, ids=[c[0] for c in CASES])
def test_hand_computed_cases(name, granularity, pairs, crr, wrr, lrr):
    report = evaluate([EvalPair(rt, gt) for rt, gt in pairs], granularity)
    assert (report.crr, report.wrr, report.lrr) == (crr, wrr, lrr)


def test_crr_formula_examples():
    assert evaluate([EvalPair("abcdefghix", "abcdefghij")]).crr == Fraction(9, 10)
    r = evaluate([EvalPair("x y", "x y"), EvalPair("q", "z z")], "line")
    assert r.lrr == Fraction(1, 2)


def test_empty_pairs_and_bad_granularity():
    with pytest.raises(ValueError):
        evaluate([])
    with pytest.raises(ValueError):
        evaluate([EvalPair("a", "a")], "page")


def test_report_recomputes_from_counts():
    report = evaluate([EvalPair("ab cd", "ab ce"), EvalPair("", "x")], "line")
    rebuilt = EvalReport(**{k: v for k, v in report.as_row().items() if k.startswith("n_") or k == "sum_edit_distance"})
    assert rebuilt == report
    assert (rebuilt.crr, rebuilt.wrr, rebuilt.lrr) == (report.crr, report.wrr, report.lrr)


pairs_strategy = st.lists(st.tuples(text.filter(bool), text.filter(bool)), min_size=1, max_size=6)


@given(pairs_strategy, st.sampled_from(["word", "line"]))
def test_crr_is_one_iff_all_match(pairs, granularity):
    report = evaluate([EvalPair(rt, gt) for rt, gt in pairs], granularity)
    assert (report.crr == 1) == all(rt == gt for rt, gt in pairs)
    assert 0 <= report.wrr <= 1 and 0 <= report.lrr <= 1 and report.crr <= 1


@given(pairs_strategy)
def test_exact_pairs_score_one(pairs):
    report = evaluate([EvalPair(gt, gt) for _, gt in pairs], "line")
    assert report.crr == report.wrr == report.lrr == 1
