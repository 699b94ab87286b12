from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pingtsvm.metrics import ConfusionMatrix, accuracy, confusion, report

labels = st.lists(st.sampled_from([1, -1]), min_size=1, max_size=40)


def test_confusion_positive_plus():
    assert confusion([1, -1], [1, -1], positive=1) == ConfusionMatrix(tp=1, fp=0, tn=1, fn=0)


def test_confusion_positive_minus():
    assert confusion([1, -1], [1, -1], positive=-1) == ConfusionMatrix(tp=1, fp=0, tn=1, fn=0)


def test_confusion_enumeration():
    assert confusion([1, 1, -1], [-1, 1, 1]) == ConfusionMatrix(tp=1, fp=1, tn=0, fn=1)


def test_confusion_errors():
    with pytest.raises(ValueError):
        confusion([1, -1], [1])
    with pytest.raises(ValueError):
        confusion([], [])
    with pytest.raises(ValueError):
        confusion([1], [1], positive=0)
    with pytest.raises(ValueError):
        ConfusionMatrix(-1, 0, 0, 0)


def test_report_reference_matrix():
    rep = report(ConfusionMatrix(tp=3, fp=1, tn=4, fn=2))
    assert (rep.precision, rep.recall, rep.f1) == (Fraction(3, 4), Fraction(3, 5), Fraction(2, 3))
    assert (rep.specificity, rep.accuracy) == (Fraction(4, 5), Fraction(7, 10))


def test_report_perfect():
    rep = report(ConfusionMatrix(tp=5, fp=0, tn=2, fn=0))
    assert all(value == 1 for _, value in rep.items())


def test_report_undefined_precision():
    rep = report(ConfusionMatrix(tp=0, fp=0, tn=3, fn=2))
    assert rep.precision is None and rep.f1 is None
    assert rep.recall == 0 and rep.specificity == 1


def test_report_empty():
    with pytest.raises(ValueError):
        report(ConfusionMatrix(0, 0, 0, 0))


@given(labels)
def test_self_comparison_is_perfect(y):
    assert report(confusion(y, y)).accuracy == 1
    assert accuracy(y, y) == 1.0


@given(labels, st.data())
def test_counts_and_bounds(y_true, data):
    y_pred = data.draw(st.lists(st.sampled_from([1, -1]), min_size=len(y_true), max_size=len(y_true)))
    cm = confusion(y_true, y_pred)
    assert cm.total == len(y_true)
    rep = report(cm)
    for _, value in rep.items():
        assert value is None or 0 <= value <= 1
    if rep.f1 is not None:
        assert min(rep.precision, rep.recall) <= rep.f1 <= max(rep.precision, rep.recall)
        assert rep.f1 == 2 * rep.precision * rep.recall / (rep.precision + rep.recall)
    assert rep.accuracy == Fraction(int(np.sum(np.array(y_true) == np.array(y_pred))), len(y_true))


@given(labels, st.data())
def test_positive_swap(y_true, data):
    y_pred = data.draw(st.lists(st.sampled_from([1, -1]), min_size=len(y_true), max_size=len(y_true)))
    plus, minus = confusion(y_true, y_pred, 1), confusion(y_true, y_pred, -1)
    assert (minus.tp, minus.fp, minus.tn, minus.fn) == (plus.tn, plus.fn, plus.tp, plus.fp)
    a, b = report(plus), report(minus)
    assert a.accuracy == b.accuracy
    # the swapped view's precision is the original negative predictive value
    npv = Fraction(plus.tn, plus.tn + plus.fn) if plus.tn + plus.fn else None
    assert b.precision == npv
    assert b.recall == a.specificity
