import datetime
import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from canline.geometry import BoundingBox
from canline.labels import (
    LABEL_UNREADABLE,
    LabelFields,
    LabelParseError,
    OcrLine,
    assemble_lines,
    parse_date,
    parse_label,
    read_label,
    render_label,
    verify_label,
)
from canline.synthetic import OcrNoiseProfile, mock_read_text
from oracles import days_in_month, valid_dates


def line(text, cx, cy, w=40, h=10):
    return OcrLine(text, BoundingBox(cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2), 0.9)


def test_assemble_lines():
    assert assemble_lines([line("only", 10, 10)]) == ["only"]
    assert assemble_lines([line("low", 100, 120), line("high", 100, 40)]) == ["high", "low"]
    assert assemble_lines([line("right", 200, 50), line("left", 50, 50)]) == ["left", "right"]


def test_assemble_lines_is_stable_on_full_ties():
    lines = [line("first", 10, 10), line("second", 10, 10)]
    assert assemble_lines(lines) == ["first", "second"]


@given(st.lists(st.tuples(st.text(max_size=5), st.integers(20, 200), st.integers(10, 200))))
def test_assemble_lines_is_permutation(specs):
    lines = [line(t, x, y) for t, x, y in specs]
    out = assemble_lines(lines)
    assert sorted(out) == sorted(t for t, _, _ in specs)
    assert assemble_lines(lines) == out


GOOD = ["LOT A1B2C3", "EXP 15/08/2025", "PROD 0042"]


def test_parse_label():
    assert parse_label(GOOD) == LabelFields("A1B2C3", datetime.date(2025, 8, 15), "0042")


def test_parse_label_normalizes_case_and_spacing():
    assert parse_label(["lot   a1b2c3", "  exp 15/08/2025", "prod 0042  "]) == parse_label(GOOD)


@pytest.mark.parametrize(
    "lines, message",
    [
        (["LOT A1B2C3", "PROD 0042"], "field absent: expiry"),
        (["EXP 15/08/2025", "PROD 0042"], "field absent: lot_code"),
        (["LOT A1B2C3", "EXP 15/08/2025"], "field absent: product_code"),
        (["LOT A1B2C3", "EXP 31/02/2025", "PROD 0042"], "field invalid: expiry"),
        (["LOT A1B2C3", "EXP 15-08-2025", "PROD 0042"], "field invalid: expiry"),
        (["LOT A1B2", "EXP 15/08/2025", "PROD 0042"], "field invalid: lot_code"),
        (["LOT A1B2C3", "EXP 15/08/2025", "PROD 42"], "field invalid: product_code"),
        (["LOT A1B2C3", "EXP 15/08/2025", "PROD OO42"], "field invalid: product_code"),
        ([], "field absent: lot_code"),
    ],
)
def test_parse_label_errors(lines, message):
    with pytest.raises(LabelParseError, match=message):
        parse_label(lines)


def test_date_validator_against_day_count():
    real = set(valid_dates(2000, 2099))
    assert len(real) == 36525  # 100 years, 25 leap years in 2000-2099
    for d, m, y in itertools.product(range(0, 33), range(0, 14), range(2000, 2100)):
        text = f"{d:02d}/{m:02d}/{y:04d}"
        try:
            parse_date(text)
            ok = True
        except ValueError:
            ok = False
        assert ok == ((d, m, y) in real), text


def test_day_count_oracle_sanity():
    assert days_in_month(2000, 2) == 29
    assert days_in_month(2100, 2) == 28
    assert days_in_month(2024, 2) == 29
    assert days_in_month(2023, 2) == 28


lot_codes = st.text(alphabet="ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789", min_size=6, max_size=6)
products = st.integers(0, 9999).map(lambda v: f"{v:04d}")
fields = st.builds(LabelFields, lot_codes, st.dates(datetime.date(1000, 1, 1), datetime.date(9999, 12, 31)), products)


@given(fields)
def test_render_parse_round_trip(f):
    assert parse_label(render_label(f).splitlines()) == f


class _Can:
    def __init__(self, text, label_fault=False):
        self.label_text_truth = text
        self.label_fault = label_fault


TRUTH = "\n".join(GOOD)


def test_verify_clean_read():
    lines = mock_read_text(TRUTH, OcrNoiseProfile(), np.random.default_rng(0))
    fields = read_label(assemble_lines(lines))
    assert verify_label(fields, _Can(TRUTH)) == []


def test_verify_confusable_flip():
    # applying the full confusable map turns the lot keyword into L0T
    flipped = ["L0T A182C3", "EXP I5/08/2025", "PR0D 0042"]
    assert read_label(flipped) is None
    assert verify_label(read_label(flipped), _Can(TRUTH)) == [LABEL_UNREADABLE]


def test_verify_mismatch_with_truth():
    other = read_label(["LOT ZZZZZZ", "EXP 15/08/2025", "PROD 0042"])
    assert other is not None
    assert verify_label(other, _Can(TRUTH)) == [LABEL_UNREADABLE]


def test_verify_missing_label():
    assert verify_label(read_label([]), _Can(TRUTH, label_fault=True)) == [LABEL_UNREADABLE]
