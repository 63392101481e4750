import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from canline.geometry import (
    DEFAULT_CLASS_NAMES,
    BoundingBox,
    Detection,
    NormalizedBox,
    area,
    class_labels,
    label_for,
    to_corner_form,
    to_normalized,
)


def test_default_taxonomy():
    assert len(DEFAULT_CLASS_NAMES) == 6
    labels = class_labels()
    assert labels["easy_open_ok"].id == 0
    assert labels["label_fault"].id == 5
    assert label_for("contour_fault").id == 3


@pytest.mark.parametrize(
    "norm, size, expected",
    [
        ((0.5, 0.5, 1, 1), (100, 200), (0, 0, 100, 200)),
        ((0.5, 0.5, 0, 0), (100, 100), (50, 50, 50, 50)),
        ((0.25, 0.5, 0.2, 0.1), (640, 480), (96, 216, 224, 264)),
    ],
)
def test_to_corner_form(norm, size, expected):
    b = to_corner_form(NormalizedBox(*norm), *size)
    assert b.as_list() == pytest.approx(expected, abs=1e-9)
    back = to_normalized(b, *size)
    assert (back.cx, back.cy, back.w, back.h) == pytest.approx(norm, abs=1e-9)


@pytest.mark.parametrize("w, h", [(0, 10), (10, 0), (-1, 5)])
def test_to_corner_form_rejects_bad_size(w, h):
    with pytest.raises(ValueError):
        to_corner_form(NormalizedBox(0.5, 0.5, 0.1, 0.1), w, h)


def test_corner_form_clamps_tolerance_overflow():
    # within the 1e-6 slack the box is legal but pokes out; corners are clamped
    b = to_corner_form(NormalizedBox(0.5, 0.5, 1.000001, 1.0), 100, 100)
    assert b.x_min == 0.0 and b.x_max == 100.0


@pytest.mark.parametrize(
    "box, expected", [((0, 0, 2, 2), 4.0), ((1, 1, 1, 5), 0.0), ((0, 0, 3, 1.5), 4.5)]
)
def test_area(box, expected):
    assert area(BoundingBox(*box)) == expected


def test_box_invariants():
    with pytest.raises(ValueError):
        BoundingBox(2, 0, 1, 1)
    with pytest.raises(ValueError):
        BoundingBox(0, 0, math.inf, 1)
    with pytest.raises(ValueError):
        NormalizedBox(0.9, 0.5, 0.4, 0.1)
    with pytest.raises(ValueError):
        Detection(BoundingBox(0, 0, 1, 1), class_labels()["label_ok"], 1.2)


@st.composite
def normalized_boxes(draw, positive=True):
    lo = 1e-3 if positive else 0.0
    w = draw(st.floats(lo, 1.0))
    h = draw(st.floats(lo, 1.0))
    cx = draw(st.floats(w / 2, 1 - w / 2))
    cy = draw(st.floats(h / 2, 1 - h / 2))
    return NormalizedBox(cx, cy, w, h)


sizes = st.floats(1.0, 4096.0)


@given(normalized_boxes(), sizes, sizes)
def test_round_trip(n, w, h):
    back = to_normalized(to_corner_form(n, w, h), w, h)
    assert (back.cx, back.cy, back.w, back.h) == pytest.approx((n.cx, n.cy, n.w, n.h), abs=1e-9)


@given(normalized_boxes(), sizes, sizes)
def test_area_scales_with_image(n, w, h):
    assert area(to_corner_form(n, w, h)) == pytest.approx(n.w * n.h * w * h, rel=1e-6)


@given(
    st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.floats(0, 1e3), st.floats(0, 1e3),
    st.floats(-1e3, 1e3), st.floats(-1e3, 1e3),
)
def test_area_translation_invariant(x, y, w, h, dx, dy):
    a = area(BoundingBox(x, y, x + w, y + h))
    b = area(BoundingBox(x + dx, y + dy, x + w + dx, y + h + dy))
    assert b == pytest.approx(a, rel=1e-6, abs=1e-6)
