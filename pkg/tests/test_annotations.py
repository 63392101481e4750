import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canline.annotations import (
    AnnotationError,
    DatasetConfig,
    DatasetConfigError,
    GroundTruthAnnotation,
    parse_annotation_file,
    parse_annotation_line,
    parse_dataset_config,
    read_labels_dir,
    split_dataset,
    write_annotation_file,
    write_dataset_config,
)
from canline.geometry import DEFAULT_CLASS_NAMES, ClassLabel, NormalizedBox


def test_parse_line():
    a = parse_annotation_line("0 0.5 0.5 0.2 0.1")
    assert a.label.id == 0
    assert a.box == NormalizedBox(0.5, 0.5, 0.2, 0.1)

    full = parse_annotation_line("3 0.5 0.5 1.0 1.0", DEFAULT_CLASS_NAMES)
    assert full.label == ClassLabel(3, "contour_fault")
    assert full.box == NormalizedBox(0.5, 0.5, 1.0, 1.0)


@pytest.mark.parametrize(
    "line, reason",
    [
        ("1 0.5 0.5 1.2 0.1", "w out of range"),
        ("1 0.5 0.5 0.2", "expected 5 fields"),
        ("1 0.5 0.5 0.2 0.1 0.3", "expected 5 fields"),
        ("x 0.5 0.5 0.2 0.1", "class id"),
        ("1 0.5 abc 0.2 0.1", "non-numeric"),
        ("1 0.95 0.5 0.2 0.1", "exceeds image horizontally"),
        ("-1 0.5 0.5 0.2 0.1", "negative class id"),
    ],
)
def test_parse_line_errors(line, reason):
    with pytest.raises(AnnotationError, match=reason):
        parse_annotation_line(line, line_no=7)
    with pytest.raises(AnnotationError, match="line 7"):
        parse_annotation_line(line, line_no=7)


def test_unknown_class_id():
    with pytest.raises(AnnotationError, match="not in names"):
        parse_annotation_line("6 0.5 0.5 0.2 0.1", DEFAULT_CLASS_NAMES)


def test_tolerance_clamps_then_rejects():
    a = parse_annotation_line("0 0.5 0.5 1.0000005 0.1")
    assert a.box.w == 1.0
    with pytest.raises(AnnotationError):
        parse_annotation_line("0 0.5 0.5 1.00001 0.1")


def test_file_errors_carry_line_number():
    with pytest.raises(AnnotationError) as info:
        parse_annotation_file("0 0.5 0.5 0.2 0.1\n\n2 0.5 0.5 0.2\n")
    assert info.value.line_no == 3


def test_write_format():
    assert write_annotation_file([]) == ""
    a = GroundTruthAnnotation(ClassLabel(0, "easy_open_ok"), NormalizedBox(0.5, 0.5, 0.2, 0.1))
    assert write_annotation_file([a]) == "0 0.500000 0.500000 0.200000 0.100000\n"


@st.composite
def annotations(draw):
    cid = draw(st.integers(0, len(DEFAULT_CLASS_NAMES) - 1))
    w = draw(st.floats(0.0, 1.0))
    h = draw(st.floats(0.0, 1.0))
    cx = draw(st.floats(w / 2, 1 - w / 2))
    cy = draw(st.floats(h / 2, 1 - h / 2))
    return GroundTruthAnnotation(ClassLabel(cid, DEFAULT_CLASS_NAMES[cid]), NormalizedBox(cx, cy, w, h))


@settings(max_examples=100)
@given(st.lists(annotations(), max_size=12))
def test_write_parse_round_trip(anns):
    back = parse_annotation_file(write_annotation_file(anns), DEFAULT_CLASS_NAMES)
    assert len(back) == len(anns)
    for a, b in zip(anns, back):
        assert a.label == b.label
        for f in ("cx", "cy", "w", "h"):
            assert getattr(b.box, f) == pytest.approx(getattr(a.box, f), abs=1e-6)


def test_read_labels_dir(tmp_path):
    (tmp_path / "b.txt").write_text("1 0.5 0.5 0.2 0.1\n")
    (tmp_path / "a.txt").write_text("")
    (tmp_path / "ignored.json").write_text("{}")
    out = read_labels_dir(tmp_path, DEFAULT_CLASS_NAMES)
    assert list(out) == ["a", "b"]
    assert out["b"][0].label.name == "easy_open_fault"


def test_split_paper_ratio():
    s = split_dataset(list(range(10)), 0.8, seed=42)
    assert len(s.train) == 8 and len(s.val) == 2
    assert not set(s.train) & set(s.val)
    assert s == split_dataset(list(range(10)), 0.8, seed=42)


def test_split_single_item():
    s = split_dataset(["only"], 0.8, seed=1)
    assert s.train == ["only"] and s.val == []


def test_split_rounds_half_up():
    assert len(split_dataset(list(range(5)), 0.5, seed=0).train) == 3


@pytest.mark.parametrize("ids, ratio", [([], 0.8), ([1, 2], 0.0), ([1, 2], 1.0), ([1, 1], 0.5)])
def test_split_errors(ids, ratio):
    with pytest.raises(ValueError):
        split_dataset(ids, ratio, seed=0)


@given(st.integers(1, 300), st.floats(0.01, 0.99), st.integers(0, 2**32 - 1))
def test_split_is_partition(n, ratio, seed):
    ids = [f"img{i}" for i in range(n)]
    s = split_dataset(ids, ratio, seed)
    assert sorted(s.train + s.val) == sorted(ids)
    assert len(set(s.train + s.val)) == n
    assert len(s.train) == int(ratio * n + 0.5)


CONFIG = """\
train: ../data/images/train
val: ../data/images/val
names: [easy_open_ok, easy_open_fault, contour_ok, contour_fault, label_ok, label_fault]
"""


def test_parse_dataset_config():
    cfg = parse_dataset_config(CONFIG)
    assert len(cfg.class_names) == 6
    assert cfg.class_names.index("easy_open_ok") == 0
    assert cfg.label(0) == ClassLabel(0, "easy_open_ok")
    assert cfg.train_path == "../data/images/train"


def test_parse_dataset_config_mapping_names():
    cfg = parse_dataset_config("train: t\nval: v\nnames:\n  0: good\n  1: easy_open_failure\n")
    assert cfg.class_names == ("good", "easy_open_failure")


@pytest.mark.parametrize(
    "text, message",
    [
        ("train: t\nval: v\n", "names missing"),
        ("val: v\nnames: [a]\n", "train missing"),
        ("train: t\nval: v\nnames: [a, b, a]\n", "duplicate class"),
        ("train: t\nval: v\nnames: []\n", "non-empty"),
    ],
)
def test_parse_dataset_config_errors(text, message):
    with pytest.raises(DatasetConfigError, match=message):
        parse_dataset_config(text)


def test_dataset_config_round_trip():
    cfg = DatasetConfig("train.txt", "val.txt", DEFAULT_CLASS_NAMES)
    assert parse_dataset_config(write_dataset_config(cfg)) == cfg
