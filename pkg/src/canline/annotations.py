"""YOLO annotation files, dataset configs and the train/val split.

Annotation files hold one object per line::

    <class_id> <cx> <cy> <w> <h>

with all four coordinates normalized to the image size. Files are paired
with images by stem (``images/can_000001.png`` <-> ``labels/can_000001.txt``).

Dataset configs are the small YAML documents YOLOv5 reads::

    train: images/train
    val: images/val
    names: [easy_open_ok, easy_open_fault, ...]

``names`` may also be given as an ``{index: name}`` mapping. Class ids are
list positions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Hashable, Iterable, Sequence

import numpy as np
import yaml

from canline.geometry import (
    NORM_TOL,
    ClassLabel,
    NormalizedBox,
    TruthBox,
    normalized_box_problem,
    to_corner_form,
)


class AnnotationError(ValueError):
    def __init__(self, reason: str, line_no: int | None = None):
        self.reason = reason
        self.line_no = line_no
        where = f"line {line_no}: " if line_no is not None else ""
        super().__init__(where + reason)


class DatasetConfigError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class GroundTruthAnnotation:
    label: ClassLabel
    box: NormalizedBox

    def to_pixels(self, img_w: float, img_h: float) -> TruthBox:
        return TruthBox(to_corner_form(self.box, img_w, img_h), self.label)


@dataclass(frozen=True)
class DatasetConfig:
    train_path: str
    val_path: str
    class_names: tuple[str, ...]

    def label(self, class_id: int) -> ClassLabel:
        if not 0 <= class_id < len(self.class_names):
            raise IndexError(f"class id {class_id} not in names list of {len(self.class_names)}")
        return ClassLabel(class_id, self.class_names[class_id])


@dataclass(frozen=True)
class DatasetSplit:
    train: list
    val: list
    ratio: float


def _clamp_unit(v: float) -> float:
    return min(max(v, 0.0), 1.0)


def parse_annotation_line(
    line: str,
    class_names: Sequence[str] | None = None,
    line_no: int | None = None,
) -> GroundTruthAnnotation:
    """Parse ``class_id cx cy w h``.

    When ``class_names`` is given the id is checked against it and the label
    carries the name; otherwise the name is left empty.
    """
    fields = line.split()
    if len(fields) != 5:
        raise AnnotationError(f"expected 5 fields, got {len(fields)}", line_no)
    try:
        class_id = int(fields[0])
    except ValueError:
        raise AnnotationError(f"class id is not an integer: {fields[0]!r}", line_no) from None
    if class_id < 0:
        raise AnnotationError(f"negative class id: {class_id}", line_no)
    try:
        coords = [float(f) for f in fields[1:]]
    except ValueError:
        raise AnnotationError(f"non-numeric coordinate in {fields[1:]}", line_no) from None

    problem = normalized_box_problem(*coords)
    if problem:
        raise AnnotationError(problem, line_no)
    cx, cy, w, h = (_clamp_unit(c) for c in coords)

    if class_names is not None:
        if class_id >= len(class_names):
            raise AnnotationError(
                f"class id {class_id} not in names list of {len(class_names)}", line_no
            )
        label = ClassLabel(class_id, class_names[class_id])
    else:
        label = ClassLabel(class_id, "")
    return GroundTruthAnnotation(label, NormalizedBox(cx, cy, w, h))


def parse_annotation_file(
    text: str, class_names: Sequence[str] | None = None
) -> list[GroundTruthAnnotation]:
    out = []
    for i, line in enumerate(text.splitlines(), start=1):
        if line.strip():
            out.append(parse_annotation_line(line, class_names, line_no=i))
    return out


def format_annotation(a: GroundTruthAnnotation) -> str:
    b = a.box
    return f"{a.label.id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}"


def write_annotation_file(annotations: Iterable[GroundTruthAnnotation]) -> str:
    return "".join(format_annotation(a) + "\n" for a in annotations)


def read_labels_dir(
    labels_dir: str | Path, class_names: Sequence[str]
) -> dict[str, list[GroundTruthAnnotation]]:
    """Load every ``*.txt`` file in a labels folder, keyed by file stem."""
    out = {}
    for path in sorted(Path(labels_dir).glob("*.txt")):
        try:
            out[path.stem] = parse_annotation_file(path.read_text("utf-8"), class_names)
        except AnnotationError as e:
            raise AnnotationError(f"{path.name}: {e.reason}", e.line_no) from None
    return out


def train_count(n: int, ratio: float) -> int:
    # round half up, so 0.5 * 5 gives 3 rather than banker's 2
    return int(math.floor(ratio * n + 0.5))


def split_dataset(item_ids: Sequence[Hashable], ratio: float = 0.8, seed: int = 0) -> DatasetSplit:
    """Shuffle ``item_ids`` under ``seed`` and cut it into train/val parts."""
    items = list(item_ids)
    if not items:
        raise ValueError("cannot split an empty item list")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if len(set(items)) != len(items):
        raise ValueError("item ids must be unique")
    order = np.random.default_rng(seed).permutation(len(items))
    shuffled = [items[i] for i in order]
    k = train_count(len(items), ratio)
    return DatasetSplit(train=shuffled[:k], val=shuffled[k:], ratio=ratio)


def parse_dataset_config(text: str) -> DatasetConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise DatasetConfigError(f"unreadable config: {e}") from None
    if not isinstance(doc, dict):
        raise DatasetConfigError("config must be a key/value document")
    for key in ("train", "val", "names"):
        if doc.get(key) is None:
            raise DatasetConfigError(f"{key} missing")

    names = doc["names"]
    if isinstance(names, dict):
        try:
            keys = sorted(int(k) for k in names)
        except (TypeError, ValueError):
            raise DatasetConfigError("names mapping keys must be integers") from None
        if keys != list(range(len(keys))):
            raise DatasetConfigError("names mapping keys must be 0..n-1")
        names = [names[k] for k in keys]
    if not isinstance(names, list) or not names:
        raise DatasetConfigError("names must be a non-empty list")
    names = [str(n) for n in names]
    seen = set()
    for n in names:
        if n in seen:
            raise DatasetConfigError(f"duplicate class: {n}")
        seen.add(n)
    return DatasetConfig(str(doc["train"]), str(doc["val"]), tuple(names))


def write_dataset_config(config: DatasetConfig) -> str:
    doc = {"train": config.train_path, "val": config.val_path, "names": list(config.class_names)}
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=None)
