"""Synthetic cans plus stand-ins for the trained detector and the OCR reader.

Every random draw comes from a numpy ``Generator`` handed in by the caller.
:func:`substream` derives an independent generator per ``(seed, can_id,
purpose)``, so cans can be produced in any order (or in parallel) and still
come out identical.
"""

from __future__ import annotations

import datetime
import string
from dataclasses import dataclass, field

import numpy as np

from canline.annotations import GroundTruthAnnotation
from canline.geometry import (
    DEFAULT_CLASS_NAMES,
    BoundingBox,
    Detection,
    TruthBox,
    class_labels,
    clip_box,
    to_normalized,
)
from canline.labels import LabelFields, OcrLine, render_label
from canline.metrics import nms

FRAME_SIZE = 640
FEATURES = ("easy_open", "contour", "label")

# purposes for substream()
STREAM_CAN, STREAM_DETECT, STREAM_OCR = 0, 1, 2

# spurious boxes stay far smaller than any feature box, so they can
# neither match a truth nor suppress a real detection
SPURIOUS_SIDE = (16.0, 40.0)
CAN_RADIUS = (220.0, 300.0)

LOT_ALPHABET = string.ascii_uppercase + string.digits
EXPIRY_RANGE = (datetime.date(2025, 1, 1), datetime.date(2030, 12, 31))

DEFAULT_CONFUSABLES = (("O", "0"), ("I", "1"), ("S", "5"), ("B", "8"))


def substream(seed: int, can_id: int, purpose: int) -> np.random.Generator:
    return np.random.default_rng([seed, can_id, purpose])


def class_name(feature: str, fault: bool) -> str:
    return f"{feature}_{'fault' if fault else 'ok'}"


def _check_rate(name: str, v: float) -> None:
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {v}")


@dataclass(frozen=True)
class FaultRates:
    easy_open: float = 0.2
    contour: float = 0.2
    label: float = 0.2

    def __post_init__(self):
        for f in FEATURES:
            _check_rate(f"{f} fault rate", getattr(self, f))

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.easy_open, self.contour, self.label)


@dataclass(frozen=True)
class CanInstance:
    can_id: int
    easy_open_fault: bool
    contour_fault: bool
    label_fault: bool
    truth_boxes: tuple[GroundTruthAnnotation, ...]
    label_text_truth: str

    @property
    def faulty(self) -> bool:
        return self.easy_open_fault or self.contour_fault or self.label_fault

    def fault_classes(self) -> list[str]:
        return [class_name(f, True) for f in FEATURES if getattr(self, f"{f}_fault")]

    def truth_pixels(self, img_w: float = FRAME_SIZE, img_h: float = FRAME_SIZE) -> list[TruthBox]:
        return [a.to_pixels(img_w, img_h) for a in self.truth_boxes]

    def manifest_record(self) -> dict:
        return {
            "can_id": self.can_id,
            "easy_open_fault": self.easy_open_fault,
            "contour_fault": self.contour_fault,
            "label_fault": self.label_fault,
            "label_text_truth": self.label_text_truth,
        }


@dataclass(frozen=True)
class DetectorProfile:
    miss_rate: float = 0.05
    false_positive_rate: float = 0.1
    confusion_rate: float = 0.02
    localization_jitter: float = 0.02
    tp_conf_mean: float = 0.93
    tp_conf_spread: float = 0.05
    fp_conf_mean: float = 0.45
    fp_conf_spread: float = 0.15
    nms_iou: float = 0.45

    def __post_init__(self):
        _check_rate("miss_rate", self.miss_rate)
        _check_rate("confusion_rate", self.confusion_rate)
        _check_rate("tp_conf_mean", self.tp_conf_mean)
        _check_rate("fp_conf_mean", self.fp_conf_mean)
        for name in ("false_positive_rate", "localization_jitter", "tp_conf_spread", "fp_conf_spread"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 < self.nms_iou < 1.0:
            raise ValueError("nms_iou must be in (0, 1)")

    @classmethod
    def perfect(cls) -> DetectorProfile:
        return cls(
            miss_rate=0.0,
            false_positive_rate=0.0,
            confusion_rate=0.0,
            localization_jitter=0.0,
            tp_conf_mean=1.0,
            tp_conf_spread=0.0,
        )


@dataclass(frozen=True)
class OcrNoiseProfile:
    substitution_rate: float = 0.0
    deletion_rate: float = 0.0
    confusables: tuple[tuple[str, str], ...] = DEFAULT_CONFUSABLES
    _swap: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        _check_rate("substitution_rate", self.substitution_rate)
        _check_rate("deletion_rate", self.deletion_rate)
        swap = {}
        for a, b in self.confusables:
            swap[a], swap[b] = b, a
        object.__setattr__(self, "_swap", swap)

    def swap(self, ch: str) -> str | None:
        return self._swap.get(ch)


def _feature_boxes(rng: np.random.Generator) -> dict[str, BoundingBox]:
    r = rng.uniform(*CAN_RADIUS)
    cx = rng.uniform(r, FRAME_SIZE - r)
    cy = rng.uniform(r, FRAME_SIZE - r)

    def box(x, y, w, h):
        return BoundingBox(x - w / 2, y - h / 2, x + w / 2, y + h / 2)

    return {
        "easy_open": box(cx, cy - 0.45 * r, 0.5 * r, 0.3 * r),
        "contour": box(cx, cy, 2 * r, 2 * r),
        "label": box(cx, cy + 0.4 * r, r, 0.35 * r),
    }


def random_label_fields(rng: np.random.Generator) -> LabelFields:
    lot = "".join(LOT_ALPHABET[i] for i in rng.integers(0, len(LOT_ALPHABET), 6))
    start, end = EXPIRY_RANGE
    expiry = start + datetime.timedelta(days=int(rng.integers(0, (end - start).days + 1)))
    product = f"{int(rng.integers(0, 10000)):04d}"
    return LabelFields(lot, expiry, product)


def generate_can(can_id: int, fault_rates: FaultRates, rng: np.random.Generator) -> CanInstance:
    flags = [bool(rng.random() < p) for p in fault_rates.as_tuple()]
    labels = class_labels(DEFAULT_CLASS_NAMES)
    boxes = _feature_boxes(rng)
    truth = tuple(
        GroundTruthAnnotation(
            labels[class_name(feature, fault)],
            to_normalized(boxes[feature], FRAME_SIZE, FRAME_SIZE),
        )
        for feature, fault in zip(FEATURES, flags)
    )
    text = render_label(random_label_fields(rng))
    return CanInstance(can_id, *flags, truth_boxes=truth, label_text_truth=text)


def _flip_variant(name: str) -> str:
    if name.endswith("_fault"):
        return name[: -len("_fault")] + "_ok"
    if name.endswith("_ok"):
        return name[: -len("_ok")] + "_fault"
    return name


def _confidence(rng: np.random.Generator, mean: float, spread: float) -> float:
    return float(np.clip(rng.normal(mean, spread), 0.0, 1.0)) if spread > 0 else mean


def mock_detect(
    can: CanInstance,
    profile: DetectorProfile,
    rng: np.random.Generator,
    class_names=DEFAULT_CLASS_NAMES,
) -> list[Detection]:
    """Imitate a trained detector's output for ``can`` under ``profile``."""
    labels = class_labels(class_names)
    dets = []
    for truth in can.truth_pixels():
        if rng.random() < profile.miss_rate:
            continue
        name = truth.label.name
        if rng.random() < profile.confusion_rate:
            name = _flip_variant(name)
        b = truth.box
        if profile.localization_jitter > 0:
            scale = profile.localization_jitter * np.array([b.width, b.height, b.width, b.height])
            x0, y0, x1, y1 = np.array(b.as_list()) + rng.normal(0.0, 1.0, 4) * scale
            b = clip_box(
                BoundingBox(float(min(x0, x1)), float(min(y0, y1)), float(max(x0, x1)), float(max(y0, y1))),
                FRAME_SIZE,
                FRAME_SIZE,
            )
        conf = _confidence(rng, profile.tp_conf_mean, profile.tp_conf_spread)
        dets.append(Detection(b, labels[name], conf))

    for _ in range(int(rng.poisson(profile.false_positive_rate))):
        w, h = rng.uniform(*SPURIOUS_SIDE, 2)
        x = rng.uniform(0, FRAME_SIZE - w)
        y = rng.uniform(0, FRAME_SIZE - h)
        name = class_names[int(rng.integers(0, len(class_names)))]
        conf = _confidence(rng, profile.fp_conf_mean, profile.fp_conf_spread)
        dets.append(Detection(BoundingBox(float(x), float(y), float(x + w), float(y + h)), labels[name], conf))

    return nms(dets, profile.nms_iou)


LINE_ORIGIN = (40.0, 40.0)
LINE_HEIGHT = 36.0
CHAR_WIDTH = 18.0


def mock_read_text(truth: str, profile: OcrNoiseProfile, rng: np.random.Generator) -> list[OcrLine]:
    """Imitate an OCR pass over a label whose printed text is ``truth``."""
    out = []
    x0, y0 = LINE_ORIGIN
    for i, line in enumerate(truth.splitlines()):
        chars, errors = [], 0
        for ch in line:
            if rng.random() < profile.deletion_rate:
                errors += 1
                continue
            other = profile.swap(ch)
            if other is not None and rng.random() < profile.substitution_rate:
                chars.append(other)
                errors += 1
            else:
                chars.append(ch)
        text = "".join(chars)
        top = y0 + i * LINE_HEIGHT
        box = BoundingBox(x0, top, x0 + CHAR_WIDTH * len(text), top + LINE_HEIGHT * 0.8)
        confidence = max(0.0, 1.0 - errors / len(line)) if line else 1.0
        out.append(OcrLine(text, box, confidence))
    return out
