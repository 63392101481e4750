"""Printed-label text: line assembly, field grammar and verification.

The label grammar lives entirely in this module. A canonical label is three
lines::

    LOT A1B2C3
    EXP 15/08/2025
    PROD 0042

Parsing scans every line for the three tokens, so extra lines or a different
line order are tolerated. Recognized text is normalized (uppercased, runs of
spaces collapsed) before matching, but misread characters are never
corrected.
"""

from __future__ import annotations

import datetime
import re
from dataclasses import dataclass
from typing import Sequence

from canline.geometry import BoundingBox

LABEL_UNREADABLE = "label_unreadable"

LOT_RE = re.compile(r"[A-Z0-9]{6}")
PRODUCT_RE = re.compile(r"[0-9]{4}")
DATE_RE = re.compile(r"([0-9]{2})/([0-9]{2})/([0-9]{4})")

_TOKENS = {"LOT": "lot_code", "EXP": "expiry", "PROD": "product_code"}


class LabelParseError(ValueError):
    def __init__(self, kind: str, field: str):
        self.kind = kind
        self.field = field
        super().__init__(f"field {kind}: {field}")


@dataclass(frozen=True)
class OcrLine:
    text: str
    box: BoundingBox
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence out of range: {self.confidence}")


@dataclass(frozen=True)
class LabelFields:
    lot_code: str
    expiry: datetime.date
    product_code: str

    def __post_init__(self):
        if not LOT_RE.fullmatch(self.lot_code):
            raise ValueError(f"invalid lot code: {self.lot_code!r}")
        if not PRODUCT_RE.fullmatch(self.product_code):
            raise ValueError(f"invalid product code: {self.product_code!r}")


def assemble_lines(lines: Sequence[OcrLine]) -> list[str]:
    """Texts ordered top to bottom, then left to right."""

    def key(line: OcrLine):
        cx, cy = line.box.center
        return (cy, cx)

    return [line.text for line in sorted(lines, key=key)]


def normalize_text(text: str) -> str:
    return " ".join(text.upper().split())


def parse_date(text: str) -> datetime.date:
    """Parse ``DD/MM/YYYY``; raises ValueError for malformed or impossible dates."""
    m = DATE_RE.fullmatch(text)
    if not m:
        raise ValueError(f"not a DD/MM/YYYY date: {text!r}")
    day, month, year = (int(g) for g in m.groups())
    return datetime.date(year, month, day)


def parse_label(lines: Sequence[str]) -> LabelFields:
    found: dict[str, str] = {}
    for raw in lines:
        words = normalize_text(raw).split(" ")
        for keyword, value in zip(words, words[1:]):
            name = _TOKENS.get(keyword)
            if name and name not in found:
                found[name] = value
    for name in _TOKENS.values():
        if name not in found:
            raise LabelParseError("absent", name)

    if not LOT_RE.fullmatch(found["lot_code"]):
        raise LabelParseError("invalid", "lot_code")
    try:
        expiry = parse_date(found["expiry"])
    except ValueError:
        raise LabelParseError("invalid", "expiry") from None
    if not PRODUCT_RE.fullmatch(found["product_code"]):
        raise LabelParseError("invalid", "product_code")
    return LabelFields(found["lot_code"], expiry, found["product_code"])


def render_label(fields: LabelFields) -> str:
    d = fields.expiry
    return f"LOT {fields.lot_code}\nEXP {d.day:02d}/{d.month:02d}/{d.year:04d}\nPROD {fields.product_code}"


def read_label(lines: Sequence[str]) -> LabelFields | None:
    """Parse ``lines``, returning None when the label cannot be read."""
    try:
        return parse_label(lines)
    except LabelParseError:
        return None


def verify_label(fields: LabelFields | None, can) -> list[str]:
    """Reasons the label contributes to a verdict: empty, or ``[label_unreadable]``.

    ``fields`` is None when parsing failed. A successful read that disagrees
    with the can's printed truth (``can.label_text_truth``) also counts as
    unreadable.
    """
    if fields is None:
        return [LABEL_UNREADABLE]
    truth = read_label(can.label_text_truth.splitlines())
    if truth != fields:
        return [LABEL_UNREADABLE]
    return []
