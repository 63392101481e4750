"""Inspection events for the IoT side of the line.

Payload schema ``v: 1`` (keys always appear in this order)::

    v     schema version, always 1
    seq   per-line sequence number, strictly increasing from 1
    line  line id
    t     simulated time in seconds (float)
    kind  arrival | capture | detection | verdict | arm_start | arm_done | binned
    can   can id
    data  kind-specific fields, keys sorted; omitted when empty

Encoding is compact JSON with no whitespace, so equal events always encode
to identical bytes. Topics are ``canline/v1/<line_id>/<kind>``. Delivery is
at-least-once; consumers dedupe on ``(line, seq)``.
"""

from __future__ import annotations

import json
import logging
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TOPIC_ROOT = "canline/v1"
EVENT_KINDS = ("arrival", "capture", "detection", "verdict", "arm_start", "arm_done", "binned")
_RESERVED = set("/+#")


class TransportError(RuntimeError):
    pass


@dataclass(frozen=True)
class InspectionEvent:
    seq: int
    line_id: str
    t_sim_s: float
    kind: str
    can_id: int
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind: {self.kind!r}")


def _sorted_keys(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _sorted_keys(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_sorted_keys(v) for v in value]
    return value


def _dumps(obj: Any) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def encode_event(e: InspectionEvent) -> bytes:
    doc = {
        "v": SCHEMA_VERSION,
        "seq": e.seq,
        "line": e.line_id,
        "t": float(e.t_sim_s),
        "kind": e.kind,
        "can": e.can_id,
    }
    if e.payload:
        doc["data"] = _sorted_keys(e.payload)
    return _dumps(doc).encode("utf-8")


def decode_event(raw: bytes | str) -> InspectionEvent:
    doc = json.loads(raw)
    if doc.get("v") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema version: {doc.get('v')!r}")
    return InspectionEvent(
        seq=doc["seq"],
        line_id=doc["line"],
        t_sim_s=doc["t"],
        kind=doc["kind"],
        can_id=doc["can"],
        payload=doc.get("data", {}),
    )


def event_log_line(e: InspectionEvent) -> str:
    """One JSONL record of the simulator's event log."""
    doc = {
        "v": SCHEMA_VERSION,
        "seq": e.seq,
        "t_sim_s": float(e.t_sim_s),
        "kind": e.kind,
        "can_id": e.can_id,
        "line_id": e.line_id,
        "payload": _sorted_keys(e.payload),
    }
    return _dumps(doc)


def parse_event_log_line(line: str) -> InspectionEvent:
    doc = json.loads(line)
    return InspectionEvent(doc["seq"], doc["line_id"], doc["t_sim_s"], doc["kind"], doc["can_id"], doc["payload"])


def topic_for(line_id: str, kind: str) -> str:
    if not line_id or _RESERVED & set(line_id):
        raise ValueError(f"invalid line id {line_id!r}: must be non-empty without '/', '+' or '#'")
    if kind not in EVENT_KINDS:
        raise ValueError(f"unknown event kind: {kind!r}")
    return f"{TOPIC_ROOT}/{line_id}/{kind}"


class Sink:
    """Consumer of encoded events. Subclasses implement :meth:`_send`."""

    def __init__(self):
        self.closed = False
        self.delivered = 0

    def send(self, topic: str, payload: bytes) -> int:
        if self.closed:
            raise TransportError("sink is closed")
        self._send(topic, payload)
        self.delivered += 1
        return self.delivered

    def _send(self, topic: str, payload: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        self.closed = True


class MemorySink(Sink):
    def __init__(self):
        super().__init__()
        self.messages: list[tuple[str, bytes]] = []

    def _send(self, topic, payload):
        self.messages.append((topic, payload))


class FileSink(Sink):
    """Appends ``<topic>\\t<json>\\n`` lines to a file."""

    def __init__(self, path: str | Path):
        super().__init__()
        self.path = Path(path)
        self._fh = open(self.path, "a", encoding="utf-8", newline="\n")

    def _send(self, topic, payload):
        self._fh.write(f"{topic}\t{payload.decode('utf-8')}\n")
        self._fh.flush()

    def close(self):
        if not self.closed:
            self._fh.close()
        super().close()


def read_file_sink(path: str | Path) -> list[tuple[str, InspectionEvent]]:
    out = []
    for line in Path(path).read_text("utf-8").splitlines():
        topic, _, payload = line.partition("\t")
        out.append((topic, decode_event(payload)))
    return out


def publish(sink: Sink, topic: str, payload: bytes) -> int:
    """Hand one message to ``sink``; returns its delivery count.

    Raises :class:`TransportError` when the sink cannot take the message.
    """
    try:
        return sink.send(topic, payload)
    except TransportError:
        raise
    except OSError as e:
        raise TransportError(str(e)) from e


class Publisher:
    """Buffers events that a sink refused and retries them ahead of new ones.

    Transport failures never propagate; they are counted and reported by
    :meth:`summary`.
    """

    def __init__(self, sink: Sink | None):
        self.sink = sink
        self.pending: deque[tuple[str, bytes]] = deque()
        self.published = 0
        self.failures = 0
        self.last_error: str | None = None

    def emit(self, event: InspectionEvent) -> None:
        if self.sink is None:
            return
        self.pending.append((topic_for(event.line_id, event.kind), encode_event(event)))
        self.flush()

    def flush(self) -> None:
        while self.pending:
            topic, payload = self.pending[0]
            try:
                publish(self.sink, topic, payload)
            except TransportError as e:
                self.failures += 1
                self.last_error = str(e)
                if self.failures == 1:
                    log.warning("telemetry delivery failed, buffering: %s", e)
                return
            self.pending.popleft()
            self.published += 1

    def summary(self) -> dict:
        return {
            "published": self.published,
            "failures": self.failures,
            "undelivered": len(self.pending),
            "sink_dropped": bool(self.pending),
            "last_error": self.last_error,
        }
