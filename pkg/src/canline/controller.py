"""Discrete-event model of the inspection line.

The belt is indexed: each advance takes ``belt_segment_time`` and moves every
can one station along ``infeed -> camera -> arm -> bin``. While the belt is
halted the camera station inspects its can instantly and the arm station runs
the full pick-and-place sequence; the belt only moves again once the arm is
idle. All times are simulated seconds derived from :class:`LineConfig`.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import asdict, dataclass, field, replace
from typing import Mapping, Sequence

from canline.geometry import DEFAULT_CLASS_NAMES, Detection
from canline.labels import assemble_lines, read_label, verify_label
from canline.synthetic import (
    STREAM_CAN,
    STREAM_DETECT,
    STREAM_OCR,
    CanInstance,
    DetectorProfile,
    FaultRates,
    OcrNoiseProfile,
    generate_can,
    mock_detect,
    mock_read_text,
    substream,
)
from canline.telemetry import InspectionEvent, Publisher, Sink

ACCEPT, REJECT = "accept", "reject"
ROLES = ("ok", "fault", "ignore")
SERVOS = ("base", "shoulder", "elbow", "wrist_pitch", "wrist_roll", "gripper")
HOME_ANGLE = 90.0
BASE_ANGLE = {"right": 0.0, "left": 180.0}


class PolicyError(ValueError):
    pass


# --- sensors ---------------------------------------------------------------


@dataclass(frozen=True)
class SensorState:
    """Active-low photoelectric sensor: output drops LOW while an object is present."""

    detecting: bool = False

    @property
    def output_level(self) -> str:
        return "LOW" if self.detecting else "HIGH"


def sensor_edge(present: bool, previous: SensorState) -> tuple[SensorState, bool]:
    """New sensor state and whether this sample is a HIGH -> LOW trigger."""
    state = SensorState(bool(present))
    return state, previous.output_level == "HIGH" and state.output_level == "LOW"


# --- arm -------------------------------------------------------------------


@dataclass(frozen=True)
class ServoState:
    base: float = HOME_ANGLE
    shoulder: float = HOME_ANGLE
    elbow: float = HOME_ANGLE
    wrist_pitch: float = HOME_ANGLE
    wrist_roll: float = HOME_ANGLE
    gripper: float = HOME_ANGLE

    def __post_init__(self):
        for name in SERVOS:
            angle = getattr(self, name)
            if not 0.0 <= angle <= 180.0:
                raise ValueError(f"{name} angle {angle} outside [0, 180]")

    def with_angle(self, servo: str, angle: float) -> ServoState:
        if servo not in SERVOS:
            raise ValueError(f"unknown servo: {servo!r}")
        return replace(self, **{servo: angle})

    @property
    def is_home(self) -> bool:
        return all(getattr(self, s) == HOME_ANGLE for s in SERVOS)


HOME = ServoState()


@dataclass(frozen=True)
class ArmCommand:
    kind: str
    servo: str | None = None
    angle: float | None = None
    duration: float | None = None

    def __post_init__(self):
        if self.kind == "move":
            if self.servo not in SERVOS:
                raise ValueError(f"unknown servo: {self.servo!r}")
            if self.angle is None or not 0.0 <= self.angle <= 180.0:
                raise ValueError(f"move target {self.angle} outside [0, 180]")
        elif self.kind == "dwell":
            if self.duration is None or self.duration < 0:
                raise ValueError("dwell needs a non-negative duration")
        elif self.kind not in ("suction_on", "suction_off"):
            raise ValueError(f"unknown arm command: {self.kind!r}")

    @classmethod
    def move(cls, servo: str, angle: float) -> ArmCommand:
        return cls("move", servo=servo, angle=float(angle))

    @classmethod
    def dwell(cls, seconds: float) -> ArmCommand:
        return cls("dwell", duration=float(seconds))


SUCTION_ON = ArmCommand("suction_on")
SUCTION_OFF = ArmCommand("suction_off")


@dataclass(frozen=True)
class LineConfig:
    belt_segment_time: float = 1.0
    conf_threshold: float = 0.25
    accept_bin_side: str = "right"
    servo_speed: float = 180.0  # degrees per second
    suction_dwell: float = 0.3
    arrival_spacing: float = 2.0
    pick_shoulder_angle: float = 180.0
    verify_label: bool = True
    line_id: str = "L1"

    def __post_init__(self):
        for name in ("belt_segment_time", "servo_speed", "suction_dwell", "arrival_spacing"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not 0.0 < self.conf_threshold < 1.0:
            raise ValueError("conf_threshold must be in (0, 1)")
        if self.accept_bin_side not in BASE_ANGLE:
            raise ValueError("accept_bin_side must be 'left' or 'right'")
        if not 0.0 <= self.pick_shoulder_angle <= 180.0:
            raise ValueError("pick_shoulder_angle must be in [0, 180]")

    def bin_side(self, decision: str) -> str:
        if decision == ACCEPT:
            return self.accept_bin_side
        return "left" if self.accept_bin_side == "right" else "right"


@dataclass(frozen=True)
class InspectionVerdict:
    can_id: int
    decision: str
    reasons: tuple[str, ...] = ()
    detections: tuple[Detection, ...] = ()

    def __post_init__(self):
        if self.decision not in (ACCEPT, REJECT):
            raise ValueError(f"unknown decision: {self.decision!r}")
        if (self.decision == REJECT) != bool(self.reasons):
            raise ValueError("a verdict rejects exactly when it has reasons")

    def with_extra_reasons(self, extra: Sequence[str]) -> InspectionVerdict:
        reasons = self.reasons + tuple(r for r in extra if r not in self.reasons)
        return replace(self, decision=REJECT if reasons else ACCEPT, reasons=reasons)


def plan_arm_sequence(verdict: InspectionVerdict, config: LineConfig) -> list[ArmCommand]:
    """Pick from the arm station, drop in the verdict's bin, return home."""
    target = BASE_ANGLE[config.bin_side(verdict.decision)]
    lower = ArmCommand.move("shoulder", config.pick_shoulder_angle)
    lift = ArmCommand.move("shoulder", HOME_ANGLE)
    return [
        lower,
        SUCTION_ON,
        ArmCommand.dwell(config.suction_dwell),
        lift,
        ArmCommand.move("base", target),
        lower,
        SUCTION_OFF,
        ArmCommand.dwell(config.suction_dwell),
        lift,
        ArmCommand.move("base", HOME_ANGLE),
        *(ArmCommand.move(s, HOME_ANGLE) for s in SERVOS),
    ]


def replay(commands: Sequence[ArmCommand], start: ServoState = HOME) -> list[ServoState]:
    """Pose after each command, starting from ``start``."""
    pose, poses = start, []
    for c in commands:
        if c.kind == "move":
            pose = pose.with_angle(c.servo, c.angle)
        poses.append(pose)
    return poses


def sequence_duration(commands: Sequence[ArmCommand], config: LineConfig, start: ServoState = HOME) -> float:
    """Moves take |delta angle| / servo_speed, dwells their duration, suction toggles 0."""
    pose, total = start, 0.0
    for c in commands:
        if c.kind == "move":
            total += abs(c.angle - getattr(pose, c.servo)) / config.servo_speed
            pose = pose.with_angle(c.servo, c.angle)
        elif c.kind == "dwell":
            total += c.duration
    return total


# --- decisions -------------------------------------------------------------


@dataclass(frozen=True)
class Policy:
    """Maps every class name to a role and, for ok/fault classes, a feature."""

    roles: Mapping[str, str]
    features: Mapping[str, str]
    threshold: float = 0.25
    required_features: tuple[str, ...] = ("easy_open", "contour", "label")

    def __post_init__(self):
        for name, role in self.roles.items():
            if role not in ROLES:
                raise PolicyError(f"class {name!r} has unknown role {role!r}")
        if not 0.0 < self.threshold < 1.0:
            raise PolicyError("threshold must be in (0, 1)")

    @classmethod
    def default(cls, class_names: Sequence[str] = DEFAULT_CLASS_NAMES, threshold: float = 0.25) -> Policy:
        """Roles and features from ``<feature>_ok`` / ``<feature>_fault`` names."""
        roles, features = {}, {}
        for name in class_names:
            for role in ("ok", "fault"):
                if name.endswith("_" + role):
                    roles[name] = role
                    features[name] = name[: -len(role) - 1]
                    break
            else:
                roles[name] = "ignore"
        required = tuple(dict.fromkeys(features.values()))
        return cls(roles, features, threshold, required)


def decide(dets: Sequence[Detection], policy: Policy, can_id: int = 0) -> InspectionVerdict:
    confident = []
    for d in dets:
        if d.label.name not in policy.roles:
            raise PolicyError(f"detection class {d.label.name!r} is not in the policy")
        if d.confidence >= policy.threshold:
            confident.append(d)
    seen = {d.label.name for d in confident}
    # fault reasons in class-id order, independent of how the policy was written
    faults = {(d.label.id, d.label.name) for d in confident if policy.roles[d.label.name] == "fault"}
    reasons = [name for _, name in sorted(faults)]
    covered = {policy.features.get(n) for n in seen if policy.roles[n] != "ignore"}
    reasons += [f"missing:{f}" for f in policy.required_features if f not in covered]
    return InspectionVerdict(can_id, REJECT if reasons else ACCEPT, tuple(reasons), tuple(dets))


# --- simulation ------------------------------------------------------------


@dataclass
class BinCounts:
    left: int = 0
    right: int = 0
    accepted: int = 0
    rejected: int = 0


@dataclass
class SimulationResult:
    events: list[InspectionEvent]
    bins: BinCounts
    cans: dict[int, CanInstance]
    detections: dict[int, list[Detection]]
    verdicts: dict[int, InspectionVerdict]
    belt_intervals: list[tuple[float, float]]
    arm_intervals: list[tuple[float, float]]
    sensor_triggers: dict[str, int]
    end_time: float
    telemetry: dict = field(default_factory=dict)

    def confusion(self) -> dict[str, int]:
        """Verdicts against ground truth; "positive" means the can is faulty."""
        out = {"true_reject": 0, "false_reject": 0, "true_accept": 0, "false_accept": 0}
        for can_id, v in self.verdicts.items():
            faulty = self.cans[can_id].faulty
            if v.decision == REJECT:
                out["true_reject" if faulty else "false_reject"] += 1
            else:
                out["false_accept" if faulty else "true_accept"] += 1
        return out

    def summary(self) -> dict:
        n = len(self.verdicts)
        return {
            "n_cans": n,
            "bins": asdict(self.bins),
            "verdicts": n,
            "confusion": self.confusion(),
            "sim_time_s": self.end_time,
            "throughput_cpm": 60.0 * n / self.end_time if self.end_time > 0 else 0.0,
            "telemetry": self.telemetry,
        }


def _detection_record(d: Detection) -> dict:
    return {"class": d.label.name, "conf": float(d.confidence), "box": [float(v) for v in d.box.as_list()]}


class _Line:
    # event priorities at equal times: belt stop before arm completion before arrival
    ADVANCE_DONE, ARM_DONE, ARRIVE = 0, 1, 2

    def __init__(self, config, profile, fault_rates, seed, ocr_profile, policy, publisher):
        self.config = config
        self.profile = profile
        self.fault_rates = fault_rates
        self.seed = seed
        self.ocr_profile = ocr_profile
        self.policy = policy
        self.publisher = publisher

        self.queue: list = []
        self.order = 0
        self.infeed: deque[CanInstance] = deque()
        self.slots: dict[str, CanInstance | None] = {"entry": None, "camera": None, "arm": None}
        self.sensors = {"camera": SensorState(), "arm": SensorState()}
        self.belt_moving = False
        self.arm_busy = False

        self.events: list[InspectionEvent] = []
        self.bins = BinCounts()
        self.cans: dict[int, CanInstance] = {}
        self.detections: dict[int, list[Detection]] = {}
        self.verdicts: dict[int, InspectionVerdict] = {}
        self.belt_intervals: list[tuple[float, float]] = []
        self.arm_intervals: list[tuple[float, float]] = []
        self.triggers = {"camera": 0, "arm": 0}
        self.now = 0.0

    def schedule(self, t: float, priority: int, action: str, can_id: int = 0) -> None:
        self.order += 1
        heapq.heappush(self.queue, (t, priority, self.order, action, can_id))

    def emit(self, kind: str, can_id: int, payload: dict | None = None) -> None:
        e = InspectionEvent(len(self.events) + 1, self.config.line_id, self.now, kind, can_id, payload or {})
        self.events.append(e)
        self.publisher.emit(e)

    def run(self, n_cans: int) -> None:
        for i in range(n_cans):
            self.schedule(i * self.config.arrival_spacing, self.ARRIVE, "arrive", i + 1)
        while self.queue:
            t, _, _, action, can_id = heapq.heappop(self.queue)
            self.now = t
            getattr(self, "_on_" + action)(can_id)

    def _sense(self, station: str, present: bool) -> bool:
        self.sensors[station], fired = sensor_edge(present, self.sensors[station])
        self.triggers[station] += fired
        return fired

    def _on_arrive(self, can_id: int) -> None:
        can = generate_can(can_id, self.fault_rates, substream(self.seed, can_id, STREAM_CAN))
        self.cans[can_id] = can
        self.infeed.append(can)
        self.emit("arrival", can_id)
        self._try_advance()

    def _try_advance(self) -> None:
        if self.belt_moving or self.arm_busy:
            return
        if self.slots["entry"] is None and self.infeed:
            self.slots["entry"] = self.infeed.popleft()
        if self.slots["entry"] is None and self.slots["camera"] is None:
            return
        self.belt_moving = True
        for station in ("camera", "arm"):
            self._sense(station, False)
        self.belt_intervals.append((self.now, self.now + self.config.belt_segment_time))
        self.schedule(self.now + self.config.belt_segment_time, self.ADVANCE_DONE, "advance_done")

    def _on_advance_done(self, _can_id: int) -> None:
        self.belt_moving = False
        s = self.slots
        s["arm"], s["camera"], s["entry"] = s["camera"], s["entry"], None
        if s["camera"] is not None and self._sense("camera", True):
            self._inspect(s["camera"])
        if s["arm"] is not None and self._sense("arm", True):
            self._start_arm(s["arm"])
        else:
            self._try_advance()

    def _inspect(self, can: CanInstance) -> None:
        self.emit("capture", can.can_id, {"station": "camera"})
        dets = mock_detect(can, self.profile, substream(self.seed, can.can_id, STREAM_DETECT))
        self.detections[can.can_id] = dets
        self.emit("detection", can.can_id, {"detections": [_detection_record(d) for d in dets]})

        verdict = decide(dets, self.policy, can.can_id)
        label_read = None
        if self.config.verify_label:
            printed = "" if can.label_fault else can.label_text_truth
            lines = mock_read_text(printed, self.ocr_profile, substream(self.seed, can.can_id, STREAM_OCR))
            fields = read_label(assemble_lines(lines))
            label_read = fields is not None
            verdict = verdict.with_extra_reasons(verify_label(fields, can))
        self.verdicts[can.can_id] = verdict

        max_conf: dict[str, float] = {}
        for d in dets:
            max_conf[d.label.name] = max(max_conf.get(d.label.name, 0.0), float(d.confidence))
        payload = {"decision": verdict.decision, "reasons": list(verdict.reasons), "max_conf": max_conf}
        if label_read is not None:
            payload["label_read"] = label_read
        self.emit("verdict", can.can_id, payload)

    def _start_arm(self, can: CanInstance) -> None:
        verdict = self.verdicts[can.can_id]
        commands = plan_arm_sequence(verdict, self.config)
        duration = sequence_duration(commands, self.config)
        side = self.config.bin_side(verdict.decision)
        self.arm_busy = True
        self.arm_intervals.append((self.now, self.now + duration))
        self.emit("arm_start", can.can_id, {"bin": side, "commands": len(commands), "duration_s": duration})
        self.schedule(self.now + duration, self.ARM_DONE, "arm_done", can.can_id)

    def _on_arm_done(self, can_id: int) -> None:
        verdict = self.verdicts[can_id]
        side = self.config.bin_side(verdict.decision)
        self.emit("arm_done", can_id, {"pose": "home"})
        if verdict.decision == ACCEPT:
            self.bins.accepted += 1
        else:
            self.bins.rejected += 1
        setattr(self.bins, side, getattr(self.bins, side) + 1)
        self.emit("binned", can_id, {"bin": side, "decision": verdict.decision})
        self.slots["arm"] = None
        self.arm_busy = False
        self._try_advance()


def run_simulation(
    line_config: LineConfig,
    detector_profile: DetectorProfile,
    fault_rates: FaultRates,
    n_cans: int,
    seed: int,
    ocr_profile: OcrNoiseProfile | None = None,
    policy: Policy | None = None,
    sink: Sink | None = None,
) -> SimulationResult:
    if n_cans < 0:
        raise ValueError("n_cans must be >= 0")
    if policy is None:
        policy = Policy.default(DEFAULT_CLASS_NAMES, line_config.conf_threshold)
    publisher = Publisher(sink)
    line = _Line(
        line_config,
        detector_profile,
        fault_rates,
        seed,
        ocr_profile or OcrNoiseProfile(),
        policy,
        publisher,
    )
    line.run(n_cans)
    publisher.flush()
    return SimulationResult(
        events=line.events,
        bins=line.bins,
        cans=line.cans,
        detections=line.detections,
        verdicts=line.verdicts,
        belt_intervals=line.belt_intervals,
        arm_intervals=line.arm_intervals,
        sensor_triggers=line.triggers,
        end_time=line.now,
        telemetry=publisher.summary() if sink is not None else {},
    )
