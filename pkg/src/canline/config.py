"""Run configuration: one YAML document per simulation run.

Every section is optional and every key inside a section maps one-to-one
onto a dataclass field::

    line:         # LineConfig
      belt_segment_time: 1.0
      conf_threshold: 0.25
      accept_bin_side: right
    detector:     # DetectorProfile
      miss_rate: 0.05
    fault_rates:  # FaultRates
      easy_open: 0.2
    ocr:          # OcrNoiseProfile
      substitution_rate: 0.0
    policy:       # optional override of the name-derived policy
      roles: {easy_open_ok: ok, easy_open_fault: fault, ...}
      features: {easy_open_ok: easy_open, ...}
      required_features: [easy_open, contour, label]
    telemetry:
      sink: file   # file | none
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import yaml

from canline.controller import LineConfig, Policy, PolicyError
from canline.geometry import DEFAULT_CLASS_NAMES
from canline.synthetic import DetectorProfile, FaultRates, OcrNoiseProfile

SINKS = ("file", "none")
_SECTIONS = ("line", "detector", "fault_rates", "ocr", "policy", "telemetry")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    line: LineConfig = field(default_factory=LineConfig)
    detector: DetectorProfile = field(default_factory=DetectorProfile)
    fault_rates: FaultRates = field(default_factory=FaultRates)
    ocr: OcrNoiseProfile = field(default_factory=OcrNoiseProfile)
    policy: Policy | None = None
    sink: str = "file"

    def effective_policy(self) -> Policy:
        if self.policy is not None:
            return self.policy
        return Policy.default(DEFAULT_CLASS_NAMES, self.line.conf_threshold)

    def snapshot(self) -> dict:
        """Plain-data form that :func:`parse_run_config` accepts back."""
        policy = self.effective_policy()
        ocr = {"substitution_rate": self.ocr.substitution_rate, "deletion_rate": self.ocr.deletion_rate,
               "confusables": [list(p) for p in self.ocr.confusables]}
        return {
            "line": dataclasses.asdict(self.line),
            "detector": dataclasses.asdict(self.detector),
            "fault_rates": dataclasses.asdict(self.fault_rates),
            "ocr": ocr,
            "policy": {
                "roles": dict(policy.roles),
                "features": dict(policy.features),
                "required_features": list(policy.required_features),
            },
            "telemetry": {"sink": self.sink},
        }


def _build(cls, section: str, values):
    if values is None:
        return cls()
    if not isinstance(values, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{section}: {e}") from None


def parse_run_config(text: str) -> RunConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"unreadable config: {e}") from None
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a key/value document")
    unknown = sorted(set(doc) - set(_SECTIONS))
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(unknown)}")

    line = _build(LineConfig, "line", doc.get("line"))
    detector = _build(DetectorProfile, "detector", doc.get("detector"))
    fault_rates = _build(FaultRates, "fault_rates", doc.get("fault_rates"))
    ocr_doc = dict(doc.get("ocr") or {})
    if "confusables" in ocr_doc:
        ocr_doc["confusables"] = tuple(tuple(p) for p in ocr_doc["confusables"])
    ocr = _build(OcrNoiseProfile, "ocr", ocr_doc)

    policy = None
    if doc.get("policy") is not None:
        p = doc["policy"]
        if not isinstance(p, dict) or "roles" not in p:
            raise ConfigError("policy needs a roles mapping")
        unknown = sorted(set(p) - {"roles", "features", "required_features"})
        if unknown:
            raise ConfigError(f"unknown key(s) in policy: {', '.join(unknown)}")
        try:
            policy = Policy(
                roles=dict(p["roles"]),
                features=dict(p.get("features") or {}),
                threshold=line.conf_threshold,
                required_features=tuple(p.get("required_features") or ()),
            )
        except PolicyError as e:
            raise ConfigError(f"policy: {e}") from None
        missing = [n for n in DEFAULT_CLASS_NAMES if n not in policy.roles]
        if missing:
            raise ConfigError(f"policy has no role for: {', '.join(missing)}")

    telemetry = doc.get("telemetry") or {}
    sink = telemetry.get("sink", "file")
    if sink not in SINKS:
        raise ConfigError(f"telemetry sink must be one of {SINKS}, got {sink!r}")
    return RunConfig(line, detector, fault_rates, ocr, policy, sink)
