"""Episode traces and their JSON-lines format ``inferno-trace/1``.

The first line is a header ``{"type": "meta", "version": ..., "scenario":
..., "seed": ...}``; every following line is one step record
``{"type": "step", "step": int, "observation": [int], "action": int, ...}``.
Optional step fields: ``free_energy`` and ``weights`` (per particle),
``labels``, ``efe`` (risk, ambiguity, expected_utility, info_gain, total),
``harm`` (per-target harm estimates) and ``first_law`` (First-Law EFE
components). Non-finite floats are written as the strings ``"inf"``,
``"-inf"`` and ``"nan"``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import jsonschema

from inferno.errors import ModelFormatError

TRACE_VERSION = "inferno-trace/1"

_NUM = {"anyOf": [{"type": "number"}, {"enum": ["inf", "-inf", "nan"]}]}
_EFE = {
    "type": "object",
    "properties": {k: _NUM for k in ("risk", "ambiguity", "expected_utility", "info_gain", "total")},
    "required": ["risk", "ambiguity", "total"],
}

META_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"const": "meta"},
        "version": {"const": TRACE_VERSION},
        "scenario": {"type": "string"},
        "seed": {"type": "integer"},
    },
    "required": ["type", "version", "scenario", "seed"],
}

STEP_SCHEMA = {
    "type": "object",
    "properties": {
        "type": {"const": "step"},
        "step": {"type": "integer", "minimum": 0},
        "observation": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "action": {"type": "integer", "minimum": 0},
        "free_energy": {"type": "array", "items": _NUM},
        "weights": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "labels": {"type": "array", "items": {"type": "string"}},
        "efe": _EFE,
        "harm": {"type": "array", "items": {
            "type": "object",
            "properties": {
                "target": {"type": "integer"},
                "point": _NUM,
                "true": _NUM,
                "bins": {"type": "array", "items": _NUM},
                "distribution": {"type": "array", "items": {"type": "number"}},
            },
            "required": ["target", "point"],
        }},
        "first_law": _EFE,
    },
    "required": ["type", "step", "observation", "action"],
}


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if hasattr(x, "item"):
        return _clean(x.item())
    return x


@dataclass
class EpisodeTrace:
    records: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def append(self, record):
        if self.records and record["step"] <= self.records[-1]["step"]:
            raise ValueError("step indices must increase")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def column(self, key):
        return [r[key] for r in self.records]

    def lines(self):
        meta = {"type": "meta", "version": TRACE_VERSION,
                "scenario": str(self.metadata.get("scenario", "")),
                "seed": int(self.metadata.get("seed", 0))}
        meta.update({k: v for k, v in self.metadata.items() if k not in meta})
        out = [json.dumps(_clean(meta), sort_keys=True)]
        out += [json.dumps(_clean({"type": "step", **r}), sort_keys=True) for r in self.records]
        return out

    def write_jsonl(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for line in self.lines():
                fh.write(line + "\n")


def validate_lines(lines):
    """Validate a JSON-lines trace; returns the number of step records.

    Raises :class:`~inferno.errors.ModelFormatError` naming the offending line.
    """
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ModelFormatError("empty trace")
    last = -1
    for i, ln in enumerate(lines):
        try:
            rec = json.loads(ln)
            jsonschema.validate(rec, META_SCHEMA if i == 0 else STEP_SCHEMA)
        except json.JSONDecodeError as exc:
            raise ModelFormatError(f"line {i + 1}: {exc.msg}") from None
        except jsonschema.ValidationError as exc:
            raise ModelFormatError(f"line {i + 1}: {exc.message}") from None
        if i == 0:
            continue
        if rec["step"] <= last:
            raise ModelFormatError(f"line {i + 1}: step indices must increase")
        last = rec["step"]
    return len(lines) - 1


def read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if ln.strip()]
    validate_lines(lines)
    meta = json.loads(lines[0])
    records = []
    for ln in lines[1:]:
        rec = json.loads(ln)
        rec.pop("type")
        records.append(rec)
    meta.pop("type")
    return EpisodeTrace(records, meta)
