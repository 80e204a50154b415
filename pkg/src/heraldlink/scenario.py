"""Plain-text scenario files for the command line tools.

A scenario file is INI-style with dotted subsections.  It declares a
format version, optionally starts from a bundled preset, and overrides
any subset of the link, lock, protocol, and analysis parameters:

    [scenario]
    format_version = 1
    preset = 420km

    [protocol]
    seed = 7
    n_trials_per_theta = 4000

    [link.detector_d1]
    efficiency = 0.55

Sections map onto the configuration dataclasses: [link] holds the flat
LinkParams fields, [link.arm_a] / [link.arm_b] (plus numbered
[link.arm_a.2] and so on) define fiber segments, [link.detector_d1] /
[link.detector_d2] the herald detectors, [lock] the stabilization loop,
[protocol] the trial engine, and [analysis] the read-out visibility
inputs (mismatch, coherence time, interference efficiencies).

Detector and lock sections override individual fields of the base
configuration.  Arm sections replace the whole segment list for that
arm, so each listed segment must carry length_km and
attenuation_db_per_km.

Unknown sections or keys fail with the offending line; every value is
type-checked and range-checked before a Scenario is built, so a parsed
file is runnable as-is.
"""

from __future__ import annotations

import dataclasses
import os
import re
from dataclasses import dataclass, replace

from .budget import DetectorParams, FiberSegment, LinkParams
from .errors import ParameterError, ScenarioFormatError
from .phaselock import LockLoopConfig
from .presets import get_preset
from .protocol import Scenario

FORMAT_VERSIONS = ("1",)

_SECTION_RE = re.compile(r"^\[([^\]]+)\]\s*(?:[#;].*)?$")
_KEY_RE = re.compile(r"^\s*([^=\s][^=]*?)\s*=\s*(.*?)\s*(?:\s[#;].*)?$")
_ARM_RE = re.compile(r"^link\.arm_([ab])(?:\.([0-9]+))?$")

# Scenario fields split across two sections: the trial engine knobs in
# [protocol], the read-out visibility inputs in [analysis]
_ANALYSIS_FIELDS = ("delta_t_s", "tau_s", "eta_wo", "eta_ro")


def _field_types(cls, exclude=()) -> dict:
    out = {}
    for f in dataclasses.fields(cls):
        if f.name in exclude:
            continue
        out[f.name] = f.type if isinstance(f.type, str) else f.type.__name__
    return out


_LINK_TYPES = _field_types(
    LinkParams, exclude=("segments_a", "segments_b", "detector_d1", "detector_d2"))
_SEGMENT_TYPES = _field_types(FiberSegment)
_DETECTOR_TYPES = _field_types(DetectorParams)
_LOCK_TYPES = _field_types(LockLoopConfig)
_SCENARIO_TYPES = _field_types(Scenario, exclude=("link", "lock", "label"))
_PROTOCOL_TYPES = {k: v for k, v in _SCENARIO_TYPES.items() if k not in _ANALYSIS_FIELDS}
_PROTOCOL_TYPES["theta_list"] = "float list"
_ANALYSIS_TYPES = {k: _SCENARIO_TYPES[k] for k in _ANALYSIS_FIELDS}
_HEADER_TYPES = {"format_version": "str", "preset": "str", "label": "str"}


@dataclass(frozen=True)
class ScenarioFile:
    """A parsed scenario file: provenance plus the resolved configuration."""
    format_version: str
    preset_name: str | None
    scenario: Scenario
    path: str = ""

    def echo(self) -> dict:
        """Key-value tree of every resolved parameter, defaults included."""
        return {
            "format_version": self.format_version,
            "preset": self.preset_name,
            "scenario": scenario_echo(self.scenario),
        }


def scenario_echo(sc: Scenario) -> dict:
    d = dataclasses.asdict(sc)
    d["theta_list"] = [float(t) for t in sc.theta_list]
    return d


def from_preset(name: str) -> ScenarioFile:
    """Wrap a bundled preset as if it had been read from a file."""
    try:
        sc = get_preset(name)
    except ParameterError as exc:
        raise ScenarioFormatError(str(exc)) from None
    return ScenarioFile(FORMAT_VERSIONS[-1], name, sc)


def _fail(path, line, field, msg):
    loc = path or "<scenario>"
    if line is not None:
        loc = f"{loc}:{line}"
    text = f"{loc}: {field}: {msg}" if field else f"{loc}: {msg}"
    err = ScenarioFormatError(text)
    err.path = path
    err.line = line
    err.field = field
    raise err


def _convert(text, typ, path, line, field):
    try:
        if typ == "float":
            return float(text)
        if typ == "int":
            return int(text, 0)
        if typ == "float list":
            parts = [p for p in re.split(r"[,\s]+", text.strip()) if p]
            if not parts:
                raise ValueError("empty list")
            return tuple(float(p) for p in parts)
    except ValueError:
        _fail(path, line, field, f"expected {typ}, got {text!r}")
    return text


class _RawFile:
    """Sections, keys, and source lines of one INI-style file."""

    def __init__(self, text: str, path: str):
        self.path = path
        self.sections: dict = {}    # name -> {key: (value, line)}
        self.section_line: dict = {}
        current = None
        for lineno, raw in enumerate(text.splitlines(), start=1):
            stripped = raw.strip()
            if not stripped or stripped.startswith(("#", ";")):
                continue
            m = _SECTION_RE.match(stripped)
            if m:
                name = m.group(1).strip()
                if name in self.sections:
                    _fail(path, lineno, None, f"duplicate section [{name}]")
                current = self.sections.setdefault(name, {})
                self.section_line[name] = lineno
                continue
            m = _KEY_RE.match(raw)
            if m is None:
                _fail(path, lineno, None, f"cannot parse line: {stripped!r}")
            if current is None:
                _fail(path, lineno, None,
                      f"key outside any section: {m.group(1)!r}")
            key = m.group(1).lower()
            if key in current:
                _fail(path, lineno, key, "duplicate key")
            current[key] = (m.group(2), lineno)

    def take(self, name: str, types: dict) -> dict:
        """Consume one section, returning converted values keyed by field."""
        raw = self.sections.pop(name, None)
        if raw is None:
            return {}
        out = {}
        for key, (text, lineno) in raw.items():
            if key not in types:
                _fail(self.path, lineno, key,
                      f"unknown key in [{name}] (expected one of: "
                      f"{', '.join(sorted(types))})")
            out[key] = _convert(text, types[key], self.path, lineno, key)
        return out


def _key_line(raw_keys: dict, section: str, kwargs: dict, exc_msg: str, fallback):
    """Best-effort source line for a constructor error: the line of the
    overridden field the message names, else the section header."""
    sec = raw_keys.get(section, {})
    for key in kwargs:
        if key in exc_msg and key in sec:
            return sec[key][1]
    return fallback


def parse_scenario(path) -> ScenarioFile:
    p = os.fspath(path)
    try:
        with open(p, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioFormatError(f"{p}: cannot read scenario file: {exc}") from exc
    return parse_scenario_text(text, path=p)


def parse_scenario_text(text: str, path: str = "<scenario>") -> ScenarioFile:
    raw = _RawFile(text, path)
    raw_keys = {name: dict(kv) for name, kv in raw.sections.items()}
    section_lines = dict(raw.section_line)

    if "scenario" not in raw.sections:
        _fail(path, None, None,
              "missing required section [scenario] (with format_version)")
    header = raw_keys["scenario"]
    head = raw.take("scenario", _HEADER_TYPES)
    if "format_version" not in head:
        _fail(path, section_lines.get("scenario"), "format_version",
              "format_version is required")
    version = head["format_version"]
    if version not in FORMAT_VERSIONS:
        _fail(path, header["format_version"][1], "format_version",
              f"unsupported version {version!r}; supported: "
              f"{', '.join(FORMAT_VERSIONS)}")

    preset_name = head.get("preset")
    if preset_name is not None:
        try:
            base = get_preset(preset_name)
        except ParameterError as exc:
            _fail(path, header["preset"][1], "preset", str(exc))
    else:
        if "link" not in raw.sections:
            _fail(path, None, None,
                  "missing required section [link] (or name a preset "
                  "in [scenario])")
        base = None

    link_kwargs = raw.take("link", _LINK_TYPES)
    segment_kwargs = _collect_segments(raw)
    detector_kwargs = {
        "detector_d1": raw.take("link.detector_d1", _DETECTOR_TYPES),
        "detector_d2": raw.take("link.detector_d2", _DETECTOR_TYPES),
    }
    has_lock = "lock" in raw.sections
    lock_kwargs = raw.take("lock", _LOCK_TYPES)
    proto_kwargs = raw.take("protocol", _PROTOCOL_TYPES)
    proto_kwargs.update(raw.take("analysis", _ANALYSIS_TYPES))
    if "label" in head:
        proto_kwargs["label"] = head["label"]

    if raw.sections:
        name = next(iter(raw.sections))
        _fail(path, section_lines.get(name), None, f"unknown section [{name}]")

    base_link = base.link if base is not None else LinkParams(chi=0.0)
    for which, kw in detector_kwargs.items():
        if kw:
            try:
                link_kwargs[which] = replace(getattr(base_link, which), **kw)
            except ParameterError as exc:
                _fail(path,
                      _key_line(raw_keys, f"link.{which}", kw, str(exc),
                                section_lines.get(f"link.{which}")),
                      None, str(exc))
    for arm, segments in segment_kwargs.items():
        if segments:
            link_kwargs[f"segments_{arm}"] = segments

    try:
        if base is None:
            if "chi" not in link_kwargs:
                _fail(path, section_lines.get("link"), "chi",
                      "chi is required when no preset is named")
            link = LinkParams(**link_kwargs)
        else:
            link = replace(base.link, **link_kwargs) if link_kwargs else base.link
    except ParameterError as exc:
        _fail(path,
              _key_line(raw_keys, "link", link_kwargs, str(exc),
                        section_lines.get("link")),
              None, str(exc))

    lock = base.lock if base is not None else None
    if has_lock:
        try:
            lock = (replace(lock, **lock_kwargs) if lock is not None
                    else LockLoopConfig(**lock_kwargs))
        except ParameterError as exc:
            _fail(path,
                  _key_line(raw_keys, "lock", lock_kwargs, str(exc),
                            section_lines.get("lock")),
                  None, str(exc))

    try:
        if base is None:
            sc = Scenario(link=link, lock=lock, **proto_kwargs)
        else:
            sc = replace(base, link=link, lock=lock, **proto_kwargs)
    except ParameterError as exc:
        line = _key_line(raw_keys, "protocol", proto_kwargs, str(exc),
                         _key_line(raw_keys, "analysis", proto_kwargs,
                                   str(exc), None))
        _fail(path, line, None, str(exc))

    return ScenarioFile(version, preset_name, sc, path)


def _collect_segments(raw: _RawFile) -> dict:
    """Gather [link.arm_a], [link.arm_a.2], ... into per-arm segment tuples."""
    found = {"a": {}, "b": {}}
    for name in list(raw.sections):
        m = _ARM_RE.match(name)
        if m is None:
            continue
        arm, index = m.group(1), int(m.group(2) or 1)
        lineno = raw.section_line[name]
        if index in found[arm]:
            _fail(raw.path, lineno, None,
                  f"segment {index} of arm_{arm} defined twice")
        kwargs = raw.take(name, _SEGMENT_TYPES)
        for required in ("length_km", "attenuation_db_per_km"):
            if required not in kwargs:
                _fail(raw.path, lineno, required,
                      f"segment section [{name}] must set {required}")
        try:
            found[arm][index] = FiberSegment(**kwargs)
        except ParameterError as exc:
            _fail(raw.path, lineno, None, str(exc))
    out = {}
    for arm, by_index in found.items():
        if not by_index:
            out[arm] = ()
            continue
        expected = list(range(1, len(by_index) + 1))
        if sorted(by_index) != expected:
            _fail(raw.path, None, None,
                  f"arm_{arm} segment indices must be 1..{len(by_index)} "
                  f"without gaps, got {sorted(by_index)}")
        out[arm] = tuple(by_index[i] for i in expected)
    return out
