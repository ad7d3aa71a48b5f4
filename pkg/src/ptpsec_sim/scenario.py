"""JSON scenario files.

Layout (keys carry their units)::

    {
      "name": "fig6_static_sync",
      "topology": {"nodes": [...], "edges": [...], "master": "M", "slaves": ["S"],
                   "routes": {"S": [["e0"], ["e1"]]}},            # routes optional
      "clocks": {"S": {"offset_us": 0, "drift_ppm": 0}},
      "protocol": {"mode": "ptpsec", "mitigate": false, "sync_interval_s": 1,
                   "residence_us": 10, "delay_req_gap_us": 50, "path_policy": "all"},
      "attacks": [{"edge": "e0", "direction": "forward", "messages": ["Sync"],
                   "kind": "static", "epsilon_us": 500, "delta_us_per_s": 0,
                   "start_s": 100, "end_s": 500}],
      "run": {"duration_s": 600, "seed": 1, "threshold_us": 0.001, "attacker_bound": null,
              "jitter": {"kind": "none", "half_width_us": 0}},
      "expect": {"detection": true, "max_latency_rounds": 5},
      "outputs": {"dir": "out/fig6"}
    }
"""

from __future__ import annotations

import json
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path as FsPath
from typing import Any

from ptpsec_sim import units
from ptpsec_sim.adversary import (
    ALL_MESSAGES,
    AttackError,
    AttackerState,
    AttackProfile,
    AttackSpec,
    Direction,
    ProfileKind,
    message_filter,
    validate_attacker,
)
from ptpsec_sim.engine import JitterKind, JitterModel
from ptpsec_sim.protocol import Mode, PathPolicy
from ptpsec_sim.topology import NetworkGraph, TopologyError, build_graph


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    pass


@dataclass(frozen=True)
class ClockConfig:
    offset: int = 0
    drift_ppm: Fraction = Fraction(0)


@dataclass(frozen=True)
class ProtocolConfig:
    mode: Mode = Mode.PTPSEC
    mitigate: bool = True
    sync_interval: int = units.NS_PER_S
    residence: int = 10_000
    delay_req_gap: int = 50_000
    path_policy: PathPolicy = PathPolicy.ALL


@dataclass(frozen=True)
class RunConfig:
    duration: int
    seed: int = 0
    jitter: JitterModel = JitterModel()
    threshold: int = 1_000
    attacker_bound: int | None = None


@dataclass(frozen=True)
class Expectations:
    detection: bool = False
    max_latency_rounds: int | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    graph: NetworkGraph
    clocks: Mapping[str, ClockConfig]
    protocol: ProtocolConfig
    attacker: AttackerState
    run: RunConfig
    routes: Mapping[str, tuple[tuple[str, ...], ...]] = field(default_factory=dict)
    expect: Expectations = Expectations()
    output_dir: str | None = None

    def clock(self, node: str) -> ClockConfig:
        return self.clocks.get(node, ClockConfig())

    def with_overrides(self, *, mode: str | None = None, seed: int | None = None) -> Scenario:
        out = self
        if mode is not None:
            out = replace(out, protocol=replace(out.protocol, mode=Mode(mode)))
        if seed is not None:
            out = replace(out, run=replace(out.run, seed=seed))
        return out


_MISSING = object()


def _field(section: Mapping, key: str, where: str, kind, default: Any = _MISSING):
    if key not in section or section[key] is None:
        if default is _MISSING:
            raise ValidationError(f"{where}.{key}: required field missing")
        return default
    value = section[key]
    ok = isinstance(value, kind) and not (isinstance(value, bool) and kind is not bool)
    if not ok:
        raise ParseError(f"{where}.{key}: expected {_kind_name(kind)}, got {value!r}")
    return value


def _kind_name(kind) -> str:
    if isinstance(kind, tuple):
        return " or ".join(k.__name__ for k in kind)
    return kind.__name__


_NUM = (int, float)


def _convert(fn, value, where: str) -> int:
    try:
        return fn(value)
    except ValueError as exc:
        raise ValidationError(f"{where}: {exc}") from exc


def _enum(enum, value: str, where: str):
    try:
        return enum(value)
    except ValueError:
        allowed = ", ".join(e.value for e in enum)
        raise ValidationError(f"{where}: {value!r} is not one of {allowed}") from None


def parse_scenario_dict(data: Mapping) -> Scenario:
    if not isinstance(data, Mapping):
        raise ParseError("scenario root must be a JSON object")
    name = _field(data, "name", "scenario", str, "scenario")

    topo = _field(data, "topology", "scenario", dict)
    _field(topo, "master", "topology", str)
    _field(topo, "nodes", "topology", list)
    _field(topo, "edges", "topology", list)
    for i, edge in enumerate(topo["edges"]):
        if not isinstance(edge, dict):
            raise ParseError(f"topology.edges[{i}]: expected object")
    try:
        graph = build_graph(topo)
    except TopologyError as exc:
        raise ValidationError(f"topology: {type(exc).__name__}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"topology: {exc}") from exc

    routes: dict[str, tuple[tuple[str, ...], ...]] = {}
    for slave, paths in _field(topo, "routes", "topology", dict, {}).items():
        if slave not in graph.slaves:
            raise ValidationError(f"topology.routes: {slave!r} is not a slave")
        if not isinstance(paths, list) or not all(isinstance(p, list) for p in paths):
            raise ParseError(f"topology.routes.{slave}: expected a list of edge-id lists")
        routes[slave] = tuple(tuple(p) for p in paths)

    clocks = {}
    for node, raw in _field(data, "clocks", "scenario", dict, {}).items():
        where = f"clocks.{node}"
        if node not in graph.nodes:
            raise ValidationError(f"{where}: unknown node")
        if not isinstance(raw, dict):
            raise ParseError(f"{where}: expected object")
        offset = _convert(units.us, _field(raw, "offset_us", where, _NUM, 0), f"{where}.offset_us")
        drift = _field(raw, "drift_ppm", where, _NUM, 0)
        clocks[node] = ClockConfig(offset, Fraction(str(drift)))

    proto_raw = _field(data, "protocol", "scenario", dict, {})
    protocol = ProtocolConfig(
        mode=_enum(Mode, _field(proto_raw, "mode", "protocol", str, "ptpsec"), "protocol.mode"),
        mitigate=_field(proto_raw, "mitigate", "protocol", bool, True),
        sync_interval=_convert(
            units.seconds, _field(proto_raw, "sync_interval_s", "protocol", _NUM, 1), "protocol.sync_interval_s"
        ),
        residence=_convert(units.us, _field(proto_raw, "residence_us", "protocol", _NUM, 10), "protocol.residence_us"),
        delay_req_gap=_convert(
            units.us, _field(proto_raw, "delay_req_gap_us", "protocol", _NUM, 50), "protocol.delay_req_gap_us"
        ),
        path_policy=_enum(
            PathPolicy, _field(proto_raw, "path_policy", "protocol", str, "all"), "protocol.path_policy"
        ),
    )
    if protocol.sync_interval <= 0:
        raise ValidationError("protocol.sync_interval_s must be positive")
    if protocol.residence < 0 or protocol.delay_req_gap < 0:
        raise ValidationError("protocol: residence and Delay_Req gap must be non-negative")

    run_raw = _field(data, "run", "scenario", dict)
    jitter_raw = _field(run_raw, "jitter", "run", dict, {})
    jitter = JitterModel(
        _enum(JitterKind, _field(jitter_raw, "kind", "run.jitter", str, "none"), "run.jitter.kind"),
        _convert(units.us, _field(jitter_raw, "half_width_us", "run.jitter", _NUM, 0), "run.jitter.half_width_us"),
    )
    if jitter.half_width < 0:
        raise ValidationError("run.jitter.half_width_us must be non-negative")
    run = RunConfig(
        duration=_convert(units.seconds, _field(run_raw, "duration_s", "run", _NUM), "run.duration_s"),
        seed=_field(run_raw, "seed", "run", int, 0),
        jitter=jitter,
        threshold=_convert(units.us, _field(run_raw, "threshold_us", "run", _NUM, 1), "run.threshold_us"),
        attacker_bound=_field(run_raw, "attacker_bound", "run", int, None),
    )
    if run.duration < 0:
        raise ValidationError("run.duration_s must be non-negative")
    if run.threshold < 0:
        raise ValidationError("run.threshold_us must be non-negative")

    specs = []
    for i, raw in enumerate(_field(data, "attacks", "scenario", list, [])):
        where = f"attacks[{i}]"
        if not isinstance(raw, dict):
            raise ParseError(f"{where}: expected object")
        messages = _field(raw, "messages", where, list, ["all"])
        if not all(isinstance(m, str) for m in messages):
            raise ParseError(f"{where}.messages: expected a list of message names")
        try:
            profile = AttackProfile(
                kind=_enum(ProfileKind, _field(raw, "kind", where, str, "static"), f"{where}.kind"),
                epsilon=_convert(units.us, _field(raw, "epsilon_us", where, _NUM), f"{where}.epsilon_us"),
                start=_convert(units.seconds, _field(raw, "start_s", where, _NUM), f"{where}.start_s"),
                end=_convert(units.seconds, _field(raw, "end_s", where, _NUM), f"{where}.end_s"),
                delta_per_second=_convert(
                    units.us, _field(raw, "delta_us_per_s", where, _NUM, 0), f"{where}.delta_us_per_s"
                ),
            )
            spec = AttackSpec(
                target_edge=_field(raw, "edge", where, str),
                direction=_enum(Direction, _field(raw, "direction", where, str), f"{where}.direction"),
                messages=message_filter(messages),
                profile=profile,
            )
        except (AttackError, ValueError) as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ValidationError(f"{where}: {exc}") from exc
        if spec.profile.end > run.duration:
            raise ValidationError(f"{where}: attack window ends after the run")
        specs.append(spec)
    attacker = AttackerState(tuple(specs))
    try:
        validate_attacker(attacker, graph)
    except (AttackError, TopologyError) as exc:
        raise ValidationError(f"attacks: {type(exc).__name__}: {exc}") from exc

    expect_raw = _field(data, "expect", "scenario", dict, {})
    expect = Expectations(
        detection=_field(expect_raw, "detection", "expect", bool, False),
        max_latency_rounds=_field(expect_raw, "max_latency_rounds", "expect", int, None),
    )
    outputs = _field(data, "outputs", "scenario", dict, {})
    output_dir = _field(outputs, "dir", "outputs", str, None)

    return Scenario(name, graph, clocks, protocol, attacker, run, routes, expect, output_dir)


def parse_scenario(path: str | FsPath) -> Scenario:
    """Load and validate a scenario file."""
    text = FsPath(path).read_text()
    return parse_scenario_text(text)


def parse_scenario_text(text: str) -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return parse_scenario_dict(data)


def bundled_names() -> list[str]:
    folder = resources.files("ptpsec_sim") / "scenarios"
    return sorted(p.name[:-5] for p in folder.iterdir() if p.name.endswith(".json"))


def bundled_path(name: str):
    if name.endswith(".json"):
        name = name[:-5]
    return resources.files("ptpsec_sim") / "scenarios" / f"{name}.json"


def load_scenario(ref: str | FsPath) -> Scenario:
    """Parse a scenario from a file path or the name of a bundled scenario."""
    path = FsPath(ref)
    if path.exists():
        return parse_scenario(path)
    bundled = bundled_path(str(ref))
    if bundled.is_file():
        return parse_scenario_text(bundled.read_text())
    raise ParseError(f"no scenario file or bundled scenario named {str(ref)!r}")


def scenario_to_dict(s: Scenario) -> dict:
    """Inverse of :func:`parse_scenario_dict` (explicit units, all defaults spelled out)."""
    us, sec = units.to_us_number, units.to_s_number

    def drift(value: Fraction) -> int | float:
        return int(value) if value.denominator == 1 else float(value)

    topology: dict[str, Any] = {
        "nodes": list(s.graph.nodes),
        "edges": [
            {"id": e.edge_id, "a": e.a, "b": e.b, "delay_fwd_us": us(e.delay_fwd), "delay_bwd_us": us(e.delay_bwd)}
            for e in s.graph.edges.values()
        ],
        "master": s.graph.master,
        "slaves": list(s.graph.slaves),
    }
    if s.routes:
        topology["routes"] = {k: [list(p) for p in v] for k, v in s.routes.items()}
    attacks = []
    for spec in s.attacker.specs:
        p = spec.profile
        messages = ["all"] if spec.messages == ALL_MESSAGES else sorted(k.value for k in spec.messages)
        attacks.append(
            {
                "edge": spec.target_edge,
                "direction": spec.direction.value,
                "messages": messages,
                "kind": p.kind.value,
                "epsilon_us": us(p.epsilon),
                "delta_us_per_s": us(p.delta_per_second),
                "start_s": sec(p.start),
                "end_s": sec(p.end),
            }
        )
    out: dict[str, Any] = {
        "name": s.name,
        "topology": topology,
        "clocks": {
            node: {"offset_us": us(c.offset), "drift_ppm": drift(c.drift_ppm)} for node, c in s.clocks.items()
        },
        "protocol": {
            "mode": s.protocol.mode.value,
            "mitigate": s.protocol.mitigate,
            "sync_interval_s": sec(s.protocol.sync_interval),
            "residence_us": us(s.protocol.residence),
            "delay_req_gap_us": us(s.protocol.delay_req_gap),
            "path_policy": s.protocol.path_policy.value,
        },
        "attacks": attacks,
        "run": {
            "duration_s": sec(s.run.duration),
            "seed": s.run.seed,
            "jitter": {"kind": s.run.jitter.kind.value, "half_width_us": us(s.run.jitter.half_width)},
            "threshold_us": us(s.run.threshold),
            "attacker_bound": s.run.attacker_bound,
        },
        "expect": {"detection": s.expect.detection, "max_latency_rounds": s.expect.max_latency_rounds},
    }
    if s.output_dir is not None:
        out["outputs"] = {"dir": s.output_dir}
    return out
