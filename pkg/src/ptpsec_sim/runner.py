"""Runs a scenario end to end and collects the per-round series.

The master starts round ``k`` at true time ``k * sync_interval`` for every
``k < duration // sync_interval``; each slave has its own master port and
path set. The slave clock is stepped by the servo input as soon as a round
completes.

``theta_act`` is reported as master time minus slave time, i.e. positive
when the slave clock lags the grandmaster, so a delayed Sync shows up as a
positive actual offset. :func:`engine.true_offset` keeps the protocol's
``slave - master`` convention.
"""

from __future__ import annotations

import hashlib
import statistics
from collections import Counter
from dataclasses import dataclass, field

from ptpsec_sim import units
from ptpsec_sim.detection import NeverCleared, NeverDetected, clear_latency, detection_latency
from ptpsec_sim.engine import (
    LocalClock,
    Network,
    PacketEnvelope,
    PathDirection,
    Simulator,
    apply_servo_correction,
    capture_timestamp,
    true_offset,
)
from ptpsec_sim.protocol import (
    MasterPort,
    Mode,
    PathPolicy,
    Send,
    SlavePort,
    SyncRoundRecord,
    messages_per_cycle,
)
from ptpsec_sim.scenario import Scenario, ValidationError
from ptpsec_sim.topology import (
    DisjointPathSet,
    TopologyError,
    find_edge_disjoint_paths,
    paths_are_disjoint,
)


class NoRedundantPath(ValidationError):
    pass


@dataclass
class RoundRow:
    round: int
    true_time: int
    theta_rep: int
    theta_act: int
    theta_rect: int
    alphas: tuple[int | None, ...]
    attacked: bool
    consensus_alpha: int | None
    attacked_paths: frozenset[int] | None
    ambiguous: bool
    packets: int
    offset_before: int  # slave - master just before the correction
    record: SyncRoundRecord = field(repr=False)


@dataclass
class SlaveRun:
    slave: str
    paths: DisjointPathSet
    rows: list[RoundRow] = field(default_factory=list)
    dropped: int = 0
    incomplete: int = 0
    packets_by_kind: Counter = field(default_factory=Counter)

    @property
    def n(self) -> int:
        return self.paths.redundant


@dataclass
class RunOutput:
    scenario: Scenario
    slaves: dict[str, SlaveRun]
    summary: dict
    trace_digest: str | None = None


def plan_paths(s: Scenario) -> dict[str, DisjointPathSet]:
    """Disjoint path set per slave: configured routes, else the flow search."""
    master = s.graph.master
    plans = {}
    for slave in s.graph.slaves:
        if slave in s.routes:
            try:
                paths = tuple(s.graph.path(master, ids) for ids in s.routes[slave])
            except TopologyError as exc:
                raise ValidationError(f"routes for {slave!r}: {exc}") from exc
            if not paths or any(p.terminus != slave for p in paths):
                raise ValidationError(f"routes for {slave!r} must all lead from {master!r} to {slave!r}")
            if not paths_are_disjoint(paths):
                raise ValidationError(f"routes for {slave!r} are not edge-disjoint")
            plans[slave] = DisjointPathSet(master, slave, paths)
        else:
            plans[slave] = find_edge_disjoint_paths(s.graph, master, slave)
        if s.protocol.mode is Mode.PTPSEC and plans[slave].count < 2:
            raise NoRedundantPath(f"no redundant path between {master!r} and {slave!r}")
    return plans


def run_scenario(s: Scenario, record_trace: bool = False) -> RunOutput:
    graph, proto = s.graph, s.protocol
    plans = plan_paths(s)
    sim = Simulator(record_trace=record_trace)
    net = Network(graph, s.attacker, s.run.jitter, s.run.seed)

    def make_clock(node: str) -> LocalClock:
        cfg = s.clock(node)
        return LocalClock(cfg.offset, cfg.drift_ppm)

    master_clock = make_clock(graph.master)
    slave_clocks = {slave: make_clock(slave) for slave in graph.slaves}
    runs = {slave: SlaveRun(slave, plans[slave]) for slave in graph.slaves}
    window = 3
    master_ports = {
        slave: MasterPort(plans[slave].redundant, proto.mode, proto.path_policy, proto.residence, window)
        for slave in graph.slaves
    }
    slave_ports = {
        slave: SlavePort(
            plans[slave].redundant,
            proto.mode,
            proto.path_policy,
            proto.residence,
            window,
            delay_req_gap=proto.delay_req_gap,
            mitigate=proto.mitigate,
            threshold=s.run.threshold,
            attacker_bound=s.run.attacker_bound,
        )
        for slave in graph.slaves
    }
    packets: dict[str, Counter] = {slave: Counter() for slave in graph.slaves}

    def send(at_master: bool, slave: str, action: Send) -> None:
        def egress() -> None:
            msg = action.message
            clock = master_clock if at_master else slave_clocks[slave]
            port = master_ports[slave] if at_master else slave_ports[slave]
            ts = capture_timestamp(clock, sim.now)
            packets[slave][msg.seq] += 1
            runs[slave].packets_by_kind[msg.kind.value] += 1
            direction = PathDirection.FORWARD if at_master else PathDirection.REVERSE
            route = plans[slave][action.path_index]
            envelope = PacketEnvelope(msg, route, direction, sim.now, port=slave)
            net.transmit(sim, envelope, lambda env: arrive(not at_master, env))
            for follow in port.on_egress(msg, ts):
                send(at_master, slave, follow)

        sim.schedule_in(action.after, egress, kind=f"tx:{action.message.kind.value}")

    def arrive(at_master: bool, env: PacketEnvelope) -> None:
        slave = env.port
        clock = master_clock if at_master else slave_clocks[slave]
        port = master_ports[slave] if at_master else slave_ports[slave]
        ts = capture_timestamp(clock, sim.now)
        for action in port.on_receive(env.message, ts):
            send(at_master, slave, action)
        if not at_master:
            for rec in slave_ports[slave].pop_completed():
                finish(slave, rec)

    def finish(slave: str, rec: SyncRoundRecord) -> None:
        clock = slave_clocks[slave]
        before = true_offset(master_clock, clock, sim.now)
        report = slave_ports[slave].finish_round(rec)
        apply_servo_correction(clock, report.correction, sim.now)
        n = runs[slave].n
        loc = report.localization
        runs[slave].rows.append(
            RoundRow(
                round=rec.seq,
                true_time=rec.seq * proto.sync_interval,
                theta_rep=report.theta_rep,
                theta_act=-true_offset(master_clock, clock, sim.now),
                theta_rect=report.theta_rect,
                alphas=tuple(report.alphas.get(i) for i in range(1, n + 1)),
                attacked=bool(report.verdict and report.verdict.attacked),
                consensus_alpha=loc.consensus_alpha if loc else None,
                attacked_paths=loc.attacked_paths if loc else None,
                ambiguous=bool(loc and loc.ambiguous),
                packets=packets[slave].pop(rec.seq),
                offset_before=before,
                record=rec,
            )
        )

    def start(slave: str, seq: int) -> None:
        for action in master_ports[slave].start_round(seq):
            send(True, slave, action)

    rounds = s.run.duration // proto.sync_interval
    for seq in range(rounds):
        for slave in graph.slaves:
            sim.schedule(seq * proto.sync_interval, lambda sl=slave, k=seq: start(sl, k), kind="sync-timer")
    sim.run_until(s.run.duration)

    for slave, run in runs.items():
        port = slave_ports[slave]
        run.dropped = port.dropped
        run.incomplete = len(port.rounds)

    digest = None
    if sim.trace is not None:
        h = hashlib.sha256()
        for due, seq, kind in sim.trace:
            h.update(f"{due}:{seq}:{kind}\n".encode())
        digest = h.hexdigest()
    return RunOutput(s, runs, summarize(s, runs), digest)


def expected_packets_per_cycle(s: Scenario, n: int) -> int:
    if s.protocol.mode is Mode.PTP:
        return messages_per_cycle(0)
    if s.protocol.path_policy is PathPolicy.ROTATE:
        return messages_per_cycle(1)
    return messages_per_cycle(n)


def attack_window(s: Scenario) -> tuple[int, int] | None:
    if not s.attacker.specs:
        return None
    return (
        min(spec.profile.start for spec in s.attacker.specs),
        max(spec.profile.end for spec in s.attacker.specs),
    )


def summarize(s: Scenario, runs: dict[str, SlaveRun]) -> dict:
    us = units.to_us_number
    window = attack_window(s)
    out: dict = {"scenario": s.name, "mode": s.protocol.mode.value, "seed": s.run.seed, "slaves": {}}
    for slave, run in runs.items():
        rows = run.rows
        series = [(r.true_time, r.attacked) for r in rows]
        entry: dict = {
            "rounds": len(rows),
            "dropped_rounds": run.dropped,
            "incomplete_rounds": run.incomplete,
            "redundant_paths": run.n,
            "paths": [list(p.edge_ids) for p in run.paths],
            "packets_total": sum(run.packets_by_kind.values()),
            "packets_by_kind": dict(sorted(run.packets_by_kind.items())),
            "packets_per_cycle": sorted({r.packets for r in rows}),
            "packets_per_cycle_expected": expected_packets_per_cycle(s, run.n),
            "rounds_flagged": sum(r.attacked for r in rows),
            "max_abs_theta_rect_error_us": us(max((abs(r.theta_rect - r.offset_before) for r in rows), default=0)),
            "detection_latency_start_rounds": None,
            "detection_latency_end_rounds": None,
            "steady_theta_act_us": None,
        }
        if window is not None and rows:
            start, end = window
            try:
                entry["detection_latency_start_rounds"] = detection_latency(series, start)
            except (NeverDetected, ValueError):
                pass
            try:
                entry["detection_latency_end_rounds"] = clear_latency(series, end)
            except (NeverCleared, ValueError):
                pass
            during = [r.theta_act for r in rows if start <= r.true_time <= end][2:]
            if during:
                entry["steady_theta_act_us"] = us(statistics.median_low(during))
        out["slaves"][slave] = entry
    return out
