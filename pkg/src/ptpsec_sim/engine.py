"""Deterministic discrete-event kernel, local clocks and packet transit.

Time is integer nanoseconds of true (simulation) time. Events due at the same
instant fire in the order they were scheduled.
"""

from __future__ import annotations

import bisect
import heapq
import itertools
import random
from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

from ptpsec_sim.adversary import AttackerState, Direction
from ptpsec_sim.protocol import Message
from ptpsec_sim.topology import NetworkGraph, Path, TopologyError


class SchedulingInPast(ValueError):
    pass


class InvalidRoute(TopologyError):
    pass


@dataclass(order=True)
class Event:
    due: int
    seq: int
    kind: str = field(compare=False, default="timer")
    action: Callable[[], None] | None = field(compare=False, default=None, repr=False)


class Simulator:
    def __init__(self, record_trace: bool = False) -> None:
        self.now = 0
        self._queue: list[Event] = []
        self._counter = itertools.count()
        self.trace: list[tuple[int, int, str]] | None = [] if record_trace else None

    def schedule(self, due: int, action: Callable[[], None], kind: str = "timer") -> Event:
        if due < self.now:
            raise SchedulingInPast(f"event due at {due} ns but simulation time is {self.now} ns")
        event = Event(due, next(self._counter), kind, action)
        heapq.heappush(self._queue, event)
        return event

    def schedule_in(self, delay: int, action: Callable[[], None], kind: str = "timer") -> Event:
        return self.schedule(self.now + delay, action, kind)

    def run_until(self, t_end: int) -> None:
        """Process every event with ``due <= t_end`` (inclusive), then set now = t_end."""
        if t_end < self.now:
            raise SchedulingInPast(f"cannot run back to {t_end} ns from {self.now} ns")
        while self._queue and self._queue[0].due <= t_end:
            event = heapq.heappop(self._queue)
            self.now = event.due
            if self.trace is not None:
                self.trace.append((event.due, event.seq, event.kind))
            if event.action is not None:
                event.action()
        self.now = t_end

    @property
    def pending(self) -> int:
        return len(self._queue)


@dataclass
class LocalClock:
    """Free-running oscillator with step corrections.

    ``local_time(t) = t + offset_at_epoch + trunc(drift_ppm * t / 1e6)
    - sum(corrections applied at or before t)``.
    """

    offset_at_epoch: int = 0
    drift_ppm: Fraction = Fraction(0)
    correction_log: list[tuple[int, int]] = field(default_factory=list)
    _times: list[int] = field(init=False, repr=False, compare=False)
    _cumulative: list[int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.drift_ppm = Fraction(str(self.drift_ppm))
        log, self.correction_log = self.correction_log, []
        self._times, self._cumulative = [], [0]
        for at, correction in log:
            self.step(correction, at)

    def step(self, correction: int, at: int) -> None:
        if self._times and at < self._times[-1]:
            raise ValueError("corrections must be applied in time order")
        self.correction_log.append((at, correction))
        self._times.append(at)
        self._cumulative.append(self._cumulative[-1] + correction)

    def local_time(self, t: int) -> int:
        drift = int(self.drift_ppm * t / 1_000_000)
        stepped = self._cumulative[bisect.bisect_right(self._times, t)]
        return t + self.offset_at_epoch + drift - stepped


def capture_timestamp(clock: LocalClock, true_time: int) -> int:
    """Ideal hardware timestamp: the clock's reading at ``true_time``."""
    return clock.local_time(true_time)


def apply_servo_correction(clock: LocalClock, correction: int, at: int) -> None:
    """Step the clock back by ``correction`` from ``at`` onwards."""
    clock.step(correction, at)


def true_offset(master: LocalClock, slave: LocalClock, at: int) -> int:
    """Ground truth ``slave - master`` at true time ``at`` (the quantity PTP estimates)."""
    return slave.local_time(at) - master.local_time(at)


class JitterKind(str, Enum):
    NONE = "none"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class JitterModel:
    kind: JitterKind = JitterKind.NONE
    half_width: int = 0


class PathDirection(str, Enum):
    FORWARD = "forward"  # route origin -> terminus
    REVERSE = "reverse"


@dataclass
class PacketEnvelope:
    message: Message
    route: Path
    direction: PathDirection
    egress_true_time: int
    per_hop_delays: list[int] = field(default_factory=list)
    port: str = ""

    @property
    def arrival_true_time(self) -> int:
        return self.egress_true_time + sum(self.per_hop_delays)


class Network:
    """Moves packets along routes, adding base delay, jitter and attack delay per hop.

    Jitter is drawn from one independent stream per (edge, edge direction),
    seeded from the run seed, so traffic on one link never perturbs another.
    """

    def __init__(
        self,
        graph: NetworkGraph,
        attacker: AttackerState | None = None,
        jitter: JitterModel = JitterModel(),
        seed: int = 0,
    ) -> None:
        self.graph = graph
        self.attacker = attacker or AttackerState()
        self.jitter = jitter
        self.seed = seed
        self._streams: dict[tuple[str, str], random.Random] = {}

    def _jitter(self, edge_id: str, direction: Direction) -> int:
        if self.jitter.kind is JitterKind.NONE or self.jitter.half_width == 0:
            return 0
        key = (edge_id, direction.value)
        stream = self._streams.get(key)
        if stream is None:
            stream = self._streams[key] = random.Random(f"{self.seed}/{edge_id}/{direction.value}")
        w = self.jitter.half_width
        return stream.randint(-w, w)

    def hop_delays(self, packet: PacketEnvelope) -> list[int]:
        route = packet.route
        if packet.direction is PathDirection.REVERSE:
            route = route.reversed()
        try:
            self.graph.check_path(route)
        except TopologyError as exc:
            raise InvalidRoute(str(exc)) from exc
        delays = []
        at = packet.egress_true_time
        for hop in route.hops:
            edge = self.graph.edges[hop.edge_id]
            direction = Direction.FORWARD if hop.along else Direction.REVERSE
            base = edge.delay_fwd if hop.along else edge.delay_bwd
            added = self.attacker.added_delay(hop.edge_id, direction, packet.message.kind, at)
            delay = max(0, base + self._jitter(hop.edge_id, direction)) + added
            delays.append(delay)
            at += delay
        return delays

    def transmit(self, sim: Simulator, packet: PacketEnvelope, on_arrival: Callable[[PacketEnvelope], None]) -> Event:
        """Schedule the packet's arrival; per-hop delays are recorded on the envelope."""
        packet.per_hop_delays = self.hop_delays(packet)
        return sim.schedule(
            packet.arrival_true_time, lambda: on_arrival(packet), kind=f"rx:{packet.message.kind.value}"
        )
