"""Two-step PTP and PTPsec message flow, timestamp bookkeeping and offset math.

The state machines are sans-IO. A port reacts to ``on_receive`` (ingress
timestamp supplied by the caller) and ``on_egress`` (the hardware egress
timestamp of a message it sent) by returning :class:`Send` actions; the
simulation engine turns those into timed transmissions.

One PTPsec round with redundant path ``i``::

    master                         slave
      Sync      --P0-->            t1 -> t2
      Follow_Up --P0-->            carries t1
                <--Pi-- Meas       t_m1 -> t_m2
                <--Pi-- Meas_Fup   carries t_m1
                <--P0-- Delay_Req  t3 -> t4
      Meas      --Pi-->            t_m3 -> t_m4
      Meas_Fup  --Pi-->            carries t_m3
      Delay_Resp --P0->            carries t4 and every t_m2

Delay_Resp also carries the master's Meas ingress timestamps, since the
slave needs them for the forward round trip. It is held back until every
Meas of the round has reached the master.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field
from enum import Enum

from ptpsec_sim.detection import (
    EstimateSet,
    Localization,
    Verdict,
    consensus_asymmetry,
    detect,
)
from ptpsec_sim.units import half


class ProtocolError(RuntimeError):
    pass


class IncompleteRound(ProtocolError):
    pass


class UnknownSeq(ProtocolError):
    pass


class DuplicateMessage(ProtocolError):
    pass


class StaleRound(ProtocolError):
    pass


class MessageKind(str, Enum):
    SYNC = "Sync"
    FOLLOW_UP = "Follow_Up"
    DELAY_REQ = "Delay_Req"
    DELAY_RESP = "Delay_Resp"
    MEAS = "Meas"
    MEAS_FUP = "Meas_Fup"

    @property
    def is_event(self) -> bool:
        return self in (MessageKind.SYNC, MessageKind.DELAY_REQ, MessageKind.MEAS)


class Mode(str, Enum):
    PTP = "ptp"
    PTPSEC = "ptpsec"


class PathPolicy(str, Enum):
    ALL = "all"
    ROTATE = "rotate"


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    seq: int
    path_index: int = 0
    timestamp: int | None = None
    meas_ingress: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class Send:
    """Transmit ``message`` on path ``path_index`` after ``after`` ns."""

    message: Message
    path_index: int
    after: int = 0


@dataclass
class SyncRoundRecord:
    seq: int
    paths: tuple[int, ...] = ()
    t1: int | None = None
    t2: int | None = None
    t3: int | None = None
    t4: int | None = None
    t_m1: dict[int, int] = field(default_factory=dict)
    t_m2: dict[int, int] = field(default_factory=dict)
    t_m3: dict[int, int] = field(default_factory=dict)
    t_m4: dict[int, int] = field(default_factory=dict)

    @property
    def has_offset_inputs(self) -> bool:
        return None not in (self.t1, self.t2, self.t3, self.t4)

    def has_meas(self, path_index: int) -> bool:
        return all(path_index in ts for ts in (self.t_m1, self.t_m2, self.t_m3, self.t_m4))

    def is_complete(self, mode: Mode = Mode.PTPSEC) -> bool:
        if not self.has_offset_inputs:
            return False
        return mode is Mode.PTP or all(self.has_meas(i) for i in self.paths)


def compute_offset(rec: SyncRoundRecord) -> int:
    """Reported clock offset from t1..t4, halved toward zero."""
    if not rec.has_offset_inputs:
        raise IncompleteRound(f"round {rec.seq} lacks one of t1..t4")
    return half((rec.t2 - rec.t1) - (rec.t4 - rec.t3))


def expected_offset_under_attack(theta_true: int, eps1: int, eps2: int) -> int:
    """Offset PTP reports when Sync is delayed by eps1 and Delay_Req by eps2."""
    return half(2 * theta_true + eps1 - eps2)


def rtt_measurements(rec: SyncRoundRecord, path_index: int | None = None) -> tuple[int, int]:
    """Forward (P0 then Pi) and reverse (Pi then P0) round-trip times.

    Each RTT only subtracts timestamps of the same clock, so clock offsets
    between master and slave drop out.
    """
    if path_index is None:
        if len(rec.paths) != 1:
            raise ValueError("path_index is required when a round uses several paths")
        path_index = rec.paths[0]
    if not rec.has_offset_inputs or not rec.has_meas(path_index):
        raise IncompleteRound(f"round {rec.seq} lacks timestamps for path {path_index}")
    rtt_fwd = (rec.t_m2[path_index] - rec.t1) - (rec.t_m1[path_index] - rec.t2)
    rtt_rev = (rec.t_m4[path_index] - rec.t3) - (rec.t_m3[path_index] - rec.t4)
    return rtt_fwd, rtt_rev


def asymmetry_estimate(rtt_fwd: int, rtt_rev: int) -> int:
    return rtt_fwd - rtt_rev


def rectified_offset(theta_rep: int, alpha: int) -> int:
    return theta_rep - half(alpha)


def messages_per_cycle(n: int) -> int:
    if n < 0:
        raise ValueError("n must be non-negative")
    return 4 + 4 * n


def paths_for_round(seq: int, n_paths: int, mode: Mode, policy: PathPolicy) -> tuple[int, ...]:
    """Redundant path indices (1-based) measured in round ``seq``."""
    if mode is Mode.PTP or n_paths == 0:
        return ()
    if policy is PathPolicy.ROTATE:
        return (seq % n_paths + 1,)
    return tuple(range(1, n_paths + 1))


@dataclass
class ServoState:
    mode: Mode
    last_reported_offset: int | None = None
    last_asymmetry: int | None = None
    last_rectified_offset: int | None = None


@dataclass
class RoundReport:
    seq: int
    paths: tuple[int, ...]
    theta_rep: int
    theta_rect: int
    alphas: dict[int, int]
    verdict: Verdict | None
    localization: Localization | None
    correction: int


class _Port:
    def __init__(
        self,
        n_paths: int = 0,
        mode: Mode = Mode.PTPSEC,
        policy: PathPolicy = PathPolicy.ALL,
        residence: int = 10_000,
        window: int = 3,
    ) -> None:
        self.n_paths = n_paths
        self.mode = Mode(mode)
        self.policy = PathPolicy(policy)
        self.residence = residence
        self.window = window
        self.rounds: dict[int, SyncRoundRecord] = {}
        self._seen: dict[int, set[tuple[MessageKind, int, str]]] = {}
        self._closed: set[int] = set()
        self.dropped = 0

    def paths(self, seq: int) -> tuple[int, ...]:
        return paths_for_round(seq, self.n_paths, self.mode, self.policy)

    def _open(self, seq: int) -> SyncRoundRecord:
        if seq in self._closed:
            raise StaleRound(f"round {seq} is already closed")
        if seq not in self.rounds:
            self.rounds[seq] = SyncRoundRecord(seq, self.paths(seq))
            self._seen[seq] = set()
        return self.rounds[seq]

    def _existing(self, seq: int) -> SyncRoundRecord:
        if seq in self._closed:
            raise StaleRound(f"round {seq} is already closed")
        if seq not in self.rounds:
            raise UnknownSeq(f"no open round {seq}")
        return self.rounds[seq]

    def _mark(self, msg: Message, direction: str) -> None:
        key = (msg.kind, msg.path_index, direction)
        seen = self._seen[msg.seq]
        if key in seen:
            raise DuplicateMessage(f"{msg.kind.value} for round {msg.seq} seen twice")
        seen.add(key)

    def _close(self, seq: int) -> None:
        self.rounds.pop(seq, None)
        self._seen.pop(seq, None)
        self._closed.add(seq)

    def expire(self, current_seq: int) -> list[int]:
        """Discard rounds older than the timeout window; returns their seqs."""
        stale = [s for s in self.rounds if s <= current_seq - self.window]
        for seq in stale:
            self._close(seq)
        self.dropped += len(stale)
        return stale


class MasterPort(_Port):
    """Master side of one master-slave relation."""

    def start_round(self, seq: int) -> list[Send]:
        self.expire(seq)
        if seq in self.rounds or seq in self._closed:
            raise DuplicateMessage(f"round {seq} already started")
        self._open(seq)
        return [Send(Message(MessageKind.SYNC, seq), 0)]

    def on_egress(self, msg: Message, ts: int) -> list[Send]:
        if msg.kind is MessageKind.SYNC:
            rec = self._existing(msg.seq)
            rec.t1 = ts
            return [Send(Message(MessageKind.FOLLOW_UP, msg.seq, 0, ts), 0)]
        if msg.kind is MessageKind.MEAS:
            rec = self._existing(msg.seq)
            rec.t_m3[msg.path_index] = ts
            fup = Send(Message(MessageKind.MEAS_FUP, msg.seq, msg.path_index, ts), msg.path_index)
            self._maybe_close(rec)
            return [fup]
        return []

    def on_receive(self, msg: Message, ts: int) -> list[Send]:
        rec = self._existing(msg.seq)
        if msg.kind not in (MessageKind.DELAY_REQ, MessageKind.MEAS, MessageKind.MEAS_FUP):
            raise ProtocolError(f"master does not accept {msg.kind.value}")
        if msg.kind is not MessageKind.DELAY_REQ and msg.path_index not in rec.paths:
            raise ProtocolError(f"round {msg.seq} does not use path {msg.path_index}")
        self._mark(msg, "rx")
        out: list[Send] = []
        if msg.kind is MessageKind.DELAY_REQ:
            rec.t4 = ts
            out += [Send(Message(MessageKind.MEAS, msg.seq, i), i, self.residence) for i in rec.paths]
        elif msg.kind is MessageKind.MEAS:
            rec.t_m2[msg.path_index] = ts
        else:
            rec.t_m1[msg.path_index] = msg.timestamp
        out += self._maybe_respond(rec)
        return out

    def _maybe_respond(self, rec: SyncRoundRecord) -> list[Send]:
        out = []
        responded = (MessageKind.DELAY_RESP, 0, "tx") in self._seen[rec.seq]
        if not responded and rec.t4 is not None and all(i in rec.t_m2 for i in rec.paths):
            self._seen[rec.seq].add((MessageKind.DELAY_RESP, 0, "tx"))
            ingress = tuple(sorted(rec.t_m2.items()))
            out.append(Send(Message(MessageKind.DELAY_RESP, rec.seq, 0, rec.t4, ingress), 0))
        self._maybe_close(rec)
        return out

    def _maybe_close(self, rec: SyncRoundRecord) -> None:
        responded = (MessageKind.DELAY_RESP, 0, "tx") in self._seen[rec.seq]
        if responded and all(i in rec.t_m1 and i in rec.t_m3 for i in rec.paths):
            self._close(rec.seq)


class SlavePort(_Port):
    """Slave side: collects the round's timestamps and drives the servo."""

    def __init__(
        self,
        n_paths: int = 0,
        mode: Mode = Mode.PTPSEC,
        policy: PathPolicy = PathPolicy.ALL,
        residence: int = 10_000,
        window: int = 3,
        delay_req_gap: int = 50_000,
        mitigate: bool = True,
        threshold: int = 1_000,
        attacker_bound: int | None = None,
    ) -> None:
        super().__init__(n_paths, mode, policy, residence, window)
        self.delay_req_gap = delay_req_gap
        self.mitigate = mitigate
        self.threshold = threshold
        self.attacker_bound = attacker_bound
        self.servo = ServoState(self.mode)
        self.completed: list[SyncRoundRecord] = []

    def on_receive(self, msg: Message, ts: int) -> list[Send]:
        kind = msg.kind
        if kind in (MessageKind.SYNC, MessageKind.FOLLOW_UP):
            # Follow_Up overtakes a delayed Sync, so either may open the round
            self.expire(msg.seq)
            rec = self._open(msg.seq)
        elif kind in (MessageKind.MEAS, MessageKind.MEAS_FUP, MessageKind.DELAY_RESP):
            rec = self._existing(msg.seq)
        else:
            raise ProtocolError(f"slave does not accept {kind.value}")
        if kind in (MessageKind.MEAS, MessageKind.MEAS_FUP) and msg.path_index not in rec.paths:
            raise ProtocolError(f"round {msg.seq} does not use path {msg.path_index}")
        self._mark(msg, "rx")

        out: list[Send] = []
        if kind is MessageKind.SYNC:
            rec.t2 = ts
            out += [Send(Message(MessageKind.MEAS, msg.seq, i), i, self.residence) for i in rec.paths]
            out.append(
                Send(Message(MessageKind.DELAY_REQ, msg.seq), 0, self.residence + self.delay_req_gap)
            )
        elif kind is MessageKind.FOLLOW_UP:
            rec.t1 = msg.timestamp
        elif kind is MessageKind.MEAS:
            rec.t_m4[msg.path_index] = ts
        elif kind is MessageKind.MEAS_FUP:
            rec.t_m3[msg.path_index] = msg.timestamp
        else:
            rec.t4 = msg.timestamp
            for index, value in msg.meas_ingress:
                rec.t_m2[index] = value
        self._check_complete(rec)
        return out

    def on_egress(self, msg: Message, ts: int) -> list[Send]:
        if msg.kind is MessageKind.MEAS:
            rec = self._existing(msg.seq)
            rec.t_m1[msg.path_index] = ts
            return [Send(Message(MessageKind.MEAS_FUP, msg.seq, msg.path_index, ts), msg.path_index)]
        if msg.kind is MessageKind.DELAY_REQ:
            self._existing(msg.seq).t3 = ts
        return []

    def _check_complete(self, rec: SyncRoundRecord) -> None:
        if rec.is_complete(self.mode):
            self.completed.append(rec)
            self._close(rec.seq)

    def pop_completed(self) -> list[SyncRoundRecord]:
        done, self.completed = self.completed, []
        return done

    def finish_round(self, rec: SyncRoundRecord) -> RoundReport:
        """Offset, asymmetry and servo correction for a complete round.

        The returned ``correction`` is what the slave clock must step by:
        the rectified offset when mitigating, the reported offset otherwise.
        """
        if not rec.is_complete(self.mode):
            raise IncompleteRound(f"round {rec.seq} is incomplete")
        theta_rep = compute_offset(rec)
        alphas: dict[int, int] = {}
        verdict = localization = None
        alpha = 0
        if self.mode is Mode.PTPSEC and rec.paths:
            for i in rec.paths:
                alphas[i] = asymmetry_estimate(*rtt_measurements(rec, i))
            estimates = EstimateSet(rec.seq, tuple(alphas[i] for i in rec.paths), self.threshold)
            verdict = detect(estimates)
            bound = len(rec.paths) // 2
            if self.attacker_bound is not None:
                bound = min(bound, self.attacker_bound)
            localization = consensus_asymmetry(estimates, bound)
            alpha = localization.consensus_alpha
        theta_rect = rectified_offset(theta_rep, alpha)
        correction = theta_rect if self.mode is Mode.PTPSEC and self.mitigate else theta_rep
        self.servo.last_reported_offset = theta_rep
        self.servo.last_asymmetry = alpha
        self.servo.last_rectified_offset = theta_rect
        return RoundReport(rec.seq, rec.paths, theta_rep, theta_rect, alphas, verdict, localization, correction)


def handle_message(port: MasterPort | SlavePort, msg: Message, ingress_ts: int) -> list[Send]:
    """Feed one received message to a port state machine."""
    return port.on_receive(msg, ingress_ts)


def sends_of_kind(sends: Iterable[Send], kind: MessageKind) -> list[Send]:
    return [s for s in sends if s.message.kind is kind]
