from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ptpsec_sim.protocol import (
    DuplicateMessage,
    IncompleteRound,
    MasterPort,
    Message,
    MessageKind,
    Mode,
    PathPolicy,
    ProtocolError,
    SlavePort,
    StaleRound,
    SyncRoundRecord,
    UnknownSeq,
    asymmetry_estimate,
    compute_offset,
    expected_offset_under_attack,
    handle_message,
    messages_per_cycle,
    paths_for_round,
    rectified_offset,
    rtt_measurements,
    sends_of_kind,
)
from ptpsec_sim.units import us


def record(t1, t2, t3, t4, m1=None, m2=None, m3=None, m4=None) -> SyncRoundRecord:
    rec = SyncRoundRecord(0, (1,), us(t1), us(t2), us(t3), us(t4))
    for name, value in (("t_m1", m1), ("t_m2", m2), ("t_m3", m3), ("t_m4", m4)):
        if value is not None:
            getattr(rec, name)[1] = us(value)
    return rec


class TestOffset:
    def test_symmetric(self):
        assert compute_offset(record(0, 100, 200, 300)) == 0

    def test_sync_attack(self):
        assert compute_offset(record(0, 600, 1000, 1100)) == us(250)

    def test_delay_req_attack(self):
        assert compute_offset(record(0, 100, 200, 800)) == -us(250)

    def test_incomplete(self):
        with pytest.raises(IncompleteRound):
            compute_offset(SyncRoundRecord(0, (), 1, 2, None, 4))

    def test_odd_sum_truncates(self):
        rec = SyncRoundRecord(0, (), 0, 3, 0, 0)
        assert compute_offset(rec) == 1
        rec = SyncRoundRecord(0, (), 0, 0, 0, 3)
        assert compute_offset(rec) == -1

    def test_expected_under_attack(self):
        assert expected_offset_under_attack(us(7), us(500), us(500)) == us(7)
        assert expected_offset_under_attack(0, us(500), 0) == us(250)
        assert expected_offset_under_attack(0, 0, us(500)) == -us(250)


class TestRtt:
    def test_forward(self):
        rec = record(0, 600, 1000, 1100, 610, 710, 1110, 1210)
        assert rtt_measurements(rec) == (us(700), us(200))

    def test_asymmetry(self):
        assert asymmetry_estimate(us(700), us(200)) == us(500)
        assert asymmetry_estimate(us(300), us(300)) == 0
        assert asymmetry_estimate(us(200), us(700)) == -us(500)

    def test_needs_meas(self):
        with pytest.raises(IncompleteRound):
            rtt_measurements(record(0, 600, 1000, 1100))

    @given(st.integers(-10**12, 10**12))
    @settings(max_examples=100)
    def test_slave_offset_drops_out(self, shift):
        rec = record(0, 600, 1000, 1100, 610, 710, 1110, 1210)
        moved = SyncRoundRecord(0, (1,), rec.t1, rec.t2 + shift, rec.t3 + shift, rec.t4,
                                {1: rec.t_m1[1] + shift}, dict(rec.t_m2), dict(rec.t_m3), {1: rec.t_m4[1] + shift})
        assert rtt_measurements(moved) == rtt_measurements(rec)


class TestRectify:
    def test_cases(self):
        assert rectified_offset(us(250), us(500)) == 0
        assert rectified_offset(us(42), 0) == us(42)
        assert rectified_offset(-us(250), -us(500)) == 0


class TestOverhead:
    @pytest.mark.parametrize("n,count", [(0, 4), (1, 8), (2, 12), (3, 16)])
    def test_formula(self, n, count):
        assert messages_per_cycle(n) == count

    def test_negative(self):
        with pytest.raises(ValueError):
            messages_per_cycle(-1)

    def test_rotation(self):
        assert [paths_for_round(s, 3, Mode.PTPSEC, PathPolicy.ROTATE) for s in range(4)] == [(1,), (2,), (3,), (1,)]
        assert paths_for_round(0, 3, Mode.PTPSEC, PathPolicy.ALL) == (1, 2, 3)
        assert paths_for_round(0, 3, Mode.PTP, PathPolicy.ALL) == ()


def drive_round(n=1, mode=Mode.PTPSEC, offset=0, d=us(100), eps_sync=0):
    """Run one round by hand with fixed link delay ``d`` on every path."""
    master = MasterPort(n, mode)
    slave = SlavePort(n, mode, threshold=1)
    queue = []  # (true_time, side, action, message)
    now = 0
    log = []

    def post(side, sends, at):
        for s in sends:
            queue.append((at + s.after, side, "tx", s.message))

    post("M", master.start_round(0), 0)
    while queue:
        queue.sort(key=lambda item: item[0])
        now, side, action, msg = queue.pop(0)
        port = master if side == "M" else slave
        local = now + (offset if side == "S" else 0)
        if action == "tx":
            log.append(msg.kind)
            post(side, port.on_egress(msg, local), now)
            extra = eps_sync if msg.kind is MessageKind.SYNC else 0
            queue.append((now + d + extra, "S" if side == "M" else "M", "rx", msg))
        else:
            post(side, handle_message(port, msg, local), now)
    return master, slave, log


class TestStateMachines:
    def test_sync_triggers_one_meas(self):
        slave = SlavePort(1, Mode.PTPSEC)
        out = slave.on_receive(Message(MessageKind.SYNC, 0), 1_000)
        assert len(sends_of_kind(out, MessageKind.MEAS)) == 1
        meas = sends_of_kind(out, MessageKind.MEAS)[0]
        assert meas.path_index == 1
        fups = slave.on_egress(meas.message, 2_000)
        assert [s.message.kind for s in fups] == [MessageKind.MEAS_FUP]
        assert fups[0].message.timestamp == 2_000

    def test_delay_req_triggers_meas_and_response(self):
        master = MasterPort(1, Mode.PTPSEC)
        master.start_round(0)
        master.on_egress(Message(MessageKind.SYNC, 0), 0)
        master.on_receive(Message(MessageKind.MEAS, 0, 1), 500)
        out = master.on_receive(Message(MessageKind.DELAY_REQ, 0), 900)
        kinds = sorted(s.message.kind.value for s in out)
        assert kinds == ["Delay_Resp", "Meas"]
        fup = master.on_egress(sends_of_kind(out, MessageKind.MEAS)[0].message, 910)
        assert [s.message.kind for s in fup] == [MessageKind.MEAS_FUP]

    def test_duplicate_follow_up(self):
        slave = SlavePort(1, Mode.PTPSEC)
        slave.on_receive(Message(MessageKind.SYNC, 0), 10)
        slave.on_receive(Message(MessageKind.FOLLOW_UP, 0, 0, 3), 20)
        with pytest.raises(DuplicateMessage):
            slave.on_receive(Message(MessageKind.FOLLOW_UP, 0, 0, 99), 30)
        assert slave.rounds[0].t1 == 3

    def test_unknown_seq(self):
        with pytest.raises(UnknownSeq):
            SlavePort(1).on_receive(Message(MessageKind.DELAY_RESP, 4, 0, 1), 5)

    def test_stale_round(self):
        slave = SlavePort(1, window=3)
        slave.on_receive(Message(MessageKind.SYNC, 0), 0)
        slave.on_receive(Message(MessageKind.SYNC, 3), 0)
        assert slave.dropped == 1
        with pytest.raises(StaleRound):
            slave.on_receive(Message(MessageKind.MEAS, 0, 1), 0)

    def test_master_rejects_sync(self):
        master = MasterPort(1)
        master.start_round(0)
        with pytest.raises(ProtocolError):
            master.on_receive(Message(MessageKind.SYNC, 0), 0)

    @pytest.mark.parametrize("n", [1, 2, 3])
    def test_full_round_counts(self, n):
        master, slave, log = drive_round(n)
        assert len(log) == messages_per_cycle(n)
        assert not master.rounds and not slave.rounds
        (rec,) = slave.pop_completed()
        assert rec.is_complete()

    def test_ptp_mode_has_no_meas(self):
        _, slave, log = drive_round(2, Mode.PTP)
        assert MessageKind.MEAS not in log and MessageKind.MEAS_FUP not in log
        assert len(log) == 4

    def test_finish_round_symmetric(self):
        _, slave, _ = drive_round(1, offset=us(30))
        report = slave.finish_round(slave.pop_completed()[0])
        assert report.theta_rep == us(30)
        assert report.alphas == {1: 0}
        assert report.correction == us(30)
        assert not report.verdict.attacked

    def test_finish_round_attacked(self):
        _, slave, _ = drive_round(1, eps_sync=us(500))
        report = slave.finish_round(slave.pop_completed()[0])
        assert report.theta_rep == us(250)
        assert report.alphas == {1: us(500)}
        assert report.theta_rect == 0
        assert report.verdict.attacked

    def test_finish_incomplete(self):
        with pytest.raises(IncompleteRound):
            SlavePort(1).finish_round(SyncRoundRecord(0, (1,), 1, 2, 3, 4))
