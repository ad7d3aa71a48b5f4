from __future__ import annotations

import json

import pytest

from ptpsec_sim import cli
from ptpsec_sim.output import csv_header, emit_outputs
from ptpsec_sim.protocol import Mode
from ptpsec_sim.runner import NoRedundantPath, plan_paths, run_scenario
from ptpsec_sim.scenario import (
    ParseError,
    ValidationError,
    bundled_names,
    bundled_path,
    load_scenario,
    parse_scenario,
    parse_scenario_dict,
    parse_scenario_text,
    scenario_to_dict,
)
from ptpsec_sim.units import seconds, us

EXPECTED_CORPUS = {
    "fig6_static_sync", "fig7_static_dreq", "fig8_incremental", "fig9_timing",
    "fig10_mitigation", "cancel2_attack", "multipoint_3slaves",
}


def fig6_dict() -> dict:
    return json.loads(bundled_path("fig6_static_sync").read_text())


def single_path_dict() -> dict:
    d = fig6_dict()
    d["topology"]["edges"] = d["topology"]["edges"][:1]
    return d


class TestParse:
    def test_corpus_present(self):
        assert EXPECTED_CORPUS <= set(bundled_names())

    def test_fig6_parameters(self):
        s = load_scenario("fig6_static_sync")
        (spec,) = s.attacker.specs
        assert spec.profile.epsilon == us(500)
        assert (spec.profile.start, spec.profile.end) == (seconds(100), seconds(500))
        assert s.run.duration == seconds(600)
        assert s.protocol.sync_interval == seconds(1)

    def test_all_bundled_parse(self):
        for name in bundled_names():
            load_scenario(name)

    def test_missing_master(self):
        d = fig6_dict()
        del d["topology"]["master"]
        with pytest.raises(ValidationError, match="master"):
            parse_scenario_dict(d)

    def test_unknown_attack_edge(self):
        d = fig6_dict()
        d["attacks"][0]["edge"] = "nowhere"
        with pytest.raises(ValidationError, match="UnknownEdge"):
            parse_scenario_dict(d)

    def test_syntax_error_has_position(self):
        with pytest.raises(ParseError, match="line 2"):
            parse_scenario_text('{\n  "name": }')

    def test_wrong_type(self):
        d = fig6_dict()
        d["run"]["duration_s"] = "long"
        with pytest.raises(ParseError, match="duration_s"):
            parse_scenario_dict(d)

    def test_attack_beyond_duration(self):
        d = fig6_dict()
        d["run"]["duration_s"] = 300
        with pytest.raises(ValidationError):
            parse_scenario_dict(d)

    def test_file_path(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text(json.dumps(fig6_dict()))
        assert parse_scenario(path).name == "fig6_static_sync"

    @pytest.mark.parametrize("name", sorted(EXPECTED_CORPUS | {"fig9_timing_jitter"}))
    def test_round_trip(self, name):
        first = load_scenario(name)
        again = parse_scenario_dict(json.loads(json.dumps(scenario_to_dict(first))))
        assert scenario_to_dict(again) == scenario_to_dict(first)
        assert again == first


class TestRun:
    def test_single_path_ptpsec_rejected(self):
        s = parse_scenario_dict(single_path_dict())
        with pytest.raises(NoRedundantPath):
            run_scenario(s)

    def test_single_path_ptp_runs(self):
        d = single_path_dict()
        d["protocol"]["mode"] = "ptp"
        out = run_scenario(parse_scenario_dict(d))
        assert len(out.slaves["S"].rows) == 600

    def test_round_count(self):
        d = fig6_dict()
        d["run"]["duration_s"] = 600.5
        out = run_scenario(parse_scenario_dict(d))
        assert len(out.slaves["S"].rows) == 600

    def test_multipoint_paths_per_slave(self):
        s = load_scenario("multipoint_3slaves")
        plans = plan_paths(s)
        assert set(plans) == {"S1", "S2", "S3"}
        assert all(p.count >= 2 for p in plans.values())

    def test_multipoint_slave_unaffected_by_others(self):
        d = json.loads(bundled_path("multipoint_3slaves").read_text())
        full = run_scenario(parse_scenario_dict(d))
        d["topology"]["slaves"] = ["S2"]
        alone = run_scenario(parse_scenario_dict(d))
        keep = ("theta_rep", "theta_act", "theta_rect", "alphas", "attacked")
        rows = lambda run: [tuple(getattr(r, k) for k in keep) for r in run.rows]
        assert rows(full.slaves["S2"]) == rows(alone.slaves["S2"])

    def test_mode_override(self):
        s = load_scenario("fig6_static_sync").with_overrides(mode="ptp", seed=9)
        assert s.protocol.mode is Mode.PTP and s.run.seed == 9


class TestOutputs:
    def test_fig6_csv(self, tmp_path):
        out = run_scenario(load_scenario("fig6_static_sync"))
        emit_outputs(out, tmp_path)
        lines = (tmp_path / "rounds_S.csv").read_text().splitlines()
        assert lines[0] == "round,true_time_s,theta_rep_us,theta_act_us,theta_rect_us,alpha_p1_us,attacked"
        assert len(lines) == 601
        assert lines[301] == "300,300.000000000,0.000,250.000,-250.000,500.000,1"
        summary = json.loads((tmp_path / "summary.json").read_text())
        assert summary["slaves"]["S"]["rounds"] == 600

    def test_header_many_paths(self):
        assert csv_header(3)[-4:] == ["alpha_p1_us", "alpha_p2_us", "alpha_p3_us", "attacked"]

    def test_empty_run(self, tmp_path):
        d = fig6_dict()
        d["attacks"] = []
        d["run"]["duration_s"] = 0
        emit_outputs(run_scenario(parse_scenario_dict(d)), tmp_path)
        assert (tmp_path / "rounds_S.csv").read_text().count("\n") == 1

    def test_rerun_identical_bytes(self, tmp_path):
        for sub in ("a", "b"):
            emit_outputs(run_scenario(load_scenario("fig9_timing_jitter")), tmp_path / sub)
        for name in ("rounds_S.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestCli:
    def test_run_ok(self, tmp_path, capsys):
        assert cli.main(["run", "fig6_static_sync", "--out", str(tmp_path)]) == 0
        assert (tmp_path / "fig6_static_sync" / "rounds_S.csv").exists()
        assert "600 rounds" in capsys.readouterr().out

    def test_validate_bad(self, tmp_path):
        path = tmp_path / "bad.json"
        d = fig6_dict()
        del d["topology"]["master"]
        path.write_text(json.dumps(d))
        assert cli.main(["validate", str(path)]) == 2

    def test_validate_single_path(self, tmp_path):
        path = tmp_path / "single.json"
        path.write_text(json.dumps(single_path_dict()))
        assert cli.main(["validate", str(path)]) == 2
        assert cli.main(["run", str(path), "--out", str(tmp_path)]) == 2

    def test_paths(self, capsys):
        assert cli.main(["paths", "fig6_static_sync"]) == 0
        out = capsys.readouterr().out
        assert "2 edge-disjoint path(s)" in out and "P0" in out and "P1" in out

    def test_undetected_exit_code(self, tmp_path):
        d = fig6_dict()
        d["run"]["threshold_us"] = 1000  # above the 500 us estimate
        path = tmp_path / "blind.json"
        path.write_text(json.dumps(d))
        assert cli.main(["run", str(path), "--out", str(tmp_path)]) == 3

    def test_parallel_jobs(self, tmp_path):
        code = cli.main(["run", "fig6_static_sync", "fig7_static_dreq", "--jobs", "2", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "fig7_static_dreq" / "summary.json").exists()

    def test_list(self, capsys):
        assert cli.main(["list"]) == 0
        assert "cancel2_attack" in capsys.readouterr().out
