"""End-to-end runs on a small scenario, log round trips, replay, CSV export,
and the CLI front end."""

import copy
import json

import pytest

from conftest import MINI_RAW, mini_raw

from behavnav.cli import main
from behavnav.runner import (
    BackendFailure,
    CorruptLog,
    export_csv,
    read_log,
    replay_log,
    run_scenario,
    write_log,
)
from behavnav.scenario import parse_scenario


def test_mini_run_succeeds(mini_run):
    summary, header, records = mini_run
    assert summary.success is True
    assert summary.bfa_pct == pytest.approx(100.0)
    assert summary.ticks == len(records)
    assert summary.path_length_m > 2.0
    assert summary.mean_tick_wall_ms > 0.0
    assert records[-1]["lm_i"] == 1
    assert header["n_landmarks"] == 1
    assert header["gait_caution"] is False


def test_run_is_deterministic(mini_run):
    _, header, records = mini_run
    _, header2, records2 = run_scenario(parse_scenario(copy.deepcopy(MINI_RAW)))
    assert header2 == header
    assert records2 == records


def test_run_writes_artifacts(tmp_path):
    summary, header, records = run_scenario(parse_scenario(copy.deepcopy(MINI_RAW)), out_dir=tmp_path)
    for name in ("run_log.jsonl", "summary.json", "costmap.pgm", "costmap.raw"):
        assert (tmp_path / name).exists(), name
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["success"] is True
    assert on_disk["ticks"] == summary.ticks
    h, r = read_log(tmp_path / "run_log.jsonl")
    assert h == header and r == records


def test_log_round_trip_is_byte_stable(mini_run, tmp_path):
    _, header, records = mini_run
    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    write_log(a, header, records)
    h, r = read_log(a)
    write_log(b, h, r)
    assert a.read_bytes() == b.read_bytes()


def test_replay_matches_run_summary(mini_run, tmp_path):
    summary, header, records = mini_run
    path = tmp_path / "log.jsonl"
    write_log(path, header, records)
    replayed = replay_log(path)
    assert replayed.core_fields() == summary.core_fields()
    assert replayed.mean_tick_wall_ms is None


def test_replay_threshold_override(mini_run, tmp_path):
    _, header, records = mini_run
    path = tmp_path / "log.jsonl"
    write_log(path, header, records)
    # the whole path rides the mat (undesirability 0.1): compliant at the
    # default cutoff, fully non-compliant at 0.05
    assert replay_log(path).bfa_pct == pytest.approx(100.0)
    assert replay_log(path, u_threshold=0.05).bfa_pct == pytest.approx(0.0)


def _log_lines(mini_run, tmp_path):
    _, header, records = mini_run
    path = tmp_path / "ok.jsonl"
    write_log(path, header, records)
    return path.read_text().splitlines()


def test_read_log_corruption(mini_run, tmp_path):
    lines = _log_lines(mini_run, tmp_path)

    def check(content, match):
        p = tmp_path / "bad.jsonl"
        p.write_text(content)
        with pytest.raises(CorruptLog, match=match):
            read_log(p)

    with pytest.raises(CorruptLog, match="cannot read"):
        read_log(tmp_path / "missing.jsonl")
    check("", "empty log")
    check("\n".join(lines[:1] + ["{oops"] + lines[1:]), "bad JSON")
    check("\n".join(lines[1:]), "not a header")
    check("\n".join(lines[:-1]), "missing end")
    check("\n".join(lines[:2] + ['{"type": "note"}'] + lines[2:]), "unexpected record type")
    check("\n".join(lines[:2] + lines[3:]), "ticks")


def test_export_csv(mini_run, tmp_path):
    summary, header, records = mini_run
    log = tmp_path / "log.jsonl"
    write_log(log, header, records)
    out = tmp_path / "traj.csv"
    n = export_csv(log, out)
    assert n == summary.ticks
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x,y,heading,v,omega,max_c,gait_caution"
    assert len(lines) == n + 1
    first = lines[1].split(",")
    assert float(first[0]) == pytest.approx(records[0]["t"], abs=1e-12)
    assert float(first[1]) == pytest.approx(records[0]["pose"][0], rel=1e-8, abs=1e-12)
    assert float(first[4]) == pytest.approx(records[0]["cmd"][0], rel=1e-8, abs=1e-12)
    assert first[7] in ("0", "1")


def test_export_csv_empty_log(mini_run, tmp_path):
    _, header, _ = mini_run
    log = tmp_path / "empty.jsonl"
    write_log(log, header, [])
    out = tmp_path / "empty.csv"
    assert export_csv(log, out) == 0
    assert out.read_text() == "t,x,y,heading,v,omega,max_c,gait_caution\n"


def test_unreachable_landmark_times_out():
    raw = copy.deepcopy(MINI_RAW)
    raw["world"]["landmarks"][0]["position"] = [50.0, 0.0]
    raw["timeout_s"] = 10.0
    summary, _, records = run_scenario(parse_scenario(raw))
    assert summary.success is False
    assert summary.ticks == 100  # dt 0.1 up to the 10 s timeout
    assert all(r["lm_i"] == 0 for r in records)


def test_backend_failure_without_fallback(tmp_path):
    raw = mini_raw(backends={
        "mode": "replay",
        "llm_fixtures": str(tmp_path / "no_llm.jsonl"),
        "vlm_fixtures": str(tmp_path / "no_vlm.jsonl"),
        "fallback": False,
    })
    with pytest.raises(BackendFailure):
        run_scenario(parse_scenario(raw))


def test_backend_fallback_recovers(tmp_path):
    raw = mini_raw(backends={
        "mode": "replay",
        "llm_fixtures": str(tmp_path / "no_llm.jsonl"),
        "vlm_fixtures": str(tmp_path / "no_vlm.jsonl"),
        "fallback": True,
    })
    summary, _, _ = run_scenario(parse_scenario(raw))
    assert summary.success is True


def scenario_file(tmp_path, raw=None):
    p = tmp_path / "scn.json"
    p.write_text(json.dumps(raw if raw is not None else MINI_RAW))
    return p


def test_cli_run_writes_out_and_prints_summary(tmp_path, capsys):
    p = scenario_file(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(p), "--out", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["success"] is True
    for name in ("run_log.jsonl", "summary.json", "costmap.pgm", "costmap.raw"):
        assert (out / name).exists(), name


def test_cli_seed_flag_matches_explicit_overrides(tmp_path, capsys):
    p = scenario_file(tmp_path)
    d1 = tmp_path / "d1"
    d2 = tmp_path / "d2"
    assert main(["run", str(p), "--seed", "5", "--out", str(d1)]) == 0
    assert main(["run", str(p), "--set", "seeds.sim=5", "--set", "seeds.optimizer=6",
                 "--set", "seeds.noise=7", "--out", str(d2)]) == 0
    capsys.readouterr()
    assert (d1 / "run_log.jsonl").read_bytes() == (d2 / "run_log.jsonl").read_bytes()


def test_cli_set_override_changes_run(tmp_path, capsys):
    p = scenario_file(tmp_path)
    assert main(["run", str(p), "--set", "timeout_s=2"]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed["success"] is False  # not enough time to reach the crate
    assert printed["ticks"] == 20


def test_cli_error_exit_codes(tmp_path, capsys):
    assert main(["run", "no-such-scenario"]) == 2
    p = scenario_file(tmp_path)
    assert main(["run", str(p), "--set", "garbage"]) == 2
    bad_log = tmp_path / "bad.jsonl"
    bad_log.write_text("")
    assert main(["replay", str(bad_log)]) == 2
    assert main([
        "run", str(p), "--backend", "replay",
        "--set", f"backends.llm_fixtures={tmp_path / 'no1.jsonl'}",
        "--set", f"backends.vlm_fixtures={tmp_path / 'no2.jsonl'}",
        "--set", "backends.fallback=false",
    ]) == 3
    capsys.readouterr()


def test_cli_replay_and_export(tmp_path, capsys):
    p = scenario_file(tmp_path)
    out = tmp_path / "out"
    assert main(["run", str(p), "--out", str(out)]) == 0
    run_json = json.loads(capsys.readouterr().out)
    log = out / "run_log.jsonl"
    assert main(["replay", str(log)]) == 0
    replay_json = json.loads(capsys.readouterr().out)
    assert replay_json["bfa_pct"] == pytest.approx(run_json["bfa_pct"])
    assert replay_json["success"] is True
    assert replay_json["mean_tick_wall_ms"] is None
    csv = tmp_path / "traj.csv"
    assert main(["export", str(log), "--csv", str(csv)]) == 0
    assert capsys.readouterr().out == f"wrote {run_json['ticks']} rows to {csv}\n"
    assert csv.exists()
