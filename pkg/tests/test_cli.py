import json

import pytest

from gstab.cli import build_parser, main, parse_groups, parse_seeds

from helpers import UNGUARDED, two_server_counterexample


def test_parse_seeds():
    assert parse_seeds("0-3") == (0, 1, 2, 3)
    assert parse_seeds("1,4,7") == (1, 4, 7)
    assert parse_seeds("0-1,9") == (0, 1, 9)


def test_parse_groups():
    assert parse_groups("0,1;2") == ((0, 1), (2,))


def test_flags_present():
    args = build_parser().parse_args([
        "run", "--topology", "ring:4", "--mode", "gentlerain", "--hb-hz", "20", "--stab-hz", "500",
        "--delay-ms", "100", "--skew-ms", "25", "--put-rate", "50", "--duration-ms", "200",
        "--seeds", "0-2", "--out", "x",
    ])
    assert (args.mode, args.hb_hz, args.delay_ms, args.seeds) == ("gentlerain", 20, 100, (0, 1, 2))


def test_run_writes_outputs(tmp_path, capsys):
    code = main(["run", "--topology", "ring:4", "--duration-ms", "200", "--seeds", "0-1",
                 "--out", str(tmp_path), "--traces"])
    assert code == 0
    assert len((tmp_path / "results.csv").read_text().splitlines()) == 3
    assert json.loads((tmp_path / "summary.json").read_text())["ok"]
    assert len(list((tmp_path / "traces").iterdir())) == 2
    assert "PASS" in capsys.readouterr().out


def test_check_subcommand(tmp_path, capsys):
    main(["run", "--topology", "ring:3", "--duration-ms", "200", "--out", str(tmp_path), "--traces"])
    trace = next((tmp_path / "traces").iterdir())
    assert main(["check", str(trace)]) == 0
    assert main(["check", "--json", str(trace)]) == 0
    line = capsys.readouterr().out.strip().splitlines()[-1]
    assert json.loads(line)["ok"]


def test_check_flags_failing_trace(tmp_path):
    trace = two_server_counterexample(UNGUARDED)
    path = tmp_path / "bad.trace"
    trace.write(path)
    assert main(["check", str(path)]) == 1


def test_check_unreadable(tmp_path):
    path = tmp_path / "junk.trace"
    path.write_text("not a trace\n")
    assert main(["check", str(path)]) == 2


def test_compare_subcommand(capsys):
    assert main(["compare", "--topology", "ring:6", "--delay-ms", "100", "--duration-ms", "300",
                 "--seeds", "0-1", "--no-check"]) == 0
    assert "gentlerain" in capsys.readouterr().out


def test_schedules_subcommand(capsys):
    assert main(["schedules", "--topology", "ring:3"]) == 0
    out = capsys.readouterr().out
    assert "cycle" in out and "unavailable" in out


def test_bad_mode_exits_nonzero(capsys):
    assert main(["run", "--mode", "eventual"]) == 2


def test_missing_subcommand():
    with pytest.raises(SystemExit):
        main([])
