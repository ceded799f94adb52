import csv
import io
import json
import subprocess
import sys

import pytest

from plcbench.cli import EXIT_CONFIG, EXIT_OK, main


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def csv_tables(text):
    """Split multi-table CSV output on its header comments."""
    chunks = [c for c in text.split("# plcbench ") if c.strip()]
    return [list(csv.DictReader(io.StringIO(c.split("\n", 1)[1]))) for c in chunks]


def csv_rows(text):
    return csv_tables(text)[-1]


def test_tables_single_interface(capsys):
    code, out, _ = run(capsys, "--mode", "tables", "--interfaces", "ouc-udp", "--device", "314")
    assert code == EXIT_OK
    sizes, table1 = csv_tables(out)
    assert [r["size_bytes"] for r in sizes] == ["72", "94", "454"]
    assert len(table1) == 3


def test_tables_s7_fifty_values(capsys):
    code, out, _ = run(capsys, "--mode", "tables", "--interface", "s7", "--device", "314", "--n", "50")
    assert code == EXIT_OK
    assert csv_rows(out)[0]["efficiency_pct"] == "37.6"


def test_output_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert main(["--mode", "tables", "--format", "md", "--out", str(tmp_path / d)]) == EXIT_OK
        assert main(["--mode", "breakeven", "--format", "json", "--out", str(tmp_path / d)]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == ["breakeven.json", "table1_interfaces.md", "table2_message_sizes.md"]
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_header_tracks_configuration(capsys):
    _, first, _ = run(capsys, "--mode", "breakeven")
    _, second, _ = run(capsys, "--mode", "breakeven", "--n", "10")
    assert first.splitlines()[0].startswith("# plcbench ")
    assert first.splitlines()[0] != second.splitlines()[0]


def test_breakeven_json(capsys):
    code, out, _ = run(capsys, "--mode", "breakeven", "--format", "json", "--interface", "uadp")
    doc = json.loads(out)
    assert code == EXIT_OK
    assert [r["n_br"] for r in doc["rows"] if r["device"] == "1512"] == ["31", "37", "66"]
    assert [r["estimated_flag"] for r in doc["rows"] if r["device"] == "1512"] == [0, 0, 1]


def test_t_update_from_stats(tmp_path, capsys):
    stats = tmp_path / "stats.json"
    stats.write_text(json.dumps({"interface": "ouc-udp", "device": "s7-314", "n": 1, "min": 3.61}))
    _, out, _ = run(capsys, "--mode", "breakeven", "--interface", "ouc-udp", "--device", "314", "--n", "1",
                    "--t-update-from", str(stats))
    assert csv_rows(out)[0]["n_br"] == "184"


def test_scenario_mode(tmp_path, capsys):
    scenario = tmp_path / "s.json"
    scenario.write_text(json.dumps({"plc": "314", "t_update_ms": 1.0}))
    code, out, _ = run(capsys, "--mode", "breakeven", "--scenario", str(scenario))
    assert code == EXIT_OK
    assert csv_rows(out)[0]["n_br"] == "54"


def test_config_file_from_environment(tmp_path, capsys, monkeypatch):
    cfg = tmp_path / "bench.json"
    cfg.write_text(json.dumps({"mode": "tables", "interfaces": ["uadp"], "format": "json"}))
    monkeypatch.setenv("PLCBENCH_CONFIG", str(cfg))
    code, out, _ = run(capsys)
    assert code == EXIT_OK
    assert json.loads(out.split("\n{")[0])["table"] == "Message sizes"


@pytest.mark.parametrize("argv", [
    ["--mode", "measure", "--interface", "opcua-read", "--device", "314"],
    ["--mode", "breakeven", "--scenario", "/nonexistent/scenario.json"],
    ["--mode", "bogus"],
    [],
    ["--mode", "tables", "--n", "0"],
    ["--mode", "tables", "--n", "101"],
    ["--mode", "tables", "--interface", "profinet"],
    ["--mode", "tables", "--config", "/nonexistent.json"],
])
def test_configuration_errors_exit_one(argv, capsys, monkeypatch):
    monkeypatch.delenv("PLCBENCH_CONFIG", raising=False)
    code, _, err = run(capsys, *argv)
    assert code == EXIT_CONFIG
    assert "plcbench" in err and "error" in err


def test_selftest_mode(capsys):
    code, out, _ = run(capsys, "--mode", "roundtrip-selftest", "--count", "50")
    assert code == EXIT_OK
    assert all(r["failures"] == "0" for r in csv_rows(out))


def test_measure_writes_runs(tmp_path, capsys):
    code, _, _ = run(capsys, "--mode", "measure", "--interface", "ouc-udp", "--device", "314", "--n", "1",
                     "--count", "100", "--warmup", "10", "--out", str(tmp_path))
    assert code == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "runs").iterdir()) == ["ouc-udp_s7-314_n1.csv", "ouc-udp_s7-314_n1.json"]
    row = csv_rows((tmp_path / "measurements.csv").read_text())[0]
    assert float(row["min_ms"]) >= 1.0


def test_emulate_then_measure_against_endpoint():
    proc = subprocess.Popen([sys.executable, "-m", "plcbench.cli", "--mode", "emulate", "--device", "314",
                             "--interface", "s7", "--port-s7", "0", "--duration", "20"],
                            stdout=subprocess.PIPE, text=True)
    try:
        ports = json.loads(proc.stdout.readline())["ports"]
        result = subprocess.run([sys.executable, "-m", "plcbench.cli", "--mode", "measure", "--interface", "s7",
                                 "--device", "314", "--n", "10", "--count", "100", "--warmup", "5",
                                 "--endpoint", f"127.0.0.1:{ports['s7']}"], capture_output=True, text=True)
        assert result.returncode == EXIT_OK, result.stderr
        assert float(csv_rows(result.stdout)[0]["min_ms"]) >= 2.0
    finally:
        proc.terminate()
        assert proc.wait(10) == EXIT_OK
