import subprocess
import sys

import pytest

from adhoc_arena.cli import main
from adhoc_arena.metrics import AGGREGATE_COLUMNS, read_rows, write_rows

SCENARIO = "policy = lbr\nn_nodes = 20\nn_sessions = 3\nhorizon_s = 20\nseed = 7\n"
GRID = "policy = forp, lbr, mmbcr\nv_max_mps = 5, 50\nn_nodes = 20\nn_sessions = 2\nhorizon_s = 10\nreplicas = 1\n"


@pytest.fixture
def scenario_file(tmp_path):
    path = tmp_path / "scenario.txt"
    path.write_text(SCENARIO)
    return path


def test_run_writes_outputs(tmp_path, scenario_file):
    assert main(["run", str(scenario_file), "--out", str(tmp_path / "o"), "--trace"]) == 0
    for name in ("report.csv", "energy.csv", "routes.csv", "sessions.csv", "trace.csv"):
        assert (tmp_path / "o" / name).exists(), name
    [row] = read_rows(tmp_path / "o" / "report.csv")
    assert row["policy"] == "lbr" and row["seed"] == "7"


def test_run_twice_is_byte_identical(tmp_path, scenario_file):
    for d in ("a", "b"):
        assert main(["run", str(scenario_file), "--out", str(tmp_path / d)]) == 0
    for name in ("report.csv", "energy.csv", "routes.csv", "sessions.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_key_exits_2(tmp_path, caplog):
    bad = tmp_path / "bad.txt"
    bad.write_text("foo = 1\n")
    assert main(["run", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "foo" in caplog.text


def test_missing_file_exits_2(tmp_path):
    assert main(["run", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "o")]) == 2


def test_seed_env_override(tmp_path, scenario_file, monkeypatch):
    monkeypatch.setenv("ADHOC_ARENA_SEED", "99")
    assert main(["run", str(scenario_file), "--out", str(tmp_path / "o")]) == 0
    assert read_rows(tmp_path / "o" / "report.csv")[0]["seed"] == "99"
    monkeypatch.setenv("ADHOC_ARENA_SEED", "abc")
    assert main(["run", str(scenario_file), "--out", str(tmp_path / "p")]) == 2


def test_sweep_then_plot(tmp_path, monkeypatch):
    grid = tmp_path / "grid.txt"
    grid.write_text(GRID)
    assert main(["sweep", str(grid), "--out", str(tmp_path / "s"), "--jobs", "1"]) == 0
    assert main(["sweep", str(grid), "--out", str(tmp_path / "s"), "--jobs", "1", "--resume"]) == 0
    assert len(read_rows(tmp_path / "s" / "replicas.csv")) == 6
    monkeypatch.setenv("ADHOC_ARENA_SEED", "3")
    assert main(["sweep", str(grid), "--out", str(tmp_path / "t"), "--jobs", "1"]) == 0
    seeds_s = {r["seed"] for r in read_rows(tmp_path / "s" / "replicas.csv")}
    seeds_t = {r["seed"] for r in read_rows(tmp_path / "t" / "replicas.csv")}
    assert seeds_s.isdisjoint(seeds_t)
    assert main(["plot", str(tmp_path / "s" / "aggregate.csv"), "--out", str(tmp_path / "p")]) == 0
    # one condition: six metric panels plus one failure panel per speed
    assert len(list((tmp_path / "p").glob("*.gp"))) == 6 + 2


def test_plot_empty_csv_exits_2(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["plot", str(empty), "--out", str(tmp_path / "p")]) == 2
    header_only = tmp_path / "header.csv"
    write_rows(header_only, [], AGGREGATE_COLUMNS)
    assert main(["plot", str(header_only), "--out", str(tmp_path / "p")]) == 2


def test_bad_jobs_exits_2(tmp_path):
    grid = tmp_path / "grid.txt"
    grid.write_text(GRID)
    assert main(["sweep", str(grid), "--out", str(tmp_path / "s"), "--jobs", "0"]) == 2


def test_console_entry_point(tmp_path, scenario_file):
    proc = subprocess.run(
        [sys.executable, "-m", "adhoc_arena.cli", "run", str(scenario_file), "--out", str(tmp_path / "o")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "adhoc_arena.cli", "bogus"], capture_output=True, text=True)
    assert proc.returncode == 2
