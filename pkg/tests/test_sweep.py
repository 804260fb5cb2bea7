import csv
import math

import pytest

from adhoc_arena import sweep
from adhoc_arena.config import parse_grid
from adhoc_arena.metrics import METRIC_COLUMNS, REPORT_COLUMNS, read_rows
from adhoc_arena.sweep import run_sweep

GRID = """
policy = forp, mmbcr
v_max_mps = 5, 50
n_nodes = 20
n_sessions = 3
horizon_s = 15
replicas = 2
seed = 5
"""


@pytest.fixture(scope="module")
def grid():
    return parse_grid(GRID)


def test_one_cell_aggregate_is_mean_of_replicas(tmp_path):
    g = parse_grid("n_nodes = 15\nn_sessions = 2\nhorizon_s = 10\nreplicas = 25")
    out = run_sweep(g.scenarios(), tmp_path, jobs=1)
    assert out.ok and len(out.rows) == 25
    [agg] = read_rows(tmp_path / "aggregate.csv")
    assert agg["replicas"] == "25"
    for col in METRIC_COLUMNS:
        vals = [float(r[col]) for r in out.rows if r[col] != ""]
        if vals:
            assert float(agg[col]) == pytest.approx(math.fsum(vals) / len(vals), rel=1e-12)
        else:
            assert agg[col] == ""


def test_parallelism_does_not_change_outputs(tmp_path, grid):
    run_sweep(grid.scenarios(), tmp_path / "one", jobs=1)
    run_sweep(grid.scenarios(), tmp_path / "two", jobs=2)
    for name in ("replicas.csv", "aggregate.csv"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_resume_skips_done_rows_and_drops_truncated_line(tmp_path, grid):
    scenarios = grid.scenarios()
    run_sweep(scenarios[:3], tmp_path, jobs=1)
    path = tmp_path / "replicas.csv"
    with open(path, "a", encoding="utf-8") as fh:
        fh.write("deadbeef0000,1,forp")  # interrupted mid-row
    calls = []
    out = run_sweep(scenarios, tmp_path, jobs=1, resume=True, progress=lambda k, n: calls.append(n))
    assert out.skipped == 3
    assert calls and calls[-1] == len(scenarios) - 3
    rows = read_rows(path)
    keys = [(r["scenario_hash"], r["seed"]) for r in rows]
    assert len(keys) == len(set(keys)) == len(scenarios)
    fresh = tmp_path / "fresh"
    run_sweep(scenarios, fresh, jobs=1)
    assert path.read_bytes() == (fresh / "replicas.csv").read_bytes()


def test_failures_are_recorded(tmp_path, grid, monkeypatch):
    scenarios = grid.scenarios()[:2]
    bad_seed = scenarios[1].seed
    real = sweep.run_replica

    def flaky(sc):
        if sc.seed == bad_seed and sc.policy.value == scenarios[1].policy.value:
            raise RuntimeError("boom")
        return real(sc)

    monkeypatch.setattr(sweep, "run_replica", flaky)
    out = run_sweep(scenarios, tmp_path, jobs=1)
    assert not out.ok
    with open(tmp_path / "failures.csv", encoding="utf-8") as fh:
        [fail] = list(csv.DictReader(fh))
    assert "boom" in fail["error"] and fail["seed"] == str(bad_seed)
    assert len(read_rows(tmp_path / "replicas.csv")) == 1


def test_header_mismatch_refused(tmp_path, grid):
    (tmp_path / "replicas.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        run_sweep(grid.scenarios()[:1], tmp_path, jobs=1, resume=True)


def test_rows_have_fixed_schema(tmp_path, grid):
    run_sweep(grid.scenarios()[:2], tmp_path, jobs=1)
    header = (tmp_path / "replicas.csv").read_text().splitlines()[0]
    assert header.split(",") == REPORT_COLUMNS
