import csv
import io
import os
from pathlib import Path

import numpy as np
import pytest

from rmsmec.benchmarks import BenchmarkId
from rmsmec.channel import assemble, load_channel_dump
from rmsmec.harness.cli import ORACLE_COLUMNS, main, tiny_oracle_row
from rmsmec.harness.oracle import min_power_single, oracle_p2_grid, waterfill_min_power
from rmsmec.harness.report import csv_text, sibling
from rmsmec.harness.sweep import SweepSpec, mean_trace, summarize
from rmsmec.scenario import ConfigError, SystemParams
from rmsmec.solvers import init_point

ROOT = Path(__file__).resolve().parents[1]
CONFIG = str(ROOT / "configs" / "paper.toml")
TINY = ["--set", "K=2", "--set", "N=4", "--set", "M=4", "--set", "D=8e5", "--max-outer", "4"]


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_solve_paper_config_writes_row_and_trace(tmp_path):
    out = tmp_path / "solve.csv"
    assert main(["solve", "--config", CONFIG, "--seed", "7", "--out", str(out)]) == 0
    rows = _rows(out)
    assert len(rows) == 1 and rows[0]["benchmark"] == "Proposed" and rows[0]["seed"] == "7"
    assert rows[0]["feasible"] == "true"
    trace = _rows(tmp_path / "solve_trace.csv")
    assert trace[0]["iteration"] == "0"
    obj = [float(r["objective_J"]) for r in trace]
    assert obj[-1] == pytest.approx(float(rows[0]["objective_J"]), rel=1e-15)


def test_sweep_cardinality_and_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["sweep", "--param", "M", "--values", "4,9", "--seeds", "2", "--benchmarks", "LocalOnly,ThreeStage",
            *TINY]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = _rows(a)
    assert len(rows) == 2 * 2 * 2
    assert [r["value"] for r in rows] == ["4"] * 4 + ["9"] * 4
    summary = _rows(tmp_path / "a_summary.csv")
    assert len(summary) == 4 and all(r["n"] == "2" for r in summary)


def test_sweep_plot_renders_png(tmp_path):
    pytest.importorskip("matplotlib")
    out = tmp_path / "t.csv"
    assert main(["sweep", "--param", "T", "--values", "1,2", "--seeds", "1", "--benchmarks", "LocalOnly",
                 "--out", str(out), "--plot", *TINY]) == 0
    png = tmp_path / "t.png"
    assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_converge_rows(tmp_path):
    out = tmp_path / "c.csv"
    assert main(["converge", "--values", "4", "--seeds", "1", "--out", str(out), *TINY]) == 0
    rows = _rows(out)
    assert rows and [r["iteration"] for r in rows] == [str(i) for i in range(len(rows))]


def test_capacity_local_only_exact(tmp_path):
    out = tmp_path / "cap.csv"
    assert main(["capacity", "--values", "0.5", "--seeds", "1", "--benchmarks", "LocalOnly", "--out", str(out),
                 *TINY]) == 0
    assert float(_rows(out)[0]["bits"]) == 0.5 * 2e9 / 1e3


def test_exit_codes(tmp_path, capsys):
    assert main(["sweep", "--param", "Q", "--values", "1"]) == 2
    assert main(["solve", "--benchmarks", "Nope"]) == 2
    assert main(["solve", "--set", "no_such_key=1"]) == 2
    assert main(["solve", "--benchmarks", "LocalOnly", "--set", "D=3e6"]) == 1
    assert main(["solve", "--config", str(tmp_path / "missing.toml")]) == 3
    assert main(["solve", "--benchmarks", "LocalOnly", "--out", str(tmp_path / "no" / "dir" / "x.csv")]) == 3
    err = capsys.readouterr().err
    assert "no_such_key" in err


def test_dump_channels_round_trip(tmp_path):
    out = tmp_path / "ch.csv"
    assert main(["dump-channels", "--seed", "2", "--out", str(out), *TINY]) == 0
    ch = load_channel_dump(out.read_text())
    assert ch.h_r.shape == (2, 4) and ch.v.shape == (4, 4)


def test_oracle_subcommand(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["oracle", "--seeds", "1", "--levels", "60", "--out", str(out)]) == 0
    rows = _rows(out)
    assert list(rows[0]) == list(ORACLE_COLUMNS)
    assert float(rows[0]["relaxed_J"]) <= float(rows[0]["oracle_J"]) * (1 + 1e-6)


def test_tiny_oracle_row_orders_energies():
    p = SystemParams().replace(K=2, N=2, M=4)
    row = tiny_oracle_row(p, 0, levels=80)
    assert row["relaxed_J"] <= row["oracle_J"] * (1 + 1e-6)
    assert row["oracle_J"] <= row["rounded_J"] * (1 + 1e-6) + 1e-12


def test_single_user_single_subcarrier_oracle_is_inversion():
    p = SystemParams().replace(K=1, N=1, M=1, D=1.5e6)
    ch = assemble(np.full((1, 1), 1e-3), np.full((1, 1), 1e-3 + 0j), np.ones((1, 1), dtype=complex))
    a = init_point(p, ch)
    assert a.d_r[0] > 0 or a.d_m[0] > 0
    ref = oracle_p2_grid(p, ch, a, grid_levels=50)
    g12 = abs(ch.h_r[0, 0]) ** 2
    g3 = ch.cascade_gain(a.s)[0]
    expect = 0.0
    if a.d_r[0] > 0:
        expect += a.t1[0] * min_power_single(p, g12, a.d_r[0], a.t1[0])
    if a.d_m[0] > 0:
        expect += a.t2[0] * min_power_single(p, g12, a.d_m[0], a.t2[0])
        expect += a.t3[0] * min_power_single(p, g3, a.d_m[0], a.t3[0], p.delta2)
    assert ref.energy == pytest.approx(expect, rel=1e-4)


def test_waterfilling_meets_demand():
    p, total = waterfill_min_power([2.0, 0.5, 0.1], [1.0, 1.0, 1.0], 2.0)
    assert np.sum(np.log1p(np.array([2.0, 0.5, 0.1]) * p)) == pytest.approx(2.0, rel=1e-9)
    assert total == pytest.approx(p.sum())
    assert waterfill_min_power([1.0], [1.0], 0.0)[1] == 0.0


def test_sweep_spec_validation():
    with pytest.raises(ConfigError):
        SweepSpec("Q", (1,))
    with pytest.raises(ConfigError):
        SweepSpec("T", ())
    with pytest.raises(ConfigError):
        SweepSpec("T", (1,), metric="speed")
    spec = SweepSpec("T", [1, 2], ["Proposed"], range(3))
    assert spec.benchmarks == (BenchmarkId.Proposed,) and spec.seeds == (0, 1, 2)


def test_summary_and_mean_trace():
    rows = [dict(param="T", value=1, benchmark="P", bits="", objective_J=x, feasible=f)
            for x, f in ((1.0, True), (3.0, True), (9.0, False))]
    (s,) = summarize(rows)
    assert (s["n"], s["n_ok"], s["mean"]) == (3, 2, 2.0)
    tr = mean_trace([dict(M=4, seed=0, objective_J=v) for v in (4.0, 2.0)]
                    + [dict(M=4, seed=1, objective_J=v) for v in (6.0, 5.0, 1.0)])
    assert np.allclose(tr[4], [5.0, 3.5, 1.5])


def test_csv_formatting():
    text = csv_text([dict(a=True, b=0.1, c=float("nan"), d=np.float64(2.5))], ("a", "b", "c", "d"))
    assert text == "a,b,c,d\ntrue,0.1,nan,2.5\n"
    assert sibling(os.path.join("runs", "m.csv"), "_trace.csv") == os.path.join("runs", "m_trace.csv")
    assert list(csv.reader(io.StringIO(text)))[0] == ["a", "b", "c", "d"]
