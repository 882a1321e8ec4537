import json

import numpy as np
import pytest

from emberline.cli import main
from emberline.geodata import Raster, write_ascii_grid
from emberline.snapshot import read_snapshots


def _run(tmp_path, name, *extra):
    out = tmp_path / name
    code = main(["run", "--rows", "16", "--cols", "16", "--out-dir", str(out), *extra])
    return code, out


def test_zero_steps_returns_initial(tmp_path, capsys):
    code, out = _run(tmp_path, "zero", "--env", "synthetic", "--steps", "0")
    assert code == 0
    assert (out / "final.snap").read_text() == (out / "initial.snap").read_text()
    assert "unburned=" in capsys.readouterr().out


def test_same_seed_identical(tmp_path):
    _, a = _run(tmp_path, "a", "--steps", "200", "--mode", "stochastic", "--seed", "7", "--wind-speed", "1.5")
    _, b = _run(tmp_path, "b", "--steps", "200", "--mode", "stochastic", "--seed", "7", "--wind-speed", "1.5")
    assert (a / "final.snap").read_bytes() == (b / "final.snap").read_bytes()


def test_manifest_replay_byte_identical(tmp_path):
    _, a = _run(tmp_path, "a", "--steps", "25", "--seed", "3", "--record", "--ignition", "2,3",
                "--ignition", "9,9", "--p-base", "0.45", "--wind-speed", "2", "--wind-dir", "1.2")
    code = main(["run", "--manifest", str(a / "manifest.txt"), "--out-dir", str(tmp_path / "b")])
    assert code == 0
    for name in ("initial.snap", "final.snap", "trajectory.snap", "manifest.txt"):
        assert (a / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert len(read_snapshots(a / "trajectory.snap")) == 26


def test_deterministic_mode_outputs(tmp_path):
    code, out = _run(tmp_path, "det", "--mode", "deterministic", "--steps", "5")
    assert code == 0
    assert (out / "final_burn_probability.asc").exists()
    assert len(read_snapshots(out / "final.snap")) == 1


def test_files_environment(tmp_path):
    dem = Raster(np.arange(36.0).reshape(6, 6), 30.0)
    lc = Raster(np.full((6, 6), 10), 30.0)
    write_ascii_grid(tmp_path / "dem.asc", dem)
    write_ascii_grid(tmp_path / "lc.asc", lc)
    code = main(["run", "--env", "files", "--dem", str(tmp_path / "dem.asc"), "--landcover", str(tmp_path / "lc.asc"),
                 "--steps", "3", "--out-dir", str(tmp_path / "o")])
    assert code == 0


def test_wind_schedule(tmp_path):
    (tmp_path / "wind.txt").write_text("# speed direction\n1.0 0.0\n3.0 1.57\n")
    code, _ = _run(tmp_path, "w", "--steps", "4", "--wind-schedule", str(tmp_path / "wind.txt"))
    assert code == 0
    (tmp_path / "bad.txt").write_text("fast\n")
    code, _ = _run(tmp_path, "w2", "--steps", "4", "--wind-schedule", str(tmp_path / "bad.txt"))
    assert code == 2


def test_exit_codes(tmp_path, capsys):
    assert main(["run", "--bogus"]) == 1
    assert main(["run", "--p-base", "-1", "--steps", "1", "--out-dir", str(tmp_path / "x")]) == 1
    assert main(["run", "--env", "files", "--dem", str(tmp_path / "nope.asc"), "--landcover", "x",
                 "--out-dir", str(tmp_path / "x")]) == 2
    (tmp_path / "broken.asc").write_text("ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n1 2\n")
    code = main(["run", "--env", "files", "--dem", str(tmp_path / "broken.asc"),
                 "--landcover", str(tmp_path / "broken.asc"), "--out-dir", str(tmp_path / "x")])
    assert code == 2
    assert main([]) == 1


def test_calibrate_missing_target(tmp_path, capsys):
    code = main(["calibrate", "--target", str(tmp_path / "missing.asc"), "--horizon", "5",
                 "--out-dir", str(tmp_path / "c")])
    assert code == 2
    assert "missing.asc" in capsys.readouterr().err


def test_calibrate_zero_iterations(tmp_path):
    mask = np.zeros((12, 12), dtype=np.int64)
    mask[5:8, 5:8] = 1
    write_ascii_grid(tmp_path / "mask.asc", Raster(mask, 1.0))
    out = tmp_path / "c"
    code = main(["calibrate", "--target", str(tmp_path / "mask.asc"), "--horizon", "3", "--rows", "12",
                 "--cols", "12", "--iterations", "0", "--out-dir", str(out)])
    assert code == 0
    lines = [ln for ln in (out / "calibration.log").read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 1
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["theta"]) == {"p_base", "alpha_w1", "alpha_w2", "alpha_s", "alpha_gamma", "p_continue"}


@pytest.mark.slow
def test_calibrate_self_test(tmp_path, capsys):
    code = main(["calibrate", "--self-test", "--out-dir", str(tmp_path / "st")])
    assert code == 0
    summary = json.loads((tmp_path / "st" / "summary.json").read_text())
    assert summary["iou"] > 0.8


def test_benchmark_table(capsys):
    code = main(["benchmark", "--sizes", "8", "--batches", "1,2", "--steps", "2", "--repeats", "3"])
    assert code == 0
    rows = capsys.readouterr().out.strip().splitlines()
    header = rows[0].split("\t")
    assert header[:5] == ["grid", "batch", "mode", "rng", "repeats"]
    assert len(rows) == 1 + 4
    for row in rows[1:]:
        fields = dict(zip(header, row.split("\t")))
        assert fields["repeats"] == "3"
        assert fields["rng"] == ("yes" if fields["mode"] == "stochastic" else "no")
    assert main(["benchmark", "--sizes", "0"]) == 1


def _mean_return(text):
    return float(text.split("mean_return=")[1].split()[0])


def test_rl_demo_heuristic_beats_random(tmp_path, capsys):
    assert main(["rl-demo", "--policy", "heuristic", "--episodes", "200", "--seed", "1"]) == 0
    heuristic = _mean_return(capsys.readouterr().out)
    assert main(["rl-demo", "--policy", "random", "--episodes", "200", "--seed", "1"]) == 0
    random = _mean_return(capsys.readouterr().out)
    assert heuristic > random


def test_rl_demo_untrained_and_traces(tmp_path, capsys):
    trace = tmp_path / "tr"
    code = main(["rl-demo", "--policy", "train", "--episodes", "0", "--eval-episodes", "3", "--preset", "smoke",
                 "--trace-dir", str(trace), "--traces", "2", "--out-dir", str(tmp_path / "o")])
    assert code == 0
    assert "episodes=3" in capsys.readouterr().out
    for i in range(2):
        snaps = read_snapshots(trace / f"episode_{i:03d}.snap")
        assert snaps and all(s.agent is not None for s in snaps)
        rows = (trace / f"episode_{i:03d}.tsv").read_text().splitlines()
        assert len(rows) == len(snaps)  # header plus one line per step
    assert json.loads((tmp_path / "o" / "stats.json").read_text())["episodes"] == 3
