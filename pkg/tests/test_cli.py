import csv
import subprocess
import sys

import numpy as np
import pytest

from flockctl import io
from flockctl.cli import main
from flockctl.config import ConfigError, load_config
from flockctl.core import SwarmState


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def write_ini(path, text):
    path.write_text(text)
    return path


def run(tmp_path, command, *extra, name="out"):
    out = tmp_path / name
    code = main([command, "--out", str(out), *extra])
    return code, out


def test_simulate_consensus_writes_zero_spread(tmp_path, capsys):
    code, out = run(tmp_path, "simulate", "--set", "initial.source=consensus", "--set", "initial.N=5",
                    "--set", "grid.T=1")
    assert code == 0
    traj = read_csv(out / "trajectory.csv")
    assert traj[0] == ["t", "agent", "x1", "x2", "v1", "v2"]
    assert len(traj) == 1 + 11 * 5
    func = read_csv(out / "functionals.csv")
    assert func[0] == ["t", "V", "X"]
    assert len(func) == 12
    assert all(float(row[1]) == 0.0 for row in func[1:])
    assert "verdict:" in capsys.readouterr().out


def test_simulate_small_beta_is_unconditional(tmp_path, capsys):
    code, _ = run(tmp_path, "simulate", "--set", "model.beta=0.25", "--set", "initial.source=dispersed",
                  "--set", "grid.T=1")
    assert code == 0
    assert "verdict: Unconditional" in capsys.readouterr().out


def test_simulate_free_run_plateaus(tmp_path):
    # beta = 1 with spread-out initial data: V settles at a positive value
    code, out = run(tmp_path, "simulate", "--set", "initial.source=dispersed", "--set", "initial.box=20",
                    "--set", "initial.N=10", "--set", "grid.T=40", "--set", "grid.dt=0.2")
    assert code == 0
    V = np.array([float(r[1]) for r in read_csv(out / "functionals.csv")[1:]])
    assert V[-1] > 0.05 * V[0]
    assert abs(V[-1] - V[-20]) <= 1e-2 * V[-1]


def test_optimize_consensus_single_history_row(tmp_path):
    code, out = run(tmp_path, "optimize", "--set", "initial.source=consensus", "--set", "initial.N=4",
                    "--set", "grid.T=1")
    assert code == 0
    hist = read_csv(out / "history.csv")
    assert hist[0] == ["iter", "cost", "grad_norm"]
    assert len(hist) == 2 and float(hist[1][2]) == 0.0
    ctrl = read_csv(out / "control.csv")
    assert ctrl[0] == ["t", "agent", "u1", "u2"]
    heat = read_csv(out / "heatmap.csv")
    assert len(heat) == 4 and all(len(row) == 11 for row in heat)


def test_optimize_time_series_length(tmp_path):
    code, out = run(tmp_path, "optimize", "--set", "initial.N=3", "--set", "ocp.k_max=2")
    assert code == 0
    assert len(read_csv(out / "functionals.csv")) == 1 + 101
    assert len(read_csv(out / "control.csv")) == 1 + 101 * 3


def test_optimize_nonconvergence_is_not_an_error(tmp_path, capsys):
    code, out = run(tmp_path, "optimize", "--set", "initial.N=3", "--set", "grid.T=1", "--set", "ocp.k_max=1",
                    "--set", "ocp.tol=1e-12")
    assert code == 0
    assert "converged: false" in capsys.readouterr().out
    assert len(read_csv(out / "history.csv")) == 3


def test_sparse_consensus_heatmap_zero(tmp_path):
    code, out = run(tmp_path, "sparse", "--set", "initial.source=consensus", "--set", "initial.N=3",
                    "--set", "grid.T=0.5", "--set", "pso.max_iters=10")
    assert code == 0
    heat = np.array(read_csv(out / "heatmap.csv"), dtype=float)
    assert heat.shape == (3, 6)
    assert heat.max() <= 1e-6
    assert float((out / "sparsity.txt").read_text()) == 1.0


def test_meanfield_writes_study_and_marginals(tmp_path):
    code, out = run(tmp_path, "meanfield", "--n-list", "4,6", "--set", "grid.T=1", "--set", "study.bins=7")
    assert code == 0
    study = read_csv(out / "study.csv")
    assert study[0] == io.STUDY_HEADER
    assert [r[0] for r in study[1:]] == ["4", "6"]
    marg = read_csv(out / "marginal_N6.csv")
    assert marg[0] == ["axis", "bin_left", "bin_right", "free", "controlled"]
    assert len(marg) == 1 + 2 * 7
    for axis in "01":
        rows = [r for r in marg[1:] if r[0] == axis]
        assert sum(float(r[3]) for r in rows) == pytest.approx(1.0)
        assert sum(float(r[4]) for r in rows) == pytest.approx(1.0)


def test_reruns_are_byte_identical(tmp_path):
    args = ["--seed", "3", "--set", "initial.N=4", "--set", "grid.T=1", "--set", "ocp.k_max=5"]
    _, a = run(tmp_path, "optimize", *args, name="a")
    _, b = run(tmp_path, "optimize", *args, name="b")
    for f in ("control.csv", "trajectory.csv", "functionals.csv", "history.csv", "heatmap.csv"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_seed_flag_changes_output(tmp_path):
    _, a = run(tmp_path, "simulate", "--seed", "1", "--set", "grid.T=0.2", name="a")
    _, b = run(tmp_path, "simulate", "--seed", "2", "--set", "grid.T=0.2", name="b")
    assert (a / "trajectory.csv").read_bytes() != (b / "trajectory.csv").read_bytes()


def test_config_file_and_flag_precedence(tmp_path):
    ini = write_ini(tmp_path / "run.ini", "[run]\nseed = 4\n[grid]\nT = 2\ndt = 0.1\n[initial]\nN = 6\n")
    cfg = load_config(ini, {"grid.T": "1"})
    assert cfg.grid.T == 1.0 and cfg.initial.N == 6 and cfg.seed == 4


def test_state_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    s = SwarmState(rng.normal(size=(5, 3)), rng.normal(size=(5, 3)) / 7)
    io.write_state(tmp_path / "s.csv", s)
    back = io.read_state(tmp_path / "s.csv")
    np.testing.assert_array_equal(back.x, s.x)
    np.testing.assert_array_equal(back.v, s.v)


def test_simulate_from_state_file(tmp_path):
    s = SwarmState([[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [1.0, 0.0]])
    io.write_state(tmp_path / "s.csv", s)
    code, out = run(tmp_path, "simulate", "--set", "initial.source=file", "--set", f"initial.path={tmp_path / 's.csv'}",
                    "--set", "grid.T=0.5")
    assert code == 0
    assert len(read_csv(out / "trajectory.csv")) == 1 + 6 * 2


@pytest.mark.parametrize("text", ["[nonsense]\na = 1\n", "[grid]\nT = 1\ndt = 0.3\n", "[cost]\ngamma = -1\n",
                                  "[model]\nbogus = 2\n"])
def test_bad_config_exits_nonzero(tmp_path, text, capsys):
    ini = write_ini(tmp_path / "bad.ini", text)
    assert main(["simulate", "--config", str(ini), "--out", str(tmp_path / "o")]) != 0
    assert "error" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "missing.ini"), "--out", str(tmp_path / "o")]) == 2


def test_malformed_set_flag(tmp_path):
    assert main(["simulate", "--set", "grid.T", "--out", str(tmp_path / "o")]) == 2


def test_load_config_rejects_bad_override():
    with pytest.raises(ConfigError):
        load_config(None, {"nosection": "1"})


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "flockctl", "simulate", "--out", str(tmp_path / "o"),
                           "--set", "grid.T=0.2"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert proc.stdout.startswith("verdict:")
