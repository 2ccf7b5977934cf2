import subprocess
import sys

import pytest

from star_rsma import channel
from star_rsma.cli import RUN_HEADER, main

DESK = "N_T = 4\nN_S = 8\nK_r = 1\nK_t = 1\nJ_r = 1\nJ_t = 1\nmax_outer = 3\n"


@pytest.fixture
def desk_file(tmp_path):
    p = tmp_path / "desk.cfg"
    p.write_text(DESK)
    return p


def test_selftest_exit_zero():
    p = subprocess.run([sys.executable, "-m", "star_rsma", "selftest", "--instances", "3"],
                       capture_output=True, text=True)
    assert p.returncode == 0, p.stdout + p.stderr


def test_run_row_and_report(desk_file, capsys):
    assert main(["run", "--config", str(desk_file), "--seed", "2"]) == 0
    out, err = capsys.readouterr()
    lines = out.splitlines()
    assert lines[0] == ",".join(RUN_HEADER)
    row = lines[1].split(",")
    assert row[0] == "RSMA_STAR" and row[1] == "2" and row[6] == "1"
    assert "min_rate = " in err


def test_run_twice_identical(desk_file, capsys):
    outs = []
    for _ in range(2):
        assert main(["run", "--config", str(desk_file), "--scheme", "sdma"]) == 0
        outs.append(capsys.readouterr().out)
    assert outs[0] == outs[1]


def test_run_writes_files_and_replay(desk_file, tmp_path, capsys):
    ch, tr, out = tmp_path / "ch.txt", tmp_path / "tr.csv", tmp_path / "row.csv"
    assert main(["run", "--config", str(desk_file), "--seed", "4", "--save-channels", str(ch),
                 "--trace", str(tr), "--out", str(out)]) == 0
    assert capsys.readouterr().out == ""
    assert tr.read_text().startswith("n,R,lambda")
    assert channel.load(ch).seed == 4
    assert main(["replay", str(ch), "--config", str(desk_file)]) == 0
    assert capsys.readouterr().out == out.read_text()


def test_env_layer_overrides_file(desk_file, monkeypatch, capsys):
    monkeypatch.setenv("STAR_RSMA_N_T", "2")
    assert main(["run", "--config", str(desk_file)]) == 0
    a = capsys.readouterr().out
    monkeypatch.delenv("STAR_RSMA_N_T")
    assert main(["run", "--config", str(desk_file)]) == 0
    assert capsys.readouterr().out != a


def test_sweep_rows(desk_file, tmp_path, capsys):
    spec = tmp_path / "sweep.cfg"
    spec.write_text("axis = d_m\ngrid = 60, 90\nschemes = RSMA_STAR, SDMA\nn_seeds = 2\n")
    assert main(["sweep", "--config", str(desk_file), "--spec", str(spec), "--cache", str(tmp_path / "c")]) == 0
    lines = [ln for ln in capsys.readouterr().out.splitlines() if not ln.startswith("#")]
    assert lines[0] == "axis,value,scheme,mean_minrate,stderr,n_ok,n_fail"
    assert len(lines) == 1 + 2 * 2


@pytest.mark.parametrize("argv", [
    ["run", "--bogus"],
    ["frobnicate"],
    ["sweep"],
    ["run", "--scheme", "NOMA"],
    ["run", "--config", "/nonexistent/file.cfg"],
])
def test_usage_and_config_errors_exit_one(argv):
    assert main(argv) == 1


def test_bad_config_value_exits_one(tmp_path):
    p = tmp_path / "bad.cfg"
    p.write_text("N_T = -3\n")
    assert main(["run", "--config", str(p)]) == 1
    p.write_text("colour = blue\n")
    assert main(["run", "--config", str(p)]) == 1


def test_bad_workers_exit_one(tmp_path):
    spec = tmp_path / "s.cfg"
    spec.write_text("axis = d_m\ngrid = 80\nn_seeds = 1\n")
    assert main(["sweep", "--spec", str(spec), "--workers", "0"]) == 1
