import os
import subprocess
import sys

import numpy as np
import pytest

from hopflax.analysis import CSV_COLUMNS, MESH_SEED, read_csv
from hopflax.cli import UsageError, parse_and_run, parse_function
from hopflax.export import read_policy, read_xyz
from hopflax.mesh import gen_disc_mesh, load_triangle_mesh
from conftest import FIXTURES


def run_cli(*args, threads=None):
    cmd = [sys.executable, "-m", "hopflax"]
    if threads is not None:
        cmd += ["--threads", str(threads)]
    env = dict(os.environ, PYTHONWARNINGS="ignore")
    return subprocess.run(cmd + list(args), capture_output=True, text=True, env=env, timeout=1200)


def test_mesh_gen_round_trip(tmp_path, capsys):
    prefix = str(tmp_path / "disc")
    assert parse_and_run(["mesh-gen", "--disc", "2", "--h", "0.05", "--prefix", prefix]) == 0
    m = load_triangle_mesh(prefix + ".node", prefix + ".ele", prefix + ".neigh")
    ref = gen_disc_mesh(2.0, 0.05, 0.0, MESH_SEED)
    for f in ("vertices", "triangles", "tri_neighbors", "boundary"):
        assert np.array_equal(getattr(m, f), getattr(ref, f))
    assert f"{ref.n_vertices} vertices" in capsys.readouterr().out


def test_mesh_gen_for_target_edge(tmp_path):
    prefix = str(tmp_path / "d")
    assert parse_and_run(["mesh-gen", "--disc", "1", "--dx", "0.1", "--jitter", "0.15", "--prefix", prefix]) == 0
    m = load_triangle_mesh(prefix + ".node", prefix + ".ele")
    assert 0.09 <= m.h_max <= 0.1


def test_solve_stationary_writes_field_policy_and_vtk(tmp_path, capsys):
    out, vtk, pol = tmp_path / "sol.txt", tmp_path / "sol.vtk", tmp_path / "pol.txt"
    code = parse_and_run(["solve-stationary", "--test", "3", "--solver", "pi", "--quad", "trap",
                          "--dx", "0.2", "--out", str(out), "--vtk", str(vtk), "--policy", str(pol)])
    assert code == 0
    field = read_xyz(out)
    k = read_policy(pol)
    assert field.shape[1] == 3 and len(k) == len(field)
    assert np.all((k >= 0) & (k < len(k)))
    text = vtk.read_text()
    assert "SCALARS value double 1" in text and "SCALARS policy int 1" in text
    assert "iterations (pi)" in capsys.readouterr().out


def test_solve_stationary_flower(tmp_path, capsys):
    png = tmp_path / "flower.png"
    code = parse_and_run(["solve-stationary", "--test", "flower", "--mesh", str(FIXTURES / "flower"),
                          "--solver", "vi", "--plot", str(png)])
    assert code == 0 and png.stat().st_size > 0
    assert "rank correlation" in capsys.readouterr().out


def test_solve_stationary_custom_problem(tmp_path):
    out = tmp_path / "v.txt"
    code = parse_and_run(["solve-stationary", "--f", "const:1", "--boundary", "zero", "--disc", "1",
                          "--dx", "0.2", "--solver", "mpi", "--out", str(out)])
    assert code == 0
    v = read_xyz(out)
    r = np.hypot(v[:, 0], v[:, 1])
    assert np.all(v[np.isclose(r, 1.0), 2] == 0.0) and v[:, 2].max() > 0


def test_solve_evolutive(tmp_path, capsys):
    out = tmp_path / "u.txt"
    assert parse_and_run(["solve-evolutive", "--test", "1", "--dx", "0.2", "--out", str(out)]) == 0
    assert "E1" in capsys.readouterr().out
    assert parse_and_run(["solve-evolutive", "--u0", "norm", "--disc", "1", "--dx", "0.2",
                          "--final-time", "0.5", "--warm-start"]) == 0


def test_convergence_outputs(tmp_path, capsys):
    csv, dat = tmp_path / "t1.csv", tmp_path / "t1.dat"
    pngs = tmp_path / "err.png", tmp_path / "conv.png"
    code = parse_and_run(["convergence", "--test", "1", "--levels", "0.2,0.1", "--c", "0.5", "--exp", "0.5",
                          "--out", str(csv), "--gnuplot", str(dat), "--plot", str(pngs[0]),
                          "--plot-convergence", str(pngs[1])])
    assert code == 0
    assert csv.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    rows = read_csv(csv)
    assert len(rows) == 2 and rows[0]["eoc1"] == "" and float(rows[1]["eoc1"]) > 0
    assert rows[0]["seconds"] != ""
    assert all(p.stat().st_size > 0 for p in pngs)
    assert dat.read_text().startswith("# test1")
    assert capsys.readouterr().out == csv.read_text()


@pytest.mark.parametrize(
    "argv",
    [
        ["solve-stationary", "--test", "3", "--mesh", "x", "--disc", "1"],
        ["solve-stationary", "--test", "3", "--solver", "pi", "--refine"],
        ["solve-stationary", "--test", "3", "--f", "zero"],
        ["solve-stationary", "--test", "flower"],
        ["solve-stationary", "--test", "3", "--boundary", "zero"],
        ["solve-evolutive", "--test", "1", "--no-clamp"],
        ["solve-evolutive"],
        ["convergence", "--test", "1", "--out", "x.csv", "--solver", "vi"],
        ["convergence", "--test", "3", "--out", "x.csv", "--policy", "p.txt"],
        ["convergence", "--test", "5", "--out", "x.csv"],
        ["convergence", "--test", "3", "--out", "x.csv", "--levels", "0.1,-1"],
        ["mesh-gen", "--disc", "1", "--h", "0.1", "--dx", "0.1", "--prefix", "x"],
        ["solve-stationary", "--f", "nope", "--disc", "1"],
        ["--unknown"],
    ],
)
def test_bad_arguments_exit_nonzero(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    with pytest.raises(SystemExit) as exc:
        parse_and_run(argv)
    assert exc.value.code != 0


def test_missing_mesh_file_is_reported(tmp_path, capsys):
    code = parse_and_run(["solve-stationary", "--test", "3", "--mesh", str(tmp_path / "none")])
    assert code == 1
    assert "missing mesh file" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text, x, expected",
    [("zero", [3, 4], 0.0), ("const:2.5", [3, 4], 2.5), ("norm", [3, 4], 5.0), ("norm:3,0", [3, 4], 4.0),
     ("quadratic:2", [1, 1], 2.0), ("capped:1", [0, 0], -1.0), ("double-well", [1, 0], 0.0)],
)
def test_named_functions(text, x, expected):
    assert parse_function(text)(np.array([x], dtype=float))[0] == pytest.approx(expected)


@pytest.mark.parametrize("text", ["const", "norm:1", "const:a", "sine"])
def test_named_function_errors(text):
    with pytest.raises(UsageError):
        parse_function(text)


@pytest.mark.slow
@pytest.mark.parametrize("test_id", ["1", "3"])
def test_csv_identical_across_thread_counts(tmp_path, test_id):
    outputs = []
    for i, threads in enumerate((1, 4, 1)):
        path = tmp_path / f"run{i}.csv"
        res = run_cli("convergence", "--test", test_id, "--levels", "0.2,0.1", "--no-timing",
                      "--out", str(path), threads=threads)
        assert res.returncode == 0, res.stderr
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_thread_count_from_environment():
    env = dict(os.environ, HOPFLAX_THREADS="3", PYTHONWARNINGS="ignore")
    code = "import hopflax, numba; print(numba.get_num_threads())"
    res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True, env=env, timeout=300)
    assert res.stdout.strip() == "3"
