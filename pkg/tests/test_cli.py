import csv

import numpy as np
import pytest
import yaml

from romwave.cli import EXIT_IO, EXIT_NUMERICAL, EXIT_OK, EXIT_VALIDATION, main
from romwave.fileio import read_cube, read_grid


@pytest.fixture(scope="module")
def synthesized(tmp_path_factory, scenario_dir):
    out = tmp_path_factory.mktemp("cli") / "small"
    assert main(["synthesize", str(scenario_dir / "small.yaml"), str(out)]) == EXIT_OK
    return out


def test_synthesize_writes_self_describing_files(synthesized):
    manifest = yaml.safe_load((synthesized / "manifest.yaml").read_text())
    assert manifest["scenario"]["array"]["m"] == 4
    assert manifest["derived"]["h"] == pytest.approx(0.1)
    cube = read_cube(synthesized / "cube.rwiv")
    assert cube.m == 4 and cube.count == manifest["cube"]["count"]
    speed, h = read_grid(synthesized / "true_speed.rwiv")
    assert speed.shape[1:] == (manifest["derived"]["nx"], manifest["derived"]["nz"])
    assert not list(synthesized.glob(".*"))  # no temporary files left behind


def test_manifest_round_trip_is_bitwise(synthesized, tmp_path):
    assert main(["synthesize", str(synthesized / "manifest.yaml"), str(tmp_path)]) == EXIT_OK
    for name in ("cube.rwiv", "cube_clean.rwiv", "true_speed.rwiv"):
        assert (tmp_path / name).read_bytes() == (synthesized / name).read_bytes()


def test_invert_outputs(synthesized, scenario_dir, tmp_path, capsys):
    code = main(["invert", str(scenario_dir / "small.yaml"), str(synthesized), "--iters", "2",
                 "--out", str(tmp_path)])
    assert code == EXIT_OK
    rows = list(csv.reader((tmp_path / "misfit.csv").open()))
    assert rows[0] == ["iter", "misfit"] and len(rows) >= 2
    summary = yaml.safe_load((tmp_path / "summary.yaml").read_text())
    assert summary["approach"] == "rom2" and summary["gamma"] == 0.03
    eta = list(csv.reader((tmp_path / "eta.csv").open()))
    assert eta[1][0] == "0" and all(float(v) == 0 for v in eta[1][1:])
    assert (tmp_path / "c_000.rwiv").exists()


def test_invert_tv_default_gamma(synthesized, scenario_dir, tmp_path):
    code = main(["invert", str(scenario_dir / "small.yaml"), str(synthesized), "--iters", "1",
                 "--reg", "tv", "--approach", "fwi", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert yaml.safe_load((tmp_path / "summary.yaml").read_text())["gamma"] == 0.01


def test_usage_and_io_errors(synthesized, scenario_dir, tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["invert", str(scenario_dir / "small.yaml"), str(synthesized), "--bogus"])
    assert err.value.code == EXIT_VALIDATION
    with pytest.raises(SystemExit):
        main(["invert", str(scenario_dir / "small.yaml"), str(synthesized), "--approach", "x"])
    assert main(["invert", str(scenario_dir / "small.yaml"), str(tmp_path / "none")]) == EXIT_IO
    bad = tmp_path / "bad.yaml"
    bad.write_text("region: {x0: 1, x1: 2, z0: 3, z1: 4}\narray: {m: -3}\n")
    assert main(["synthesize", str(bad), str(tmp_path / "o")]) == EXIT_VALIDATION
    # a cube from another scenario is rejected
    assert main(["invert", str(scenario_dir / "scenario_a.yaml"), str(synthesized)]) == EXIT_VALIDATION


def test_verify_list_and_pass(scenario_dir, capsys):
    assert main(["verify", "--list"]) == EXIT_OK
    listed = capsys.readouterr().out
    assert "datafit" in listed and "cholesky" in listed
    assert main(["verify", str(scenario_dir / "small.yaml")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "FAIL" not in out and "11/11 checks passed" in out


def test_verify_detects_perturbed_factor(scenario_dir, capsys):
    code = main(["verify", str(scenario_dir / "small.yaml"), "--only", "datafit",
                 "--perturb-r", "0.01"])
    assert code == EXIT_NUMERICAL
    assert "FAIL  datafit" in capsys.readouterr().out
    assert main(["verify", str(scenario_dir / "small.yaml"), "--only", "nope"]) == EXIT_VALIDATION


def test_bench_is_deterministic(scenario_dir, tmp_path, capsys):
    for name in ("a", "b"):
        main(["bench", str(scenario_dir / "small.yaml"), "--iters", "2", "--out",
              str(tmp_path / name)])
    out = capsys.readouterr().out
    assert "rom1" in out and "ideal" in out
    for f in ("bench_misfit.csv", "bench_final.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    header = (tmp_path / "a" / "bench_misfit.csv").read_text().splitlines()[0]
    assert header == "iter,rom1,rom2,fwi,ideal"


def test_homogeneous_scenario_is_fixed_point(scenario_dir, tmp_path):
    out = tmp_path / "h"
    assert main(["synthesize", str(scenario_dir / "small_homogeneous.yaml"), str(out)]) == EXIT_OK
    assert main(["invert", str(scenario_dir / "small_homogeneous.yaml"), str(out), "--iters", "2",
                 "--out", str(out / "r")]) == EXIT_OK
    grids = sorted((out / "r").glob("c_*.rwiv"))
    for g in grids:
        assert np.all(read_grid(g)[0] == 1.0)


def test_results_do_not_depend_on_thread_count(synthesized, scenario_dir, tmp_path):
    assert main(["--workers", "3", "synthesize", str(scenario_dir / "small.yaml"),
                 str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "cube.rwiv").read_bytes() == (synthesized / "cube.rwiv").read_bytes()
