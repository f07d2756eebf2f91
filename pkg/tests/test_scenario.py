import numpy as np
import pytest
import yaml

from romwave.core import InvalidArgumentError
from romwave.scenario import Inclusion, Scenario, load_scenario

BASE = {"region": {"x0": 1.5, "x1": 8.5, "z0": 2.2, "z1": 4.8}}


def test_defaults_match_desk_geometry():
    s = Scenario(BASE)
    assert s.grid.h == pytest.approx(0.1)
    assert s.grid.shape == (101, 61)
    assert s.grid.origin == pytest.approx((0.0, 0.05))
    assert s.array.m == 10
    assert s.time_grid.tau == pytest.approx(0.5) and s.time_grid.n == 40
    assert s.pulse.B == pytest.approx(np.pi / 2)
    assert np.all(s.true_medium().c == 1.0)


def test_h_override_and_units():
    s = Scenario({**BASE, "domain": {"width": 10, "depth": 6, "h": 0.05}, "c_bar": 2.0})
    assert s.wavelength == pytest.approx(2.0)
    assert s.grid.h == pytest.approx(0.1)  # 0.05 wavelengths of length 2
    assert s.grid.shape == (201, 121)


def test_validation_errors():
    with pytest.raises(InvalidArgumentError):
        Scenario({})
    with pytest.raises(InvalidArgumentError):
        Scenario({**BASE, "colour": "blue"})
    with pytest.raises(InvalidArgumentError):
        Scenario({**BASE, "array": {"mm": 3}})
    with pytest.raises(InvalidArgumentError):
        Scenario({**BASE, "inclusions": [{"shape": "ellipse", "center": [5, 1], "radii": [1, 1],
                                          "contrast": 1.1}]})
    with pytest.raises(InvalidArgumentError):
        Scenario({**BASE, "inclusions": [{"shape": "star", "contrast": 1.1}]})
    with pytest.raises(InvalidArgumentError):
        Scenario({**BASE, "inclusions": [{"shape": "rect", "x0": 2, "contrast": 1.1}]})
    with pytest.raises(InvalidArgumentError):
        Scenario({**BASE, "region": {"x0": -1, "x1": 5, "z0": 2, "z1": 3}})


def test_inclusion_shapes():
    X, Z = np.meshgrid(np.linspace(0, 4, 81), np.linspace(0, 4, 81), indexing="ij")
    disc = Inclusion.from_dict({"shape": "ellipse", "center": [2, 2], "radii": [1, 1],
                                "contrast": 1.1})
    area = disc.mask(X, Z).sum() * 0.05 ** 2
    assert area == pytest.approx(np.pi, rel=0.03)
    bar = Inclusion.from_dict({"shape": "bar", "start": [1, 1], "end": [3, 1], "width": 0.2,
                               "contrast": 0.8})
    m = bar.mask(X, Z)
    assert m[40, 20] and not m[40, 26] and not m[5, 20]
    assert bar.bounds().z0 == pytest.approx(0.9)
    rect = Inclusion.from_dict({"shape": "rect", "x0": 1, "x1": 2, "z0": 1, "z1": 3,
                                "contrast": 1.2})
    assert rect.to_dict()["contrast"] == 1.2


def test_later_inclusions_override_earlier():
    s = Scenario({**BASE, "inclusions": [
        {"shape": "rect", "x0": 3, "x1": 7, "z0": 2.5, "z1": 4.5, "contrast": 1.1},
        {"shape": "ellipse", "center": [5, 3.5], "radii": [0.5, 0.5], "contrast": 0.9}]})
    c = s.true_medium().c
    assert c[50, 34] == pytest.approx(0.9) and c[35, 34] == pytest.approx(1.1)
    assert s.inclusion_mask().sum() == np.sum(c != 1.0)


def test_example_files_load(scenario_dir):
    for path in sorted(scenario_dir.glob("*.yaml")):
        s = load_scenario(path)
        assert s.basis().n_rho > 0
    tc1 = load_scenario(scenario_dir / "test_case_1.yaml")
    assert (tc1.array.m, tc1.time_grid.n, tc1.eps) == (40, 75, 0.01)
    assert tc1.time_grid.tau == pytest.approx(np.pi / (3 * tc1.pulse.omega_c))
    assert np.diff(tc1.array.positions[:, 0]) == pytest.approx(0.25)
    tc2 = load_scenario(scenario_dir / "test_case_2.yaml")
    assert (tc2.array.m, tc2.time_grid.n) == (50, 118)
    assert np.diff(tc2.array.positions[:, 0]) == pytest.approx(0.35)
    assert tc2.default_gamma("tv") == 0.02


def test_manifest_is_a_scenario(tmp_path, scenario_dir):
    s = load_scenario(scenario_dir / "scenario_a.yaml")
    manifest = {"scenario": s.to_dict(), "files": {}}
    (tmp_path / "manifest.yaml").write_text(yaml.safe_dump(manifest))
    again = load_scenario(tmp_path / "manifest.yaml")
    assert again.to_dict() == s.to_dict()
    assert np.array_equal(again.true_medium().c, s.true_medium().c)
