"""YAML scenario files: geometry, medium, array, pulse and run parameters.

Lengths are given in central wavelengths ``lambda_c = 2 pi c_bar / omega_c``
and speeds in units of ``c_bar``, so a scenario does not depend on the
absolute scale. The full schema with defaults is documented in
``scenarios/SCHEMA.md``; :func:`load_scenario` accepts either a scenario
file or a manifest written by ``romwave synthesize``.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .core import Grid2D, InvalidArgumentError, Medium, Rect, SensorArray, TimeGrid, grid_spacing
from .inversion import BASIS_KINDS, SearchBasis, Setup, default_basis
from .signals import PulseSpec
from .wave_sim import BoundarySpec

SHAPES = ("ellipse", "rect", "bar")

DEFAULTS = {
    "name": "unnamed",
    "c_bar": 1.0,
    "pulse": {"omega_c": 2.0 * math.pi, "B": None},
    "domain": {"width": 10.0, "depth": 6.0, "h": None},
    "region": None,
    "inclusions": [],
    "array": {"m": 10, "spacing": 0.5, "row": 0},
    "time": {"tau": 1.0, "n": 40, "c_max": None, "support": 2.2, "cfl_safety": 0.5},
    "boundaries": {"top": "hard", "bottom": "soft", "left": "soft", "right": "soft"},
    "noise": {"level": 0.0, "seed": 0},
    "basis": {"kind": "hat", "d_range": None, "d_cross": None, "sigma_range": None,
              "sigma_cross": None, "size": None},
    "inversion": {"eps": 0.0, "quadrature": "midpoint", "stop_tol": 1e-3,
                  "gamma_tikhonov": 0.03, "gamma_tv": 0.01},
}


def _merge(defaults, given, path=""):
    if given is None:
        return copy.deepcopy(defaults)
    if not isinstance(defaults, dict):
        return given
    if not isinstance(given, dict):
        raise InvalidArgumentError(f"section {path or '<root>'} must be a mapping")
    unknown = set(given) - set(defaults)
    if unknown:
        raise InvalidArgumentError(f"unknown keys in {path or '<root>'}: {sorted(unknown)}")
    out = {}
    for key, value in defaults.items():
        sub = f"{path}.{key}" if path else key
        out[key] = _merge(value, given[key], sub) if key in given else copy.deepcopy(value)
    return out


@dataclass(frozen=True)
class Inclusion:
    """A region with speed ``contrast * c_bar``.

    ``ellipse`` uses ``center`` and ``radii``; ``rect`` uses ``x0, x1, z0,
    z1``; ``bar`` is a segment from ``start`` to ``end`` thickened to
    ``width``. Lengths are in wavelengths.
    """

    shape: str
    contrast: float
    params: dict

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        shape = d.pop("shape", None)
        if shape not in SHAPES:
            raise InvalidArgumentError(f"inclusion shape must be one of {SHAPES}, got {shape!r}")
        contrast = float(d.pop("contrast", 1.0))
        if not contrast > 0:
            raise InvalidArgumentError("inclusion contrast must be positive")
        need = {"ellipse": {"center", "radii"}, "rect": {"x0", "x1", "z0", "z1"},
                "bar": {"start", "end", "width"}}[shape]
        if set(d) != need:
            raise InvalidArgumentError(f"{shape} inclusion needs exactly the keys {sorted(need)}")
        return cls(shape, contrast, d)

    def to_dict(self):
        return {"shape": self.shape, "contrast": self.contrast, **self.params}

    def bounds(self):
        """Bounding box ``Rect`` in wavelengths."""
        p = self.params
        if self.shape == "ellipse":
            (x, z), (a, b) = p["center"], p["radii"]
            return Rect(x - a, x + a, z - b, z + b)
        if self.shape == "rect":
            return Rect(p["x0"], p["x1"], p["z0"], p["z1"])
        (xa, za), (xb, zb), w = p["start"], p["end"], 0.5 * p["width"]
        return Rect(min(xa, xb) - w, max(xa, xb) + w, min(za, zb) - w, max(za, zb) + w)

    def mask(self, X, Z):
        p = self.params
        if self.shape == "ellipse":
            (x, z), (a, b) = p["center"], p["radii"]
            return ((X - x) / a) ** 2 + ((Z - z) / b) ** 2 < 1.0
        if self.shape == "rect":
            return (X >= p["x0"]) & (X <= p["x1"]) & (Z >= p["z0"]) & (Z <= p["z1"])
        (xa, za), (xb, zb) = p["start"], p["end"]
        dx, dz = xb - xa, zb - za
        L2 = dx * dx + dz * dz
        s = np.clip(((X - xa) * dx + (Z - za) * dz) / L2, 0.0, 1.0) if L2 > 0 else 0.0
        return (X - xa - s * dx) ** 2 + (Z - za - s * dz) ** 2 <= (0.5 * p["width"]) ** 2


class Scenario:
    """A validated scenario. ``config`` holds the fully resolved settings."""

    def __init__(self, config):
        cfg = _merge(DEFAULTS, config)
        self.name = str(cfg["name"])
        self.c_bar = float(cfg["c_bar"])
        omega_c = float(cfg["pulse"]["omega_c"])
        B = cfg["pulse"]["B"]
        self.pulse = PulseSpec(omega_c, omega_c / 4.0 if B is None else float(B))
        cfg["pulse"]["B"] = self.pulse.B
        self.wavelength = self.c_bar * self.pulse.wavelength
        lam = self.wavelength

        dom = cfg["domain"]
        h = dom["h"]
        h = grid_spacing(self.pulse.omega_c, self.pulse.B, self.c_bar) / lam if h is None else float(h)
        dom["h"] = h
        nx = int(round(float(dom["width"]) / h)) + 1
        nz = int(round(float(dom["depth"]) / h)) + 1
        self.grid = Grid2D(nx, nz, h * lam, (0.0, 0.5 * h * lam))

        if cfg["region"] is None:
            raise InvalidArgumentError("scenario needs a 'region' (the inversion domain)")
        r = cfg["region"]
        self.region_wl = Rect(float(r["x0"]), float(r["x1"]), float(r["z0"]), float(r["z1"]))
        self.region = _scaled(self.region_wl, lam)
        x0, x1, z0, z1 = self.grid.extent
        if not Rect(x0, x1, z0, z1).contains(self.region):
            raise InvalidArgumentError("region extends outside the domain")

        self.inclusions = tuple(Inclusion.from_dict(d) for d in cfg["inclusions"] or ())
        for q, inc in enumerate(self.inclusions):
            if not self.region_wl.contains(inc.bounds()):
                raise InvalidArgumentError(f"inclusion {q} is not inside the region")
        cfg["inclusions"] = [inc.to_dict() for inc in self.inclusions]

        a = cfg["array"]
        self.array = SensorArray.centered(self.grid, int(a["m"]), float(a["spacing"]) * lam,
                                          int(a["row"]))
        self.boundaries = BoundarySpec(**cfg["boundaries"])

        t = cfg["time"]
        tau = float(t["tau"]) * math.pi / self.pulse.omega_c
        c_max = t["c_max"]
        if c_max is None:
            c_max = 1.05 * max([1.0] + [inc.contrast for inc in self.inclusions])
            t["c_max"] = c_max
        self.time_grid = TimeGrid.build(tau, int(t["n"]), self.grid.h, float(c_max) * self.c_bar,
                                        float(t["support"]) * self.pulse.t_F,
                                        float(t["cfl_safety"]))

        self.noise_level = float(cfg["noise"]["level"])
        self.noise_seed = int(cfg["noise"]["seed"])
        if self.noise_level < 0:
            raise InvalidArgumentError("noise level must be nonnegative")
        if cfg["basis"]["kind"] not in BASIS_KINDS:
            raise InvalidArgumentError(f"basis kind must be one of {BASIS_KINDS}")
        inv = cfg["inversion"]
        if float(inv["eps"]) < 0:
            raise InvalidArgumentError("inversion eps must be nonnegative")
        self.config = cfg

    @property
    def eps(self):
        return float(self.config["inversion"]["eps"])

    def default_gamma(self, reg):
        return float(self.config["inversion"][f"gamma_{reg}"])

    def true_medium(self):
        X, Z = self.grid.coordinates()
        lam = self.wavelength
        c = np.full(self.grid.shape, self.c_bar)
        for inc in self.inclusions:
            c[inc.mask(X / lam, Z / lam)] = inc.contrast * self.c_bar
        medium = Medium(self.grid, c, self.c_bar, self.region)
        medium.check_near_array(self.array, 0.999 * self.c_bar * self.pulse.t_F)
        return medium

    def inclusion_mask(self):
        """Nodes covered by any inclusion."""
        X, Z = self.grid.coordinates()
        mask = np.zeros(self.grid.shape, dtype=bool)
        for inc in self.inclusions:
            mask |= inc.mask(X / self.wavelength, Z / self.wavelength)
        return mask

    def basis(self, kind=None):
        b = dict(self.config["basis"])
        kind = kind or b["kind"]
        lam = self.wavelength
        if kind == "hat" and b["d_range"] is not None:
            return SearchBasis.hat(self.grid, self.region, b["d_range"] * lam, b["d_cross"] * lam)
        if kind == "gaussian" and b["sigma_range"] is not None:
            return SearchBasis.gaussian(self.grid, self.region, b["d_range"] * lam,
                                        b["d_cross"] * lam, b["sigma_range"] * lam,
                                        b["sigma_cross"] * lam)
        if kind == "pixel" and b["size"] is not None:
            return SearchBasis.pixel(self.grid, self.region, b["size"] * lam)
        return default_basis(kind, self.grid, self.region, lam)

    def setup(self, basis_kind=None, workers=None):
        return Setup(self.grid, self.c_bar, self.region, self.array, self.pulse,
                     self.time_grid, self.basis(basis_kind), self.boundaries, workers)

    def to_dict(self):
        return copy.deepcopy(self.config)

    def derived(self):
        """Quantities computed from the settings, echoed in manifests."""
        tg = self.time_grid
        return {"h": self.grid.h, "nx": self.grid.nx, "nz": self.grid.nz,
                "wavelength": self.wavelength, "t_F": self.pulse.t_F, "tau": tg.tau,
                "dt": tg.dt, "steps_per_tau": tg.steps_per_tau, "t_start": tg.t_start,
                "m": self.array.m, "sensor_nodes": [list(p) for p in self.array.nodes]}


def _scaled(rect, s):
    return Rect(rect.x0 * s, rect.x1 * s, rect.z0 * s, rect.z1 * s)


def load_scenario(path):
    """Read a scenario YAML file or a synthesis manifest."""
    path = Path(path)
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"{path} does not contain a mapping")
    if "scenario" in data and "files" in data:
        data = data["scenario"]
    return Scenario(data)
