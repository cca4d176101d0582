"""JSON run configurations.

A config is a JSON object::

    {
      "anisotropy": {"kind": "diagonal_quadratic", "params": {"coeffs": [1, 0.25, 0.25]}},
      "mobility": {"kind": "constant_one"},
      "curve": {"kind": "trefoil", "params": {}},
      "J": 512, "dt": 1e-4, "T": 3.5,
      "mass_treatment": "consistent",
      "newton": {"tol_residual": null, "max_iter": 20, "tol_step": 1e-12},
      "init": "interpolate",
      "forcing": null,
      "outputs": {"series_path": "series.csv", "frames_dir": "frames", "frames_every": 5000, "vtk": false}
    }

Only ``anisotropy``, ``curve``, ``J``, ``dt`` and ``T`` are required.
``forcing`` may be ``{"manufactured": <curve kind>, "params": {...}}``; the
named preset is then treated as the exact solution and the matching
right-hand side is added.  Relative output paths are taken relative to the
working directory.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .anisotropy import Anisotropy, Mobility, make_anisotropy, make_mobility
from .assembly import MASS_TREATMENTS, SchemeOptions, forcing_from_exact
from .errors import AniflowError, ConfigError
from .mesh import NodalField, PeriodicGrid
from .presets import CurvePreset, make_curve
from .ritz import ritz_project
from .solver import NewtonOptions

_TOP_KEYS = {"anisotropy", "mobility", "curve", "J", "dt", "T", "mass_treatment", "newton", "init",
             "forcing", "outputs", "name", "description"}
_OUTPUT_KEYS = {"series_path", "frames_dir", "frames_every", "vtk"}
_NEWTON_KEYS = {"tol_residual", "max_iter", "tol_step"}
INIT_METHODS = ("interpolate", "ritz")


@dataclass
class RunSetup:
    anisotropy: Anisotropy
    mobility: Mobility
    curve: CurvePreset
    grid: PeriodicGrid
    scheme: SchemeOptions
    newton: NewtonOptions
    initial: NodalField


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigError(f"missing required key '{where}{key}'")
    return d[key]


def _check_keys(d: dict, allowed: set, where: str):
    if not isinstance(d, dict):
        raise ConfigError(f"'{where.rstrip('.')}' must be a JSON object")
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"unknown key '{where}{extra[0]}'")


def _number(d: dict, key: str, kind=float, positive=True, where=""):
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and int(v) != v):
        raise ConfigError(f"'{where}{key}' must be {'an integer' if kind is int else 'a number'}, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"'{where}{key}' must be positive, got {v!r}")
    return kind(v)


@dataclass
class FlowConfig:
    anisotropy: dict
    curve: dict
    J: int
    dt: float
    T: float
    mobility: dict = field(default_factory=lambda: {"kind": "constant_one"})
    mass_treatment: str = "consistent"
    newton: dict = field(default_factory=dict)
    init: str = "interpolate"
    forcing: Optional[dict] = None
    outputs: dict = field(default_factory=dict)
    name: str = ""
    description: str = ""

    def __post_init__(self):
        self._validate()

    @classmethod
    def from_dict(cls, d: Any) -> "FlowConfig":
        _check_keys(d, _TOP_KEYS, "")
        kwargs = {k: _require(d, k, "") for k in ("anisotropy", "curve", "J", "dt", "T")}
        for k in ("mobility", "mass_treatment", "newton", "init", "forcing", "outputs", "name", "description"):
            if k in d:
                kwargs[k] = d[k]
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path) -> "FlowConfig":
        """Load a config file; JSON syntax errors become ConfigError, unreadable files OSError."""
        text = Path(path).read_text()
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("name", "description", "anisotropy", "mobility", "curve", "J",
                                              "dt", "T", "mass_treatment", "newton", "init", "forcing", "outputs")}

    def _validate(self):
        self.J = _number(self.__dict__, "J", int)
        if self.J < 3:
            raise ConfigError(f"'J' must be >= 3, got {self.J}")
        self.dt = _number(self.__dict__, "dt")
        self.T = _number(self.__dict__, "T", positive=False)
        if self.T < 0:
            raise ConfigError(f"'T' must be nonnegative, got {self.T}")
        M = round(self.T / self.dt)
        if abs(self.T / self.dt - M) > 1e-9:
            raise ConfigError(f"'T' = {self.T} is not an integer multiple of 'dt' = {self.dt}")
        if self.mass_treatment not in MASS_TREATMENTS:
            raise ConfigError(f"'mass_treatment' must be one of {MASS_TREATMENTS}, got {self.mass_treatment!r}")
        if self.init not in INIT_METHODS:
            raise ConfigError(f"'init' must be one of {INIT_METHODS}, got {self.init!r}")
        _check_keys(self.anisotropy, {"kind", "dim", "params"}, "anisotropy.")
        _require(self.anisotropy, "kind", "anisotropy.")
        _check_keys(self.mobility, {"kind"}, "mobility.")
        _require(self.mobility, "kind", "mobility.")
        _check_keys(self.curve, {"kind", "params"}, "curve.")
        _require(self.curve, "kind", "curve.")
        _check_keys(self.newton, _NEWTON_KEYS, "newton.")
        _check_keys(self.outputs, _OUTPUT_KEYS, "outputs.")
        if "frames_every" in self.outputs:
            fe = self.outputs["frames_every"]
            if isinstance(fe, bool) or not isinstance(fe, int) or fe < 0:
                raise ConfigError(f"'outputs.frames_every' must be a nonnegative integer, got {fe!r}")
        if self.forcing is not None:
            _check_keys(self.forcing, {"manufactured", "params"}, "forcing.")
            _require(self.forcing, "manufactured", "forcing.")

    @property
    def steps(self) -> int:
        return round(self.T / self.dt)

    @property
    def frames_every(self) -> int:
        return int(self.outputs.get("frames_every", 0))

    @property
    def series_path(self) -> Optional[str]:
        return self.outputs.get("series_path")

    @property
    def frames_dir(self) -> Optional[str]:
        return self.outputs.get("frames_dir")

    def _exact_solution(self, curve: CurvePreset) -> CurvePreset:
        name = self.forcing["manufactured"]
        params = self.forcing.get("params")
        if params is None:
            params = self.curve.get("params", {}) if name == self.curve["kind"] else {}
        exact = make_curve(name, **params)
        if not getattr(exact, "exact", False):
            raise ConfigError(f"'forcing.manufactured': preset {name!r} is not an exact solution")
        return exact

    def build(self) -> RunSetup:
        """Resolve all specs into solver objects; any invalid value raises ConfigError."""
        try:
            a = make_anisotropy(self.anisotropy["kind"], self.anisotropy.get("dim"),
                                **self.anisotropy.get("params", {}))
            m = make_mobility(self.mobility["kind"], a)
            curve = make_curve(self.curve["kind"], **self.curve.get("params", {}))
            if curve.dim != a.dim:
                raise ConfigError(f"'curve' is {curve.dim}-dimensional but 'anisotropy' is {a.dim}-dimensional")
            grid = PeriodicGrid(self.J)
            forcing = None
            if self.forcing is not None:
                forcing = forcing_from_exact(a, m, self._exact_solution(curve))
            scheme = SchemeOptions(self.dt, self.mass_treatment, forcing)
            newton = NewtonOptions(**self.newton)
            if self.init == "ritz":
                if not hasattr(curve, "d_rho"):
                    raise ConfigError(f"'init': ritz needs a smooth curve, {curve.kind!r} has no derivative")
                x0 = ritz_project(a, grid, curve.position, curve.d_rho)
            else:
                x0 = curve.nodes(grid)
        except ConfigError:
            raise
        except (AniflowError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        return RunSetup(a, m, curve, grid, scheme, newton, x0)
