"""Scenario files: a TOML description of grid, weight, charges, fields and run settings.

Example::

    coupling = "ML"
    weight = "inverse_quadratic"

    [grid]
    L = 25.6
    n = 32

    [[particles]]
    mass = 1.0
    charge = 1.0
    radius = 1.0
    q = [0.0, 0.0, 0.0]
    p = [0.0, 0.0, 0.0]

    [fields]
    recipe = "soliton"

    [evolve]
    dt = 0.01
    T = 5.0

    [output]
    dir = "out"

Every table is checked for unknown keys before anything is allocated, so a
typo such as ``copling`` fails with an error that names it.
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, GeometryError
from .evolution import EvolveConfig, check_horizon
from .initial_data import coulomb_soliton, gradient_bump, plane_wave
from .sources import ChargeShape, CouplingMatrix, System
from .spectral import Grid, read_snapshot
from .state import ParticleState, PhaseSpacePoint
from .weights import load_tabulated_weight, make_weight

TOP_KEYS = {"grid", "weight", "coupling", "particles", "fields", "evolve", "output"}
GRID_KEYS = {"L", "n"}
WEIGHT_KEYS = {"kind", "file"}
PARTICLE_KEYS = {"mass", "charge", "radius", "q", "p"}
FIELD_KEYS = {"recipe", "mode", "polarization", "amplitude", "phase", "files", "violation"}
VIOLATION_KEYS = {"amplitude", "width", "center"}
EVOLVE_KEYS = {"scheme", "dt", "T", "picard_tol", "picard_max_iter", "quad_nodes",
               "contraction_guard", "dt_min"}
OUTPUT_KEYS = {"dir", "trajectory_every", "diagnostics_every", "snapshot_every"}
RECIPES = ("soliton", "soliton+plane_wave", "files")


@dataclass
class OutputConfig:
    dir: str = "out"
    trajectory_every: int = 1
    diagnostics_every: int = 1
    snapshot_every: int = 0


@dataclass
class Scenario:
    system: System
    phi0: PhaseSpacePoint
    evolve: EvolveConfig
    output: OutputConfig
    source: dict = field(default_factory=dict, repr=False)


def _check_keys(table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"{where} must be a table", key=where)
    for key in table:
        if key not in allowed:
            name = f"{where}.{key}" if where else key
            raise ConfigError(f"unknown config key {name!r}", key=name)


def _require(table, key, where):
    if key not in table:
        raise ConfigError(f"missing config key '{where}.{key}'", key=f"{where}.{key}")
    return table[key]


def _vec3(value, name):
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ConfigError(f"{name} must be a list of three numbers", key=name)
    return arr


def validate(raw):
    """Check key names and value shapes of a parsed scenario dict."""
    _check_keys(raw, TOP_KEYS, "")
    _check_keys(_require(raw, "grid", ""), GRID_KEYS, "grid")
    weight = raw.get("weight", "constant")
    if isinstance(weight, dict):
        _check_keys(weight, WEIGHT_KEYS, "weight")
    particles = raw.get("particles", [])
    if not isinstance(particles, list):
        raise ConfigError("particles must be an array of tables", key="particles")
    for i, pt in enumerate(particles):
        _check_keys(pt, PARTICLE_KEYS, f"particles[{i}]")
        m = float(_require(pt, "mass", f"particles[{i}]"))
        if m == 0 or not np.isfinite(m):
            raise ConfigError(f"particles[{i}].mass must be nonzero and finite", key=f"particles[{i}].mass")
    fields = raw.get("fields", {"recipe": "soliton"})
    _check_keys(fields, FIELD_KEYS, "fields")
    if fields.get("recipe", "soliton") not in RECIPES:
        raise ConfigError(f"unknown field recipe {fields['recipe']!r}", key="fields.recipe")
    if "violation" in fields:
        _check_keys(fields["violation"], VIOLATION_KEYS, "fields.violation")
    _check_keys(raw.get("evolve", {}), EVOLVE_KEYS, "evolve")
    _check_keys(raw.get("output", {}), OUTPUT_KEYS, "output")


def load_scenario(path, overrides=None):
    """Parse, validate and build a :class:`Scenario`.

    ``overrides`` maps evolve keys (``scheme``, ``dt``, ``T``) or ``out_dir``
    to values taken from the command line.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"scenario file {str(path)!r} not found", key="scenario") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse scenario: {exc}", key="scenario") from None
    return build_scenario(raw, base_dir=path.parent, overrides=overrides)


def build_scenario(raw, base_dir=Path("."), overrides=None):
    validate(raw)
    overrides = dict(overrides or {})
    g = raw["grid"]
    grid = Grid(float(_require(g, "L", "grid")), int(_require(g, "n", "grid")))

    weight = raw.get("weight", "constant")
    if isinstance(weight, dict):
        kind = weight.get("kind", "constant")
        if kind == "tabulated":
            w = load_tabulated_weight(Path(base_dir) / _require(weight, "file", "weight"), grid)
        else:
            w = make_weight(kind, grid)
    else:
        w = make_weight(str(weight), grid)

    specs = raw.get("particles", [])
    particles, shapes = [], []
    for i, pt in enumerate(specs):
        where = f"particles[{i}]"
        shape = ChargeShape(float(_require(pt, "radius", where)), float(pt.get("charge", 1.0)))
        try:
            shape.check_fits(grid)
        except GeometryError as exc:
            exc.details["key"] = f"{where}.radius"
            raise
        shapes.append(shape)
        particles.append(ParticleState(
            _vec3(pt.get("q", [0.0, 0.0, 0.0]), f"{where}.q"),
            _vec3(pt.get("p", [0.0, 0.0, 0.0]), f"{where}.p"),
            float(pt["mass"]),
        ))

    coupling = raw.get("coupling", "ML")
    if isinstance(coupling, str):
        cm = CouplingMatrix.from_preset(coupling, len(specs))
    else:
        cm = CouplingMatrix(np.asarray(coupling, dtype=float))
        if cm.N != len(specs):
            raise ConfigError(f"coupling matrix is {cm.N}x{cm.N} for {len(specs)} particles", key="coupling")
    system = System(grid, shapes, cm, w)

    ev = dict(raw.get("evolve", {}))
    for key in ("scheme", "dt", "T"):
        if overrides.get(key) is not None:
            ev[key] = overrides[key]
    cfg = EvolveConfig(**ev)
    if system.N:
        check_horizon(system, cfg.T, cfg.dt)

    fields = _build_fields(raw.get("fields", {"recipe": "soliton"}), particles, shapes, grid, base_dir)
    phi0 = PhaseSpacePoint(particles, fields, grid)

    out = OutputConfig(**raw.get("output", {}))
    if overrides.get("out_dir") is not None:
        out.dir = str(overrides["out_dir"])
    else:
        out.dir = str(Path(base_dir) / out.dir) if not Path(out.dir).is_absolute() else out.dir
    return Scenario(system, phi0, cfg, out, raw)


def _build_fields(spec, particles, shapes, grid, base_dir):
    recipe = spec.get("recipe", "soliton")
    if recipe == "files":
        files = _require(spec, "files", "fields")
        if len(files) != len(particles):
            raise ConfigError(f"fields.files lists {len(files)} files for {len(particles)} particles",
                              key="fields.files")
        fields = []
        for name in files:
            fp, _ = read_snapshot(Path(base_dir) / name)
            if fp.grid != grid:
                raise ConfigError(f"snapshot {name!r} is on a different grid", key="fields.files")
            fields.append(fp)
    else:
        fields = [coulomb_soliton(pt, s, grid) for pt, s in zip(particles, shapes)]
        if recipe == "soliton+plane_wave":
            wave = plane_wave(
                grid,
                _require(spec, "mode", "fields"),
                _require(spec, "polarization", "fields"),
                float(_require(spec, "amplitude", "fields")),
                float(spec.get("phase", 0.0)),
            )
            # the free wave is attached to the first charge's field
            fields[0] = fields[0] + wave
    if "violation" in spec:
        v = spec["violation"]
        bump = gradient_bump(grid, float(_require(v, "amplitude", "fields.violation")),
                             float(v.get("width", 1.0)), v.get("center", (0.0, 0.0, 0.0)))
        fields = [f + bump for f in fields]
    return fields
