"""Flat ``key = value`` run configuration and the falling-disk presets."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

from .errors import AleFsiError, InconsistentConfig, ParseError
from .iteration import IterationConfig
from .mesh import Geometry
from .navier_stokes import FluidParams
from .rigid_body import RigidParams, RigidState


@dataclass(frozen=True)
class RunConfig:
    preset: str = "heavy_ball"
    # geometry
    box: tuple = (-2.5, -2.5, 3.5, 3.5)
    center_x: float = 0.5
    center_y: float = 0.5
    y_offset: float = 0.0
    radius: float = 0.1
    h: float = 6.284e-2
    disk_h: float | None = None
    grading: float = 0.3
    far_h: float | None = 0.4
    near_distance: float = 0.3
    # fluid
    density: float = 1.0
    viscosity: float = 1.0
    picard_tol: float = 1e-10
    picard_max_iters: int = 30
    antisymmetric: bool = True
    # body
    body_density: float = 200.0 / math.pi
    gravity_x: float = 0.0
    gravity_y: float = -9.8
    initial_vx: float = 0.0
    initial_vy: float = 0.0
    initial_omega: float = 0.0
    # iteration
    schedule: str = "global"
    k_max: int = 5
    trajectory_tol: float = 0.0
    force_method: str = "boundary"
    collision_fraction: float = 0.5
    tau: float = 5e-4
    T: float = 0.1
    exact_boundary_motion: bool = False
    extension: str = "harmonic"
    # output
    out_dir: str = "out"
    snapshot_stride: int = 0

    def __post_init__(self):
        # building the parameter objects runs all their validation
        try:
            self.geometry()
            self.fluid()
            self.rigid()
            self.iteration()
        except InconsistentConfig:
            raise
        except (TypeError, ValueError) as exc:
            raise InconsistentConfig(str(exc)) from exc

    def geometry(self) -> Geometry:
        return Geometry(
            box=tuple(self.box),
            disk_center0=(self.center_x, self.center_y + self.y_offset),
            disk_radius=self.radius,
            target_h=self.h,
            disk_h=self.disk_h,
            grading=self.grading,
            far_h=self.far_h,
            near_distance=self.near_distance,
        )

    def fluid(self) -> FluidParams:
        return FluidParams(self.density, self.viscosity, self.picard_tol, self.picard_max_iters, self.antisymmetric)

    def rigid(self) -> RigidParams:
        return RigidParams(self.body_density, self.radius, (self.gravity_x, self.gravity_y))

    def iteration(self) -> IterationConfig:
        return IterationConfig(
            schedule=self.schedule,
            k_max=self.k_max,
            trajectory_tol=self.trajectory_tol,
            force_method=self.force_method,
            collision_fraction=self.collision_fraction,
            tau=self.tau,
            T=self.T,
            exact_boundary_motion=self.exact_boundary_motion,
            extension=self.extension,
            snapshot_stride=self.snapshot_stride,
        )

    def initial_state(self) -> RigidState:
        return RigidState(self.geometry().disk_center0, (self.initial_vx, self.initial_vy), self.initial_omega)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


PRESETS = {
    "heavy_ball": dict(body_density=200.0 / math.pi, T=0.1, tau=5e-4, h=6.284e-2, k_max=5),
    "light_ball": dict(body_density=10.0 / math.pi, T=0.05, tau=5e-4, h=6.284e-2, k_max=10),
    "refined": dict(tau=2.5e-5, h=4.879e-2),
    "refined_light": dict(body_density=10.0 / math.pi, T=0.05, tau=2.5e-5, h=4.879e-2, k_max=6),
}

_FIELDS = {f.name: f for f in fields(RunConfig)}
_BOOL = {"true": True, "yes": True, "on": True, "1": True, "false": False, "no": False, "off": False, "0": False}


def _convert(key: str, raw: str, line: int):
    kind = _FIELDS[key].type
    try:
        if key == "box":
            vals = tuple(float(x) for x in raw.replace(",", " ").split())
            if len(vals) != 4:
                raise ValueError("box needs four numbers: xmin ymin xmax ymax")
            return vals
        if "bool" in kind:
            return _BOOL[raw.lower()]
        if "int" in kind:
            return int(raw)
        if "float" in kind:
            if "None" in kind and raw.lower() == "none":
                return None
            return float(raw)
        return raw
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad value {raw!r} for {key}: {exc}", line=line) from exc


def preset_config(name: str, **overrides) -> RunConfig:
    if name not in PRESETS:
        raise InconsistentConfig(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return RunConfig(**{**PRESETS[name], "preset": name, **overrides})


def parse_config(text: str, preset: str | None = None) -> RunConfig:
    """Parse ``key = value`` lines (``#`` starts a comment).

    A ``preset`` key (or the ``preset`` argument, which wins) fills the
    defaults; every other key given explicitly overrides the preset.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _FIELDS:
            raise ParseError(f"unknown key {key!r}", line=lineno)
        if key in values:
            raise ParseError(f"duplicate key {key!r}", line=lineno)
        values[key] = _convert(key, val, lineno)
    name = preset or values.pop("preset", None)
    values.pop("preset", None)
    try:
        if name is None:
            return RunConfig(preset="custom", **values)
        return preset_config(name, **values)
    except AleFsiError:
        raise
    except (TypeError, ValueError) as exc:
        raise InconsistentConfig(str(exc)) from exc
