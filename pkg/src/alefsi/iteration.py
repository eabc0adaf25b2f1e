"""Fixed-point iteration on rigid-body trajectories.

One application of the map ``F`` takes a guessed trajectory, moves the mesh
along it, solves the fluid on the moving mesh and integrates the body ODEs
with the resulting hydrodynamic loads.  Two schedules are provided: the
global one iterates whole trajectories, the per-timestep one iterates each
step to a fixed point before moving on.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import fem
from .errors import AleFsiError, CollisionGuard, InconsistentConfig
from .extension import extension_and_cutoff
from .mesh import DISK, Geometry, Mesh2D, generate_mesh, min_gap, move_nodes, snap_disk_boundary
from .navier_stokes import AleStepInput, FluidParams, ale_step
from .rigid_body import (
    RigidParams,
    RigidState,
    RigidTrajectory,
    hydrodynamic_load_boundary,
    hydrodynamic_load_bulk,
    trajectory_update,
)

log = logging.getLogger(__name__)

SCHEDULES = ("global", "per_timestep")
FORCE_METHODS = ("boundary", "bulk")


@dataclass(frozen=True)
class IterationConfig:
    schedule: str = "global"
    k_max: int = 5
    trajectory_tol: float = 0.0
    force_method: str = "boundary"
    collision_fraction: float = 0.5
    tau: float = 5e-4
    T: float = 0.1
    exact_boundary_motion: bool = False
    extension: str = "harmonic"
    snapshot_stride: int = 0

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise InconsistentConfig(f"schedule must be one of {SCHEDULES}")
        if self.force_method not in FORCE_METHODS:
            raise InconsistentConfig(f"force_method must be one of {FORCE_METHODS}")
        if self.extension not in ("harmonic", "stokes"):
            raise InconsistentConfig("extension must be 'harmonic' or 'stokes'")
        if not self.tau > 0:
            raise InconsistentConfig("tau must be positive")
        if self.k_max < 1:
            raise InconsistentConfig("k_max must be at least 1")
        if not 0 <= self.collision_fraction < 1:
            raise InconsistentConfig("collision_fraction must lie in [0, 1)")
        if self.snapshot_stride < 0:
            raise InconsistentConfig("snapshot_stride must be non-negative")
        steps = self.T / self.tau
        if not self.T > 0 or abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            raise InconsistentConfig(f"T = {self.T:g} is not an integer multiple of tau = {self.tau:g}")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.tau))


@dataclass
class SnapshotRecord:
    """Fluid state at one timestep, reduced to vertex data for plotting."""

    iteration: int
    timestep: int
    time: float
    mesh: Mesh2D
    speed: np.ndarray  # per vertex
    pressure: np.ndarray  # per vertex

    def __post_init__(self):
        if len(self.speed) != self.mesh.n_vertices or len(self.pressure) != self.mesh.n_vertices:
            raise ValueError("snapshot arrays must have one entry per vertex")

    @classmethod
    def from_field(cls, k, n, t, f: fem.FieldPair) -> "SnapshotRecord":
        nv = f.mesh.n_vertices
        return cls(k, n, t, f.mesh, np.linalg.norm(f.velocity[:nv], axis=1), f.pressure.copy())


@dataclass
class StepDiagnostics:
    """Worst-case per-step quantities of one sweep over the time interval."""

    max_divergence: float = 0.0
    max_picard: int = 0
    min_gap: float = math.inf
    min_area: float = math.inf

    def record(self, f: fem.FieldPair, mesh: Mesh2D, gap: float):
        self.max_divergence = max(self.max_divergence, fem.divergence_residual(f))
        self.max_picard = max(self.max_picard, int(f.info.get("picard_iterations", 0)))
        self.min_gap = min(self.min_gap, gap)
        self.min_area = min(self.min_area, float(mesh.signed_areas().min()))


@dataclass
class IterationHistory:
    """Guess plus every image under ``F``; ``distances[k] = |traj_k - traj_{k-1}|``."""

    guess: RigidTrajectory
    trajectories: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def append(self, traj: RigidTrajectory, diag: StepDiagnostics | None = None):
        prev = self.trajectories[-1] if self.trajectories else self.guess
        self.trajectories.append(traj)
        self.distances.append(prev.distance(traj))
        self.diagnostics.append(diag or StepDiagnostics())

    def __len__(self):
        return len(self.trajectories)

    @property
    def summaries(self) -> np.ndarray:
        """(K, 5) rows ``qx, qy, vx, vy, omega`` at the final time."""
        return np.array([t.as_array()[-1] for t in self.trajectories])

    @property
    def final(self) -> RigidTrajectory:
        return self.trajectories[-1]

    def relative_change(self, k: int = -1) -> float:
        return self.distances[k] / max(self.trajectories[k].norm(), 1e-300)


@dataclass
class PerStepHistory:
    """Committed trajectory of the per-timestep schedule.

    ``increments[n-1]`` lists the state change of each inner iteration at
    step ``n``.  Meshes and fields are not retained (memory does not grow
    with the number of steps apart from this bookkeeping).
    """

    trajectory: RigidTrajectory
    increments: list = field(default_factory=list)
    diagnostics: StepDiagnostics = field(default_factory=StepDiagnostics)
    snapshots: list = field(default_factory=list)


def initial_guess_freefall(rigid: RigidParams, initial: RigidState, tau: float, n_steps: int) -> RigidTrajectory:
    """``q = q0 + g t^2 / 2``, ``v = g t``, ``omega = 0`` sampled at ``t = n tau``."""
    t = tau * np.arange(n_steps + 1)
    g = np.asarray(rigid.gravity, dtype=float)
    q = initial.q + 0.5 * t[:, None] ** 2 * g
    v = initial.v + t[:, None] * g
    q = q + t[:, None] * initial.v
    return RigidTrajectory(q, v, np.full(n_steps + 1, initial.omega), tau)


# --------------------------------------------------------------------------
# one timestep


def _perp(y):
    return np.array([-y[1], y[0]])


def advance_mesh(mesh: Mesh2D, V_prev, prev: RigidState, new: RigidState, tau: float, exact: bool) -> Mesh2D:
    """Euler nodal update ``x + tau V_{n-1}`` followed by a snap onto the disk circle.

    The circle center follows the same Euler update as the center point.
    With ``exact`` the disk nodes follow the exact rigid map from ``prev``
    to ``new`` instead and are snapped to the circle about ``new.q``.
    """
    c = np.asarray(mesh.disk_center, dtype=float)
    disp = tau * np.asarray(V_prev, dtype=float)
    disk = mesh.node_tags == DISK
    if exact:
        theta = tau * new.omega
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        x = mesh.nodes[disk]
        disp[disk] = new.q + (x - prev.q) @ rot.T - x
        center = new.q + rot @ (c - prev.q)
    else:
        center = c + tau * (prev.v + prev.omega * _perp(c - prev.q))
    moved = move_nodes(mesh, disp)
    return snap_disk_boundary(moved, center, mesh.disk_radius)


def fluid_step(old: fem.FieldPair, mesh: Mesh2D, state: RigidState, fluid: FluidParams, cfg: IterationConfig):
    """Extension on the new mesh, ALE solve and load evaluation.

    Returns ``(field, load, V)`` where ``load = (fx, fy, torque)`` and ``V``
    is the mesh velocity (reused for the next mesh motion).
    """
    V, zeta = extension_and_cutoff(mesh, state.q, state.v, state.omega, cfg.extension)
    f = ale_step(AleStepInput(old, mesh, V, state.q, state.v, state.omega, cfg.tau), fluid)
    if cfg.force_method == "bulk":
        force, torque = hydrodynamic_load_bulk(mesh, old, f, zeta, V, cfg.tau, state.q, fluid)
    else:
        force, torque = hydrodynamic_load_boundary(mesh, f, state.q, fluid)
    return f, np.array([force[0], force[1], torque]), V.values


def _guard(mesh: Mesh2D, threshold: float) -> float:
    gap = min_gap(mesh)
    if gap < threshold:
        raise CollisionGuard(f"disk-wall gap {gap:.4e} below guard {threshold:.4e}")
    return gap


def _initial_mesh(geom: Geometry, initial: RigidState) -> Mesh2D:
    if not np.allclose(initial.q, geom.disk_center0, atol=1e-14):
        raise InconsistentConfig("initial center of mass must match the geometry's disk center")
    return generate_mesh(geom)


def apply_F(
    guess: RigidTrajectory,
    geom: Geometry,
    fluid: FluidParams,
    rigid: RigidParams,
    cfg: IterationConfig,
    iteration: int = 0,
    mesh0: Mesh2D | None = None,
):
    """One application of the trajectory map.

    Returns ``(trajectory, diagnostics, snapshots)``.  Solver and guard
    errors are re-raised annotated with the iteration and timestep.
    """
    n_steps = cfg.n_steps
    if guess.n_steps != n_steps:
        raise InconsistentConfig(f"guess has {guess.n_steps} steps, expected {n_steps}")
    initial = guess.state(0)
    mesh = mesh0 if mesh0 is not None else _initial_mesh(geom, initial)
    threshold = cfg.collision_fraction * min_gap(mesh)
    f = fem.FieldPair.zeros(mesh)
    diag = StepDiagnostics()
    snaps = []
    if cfg.snapshot_stride:
        snaps.append(SnapshotRecord.from_field(iteration, 0, 0.0, f))
    loads = np.empty((n_steps, 3))
    V = None
    n = 0
    try:
        V, _ = extension_and_cutoff(mesh, initial.q, initial.v, initial.omega, cfg.extension)
        V = V.values
        for n in range(1, n_steps + 1):
            prev, cur = guess.state(n - 1), guess.state(n)
            mesh = advance_mesh(mesh, V, prev, cur, cfg.tau, cfg.exact_boundary_motion)
            gap = _guard(mesh, threshold)
            f, loads[n - 1], V = fluid_step(f, mesh, cur, fluid, cfg)
            diag.record(f, mesh, gap)
            if cfg.snapshot_stride and n % cfg.snapshot_stride == 0:
                snaps.append(SnapshotRecord.from_field(iteration, n, n * cfg.tau, f))
        traj = trajectory_update(loads, rigid, initial, cfg.tau, n_steps)
    except AleFsiError as exc:
        raise exc.annotate(iteration=iteration, timestep=exc.timestep or n)
    return traj, diag, snaps


def run_global(
    initial_guess: RigidTrajectory,
    geom: Geometry,
    fluid: FluidParams,
    rigid: RigidParams,
    cfg: IterationConfig,
    callback=None,
) -> IterationHistory:
    """Iterate ``F`` on whole trajectories until the relative change drops
    below ``cfg.trajectory_tol`` or ``cfg.k_max`` images have been computed.

    ``callback(k, history)`` is invoked after each iteration.
    """
    history = IterationHistory(initial_guess)
    mesh0 = _initial_mesh(geom, initial_guess.state(0))
    guess = initial_guess
    for k in range(cfg.k_max):
        traj, diag, snaps = apply_F(guess, geom, fluid, rigid, cfg, iteration=k, mesh0=mesh0)
        history.append(traj, diag)
        history.snapshots.extend(snaps)
        s = history.summaries[-1]
        log.info(
            "k=%d q=(%.4g, %.4g) v=(%.4g, %.4g) omega=%.4g d=%.3e",
            k, s[0], s[1], s[2], s[3], s[4], history.distances[-1],
        )
        if callback is not None:
            callback(k, history)
        if history.relative_change() < cfg.trajectory_tol:
            break
        guess = traj
    return history


def predictor(prev: RigidState, rigid: RigidParams, tau: float) -> RigidState:
    """Body-only Taylor step; equals the free-fall guess when started from rest."""
    g = np.asarray(rigid.gravity, dtype=float)
    return RigidState(prev.q + tau * prev.v + 0.5 * tau**2 * g, prev.v + tau * g, prev.omega)


def _step_update(prev: RigidState, load, rigid: RigidParams, tau: float) -> RigidState:
    t = trajectory_update(np.asarray(load)[None, :], rigid, prev, tau, 1)
    return t.state(1)


def run_per_timestep(
    geom: Geometry,
    fluid: FluidParams,
    rigid: RigidParams,
    cfg: IterationConfig,
    initial: RigidState,
) -> PerStepHistory:
    """Iterate each timestep ``cfg.k_max`` times (or to ``trajectory_tol``) using
    only data of the previous committed step, then commit."""
    n_steps = cfg.n_steps
    mesh = _initial_mesh(geom, initial)
    threshold = cfg.collision_fraction * min_gap(mesh)
    f = fem.FieldPair.zeros(mesh)
    states = [initial]
    out = PerStepHistory(RigidTrajectory(np.zeros((1, 2)), np.zeros((1, 2)), np.zeros(1), cfg.tau))
    if cfg.snapshot_stride:
        out.snapshots.append(SnapshotRecord.from_field(0, 0, 0.0, f))
    n = k = 0
    try:
        for n in range(1, n_steps + 1):
            prev = states[-1]
            V_prev, _ = extension_and_cutoff(mesh, prev.q, prev.v, prev.omega, cfg.extension)
            guess = predictor(prev, rigid, cfg.tau)
            new_mesh = advance_mesh(mesh, V_prev.values, prev, guess, cfg.tau, cfg.exact_boundary_motion)
            gap = _guard(new_mesh, threshold)
            incs = []
            for k in range(cfg.k_max):
                if cfg.exact_boundary_motion and k > 0:
                    new_mesh = advance_mesh(mesh, V_prev.values, prev, guess, cfg.tau, True)
                    gap = _guard(new_mesh, threshold)
                f_new, load, _ = fluid_step(f, new_mesh, guess, fluid, cfg)
                state = _step_update(prev, load, rigid, cfg.tau)
                inc = float(np.linalg.norm(state.as_array() - guess.as_array()))
                incs.append(inc)
                guess = state
                if inc <= cfg.trajectory_tol * np.linalg.norm(state.as_array()):
                    break
            out.increments.append(incs)
            out.diagnostics.record(f_new, new_mesh, gap)
            states.append(guess)
            mesh, f = new_mesh, f_new
            if cfg.snapshot_stride and n % cfg.snapshot_stride == 0:
                out.snapshots.append(SnapshotRecord.from_field(0, n, n * cfg.tau, f))
    except AleFsiError as exc:
        raise exc.annotate(iteration=k, timestep=exc.timestep or n)
    arr = np.array([s.as_array() for s in states])
    out.trajectory = RigidTrajectory.from_array(arr, cfg.tau)
    return out
