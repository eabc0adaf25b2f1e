"""One implicit ALE timestep of the incompressible Navier-Stokes equations.

Given the old mesh and velocity, the new mesh (same connectivity) and the
mesh velocity on it, find ``(u_n, p_n)`` with

    rho/tau (int_new u_n . phi - int_old u_{n-1} . phi_old)
      - rho int (u . grad phi) u + rho int (V . grad phi) u
      + mu int grad u : grad phi - int p div phi = 0,
    int psi div u = 0,

where ``phi_old`` has the same nodal values as ``phi`` on the old mesh.
The nonlinearity is resolved by Picard (Oseen) iterations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import fem
from .errors import InconsistentConfig, PicardDiverged
from .extension import ExtensionField, rigid_boundary_data
from .mesh import Mesh2D

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FluidParams:
    density: float = 1.0
    viscosity: float = 1.0
    picard_tol: float = 1e-10
    picard_max_iters: int = 30
    antisymmetric: bool = True

    def __post_init__(self):
        if not (self.density > 0 and self.viscosity > 0 and self.picard_tol > 0):
            raise InconsistentConfig("density, viscosity and picard_tol must be positive")
        if self.picard_max_iters < 1:
            raise InconsistentConfig("picard_max_iters must be at least 1")


@dataclass
class AleStepInput:
    """Data for one step.

    ``boundary_velocity`` overrides the default Dirichlet data (rigid motion
    on the disk, zero on the walls) with arbitrary nodal values; only its
    boundary rows are used.  ``body_force`` is a callable ``f(x, y)`` used
    by manufactured-solution tests.
    """

    old_field: fem.FieldPair
    new_mesh: Mesh2D
    mesh_velocity: object
    q: np.ndarray
    v: np.ndarray
    omega: float
    tau: float
    boundary_velocity: np.ndarray | None = None
    body_force: object = None

    @property
    def old_mesh(self) -> Mesh2D:
        return self.old_field.mesh

    def __post_init__(self):
        old, new = self.old_mesh, self.new_mesh
        if old is not new and (
            old.triangles.shape != new.triangles.shape or not np.array_equal(old.triangles, new.triangles)
        ):
            raise ValueError("old and new meshes must share connectivity")
        if self.tau <= 0:
            raise ValueError("tau must be positive")


def _mesh_velocity_array(mesh, mv):
    if mv is None:
        return np.zeros((mesh.n_nodes, 2))
    if isinstance(mv, ExtensionField):
        mv = mv.values
    return np.asarray(mv, dtype=float)


def ale_step(inp: AleStepInput, params: FluidParams) -> fem.FieldPair:
    """Advance the fluid by one step; raises PicardDiverged or SingularSystem."""
    new = inp.new_mesh
    rho, mu, tau = params.density, params.viscosity, inp.tau
    dofs = fem.DofMap.from_mesh(new)
    geo = fem.ElementGeometry(new)
    V = _mesh_velocity_array(new, inp.mesh_velocity)

    M_new = fem.vector_block(fem.p2_mass(new, geo))
    M_old = fem.vector_block(fem.p2_mass(inp.old_mesh))
    A, B = fem.assemble_stokes_blocks(new, dofs, mu, geo)
    rhs = (rho / tau) * (M_old @ inp.old_field.velocity_vector)
    if inp.body_force is not None:
        rhs = rhs + fem.load_vector(new, inp.body_force, geo)
    base = ((rho / tau) * M_new + A).tocsr()

    if inp.boundary_velocity is not None:
        ub = np.asarray(inp.boundary_velocity, dtype=float)
    else:
        ub = rigid_boundary_data(new, inp.q, inp.v, inp.omega)
    ub_vec = fem.blocked(ub)

    w = inp.old_field.velocity.copy()
    w[dofs.dirichlet_nodes] = ub[dofs.dirichlet_nodes]
    prev = np.inf
    growth = 0
    for it in range(1, params.picard_max_iters + 1):
        C = fem.assemble_convection(new, dofs, w, V, rho, params.antisymmetric, geo)
        system = fem.build_saddle_system(new, dofs, base + C, B, rhs, ub_vec)
        sol = fem.solve_saddle_point(system)
        inc = np.abs(sol.velocity - w).max() / max(np.abs(sol.velocity).max(), 1.0)
        w = sol.velocity
        if inc <= params.picard_tol:
            break
        growth = growth + 1 if inc > prev else 0
        if growth >= 3:
            raise PicardDiverged(f"Picard increment grew three times in a row (last {inc:.3e})")
        prev = inc
    else:
        raise PicardDiverged(f"Picard did not reach {params.picard_tol:g} in {params.picard_max_iters} iterations")
    sol.info["picard_iterations"] = it
    sol.info["picard_increment"] = float(inc)
    log.debug("ale_step: %d Picard iterations, increment %.2e", it, inc)
    return sol


def kinetic_energy(field: fem.FieldPair, density: float = 1.0) -> float:
    """``rho/2 int |u_h|^2`` by quadrature."""
    vals, _ = fem.interpolate_at_quadrature(field.mesh, field.velocity)
    geo = fem.ElementGeometry(field.mesh)
    return 0.5 * density * float(np.sum(geo.weights * np.sum(vals**2, axis=-1)))
