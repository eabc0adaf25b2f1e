"""Harmonic extension of rigid-body boundary velocity (the mesh velocity).

The extension solves a componentwise P2 Laplace problem with the rigid
velocity ``v + omega x (x - q)`` on the disk and zero on the walls.  The
scalar cutoff uses the same operator with data 1 on the disk, 0 on walls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from . import fem
from .errors import SingularSystem
from .mesh import DISK, INTERIOR, Mesh2D


def rigid_velocity(points, q, v, omega) -> np.ndarray:
    """``v + omega x (x - q)`` with the 2D convention ``omega x y = omega (-y2, y1)``."""
    y = np.atleast_2d(points) - np.asarray(q, dtype=float)
    return np.asarray(v, dtype=float) + omega * np.column_stack([-y[:, 1], y[:, 0]])


@dataclass
class ExtensionField:
    values: np.ndarray  # (n_nodes, 2)
    mesh: Mesh2D


@dataclass
class CutoffField:
    values: np.ndarray  # (n_nodes,)
    mesh: Mesh2D


class LaplaceSolver:
    """Factorised Dirichlet-reduced P2 Laplacian; all boundary nodes constrained."""

    def __init__(self, mesh: Mesh2D, rtol: float = 1e-10):
        self.mesh = mesh
        self.rtol = rtol
        K = fem.p2_stiffness(mesh).tocsr()
        tags = mesh.node_tags
        self.fixed = np.flatnonzero(tags != INTERIOR)
        self.free = np.flatnonzero(tags == INTERIOR)
        Kf = K[self.free]
        self.K_ff = Kf[:, self.free].tocsc()
        self.K_fd = Kf[:, self.fixed]
        try:
            self.lu = spla.splu(self.K_ff)
        except RuntimeError as exc:
            raise SingularSystem(str(exc)) from exc

    def solve(self, boundary_values) -> np.ndarray:
        """``boundary_values`` has one row per node; only boundary rows are read."""
        bv = np.asarray(boundary_values, dtype=float)
        squeeze = bv.ndim == 1
        bv = bv.reshape(len(bv), -1)
        out = np.zeros_like(bv)
        out[self.fixed] = bv[self.fixed]
        if len(self.free):
            rhs = -(self.K_fd @ bv[self.fixed])
            x = self.lu.solve(rhs)
            res = np.abs(self.K_ff @ x - rhs).max() if rhs.size else 0.0
            scale = max(np.abs(rhs).max(), np.abs(bv).max(), 1e-300)
            if not np.all(np.isfinite(x)) or res > self.rtol * scale:
                raise SingularSystem(f"Laplace residual {res / scale:.3e}")
            out[self.free] = x
        return out[:, 0] if squeeze else out


def rigid_boundary_data(mesh: Mesh2D, q, v, omega) -> np.ndarray:
    """Nodal array with the rigid velocity on disk nodes and zero elsewhere."""
    data = np.zeros((mesh.n_nodes, 2))
    disk = mesh.node_tags == DISK
    data[disk] = rigid_velocity(mesh.nodes[disk], q, v, omega)
    return data


def harmonic_extension(mesh: Mesh2D, q, v, omega, method: str = "harmonic", solver=None) -> ExtensionField:
    """Mesh velocity field for rigid motion ``(q, v, omega)`` of the disk.

    ``method="stokes"`` extends by a unit-viscosity Stokes solve instead.
    """
    data = rigid_boundary_data(mesh, q, v, omega)
    if method == "harmonic":
        solver = solver or LaplaceSolver(mesh)
        return ExtensionField(solver.solve(data), mesh)
    if method == "stokes":
        return ExtensionField(fem.stokes_solve(mesh, 1.0, data).velocity, mesh)
    raise ValueError(f"unknown extension method {method!r}")


def cutoff_field(mesh: Mesh2D, solver=None) -> CutoffField:
    """Discrete harmonic function equal to 1 on the disk and 0 on the walls."""
    data = (mesh.node_tags == DISK).astype(float)
    solver = solver or LaplaceSolver(mesh)
    return CutoffField(solver.solve(data), mesh)


def extension_and_cutoff(mesh: Mesh2D, q, v, omega, method: str = "harmonic"):
    """Both fields from a single factorisation of the Laplacian."""
    solver = LaplaceSolver(mesh)
    if method == "harmonic":
        data = np.column_stack([rigid_boundary_data(mesh, q, v, omega), mesh.node_tags == DISK])
        sol = solver.solve(data)
        return ExtensionField(sol[:, :2], mesh), CutoffField(sol[:, 2], mesh)
    return harmonic_extension(mesh, q, v, omega, method), cutoff_field(mesh, solver)
