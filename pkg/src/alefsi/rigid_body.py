"""Rigid disk: mass properties, hydrodynamic loads and the discrete ODE update.

Loads are the force and torque the fluid exerts on the body,
``F = -int_dB T nu`` and ``L = -int_dB (x - q) x T nu`` where ``nu`` is the
fluid-domain outward normal (pointing into the body) and
``T = -p I + mu (grad u + grad u^T)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fem
from .errors import InconsistentConfig, NonFiniteLoad
from .extension import CutoffField, ExtensionField
from .mesh import DISK, LOCAL_EDGES, Mesh2D


@dataclass(frozen=True)
class RigidParams:
    density: float
    radius: float
    gravity: tuple = (0.0, -9.8)

    def __post_init__(self):
        if not self.density > 0:
            raise InconsistentConfig("body density must be positive")
        if self.radius < 0:
            raise InconsistentConfig("radius must be non-negative")

    @property
    def mass(self) -> float:
        return self.density * math.pi * self.radius**2

    @property
    def inertia(self) -> float:
        return inertia_scalar(self)


def inertia_scalar(params: RigidParams) -> float:
    """Polar moment ``int_B rho_B |x - q|^2 = m r^2 / 2`` of a uniform disk."""
    return 0.5 * params.mass * params.radius**2


@dataclass(frozen=True)
class RigidState:
    q: np.ndarray
    v: np.ndarray
    omega: float

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(2))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(2))
        object.__setattr__(self, "omega", float(self.omega))
        if not (np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.v)) and math.isfinite(self.omega)):
            raise NonFiniteLoad("non-finite rigid state")

    def as_array(self) -> np.ndarray:
        return np.array([*self.q, *self.v, self.omega])


@dataclass
class RigidTrajectory:
    """States at ``t_n = n tau`` for ``n = 0..N``."""

    q: np.ndarray  # (N+1, 2)
    v: np.ndarray  # (N+1, 2)
    omega: np.ndarray  # (N+1,)
    tau: float

    @property
    def n_steps(self) -> int:
        return len(self.omega) - 1

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.n_steps + 1)

    def state(self, n: int) -> RigidState:
        return RigidState(self.q[n], self.v[n], self.omega[n])

    @property
    def final(self) -> RigidState:
        return self.state(self.n_steps)

    def as_array(self) -> np.ndarray:
        """(N+1, 5) rows ``qx, qy, vx, vy, omega``."""
        return np.column_stack([self.q, self.v, self.omega])

    def distance(self, other: "RigidTrajectory") -> float:
        """Discrete l2 distance over all states."""
        return float(np.linalg.norm(self.as_array() - other.as_array()))

    def norm(self) -> float:
        return float(np.linalg.norm(self.as_array()))

    @classmethod
    def from_array(cls, arr, tau) -> "RigidTrajectory":
        arr = np.asarray(arr, dtype=float)
        return cls(arr[:, 0:2].copy(), arr[:, 2:4].copy(), arr[:, 4].copy(), tau)


def trajectory_update(loads, params: RigidParams, initial: RigidState, tau: float, n_steps: int) -> RigidTrajectory:
    """Integrate the body ODEs from per-step loads ``(fx, fy, torque)``, n = 1..N.

    ``v_n = v_{n-1} + tau (g + F_n / m)``, ``q_n = q_{n-1} + tau v_n`` and
    ``omega_n = omega_{n-1} + tau L_n / J``.
    """
    loads = np.asarray(loads, dtype=float).reshape(-1, 3)
    if len(loads) != n_steps:
        raise ValueError(f"expected {n_steps} loads, got {len(loads)}")
    if not np.all(np.isfinite(loads)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(loads), axis=1))[0]) + 1
        raise NonFiniteLoad(f"non-finite hydrodynamic load at step {bad}").annotate(timestep=bad)
    m, J = params.mass, params.inertia
    g = np.asarray(params.gravity, dtype=float)
    q = np.empty((n_steps + 1, 2))
    v = np.empty((n_steps + 1, 2))
    w = np.empty(n_steps + 1)
    q[0], v[0], w[0] = initial.q, initial.v, initial.omega
    for n in range(1, n_steps + 1):
        fx, fy, torque = loads[n - 1]
        accel = g + (np.array([fx, fy]) / m if m > 0 else 0.0)
        v[n] = v[n - 1] + tau * accel
        q[n] = q[n - 1] + tau * v[n]
        w[n] = (J * w[n - 1] + tau * torque) / J if J > 0 else w[n - 1]
    return RigidTrajectory(q, v, w, tau)


# --------------------------------------------------------------------------
# loads


def _disk_edge_quadrature(mesh: Mesh2D):
    """Per disk edge: triangle, reference points (E, 3, 2), physical points, weights*length, normal."""
    edges = np.flatnonzero(mesh.edge_tags == DISK)
    tri = mesh.edge_triangle[edges]
    k = mesh.edge_local[edges]
    li = LOCAL_EDGES[k]  # (E, 2) local vertex indices, CCW order
    s, w = fem.quadrature_rule("edge")
    lam = np.zeros((len(edges), len(s), 3))
    rows = np.arange(len(edges))[:, None]
    lam[rows, :, li[:, 0:1]] = 1.0 - s
    lam[rows, :, li[:, 1:2]] = s
    xi = lam[..., 1:]
    verts = mesh.vertices[mesh.triangles[tri]]  # (E, 3, 2)
    a = verts[np.arange(len(edges)), li[:, 0]]
    b = verts[np.arange(len(edges)), li[:, 1]]
    t = b - a
    length = np.linalg.norm(t, axis=1)
    normal = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]  # away from the triangle
    pts = a[:, None, :] + s[None, :, None] * t[:, None, :]
    return tri, xi, lam, pts, w[None, :] * length[:, None], normal


def _traction_at(mesh, field, mu, tri, xi, lam, normal):
    geo_inv = fem.ElementGeometry(mesh).inv[tri]  # (E, 2, 2)
    e, nq = xi.shape[:2]
    gref = fem.p2_gradients(xi.reshape(-1, 2)).reshape(e, nq, 6, 2)
    grad = np.einsum("eba,eqib->eqia", geo_inv, gref)
    cn = mesh.cell_nodes[tri]  # (E, 6)
    uloc = field.velocity[cn]  # (E, 6, 2)
    du = np.einsum("eqib,eic->eqcb", grad, uloc)  # du[c, b] = d u_c / d x_b
    p = np.einsum("eqk,ek->eq", lam, field.pressure[mesh.triangles[tri]])
    sym = du + np.swapaxes(du, -1, -2)
    return -p[..., None] * normal[:, None, :] + mu * np.einsum("eqcb,eb->eqc", sym, normal)


def hydrodynamic_load_boundary(mesh: Mesh2D, field: fem.FieldPair, q, params):
    """Force (2,) and torque from per-edge Gauss quadrature of the traction."""
    tri, xi, lam, pts, wl, normal = _disk_edge_quadrature(mesh)
    traction = _traction_at(mesh, field, params.viscosity, tri, xi, lam, normal)
    force = -np.einsum("eq,eqc->c", wl, traction)
    y = pts - np.asarray(q, dtype=float)
    cross = y[..., 0] * traction[..., 1] - y[..., 1] * traction[..., 0]
    torque = -float(np.sum(wl * cross))
    return force, torque


def _residual(mesh_new, mesh_old, u_new, u_old, p_new, V, phi, tau, params, inertia):
    """Momentum residual tested with the nodal field ``phi`` (n_nodes, 2)."""
    rho, mu = params.density, params.viscosity
    geo = fem.ElementGeometry(mesh_new)
    uq, du = fem.interpolate_at_quadrature(mesh_new, u_new, geo)  # du[..., c, b]
    fq, dphi = fem.interpolate_at_quadrature(mesh_new, phi, geo)
    pq = fem.pressure_at_quadrature(mesh_new, p_new)
    sym = du + np.swapaxes(du, -1, -2)
    div_phi = dphi[..., 0, 0] + dphi[..., 1, 1]
    stress = -pq * div_phi + mu * np.einsum("tqcb,tqcb->tq", sym, dphi)
    total = np.sum(geo.weights * stress)
    if inertia:
        geo_old = fem.ElementGeometry(mesh_old)
        uo, _ = fem.interpolate_at_quadrature(mesh_old, u_old, geo_old)
        fo, _ = fem.interpolate_at_quadrature(mesh_old, phi, geo_old)
        mass_new = np.sum(geo.weights * np.sum(uq * fq, axis=-1))
        mass_old = np.sum(geo_old.weights * np.sum(uo * fo, axis=-1))
        Vq, _ = fem.interpolate_at_quadrature(mesh_new, V, geo)
        # (a . grad phi) . u = sum_cb a_b dphi_c/dx_b u_c
        conv = np.einsum("tqb,tqcb,tqc->tq", Vq - uq, dphi, uq)
        total += rho / tau * (mass_new - mass_old) + rho * np.sum(geo.weights * conv)
    return float(total)


def hydrodynamic_load_bulk(
    mesh: Mesh2D,
    field_old: fem.FieldPair,
    field_new: fem.FieldPair,
    zeta: CutoffField,
    mesh_velocity,
    tau: float,
    q,
    params,
    inertia: bool = True,
):
    """Force and torque from volume integrals weighted by the cutoff ``zeta``.

    Uses ``int_dB T nu = int T grad(zeta) + int zeta div T`` with the
    divergence of the stress replaced by the discrete ALE momentum balance,
    i.e. the residual of the plain-form momentum equation tested with
    ``zeta e_c`` (force) and ``zeta (x - q)^perp`` (torque).  With
    ``inertia=False`` the stress is treated as divergence-free (steady Stokes).
    """
    nodes = mesh.nodes
    z = zeta.values
    y = nodes - np.asarray(q, dtype=float)
    tests = [
        np.column_stack([z, np.zeros_like(z)]),
        np.column_stack([np.zeros_like(z), z]),
        z[:, None] * np.column_stack([-y[:, 1], y[:, 0]]),
    ]
    V = mesh_velocity.values if isinstance(mesh_velocity, ExtensionField) else mesh_velocity
    V = np.zeros((mesh.n_nodes, 2)) if V is None else np.asarray(V, dtype=float)
    vals = [
        -_residual(
            mesh, field_old.mesh, field_new.velocity, field_old.velocity, field_new.pressure,
            V, phi, tau, params, inertia,
        )
        for phi in tests
    ]
    return np.array(vals[:2]), vals[2]


def meshed_disk_inertia(mesh: Mesh2D, density: float, center=None) -> float:
    """Quadrature of ``density |x - c|^2`` over the polygon bounded by the disk vertices."""
    c = np.asarray(mesh.disk_center if center is None else center, dtype=float)
    pts = mesh.vertices[mesh.vertex_tags == DISK]
    ang = np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0])
    pts = pts[np.argsort(ang)]
    a = pts
    b = np.roll(pts, -1, axis=0)
    qp, qw = fem.quadrature_rule("triangle")
    total = 0.0
    for lam1, lam2, wq in zip(qp[:, 0], qp[:, 1], qw):
        x = c + lam1 * (a - c) + lam2 * (b - c)
        det = (a - c)[:, 0] * (b - c)[:, 1] - (a - c)[:, 1] * (b - c)[:, 0]
        total += np.sum(wq * det * np.sum((x - c) ** 2, axis=1))
    return density * float(total)
