"""Taylor-Hood (P2 velocity / P1 pressure) finite elements on :class:`Mesh2D`.

Velocity vectors are stored blocked by component: ``[u_x at every P2
node, u_y at every P2 node]``.  Local P2 node order is the three vertices
followed by the midpoints of local edges (1,2), (2,0), (0,1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ResidualTooLarge, SingularSystem
from .mesh import INTERIOR, Mesh2D


# --------------------------------------------------------------------------
# quadrature


def quadrature_rule(domain: str):
    """Return ``(points, weights)`` on the reference triangle or edge.

    The triangle rule is the 7-point degree-5 rule on (0,0),(1,0),(0,1)
    with weights summing to 1/2; the edge rule is 3-point Gauss-Legendre
    on [0, 1].
    """
    if domain == "triangle":
        s15 = math.sqrt(15.0)
        a1, a2 = (6.0 - s15) / 21.0, (6.0 + s15) / 21.0
        w1, w2 = (155.0 - s15) / 2400.0, (155.0 + s15) / 2400.0
        pts = np.array(
            [
                [1.0 / 3.0, 1.0 / 3.0],
                [a1, a1], [1.0 - 2.0 * a1, a1], [a1, 1.0 - 2.0 * a1],
                [a2, a2], [1.0 - 2.0 * a2, a2], [a2, 1.0 - 2.0 * a2],
            ]
        )
        wts = np.array([9.0 / 80.0, w1, w1, w1, w2, w2, w2])
        return pts, wts
    if domain == "edge":
        g = math.sqrt(0.6)
        pts = 0.5 * (1.0 + np.array([-g, 0.0, g]))
        wts = np.array([5.0, 8.0, 5.0]) / 18.0
        return pts, wts
    raise ValueError(f"unknown quadrature domain {domain!r}")


# --------------------------------------------------------------------------
# reference basis


def _barycentric(xi):
    xi = np.atleast_2d(xi)
    return np.column_stack([1.0 - xi[:, 0] - xi[:, 1], xi[:, 0], xi[:, 1]])


_DLAMBDA = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def p1_values(xi):
    return _barycentric(xi)


def p2_values(xi):
    """(Q, 6) P2 basis values at reference points."""
    lam = _barycentric(xi)
    l0, l1, l2 = lam.T
    return np.column_stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1]
    )


def p2_gradients(xi):
    """(Q, 6, 2) reference gradients of the P2 basis."""
    lam = _barycentric(xi)
    q = len(lam)
    g = np.empty((q, 6, 2))
    for i in range(3):
        g[:, i] = (4.0 * lam[:, i] - 1.0)[:, None] * _DLAMBDA[i]
    for k, (i, j) in enumerate(((1, 2), (2, 0), (0, 1))):
        g[:, 3 + k] = 4.0 * (lam[:, j, None] * _DLAMBDA[i] + lam[:, i, None] * _DLAMBDA[j])
    return g


# P2 second derivatives are constant on each triangle: d2N/dxi_a dxi_b
def p2_hessians():
    """(6, 2, 2) reference Hessians of the P2 basis."""
    H = np.zeros((6, 2, 2))
    for i in range(3):
        H[i] = 4.0 * np.outer(_DLAMBDA[i], _DLAMBDA[i])
    for k, (i, j) in enumerate(((1, 2), (2, 0), (0, 1))):
        H[3 + k] = 4.0 * (np.outer(_DLAMBDA[i], _DLAMBDA[j]) + np.outer(_DLAMBDA[j], _DLAMBDA[i]))
    return H


_QP, _QW = quadrature_rule("triangle")
_P2_Q = p2_values(_QP)  # (Q, 6)
_P2_GRAD_REF = p2_gradients(_QP)  # (Q, 6, 2)
_P1_Q = p1_values(_QP)  # (Q, 3)


class ElementGeometry:
    """Affine maps of every triangle plus basis data at quadrature points."""

    def __init__(self, mesh: Mesh2D):
        p = mesh.vertices[mesh.triangles]
        jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # columns are edge vectors
        self.det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        inv = np.empty_like(jac)
        inv[:, 0, 0] = jac[:, 1, 1]
        inv[:, 1, 1] = jac[:, 0, 0]
        inv[:, 0, 1] = -jac[:, 0, 1]
        inv[:, 1, 0] = -jac[:, 1, 0]
        inv /= self.det[:, None, None]
        self.jac = jac
        self.inv = inv
        self.origin = p[:, 0]
        # physical gradient = inv^T grad_ref
        self.grad = np.einsum("tba,qib->tqia", inv, _P2_GRAD_REF)  # (T, Q, 6, 2)
        self.weights = self.det[:, None] * _QW[None, :]  # (T, Q)
        self.points = self.origin[:, None, :] + np.einsum("tab,qb->tqa", jac, _QP)
        # P1 gradients are constant per triangle
        self.p1_grad = np.einsum("tba,ib->tia", inv, _DLAMBDA)  # (T, 3, 2)


# --------------------------------------------------------------------------
# degrees of freedom


@dataclass
class DofMap:
    """Velocity/pressure numbering for a mesh.

    Velocity dof ``c * n_nodes + i`` is component ``c`` at P2 node ``i``.
    Every velocity node on the wall or the disk is constrained.
    """

    n_nodes: int
    n_vertices: int
    cell_nodes: np.ndarray
    dirichlet_nodes: np.ndarray

    @classmethod
    def from_mesh(cls, mesh: Mesh2D) -> "DofMap":
        return cls(
            n_nodes=mesh.n_nodes,
            n_vertices=mesh.n_vertices,
            cell_nodes=mesh.cell_nodes,
            dirichlet_nodes=np.flatnonzero(mesh.node_tags != INTERIOR),
        )

    @property
    def n_velocity(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_pressure(self) -> int:
        return self.n_vertices

    @property
    def dirichlet_dofs(self) -> np.ndarray:
        return np.concatenate([self.dirichlet_nodes, self.n_nodes + self.dirichlet_nodes])

    @property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_velocity, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)


@dataclass
class FieldPair:
    """P2 velocity ``(n_nodes, 2)`` and P1 pressure ``(n_vertices,)`` on a mesh."""

    velocity: np.ndarray
    pressure: np.ndarray
    mesh: Mesh2D
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.velocity = np.asarray(self.velocity, dtype=float)
        self.pressure = np.asarray(self.pressure, dtype=float)
        if self.velocity.shape != (self.mesh.n_nodes, 2):
            raise ValueError("velocity does not match the mesh P2 nodes")
        if self.pressure.shape != (self.mesh.n_vertices,):
            raise ValueError("pressure does not match the mesh vertices")

    @classmethod
    def zeros(cls, mesh: Mesh2D) -> "FieldPair":
        return cls(np.zeros((mesh.n_nodes, 2)), np.zeros(mesh.n_vertices), mesh)

    @property
    def velocity_vector(self) -> np.ndarray:
        return self.velocity.T.ravel()


def blocked(values) -> np.ndarray:
    """(n_nodes, 2) nodal array to blocked velocity vector."""
    return np.asarray(values).T.ravel()


def unblocked(vector) -> np.ndarray:
    return np.asarray(vector).reshape(2, -1).T.copy()


# --------------------------------------------------------------------------
# assembly


def _scatter(local, rows, cols, shape):
    t, a, b = local.shape
    r = np.broadcast_to(rows[:, :, None], (t, a, b)).ravel()
    c = np.broadcast_to(cols[:, None, :], (t, a, b)).ravel()
    return sp.coo_matrix((local.ravel(), (r, c)), shape=shape).tocsr()


def geometry(mesh: Mesh2D) -> ElementGeometry:
    return ElementGeometry(mesh)


def p2_mass(mesh: Mesh2D, geo: ElementGeometry | None = None) -> sp.csr_matrix:
    geo = geo or ElementGeometry(mesh)
    local = np.einsum("tq,qi,qj->tij", geo.weights, _P2_Q, _P2_Q)
    cn = mesh.cell_nodes
    return _scatter(local, cn, cn, (mesh.n_nodes, mesh.n_nodes))


def p2_stiffness(mesh: Mesh2D, geo: ElementGeometry | None = None) -> sp.csr_matrix:
    geo = geo or ElementGeometry(mesh)
    local = np.einsum("tq,tqia,tqja->tij", geo.weights, geo.grad, geo.grad)
    cn = mesh.cell_nodes
    return _scatter(local, cn, cn, (mesh.n_nodes, mesh.n_nodes))


def p1_stiffness(mesh: Mesh2D) -> sp.csr_matrix:
    """Linear-element Laplacian (used as a hand-checkable reference)."""
    geo = ElementGeometry(mesh)
    local = 0.5 * geo.det[:, None, None] * np.einsum("tia,tja->tij", geo.p1_grad, geo.p1_grad)
    tri = mesh.triangles
    return _scatter(local, tri, tri, (mesh.n_vertices, mesh.n_vertices))


def vector_block(scalar: sp.spmatrix) -> sp.csr_matrix:
    return sp.block_diag([scalar, scalar], format="csr")


def divergence_block(mesh: Mesh2D, geo: ElementGeometry | None = None) -> sp.csr_matrix:
    """B with ``B[k, c*N + j] = -int psi_k d_c phi_j``, shape (Nv, 2N)."""
    geo = geo or ElementGeometry(mesh)
    cn = mesh.cell_nodes
    n = mesh.n_nodes
    blocks = []
    for c in range(2):
        local = -np.einsum("tq,qk,tqj->tkj", geo.weights, _P1_Q, geo.grad[..., c])
        blocks.append(_scatter(local, mesh.triangles, cn, (mesh.n_vertices, n)))
    return sp.hstack(blocks, format="csr")


def pressure_mean_vector(mesh: Mesh2D) -> np.ndarray:
    """``m[k] = int psi_k`` for the P1 pressure basis."""
    areas = mesh.signed_areas()
    m = np.zeros(mesh.n_vertices)
    np.add.at(m, mesh.triangles.ravel(), np.repeat(areas / 3.0, 3))
    return m


def assemble_stokes_blocks(mesh: Mesh2D, dofs: DofMap, viscosity: float, geo=None):
    """Viscous block ``A = mu * int grad u : grad phi`` and divergence block B."""
    geo = geo or ElementGeometry(mesh)
    A = viscosity * vector_block(p2_stiffness(mesh, geo))
    B = divergence_block(mesh, geo)
    return A, B


def interpolate_at_quadrature(mesh: Mesh2D, nodal, geo=None):
    """Values ``(T, Q, ...)`` and gradients ``(T, Q, ..., 2)`` of a P2 field."""
    geo = geo or ElementGeometry(mesh)
    local = np.asarray(nodal)[mesh.cell_nodes]  # (T, 6, ...)
    vals = np.einsum("qi,ti...->tq...", _P2_Q, local)
    grads = np.einsum("tqia,ti...->tq...a", geo.grad, local)
    return vals, grads


def pressure_at_quadrature(mesh: Mesh2D, pressure):
    return np.einsum("qk,tk->tq", _P1_Q, np.asarray(pressure)[mesh.triangles])


def assemble_convection(
    mesh: Mesh2D,
    dofs: DofMap,
    advecting_velocity,
    mesh_velocity,
    density: float,
    antisymmetrize: bool = True,
    geo=None,
) -> sp.csr_matrix:
    """Vector convection block acting on the unknown velocity.

    Row ``i`` (test function phi_i) of the scalar block is
    ``rho * int ((V - w) . grad phi_i) phi_j`` in plain form; the split form
    replaces the ``w`` part by ``-1/2 (w . grad phi_i) phi_j + 1/2 (w . grad phi_j) phi_i``.
    ``advecting_velocity`` may be a FieldPair or an ``(n_nodes, 2)`` array.
    """
    geo = geo or ElementGeometry(mesh)
    w = advecting_velocity.velocity if isinstance(advecting_velocity, FieldPair) else advecting_velocity
    w = np.zeros((mesh.n_nodes, 2)) if w is None else np.asarray(w, dtype=float)
    V = np.zeros((mesh.n_nodes, 2)) if mesh_velocity is None else np.asarray(mesh_velocity, dtype=float)
    wq, _ = interpolate_at_quadrature(mesh, w, geo)
    Vq, _ = interpolate_at_quadrature(mesh, V, geo)
    if antisymmetrize:
        drift = Vq - 0.5 * wq
    else:
        drift = Vq - wq
    dgrad = np.einsum("tqa,tqia->tqi", drift, geo.grad)  # (drift . grad phi_i)
    local = np.einsum("tq,tqi,qj->tij", geo.weights, dgrad, _P2_Q)
    if antisymmetrize:
        wgrad = np.einsum("tqa,tqja->tqj", wq, geo.grad)
        local += 0.5 * np.einsum("tq,tqj,qi->tij", geo.weights, wgrad, _P2_Q)
    cn = mesh.cell_nodes
    G = _scatter(density * local, cn, cn, (mesh.n_nodes, mesh.n_nodes))
    return vector_block(G)


def load_vector(mesh: Mesh2D, force, geo=None) -> np.ndarray:
    """``int f . phi`` for a callable ``f(x, y) -> (fx, fy)``."""
    geo = geo or ElementGeometry(mesh)
    x = geo.points[..., 0]
    y = geo.points[..., 1]
    fx, fy = force(x, y)
    out = np.zeros(2 * mesh.n_nodes)
    cn = mesh.cell_nodes
    for c, fc in enumerate((fx, fy)):
        local = np.einsum("tq,tq,qi->ti", geo.weights, np.broadcast_to(fc, x.shape), _P2_Q)
        np.add.at(out, c * mesh.n_nodes + cn.ravel(), local.ravel())
    return out


# --------------------------------------------------------------------------
# saddle-point systems


@dataclass
class SparseSystem:
    """Dirichlet-reduced saddle-point system with a zero-mean pressure row.

    Unknown ordering: free velocity dofs, pressure dofs, one multiplier.
    The blocks are kept separately; :attr:`matrix` assembles the bordered
    matrix on demand.
    """

    K: sp.csc_matrix  # free-free momentum block
    B: sp.csc_matrix  # divergence block restricted to free velocity dofs
    m: np.ndarray  # pressure mean row
    rhs: np.ndarray
    mesh: Mesh2D
    dofs: DofMap
    free: np.ndarray
    u_dirichlet: np.ndarray  # full blocked velocity with boundary values set

    @property
    def n_free(self) -> int:
        return len(self.free)

    @property
    def mean_row(self) -> int:
        return self.n_free + len(self.m)

    @property
    def matrix(self) -> sp.csc_matrix:
        col = sp.csc_matrix(self.m[:, None])
        return sp.bmat([[self.K, self.B.T, None], [self.B, None, col], [None, col.T, None]], format="csc")

    def apply(self, x) -> np.ndarray:
        n, r = self.n_free, self.mean_row
        u, p, lam = x[:n], x[n:r], x[r]
        return np.concatenate([self.K @ u + self.B.T @ p, self.B @ u + lam * self.m, [self.m @ p]])


def build_saddle_system(mesh, dofs, K, B, rhs_u, u_dirichlet) -> SparseSystem:
    """Eliminate Dirichlet dofs symmetrically and attach the mean constraint.

    ``K`` is the full momentum operator (2N x 2N), ``rhs_u`` its full load
    vector and ``u_dirichlet`` a full velocity vector whose constrained
    entries hold the boundary values.
    """
    free = dofs.free_dofs
    fixed = dofs.dirichlet_dofs
    u_d = np.zeros(dofs.n_velocity)
    u_d[fixed] = np.asarray(u_dirichlet)[fixed]
    K = K.tocsr()
    Bc = B.tocsc()
    K_free_rows = K[free]
    K_ff = K_free_rows[:, free].tocsc()
    f = rhs_u[free] - K_free_rows[:, fixed] @ u_d[fixed]
    g = -(Bc[:, fixed] @ u_d[fixed])
    m = pressure_mean_vector(mesh)
    rhs = np.concatenate([f, g, [0.0]])
    return SparseSystem(K_ff, Bc[:, free], m, rhs, mesh, dofs, free, u_d)


def _lu_solve(matrix, rhs, pivot=0.0):
    # diagonal pivoting keeps the fill of the symmetric ordering; the
    # caller retries with threshold pivoting if the residual is poor
    try:
        lu = spla.splu(matrix.tocsc(), permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=pivot)
        x = lu.solve(rhs)
    except RuntimeError as exc:
        if pivot < 0.01:
            return _lu_solve(matrix, rhs, 0.01)
        raise SingularSystem(str(exc)) from exc
    if pivot < 0.01:
        res = np.abs(matrix @ x - rhs).max()
        if not np.isfinite(res) or res > 1e-12 * max(np.abs(rhs).max(), 1e-300):
            return _lu_solve(matrix, rhs, 0.01)
    return x


def solve_saddle_point(system: SparseSystem, rtol: float = 1e-10) -> FieldPair:
    """Direct sparse LU solve; raises SingularSystem or ResidualTooLarge.

    Constant pressures lie in the kernel of the transposed divergence block,
    so the multiplier follows from the summed continuity rows and the rest
    is solved with one pressure pinned, then shifted to zero mean.  The
    residual is checked against the full bordered system.
    """
    n, r = system.n_free, system.mean_row
    f, g, c = system.rhs[:n], system.rhs[n:r], system.rhs[r]
    m = system.m
    colsum = np.asarray(system.B.sum(axis=0)).ravel()
    if np.abs(colsum).max() <= 1e-12 * max(1.0, abs(system.B).max()):
        lam = g.sum() / m.sum()
        keep = np.ones(len(m), dtype=bool)
        keep[0] = False
        Bk = system.B[keep]
        inner = sp.bmat([[system.K, Bk.T], [Bk, None]], format="csc")
        y = _lu_solve(inner, np.concatenate([f, (g - lam * m)[keep]]))
        p = np.zeros(len(m))
        p[keep] = y[n:]
        p += (c - m @ p) / m.sum()
        x = np.concatenate([y[:n], p, [lam]])
    else:
        x = _lu_solve(system.matrix, system.rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    bnorm = np.abs(system.rhs).max()
    res = np.abs(system.apply(x) - system.rhs).max()
    if res > rtol * bnorm and res > 1e-14:
        raise ResidualTooLarge(f"relative residual {res / max(bnorm, 1e-300):.3e}")
    u = system.u_dirichlet.copy()
    u[system.free] = x[:n]
    out = FieldPair(unblocked(u), x[n:r], system.mesh)
    out.info["multiplier"] = float(x[r])
    out.info["residual"] = float(res / bnorm) if bnorm > 0 else 0.0
    return out


def stokes_solve(mesh, viscosity, u_boundary, force=None, dofs=None) -> FieldPair:
    """Steady Stokes problem with Dirichlet data ``u_boundary`` (n_nodes, 2)."""
    dofs = dofs or DofMap.from_mesh(mesh)
    geo = ElementGeometry(mesh)
    A, B = assemble_stokes_blocks(mesh, dofs, viscosity, geo)
    rhs = load_vector(mesh, force, geo) if force is not None else np.zeros(dofs.n_velocity)
    system = build_saddle_system(mesh, dofs, A, B, rhs, blocked(u_boundary))
    return solve_saddle_point(system)


def divergence_residual(field: FieldPair) -> float:
    """``max_k |int psi_k div u_h|`` over the P1 pressure basis."""
    B = divergence_block(field.mesh)
    return float(np.abs(B @ field.velocity_vector).max())


def export_coo(matrix, path) -> None:
    """Write ``i j value`` lines for debugging."""
    coo = sp.coo_matrix(matrix)
    lines = [f"{i} {j} {v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data)]
    Path(path).write_text("\n".join(lines) + "\n")


# --------------------------------------------------------------------------
# post-processing


def l2_error(mesh: Mesh2D, nodal, exact, kind: str = "velocity") -> float:
    """L2 norm of (discrete - exact) using the 7-point rule.

    ``kind`` is ``"velocity"`` (P2 vector, exact returns (ux, uy)) or
    ``"pressure"`` (P1 scalar).
    """
    geo = ElementGeometry(mesh)
    x, y = geo.points[..., 0], geo.points[..., 1]
    if kind == "velocity":
        vals, _ = interpolate_at_quadrature(mesh, nodal, geo)
        ex = np.stack(exact(x, y), axis=-1)
        err = np.sum((vals - ex) ** 2, axis=-1)
    else:
        vals = pressure_at_quadrature(mesh, nodal)
        err = (vals - exact(x, y)) ** 2
    return float(math.sqrt(np.sum(geo.weights * err)))


def integrate(mesh: Mesh2D, func) -> float:
    """Quadrature of a callable ``func(x, y)`` over the (polygonal) mesh."""
    geo = ElementGeometry(mesh)
    return float(np.sum(geo.weights * func(geo.points[..., 0], geo.points[..., 1])))
