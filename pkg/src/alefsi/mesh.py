"""Body-fitted triangulations of a box with a circular hole.

Vertices carry one of three tags: ``INTERIOR``, ``WALL`` (the fixed outer
boundary) or ``DISK`` (the moving body boundary).  Every edge has a P2
midpoint node; midpoints of disk edges sit on the circle, all others are
the average of their endpoints (elements are straight-sided).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .errors import (
    ElementInversion,
    GeometryInfeasible,
    MeshQualityFailure,
    SnapTooLarge,
)

INTERIOR = 0
WALL = 1
DISK = 2

# local edge k of a triangle is opposite local vertex k
LOCAL_EDGES = np.array([[1, 2], [2, 0], [0, 1]])


@dataclass(frozen=True)
class Geometry:
    """Box ``(xmin, ymin, xmax, ymax)`` minus a disk.

    ``disk_h`` is the node spacing on the circle; it defaults to a third of
    ``target_h`` so the polygonal circle stays close to the true one.
    Elements grow from ``disk_h`` to ``target_h`` away from the disk.  When
    ``far_h`` exceeds ``target_h``, they keep size ``target_h`` up to
    ``near_distance`` from the circle and then coarsen towards ``far_h``.
    """

    box: tuple = (0.0, 0.0, 1.0, 1.0)
    disk_center0: tuple = (0.5, 0.5)
    disk_radius: float = 0.1
    target_h: float = 6.284e-2
    disk_h: float | None = None
    grading: float = 0.3
    far_h: float | None = None
    near_distance: float = 0.3

    @property
    def clearance(self) -> float:
        x0, y0, x1, y1 = self.box
        cx, cy = self.disk_center0
        return min(cx - x0, x1 - cx, cy - y0, y1 - cy) - self.disk_radius

    @property
    def boundary_spacing(self) -> float:
        hd = self.disk_h if self.disk_h is not None else self.target_h / 3.0
        return min(hd, self.target_h)

    @property
    def coarsest_h(self) -> float:
        return max(self.target_h, self.far_h or 0.0)


def signed_areas(vertices, triangles):
    p0 = vertices[triangles[:, 0]]
    e1 = vertices[triangles[:, 1]] - p0
    e2 = vertices[triangles[:, 2]] - p0
    return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh2D:
    vertices: np.ndarray  # (Nv, 2)
    triangles: np.ndarray  # (Nt, 3), counter-clockwise
    vertex_tags: np.ndarray  # (Nv,)
    edges: np.ndarray  # (Ne, 2), sorted vertex pairs
    edge_tags: np.ndarray  # (Ne,)
    triangle_edges: np.ndarray  # (Nt, 3), global edge of local edge k
    edge_midpoints: np.ndarray  # (Ne, 2)
    edge_triangle: np.ndarray  # (Ne,), one adjacent triangle
    edge_local: np.ndarray  # (Ne,), local index of the edge in edge_triangle
    disk_center: np.ndarray | None = None
    disk_radius: float | None = None

    @classmethod
    def from_triangulation(cls, vertices, triangles, vertex_tags, disk_center=None, disk_radius=None):
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles, dtype=np.int64)
        vertex_tags = np.asarray(vertex_tags, dtype=np.int64)
        nt = len(triangles)

        local = triangles[:, LOCAL_EDGES]  # (Nt, 3, 2)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(pairs, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.reshape(-1)
        if counts.max() > 2:
            raise MeshQualityFailure("edge shared by more than two triangles")
        triangle_edges = inverse.reshape(nt, 3)

        # first occurrence gives the adjacent triangle for boundary edges
        first = np.full(len(edges), -1, dtype=np.int64)
        order = np.arange(3 * nt)[::-1]
        first[inverse[order]] = order
        edge_triangle = first // 3
        edge_local = first % 3

        on_boundary = counts == 1
        both_disk = (vertex_tags[edges[:, 0]] == DISK) & (vertex_tags[edges[:, 1]] == DISK)
        edge_tags = np.where(on_boundary, np.where(both_disk, DISK, WALL), INTERIOR)

        if disk_center is not None:
            disk_center = _readonly(np.asarray(disk_center, dtype=float).copy())
            disk_radius = float(disk_radius)
        mid = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
        if disk_center is not None:
            d = edge_tags == DISK
            y = mid[d] - disk_center
            mid[d] = disk_center + disk_radius * y / np.linalg.norm(y, axis=1)[:, None]

        mesh = cls(
            vertices=_readonly(vertices),
            triangles=_readonly(triangles),
            vertex_tags=_readonly(vertex_tags),
            edges=_readonly(edges),
            edge_tags=_readonly(edge_tags),
            triangle_edges=_readonly(triangle_edges),
            edge_midpoints=_readonly(mid),
            edge_triangle=_readonly(edge_triangle),
            edge_local=_readonly(edge_local),
            disk_center=disk_center,
            disk_radius=disk_radius,
        )
        mesh.check_orientation()
        return mesh

    # sizes
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_nodes(self) -> int:
        """Number of P2 nodes (vertices followed by edge midpoints)."""
        return self.n_vertices + self.n_edges

    @property
    def nodes(self) -> np.ndarray:
        return np.vstack([self.vertices, self.edge_midpoints])

    @property
    def node_tags(self) -> np.ndarray:
        return np.concatenate([self.vertex_tags, self.edge_tags])

    @property
    def cell_nodes(self) -> np.ndarray:
        """(Nt, 6) P2 node indices: three vertices then the three edges."""
        return np.hstack([self.triangles, self.n_vertices + self.triangle_edges])

    @property
    def boundary_edges(self) -> np.ndarray:
        """Indices of edges tagged WALL or DISK."""
        return np.flatnonzero(self.edge_tags != INTERIOR)

    def signed_areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    def area(self) -> float:
        return float(self.signed_areas().sum())

    def edge_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]], axis=1)

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.vertices[self.triangles]
        angles = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cos = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
        return float(np.min(angles))

    def check_orientation(self):
        """Raise ElementInversion naming the worst triangle if any area is non-positive."""
        areas = self.signed_areas()
        worst = int(np.argmin(areas))
        if areas[worst] <= 0.0:
            raise ElementInversion(worst, areas[worst])


def _with_coordinates(mesh, vertices, disk_midpoints, disk_center=None, disk_radius=None):
    mid = 0.5 * (vertices[mesh.edges[:, 0]] + vertices[mesh.edges[:, 1]])
    d = mesh.edge_tags == DISK
    mid[d] = disk_midpoints
    return dataclasses.replace(
        mesh,
        vertices=_readonly(vertices),
        edge_midpoints=_readonly(mid),
        disk_center=mesh.disk_center if disk_center is None else _readonly(np.asarray(disk_center, float).copy()),
        disk_radius=mesh.disk_radius if disk_radius is None else float(disk_radius),
    )


def move_nodes(mesh: Mesh2D, displacement) -> Mesh2D:
    """Displace every P2 node and return the new mesh.

    ``displacement`` has shape ``(n_nodes, 2)``.  Vertices and disk-edge
    midpoints move by their own displacement; the remaining midpoints are
    straight-edge averages and follow the vertices.
    """
    displacement = np.asarray(displacement, dtype=float)
    if displacement.shape != (mesh.n_nodes, 2):
        raise ValueError(f"displacement must have shape ({mesh.n_nodes}, 2)")
    nv = mesh.n_vertices
    vertices = mesh.vertices + displacement[:nv]
    d = mesh.edge_tags == DISK
    disk_mid = mesh.edge_midpoints[d] + displacement[nv:][d]
    moved = _with_coordinates(mesh, vertices, disk_mid)
    moved.check_orientation()
    return moved


def snap_disk_boundary(mesh: Mesh2D, center, radius) -> Mesh2D:
    """Project disk vertices and disk-edge midpoints radially onto the circle."""
    center = np.asarray(center, dtype=float)
    vertices = mesh.vertices.copy()
    vd = mesh.vertex_tags == DISK
    ed = mesh.edge_tags == DISK

    def project(points):
        y = points - center
        dist = np.linalg.norm(y, axis=1)
        bad = np.abs(dist - radius) > 0.2 * radius
        if np.any(bad):
            raise SnapTooLarge(
                f"disk node at distance {dist[bad][0]:.4g} from center, radius {radius:.4g}"
            )
        return center + radius * y / dist[:, None]

    vertices[vd] = project(vertices[vd])
    disk_mid = project(mesh.edge_midpoints[ed])
    snapped = _with_coordinates(mesh, vertices, disk_mid, center, radius)
    snapped.check_orientation()
    return snapped


def _point_segment_distance(points, a, b):
    """Pairwise distances, shape (len(points), len(a))."""
    ab = b - a
    ap = points[:, None, :] - a[None, :, :]
    t = np.einsum("pei,ei->pe", ap, ab) / np.einsum("ei,ei->e", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(points[:, None, :] - closest, axis=2)


def min_gap(mesh: Mesh2D) -> float:
    """Smallest distance from a disk node to a wall edge."""
    nodes = mesh.nodes
    disk_nodes = nodes[mesh.node_tags == DISK]
    wall = mesh.edges[mesh.edge_tags == WALL]
    if len(disk_nodes) == 0 or len(wall) == 0:
        return math.inf
    dist = _point_segment_distance(disk_nodes, mesh.vertices[wall[:, 0]], mesh.vertices[wall[:, 1]])
    return float(dist.min())


def refine_uniform(mesh: Mesh2D) -> Mesh2D:
    """Split every triangle into four; new disk vertices lie on the circle."""
    nv = mesh.n_vertices
    vertices = np.vstack([mesh.vertices, mesh.edge_midpoints])
    tags = np.concatenate([mesh.vertex_tags, mesh.edge_tags])
    a, b, c = mesh.triangles.T
    m_bc, m_ca, m_ab = (nv + mesh.triangle_edges).T
    children = np.concatenate(
        [
            np.stack([a, m_ab, m_ca], axis=1),
            np.stack([m_ab, b, m_bc], axis=1),
            np.stack([m_ca, m_bc, c], axis=1),
            np.stack([m_ab, m_bc, m_ca], axis=1),
        ]
    )
    return Mesh2D.from_triangulation(vertices, children, tags, mesh.disk_center, mesh.disk_radius)


def square_mesh(n: int, box=(0.0, 0.0, 1.0, 1.0)) -> Mesh2D:
    """Structured n-by-n triangulation of a box, every boundary vertex tagged WALL."""
    x0, y0, x1, y1 = box
    xs = np.linspace(x0, x1, n + 1)
    ys = np.linspace(y0, y1, n + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    triangles = np.concatenate([np.stack([v00, v10, v11], 1), np.stack([v00, v11, v01], 1)])
    on_wall = (
        np.isclose(vertices[:, 0], x0) | np.isclose(vertices[:, 0], x1)
        | np.isclose(vertices[:, 1], y0) | np.isclose(vertices[:, 1], y1)
    )
    tags = np.where(on_wall, WALL, INTERIOR)
    return Mesh2D.from_triangulation(vertices, triangles, tags)


# --------------------------------------------------------------------------
# generation


def _side_points(a, b, size, n_samples=2000):
    """Points on segment [a, b) spaced according to the sizing function."""
    t = np.linspace(0.0, 1.0, n_samples + 1)
    pts = a + t[:, None] * (b - a)
    length = np.linalg.norm(b - a)
    density = 1.0 / size(pts)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (density[1:] + density[:-1]) * np.diff(t) * length)])
    n = max(1, int(math.ceil(cum[-1] - 1e-9)))
    targets = np.linspace(0.0, cum[-1], n + 1)[:-1]
    ts = np.interp(targets, cum, t)
    return a + ts[:, None] * (b - a)


def _laplacian_smooth(points, free, tri, n_iter):
    for _ in range(n_iter):
        nbr_sum = np.zeros_like(points)
        nbr_cnt = np.zeros(len(points))
        for i, j in ((0, 1), (1, 2), (2, 0)):
            np.add.at(nbr_sum, tri[:, i], points[tri[:, j]])
            np.add.at(nbr_sum, tri[:, j], points[tri[:, i]])
            np.add.at(nbr_cnt, tri[:, i], 1.0)
            np.add.at(nbr_cnt, tri[:, j], 1.0)
        # each undirected edge was counted from both triangles sharing it
        target = nbr_sum / np.maximum(nbr_cnt, 1.0)[:, None]
        points = points.copy()
        points[free] = target[free]
    return points


def generate_mesh(geom: Geometry, smoothing_iterations: int = 6, min_angle: float = 20.0) -> Mesh2D:
    """Triangulate the box minus the disk.

    Graded rings of nodes around the circle are combined with a hexagonal
    background lattice and a Delaunay triangulation; the triangles inside
    the disk are discarded.  Raises GeometryInfeasible when the disk does
    not fit with two element layers of clearance, MeshQualityFailure when
    the smallest angle falls below ``min_angle`` degrees.
    """
    x0, y0, x1, y1 = map(float, geom.box)
    center = np.asarray(geom.disk_center0, dtype=float)
    r = float(geom.disk_radius)
    h = float(geom.target_h)
    if x1 <= x0 or y1 <= y0 or r <= 0.0 or h <= 0.0:
        raise GeometryInfeasible("box, radius and mesh size must be positive")
    clearance = geom.clearance
    hd = geom.boundary_spacing
    if clearance <= 0.0:
        raise GeometryInfeasible(f"disk does not fit inside the box (clearance {clearance:.4g})")
    if clearance < 2.0 * hd:
        raise GeometryInfeasible(
            f"clearance {clearance:.4g} leaves fewer than two element layers of size {hd:.4g}"
        )

    h_max = geom.coarsest_h

    def size(p):
        d = np.maximum(np.linalg.norm(np.atleast_2d(p) - center, axis=1) - r, 0.0)
        s = np.minimum(h, hd + geom.grading * d)
        if h_max > h:
            far = np.minimum(h_max, h + geom.grading * (d - geom.near_distance))
            s = np.where(d > geom.near_distance, far, s)
        return s

    def wall_distance(p):
        return np.minimum.reduce([p[:, 0] - x0, x1 - p[:, 0], p[:, 1] - y0, y1 - p[:, 1]])

    n_disk = max(8, int(math.ceil(2.0 * math.pi * r / hd - 1e-9)))
    theta = 2.0 * math.pi * np.arange(n_disk) / n_disk
    disk_pts = center + r * np.column_stack([np.cos(theta), np.sin(theta)])

    corners = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    box_pts = np.vstack([_side_points(corners[i], corners[(i + 1) % 4], size) for i in range(4)])

    fixed = np.vstack([disk_pts, box_pts])
    tree = cKDTree(fixed)

    ring_pts = []
    rho = r
    reach = np.linalg.norm(corners - center, axis=1).max()
    max_rings = 8 if h_max <= h else 10_000
    for j in range(1, max_rings + 1):
        s_here = float(size(center + [rho, 0.0])[0])
        if (s_here >= 0.98 * h_max and j > 1) or rho > reach:
            break
        rho = rho + 0.5 * math.sqrt(3.0) * s_here
        s_ring = float(size(center + [rho, 0.0])[0])
        n_ring = max(n_disk, int(math.ceil(2.0 * math.pi * rho / s_ring)))
        phase = 0.5 * (j % 2) * 2.0 * math.pi / n_ring
        ang = phase + 2.0 * math.pi * np.arange(n_ring) / n_ring
        pts = center + rho * np.column_stack([np.cos(ang), np.sin(ang)])
        s_pts = size(pts)
        keep = wall_distance(pts) >= 0.5 * s_pts
        keep &= tree.query(pts)[0] >= 0.6 * s_pts
        ring_pts.append(pts[keep])
    ring_pts = np.vstack(ring_pts) if ring_pts else np.empty((0, 2))

    dy = 0.5 * math.sqrt(3.0) * h_max
    rows = []
    for i, y in enumerate(np.arange(y0 + dy, y1, dy)):
        xs = np.arange(x0 + (0.5 * h_max if i % 2 else h_max), x1, h_max)
        rows.append(np.column_stack([xs, np.full_like(xs, y)]))
    lattice = np.vstack(rows) if rows else np.empty((0, 2))
    occupied = np.vstack([fixed, ring_pts])
    s_lat = size(lattice)
    keep = wall_distance(lattice) >= 0.5 * s_lat
    keep &= np.linalg.norm(lattice - center, axis=1) >= r + s_lat
    keep &= cKDTree(occupied).query(lattice)[0] >= 0.7 * s_lat
    lattice = lattice[keep]

    n_fixed = len(fixed)
    points = np.vstack([fixed, ring_pts, lattice, center[None]])
    center_idx = len(points) - 1
    free = np.zeros(len(points), dtype=bool)
    free[n_fixed + len(ring_pts):center_idx] = True

    def triangulate(pts):
        tri = Delaunay(pts).simplices
        return tri[~np.any(tri == center_idx, axis=1)]

    tri = triangulate(points)
    if smoothing_iterations:
        points = _laplacian_smooth(points, free, tri, smoothing_iterations)
        tri = triangulate(points)

    vertices = points[:center_idx]
    areas = signed_areas(vertices, tri)
    tri = np.where((areas < 0)[:, None], tri[:, [0, 2, 1]], tri)

    tags = np.full(len(vertices), INTERIOR, dtype=np.int64)
    tags[:n_disk] = DISK
    tags[n_disk:n_fixed] = WALL
    mesh = Mesh2D.from_triangulation(vertices, tri, tags, center, r)

    disk_edges = mesh.edges[mesh.edge_tags == DISK]
    if len(disk_edges) != n_disk or np.any(np.bincount(disk_edges.ravel(), minlength=n_disk)[:n_disk] != 2):
        raise MeshQualityFailure("disk boundary edges were not recovered by the triangulation")
    wall_edges = mesh.edges[mesh.edge_tags == WALL]
    if np.any(mesh.vertex_tags[wall_edges] != WALL):
        raise MeshQualityFailure("outer boundary contains non-wall vertices")
    mesh.check_orientation()
    angle = mesh.min_angle()
    if angle < min_angle:
        raise MeshQualityFailure(f"minimum angle {angle:.2f} deg below {min_angle} deg")
    return mesh


# --------------------------------------------------------------------------
# plain-text interchange


def write_mesh(mesh: Mesh2D, path) -> None:
    """Write ``nodes N elements M`` / ``x y tag`` / ``i j k`` text."""
    lines = [f"nodes {mesh.n_vertices} elements {mesh.n_triangles}"]
    lines += [f"{x:.17g} {y:.17g} {t}" for (x, y), t in zip(mesh.vertices, mesh.vertex_tags)]
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    Path(path).write_text("\n".join(lines) + "\n")


def _fit_circle(points):
    A = np.column_stack([2.0 * points, np.ones(len(points))])
    b = np.sum(points**2, axis=1)
    (cx, cy, c), *_ = np.linalg.lstsq(A, b, rcond=None)
    return np.array([cx, cy]), math.sqrt(c + cx * cx + cy * cy)


def read_mesh(path) -> Mesh2D:
    """Inverse of :func:`write_mesh`; midpoints are regenerated."""
    lines = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    head = lines[0].split()
    if len(head) != 4 or head[0] != "nodes" or head[2] != "elements":
        raise ValueError(f"bad mesh header: {lines[0]!r}")
    nv, nt = int(head[1]), int(head[3])
    node_rows = [ln.split() for ln in lines[1 : 1 + nv]]
    vertices = np.array([[float(x), float(y)] for x, y, _ in node_rows])
    tags = np.array([int(t) for *_, t in node_rows], dtype=np.int64)
    triangles = np.array([[int(v) for v in ln.split()] for ln in lines[1 + nv : 1 + nv + nt]], dtype=np.int64)
    center = radius = None
    if np.count_nonzero(tags == DISK) >= 3:
        center, radius = _fit_circle(vertices[tags == DISK])
    return Mesh2D.from_triangulation(vertices, triangles, tags, center, radius)
