"""Triangulated disk domains with boundary electrodes.

Builds conforming triangular meshes of a disk whose boundary nodes include
every electrode arc endpoint, and provides the conductivity-tensor fields
that the forward solver integrates element by element.

Mesh text format (``save_mesh`` / ``load_mesh``)::

    anisoeit-mesh 1
    <radius>
    <n_nodes>
    x y            # one line per node, %.17g
    <n_triangles>
    i j k          # zero-based node indices, counterclockwise
    <n_boundary>
    b              # boundary node indices, counterclockwise order
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.spatial import Delaunay

TWO_PI = 2.0 * np.pi


def _wrap_angle(theta):
    """Map angles to [0, 2*pi)."""
    return np.mod(theta, TWO_PI)


@dataclass(frozen=True)
class ElectrodeLayout:
    """L electrode arcs on a circle, with contact impedances.

    Arcs are stored by center angle and common angular width; they are
    equispaced, pairwise disjoint and ordered counterclockwise starting
    at angle 0.
    """

    L: int
    centers: np.ndarray        # (L,) center angles in [0, 2*pi)
    angular_width: float       # arc opening angle, identical for all arcs
    contact_impedances: np.ndarray  # (L,) positive, Ohm*m nominal
    radius: float = 1.0

    @property
    def arc_length(self) -> float:
        """Arc length |e_l| of each electrode."""
        return self.angular_width * self.radius

    def arc_bounds(self) -> np.ndarray:
        """(L, 2) start/end angles of each arc (end may exceed 2*pi)."""
        half = 0.5 * self.angular_width
        return np.stack([self.centers - half, self.centers + half], axis=1)

    def electrode_of_angle(self, theta) -> np.ndarray:
        """Electrode index covering each angle, or -1 in the gaps."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        out = np.full(theta.shape, -1, dtype=int)
        half = 0.5 * self.angular_width
        for l, c in enumerate(self.centers):
            d = np.abs(_wrap_angle(theta - c + np.pi) - np.pi)
            out[d <= half + 1e-12] = l
        return out


def place_electrodes(L: int, coverage: float, z: float,
                     radius: float = 1.0) -> ElectrodeLayout:
    """Equispaced electrode layout covering a fraction of the boundary.

    Parameters
    ----------
    L : int
        Electrode count; must be even and >= 4 (the trigonometric
        current-pattern basis needs an L/2 cosine / L/2-1 sine split).
    coverage : float
        Fraction of the circle covered by electrodes, in (0, 1).
        Each arc has length ``coverage * 2*pi*radius / L``.
    z : float
        Contact impedance, identical for all electrodes, > 0.
    radius : float
        Circle radius the layout lives on.
    """
    if L < 4:
        raise ValueError(f"need at least 4 electrodes, got L={L}")
    if L % 2 != 0:
        raise ValueError(f"electrode count must be even, got L={L}")
    if not 0.0 < coverage < 1.0:
        raise ValueError(f"coverage must lie in (0, 1), got {coverage}")
    if z <= 0.0:
        raise ValueError(f"contact impedance must be positive, got {z}")
    centers = TWO_PI * np.arange(L) / L
    width = coverage * TWO_PI / L
    return ElectrodeLayout(L=L, centers=centers, angular_width=width,
                           contact_impedances=np.full(L, float(z)),
                           radius=float(radius))


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation of a disk.

    ``boundary_nodes`` traverse the boundary circle counterclockwise; their
    angular positions strictly increase modulo 2*pi.  All triangles are
    counterclockwise (positive signed area).
    """

    nodes: np.ndarray           # (N, 2)
    triangles: np.ndarray       # (M, 3) int
    boundary_nodes: np.ndarray  # (Nb,) int, ordered by angle
    radius: float = 1.0

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    def boundary_angles(self) -> np.ndarray:
        p = self.nodes[self.boundary_nodes]
        return _wrap_angle(np.arctan2(p[:, 1], p[:, 0]))

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        out = []
        for a, b in ((0, 1), (1, 2), (2, 0)):
            out.append(np.linalg.norm(p[:, a] - p[:, b], axis=1))
        return np.concatenate(out)

    def boundary_edges(self) -> np.ndarray:
        """(Nb, 2) consecutive boundary node pairs, counterclockwise."""
        b = self.boundary_nodes
        return np.stack([b, np.roll(b, -1)], axis=1)

    def validate(self) -> None:
        """Check mesh invariants; raises ValueError on the first violation."""
        areas = self.signed_areas()
        if not (areas > 0).all():
            bad = int(np.argmin(areas))
            raise ValueError(f"triangle {bad} has non-positive area {areas[bad]:g}")
        th = self.boundary_angles()
        gaps = np.diff(np.concatenate([th, [th[0] + TWO_PI]]))
        if not (gaps > 0).all():
            raise ValueError("boundary node angles do not strictly increase")
        # every interior edge is shared by exactly two triangles
        edges = {}
        for t, tri in enumerate(self.triangles):
            for a, b in ((0, 1), (1, 2), (2, 0)):
                key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
                edges[key] = edges.get(key, 0) + 1
        counts = np.array(list(edges.values()))
        if not ((counts == 1) | (counts == 2)).all():
            raise ValueError("an edge is shared by more than two triangles")
        n_hull = int((counts == 1).sum())
        if n_hull != len(self.boundary_nodes):
            raise ValueError("boundary loop does not match single-count edges")


def build_disk_mesh(radius: float, target_h: float,
                    layout: ElectrodeLayout) -> Mesh:
    """Triangulate a disk so that electrode arc endpoints are boundary nodes.

    Boundary nodes are placed at every arc endpoint and filled along arcs
    and gaps at spacing <= ``target_h``; the interior is filled with
    concentric rings of matching density and triangulated with Delaunay.
    Maximum edge length is bounded by ``1.5 * target_h``.

    Raises
    ------
    ValueError
        If ``target_h`` is not smaller than the radius, the layout radius
        disagrees, or an electrode arc ends up containing no boundary edge.
    """
    if target_h <= 0 or target_h >= radius:
        raise ValueError(f"target_h must lie in (0, radius); got {target_h}")
    if abs(layout.radius - radius) > 1e-12:
        raise ValueError("layout radius does not match the requested disk radius")

    # boundary breakpoints: all arc endpoints, sorted on the circle
    bounds = layout.arc_bounds()
    breakpoints = np.sort(_wrap_angle(bounds.ravel()))
    # fill each circular segment at spacing <= target_h
    thetas = []
    nseg_list = np.empty(len(breakpoints), dtype=int)
    for i in range(len(breakpoints)):
        a0 = breakpoints[i]
        a1 = breakpoints[(i + 1) % len(breakpoints)]
        if i + 1 == len(breakpoints):
            a1 += TWO_PI
        seg_len = (a1 - a0) * radius
        nseg = max(1, int(np.ceil(seg_len / target_h)))
        nseg_list[i] = nseg
        thetas.append(a0 + (a1 - a0) * np.arange(nseg) / nseg)
    theta_b = _wrap_angle(np.concatenate(thetas))
    theta_b = np.sort(theta_b)
    boundary_pts = radius * np.stack([np.cos(theta_b), np.sin(theta_b)], axis=1)

    # electrode arcs must own at least one full boundary edge
    mids = _wrap_angle(theta_b + np.diff(np.concatenate([theta_b, [theta_b[0] + TWO_PI]])) / 2)
    owners = layout.electrode_of_angle(mids)
    for l in range(layout.L):
        if not (owners == l).any():
            raise ValueError(
                f"target_h={target_h:g} too coarse: electrode {l} contains no boundary edge")

    # interior rings; radial spacing ~0.85 h keeps edges short and triangles fat.
    # Even per-ring counts with offsets 0 or pi/n keep the point set invariant
    # under both axis mirrors, so symmetric conductivities give symmetric data.
    n_rings = max(2, int(round(radius / (0.85 * target_h))))
    dr = radius / n_rings
    pts = [boundary_pts, np.zeros((1, 2))]
    for i in range(1, n_rings):
        r_i = i * dr
        n_i = 2 * max(3, int(np.ceil(np.pi * r_i / target_h)))
        offs = (i % 2) * np.pi / n_i
        ang = offs + TWO_PI * np.arange(n_i) / n_i
        pts.append(r_i * np.stack([np.cos(ang), np.sin(ang)], axis=1))
    nodes = np.concatenate(pts, axis=0)

    tri = Delaunay(nodes)
    triangles = tri.simplices.copy()
    # orient counterclockwise
    p = nodes[triangles]
    cross = ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
             - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0]))
    flip = cross < 0
    triangles[flip] = triangles[flip][:, [0, 2, 1]]

    boundary_nodes = np.arange(len(theta_b))
    mesh = Mesh(nodes=nodes, triangles=triangles,
                boundary_nodes=boundary_nodes, radius=float(radius))
    mesh.validate()
    return mesh


def boundary_edge_electrodes(mesh: Mesh, layout: ElectrodeLayout) -> np.ndarray:
    """Electrode index of each boundary edge (-1 for gap edges)."""
    edges = mesh.boundary_edges()
    mid = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    ang = _wrap_angle(np.arctan2(mid[:, 1], mid[:, 0]))
    return layout.electrode_of_angle(ang)


# ---------------------------------------------------------------------------
# conductivity tensor fields


class ConductivityTensorField:
    """Symmetric positive-definite 2x2 tensor field on the disk.

    Wraps a vectorized evaluator mapping points (N, 2) to tensors
    (N, 2, 2) and carries an ellipticity floor (a lower bound for the
    smallest eigenvalue over the domain).  When built from a factored form
    ``a(x) * A0`` the factors are kept for downstream use.
    """

    def __init__(self, evaluator: Callable[[np.ndarray], np.ndarray],
                 ellipticity: float,
                 scalar: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 background: Optional[np.ndarray] = None):
        self._evaluator = evaluator
        self.ellipticity = float(ellipticity)
        self.scalar = scalar
        self.background = None if background is None else np.array(background, dtype=float)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = self._evaluator(pts)
        return np.asarray(out, dtype=float).reshape(len(pts), 2, 2)


def _check_spd(A0: np.ndarray) -> np.ndarray:
    A0 = np.asarray(A0, dtype=float)
    if A0.shape != (2, 2):
        raise ValueError(f"expected a 2x2 matrix, got shape {A0.shape}")
    if not np.allclose(A0, A0.T, rtol=0.0, atol=1e-14 * max(1.0, np.abs(A0).max())):
        raise ValueError("matrix is not symmetric")
    eig = np.linalg.eigvalsh(A0)
    if eig[0] <= 0:
        raise ValueError(f"matrix is not positive definite (eigenvalues {eig})")
    return A0


def constant_tensor(A0: np.ndarray) -> ConductivityTensorField:
    """Tensor field that is the constant SPD matrix ``A0`` everywhere."""
    A0 = _check_spd(A0)
    lam = float(np.linalg.eigvalsh(A0)[0])

    def evaluate(pts):
        return np.broadcast_to(A0, (len(pts), 2, 2))

    return ConductivityTensorField(evaluate, lam, scalar=None, background=A0)


def tensor_from_factored(a: Callable[[np.ndarray], np.ndarray],
                         A0: np.ndarray,
                         a_min: Optional[float] = None) -> ConductivityTensorField:
    """Tensor field ``a(x) * A0`` from a positive scalar field and SPD A0.

    Parameters
    ----------
    a : callable
        Vectorized scalar field, (N, 2) points -> (N,) positive values.
    A0 : (2, 2) array
        Constant symmetric positive-definite background tensor.
    a_min : float, optional
        Known infimum of ``a`` over the domain.  When omitted it is
        estimated from 10^4 deterministic sample points on the unit disk;
        pass the exact value for piecewise-constant fields.
    """
    A0 = _check_spd(A0)
    if a_min is None:
        k = np.arange(1, 10_001, dtype=float)
        rr = np.sqrt(k / k[-1])
        ang = k * np.pi * (3.0 - np.sqrt(5.0))
        probe = np.stack([rr * np.cos(ang), rr * np.sin(ang)], axis=1)
        a_min = float(np.min(a(probe)))
    if a_min <= 0:
        raise ValueError(f"scalar field must be positive; inf a = {a_min:g}")
    lam = a_min * float(np.linalg.eigvalsh(A0)[0])

    def evaluate(pts):
        return np.asarray(a(pts), dtype=float)[:, None, None] * A0

    return ConductivityTensorField(evaluate, lam, scalar=a, background=A0)


# ---------------------------------------------------------------------------
# serialization


def save_mesh(mesh: Mesh, path) -> None:
    """Write a mesh in the plain-text format documented in this module."""
    with open(path, "w") as f:
        f.write("anisoeit-mesh 1\n")
        f.write("%.17g\n" % mesh.radius)
        f.write("%d\n" % mesh.n_nodes)
        for x, y in mesh.nodes:
            f.write("%.17g %.17g\n" % (x, y))
        f.write("%d\n" % len(mesh.triangles))
        for i, j, k in mesh.triangles:
            f.write("%d %d %d\n" % (i, j, k))
        f.write("%d\n" % len(mesh.boundary_nodes))
        for b in mesh.boundary_nodes:
            f.write("%d\n" % b)


def load_mesh(path) -> Mesh:
    with open(path) as f:
        header = f.readline().split()
        if header[:1] != ["anisoeit-mesh"]:
            raise ValueError(f"{path}: not an anisoeit mesh file")
        radius = float(f.readline())
        n = int(f.readline())
        nodes = np.array([[float(v) for v in f.readline().split()] for _ in range(n)])
        m = int(f.readline())
        tris = np.array([[int(v) for v in f.readline().split()] for _ in range(m)],
                        dtype=int)
        nb = int(f.readline())
        bnd = np.array([int(f.readline()) for _ in range(nb)], dtype=int)
    mesh = Mesh(nodes=nodes, triangles=tris, boundary_nodes=bnd, radius=radius)
    mesh.validate()
    return mesh
