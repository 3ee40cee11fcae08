"""Complete electrode model forward solver and boundary-map extraction.

Assembles the P1 finite-element system for the anisotropic conductivity
equation with L finite electrodes, contact impedances and shunting,
applies trigonometric current patterns, and condenses the simulated
voltages into discrete Neumann-to-Dirichlet / Dirichlet-to-Neumann
matrices in the normalized trigonometric basis.

The block system solved per current pattern is

    [[B, C], [C^T, D]] (alpha, beta) = (0, I_1 - I_2, ..., I_1 - I_L)

with B the conductivity stiffness plus electrode mass terms, and the
electrode voltages recovered as U = CC beta where CC has columns summing
to zero (ground condition).  The voltage-coefficient block C~ equals C^T:
the underlying form is symmetric for real coefficients.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .mesh import (ConductivityTensorField, ElectrodeLayout, Mesh,
                   boundary_edge_electrodes)


@dataclass(frozen=True)
class CurrentPatternSet:
    """Trigonometric current patterns T[l, k] for k = 1..L-1.

    Column k injects amplitude*cos(k theta_l) on electrode l for
    k <= L/2 and amplitude*sin((k - L/2) theta_l) for k > L/2.  Columns
    sum to zero (conservation of current) and are pairwise orthogonal
    for equispaced electrodes.
    """

    L: int
    amplitude: float
    T: np.ndarray            # (L, L-1)

    @property
    def norms(self) -> np.ndarray:
        """Euclidean norm of each pattern column."""
        return np.linalg.norm(self.T, axis=0)

    @property
    def normalized(self) -> np.ndarray:
        """(L, L-1) columns T[:, k] / ||T[:, k]||."""
        return self.T / self.norms

    def frequency_of_column(self, k: int) -> tuple[int, str]:
        """Map column index (0-based) to (harmonic, 'cos'|'sin')."""
        half = self.L // 2
        if k < half:
            return k + 1, "cos"
        return k - half + 1, "sin"


def trig_current_patterns(L: int, amplitude: float = 1.0) -> CurrentPatternSet:
    if L < 4 or L % 2 != 0:
        raise ValueError(f"electrode count must be even and >= 4, got L={L}")
    theta = 2.0 * np.pi * np.arange(L) / L
    half = L // 2
    T = np.empty((L, L - 1))
    for k in range(1, L):
        if k <= half:
            T[:, k - 1] = np.cos(k * theta)
        else:
            T[:, k - 1] = np.sin((k - half) * theta)
    return CurrentPatternSet(L=L, amplitude=float(amplitude), T=amplitude * T)


def _ground_matrix(L: int) -> np.ndarray:
    """L x (L-1) map from reduced coefficients to zero-sum voltages."""
    CC = np.zeros((L, L - 1))
    CC[0, :] = 1.0
    CC[1:, :] = -np.eye(L - 1)
    return CC


@dataclass
class CEMSystem:
    """Assembled sparse CEM block system, ready to factor and solve."""

    mesh: Mesh
    layout: ElectrodeLayout
    matrix: sparse.csc_matrix       # (N+L-1) x (N+L-1), symmetric
    _factor: Optional[object] = None

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    def factor(self):
        if self._factor is None:
            self._factor = splu(self.matrix)
        return self._factor


def element_stiffness(vertices: np.ndarray, A: np.ndarray) -> np.ndarray:
    """3x3 stiffness of one linear triangle for constant tensor A.

    Entries are area * (grad phi_i)^T A (grad phi_j); the basis gradients
    are constant on the element.
    """
    x, y = vertices[:, 0], vertices[:, 1]
    b = np.array([y[1] - y[2], y[2] - y[0], y[0] - y[1]])
    c = np.array([x[2] - x[1], x[0] - x[2], x[1] - x[0]])
    area2 = x[0] * b[0] + x[1] * b[1] + x[2] * b[2]   # 2*area (signed)
    if area2 <= 0:
        raise ValueError("triangle has non-positive area")
    G = np.stack([b, c]) / area2                       # (2, 3) gradients
    return 0.5 * area2 * (G.T @ A @ G)


def assemble_cem_system(mesh: Mesh, A: ConductivityTensorField,
                        layout: ElectrodeLayout) -> CEMSystem:
    """Assemble the CEM block matrix for tensor conductivity A.

    The tensor is sampled once per triangle at the centroid (exact
    integration of the piecewise-constant coefficient against the constant
    P1 gradients); electrode mass terms are integrated exactly on the
    boundary edges each electrode covers.
    """
    nodes, tris = mesh.nodes, mesh.triangles
    N = mesh.n_nodes
    L = layout.L
    p = nodes[tris]                                    # (M, 3, 2)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    area2 = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    if (area2 <= 0).any():
        bad = int(np.argmin(area2))
        raise ValueError(
            f"degenerate triangle {bad} (nodes {tris[bad].tolist()}): "
            f"signed area {0.5 * area2[bad]:g}")

    x, y = p[..., 0], p[..., 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    G = np.stack([b, c], axis=1) / area2[:, None, None]   # (M, 2, 3)

    centroids = p.mean(axis=1)
    Ac = A(centroids)                                      # (M, 2, 2)
    Ke = 0.5 * area2[:, None, None] * np.einsum(
        "mki,mkl,mlj->mij", G, Ac, G)                      # (M, 3, 3)

    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    K = sparse.coo_matrix((Ke.ravel(), (rows, cols)), shape=(N, N))

    # electrode boundary terms
    z = layout.contact_impedances
    edges = mesh.boundary_edges()
    owner = boundary_edge_electrodes(mesh, layout)
    mass_rows, mass_cols, mass_vals = [], [], []
    w = np.zeros((L, N))           # w[l, k] = integral of phi_k over e_l
    arc_len = np.zeros(L)
    for (i, j), l in zip(edges, owner):
        if l < 0:
            continue
        s = float(np.linalg.norm(nodes[j] - nodes[i]))
        arc_len[l] += s
        # segment mass matrix s/6 * [[2,1],[1,2]]
        mass_rows += [i, i, j, j]
        mass_cols += [i, j, i, j]
        mass_vals += [2 * s / 6 / z[l], s / 6 / z[l], s / 6 / z[l], 2 * s / 6 / z[l]]
        w[l, i] += s / 2
        w[l, j] += s / 2
    Kz = sparse.coo_matrix((mass_vals, (mass_rows, mass_cols)), shape=(N, N))

    # C[k, j] = -(1/z_1) w_1[k] + (1/z_{j+1}) w_{j+1}[k]
    wz = w / z[:, None]
    C = np.tile(-wz[0], (L - 1, 1)).T + wz[1:].T       # (N, L-1)
    D = (arc_len[0] / z[0]) * np.ones((L - 1, L - 1)) + np.diag(arc_len[1:] / z[1:])

    M = sparse.bmat([[K + Kz, sparse.csr_matrix(C)],
                     [sparse.csr_matrix(C.T), sparse.csr_matrix(D)]],
                    format="csc")
    return CEMSystem(mesh=mesh, layout=layout, matrix=M)


def solve_forward(system: CEMSystem, pattern: np.ndarray
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Solve one current pattern; returns (interior potential, electrode voltages).

    The pattern must satisfy conservation of current (entries summing to
    zero).  Electrode voltages sum to zero by construction of the
    ground-fixing basis.
    """
    pattern = np.asarray(pattern, dtype=float)
    L = system.layout.L
    if pattern.shape != (L,):
        raise ValueError(f"pattern must have shape ({L},), got {pattern.shape}")
    tot = abs(pattern.sum())
    if tot > 1e-10 * max(1.0, np.abs(pattern).max()):
        raise ValueError(f"pattern violates current conservation (sum {tot:g})")
    N = system.n_nodes
    rhs = np.zeros(N + L - 1)
    rhs[N:] = pattern[0] - pattern[1:]
    sol = system.factor().solve(rhs)
    resid = np.linalg.norm(system.matrix @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if resid > 1e-10:
        raise RuntimeError(f"forward solve residual {resid:.3e} exceeds 1e-10")
    beta = sol[N:]
    U = _ground_matrix(L) @ beta
    return sol[:N], U


@dataclass
class VoltageData:
    """Electrode voltages for a full set of current patterns.

    Column k of ``U`` is the voltage response to pattern column k; every
    column sums to zero (ground condition), re-imposed after optional
    additive noise.
    """

    U: np.ndarray                  # (L, L-1)
    patterns: CurrentPatternSet
    contact_impedances: np.ndarray
    layout: ElectrodeLayout
    noise: float = 0.0
    seed: int = 0
    config_sha256: str = ""

    @property
    def L(self) -> int:
        return self.patterns.L


def simulate_voltages(mesh: Mesh, A: ConductivityTensorField,
                      layout: ElectrodeLayout,
                      patterns: Optional[CurrentPatternSet] = None,
                      noise: float = 0.0, seed: int = 0) -> VoltageData:
    """Solve every current pattern and collect electrode voltages.

    ``noise`` adds independent Gaussian perturbations with standard
    deviation noise * max|U| to every entry (counter-based Philox
    generator, reproducible from ``seed``), after which each column is
    re-centered to preserve the ground condition.
    """
    if patterns is None:
        patterns = trig_current_patterns(layout.L)
    system = assemble_cem_system(mesh, A, layout)
    L = layout.L
    U = np.empty((L, L - 1))
    for k in range(L - 1):
        _, U[:, k] = solve_forward(system, patterns.T[:, k])
    if noise > 0.0:
        rng = np.random.Generator(np.random.Philox(seed))
        U = U + noise * np.abs(U).max() * rng.standard_normal(U.shape)
        U = U - U.mean(axis=0, keepdims=True)
    return VoltageData(U=U, patterns=patterns,
                       contact_impedances=layout.contact_impedances.copy(),
                       layout=layout, noise=float(noise), seed=int(seed))


@dataclass
class DNMatrix:
    """Discrete Dirichlet-to-Neumann map in the normalized trig basis.

    ``nd`` is the Neumann-to-Dirichlet matrix R with
    R[m, n] = sum_l U^n_l T^m_l / (||T^m|| ||T^n||); ``dn`` is its inverse,
    symmetrized, with the raw relative asymmetry recorded.  Basis vectors
    are the Euclidean-normalized pattern columns; with the electrode
    centers as midpoint quadrature nodes on the boundary circle, the
    quadratic form  c1^T dn c2  approximates the boundary power pairing
    integral of two traces, so the harmonic eigenvalue estimate of mode k
    is  dn[k, k] * L / (2 pi)  (equals sigma*k on a homogeneous disk in
    the many-electrode limit).
    """

    dn: np.ndarray                 # (L-1, L-1), symmetrized
    nd: np.ndarray                 # (L-1, L-1)
    asymmetry: float               # ||dn_raw - dn_raw^T|| / ||dn_raw||
    patterns: CurrentPatternSet
    layout: ElectrodeLayout
    config_sha256: str = ""

    @property
    def L(self) -> int:
        return self.patterns.L

    def electrode_centers(self) -> np.ndarray:
        th = self.layout.centers
        return self.layout.radius * np.stack([np.cos(th), np.sin(th)], axis=1)

    def harmonic_eigenvalues(self) -> tuple[np.ndarray, np.ndarray]:
        """(frequencies, estimates): diagonal in the trig basis rescaled by
        L/(2 pi R) to the continuum normalization."""
        L = self.L
        half = L // 2
        freqs = np.concatenate([np.arange(1, half + 1), np.arange(1, half)])
        scale = L / (2.0 * np.pi * self.layout.radius)
        return freqs, np.diag(self.dn) * scale


def dn_matrix(data: VoltageData) -> DNMatrix:
    """Condense voltage data into ND / DN matrices.

    Raises if the ND matrix is numerically singular (condition number
    above 1e12), which signals degenerate data.
    """
    T = data.patterns.T
    norms = data.patterns.norms
    R = (T.T @ data.U) / np.outer(norms, norms)
    cond = np.linalg.cond(R)
    if cond > 1e12:
        raise ValueError(f"ND matrix is ill-conditioned (cond {cond:.3e})")
    dn_raw = np.linalg.inv(R)
    asym = np.linalg.norm(dn_raw - dn_raw.T) / np.linalg.norm(dn_raw)
    dn = 0.5 * (dn_raw + dn_raw.T)
    return DNMatrix(dn=dn, nd=R, asymmetry=float(asym),
                    patterns=data.patterns, layout=data.layout,
                    config_sha256=data.config_sha256)


# ---------------------------------------------------------------------------
# JSON serialization


def _layout_to_dict(layout: ElectrodeLayout) -> dict:
    return {
        "L": layout.L,
        "centers": layout.centers.tolist(),
        "angular_width": layout.angular_width,
        "contact_impedances": layout.contact_impedances.tolist(),
        "radius": layout.radius,
    }


def _layout_from_dict(d: dict) -> ElectrodeLayout:
    return ElectrodeLayout(L=int(d["L"]), centers=np.array(d["centers"]),
                           angular_width=float(d["angular_width"]),
                           contact_impedances=np.array(d["contact_impedances"]),
                           radius=float(d["radius"]))


def _patterns_to_dict(p: CurrentPatternSet) -> dict:
    return {"L": p.L, "amplitude": p.amplitude, "T": p.T.tolist(),
            "normalization": "euclidean"}


def save_voltages(data: VoltageData, path) -> None:
    doc = {
        "format": "anisoeit-voltages",
        "version": 1,
        "electrodes": _layout_to_dict(data.layout),
        "patterns": _patterns_to_dict(data.patterns),
        "voltages_row_major": data.U.tolist(),
        "noise": data.noise,
        "seed": data.seed,
        "rng": "philox",
        "config_sha256": data.config_sha256,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_voltages(path) -> VoltageData:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != "anisoeit-voltages":
        raise ValueError(f"{path}: not a voltage data file")
    layout = _layout_from_dict(doc["electrodes"])
    pat = CurrentPatternSet(L=int(doc["patterns"]["L"]),
                            amplitude=float(doc["patterns"]["amplitude"]),
                            T=np.array(doc["patterns"]["T"]))
    return VoltageData(U=np.array(doc["voltages_row_major"]), patterns=pat,
                       contact_impedances=layout.contact_impedances,
                       layout=layout, noise=float(doc["noise"]),
                       seed=int(doc["seed"]),
                       config_sha256=doc.get("config_sha256", ""))


def save_dn(dn: DNMatrix, path) -> None:
    doc = {
        "format": "anisoeit-dn",
        "version": 1,
        "electrodes": _layout_to_dict(dn.layout),
        "patterns": _patterns_to_dict(dn.patterns),
        "dn_row_major": dn.dn.tolist(),
        "nd_row_major": dn.nd.tolist(),
        "asymmetry": dn.asymmetry,
        "config_sha256": dn.config_sha256,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_dn(path) -> DNMatrix:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != "anisoeit-dn":
        raise ValueError(f"{path}: not a DN matrix file")
    layout = _layout_from_dict(doc["electrodes"])
    pat = CurrentPatternSet(L=int(doc["patterns"]["L"]),
                            amplitude=float(doc["patterns"]["amplitude"]),
                            T=np.array(doc["patterns"]["T"]))
    return DNMatrix(dn=np.array(doc["dn_row_major"]),
                    nd=np.array(doc["nd_row_major"]),
                    asymmetry=float(doc["asymmetry"]),
                    patterns=pat, layout=layout,
                    config_sha256=doc.get("config_sha256", ""))
