"""Linearized Fourier reconstruction of the conductivity multiplier.

Probes the measured boundary map with pairs of exponentially growing
harmonic traces

    phi1 = exp(i pi z.y + pi b.y),   phi2 = exp(i pi z.y - pi b.y),

with b = rot90(z) so z.b = 0 and |b| = |z|, forms the data-side bilinear
pairing B(phi1, phi2), and assembles

    Fhat(z) = -1 / (2 pi^2 |z|^2) * B(phi1, phi2)

on a truncated frequency lattice |z| <= R.  The inverse transform of
Fhat approximates the scalar conductivity on the flattened domain; for
anisotropic data the traces are composed with the quasi-conformal map
and the boundary map is rescaled by 1/sqrt(det A0) so the linearization
is around conductivity one.  Composing the flattened-domain field with
the forward map recovers the multiplier in the original coordinates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .beltrami import QCMap, evaluate_map
from .forward import DNMatrix

BG_RING_RADIUS = 0.8    # |x| of the background calibration ring in Omega
BG_RING_SAMPLES = 64


@dataclass(frozen=True)
class CGOTracePair:
    """A pair of exponential harmonic traces for one frequency z != 0."""

    z: np.ndarray    # (2,)
    b: np.ndarray    # (2,) = (-z2, z1)

    def trace1(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.exp(1j * np.pi * (pts @ self.z) + np.pi * (pts @ self.b))

    def trace2(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.exp(1j * np.pi * (pts @ self.z) - np.pi * (pts @ self.b))


def make_cgo_pair(z) -> CGOTracePair:
    """Traces for frequency z, with the companion vector b = (-z2, z1).

    The rotation choice satisfies z.b = 0 and |b| = |z| exactly and is
    odd in z, which makes the assembled spectrum Hermitian.
    """
    z = np.asarray(z, dtype=float).reshape(2)
    if np.hypot(z[0], z[1]) == 0.0:
        raise ValueError("frequency z must be nonzero")
    return CGOTracePair(z=z, b=np.array([-z[1], z[0]]))


def _basis_and_weights(dn: DNMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Normalized pattern basis (L-1, L) and midpoint quadrature weights."""
    t_hat = dn.patterns.normalized.T
    L = dn.L
    w = np.full(L, 2.0 * np.pi * dn.layout.radius / L)
    return t_hat, w


def _project(t_hat: np.ndarray, weights: np.ndarray,
             values: np.ndarray) -> np.ndarray:
    """Arc-length-weighted projection of boundary samples onto the basis.

    Coefficients are <phi, t_m>_w / <t_m, t_m>_w, which reduces to the
    plain Euclidean projection for equispaced electrodes.
    """
    num = (t_hat * weights) @ values
    den = (t_hat * weights * t_hat).sum(axis=1)
    return num / den


def bilinear_form(dn: DNMatrix, phi1: np.ndarray, phi2: np.ndarray) -> complex:
    """Data-side pairing approximating the boundary integral of
    phi1 * (boundary map applied to phi2).

    Both traces are sampled at the electrode centers; each is expanded in
    the normalized trigonometric pattern basis and the coefficient
    vectors are contracted through the DN matrix.  On a homogeneous unit
    disk this reproduces pi * k for phi1 = phi2 = cos(k theta).
    """
    phi1 = np.asarray(phi1).reshape(-1)
    phi2 = np.asarray(phi2).reshape(-1)
    if phi1.shape != (dn.L,) or phi2.shape != (dn.L,):
        raise ValueError(
            f"trace samples must have length L={dn.L}; "
            f"got {phi1.shape} and {phi2.shape}")
    t_hat, w = _basis_and_weights(dn)
    c1 = _project(t_hat, w, phi1)
    c2 = _project(t_hat, w, phi2)
    return complex(c1 @ dn.dn @ c2)


@dataclass
class FhatGrid:
    """Samples of the linearized spectrum on a truncated frequency lattice."""

    R: float
    m: int                     # lattice points per axis over [-R, R]
    zs: np.ndarray             # (P, 2) lattice points with 0 < |z| <= R
    values: np.ndarray         # (P,) complex
    spacing: float
    det_background: float
    config_sha256: str = ""

    def hermitian_defect(self) -> float:
        """max |Fhat(-z) - conj(Fhat(z))| / max |Fhat|."""
        lookup = {(round(z[0], 12), round(z[1], 12)): v
                  for z, v in zip(self.zs, self.values)}
        worst = 0.0
        for z, v in zip(self.zs, self.values):
            mirror = lookup.get((round(-z[0], 12), round(-z[1], 12)))
            if mirror is not None:
                worst = max(worst, abs(mirror - np.conj(v)))
        return worst / max(np.abs(self.values).max(), 1e-300)


def fhat_grid(dn: DNMatrix, qcmap: Optional[QCMap], R: float, m: int = 33,
              det_background: float = 1.0) -> FhatGrid:
    """Assemble Fhat on the masked lattice 0 < |z| <= R.

    The traces are the flattened-domain exponentials composed with the
    quasi-conformal map (evaluated at the electrode centers on the
    original boundary); ``qcmap=None`` means the identity map (isotropic
    data).  The DN matrix is divided by sqrt(det_background) so the
    background conductivity after flattening is one.  The z = 0 mode is
    excluded; the missing mean is restored downstream by background
    calibration.
    """
    if R <= 0:
        raise ValueError(f"truncation radius must be positive, got {R}")
    if m < 3 or m % 2 == 0:
        raise ValueError(f"lattice size must be odd and >= 3, got {m}")
    centers = dn.electrode_centers()
    if qcmap is not None:
        if np.abs(centers).max() > qcmap.window:
            raise ValueError("map window does not cover the boundary circle")
        y = evaluate_map(qcmap, centers)
    else:
        y = centers

    axis = np.linspace(-R, R, m)
    Z1, Z2 = np.meshgrid(axis, axis, indexing="ij")
    zs = np.stack([Z1.ravel(), Z2.ravel()], axis=1)
    rho = np.hypot(zs[:, 0], zs[:, 1])
    keep = (rho > 0) & (rho <= R + 1e-12)
    zs = zs[keep]

    bs = np.stack([-zs[:, 1], zs[:, 0]], axis=1)
    expo_i = 1j * np.pi * (y @ zs.T)          # (L, P)
    expo_r = np.pi * (y @ bs.T)
    phi1 = np.exp(expo_i + expo_r)
    phi2 = np.exp(expo_i - expo_r)

    t_hat, w = _basis_and_weights(dn)
    den = (t_hat * w * t_hat).sum(axis=1)
    c1 = ((t_hat * w) @ phi1) / den[:, None]
    c2 = ((t_hat * w) @ phi2) / den[:, None]
    dn_scaled = dn.dn / np.sqrt(det_background)
    B = np.einsum("kp,kj,jp->p", c1, dn_scaled, c2)
    rho = np.hypot(zs[:, 0], zs[:, 1])
    values = -B / (2.0 * np.pi ** 2 * rho ** 2)
    return FhatGrid(R=float(R), m=int(m), zs=zs, values=values,
                    spacing=float(axis[1] - axis[0]),
                    det_background=float(det_background),
                    config_sha256=dn.config_sha256)


def inverse_fourier(fhat: FhatGrid, eval_points: np.ndarray
                    ) -> tuple[np.ndarray, float]:
    """Truncated inverse transform of the lattice samples.

    Returns the real part of  sum_z Fhat(z) exp(-2 pi i z.y) dz^2  at each
    point together with the relative imaginary residual that was discarded
    (small when the spectrum is Hermitian).
    """
    if len(fhat.zs) == 0:
        raise ValueError("empty frequency lattice")
    pts = np.atleast_2d(np.asarray(eval_points, dtype=float))
    phases = np.exp(-2j * np.pi * (fhat.zs @ pts.T))
    vals = (fhat.values @ phases) * fhat.spacing ** 2
    scale = max(np.abs(vals.real).max(), 1e-300)
    return vals.real, float(np.abs(vals.imag).max() / scale)


def reconstruct_scalar(atilde: Callable[[np.ndarray], np.ndarray],
                       qcmap: Optional[QCMap],
                       eval_points: np.ndarray) -> np.ndarray:
    """Pull a flattened-domain scalar back to original coordinates:
    a(x) = atilde(Phi(x)) for each evaluation point."""
    pts = np.atleast_2d(np.asarray(eval_points, dtype=float))
    y = evaluate_map(qcmap, pts) if qcmap is not None else pts
    return np.asarray(atilde(y))


def assemble_tensor(a: np.ndarray, A0: np.ndarray) -> np.ndarray:
    """Scalar samples times the constant background: (N, 2, 2) tensors."""
    a = np.asarray(a, dtype=float)
    A0 = np.asarray(A0, dtype=float)
    return a[..., None, None] * A0


def save_fhat(fhat: FhatGrid, json_path, bin_path) -> None:
    """JSON metadata + binary complex spectrum samples (row-major over the
    masked lattice, in the order of ``zs``)."""
    with open(bin_path, "wb") as f:
        f.write(np.ascontiguousarray(fhat.values, dtype=np.complex128).tobytes())
    doc = {
        "format": "anisoeit-fhat",
        "version": 1,
        "R": fhat.R,
        "m": fhat.m,
        "spacing": fhat.spacing,
        "det_background": fhat.det_background,
        "pattern_normalization": "euclidean",
        "count": int(len(fhat.zs)),
        "values_file": str(bin_path),
        "config_sha256": fhat.config_sha256,
    }
    with open(json_path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_fhat(json_path) -> FhatGrid:
    with open(json_path) as f:
        doc = json.load(f)
    if doc.get("format") != "anisoeit-fhat":
        raise ValueError(f"{json_path}: not a spectrum file")
    R, m = float(doc["R"]), int(doc["m"])
    axis = np.linspace(-R, R, m)
    Z1, Z2 = np.meshgrid(axis, axis, indexing="ij")
    zs = np.stack([Z1.ravel(), Z2.ravel()], axis=1)
    rho = np.hypot(zs[:, 0], zs[:, 1])
    zs = zs[(rho > 0) & (rho <= R + 1e-12)]
    with open(doc["values_file"], "rb") as f:
        values = np.frombuffer(f.read(), dtype=np.complex128).copy()
    if len(values) != len(zs) or len(values) != doc["count"]:
        raise ValueError(f"{json_path}: lattice size mismatch")
    return FhatGrid(R=R, m=m, zs=zs, values=values,
                    spacing=float(doc["spacing"]),
                    det_background=float(doc["det_background"]),
                    config_sha256=doc.get("config_sha256", ""))


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class ReconstructedField:
    """Scalar multiplier on a Cartesian grid over the original domain."""

    grid_axis: np.ndarray          # (g,) coordinates of both axes
    a: np.ndarray                  # (g, g), NaN outside the domain
    mask: np.ndarray               # (g, g) bool, True inside Omega
    cross_section_x: np.ndarray    # (nx,) x-axis sample positions
    cross_section: np.ndarray      # (nx,) reconstructed values on the x-axis
    background_offset: float       # additive mean calibration applied
    imag_residual: float           # worst relative imaginary residual seen
    R: float
    lattice: int
    A0: np.ndarray
    config_sha256: str = ""
    fhat: Optional[FhatGrid] = None   # spectrum the field was built from

    def tensor(self) -> np.ndarray:
        return assemble_tensor(self.a, self.A0)


def reconstruct_field(dn: DNMatrix, qcmap: Optional[QCMap], A0: np.ndarray,
                      R: float, lattice: int = 33, grid: int = 101,
                      config_sha256: str = "") -> ReconstructedField:
    """End-to-end reconstruction: Fhat, truncated inverse, background
    calibration, and pullback onto a grid over [-1, 1]^2 plus the x-axis
    cross-section.

    The additive background calibration pins the circle |x| = 0.8
    (mapped through Phi) to level one, restoring the mean lost with the
    excluded z = 0 lattice point.  The level estimate is the median of
    the ring samples: at large truncation radii the growing traces leave
    heavy-tailed directional artifacts that would bias the mean.
    """
    A0 = np.asarray(A0, dtype=float)
    det = float(np.linalg.det(A0))
    fh = fhat_grid(dn, qcmap, R=R, m=lattice, det_background=det)

    ring_t = np.linspace(0.0, 2.0 * np.pi, BG_RING_SAMPLES, endpoint=False)
    ring = BG_RING_RADIUS * np.stack([np.cos(ring_t), np.sin(ring_t)], axis=1)
    ring_vals = reconstruct_scalar(
        lambda y: inverse_fourier(fh, y)[0], qcmap, ring)
    offset = 1.0 - float(np.median(ring_vals))

    imag_worst = 0.0

    def atilde(y):
        nonlocal imag_worst
        vals, im = inverse_fourier(fh, y)
        imag_worst = max(imag_worst, im)
        return vals + offset

    axis = np.linspace(-1.0, 1.0, grid)
    GX, GY = np.meshgrid(axis, axis, indexing="ij")
    pts = np.stack([GX.ravel(), GY.ravel()], axis=1)
    inside = np.hypot(pts[:, 0], pts[:, 1]) <= 1.0
    a_flat = np.full(len(pts), np.nan)
    a_flat[inside] = reconstruct_scalar(atilde, qcmap, pts[inside])
    a_grid = a_flat.reshape(grid, grid)

    xs = axis.copy()
    cross = np.full(grid, np.nan)
    on_axis = np.abs(xs) <= 1.0
    cross[on_axis] = reconstruct_scalar(
        atilde, qcmap, np.stack([xs[on_axis], np.zeros(on_axis.sum())], axis=1))

    return ReconstructedField(
        grid_axis=axis, a=a_grid, mask=inside.reshape(grid, grid),
        cross_section_x=xs, cross_section=cross,
        background_offset=offset, imag_residual=imag_worst,
        R=float(R), lattice=int(lattice), A0=A0,
        config_sha256=config_sha256, fhat=fh)


def save_field(fieldobj: ReconstructedField, json_path, bin_path) -> None:
    """JSON metadata + row-major float64 grid (NaN outside the domain)."""
    with open(bin_path, "wb") as f:
        f.write(np.ascontiguousarray(fieldobj.a, dtype=np.float64).tobytes())
    doc = {
        "format": "anisoeit-recon",
        "version": 1,
        "grid": len(fieldobj.grid_axis),
        "grid_axis_minmax": [float(fieldobj.grid_axis[0]), float(fieldobj.grid_axis[-1])],
        "R": fieldobj.R,
        "lattice": fieldobj.lattice,
        "A0": fieldobj.A0.tolist(),
        "background_offset": fieldobj.background_offset,
        "imag_residual": fieldobj.imag_residual,
        "cross_section_x": fieldobj.cross_section_x.tolist(),
        "cross_section": fieldobj.cross_section.tolist(),
        "grid_file": str(bin_path),
        "config_sha256": fieldobj.config_sha256,
    }
    with open(json_path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_field(json_path) -> ReconstructedField:
    with open(json_path) as f:
        doc = json.load(f)
    if doc.get("format") != "anisoeit-recon":
        raise ValueError(f"{json_path}: not a reconstruction file")
    g = int(doc["grid"])
    lo, hi = doc["grid_axis_minmax"]
    axis = np.linspace(lo, hi, g)
    with open(doc["grid_file"], "rb") as f:
        a = np.frombuffer(f.read(), dtype=np.float64).reshape(g, g).copy()
    GX, GY = np.meshgrid(axis, axis, indexing="ij")
    mask = np.hypot(GX, GY) <= 1.0
    return ReconstructedField(
        grid_axis=axis, a=a, mask=mask,
        cross_section_x=np.array(doc["cross_section_x"]),
        cross_section=np.array(doc["cross_section"]),
        background_offset=float(doc["background_offset"]),
        imag_residual=float(doc["imag_residual"]),
        R=float(doc["R"]), lattice=int(doc["lattice"]),
        A0=np.array(doc["A0"]),
        config_sha256=doc.get("config_sha256", ""))
