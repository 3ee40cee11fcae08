"""Test conductivities: radial contrast profiles and background tensors.

The stock phantoms are discontinuous radially symmetric scalars times a
constant diagonal anisotropy tensor.  They intentionally violate the C^1
smoothness the theory assumes; the solver samples conductivity once per
element so only element classification sees the jump.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict

import numpy as np

from .mesh import ConductivityTensorField, tensor_from_factored, _check_spd

INCLUSION_RADIUS = 0.5


def sigma_profile(M: float) -> Callable[[np.ndarray], np.ndarray]:
    """Radial two-level scalar: M inside |x| < 0.5, 1 for |x| >= 0.5.

    The value on the circle |x| = 0.5 itself follows the half-open
    convention (background value 1).
    """
    if M <= 0:
        raise ValueError(f"contrast must be positive, got M={M}")
    M = float(M)

    def sigma(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        r = np.hypot(pts[:, 0], pts[:, 1])
        return np.where(r < INCLUSION_RADIUS, M, 1.0)

    return sigma


def a0_catalog() -> Dict[str, np.ndarray]:
    """The four stock background tensors, keyed by phantom name."""
    return {
        "A1": np.diag([1.0, 1.3]),
        "A2": np.diag([1.3, 1.0]),
        "A3": np.diag([1.0, 4.0]),
        "A4": np.diag([4.0, 1.0]),
    }


_CONTRASTS = {"A1": 1.3, "A2": 1.3, "A3": 4.0, "A4": 4.0}


@dataclass(frozen=True)
class PhantomSpec:
    """A named phantom: scalar contrast profile times a constant tensor."""

    name: str
    M: float
    A0: np.ndarray
    tensor: ConductivityTensorField

    @property
    def scalar(self) -> Callable[[np.ndarray], np.ndarray]:
        return self.tensor.scalar

    def true_scalar(self, points: np.ndarray) -> np.ndarray:
        """Ground-truth multiplier a(x) on arbitrary points."""
        return self.scalar(points)


def make_phantom(M: float, A0: np.ndarray, name: str = "custom") -> PhantomSpec:
    A0 = _check_spd(A0)
    sig = sigma_profile(M)
    tensor = tensor_from_factored(sig, A0, a_min=min(1.0, float(M)))
    return PhantomSpec(name=name, M=float(M), A0=A0, tensor=tensor)


def phantom_by_name(name: str) -> PhantomSpec:
    """Stock phantoms 'A1'..'A4' (contrast 1.3, 1.3, 4, 4)."""
    catalog = a0_catalog()
    if name not in catalog:
        raise KeyError(f"unknown phantom {name!r}; expected one of {sorted(catalog)}")
    return make_phantom(_CONTRASTS[name], catalog[name], name=name)


def analytic_disk_dn(sigma: float, k: int) -> float:
    """Continuum boundary-map eigenvalue sigma*|k| of the homogeneous unit disk.

    Voltage cos(k theta) on the boundary of a disk with constant scalar
    conductivity sigma produces current density sigma*k*cos(k theta); this
    is the oracle the electrode models are checked against.
    """
    if k == 0:
        raise ValueError("k = 0 (constant mode) is not in the range of the map")
    if sigma <= 0:
        raise ValueError(f"conductivity must be positive, got {sigma}")
    return float(sigma) * abs(int(k))
