"""
Spherical coordinates, gnomonic (tangent-plane) projection, equirectangular
pixel mapping and tangent-patch layouts.

Conventions used throughout the package:

- longitude ``theta`` in [-pi, pi), latitude ``phi`` in [-pi/2, pi/2]
- ERP images are north-up: ``u = (theta / 2pi + 0.5) * w``,
  ``v = (0.5 - phi / pi) * h``; pixel (i, j) has its center at (j + 0.5, i + 0.5)
- 3D directions: ``x = cos(phi) cos(theta)``, ``y = cos(phi) sin(theta)``,
  ``z = sin(phi)``
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import HemisphereViolation, OutOfBounds, UnsupportedLayout

__all__ = [
    "HEMISPHERE_EPS",
    "SphereDir",
    "TangentCoord",
    "ErpGeometry",
    "PatchLayout",
    "BUILTIN_LAYOUTS",
    "wrap_longitude",
    "gnomonic_project",
    "gnomonic_forward",
    "gnomonic_inverse",
    "sphere_to_erp",
    "erp_to_sphere",
    "pixel_angles",
    "direction_vectors",
    "angular_distance",
    "make_layout",
    "layout_from_table",
]

# cos(c) threshold below which a point is treated as behind the tangent plane
HEMISPHERE_EPS = 1e-9

TWO_PI = 2.0 * math.pi


def wrap_longitude(theta):
    """Wrap longitude(s) into [-pi, pi)."""
    wrapped = np.mod(np.asarray(theta, dtype=np.float64) + math.pi, TWO_PI) - math.pi
    # np.mod can return exactly 2pi for tiny negative inputs
    wrapped = np.where(wrapped >= math.pi, wrapped - TWO_PI, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


@dataclass(frozen=True)
class SphereDir:
    """A direction on the unit sphere, in radians."""

    theta: float
    phi: float

    @classmethod
    def from_degrees(cls, theta_deg: float, phi_deg: float) -> "SphereDir":
        return cls(math.radians(theta_deg), math.radians(phi_deg)).normalized()

    def normalized(self) -> "SphereDir":
        """Reflect latitude over the poles, then wrap longitude into [-pi, pi)."""
        theta, phi = float(self.theta), float(self.phi)
        # bring phi into [-pi, pi) first so a single reflection suffices
        phi = math.remainder(phi, TWO_PI)
        if phi > math.pi / 2:
            phi = math.pi - phi
            theta += math.pi
        elif phi < -math.pi / 2:
            phi = -math.pi - phi
            theta += math.pi
        phi = min(max(phi, -math.pi / 2), math.pi / 2)
        return SphereDir(wrap_longitude(theta), phi)

    def to_vector(self) -> np.ndarray:
        return direction_vectors(self.theta, self.phi)

    def degrees(self) -> tuple[float, float]:
        return math.degrees(self.theta), math.degrees(self.phi)


class TangentCoord(NamedTuple):
    """Dimensionless coordinates on a tangent plane (unit-sphere scale)."""

    u: float
    v: float


@dataclass(frozen=True)
class ErpGeometry:
    height: int
    width: int

    def __post_init__(self):
        if self.width < 2 or self.width != 2 * self.height:
            raise ValueError(
                f"ERP geometry must satisfy width = 2 * height >= 2, got {self.height}x{self.width}"
            )

    @classmethod
    def from_shape(cls, shape: Sequence[int]) -> "ErpGeometry":
        return cls(int(shape[0]), int(shape[1]))

    @classmethod
    def from_height(cls, height: int) -> "ErpGeometry":
        return cls(int(height), 2 * int(height))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def doubled(self) -> "ErpGeometry":
        return ErpGeometry(2 * self.height, 2 * self.width)

    def halved(self) -> "ErpGeometry":
        if self.height % 2:
            raise ValueError(f"cannot halve ERP height {self.height}")
        return ErpGeometry(self.height // 2, self.width // 2)


@dataclass(frozen=True)
class PatchLayout:
    """Tangent-patch centers plus the shared square field of view and resolution."""

    centers: tuple[SphereDir, ...]
    fov: float
    patch_size: int

    def __post_init__(self):
        centers = tuple(c.normalized() for c in self.centers)
        object.__setattr__(self, "centers", centers)
        if not centers:
            raise ValueError("layout needs at least one patch center")
        if not 0.0 < self.fov < math.pi:
            raise ValueError(f"fov must lie in (0, pi), got {self.fov}")
        if self.patch_size < 2:
            raise ValueError(f"patch_size must be >= 2, got {self.patch_size}")
        vecs = self.center_vectors()
        gram = vecs @ vecs.T
        np.fill_diagonal(gram, -np.inf)
        if np.any(gram > 1.0 - 1e-12):
            raise ValueError("layout centers must be pairwise distinct")

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def n(self) -> int:
        return len(self.centers)

    @property
    def half_extent(self) -> float:
        """Tangent-plane half width of a patch, tan(fov / 2)."""
        return math.tan(self.fov / 2.0)

    def center_angles(self) -> np.ndarray:
        """(N, 2) array of (theta, phi)."""
        return np.array([[c.theta, c.phi] for c in self.centers], dtype=np.float64)

    def center_vectors(self) -> np.ndarray:
        ang = self.center_angles()
        return direction_vectors(ang[:, 0], ang[:, 1])

    def to_manifest(self) -> dict:
        return {
            "fov_deg": math.degrees(self.fov),
            "patch_size": self.patch_size,
            "centers_deg": [list(c.degrees()) for c in self.centers],
        }

    @classmethod
    def from_manifest(cls, manifest: dict) -> "PatchLayout":
        centers = tuple(SphereDir.from_degrees(t, p) for t, p in manifest["centers_deg"])
        return cls(centers, math.radians(manifest["fov_deg"]), int(manifest["patch_size"]))


def _center_angles(center):
    """Accept a SphereDir or a (theta_c, phi_c) pair of broadcastable arrays."""
    if isinstance(center, SphereDir):
        return center.theta, center.phi
    theta_c, phi_c = center
    return np.asarray(theta_c, dtype=np.float64), np.asarray(phi_c, dtype=np.float64)


def gnomonic_project(theta, phi, center):
    """Tangent-plane coordinates and cos(c) for arbitrary directions.

    ``center`` is a SphereDir or a (theta_c, phi_c) pair of arrays broadcasting
    against ``theta``/``phi``. No hemisphere check is done; callers mask on
    ``cos_c``. Returns ``(u, v, cos_c)``.
    """
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    theta_c, phi_c = _center_angles(center)
    dtheta = theta - theta_c
    sin_pc, cos_pc = np.sin(phi_c), np.cos(phi_c)
    sin_p, cos_p = np.sin(phi), np.cos(phi)
    cos_dt = np.cos(dtheta)
    cos_c = sin_pc * sin_p + cos_pc * cos_p * cos_dt
    with np.errstate(divide="ignore", invalid="ignore"):
        u = cos_p * np.sin(dtheta) / cos_c
        v = (cos_pc * sin_p - sin_pc * cos_p * cos_dt) / cos_c
    return u, v, cos_c


def gnomonic_forward(theta, phi, center):
    """Project direction(s) onto the plane tangent at ``center``.

    Raises HemisphereViolation if any direction has cos(c) <= 1e-9.
    """
    u, v, cos_c = gnomonic_project(theta, phi, center)
    if np.any(~(cos_c > HEMISPHERE_EPS)):
        raise HemisphereViolation(
            f"direction not in the hemisphere facing the tangent plane (min cos(c) = {np.min(cos_c):.3g})"
        )
    if np.ndim(u) == 0:
        return TangentCoord(float(u), float(v))
    return u, v


def gnomonic_inverse(u, v, center):
    """Map tangent-plane coordinates back to (theta, phi).

    Uses sigma = atan(gamma) substituted in closed form
    (sin(sigma)/gamma = cos(sigma) = 1/sqrt(1 + gamma^2)), so gamma = 0 needs
    no special case, and atan2 for both angles so the result is quadrant-correct
    and stays accurate near the poles.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    theta_c, phi_c = _center_angles(center)
    sin_pc, cos_pc = np.sin(phi_c), np.cos(phi_c)
    # components in a frame rotated so the center sits at longitude 0; the
    # common factor 1/sqrt(1 + u^2 + v^2) cancels inside atan2
    x = cos_pc - v * sin_pc
    y = u
    z = sin_pc + v * cos_pc
    phi = np.arctan2(z, np.hypot(x, y))
    theta = wrap_longitude(theta_c + np.arctan2(y, x))
    if np.ndim(phi) == 0:
        return SphereDir(float(theta), float(phi))
    return theta, phi


def sphere_to_erp(theta, phi, geom: ErpGeometry):
    """Continuous ERP pixel coordinates (u_e, v_e) of normalized direction(s)."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    u = (theta / TWO_PI + 0.5) * geom.width
    u = np.where(u >= geom.width, u - geom.width, u)
    v = (0.5 - phi / math.pi) * geom.height
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


def erp_to_sphere(u, v, geom: ErpGeometry):
    """Inverse of :func:`sphere_to_erp`; raises OutOfBounds outside [0,w) x [0,h]."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if np.any((u < 0) | (u >= geom.width) | (v < 0) | (v > geom.height)) or not (
        np.all(np.isfinite(u)) and np.all(np.isfinite(v))
    ):
        raise OutOfBounds(f"pixel coordinate outside [0,{geom.width}) x [0,{geom.height}]")
    theta = (u / geom.width - 0.5) * TWO_PI
    phi = (0.5 - v / geom.height) * math.pi
    if theta.ndim == 0:
        return SphereDir(float(theta), float(phi))
    return theta, phi


def pixel_angles(geom: ErpGeometry):
    """(theta, phi) at every pixel center, each of shape (h, w)."""
    j = np.arange(geom.width, dtype=np.float64) + 0.5
    i = np.arange(geom.height, dtype=np.float64) + 0.5
    theta = (j / geom.width - 0.5) * TWO_PI
    phi = (0.5 - i / geom.height) * math.pi
    return np.broadcast_to(theta, geom.shape).copy(), np.broadcast_to(phi[:, None], geom.shape).copy()


def direction_vectors(theta, phi) -> np.ndarray:
    """Unit 3-vectors with the x-forward, z-up convention; shape (..., 3)."""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    cp = np.cos(phi)
    return np.stack([cp * np.cos(theta), cp * np.sin(theta), np.sin(phi)], axis=-1)


def angular_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Great-circle angle between unit vectors, stable for tiny and near-pi angles."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(cross, dot)


BUILTIN_LAYOUTS: dict[int, tuple[tuple[float, ...], tuple[int, ...]]] = {
    18: ((-67.5, -22.5, 22.5, 67.5), (3, 6, 6, 3)),
    26: ((-72.2, -36.1, 0.0, 36.1, 72.2), (3, 6, 8, 6, 3)),
}


def layout_from_table(
    latitudes_deg: Sequence[float], counts: Sequence[int], fov: float, patch_size: int = 128
) -> PatchLayout:
    """Rows of evenly spaced centers, each row starting at longitude -pi."""
    if len(latitudes_deg) != len(counts) or not counts:
        raise UnsupportedLayout("latitudes and counts must be non-empty and of equal length")
    centers = []
    for lat, count in zip(latitudes_deg, counts):
        if count < 1:
            raise UnsupportedLayout(f"row at {lat} deg has count {count}")
        if abs(lat) > 90:
            raise UnsupportedLayout(f"latitude {lat} deg outside [-90, 90]")
        for k in range(count):
            centers.append(SphereDir(-math.pi + TWO_PI * k / count, math.radians(lat)))
    return PatchLayout(tuple(centers), fov, patch_size)


def make_layout(n: int, fov: float = math.radians(80.0), patch_size: int = 128) -> PatchLayout:
    """Built-in layouts: N=18 (rows 3/6/6/3) and N=26 (rows 3/6/8/6/3)."""
    if n not in BUILTIN_LAYOUTS:
        raise UnsupportedLayout(
            f"no built-in layout for N={n}; supply latitudes/counts via layout_from_table"
        )
    lats, counts = BUILTIN_LAYOUTS[n]
    return layout_from_table(lats, counts, fov, patch_size)
