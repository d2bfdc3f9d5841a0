"""Rectangle extent geometry.

A target extent is a symmetric positive-definite 2x2 matrix whose
eigenvalues are the half-length and half-width of a rectangle (in meters)
and whose eigenvectors give its orientation.  Rectangles are represented by
their center and four corner vertices.  Edge n runs from vertex n to vertex
(n + 1) mod 4, which pins a fixed labelling: edge 0 is the face offset +e1
along v1, edge 1 the face offset -e2 along v2, edge 2 the -e1 face and
edge 3 the +e2 face.  Edges 0/2 are therefore perpendicular to v1 and
separated by 2*e1, edges 1/3 perpendicular to v2 and separated by 2*e2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegeneratePoseError, InvalidExtentError, InvalidInputError

_SIGN_EPS = 1e-12


@dataclass(frozen=True)
class ExtentDecomposition:
    """Eigen-structure of an extent matrix.

    e1 >= e2 > 0 are the half extents; v1, v2 are unit eigenvectors with
    v2 = rot90(v1).  The sign of v1 is fixed so that its first component is
    non-negative (second component non-negative when the first is ~zero),
    which makes the decomposition deterministic.
    """

    e1: float
    e2: float
    v1: np.ndarray
    v2: np.ndarray

    def matrix(self) -> np.ndarray:
        """Recompose the extent matrix e1*v1@v1' + e2*v2@v2'."""
        return self.e1 * np.outer(self.v1, self.v1) + self.e2 * np.outer(self.v2, self.v2)


@dataclass(frozen=True)
class Rect:
    """Oriented rectangle: center and the four corners, one per row."""

    center: np.ndarray
    vertices: np.ndarray

    def edge_endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        """Start and end vertex arrays (4,2) of the four edges."""
        a = self.vertices
        b = np.roll(self.vertices, -1, axis=0)
        return a, b

    def edge_midpoints(self) -> np.ndarray:
        a, b = self.edge_endpoints()
        return 0.5 * (a + b)


def check_extent(E: np.ndarray, tol: float = 1e-12) -> None:
    """Raise InvalidExtentError unless E is a finite SPD 2x2 matrix."""
    E = np.asarray(E, dtype=float)
    if E.shape != (2, 2):
        raise InvalidExtentError(f"extent must be 2x2, got shape {E.shape}")
    if not np.all(np.isfinite(E)):
        raise InvalidExtentError("extent contains non-finite entries")
    scale = max(abs(E[0, 0]), abs(E[1, 1]), 1e-300)
    if abs(E[0, 1] - E[1, 0]) > tol * scale:
        raise InvalidExtentError("extent is not symmetric")
    # SPD for a symmetric 2x2: positive trace and positive determinant.
    det = E[0, 0] * E[1, 1] - E[0, 1] * E[1, 0]
    if E[0, 0] <= 0.0 or E[1, 1] <= 0.0 or det <= 0.0:
        raise InvalidExtentError("extent is not positive definite")


def extent_decompose(E: np.ndarray) -> ExtentDecomposition:
    """Deterministic eigendecomposition of an SPD extent matrix.

    Returns half extents sorted e1 >= e2 and the matching unit eigenvectors
    under the fixed sign convention described in the module docstring.
    """
    E = np.asarray(E, dtype=float)
    check_extent(E)
    e1, e2, v1, v2 = decompose_batch(E[None, :, :])
    return ExtentDecomposition(float(e1[0]), float(e2[0]), v1[0].copy(), v2[0].copy())


def rect_from_state(p0: np.ndarray, dec: ExtentDecomposition) -> Rect:
    """Build the rectangle for a center and extent decomposition.

    Corners 0 and 1 sit on the +v1 face; corners 2 and 3 are their point
    reflections through the center, so vertices[2] = 2*p0 - vertices[0] and
    vertices[3] = 2*p0 - vertices[1].
    """
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (2,):
        raise InvalidInputError(f"center must be a 2-vector, got shape {p0.shape}")
    p1 = p0 + dec.e1 * dec.v1 + dec.e2 * dec.v2
    p2 = p0 + dec.e1 * dec.v1 - dec.e2 * dec.v2
    p3 = 2.0 * p0 - p1
    p4 = 2.0 * p0 - p2
    return Rect(center=p0, vertices=np.stack([p1, p2, p3, p4]))


def visible_edges(sensor: np.ndarray, rect: Rect) -> np.ndarray:
    """Boolean flags marking the edges whose outward half-plane strictly
    contains the sensor.

    An exterior sensor sees one or two edges.  A sensor inside or on the
    boundary of the rectangle raises DegeneratePoseError.
    """
    sensor = np.asarray(sensor, dtype=float)
    mids = rect.edge_midpoints()
    outward = mids - rect.center
    side = np.einsum("ij,ij->i", sensor - mids, outward)
    flags = side > 0.0
    if not flags.any():
        raise DegeneratePoseError("sensor lies inside or on the rectangle")
    return flags


def edge_subtended_angle(sensor: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    """Angle in [0, pi] between the rays sensor->a and sensor->b."""
    sensor = np.asarray(sensor, dtype=float)
    ra = np.asarray(a, dtype=float) - sensor
    rb = np.asarray(b, dtype=float) - sensor
    if np.hypot(*ra) < 1e-12 or np.hypot(*rb) < 1e-12:
        raise DegeneratePoseError("sensor coincides with an edge endpoint")
    cross = ra[0] * rb[1] - ra[1] * rb[0]
    dot = ra @ rb
    return float(np.arctan2(abs(cross), dot))


def dist_to_edge_lines(z: np.ndarray, rect: Rect) -> np.ndarray:
    """Perpendicular distances from z to the four edge supporting lines."""
    z = np.asarray(z, dtype=float)
    mids = rect.edge_midpoints()
    outward = mids - rect.center
    norms = np.hypot(outward[:, 0], outward[:, 1])
    return np.abs(np.einsum("ij,ij->i", z - mids, outward)) / norms


# ---------------------------------------------------------------------------
# Vectorized forms used by the particle engine.  Axis 0 indexes particles.
# ---------------------------------------------------------------------------

def decompose_batch(E: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form symmetric 2x2 eigendecomposition for a stack of extents.

    Returns (e1, e2, v1, v2) with shapes (L,), (L,), (L,2), (L,2).  Uses the
    numerically stable eigenvector candidate (the one with the larger norm)
    and falls back to the identity frame for near-isotropic matrices.
    """
    a = E[..., 0, 0]
    b = 0.5 * (E[..., 0, 1] + E[..., 1, 0])
    c = E[..., 1, 1]
    half_tr = 0.5 * (a + c)
    half_diff = 0.5 * (a - c)
    delta = np.hypot(half_diff, b)
    e1 = half_tr + delta
    e2 = half_tr - delta

    pos = half_diff >= 0.0
    vx = np.where(pos, delta + half_diff, b)
    vy = np.where(pos, b, delta - half_diff)
    norm = np.hypot(vx, vy)
    iso = norm <= 1e-14 * np.maximum(half_tr, 1e-300)
    safe = np.where(iso, 1.0, norm)
    vx = np.where(iso, 1.0, vx / safe)
    vy = np.where(iso, 0.0, vy / safe)

    flip = (vx < -_SIGN_EPS) | ((np.abs(vx) <= _SIGN_EPS) & (vy < 0.0))
    sign = np.where(flip, -1.0, 1.0)
    vx = vx * sign
    vy = vy * sign

    v1 = np.stack([vx, vy], axis=-1)
    v2 = np.stack([-vy, vx], axis=-1)
    return e1, e2, v1, v2


def vertices_batch(p0: np.ndarray, e1: np.ndarray, e2: np.ndarray,
                   v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Corner stacks (L,4,2) following the Rect corner convention."""
    long_arm = e1[:, None] * v1
    short_arm = e2[:, None] * v2
    p1 = p0 + long_arm + short_arm
    p2 = p0 + long_arm - short_arm
    return np.stack([p1, p2, 2.0 * p0 - p1, 2.0 * p0 - p2], axis=1)


def visibility_batch(sensor: np.ndarray, p0: np.ndarray, e1: np.ndarray, e2: np.ndarray,
                     v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Per-particle edge visibility flags (L,4).

    Unlike the scalar form this never raises: a particle whose rectangle
    contains the sensor simply gets all-False flags (the caller applies a
    uniform fallback when forming prior probabilities).
    """
    rel = sensor - p0
    t1 = np.einsum("ij,ij->i", rel, v1)
    t2 = np.einsum("ij,ij->i", rel, v2)
    return np.stack([t1 > e1, t2 < -e2, t1 < -e1, t2 > e2], axis=1)


def subtended_angles_batch(sensor: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """Angles (L,4) each edge subtends at the sensor."""
    rays = vertices - sensor
    nxt = np.roll(rays, -1, axis=1)
    cross = rays[..., 0] * nxt[..., 1] - rays[..., 1] * nxt[..., 0]
    dot = np.einsum("lij,lij->li", rays, nxt)
    return np.arctan2(np.abs(cross), dot)
