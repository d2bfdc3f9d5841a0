"""Lidar measurement model for rectangular targets.

A single detection is explained by one of five regions of the rectangle:
one of the four edges (a uniform scatter point along the edge segment, blurred
by sensor noise — the classic "stick" model) or the interior (a uniform
scatter point over the whole rectangle).  Because the sensor noise lives in
polar coordinates, each region carries its own Cartesian noise covariance
obtained by an unscented transform evaluated at the region's reference point
(edge midpoint, or rectangle center for the interior).

Region indices follow the edge labelling of :mod:`ettrack.geometry`:
entries 0..3 are the edges, entry 4 is the interior.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import (
    DegenerateEdgeError,
    DegeneratePoseError,
    InvalidParameterError,
)
from .geometry import (
    Rect,
    ExtentDecomposition,
    decompose_batch,
    extent_decompose,
    rect_from_state,
    subtended_angles_batch,
    vertices_batch,
    visibility_batch,
)

# Unscented transform spread parameters (standard defaults, fixed for
# reproducibility; recorded in run configs via the code version).
UT_SPREAD = 1e-3
UT_SECONDARY = 2.0
UT_TERTIARY = 0.0

_MIN_EDGE_LEN = 1e-9


@dataclass(frozen=True)
class SensorModel:
    """2D scanning range sensor with independent polar noise.

    sigma_theta and sigma_r are the angular / radial noise standard
    deviations; angular_resolution is the beam spacing (rad).
    """

    position: np.ndarray
    sigma_theta: float
    sigma_r: float
    angular_resolution: float

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        if self.position.shape != (2,):
            raise InvalidParameterError("sensor position must be a 2-vector")
        if self.sigma_theta <= 0 or self.sigma_r <= 0 or self.angular_resolution <= 0:
            raise InvalidParameterError("sensor noise/resolution must be positive")


@dataclass(frozen=True)
class RegionPriors:
    """Prior association mass for visible edges, invisible edges, interior."""

    p_vis: float
    p_inv: float
    p_int: float

    def __post_init__(self):
        vals = (self.p_vis, self.p_inv, self.p_int)
        if any(v < 0.0 or v > 1.0 for v in vals):
            raise InvalidParameterError("region priors must lie in [0, 1]")
        if abs(sum(vals) - 1.0) > 1e-12:
            raise InvalidParameterError("region priors must sum to 1")


def _ut_weights(n: int = 2) -> tuple[float, np.ndarray, np.ndarray]:
    lam = UT_SPREAD**2 * (n + UT_TERTIARY) - n
    wm = np.full(2 * n + 1, 1.0 / (2.0 * (n + lam)))
    wc = wm.copy()
    wm[0] = lam / (n + lam)
    wc[0] = wm[0] + 1.0 - UT_SPREAD**2 + UT_SECONDARY
    return lam, wm, wc


def ut_cartesian_cov_batch(points: np.ndarray, sensor: SensorModel) -> np.ndarray:
    """Unscented polar->Cartesian noise covariance at each point, (L,2,2).

    The polar mean is the point's own bearing/range from the sensor; the
    polar covariance is diag(sigma_theta^2, sigma_r^2).
    """
    points = np.asarray(points, dtype=float)
    rel = points - sensor.position
    theta = np.arctan2(rel[..., 1], rel[..., 0])
    r = np.hypot(rel[..., 0], rel[..., 1])

    lam, _, wc = _ut_weights()
    scale = np.sqrt(2.0 + lam)
    dth = scale * sensor.sigma_theta
    dr = scale * sensor.sigma_r

    # sigma points in polar space: center, +/- along each axis
    th = np.stack([theta, theta + dth, theta, theta - dth, theta], axis=-1)
    rr = np.stack([r, r, r + dr, r, r - dr], axis=-1)
    pts = np.stack([rr * np.cos(th), rr * np.sin(th)], axis=-1)  # (L,5,2)

    # wm sums to 1 and all non-center sigma points are symmetric about the
    # mean, so the transformed mean equals the weighted average directly.
    _, wm, _ = _ut_weights()
    mean = np.einsum("s,...si->...i", wm, pts)
    dev = pts - mean[..., None, :]
    return np.einsum("s,...si,...sj->...ij", wc, dev, dev)


def ut_cartesian_cov(point: np.ndarray, sensor: SensorModel) -> np.ndarray:
    """2x2 Cartesian noise covariance at a single point.

    Raises DegeneratePoseError when the point sits on the sensor origin,
    where bearing is undefined.
    """
    point = np.asarray(point, dtype=float)
    if np.hypot(*(point - sensor.position)) < 1e-12:
        raise DegeneratePoseError("evaluation point coincides with the sensor")
    return ut_cartesian_cov_batch(point[None, :], sensor)[0]


def _check_spd2(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    if R.shape != (2, 2) or not np.all(np.isfinite(R)):
        raise InvalidParameterError("noise covariance must be a finite 2x2 matrix")
    if abs(R[0, 1] - R[1, 0]) > 1e-9 * (1.0 + abs(R).max()):
        raise InvalidParameterError("noise covariance must be symmetric")
    if R[0, 0] <= 0 or np.linalg.det(R) <= 0:
        raise InvalidParameterError("noise covariance must be positive definite")
    return R


def stick_likelihood(z: np.ndarray, a: np.ndarray, b: np.ndarray, R: np.ndarray) -> float:
    """Density at z of a point uniform on segment [a, b] plus N(0, R) noise.

    Computed in closed form: the integral over the segment parameter is a
    Gaussian in that parameter, leaving a normal-CDF difference times a
    Gaussian prefactor.
    """
    z = np.asarray(z, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    R = _check_spd2(R)
    d = b - a
    if np.hypot(*d) < _MIN_EDGE_LEN:
        raise DegenerateEdgeError("segment endpoints are (nearly) coincident")
    Rinv = np.linalg.inv(R)
    u = z - a
    A = d @ Rinv @ d
    B = d @ Rinv @ u
    resid = u - (B / A) * d
    expo = resid @ Rinv @ resid
    sqrt_a = np.sqrt(A)
    pref = np.exp(-0.5 * expo) / np.sqrt(2.0 * np.pi * A * np.linalg.det(R))
    return float(max(pref * (ndtr((A - B) / sqrt_a) - ndtr(-B / sqrt_a)), 0.0))


def _q(x: np.ndarray) -> np.ndarray:
    """Gaussian tail probability Q(x) = P(N(0,1) > x)."""
    return ndtr(-np.asarray(x, dtype=float))


def _axis_factor(t: np.ndarray, e: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """One axis of the interior likelihood: mass of N(t, sigma^2) over [-e, e].

    Expressed through the two distances to the slab's boundary lines so the
    same three-case form applies inside and outside the slab.
    """
    d_hi = np.abs(e - t)
    d_lo = np.abs(e + t)
    inside = (d_hi < 2.0 * e) & (d_lo < 2.0 * e)
    q_hi = _q(d_hi / sigma)
    q_lo = _q(d_lo / sigma)
    f = np.select(
        [inside, d_lo >= d_hi],
        [1.0 - q_hi - q_lo, q_hi - q_lo],
        default=q_lo - q_hi,
    )
    return np.maximum(f, 0.0)


def interior_likelihood(z: np.ndarray, rect: Rect, dec: ExtentDecomposition,
                        R: np.ndarray) -> float:
    """Density at z of a point uniform over the rectangle plus N(0, R) noise.

    The noise is projected onto the rectangle axes and the two axis factors
    are treated independently, which is exact when R is isotropic and a
    close approximation otherwise.
    """
    R = _check_spd2(R)
    z = np.asarray(z, dtype=float)
    rel = z - rect.center
    t1 = float(dec.v1 @ rel)
    t2 = float(dec.v2 @ rel)
    s1 = np.sqrt(dec.v1 @ R @ dec.v1)
    s2 = np.sqrt(dec.v2 @ R @ dec.v2)
    f1 = _axis_factor(np.asarray(t1), np.asarray(dec.e1), s1)
    f2 = _axis_factor(np.asarray(t2), np.asarray(dec.e2), s2)
    return float(f1 * f2 / (4.0 * dec.e1 * dec.e2))


def region_likelihoods(z: np.ndarray, center: np.ndarray, extent: np.ndarray,
                       sensor: SensorModel) -> np.ndarray:
    """The five per-region densities of z for one target pose.

    Entries 0..3 use the stick model on the corresponding edge with noise
    evaluated at that edge's midpoint; entry 4 is the interior model with
    noise evaluated at the rectangle center.
    """
    center = np.asarray(center, dtype=float)
    dec = extent_decompose(extent)
    rect = rect_from_state(center, dec)
    out = np.empty(5)
    starts, ends = rect.edge_endpoints()
    for n, (a, b) in enumerate(zip(starts, ends)):
        R = ut_cartesian_cov(0.5 * (a + b), sensor)
        out[n] = stick_likelihood(z, a, b, R)
    out[4] = interior_likelihood(z, rect, dec, ut_cartesian_cov(center, sensor))
    return out


def _prior_probs_from_parts(vis: np.ndarray, ang: np.ndarray,
                            priors: RegionPriors) -> np.ndarray:
    """Combine visibility masks (L,4) and subtended angles (L,4) into (L,5).

    Within each visibility group the group's prior mass is split in
    proportion to subtended angle.  Degenerate groups fall back to uniform
    splits: zero total angle -> uniform over the group's edges; an empty
    group -> its mass spreads uniformly over all four edges (the other group
    necessarily holds every edge then).
    """
    vis = np.asarray(vis, dtype=bool)
    ang = np.asarray(ang, dtype=float)
    L = vis.shape[0]
    out = np.empty((L, 5))
    out[:, 4] = priors.p_int

    for mask, mass in ((vis, priors.p_vis), (~vis, priors.p_inv)):
        count = mask.sum(axis=1)
        ang_sum = np.where(mask, ang, 0.0).sum(axis=1)
        by_angle = np.where(mask, ang, 0.0) / np.where(ang_sum > 0.0, ang_sum, 1.0)[:, None]
        uniform_in = mask / np.maximum(count, 1)[:, None]
        per_edge = np.where((ang_sum > 0.0)[:, None], by_angle, uniform_in)
        # empty group: spread this group's mass over all four edges
        per_edge = np.where((count == 0)[:, None], 0.25, per_edge)
        if mask is vis:
            out[:, :4] = mass * per_edge
        else:
            out[:, :4] += mass * per_edge
    return out


def prior_region_probs(center: np.ndarray, extent: np.ndarray,
                       sensor: SensorModel,
                       priors: RegionPriors | None) -> np.ndarray:
    """Prior association probabilities of the five regions for one pose.

    ``priors=None`` requests the flat baseline: every region gets probability
    0.2 regardless of viewing geometry.
    """
    if priors is None:
        return np.full(5, 0.2)
    center = np.asarray(center, dtype=float)
    dec = extent_decompose(extent)
    e1 = np.array([dec.e1])
    e2 = np.array([dec.e2])
    v1, v2 = dec.v1[None], dec.v2[None]
    verts = vertices_batch(center[None], e1, e2, v1, v2)
    vis = visibility_batch(sensor.position, center[None], e1, e2, v1, v2)
    ang = subtended_angles_batch(sensor.position, verts)
    if not np.all(np.isfinite(ang)) or np.any(
            np.hypot(*(verts[0] - sensor.position).T) < 1e-12):
        raise DegeneratePoseError("sensor coincides with a rectangle vertex")
    return _prior_probs_from_parts(vis, ang, priors)[0]


def order_by_angle(Y: np.ndarray, sensor: SensorModel) -> np.ndarray:
    """Indices sorting measurements by ascending bearing from the sensor."""
    Y = np.asarray(Y, dtype=float)
    rel = Y - sensor.position
    return np.argsort(np.arctan2(rel[:, 1], rel[:, 0]), kind="stable")


class RegionEvaluator:
    """Vectorized five-region likelihoods for a whole particle set.

    Everything that does not depend on the measurement — rectangle geometry,
    per-region noise covariances, stick prefactors, interior projections, and
    the prior region probabilities — is computed once at construction.
    ``likelihoods(z)`` then costs a handful of fused array operations per
    measurement, and ``take`` re-indexes the cache after a resampling step
    instead of rebuilding it.
    """

    def __init__(self, positions: np.ndarray, extents: np.ndarray,
                 sensor: SensorModel, priors: RegionPriors | None):
        positions = np.asarray(positions, dtype=float)
        extents = np.asarray(extents, dtype=float)
        L = positions.shape[0]
        e1, e2, v1, v2 = decompose_batch(extents)
        verts = vertices_batch(positions, e1, e2, v1, v2)  # (L,4,2)

        self.n = L
        self._p0 = positions
        self._e1, self._e2 = e1, e2
        self._v1, self._v2 = v1, v2

        a = verts
        b = np.roll(verts, -1, axis=1)
        mids = 0.5 * (a + b)
        R_edge = ut_cartesian_cov_batch(mids.reshape(-1, 2), sensor).reshape(L, 4, 2, 2)
        R_int = ut_cartesian_cov_batch(positions, sensor)

        det = R_edge[..., 0, 0] * R_edge[..., 1, 1] - R_edge[..., 0, 1] * R_edge[..., 1, 0]
        Rinv = np.empty_like(R_edge)
        Rinv[..., 0, 0] = R_edge[..., 1, 1] / det
        Rinv[..., 1, 1] = R_edge[..., 0, 0] / det
        Rinv[..., 0, 1] = -R_edge[..., 0, 1] / det
        Rinv[..., 1, 0] = -R_edge[..., 1, 0] / det

        d = b - a
        rinv_d = np.einsum("lnij,lnj->lni", Rinv, d)
        A = np.einsum("lni,lni->ln", d, rinv_d)
        self._a = a
        self._d = d
        self._rinv = Rinv
        self._rinv_d = rinv_d
        self._A = A
        self._sqrt_a = np.sqrt(A)
        self._pref = 1.0 / np.sqrt(2.0 * np.pi * A * det)

        self._s1 = np.sqrt(np.einsum("li,lij,lj->l", v1, R_int, v1))
        self._s2 = np.sqrt(np.einsum("li,lij,lj->l", v2, R_int, v2))
        self._area4 = 4.0 * e1 * e2

        if priors is None:
            # flat association prior over all five regions (the ablation
            # baseline without visibility weighting)
            self.priors = np.full((L, 5), 0.2)
        else:
            vis = visibility_batch(sensor.position, positions, e1, e2, v1, v2)
            ang = subtended_angles_batch(sensor.position, verts)
            self.priors = _prior_probs_from_parts(vis, ang, priors)  # (L,5)

    def likelihoods(self, z: np.ndarray) -> np.ndarray:
        """Per-particle, per-region densities of one measurement, (L,5)."""
        z = np.asarray(z, dtype=float)
        out = np.empty((self.n, 5))

        u = z - self._a  # (L,4,2)
        B = np.einsum("lni,lni->ln", u, self._rinv_d)
        resid = u - (B / self._A)[..., None] * self._d
        expo = np.einsum("lni,lnij,lnj->ln", resid, self._rinv, resid)
        phi_hi = ndtr((self._A - B) / self._sqrt_a)
        phi_lo = ndtr(-B / self._sqrt_a)
        np.maximum(
            np.exp(-0.5 * expo) * self._pref * (phi_hi - phi_lo), 0.0,
            out=out[:, :4],
        )

        rel = z - self._p0
        t1 = np.einsum("li,li->l", self._v1, rel)
        t2 = np.einsum("li,li->l", self._v2, rel)
        f1 = _axis_factor(t1, self._e1, self._s1)
        f2 = _axis_factor(t2, self._e2, self._s2)
        out[:, 4] = f1 * f2 / self._area4
        return out

    def take(self, idx: np.ndarray) -> "RegionEvaluator":
        """A new evaluator with the cache gathered by particle index.

        Used after resampling; the original evaluator is left untouched so it
        can be shared across independent update branches.
        """
        out = object.__new__(RegionEvaluator)
        out.n = len(idx)
        for name in ("_p0", "_e1", "_e2", "_v1", "_v2", "_a", "_d", "_rinv",
                     "_rinv_d", "_A", "_sqrt_a", "_pref", "_s1", "_s2",
                     "_area4", "priors"):
            setattr(out, name, getattr(self, name)[idx])
        return out
