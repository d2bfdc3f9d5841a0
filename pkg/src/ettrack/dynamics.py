"""Target dynamics: coordinated-turn kinematics, extent diffusion, rate forgetting.

Kinematic states are length-5 vectors ordered [x, vx, y, vy, omega] with
omega the turn rate in rad/s.  Extents diffuse through a Wishart transition
whose mean rotates the previous extent by omega*T, and the measurement-rate
gamma parameters are discounted by a forgetting factor at each prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameterError

#: below this |omega| the transition entries switch to their Taylor limits
OMEGA_EPS = 1e-6


@dataclass(frozen=True)
class MotionNoise:
    """Process noise intensities for the coordinated-turn model.

    sigma_x / sigma_y are accelerations (m/s^2), sigma_omega a turn-rate
    rate (rad/s^2); T is the sampling interval in seconds.
    """

    sigma_x: float
    sigma_y: float
    sigma_omega: float
    T: float

    def __post_init__(self):
        for name in ("sigma_x", "sigma_y", "sigma_omega", "T"):
            if getattr(self, name) <= 0.0:
                raise InvalidParameterError(f"{name} must be positive")


@dataclass(frozen=True)
class RateState:
    """Gamma parameters (shape alpha, rate beta) of the measurement rate."""

    alpha: float
    beta: float

    def __post_init__(self):
        if self.alpha <= 0.0 or self.beta <= 0.0:
            raise InvalidParameterError("gamma parameters must be positive")

    @property
    def mean(self) -> float:
        return self.alpha / self.beta


def _ct_entries(omega: np.ndarray, T: float):
    """The four omega-dependent transition entries, Taylor-expanded near zero.

    Returns (sin(wT)/w, (1-cos(wT))/w, cos(wT), sin(wT)); the first two use
    second-order expansions below OMEGA_EPS so the matrix is continuous
    across the switch.
    """
    omega = np.asarray(omega, dtype=float)
    small = np.abs(omega) < OMEGA_EPS
    # Avoid 0/0 in the exact branch; the result there is discarded.
    w_safe = np.where(small, 1.0, omega)
    wt = omega * T
    sin_wt = np.sin(wt)
    cos_wt = np.cos(wt)
    s_over = np.where(small, T - omega**2 * T**3 / 6.0, sin_wt / w_safe)
    c_over = np.where(small, omega * T**2 / 2.0 - omega**3 * T**4 / 24.0,
                      (1.0 - cos_wt) / w_safe)
    sin_t = np.where(small, wt - wt**3 / 6.0, sin_wt)
    cos_t = np.where(small, 1.0 - wt**2 / 2.0, cos_wt)
    return s_over, c_over, cos_t, sin_t


def ct_transition_matrix(omega: float, T: float) -> np.ndarray:
    """5x5 coordinated-turn transition matrix for [x, vx, y, vy, omega]."""
    if T <= 0.0:
        raise InvalidParameterError("T must be positive")
    s_over, c_over, cos_t, sin_t = (float(v) for v in _ct_entries(float(omega), T))
    F = np.eye(5)
    F[0, 1] = s_over
    F[0, 3] = -c_over
    F[1, 1] = cos_t
    F[1, 3] = -sin_t
    F[2, 1] = c_over
    F[2, 3] = s_over
    F[3, 1] = sin_t
    F[3, 3] = cos_t
    return F


def ct_apply_batch(m: np.ndarray, T: float) -> np.ndarray:
    """Apply each particle's own turn-rate transition to a stack of states."""
    s_over, c_over, cos_t, sin_t = _ct_entries(m[:, 4], T)
    x, vx, y, vy, om = m.T
    out = np.empty_like(m)
    out[:, 0] = x + s_over * vx - c_over * vy
    out[:, 1] = cos_t * vx - sin_t * vy
    out[:, 2] = y + c_over * vx + s_over * vy
    out[:, 3] = sin_t * vx + cos_t * vy
    out[:, 4] = om
    return out


def predict_kinematics_batch(m: np.ndarray, noise: MotionNoise,
                             rng: np.random.Generator) -> np.ndarray:
    """Coordinated-turn propagation plus additive discretised noise.

    The noise enters through G = diag([T^2/2, T], [T^2/2, T], T) acting on
    independent axis accelerations and a turn-rate disturbance.
    """
    out = ct_apply_batch(np.asarray(m, dtype=float), noise.T)
    w = rng.standard_normal((m.shape[0], 3))
    w[:, 0] *= noise.sigma_x
    w[:, 1] *= noise.sigma_y
    w[:, 2] *= noise.sigma_omega
    T = noise.T
    half_t2 = 0.5 * T * T
    out[:, 0] += half_t2 * w[:, 0]
    out[:, 1] += T * w[:, 0]
    out[:, 2] += half_t2 * w[:, 1]
    out[:, 3] += T * w[:, 1]
    out[:, 4] += T * w[:, 2]
    return out


def predict_kinematics(m: np.ndarray, noise: MotionNoise,
                       rng: np.random.Generator) -> np.ndarray:
    """Single-state version of predict_kinematics_batch."""
    return predict_kinematics_batch(np.asarray(m, dtype=float)[None, :], noise, rng)[0]


def noise_covariance(noise: MotionNoise) -> np.ndarray:
    """Full 5x5 process noise covariance G diag(sig^2) G' (rank 3)."""
    T = noise.T
    G = np.zeros((5, 3))
    G[0, 0] = 0.5 * T * T
    G[1, 0] = T
    G[2, 1] = 0.5 * T * T
    G[3, 1] = T
    G[4, 2] = T
    q = np.diag([noise.sigma_x**2, noise.sigma_y**2, noise.sigma_omega**2])
    return G @ q @ G.T


# ---------------------------------------------------------------------------
# Random matrix sampling
# ---------------------------------------------------------------------------

def _chol2_batch(V: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lower Cholesky factors of a stack of SPD 2x2 matrices (closed form)."""
    l11 = np.sqrt(V[..., 0, 0])
    l21 = V[..., 1, 0] / l11
    l22 = np.sqrt(np.maximum(V[..., 1, 1] - l21 * l21, 0.0))
    return l11, l21, l22


def sample_wishart_batch(q: float, V: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one Wishart(q, V_i) matrix per scale matrix via Bartlett factors.

    q may be any real degrees-of-freedom > 1; E[draw] = q * V_i.
    """
    if q <= 1.0:
        raise InvalidParameterError("Wishart degrees of freedom must exceed 1")
    n = V.shape[0]
    l11, l21, l22 = _chol2_batch(V)
    a11 = np.sqrt(rng.chisquare(q, n))
    a22 = np.sqrt(rng.chisquare(q - 1.0, n))
    a21 = rng.standard_normal(n)
    # M = chol(V) @ A with A lower triangular
    m11 = l11 * a11
    m21 = l21 * a11 + l22 * a21
    m22 = l22 * a22
    out = np.empty((n, 2, 2))
    out[:, 0, 0] = m11 * m11
    out[:, 0, 1] = m11 * m21
    out[:, 1, 0] = out[:, 0, 1]
    out[:, 1, 1] = m21 * m21 + m22 * m22
    return out


def sample_wishart(q: float, V: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Single Wishart(q, V) draw, E[draw] = q*V."""
    return sample_wishart_batch(q, np.asarray(V, dtype=float)[None, :, :], rng)[0]


def _inv2_batch(E: np.ndarray) -> np.ndarray:
    det = E[..., 0, 0] * E[..., 1, 1] - E[..., 0, 1] * E[..., 1, 0]
    out = np.empty_like(E)
    out[..., 0, 0] = E[..., 1, 1] / det
    out[..., 1, 1] = E[..., 0, 0] / det
    out[..., 0, 1] = -E[..., 0, 1] / det
    out[..., 1, 0] = -E[..., 1, 0] / det
    return out


def sample_inverse_wishart(q: float, V: np.ndarray, rng: np.random.Generator,
                           n: int = 1) -> np.ndarray:
    """Inverse-Wishart draws parameterized so that E[draw] = V / (q - 3).

    Implemented as the inverse of Wishart(q, inv(V)) draws.  Returns shape
    (n,2,2) for n > 1 and (2,2) for n == 1.
    """
    if q <= 3.0:
        raise InvalidParameterError("inverse-Wishart needs q > 3 for a finite mean")
    V = np.asarray(V, dtype=float)
    Vinv = _inv2_batch(V[None, :, :])
    draws = sample_wishart_batch(q, np.broadcast_to(Vinv, (n, 2, 2)), rng)
    out = _inv2_batch(draws)
    return out[0] if n == 1 else out


def sample_gamma(alpha: float, beta: float, rng: np.random.Generator) -> float:
    """One gamma(shape=alpha, rate=beta) draw."""
    if alpha <= 0.0 or beta <= 0.0:
        raise InvalidParameterError("gamma parameters must be positive")
    return float(rng.gamma(alpha, 1.0 / beta))


def rotation(angle: float | np.ndarray) -> np.ndarray:
    """2x2 rotation matrix (stacked when angle is an array)."""
    c = np.cos(angle)
    s = np.sin(angle)
    return np.stack([np.stack([c, -s], axis=-1), np.stack([s, c], axis=-1)], axis=-2)


def predict_extent_batch(E: np.ndarray, omega: np.ndarray, T: float, q: float,
                         rng: np.random.Generator) -> np.ndarray:
    """Wishart extent transition with per-particle rotation by omega*T.

    The draw has mean V(omega*T) E V(omega*T)', so straight-line motion
    keeps the expected extent unchanged while turning rotates it with the
    heading.
    """
    if q <= 3.0:
        raise InvalidParameterError("extent transition requires q > 3")
    R = rotation(np.asarray(omega) * T)
    rotated = R @ E @ np.swapaxes(R, -1, -2)
    return sample_wishart_batch(q, rotated / q, rng)


def predict_extent(E: np.ndarray, omega: float, T: float, q: float,
                   rng: np.random.Generator) -> np.ndarray:
    """Single-extent version of predict_extent_batch."""
    if q <= 3.0:
        raise InvalidParameterError("extent transition requires q > 3")
    return predict_extent_batch(np.asarray(E, dtype=float)[None, :, :],
                                np.asarray([omega], dtype=float), T, q, rng)[0]


def predict_rate(rate: RateState, eta: float) -> RateState:
    """Discount the gamma parameters by the forgetting factor eta > 1.

    Keeps the rate mean unchanged while inflating its variance, which lets
    the estimated measurement rate react to slow changes.
    """
    if eta <= 1.0:
        raise InvalidParameterError("forgetting factor must exceed 1")
    return RateState(rate.alpha / eta, rate.beta / eta)
