"""Particle representation of a single extended target.

A target's density factorizes into a gamma-distributed measurement rate and
a particle cloud over the joint kinematic-plus-extent state.  This module
provides birth sampling, the sequential per-cluster weight update, the
missed-detection rate update, resampling, and moment extraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma, log

import numpy as np

from .dynamics import RateState, rotation, sample_inverse_wishart
from .errors import InvalidInputError, InvalidParameterError, NumericUnderflowError
from .measurement import RegionEvaluator, RegionPriors, SensorModel


@dataclass
class ParticleSet:
    """Weighted particles: states m (L,5), extents E (L,2,2), weights w (L,)."""

    m: np.ndarray
    E: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        self.m = np.asarray(self.m, dtype=float)
        self.E = np.asarray(self.E, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        L = self.m.shape[0]
        if L < 1 or self.m.shape != (L, 5) or self.E.shape != (L, 2, 2) \
                or self.w.shape != (L,):
            raise InvalidInputError("inconsistent particle array shapes")
        if abs(self.w.sum() - 1.0) > 1e-9 or np.any(self.w < 0.0):
            raise InvalidInputError("particle weights must be normalized")

    def __len__(self) -> int:
        return self.m.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.m[:, [0, 2]]


@dataclass
class TargetDensity:
    """Rate state plus particle cloud for one target."""

    rate: RateState
    particles: ParticleSet


@dataclass(frozen=True)
class BirthConfig:
    """Proposal parameters for initializing a target from a clump of returns.

    Positions are drawn around the clump centroid with covariance Q_pos,
    velocities around nominal_velocity with covariance Q_vel, turn rates
    around zero with variance Q_turn; extents come from an inverse-Wishart
    centered on a nominal rectangle (half-extents ebar1 x ebar2) aligned
    with the nominal velocity.
    """

    alpha_b: float
    beta_b: float
    Q_pos: np.ndarray
    Q_vel: np.ndarray
    Q_turn: float
    q_b: float
    ebar1: float
    ebar2: float
    nominal_velocity: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Q_pos", np.asarray(self.Q_pos, dtype=float))
        object.__setattr__(self, "Q_vel", np.asarray(self.Q_vel, dtype=float))
        object.__setattr__(self, "nominal_velocity",
                           np.asarray(self.nominal_velocity, dtype=float))
        if self.alpha_b <= 0 or self.beta_b <= 0:
            raise InvalidParameterError("birth gamma parameters must be positive")
        for name in ("Q_pos", "Q_vel"):
            Q = getattr(self, name)
            if Q.shape != (2, 2) or abs(Q[0, 1] - Q[1, 0]) > 1e-12 * (1 + abs(Q).max()) \
                    or Q[0, 0] <= 0 or np.linalg.det(Q) <= 0:
                raise InvalidParameterError(f"{name} must be SPD 2x2")
        if self.Q_turn <= 0:
            raise InvalidParameterError("Q_turn must be positive")
        if self.q_b <= 3:
            raise InvalidParameterError("birth inverse-Wishart needs q_b > 3")
        if not (self.ebar1 >= self.ebar2 > 0):
            raise InvalidParameterError("half-extents must satisfy ebar1 >= ebar2 > 0")
        if self.nominal_velocity.shape != (2,):
            raise InvalidParameterError("nominal_velocity must be a 2-vector")


def init_birth(cluster: np.ndarray, cfg: BirthConfig, L: int,
               rng: np.random.Generator) -> TargetDensity:
    """Sample a fresh target density from a measurement clump.

    Weights follow the position proposal density (particles landing near the
    clump centroid count more), normalized to sum to one.
    """
    cluster = np.atleast_2d(np.asarray(cluster, dtype=float))
    if cluster.size == 0:
        raise InvalidInputError("birth cluster must be non-empty")
    if L < 1:
        raise InvalidParameterError("particle count must be >= 1")
    zbar = cluster.mean(axis=0)

    pos = rng.multivariate_normal(zbar, cfg.Q_pos, size=L)
    vel = rng.multivariate_normal(cfg.nominal_velocity, cfg.Q_vel, size=L)
    omega = rng.normal(0.0, np.sqrt(cfg.Q_turn), size=L)

    heading = np.arctan2(cfg.nominal_velocity[1], cfg.nominal_velocity[0])
    Rot = rotation(float(heading))
    V = (cfg.q_b - 3.0) * (Rot @ np.diag([cfg.ebar1, cfg.ebar2]) @ Rot.T)
    E = sample_inverse_wishart(cfg.q_b, V, rng, n=L)
    if L == 1:
        E = E[None, :, :]

    m = np.column_stack([pos[:, 0], vel[:, 0], pos[:, 1], vel[:, 1], omega])

    diff = pos - zbar
    Qinv = np.linalg.inv(cfg.Q_pos)
    logw = -0.5 * np.einsum("li,ij,lj->l", diff, Qinv, diff)
    logw -= logw.max()
    w = np.exp(logw)
    w /= w.sum()

    return TargetDensity(RateState(cfg.alpha_b, cfg.beta_b), ParticleSet(m, E, w))


def gamma_update(rate: RateState, n: int) -> tuple[RateState, float]:
    """Conjugate rate update for n received measurements, with its evidence.

    The returned likelihood is the predictive probability of seeing exactly
    n measurements under the gamma prior (a negative-binomial pmf value).
    """
    if n < 0:
        raise InvalidInputError("measurement count must be >= 0")
    return RateState(rate.alpha + n, rate.beta + 1.0), float(np.exp(log_gamma_predictive(rate, n)))


def log_gamma_predictive(rate: RateState, n: int) -> float:
    """log of the predictive probability of n measurements under the rate prior."""
    a, b = rate.alpha, rate.beta
    return (lgamma(a + n) + a * log(b)
            - lgamma(a) - (a + n) * log(b + 1.0) - lgamma(n + 1))


def missed_detection_update(d: TargetDensity, pD: float) -> tuple[TargetDensity, float]:
    """Rate-only update when the target generated no detected cluster.

    A miss happens either because detection failed (prob 1-pD) or because
    the target emitted zero measurements; the posterior rate is the moment
    match of that two-term mixture (alpha unchanged, beta adjusted so the
    mixture mean of the rate is preserved exactly).
    """
    if not 0.0 <= pD <= 1.0:
        raise InvalidParameterError("detection probability must lie in [0, 1]")
    a, b = d.rate.alpha, d.rate.beta
    q1 = 1.0 - pD
    q2 = pD * (b / (b + 1.0)) ** a
    qD = q1 + q2
    beta_new = 1.0 / (q1 / (qD * b) + q2 / (qD * (b + 1.0)))
    return TargetDensity(RateState(a, beta_new), d.particles), float(qD)


def ess(w: np.ndarray) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights."""
    w = np.asarray(w, dtype=float)
    return float(1.0 / (w @ w))


def resample_indices(w: np.ndarray, L: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling: L indices from one uniform offset."""
    c = np.cumsum(w)
    c[-1] = 1.0
    u = (rng.random() + np.arange(L)) / L
    return np.searchsorted(c, u, side="right").clip(max=len(w) - 1)


def systematic_resample(p: ParticleSet, rng: np.random.Generator) -> ParticleSet:
    """Resample a particle set to uniform weights."""
    L = len(p)
    idx = resample_indices(p.w, L, rng)
    return ParticleSet(p.m[idx], p.E[idx], np.full(L, 1.0 / L))


def extract_state(p: ParticleSet) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean kinematic state and extent."""
    m_hat = p.w @ p.m
    E_hat = np.einsum("l,lij->ij", p.w, p.E)
    return m_hat, E_hat


@dataclass(frozen=True)
class ClusterUpdate:
    """Outcome of updating one target density with one measurement cluster."""

    density: TargetDensity
    log_l_xi: float
    l_xi: float
    log_l_gamma: float
    l_gamma: float

    @property
    def log_likelihood(self) -> float:
        """Joint cluster evidence: rate part times state part, in logs."""
        return self.log_l_xi + self.log_l_gamma


def update_with_cluster(d: TargetDensity, Y: np.ndarray, sensor: SensorModel,
                        priors: RegionPriors | None, ess_threshold: float,
                        rng: np.random.Generator,
                        evaluator: RegionEvaluator | None = None) -> ClusterUpdate:
    """Sequential Bayes update of one target with an ordered cluster.

    Measurements are folded in one at a time: each particle's weight is
    multiplied by its prior-weighted sum of the five region densities and the
    weights renormalized, accumulating the cluster evidence as the product of
    the per-measurement normalizers.  When the effective sample size drops
    below ess_threshold with measurements still pending, the particles are
    resampled systematically before continuing.  The caller fixes the
    measurement order (ascending bearing in the filter).

    Raises NumericUnderflowError when some measurement is impossibly far from
    every particle, which callers treat as evidence zero for the pairing.
    A prebuilt evaluator for d's particles may be passed to share geometry
    work across calls; it is never mutated.
    """
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.size == 0:
        raise InvalidInputError("measurement cluster must be non-empty")
    ev = evaluator if evaluator is not None else RegionEvaluator(
        d.particles.positions, d.particles.E, sensor, priors)

    m, E, w = d.particles.m, d.particles.E, d.particles.w
    n = Y.shape[0]
    log_l_xi = 0.0
    for j in range(n):
        lik = ev.likelihoods(Y[j])
        f = np.einsum("ln,ln->l", lik, ev.priors)
        fmax = f.max()
        if not np.isfinite(fmax) or fmax <= 0.0:
            raise NumericUnderflowError("cluster likelihood vanished for all particles")
        g = f / fmax
        s = float(w @ g)
        if not np.isfinite(s) or s <= 0.0:
            raise NumericUnderflowError("cluster likelihood vanished for all particles")
        log_l_xi += log(s) + log(fmax)
        w = w * g / s
        if j + 1 < n and ess(w) < ess_threshold:
            idx = resample_indices(w, len(w), rng)
            m, E = m[idx], E[idx]
            w = np.full(len(idx), 1.0 / len(idx))
            ev = ev.take(idx)

    rate_new = RateState(d.rate.alpha + n, d.rate.beta + 1.0)
    log_l_gamma = log_gamma_predictive(d.rate, n)
    density = TargetDensity(rate_new, ParticleSet(m, E, w / w.sum()))
    return ClusterUpdate(density, log_l_xi, float(np.exp(log_l_xi)),
                         log_l_gamma, float(np.exp(log_l_gamma)))
