"""Poisson multi-Bernoulli mixture filter over particle extended targets.

The multi-target density is a Poisson point process of as-yet-undetected
targets plus a weighted mixture of global hypotheses, each a list of
Bernoulli components for the targets detected so far.  Prediction advances
every component through the dynamics; the update clusters the scan, gates
clusters against each hypothesis, enumerates cluster-level associations, and
builds the child hypotheses with their weights.  Newborn-target intensity is
injected during the update, from clusters far away from everything known.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from math import inf, log

import numpy as np
from scipy.special import logsumexp

from .association import (
    NEW_TARGET,
    GatingResult,
    dbscan,
    enumerate_associations,
    gate,
)
from .dynamics import (
    MotionNoise,
    RateState,
    predict_extent_batch,
    predict_kinematics_batch,
    predict_rate,
)
from .errors import InvalidParameterError, NumericUnderflowError
from .measurement import RegionEvaluator, RegionPriors, SensorModel, order_by_angle
from .particles import (
    BirthConfig,
    ParticleSet,
    TargetDensity,
    extract_state,
    init_birth,
    missed_detection_update,
    resample_indices,
    update_with_cluster,
)


@dataclass
class PoissonComponent:
    """One weighted component of the undetected-target intensity."""

    weight: float
    density: TargetDensity


@dataclass
class BernoulliComponent:
    """A potentially-existing detected target."""

    r: float
    density: TargetDensity


@dataclass
class GlobalHypothesis:
    """One association history: weight plus its Bernoulli components."""

    weight: float
    bernoullis: list[BernoulliComponent]


@dataclass
class PmbmDensity:
    """Undetected intensity plus the hypothesis mixture."""

    ppp: list[PoissonComponent]
    hypotheses: list[GlobalHypothesis]

    @classmethod
    def empty(cls) -> "PmbmDensity":
        """No undetected intensity, a single empty hypothesis of weight 1."""
        return cls([], [GlobalHypothesis(1.0, [])])


@dataclass(frozen=True)
class BirthZone:
    """Axis-aligned region owning a nominal velocity for targets born there."""

    x: tuple[float, float]
    y: tuple[float, float]
    velocity: tuple[float, float]

    def contains(self, point: np.ndarray) -> bool:
        return bool(self.x[0] <= point[0] <= self.x[1]
                    and self.y[0] <= point[1] <= self.y[1])


@dataclass(frozen=True)
class FilterConfig:
    """Everything the recursion needs besides the sensor itself.

    priors=None selects the flat five-region association prior instead of
    the visibility-weighted one.
    """

    priors: RegionPriors | None
    birth: BirthConfig
    motion: MotionNoise
    pD: float = 0.9
    pS: float = 0.99
    clutter_rate: float = 10.0
    surveillance_volume: float = 1e4
    birth_weight: float = 1.0
    birth_zones: tuple[BirthZone, ...] = ()
    extent_dof: float = 100.0
    forgetting: float = 1.2
    eps: float = 1.5
    min_pts: int = 2
    d_in: float = 5.0
    d_out: float = 10.0
    assoc_cap: int = 100
    L: int = 1000
    ess_threshold: float = 100.0
    r_th: float = 0.5
    ppp_prune: float = 1e-3
    hyp_prune: float = 1e-3
    bernoulli_prune: float = 1e-3
    hyp_cap: int = 50
    clutter_term_in_new_cells: bool = True
    recapture_vel_std: float = 4.0

    def __post_init__(self):
        if not (0.0 <= self.pD <= 1.0 and 0.0 <= self.pS <= 1.0):
            raise InvalidParameterError("pD and pS must lie in [0, 1]")
        if self.clutter_rate < 0.0 or self.surveillance_volume <= 0.0:
            raise InvalidParameterError("clutter rate >= 0 and volume > 0 required")
        if self.L < 1 or self.assoc_cap < 1 or self.hyp_cap < 1:
            raise InvalidParameterError("counts must be positive")


def _predict_density(td: TargetDensity, cfg: FilterConfig,
                     rng: np.random.Generator) -> TargetDensity:
    p = td.particles
    omega = p.m[:, 4].copy()  # extent rotates with the pre-update turn rate
    m = predict_kinematics_batch(p.m, cfg.motion, rng)
    E = predict_extent_batch(p.E, omega, cfg.motion.T, cfg.extent_dof, rng)
    return TargetDensity(predict_rate(td.rate, cfg.forgetting),
                         ParticleSet(m, E, p.w))


def predict(d: PmbmDensity, cfg: FilterConfig, rng: np.random.Generator) -> PmbmDensity:
    """Advance the whole density one step; weights stay put, r shrinks by pS."""
    ppp = [PoissonComponent(c.weight, _predict_density(c.density, cfg, rng))
           for c in d.ppp]
    hyps = [GlobalHypothesis(h.weight,
                             [BernoulliComponent(b.r * cfg.pS,
                                                 _predict_density(b.density, cfg, rng))
                              for b in h.bernoullis])
            for h in d.hypotheses]
    return PmbmDensity(ppp, hyps)


def gamma_mixture_reduction(components) -> tuple[float, float]:
    """Single gamma matching the mean and variance of a gamma mixture.

    components is a sequence of (weight, alpha, beta); weights are
    normalized internally.  Zero mixture variance (all components equal)
    returns the common parameters unchanged.
    """
    comps = [(float(w), float(a), float(b)) for w, a, b in components]
    if not comps:
        raise InvalidParameterError("need at least one mixture component")
    wsum = sum(w for w, _, _ in comps)
    if wsum <= 0.0:
        raise InvalidParameterError("mixture weights must have positive sum")
    mu = sum(w * a / b for w, a, b in comps) / wsum
    second = sum(w * (a / b**2 + (a / b) ** 2) for w, a, b in comps) / wsum
    v = second - mu * mu
    if v <= 0.0 or v <= 1e-14 * mu * mu:
        return comps[0][1], comps[0][2]
    return mu * mu / v, mu / v


def _hyp_positions(h: GlobalHypothesis) -> np.ndarray:
    if not h.bernoullis:
        return np.empty((0, 2))
    return np.array([extract_state(b.density.particles)[0][[0, 2]]
                     for b in h.bernoullis])


def _zone_birth_config(cfg: FilterConfig, centroid: np.ndarray) -> BirthConfig:
    for zone in cfg.birth_zones:
        if zone.contains(centroid):
            return replace(cfg.birth,
                           nominal_velocity=np.asarray(zone.velocity, dtype=float))
    return cfg.birth


def _new_cell(Yc: np.ndarray, predicted_ppp: list[PoissonComponent],
              evaluators: list[RegionEvaluator], sensor: SensorModel,
              cfg: FilterConfig, rng: np.random.Generator):
    """Cell for one cluster explained by the undetected intensity or clutter.

    Updates every Poisson component with the cluster, then collapses the
    resulting mixture: moment-matched gamma rate, pooled particles resampled
    back to the configured count.  With the clutter term enabled the cell
    weight is kappa + sum_h w_h pD l_h, where kappa treats all n points as
    independent clutter, and the existence probability is the newborn share
    of that total; the component is None when the whole cell is clutter.
    Returns (log cell weight, component or None), or None when the cluster
    is impossible under every explanation.
    """
    H = len(predicted_ppp)
    log_rho = np.full(H, -inf)
    results = [None] * H
    for h, comp in enumerate(predicted_ppp):
        if comp.weight <= 0.0:
            continue
        try:
            res = update_with_cluster(comp.density, Yc, sensor, cfg.priors,
                                      cfg.ess_threshold, rng,
                                      evaluator=evaluators[h])
        except NumericUnderflowError:
            continue
        results[h] = res
        log_rho[h] = log(comp.weight * cfg.pD) + res.log_l_gamma + res.log_l_xi

    log_clutter = -inf
    if cfg.clutter_term_in_new_cells and cfg.clutter_rate > 0.0:
        log_clutter = Yc.shape[0] * log(cfg.clutter_rate / cfg.surveillance_volume)

    if np.all(np.isinf(log_rho)):
        if np.isfinite(log_clutter):
            return log_clutter, None
        return None
    log_l = float(logsumexp(log_rho))
    w_hat = np.exp(log_rho - log_l)

    rate = gamma_mixture_reduction(
        [(w_hat[h], results[h].density.rate.alpha, results[h].density.rate.beta)
         for h in range(H) if results[h] is not None])

    valid = [h for h in range(H) if results[h] is not None]
    m = np.concatenate([results[h].density.particles.m for h in valid])
    E = np.concatenate([results[h].density.particles.E for h in valid])
    w = np.concatenate([w_hat[h] * results[h].density.particles.w for h in valid])
    idx = resample_indices(w / w.sum(), cfg.L, rng)
    pooled = ParticleSet(m[idx], E[idx], np.full(cfg.L, 1.0 / cfg.L))

    r = 1.0
    if np.isfinite(log_clutter):
        log_total = float(np.logaddexp(log_l, log_clutter))
        r = float(np.exp(log_l - log_total))
        log_l = log_total
    comp = BernoulliComponent(r, TargetDensity(RateState(*rate), pooled))
    return log_l, comp


def update(d: PmbmDensity, scan_points: np.ndarray, sensor: SensorModel,
           cfg: FilterConfig, rng: np.random.Generator) -> PmbmDensity:
    """One measurement update of the mixture density.

    Stages: cluster + gate the scan; rate-update the undetected intensity
    for missed detection; per parent hypothesis, enumerate cluster-level
    associations and build child hypotheses from detected / missed /
    new-target cells; normalize child weights and append newborn intensity
    from the clusters nobody could claim.
    """
    Y = np.asarray(getattr(scan_points, "points", scan_points), dtype=float).reshape(-1, 2)

    clusters = dbscan(Y, cfg.eps, cfg.min_pts)
    n_clusters = len(clusters.clusters)
    cluster_pts = []
    for members in clusters.clusters:
        pts = Y[list(members)]
        cluster_pts.append(pts[order_by_angle(pts, sensor)])

    # gating per hypothesis; the birth set is global so every hypothesis
    # agrees on which clusters seed newborn intensity
    gatings = []
    all_positions = []
    for h in d.hypotheses:
        pos = _hyp_positions(h)
        all_positions.append(pos)
        gatings.append(gate(Y, clusters, pos, cfg.d_in, cfg.d_out))
    union_pos = (np.concatenate(all_positions) if all_positions
                 else np.empty((0, 2)))
    global_birth = gate(Y, clusters, union_pos, cfg.d_in, cfg.d_out).birth_clusters

    # undetected intensity: missed-detection rate update, weight times qD
    missed_ppp = []
    for comp in d.ppp:
        density, qD = missed_detection_update(comp.density, cfg.pD)
        missed_ppp.append(PoissonComponent(comp.weight * qD, density))

    # new-target cells, shared by all hypotheses; every cluster is
    # new-capable because the cell also carries the clutter explanation
    ppp_evaluators = [RegionEvaluator(c.density.particles.positions,
                                      c.density.particles.E, sensor, cfg.priors)
                      for c in d.ppp]
    new_cells = {}
    for c in range(n_clusters):
        new_cells[c] = _new_cell(cluster_pts[c], d.ppp, ppp_evaluators,
                                 sensor, cfg, rng)

    # per-parent association branching; each child remembers which clusters
    # it explained by a target so unclaimed ones can reseed birth intensity
    children: list[tuple[float, list[BernoulliComponent], frozenset]] = []
    for j, parent in enumerate(d.hypotheses):
        g = gatings[j]
        g = GatingResult(g.candidates, g.distances,
                         tuple(c for c in range(n_clusters)
                               if c not in g.candidates),
                         (), g.d_in)
        n_targets = len(parent.bernoullis)
        log_parent = log(parent.weight) if parent.weight > 0.0 else -inf

        detected = {}
        ev_cache: dict[int, RegionEvaluator] = {}
        for i, c in sorted((i, c) for c, ts in g.candidates.items() for i in ts):
            b = parent.bernoullis[i]
            if i not in ev_cache:
                ev_cache[i] = RegionEvaluator(b.density.particles.positions,
                                              b.density.particles.E, sensor,
                                              cfg.priors)
            if b.r * cfg.pD <= 0.0:
                detected[(i, c)] = (-inf, None)
                continue
            try:
                res = update_with_cluster(b.density, cluster_pts[c], sensor,
                                          cfg.priors, cfg.ess_threshold, rng,
                                          evaluator=ev_cache[i])
            except NumericUnderflowError:
                detected[(i, c)] = (-inf, None)
                continue
            detected[(i, c)] = (log(b.r * cfg.pD) + res.log_l_gamma + res.log_l_xi,
                                BernoulliComponent(1.0, res.density))

        missed = []
        for b in parent.bernoullis:
            density, qD = missed_detection_update(b.density, cfg.pD)
            l_miss = 1.0 + b.r * (qD - 1.0)
            r_new = b.r * qD / l_miss if l_miss > 0.0 else 0.0
            missed.append((log(l_miss) if l_miss > 0.0 else -inf,
                           BernoulliComponent(r_new, density)))

        parent_children = []
        for a in enumerate_associations(g, range(n_targets), cfg.assoc_cap):
            assigned = {t: c for c, t in a.assignment.items()
                        if not isinstance(t, str)}
            logw = log_parent
            bern: list[BernoulliComponent] = []
            explained = set(assigned.values())
            ok = True
            for i in range(n_targets):
                logl, comp = detected[(i, assigned[i])] if i in assigned else missed[i]
                if comp is None:
                    ok = False
                    break
                logw += logl
                bern.append(comp)
            if ok:
                for c in sorted(c for c, t in a.assignment.items()
                                if t == NEW_TARGET):
                    cell = new_cells[c]
                    if cell is None:
                        ok = False
                        break
                    logw += cell[0]
                    if cell[1] is not None:
                        bern.append(cell[1])
                        explained.add(c)
            if ok and np.isfinite(logw):
                parent_children.append((logw, bern, frozenset(explained)))

        if not parent_children:
            # rescue: keep the parent alive with everything missed
            logw = log_parent + sum(l for l, _ in missed)
            parent_children.append((logw if np.isfinite(logw) else log_parent,
                                    [comp for _, comp in missed], frozenset()))
        children.extend(parent_children)

    log_weights = np.array([lw for lw, _, _ in children])
    total = logsumexp(log_weights)
    if np.isfinite(total):
        weights = np.exp(log_weights - total)
    else:
        weights = np.full(len(children), 1.0 / len(children))
    hypotheses = [GlobalHypothesis(float(w), bern)
                  for w, (_, bern, _) in zip(weights, children)]

    # newborn intensity for next scan, at exactly the clusters the winning
    # child wrote off as clutter: anything explained by a target needs no
    # hedge (a duplicate hypothesis would only invite track theft), while a
    # lost track's returns would otherwise stay unexplainable forever once
    # the undetected intensity around them has drained away
    claimed = children[int(np.argmax(weights))][2]
    birth_ppp = []
    for c in sorted(set(range(n_clusters)) - set(claimed)):
        pts = Y[list(clusters.clusters[c])]
        bcfg = _zone_birth_config(cfg, pts.mean(axis=0))
        if c not in global_birth and bcfg is cfg.birth:
            # mid-region recapture: heading unknown, so spread the velocity
            v = cfg.recapture_vel_std ** 2
            bcfg = replace(bcfg, Q_vel=np.diag([v, v]))
        birth_ppp.append(PoissonComponent(
            cfg.birth_weight, init_birth(pts, bcfg, cfg.L, rng)))

    return PmbmDensity(missed_ppp + birth_ppp, hypotheses)


def prune(d: PmbmDensity, cfg: FilterConfig) -> PmbmDensity:
    """Drop negligible components and cap the hypothesis count.

    Poisson components below ppp_prune vanish; hypotheses below hyp_prune
    vanish (at least the heaviest always survives) and the survivors are
    renormalized after capping at hyp_cap; Bernoullis below bernoulli_prune
    vanish from their hypothesis.
    """
    ppp = [c for c in d.ppp if c.weight >= cfg.ppp_prune]

    kept = [h for h in d.hypotheses if h.weight >= cfg.hyp_prune]
    if not kept:
        kept = [max(d.hypotheses, key=lambda h: h.weight)]
    order = np.argsort([-h.weight for h in kept], kind="stable")[:cfg.hyp_cap]
    kept = [kept[i] for i in sorted(order)]
    wsum = sum(h.weight for h in kept)

    hyps = []
    for h in kept:
        bern = [b for b in h.bernoullis if b.r >= cfg.bernoulli_prune]
        hyps.append(GlobalHypothesis(h.weight / wsum, bern))
    return PmbmDensity(ppp, hyps)


def extract_estimates(d: PmbmDensity, r_th: float) -> list[tuple[np.ndarray, np.ndarray]]:
    """States of the confidently-existing targets in the heaviest hypothesis."""
    if not d.hypotheses:
        return []
    best = max(d.hypotheses, key=lambda h: h.weight)  # ties: lowest index wins
    return [extract_state(b.density.particles)
            for b in best.bernoullis if b.r > r_th]
