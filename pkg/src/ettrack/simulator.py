"""Ground-truth generation and synthetic LiDAR scans.

Vehicles follow piecewise constant-turn trajectories through waypoints: each
waypoint-to-waypoint leg is either a straight run or a circular arc entered
tangentially at the current heading, so position, heading, and turn rate are
available in closed form at any time.  Scans are produced by casting one ray
per beam angle against every vehicle rectangle and keeping the nearest hit,
then perturbing each hit in polar coordinates; clutter is a Poisson number
of uniform points over the surveillance region.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import atan2, cos, pi, sin

import numpy as np

from .errors import ConfigError
from .geometry import decompose_batch, extent_decompose, vertices_batch
from .measurement import SensorModel

SCHEMA = "scenario/v1"

#: legs demanding a heading change beyond this are rejected as unreachable
_MAX_TURN = 8.0 * pi / 9.0


@dataclass(frozen=True)
class VehicleConfig:
    """One vehicle: lifetime, speed, route, and rectangle half-extents."""

    appear: float
    disappear: float
    speed: float
    waypoints: tuple[tuple[float, float], ...]
    half_extents: tuple[float, float]
    heading: float | None = None

    def __post_init__(self):
        if not self.appear < self.disappear:
            raise ConfigError("vehicle must appear before it disappears")
        if self.speed < 0.0:
            raise ConfigError("speed must be non-negative")
        if len(self.waypoints) < 1:
            raise ConfigError("at least one waypoint required")
        e1, e2 = self.half_extents
        if not e1 >= e2 > 0.0:
            raise ConfigError("half-extents must satisfy e1 >= e2 > 0")
        if (self.speed == 0.0 or len(self.waypoints) == 1) and self.heading is None:
            raise ConfigError("stationary vehicle needs an explicit heading")


@dataclass(frozen=True)
class ScenarioConfig:
    """Scene description: timing, sensor, region, clutter, vehicles."""

    duration: float
    sample_rate: float
    sensor: SensorModel
    region: tuple[tuple[float, float], tuple[float, float]]
    clutter_rate: float
    vehicles: tuple[VehicleConfig, ...]
    occlusion: bool = True

    def __post_init__(self):
        if self.duration <= 0.0 or self.sample_rate <= 0.0:
            raise ConfigError("duration and sample rate must be positive")
        (x0, x1), (y0, y1) = self.region
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("region must be non-degenerate")
        if self.clutter_rate < 0.0:
            raise ConfigError("clutter rate must be non-negative")

    @property
    def n_steps(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def T(self) -> float:
        return 1.0 / self.sample_rate


@dataclass(frozen=True)
class TruthEntry:
    """One target's true state at one step."""

    target_id: int
    m: np.ndarray        # [x, vx, y, vy, omega]
    E: np.ndarray        # extent matrix, eigenvalues = half-extents
    heading: float


@dataclass(frozen=True)
class GroundTruth:
    """Per-step tuples of TruthEntry."""

    steps: tuple[tuple[TruthEntry, ...], ...]
    T: float


@dataclass(frozen=True)
class Scan:
    """Measurements of one step; provenance is diagnostic only (-1 = clutter)."""

    step: int
    points: np.ndarray
    provenance: np.ndarray


def _wrap(a: float) -> float:
    return (a + pi) % (2.0 * pi) - pi


def _build_segments(v: VehicleConfig):
    """Closed-form trajectory pieces: (start time, duration, pos, heading, omega).

    Returns (segments, end position, end heading).  A leg whose chord is not
    aligned with the entry heading becomes a circular arc turning by twice
    the chord-heading mismatch, which is the unique constant-turn arc joining
    the two points tangentially.
    """
    wps = [np.asarray(w, dtype=float) for w in v.waypoints]
    if v.speed == 0.0 or len(wps) == 1:
        return [], wps[0], float(v.heading)

    pos = wps[0]
    if v.heading is not None:
        h = float(v.heading)
    else:
        first = wps[1] - wps[0]
        h = atan2(first[1], first[0])

    segments = []
    t0 = 0.0
    for w in wps[1:]:
        chord = w - pos
        dist = float(np.hypot(*chord))
        if dist < 1e-9:
            raise ConfigError("coincident consecutive waypoints")
        delta = _wrap(atan2(chord[1], chord[0]) - h)
        if abs(delta) >= _MAX_TURN:
            raise ConfigError(
                f"leg to {tuple(w)} needs a {np.degrees(2 * delta):.0f} degree turn")
        if abs(delta) < 1e-9:
            dur = dist / v.speed
            segments.append((t0, dur, pos, h, 0.0))
        else:
            radius = dist / (2.0 * abs(sin(delta)))
            omega = np.sign(delta) * v.speed / radius
            dur = dist * abs(delta) / abs(sin(delta)) / v.speed
            segments.append((t0, dur, pos, h, float(omega)))
            h = _wrap(h + 2.0 * delta)
        pos = w
        t0 += dur
    return segments, pos, h


def _state_at(segments, end_pos, end_heading, speed, tau):
    """(position, heading, omega) along the piecewise trajectory at time tau."""
    if not segments:
        return end_pos.copy(), end_heading, 0.0
    for t0, dur, p, h, om in segments:
        if tau < t0 + dur:
            dt = tau - t0
            if om == 0.0:
                return p + speed * dt * np.array([cos(h), sin(h)]), h, 0.0
            psi = h + om * dt
            pos = p + (speed / om) * np.array([sin(psi) - sin(h),
                                               cos(h) - cos(psi)])
            return pos, psi, om
    t_end = segments[-1][0] + segments[-1][1]
    dt = tau - t_end
    return (end_pos + speed * dt * np.array([cos(end_heading), sin(end_heading)]),
            end_heading, 0.0)


def _rot(h: float) -> np.ndarray:
    return np.array([[cos(h), -sin(h)], [sin(h), cos(h)]])


def generate_ground_truth(cfg: ScenarioConfig) -> GroundTruth:
    """Sample every vehicle's true state on the scan time grid."""
    tracks = [(_build_segments(v), v) for v in cfg.vehicles]
    steps = []
    for k in range(cfg.n_steps):
        t = k * cfg.T
        entries = []
        for tid, ((segments, end_pos, end_h), v) in enumerate(tracks):
            if not (v.appear <= t < v.disappear):
                continue
            pos, psi, om = _state_at(segments, end_pos, end_h, v.speed,
                                     t - v.appear)
            vel = v.speed * np.array([cos(psi), sin(psi)])
            R = _rot(psi)
            E = R @ np.diag(v.half_extents) @ R.T
            m = np.array([pos[0], vel[0], pos[1], vel[1], om])
            entries.append(TruthEntry(tid, m, E, float(_wrap(psi))))
        steps.append(tuple(entries))
    return GroundTruth(tuple(steps), cfg.T)


def _target_edges(entries) -> np.ndarray:
    """Stacked edge segments (4 per target) as (K, 2 endpoints, 2)."""
    centers = np.array([e.m[[0, 2]] for e in entries])
    extents = np.array([e.E for e in entries])
    e1, e2, v1, v2 = decompose_batch(extents)
    verts = vertices_batch(centers, e1, e2, v1, v2)  # (n,4,2)
    starts = verts.reshape(-1, 2)
    ends = np.roll(verts, -1, axis=1).reshape(-1, 2)
    return np.stack([starts, ends], axis=1)


def simulate_scan(entries, sensor: SensorModel, rng: np.random.Generator,
                  step: int = 0, occlusion: bool = True) -> Scan:
    """Target-originated returns for one step (no clutter).

    One ray per beam angle; each ray keeps its nearest rectangle-edge hit
    (per target when occlusion is off), and each hit is perturbed by the
    sensor's polar noise.
    """
    if not entries:
        return Scan(step, np.empty((0, 2)), np.empty(0, dtype=int))
    edges = _target_edges(entries)
    p, q = edges[:, 0, :], edges[:, 1, :]
    dvec = q - p
    o = sensor.position
    pmo = p - o

    B = int(round(2.0 * pi / sensor.angular_resolution))
    ang = -pi + np.arange(B) * sensor.angular_resolution
    u = np.stack([np.cos(ang), np.sin(ang)], axis=1)

    denom = np.outer(u[:, 0], dvec[:, 1]) - np.outer(u[:, 1], dvec[:, 0])
    t_num = pmo[:, 0] * dvec[:, 1] - pmo[:, 1] * dvec[:, 0]
    s_num = np.outer(u[:, 1], pmo[:, 0]) - np.outer(u[:, 0], pmo[:, 1])
    with np.errstate(divide="ignore", invalid="ignore"):
        t = t_num[None, :] / denom
        s = s_num / denom
    valid = (np.abs(denom) > 1e-12) & (t > 1e-9) & (s >= 0.0) & (s <= 1.0)
    ranges = np.where(valid, t, np.inf).reshape(B, len(entries), 4).min(axis=2)

    if occlusion:
        nearest = ranges.argmin(axis=1)
        rng_sel = ranges[np.arange(B), nearest]
        hit = np.isfinite(rng_sel)
        beam_ang = ang[hit]
        beam_rng = rng_sel[hit]
        prov = np.array([entries[i].target_id for i in nearest[hit]], dtype=int)
    else:
        hit = np.isfinite(ranges)
        beams, tgt = np.nonzero(hit)
        beam_ang = ang[beams]
        beam_rng = ranges[beams, tgt]
        prov = np.array([entries[i].target_id for i in tgt], dtype=int)

    n = beam_ang.size
    theta = beam_ang + rng.normal(0.0, sensor.sigma_theta, n)
    r = beam_rng + rng.normal(0.0, sensor.sigma_r, n)
    pts = o + np.stack([r * np.cos(theta), r * np.sin(theta)], axis=1)
    return Scan(step, pts, prov)


def simulate_clutter(cfg: ScenarioConfig, rng: np.random.Generator) -> np.ndarray:
    """Poisson-many uniform clutter points over the region."""
    n = rng.poisson(cfg.clutter_rate)
    (x0, x1), (y0, y1) = cfg.region
    return rng.uniform([x0, y0], [x1, y1], size=(n, 2))


def simulate_sequence(cfg: ScenarioConfig, rng: np.random.Generator
                      ) -> tuple[GroundTruth, list[Scan]]:
    """Ground truth plus full scans (target returns followed by clutter)."""
    truth = generate_ground_truth(cfg)
    scans = []
    for k, entries in enumerate(truth.steps):
        target_scan = simulate_scan(entries, cfg.sensor, rng, step=k,
                                    occlusion=cfg.occlusion)
        clutter = simulate_clutter(cfg, rng)
        pts = np.concatenate([target_scan.points, clutter])
        prov = np.concatenate([target_scan.provenance,
                               np.full(len(clutter), -1, dtype=int)])
        scans.append(Scan(k, pts, prov))
    return truth, scans


def load_scenario(path) -> ScenarioConfig:
    """Parse a scenario/v1 JSON file."""
    with open(path) as fh:
        raw = json.load(fh)
    if raw.get("schema") != SCHEMA:
        raise ConfigError(f"expected schema {SCHEMA!r}, got {raw.get('schema')!r}")
    try:
        s = raw["sensor"]
        sensor = SensorModel(
            position=np.asarray(s["position"], dtype=float),
            sigma_theta=np.radians(s["sigma_theta_deg"]),
            sigma_r=s["sigma_r"],
            angular_resolution=np.radians(s["angular_resolution_deg"]),
        )
        vehicles = tuple(
            VehicleConfig(
                appear=v["appear"],
                disappear=v["disappear"],
                speed=v["speed"],
                waypoints=tuple((float(x), float(y)) for x, y in v["waypoints"]),
                half_extents=(float(v["half_extents"][0]),
                              float(v["half_extents"][1])),
                heading=(np.radians(v["heading_deg"])
                         if "heading_deg" in v else None),
            )
            for v in raw["vehicles"]
        )
        return ScenarioConfig(
            duration=float(raw["duration"]),
            sample_rate=float(raw["sample_rate"]),
            sensor=sensor,
            region=((float(raw["region"]["x"][0]), float(raw["region"]["x"][1])),
                    (float(raw["region"]["y"][0]), float(raw["region"]["y"][1]))),
            clutter_rate=float(raw["clutter_rate"]),
            vehicles=vehicles,
            occlusion=bool(raw.get("occlusion", True)),
        )
    except KeyError as missing:
        raise ConfigError(f"scenario file is missing {missing}") from None


def write_truth_csv(truth: GroundTruth, path) -> None:
    """step,id,x,y,e1,e2,heading rows for every live target."""
    with open(path, "w") as fh:
        fh.write("step,id,x,y,e1,e2,heading\n")
        for k, entries in enumerate(truth.steps):
            for e in entries:
                dec = extent_decompose(e.E)
                fh.write(f"{k},{e.target_id},{e.m[0]:.6f},{e.m[2]:.6f},"
                         f"{dec.e1:.6f},{dec.e2:.6f},{e.heading:.6f}\n")


def write_scans_csv(scans, path) -> None:
    """step,x,y,provenance rows for every measurement."""
    with open(path, "w") as fh:
        fh.write("step,x,y,provenance\n")
        for scan in scans:
            for (x, y), pv in zip(scan.points, scan.provenance):
                fh.write(f"{scan.step},{x:.6f},{y:.6f},{int(pv)}\n")
