"""Command-line experiment harness.

Subcommands:
  run       Monte Carlo tracking experiment: simulate, filter, score, report.
  simulate  Generate and export ground truth plus scans for a scenario.
  gospa     Score an estimate CSV against a truth CSV.

`run` writes, into the output directory: gospa_e.csv / gospa_h.csv
(step,mean,stddev over runs), summary.json (deterministic: identical config
and seed give byte-identical bytes), timing.json (wall-clock throughput,
deliberately kept out of summary.json so determinism is checkable), and
optionally per-run track CSVs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field, replace
from multiprocessing import Pool

import numpy as np

from . import rng as rngmod
from .dynamics import MotionNoise
from .errors import ConfigError, EttrackError
from .geometry import extent_decompose, rect_from_state
from .measurement import RegionPriors
from .metrics import gospa
from .particles import BirthConfig
from .pmbm import (
    BirthZone,
    FilterConfig,
    PmbmDensity,
    extract_estimates,
    predict,
    prune,
    update,
)
from .simulator import (
    ScenarioConfig,
    load_scenario,
    simulate_sequence,
    write_scans_csv,
    write_truth_csv,
)

FILTER_SCHEMA = "filter/v1"


@dataclass(frozen=True)
class RunConfig:
    """One experiment invocation."""

    scenario_path: str
    filter_path: str
    runs: int
    master_seed: int
    out_dir: str
    workers: int = 1
    emit_tracks: bool = False

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigError("need at least one run")
        if self.workers < 1:
            raise ConfigError("need at least one worker")


@dataclass
class RunSummary:
    """Aggregated experiment outcome."""

    mean_gospa_e: float
    mean_gospa_h: float
    fps: float
    runs: int
    failed_runs: int
    seed: int
    config_hash: str
    curve_e_mean: np.ndarray
    curve_e_std: np.ndarray
    curve_h_mean: np.ndarray
    curve_h_std: np.ndarray
    filter_seconds: float
    scans_processed: int
    tracks: dict = field(default_factory=dict)


def load_filter_config(path, T: float) -> FilterConfig:
    """Parse a filter/v1 JSON file; T is the scenario's step interval."""
    with open(path) as fh:
        raw = json.load(fh)
    if raw.get("schema") != FILTER_SCHEMA:
        raise ConfigError(f"expected schema {FILTER_SCHEMA!r}, got {raw.get('schema')!r}")
    try:
        if raw.get("uniform_region_priors", False):
            priors = None
        else:
            p = raw["priors"]
            priors = RegionPriors(p["p_vis"], p["p_inv"], p["p_int"])
        b = raw["birth"]
        birth = BirthConfig(
            alpha_b=b["alpha"],
            beta_b=b["beta"],
            Q_pos=np.eye(2) * b["pos_std"] ** 2,
            Q_vel=np.eye(2) * b["vel_std"] ** 2,
            Q_turn=b["turn_var"],
            q_b=b["dof"],
            ebar1=b["ebar"][0],
            ebar2=b["ebar"][1],
            nominal_velocity=np.asarray(b.get("nominal_velocity", [0.0, 0.0]),
                                        dtype=float),
        )
        mo = raw["motion"]
        motion = MotionNoise(mo["sigma_x"], mo["sigma_y"], mo["sigma_omega"], T)
        zones = tuple(
            BirthZone(x=(float(z["x"][0]), float(z["x"][1])),
                      y=(float(z["y"][0]), float(z["y"][1])),
                      velocity=(float(z["velocity"][0]), float(z["velocity"][1])))
            for z in raw.get("birth_zones", ()))
        defaults = FilterConfig(priors=priors, birth=birth, motion=motion)
        return FilterConfig(
            priors=priors, birth=birth, motion=motion, birth_zones=zones,
            **{k: raw.get(k, getattr(defaults, k)) for k in (
                "pD", "pS", "clutter_rate", "surveillance_volume",
                "birth_weight", "extent_dof", "forgetting", "eps", "min_pts",
                "d_in", "d_out", "assoc_cap", "L", "ess_threshold", "r_th",
                "ppp_prune", "hyp_prune", "bernoulli_prune", "hyp_cap",
                "clutter_term_in_new_cells", "recapture_vel_std")})
    except KeyError as missing:
        raise ConfigError(f"filter file is missing {missing}") from None


def load_assumed_sensor_noise(path) -> tuple[float, float] | None:
    """Optional filter-side override of the assumed measurement noise.

    A tracker need not (and often should not) trust the exact noise figures
    of the device: evaluating the likelihood with somewhat wider noise keeps
    the particle population healthy when the returns are very precise.  The
    filter file may carry a "sensor" block with sigma_theta_deg and sigma_r;
    when present those replace the scenario sensor's values inside the
    filter only.  The simulated data is unaffected.
    """
    with open(path) as fh:
        raw = json.load(fh)
    block = raw.get("sensor")
    if block is None:
        return None
    try:
        return float(block["sigma_theta_deg"]), float(block["sigma_r"])
    except KeyError as missing:
        raise ConfigError(f"filter sensor block is missing {missing}") from None


def config_hash(scenario_path, filter_path) -> str:
    """sha256 over the canonicalized JSON of both config files."""
    blob = []
    for path in (scenario_path, filter_path):
        with open(path) as fh:
            blob.append(json.dumps(json.load(fh), sort_keys=True,
                                   separators=(",", ":")))
    return hashlib.sha256("\n".join(blob).encode()).hexdigest()


def _truth_vertices(entry):
    dec = extent_decompose(entry.E)
    return rect_from_state(entry.m[[0, 2]], dec).vertices


def _estimate_vertices(m_hat, E_hat):
    dec = extent_decompose(E_hat)
    return rect_from_state(m_hat[[0, 2]], dec).vertices


def run_one(scenario: ScenarioConfig, fcfg: FilterConfig, seed: int,
            emit_tracks: bool = False,
            assumed_noise: tuple[float, float] | None = None) -> dict:
    """One seeded Monte Carlo run: simulate, filter every scan, score."""
    sim_rng = rngmod.generator(rngmod.substream(seed, 0))
    filt_rng = rngmod.generator(rngmod.substream(seed, 1))

    truth, scans = simulate_sequence(scenario, sim_rng)

    filter_sensor = scenario.sensor
    if assumed_noise is not None:
        filter_sensor = replace(filter_sensor,
                                sigma_theta=float(np.deg2rad(assumed_noise[0])),
                                sigma_r=assumed_noise[1])

    density = PmbmDensity.empty()
    g_e = np.empty(scenario.n_steps)
    g_h = np.empty(scenario.n_steps)
    track_rows = []
    filter_time = 0.0
    for k, scan in enumerate(scans):
        t0 = time.perf_counter()
        density = predict(density, fcfg, filt_rng)
        density = update(density, scan.points, filter_sensor, fcfg, filt_rng)
        density = prune(density, fcfg)
        estimates = extract_estimates(density, fcfg.r_th)
        filter_time += time.perf_counter() - t0

        truth_entries = truth.steps[k]
        est_centers = [m[[0, 2]] for m, _ in estimates]
        tru_centers = [e.m[[0, 2]] for e in truth_entries]
        g_e[k] = gospa(est_centers, tru_centers, c=5.0, p=1.0).total
        est_verts = [_estimate_vertices(m, E) for m, E in estimates]
        tru_verts = [_truth_vertices(e) for e in truth_entries]
        g_h[k] = gospa(est_verts, tru_verts, c=5.0, p=1.0,
                       base="hausdorff").total

        if emit_tracks:
            for slot, (m, E) in enumerate(estimates):
                dec = extent_decompose(E)
                heading = float(np.arctan2(dec.v1[1], dec.v1[0]))
                track_rows.append((k, slot, m[0], m[2], dec.e1, dec.e2, heading))

    return {"gospa_e": g_e, "gospa_h": g_h, "filter_time": filter_time,
            "scans": len(scans), "tracks": track_rows}


def _worker(args):
    scenario, fcfg, seed, emit_tracks, noise, run_idx = args
    try:
        return run_idx, run_one(scenario, fcfg, seed, emit_tracks, noise), None
    except EttrackError as exc:  # deliberate: config/numeric model failures
        return run_idx, None, f"{type(exc).__name__}: {exc}"


def run_experiment(cfg: RunConfig) -> RunSummary:
    """Execute all runs and aggregate their GOSPA curves."""
    scenario = load_scenario(cfg.scenario_path)
    fcfg = load_filter_config(cfg.filter_path, scenario.T)
    noise = load_assumed_sensor_noise(cfg.filter_path)
    digest = config_hash(cfg.scenario_path, cfg.filter_path)
    seeds = rngmod.derive_seeds(cfg.master_seed, cfg.runs)

    jobs = [(scenario, fcfg, seeds[r], cfg.emit_tracks, noise, r)
            for r in range(cfg.runs)]
    if cfg.workers > 1:
        with Pool(cfg.workers) as pool:
            outcomes = pool.map(_worker, jobs)
    else:
        outcomes = [_worker(j) for j in jobs]

    results = {}
    errors = {}
    for run_idx, res, err in outcomes:
        if err is None:
            results[run_idx] = res
        else:
            errors[run_idx] = err
    for run_idx in sorted(errors):
        print(f"run {run_idx} failed: {errors[run_idx]}", file=sys.stderr)
    if not results:
        raise ConfigError("every run failed")

    order = sorted(results)
    e_curves = np.stack([results[r]["gospa_e"] for r in order])
    h_curves = np.stack([results[r]["gospa_h"] for r in order])
    filter_seconds = sum(results[r]["filter_time"] for r in order)
    scans = sum(results[r]["scans"] for r in order)

    ddof = 1 if len(order) > 1 else 0
    summary = RunSummary(
        mean_gospa_e=float(e_curves.mean()),
        mean_gospa_h=float(h_curves.mean()),
        fps=scans / filter_seconds if filter_seconds > 0 else float("inf"),
        runs=cfg.runs,
        failed_runs=len(errors),
        seed=cfg.master_seed,
        config_hash=digest,
        curve_e_mean=e_curves.mean(axis=0),
        curve_e_std=e_curves.std(axis=0, ddof=ddof),
        curve_h_mean=h_curves.mean(axis=0),
        curve_h_std=h_curves.std(axis=0, ddof=ddof),
        filter_seconds=filter_seconds,
        scans_processed=scans,
        tracks={r: results[r]["tracks"] for r in order} if cfg.emit_tracks else {},
    )
    return summary


def _write_curve(path, mean, std):
    with open(path, "w") as fh:
        fh.write("step,mean,stddev\n")
        for k in range(len(mean)):
            fh.write(f"{k},{mean[k]:.9f},{std[k]:.9f}\n")


def emit_outputs(summary: RunSummary, out_dir) -> None:
    """Write curve CSVs, the deterministic summary, timing, and tracks."""
    os.makedirs(out_dir, exist_ok=True)
    _write_curve(os.path.join(out_dir, "gospa_e.csv"),
                 summary.curve_e_mean, summary.curve_e_std)
    _write_curve(os.path.join(out_dir, "gospa_h.csv"),
                 summary.curve_h_mean, summary.curve_h_std)

    payload = {
        "mean_gospa_e": summary.mean_gospa_e,
        "mean_gospa_h": summary.mean_gospa_h,
        "runs": summary.runs,
        "failed_runs": summary.failed_runs,
        "seed": summary.seed,
        "config_hash": summary.config_hash,
        "seed_derivation": "splitmix64(master) per run; substreams 0=sim, 1=filter",
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")

    timing = {
        "fps": summary.fps,
        "filter_seconds": summary.filter_seconds,
        "scans_processed": summary.scans_processed,
    }
    with open(os.path.join(out_dir, "timing.json"), "w") as fh:
        json.dump(timing, fh, indent=2, sort_keys=True)
        fh.write("\n")

    for run_idx, rows in summary.tracks.items():
        path = os.path.join(out_dir, f"tracks_run{run_idx}.csv")
        with open(path, "w") as fh:
            fh.write("step,id,x,y,e1,e2,heading\n")
            for step, slot, x, y, e1, e2, heading in rows:
                fh.write(f"{step},{slot},{x:.6f},{y:.6f},"
                         f"{e1:.6f},{e2:.6f},{heading:.6f}\n")


def _read_tracks_csv(path):
    """Track rows grouped per step: {step: [(x, y, e1, e2, heading), ...]}."""
    out: dict[int, list] = {}
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if header[:2] != ["step", "id"]:
            raise ConfigError(f"{path}: expected a step,id,... track CSV")
        for line in fh:
            cells = line.strip().split(",")
            if not cells or cells == [""]:
                continue
            step = int(cells[0])
            out.setdefault(step, []).append(tuple(float(v) for v in cells[2:7]))
    return out


def _rect_vertices(x, y, e1, e2, heading):
    c, s = np.cos(heading), np.sin(heading)
    R = np.array([[c, -s], [s, c]])
    E = R @ np.diag([e1, e2]) @ R.T
    dec = extent_decompose(E)
    return rect_from_state(np.array([x, y]), dec).vertices


def cmd_run(args) -> int:
    workers = int(os.environ.get("ETTRACK_WORKERS", args.workers))
    cfg = RunConfig(args.scenario, args.filter, args.runs, args.seed,
                    args.out, workers, args.tracks)
    summary = run_experiment(cfg)
    emit_outputs(summary, cfg.out_dir)
    print(f"mean GOSPA-E {summary.mean_gospa_e:.4f}  "
          f"mean GOSPA-H {summary.mean_gospa_h:.4f}  "
          f"fps {summary.fps:.1f}  "
          f"({summary.runs - summary.failed_runs}/{summary.runs} runs ok)")
    if summary.failed_runs > 0.1 * summary.runs:
        return 2
    return 0


def cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    run_rng = rngmod.generator(rngmod.substream(args.seed, 0))
    truth, scans = simulate_sequence(scenario, run_rng)
    os.makedirs(args.out, exist_ok=True)
    write_truth_csv(truth, os.path.join(args.out, "truth.csv"))
    write_scans_csv(scans, os.path.join(args.out, "scans.csv"))
    n_pts = sum(len(s.points) for s in scans)
    print(f"wrote {len(scans)} scans ({n_pts} points) to {args.out}")
    return 0


def cmd_gospa(args) -> int:
    est = _read_tracks_csv(args.est)
    tru = _read_tracks_csv(args.truth)
    steps = sorted(set(est) | set(tru))
    totals = []
    print("step,total,localization,missed,false")
    for k in steps:
        if args.base == "euclidean":
            e = [np.array(row[:2]) for row in est.get(k, [])]
            t = [np.array(row[:2]) for row in tru.get(k, [])]
        else:
            e = [_rect_vertices(*row) for row in est.get(k, [])]
            t = [_rect_vertices(*row) for row in tru.get(k, [])]
        b = gospa(e, t, c=args.c, p=args.p, base=args.base)
        totals.append(b.total)
        print(f"{k},{b.total:.6f},{b.localization:.6f},"
              f"{b.missed_cost:.6f},{b.false_cost:.6f}")
    if totals:
        print(f"mean,{np.mean(totals):.6f},,,")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ettrack",
        description="Extended-target tracking experiments on simulated LiDAR scans.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="Monte Carlo tracking experiment")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--filter", required=True)
    p_run.add_argument("--runs", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--tracks", action="store_true",
                       help="also write tracks_run<k>.csv per run")
    p_run.set_defaults(func=cmd_run)

    p_sim = sub.add_parser("simulate", help="write truth and scans for a scenario")
    p_sim.add_argument("--scenario", required=True)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_g = sub.add_parser("gospa", help="score an estimate CSV against a truth CSV")
    p_g.add_argument("--est", required=True)
    p_g.add_argument("--truth", required=True)
    p_g.add_argument("--c", type=float, default=5.0)
    p_g.add_argument("--p", type=float, default=1.0)
    p_g.add_argument("--base", choices=("euclidean", "hausdorff"),
                     default="euclidean")
    p_g.set_defaults(func=cmd_gospa)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EttrackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
