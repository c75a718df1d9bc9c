"""Experiment families behind the CLI: run, sweep-noise, recon-bench, diag.

Seeding: trial k of a config uses ``trial_seed = mix(TRIAL, master_seed, k)``
for its problem, sensing matrix, sketch hashes and gradient streams. A
noise sweep reuses all of those across W levels and gives entry j its own
channel stream ``mix(SWEEP, trial_seed, j)``, so the W levels differ only
in the channel noise. Outputs are byte-stable; wall-clock times go to a
separate ``timing.json`` so they never perturb the deterministic files.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fedopt, fiht, rng, sensing, sketch, synth
from .config import ExperimentConfig
from .fedopt import ChannelModel, RunConfig, RunTrace
from .transform import BaseTransformKind

CSV_HEADER = ("t", "f", "grad_norm", "sp_g", "sp_p", "delta_nnz",
              "feedback_norm", "recon_residual")
RECON_HEADER = ("lambda", "method", "trial", "rel_error")
IDENTITY_TOL = 1e-8
SP_TAIL = 100


def thread_count() -> int:
    raw = os.environ.get("CSGRAD_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"CSGRAD_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError("CSGRAD_THREADS must be >= 1")
    return n


def _pmap(fn, items):
    items = list(items)
    workers = min(thread_count(), max(len(items), 1))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))  # results come back in input order


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_trace_csv(trace: RunTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in trace.records:
            w.writerow([fmt(r.t), fmt(r.f_value), fmt(r.grad_norm), fmt(r.sp_g), fmt(r.sp_p),
                        fmt(r.delta_nnz), fmt(r.feedback_norm), fmt(r.recon_residual)])


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def trial_seed(master_seed: int, k: int) -> int:
    return rng.mix(rng.TRIAL, master_seed, k)


def _base(cfg: ExperimentConfig) -> BaseTransformKind:
    return BaseTransformKind.DCT if cfg.base_transform == "dct" else BaseTransformKind.WHT


def build_problem(cfg: ExperimentConfig, seed: int) -> synth.SyntheticProblem:
    return synth.make_problem(cfg.d, cfg.n, seed)


def build_phi(cfg: ExperimentConfig, seed: int) -> sensing.SensingMatrix:
    return sensing.generate(_base(cfg), cfg.d, cfg.Q, seed)


def build_sketch(cfg: ExperimentConfig, seed: int) -> sketch.CountSketchParams:
    return sketch.CountSketchParams(cfg.sketch_rows, cfg.sketch_cols, seed, cfg.d)


def uplink_bytes(cfg: ExperimentConfig) -> int:
    """Simulated bytes one device uploads per round (8-byte reals)."""
    if cfg.algorithm == "cs_sgd":
        return cfg.Q * 8
    if cfg.algorithm == "sketch_sgd":
        return cfg.sketch_rows * cfg.sketch_cols * 8
    return cfg.d * 8


def compression_rate(cfg: ExperimentConfig) -> float:
    return cfg.d * 8 / uplink_bytes(cfg)


def run_trial(cfg: ExperimentConfig, k: int, noise_std: float | None = None,
              channel_seed: int | None = None, diagnostic: bool = False,
              corrupt_feedback=None) -> RunTrace:
    seed = trial_seed(cfg.master_seed, k)
    W = cfg.noise_std[0] if noise_std is None else noise_std
    rc = RunConfig(T=cfg.T, K=cfg.K, eta=cfg.eta, channel=ChannelModel(W), seed=seed,
                   diagnostic=diagnostic, channel_seed=channel_seed,
                   corrupt_feedback=corrupt_feedback)
    problem = build_problem(cfg, seed)
    if cfg.algorithm == "cs_sgd":
        return fedopt.run_cs_sgd(problem, build_phi(cfg, seed), rc)
    if cfg.algorithm == "sketch_sgd":
        return fedopt.run_sketch_sgd(problem, build_sketch(cfg, seed), rc)
    return fedopt.run_vanilla_sgd(problem, rc)


def mean_sp_p_tail(trace: RunTrace, tail: int = SP_TAIL) -> float | None:
    vals = [r.sp_p for r in trace.records[-tail:] if r.sp_p is not None]
    return float(np.mean(vals)) if vals else None


@dataclass
class RunSummary:
    final_f: float
    mean_sp_p_last100: float | None
    uplink_bytes: int
    compression_rate: float
    wall_time: float

    def to_json(self) -> dict:
        """Deterministic fields only; wall time is written separately."""
        return {"final_f": self.final_f, "mean_sp_p_last100": self.mean_sp_p_last100,
                "uplink_bytes": self.uplink_bytes, "compression_rate": self.compression_rate}


def summarize(cfg: ExperimentConfig, trace: RunTrace, wall_time: float = 0.0) -> RunSummary:
    return RunSummary(float(trace.f_final), mean_sp_p_tail(trace), uplink_bytes(cfg),
                      compression_rate(cfg), wall_time)


def _config_record(cfg: ExperimentConfig) -> dict:
    d = cfg.as_dict()
    d.pop("output_path")  # keeps summaries comparable across output dirs
    return d


def _timed(fn):
    def inner(arg):
        t0 = time.perf_counter()
        out = fn(arg)
        return out, time.perf_counter() - t0
    return inner


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> dict:
    """Dispatch on ``cfg.command``; returns the summary dict that was written."""
    out = Path(cfg.output_path if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    handler = {"run": _cmd_run, "sweep-noise": _cmd_sweep,
               "recon-bench": _cmd_recon, "diag": _cmd_diag}[cfg.command]
    t0 = time.perf_counter()
    summary, timings = handler(cfg, out)
    write_json({"wall_time_s": time.perf_counter() - t0, "per_task_s": timings},
               out / "timing.json")
    return summary


def _cmd_run(cfg, out):
    results = _pmap(_timed(lambda k: run_trial(cfg, k)), range(cfg.num_trials))
    trials = []
    for k, (trace, secs) in enumerate(results):
        write_trace_csv(trace, out / f"trace_trial{k}.csv")
        rec = summarize(cfg, trace, secs).to_json()
        rec.update(trial=k, seed=trial_seed(cfg.master_seed, k),
                   downlink_bytes=trace.downlink_bytes)
        trials.append(rec)
    summary = {
        "command": "run",
        "config": _config_record(cfg),
        "uplink_bytes": uplink_bytes(cfg),
        "compression_rate": compression_rate(cfg),
        "mean_final_f": float(np.mean([t["final_f"] for t in trials])),
        "trials": trials,
    }
    write_json(summary, out / "summary.json")
    return summary, [secs for _, secs in results]


def _cmd_sweep(cfg, out):
    jobs = [(j, k) for j in range(len(cfg.noise_std)) for k in range(cfg.num_trials)]

    def job(jk):
        j, k = jk
        chan = rng.mix(rng.SWEEP, trial_seed(cfg.master_seed, k), j)
        return run_trial(cfg, k, noise_std=cfg.noise_std[j], channel_seed=chan)

    results = _pmap(_timed(job), jobs)
    entries = []
    for j, W in enumerate(cfg.noise_std):
        finals = []
        for k in range(cfg.num_trials):
            trace = results[j * cfg.num_trials + k][0]
            write_trace_csv(trace, out / f"trace_W{j}_trial{k}.csv")
            finals.append(float(trace.f_final))
        entries.append({"index": j, "noise_std": W, "final_f": finals,
                        "mean_final_f": float(np.mean(finals))})
    summary = {
        "command": "sweep-noise",
        "config": _config_record(cfg),
        "uplink_bytes": uplink_bytes(cfg),
        "compression_rate": compression_rate(cfg),
        "entries": entries,
    }
    write_json(summary, out / "summary.json")
    return summary, [secs for _, secs in results]


def rel_error(g: np.ndarray, g_hat: np.ndarray) -> float | None:
    den = float(np.dot(g, g))
    if den == 0:
        return None
    r = g - g_hat
    return float(np.dot(r, r)) / den


def recon_operators(cfg: ExperimentConfig, li: int, lam: float):
    """The fixed (Phi, sketch params) pair used for every trial at rate lam."""
    seed = rng.mix(rng.RECON, cfg.master_seed, 1, li)
    rows = cfg.sketch_rows if cfg.sketch_rows is not None else 5
    Q = math.ceil(cfg.d / lam)
    cols = math.ceil(cfg.d / (rows * lam))
    return (sensing.generate(_base(cfg), cfg.d, Q, seed),
            sketch.CountSketchParams(rows, cols, seed, cfg.d))


def recon_signal(cfg: ExperimentConfig, k: int) -> np.ndarray:
    nnz = cfg.K if cfg.recon_nnz is None else cfg.recon_nnz
    return synth.make_recon_signal(cfg.d, nnz, cfg.recon_sigma,
                                   rng.generator(rng.RECON, cfg.master_seed, 0, k))


def _cmd_recon(cfg, out):
    ops = [recon_operators(cfg, li, lam) for li, lam in enumerate(cfg.lambdas)]

    def job(k):
        g = recon_signal(cfg, k)
        rows = []
        for (phi, params), lam in zip(ops, cfg.lambdas):
            est = fiht.reconstruct(sensing.apply(phi, g), phi, cfg.K)
            rows.append((lam, "fiht", k, rel_error(g, est.densify())))
            est = sketch.cs_reconstruct(sketch.cs_compress(g, params), cfg.K)
            rows.append((lam, "count_sketch", k, rel_error(g, est.densify())))
        return rows

    results = _pmap(_timed(job), range(cfg.num_trials))
    rows = [r for rs, _ in results for r in rs]
    rows.sort(key=lambda r: (cfg.lambdas.index(r[0]), r[1] != "fiht", r[2]))
    with open(out / "recon.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECON_HEADER)
        for lam, method, k, err in rows:
            w.writerow([fmt(lam), method, k, fmt(err)])

    means = []
    for li, lam in enumerate(cfg.lambdas):
        phi, params = ops[li]
        entry = {"lambda": lam, "Q": phi.Q, "sketch_rows": params.rows,
                 "sketch_cols": params.cols}
        for method in ("fiht", "count_sketch"):
            errs = [e for l2, m, _, e in rows if l2 == lam and m == method and e is not None]
            entry[f"mean_rel_error_{method}"] = float(np.mean(errs)) if errs else None
        means.append(entry)
    summary = {"command": "recon-bench", "config": _config_record(cfg), "entries": means}
    write_json(summary, out / "summary.json")
    return summary, [secs for _, secs in results]


IDENTITIES = ("eps_identity", "z_identity", "shadow_identity", "shadow_identity_noise")


def _cmd_diag(cfg, out, corrupt_feedback=None):
    results = _pmap(_timed(lambda k: run_trial(cfg, k, diagnostic=True,
                                               corrupt_feedback=corrupt_feedback)),
                    range(cfg.num_trials))
    worst = dict.fromkeys(IDENTITIES, 0.0)
    for k, (trace, _) in enumerate(results):
        write_trace_csv(trace, out / f"trace_trial{k}.csv")
        for rec in trace.diagnostics:
            for name in IDENTITIES:
                worst[name] = max(worst[name], getattr(rec, name))
    report = {name: {"max_residual": v, "pass": bool(v <= IDENTITY_TOL)}
              for name, v in worst.items()}
    summary = {"command": "diag", "config": _config_record(cfg), "tolerance": IDENTITY_TOL,
               "identities": report, "all_pass": all(r["pass"] for r in report.values())}
    write_json(summary, out / "diag.json")
    return summary, [secs for _, secs in results]


def run_diag(cfg: ExperimentConfig, out_dir=None, corrupt_feedback=None) -> dict:
    """``diag`` with the feedback-corruption test hook exposed."""
    out = Path(cfg.output_path if out_dir is None else out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary, _ = _cmd_diag(cfg, out, corrupt_feedback)
    return summary


def format_diag(summary: dict) -> str:
    lines = []
    for name in IDENTITIES:
        r = summary["identities"][name]
        lines.append(f"{name:<24} max={r['max_residual']:.3e}  "
                     f"{'PASS' if r['pass'] else 'FAIL'}")
    return "\n".join(lines)
