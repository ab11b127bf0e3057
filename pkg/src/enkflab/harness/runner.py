"""Scenario execution: replicate dispatch, CSV series and a JSON summary."""
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import diagnostics as dg
from ..errors import ConfigError
from ..models import EnergyFunctional
from ..seeding import Streams

CSV_COLUMNS = ("step", "signal_energy", "ensemble_energy", "observable_energy", "diverged", "distance")
MARGIN_TOL = -1e-9


@dataclass
class ScenarioResult:
    name: str
    summary: dict
    csv_paths: list = field(default_factory=list)
    passed: bool = True


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(row.get(c)) for c in CSV_COLUMNS) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _clean(obj):
    """Replace non-finite floats so the summary stays valid JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)) and not math.isfinite(float(obj)):
        return None
    return obj


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(data), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


# -- replicate workers (top level so they pickle) ----------------------------

def _center(cfg, d):
    shift = cfg.criterion.get("shift")
    if shift is None:
        return None
    c = np.asarray(shift, dtype=float).reshape(-1)
    if c.size != d:
        raise ConfigError(f"criterion.shift needs {d} entries, got {c.size}")
    return c


def _init_state(cfg, model, streams):
    init = cfg.init
    return dg.initial_ensemble(
        model, cfg.K, streams,
        spread=init.get("spread", 1.0), signal_scale=init.get("signal_scale", 1.0),
    )


def _boundedness_replicate(args):
    cfg, rep, M = args
    model = cfg.build_model()
    op = cfg.build_observation(model.dim)
    streams = Streams(cfg.seed, cfg.name, rep)
    U0, V0 = _init_state(cfg, model, streams)
    center = _center(cfg, model.dim)
    E0 = dg.lyapunov_functional(op.H, V0, U0, M, center)
    rec = dg.boundedness_trial(cfg.kind, model, op, cfg.K, cfg.horizon, streams, cfg.inflation,
                               M=M, init=(U0, V0), center=center)
    return rep, rec, E0


def _memory_replicate(args):
    cfg, rep = args
    model = cfg.build_model()
    op = cfg.build_observation(model.dim)
    streams = Streams(cfg.seed, cfg.name, rep)
    U0, Va = _init_state(cfg, model, streams)
    mem = cfg.memory
    if mem.get("identical", 0.0):
        Vb = Va.copy()
    else:
        rng = streams.rng("init", member=1)
        Vb = U0 + mem.get("offset", 10.0) + mem.get("spread_b", cfg.init.get("spread", 1.0)) * \
            rng.standard_normal(Va.shape)
    rec = dg.memory_loss_trial(cfg.kind, model, op, cfg.K, cfg.horizon, streams, (U0, Va), (U0, Vb),
                               cfg.inflation, floor_ratio=mem.get("floor_ratio", 1e-9))
    return rep, rec


def _dispatch(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, tasks))


# -- scenario modes -----------------------------------------------------------

def estimate_observable_criterion(cfg, model, op):
    c = cfg.criterion
    streams = Streams(cfg.seed, cfg.name, 0)
    states = dg.sample_states(model, streams.rng("criterion", step=0), n_cloud=c["n_cloud"],
                              n_shell=c["n_shell"], spinup=c["spinup"], shell_factor=c["shell_factor"])
    center = _center(cfg, model.dim)
    energy = EnergyFunctional(op.H.T @ op.H, np.zeros(model.dim) if center is None else center)
    return dg.estimate_criterion(model, energy, states, c["draws"], streams.rng("criterion", step=1))


def run_boundedness(cfg, jobs=1):
    model = cfg.build_model()
    op = cfg.build_observation(model.dim)
    summary = {"scenario": cfg.name, "mode": cfg.mode, "kind": cfg.kind, "K": cfg.K,
               "horizon": cfg.horizon, "seed": cfg.seed, "expect_bounded": cfg.expect_bounded,
               "inflation": {"kind": cfg.inflation.kind, "lambda": cfg.inflation.lam}}
    est, consts, consts_hi = None, None, None
    M = cfg.criterion.get("M")
    if cfg.criterion["enabled"]:
        est = estimate_observable_criterion(cfg, model, op)
        summary["criterion"] = est.as_dict()
        if est.admissible and est.beta < 1.0:
            consts = dg.lyapunov_constants(cfg.kind, est.beta, est.K, cfg.K, op.q, M)
            M = consts.M
            b_lo = est.beta - 3.0 * est.beta_halfwidth
            if b_lo > 0.0:
                consts_hi = dg.lyapunov_constants(cfg.kind, b_lo, est.K + 3.0 * est.K_halfwidth,
                                                  cfg.K, op.q, M)
            summary["lyapunov"] = {"M": consts.M, "beta": consts.beta, "K": consts.K}
    M = 1.0 if M is None else M
    summary["M"] = M

    results = _dispatch(_boundedness_replicate, [(cfg, r, M) for r in range(cfg.replicates)], jobs)
    out_dir = Path(cfg.output_dir) / cfg.name
    reps, paths = [], []
    ok = True
    for rep, rec, E0 in sorted(results, key=lambda t: t[0]):
        n = rec.ensemble_energy.size
        rows = [{"step": i + 1, "signal_energy": rec.signal_energy[i], "ensemble_energy": rec.ensemble_energy[i],
                 "observable_energy": rec.observable_energy[i], "diverged": False} for i in range(n)]
        if rec.diverged:
            rows.append({"step": n + 1, "diverged": True})
        paths.append(write_csv(out_dir / f"rep{rep:03d}.csv", rows))
        tail = rec.ensemble_energy[n // 2:] if n else rec.ensemble_energy
        info = {"replicate": rep, "diverged": rec.diverged, "steps": n, "E0": E0,
                "tail_mean": float(tail.mean()) if tail.size else None,
                "running_max": float(rec.running_max[-1]) if n else None,
                "worst_margin": rec.worst_margin}
        if consts_hi is not None and n:
            ceil = max(float(dg.gronwall_ceiling(consts_hi, E0, n // 2)),
                       float(dg.gronwall_ceiling(consts_hi, E0, n)))
            info["ceiling"] = ceil
            info["below_ceiling"] = bool(info["tail_mean"] <= ceil)
        reps.append(info)
        if cfg.expect_bounded:
            ok &= not rec.diverged
            ok &= info.get("below_ceiling", True)
            if rec.worst_margin is not None:
                ok &= rec.worst_margin >= MARGIN_TOL
    margins = [r["worst_margin"] for r in reps if r["worst_margin"] is not None]
    summary["replicates"] = reps
    summary["diverged_count"] = sum(r["diverged"] for r in reps)
    summary["worst_contraction_margin"] = min(margins) if margins else None
    if cfg.expect_bounded and cfg.criterion["enabled"] and consts_hi is None:
        ok = False
    summary["passed"] = bool(ok)
    write_json(out_dir / "summary.json", summary)
    return ScenarioResult(cfg.name, summary, paths, bool(ok))


def run_memory_loss(cfg, jobs=1):
    results = _dispatch(_memory_replicate, [(cfg, r) for r in range(cfg.replicates)], jobs)
    out_dir = Path(cfg.output_dir) / cfg.name
    pairs, paths = [], []
    for rep, rec in sorted(results, key=lambda t: t[0]):
        rows = [{"step": i + 1, "diverged": False, "distance": d} for i, d in enumerate(rec.distance)]
        if rec.diverged:
            rows.append({"step": len(rows) + 1, "diverged": True})
        paths.append(write_csv(out_dir / f"rep{rep:03d}.csv", rows))
        pairs.append({"replicate": rep, "gamma": rec.gamma, "r_squared": rec.r_squared,
                      "window": rec.window, "diverged": rec.diverged, "tv_final": rec.tv_final,
                      "max_distance": float(rec.distance.max()) if rec.distance.size else None})
    gammas = np.array([p["gamma"] for p in pairs], dtype=float)
    r2s = np.array([p["r_squared"] for p in pairs], dtype=float)
    identical = bool(cfg.memory.get("identical", 0.0))
    summary = {"scenario": cfg.name, "mode": cfg.mode, "kind": cfg.kind, "K": cfg.K,
               "horizon": cfg.horizon, "seed": cfg.seed, "identical": identical, "pairs": pairs,
               "median_gamma": float(np.nanmedian(gammas)) if np.any(np.isfinite(gammas)) else None,
               "median_r_squared": float(np.nanmedian(r2s)) if np.any(np.isfinite(r2s)) else None}
    ok = not any(p["diverged"] for p in pairs)
    if cfg.expect_bounded:
        if identical:
            ok &= all(p["max_distance"] == 0.0 for p in pairs)
        else:
            ok &= summary["median_gamma"] is not None and summary["median_gamma"] < 1.0
            ok &= summary["median_r_squared"] is not None and summary["median_r_squared"] > 0.8
    summary["passed"] = bool(ok)
    write_json(out_dir / "summary.json", summary)
    return ScenarioResult(cfg.name, summary, paths, bool(ok))


def run_scenario(cfg, jobs=1):
    if cfg.mode == "memory-loss":
        return run_memory_loss(cfg, jobs)
    return run_boundedness(cfg, jobs)
