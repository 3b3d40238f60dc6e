"""Command line entry point (``genctrl``)."""

import argparse
import json
import logging
import math
import os
import sys

import numpy as np

from . import harness
from .config import ConfigError, load_config
from .ddpg import evaluate_policy, load_checkpoint, save_checkpoint, train
from .fisher import evaluate
from .grape import grape_optimize
from .shift import BoundViolationError, decompose_shift, shift_pulse

log = logging.getLogger("genctrl")


def _json_ready(obj):
    if isinstance(obj, dict):
        return {k: _json_ready(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_ready(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_ready(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_json_ready(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _pulse(args, cfg, scenario):
    path = args.pulse or cfg.artifact("pulse")
    return scenario.zero_pulse() if path is None else harness.read_pulse_csv(path, scenario)


def _wall(args, seconds):
    return seconds if args.timing else math.nan


def cmd_simulate(args, cfg):
    scen = cfg.scenario
    ev = evaluate(scen, _pulse(args, cfg, scen), series=False)
    write_json(os.path.join(args.out, "simulate.json"), {
        "scenario": scen.to_dict(),
        "cr_bound": ev.cr_bound,
        "f0": ev.f0,
        "cfim": ev.cfim,
        "probabilities": ev.probs,
    })
    print(f"tr F^-1 = {ev.cr_bound:.6g}  f0 = {ev.f0:.6g}")


def cmd_grape(args, cfg):
    scen = cfg.scenario
    gcfg = cfg.grape_config()
    if cfg.grape_init == "random":
        init = scen.random_pulse(np.random.default_rng(cfg.seed))
    else:
        init = scen.zero_pulse()
    rep = grape_optimize(scen, init, gcfg)
    harness.write_grape_history(os.path.join(args.out, "grape_history.csv"), rep)
    harness.write_pulse_csv(os.path.join(args.out, "grape_pulse.csv"), scen, rep.best_pulse)
    write_json(os.path.join(args.out, "grape_report.json"), {
        "scenario": scen.to_dict(),
        "method": gcfg.method,
        "learning_rate": gcfg.learning_rate,
        "iterations": gcfg.iterations,
        "init": cfg.grape_init,
        "seed": cfg.seed,
        "best_f0": rep.best_f0,
        "best_cr_bound": rep.best_cr_bound,
        "wall_time_s": _wall(args, rep.wall_time),
    })
    print(f"best tr F^-1 = {rep.best_cr_bound:.6g}")


def cmd_train_rl(args, cfg):
    scen = cfg.scenario
    tcfg = cfg.train_config()

    def progress(ep, r, bound):
        if ep % 100 == 0:
            log.info("episode %d reward %.4g bound %.4g", ep, r, bound)

    res = train(scen, tcfg, progress=progress)
    save_checkpoint(os.path.join(args.out, "actor_checkpoint.json"), res, scen)
    harness._write_rows(os.path.join(args.out, "learning_curve.csv"),
                        ("episode", "reward", "cr_bound"), res.curve)
    print(f"trained {tcfg.episodes} episodes")


def cmd_evaluate_rl(args, cfg):
    path = args.checkpoint or cfg.artifact("actor")
    if path is None:
        raise harness.MissingArtifactError("evaluate-rl needs --checkpoint or artifacts.actor")
    actor, trained_on, _ = load_checkpoint(path)
    scen = cfg.scenario
    if trained_on.kind != scen.kind:
        raise ValueError(f"actor trained on {trained_on.kind}, config describes {scen.kind}")
    pulse, bound = evaluate_policy(actor, scen)
    harness.write_pulse_csv(os.path.join(args.out, "rl_pulse.csv"), scen, pulse)
    write_json(os.path.join(args.out, "rl_eval.json"), {
        "scenario": scen.to_dict(), "trained_params": trained_on.params, "cr_bound": bound,
    })
    print(f"tr F^-1 = {bound:.6g}")


def cmd_shift(args, cfg):
    if "shift" not in cfg.raw:
        raise ConfigError("config has no 'shift' section")
    scen = cfg.scenario
    pulse = _pulse(args, cfg, scen)
    target = tuple(cfg.raw["shift"]["target"])
    dec = decompose_shift(scen, scen.params, target)
    report = {
        "from": scen.params, "to": target, "coefficients": dec.coefficients,
        "residual_norm": dec.residual_norm, "feasible": dec.feasible,
        "cr_bound": math.nan, "bound_violation": False,
    }
    if dec.feasible:
        try:
            shifted = shift_pulse(pulse, dec, scen.u_max)
        except BoundViolationError as err:
            report["bound_violation"] = True
            log.warning("%s", err)
        else:
            report["cr_bound"] = evaluate(scen.with_params(target), shifted, series=False).cr_bound
            harness.write_pulse_csv(os.path.join(args.out, "shifted_pulse.csv"), scen, shifted)
    write_json(os.path.join(args.out, "shift.json"), report)
    print(f"feasible={dec.feasible} residual={dec.residual_norm:.3g}")


def cmd_sweep(args, cfg):
    spec = cfg.sweep_spec()
    recs = harness.run_sweep(spec, seed=cfg.seed, threads=args.threads,
                             csv_path=os.path.join(args.out, "sweep.csv"), timing=args.timing)
    print(f"{len(recs)} rows")


def cmd_time_resolved(args, cfg):
    scen = cfg.scenario
    rows = harness.run_time_resolved(scen, _pulse(args, cfg, scen),
                                     csv_path=os.path.join(args.out, "time_resolved.csv"))
    print(f"{len(rows)} rows")


def cmd_t_sweep(args, cfg):
    method = cfg.raw.get("t_sweep", {}).get("method", "no-control")
    rows = harness.run_T_sweep(cfg.scenario, cfg.t_grid(), method, cfg.grape_config(),
                               csv_path=os.path.join(args.out, "t_sweep.csv"))
    best = max(rows, key=lambda r: r[1])
    print(f"{len(rows)} rows, maximum at T = {best[0]:.4g}")


def cmd_adaptive(args, cfg):
    if "adaptive" not in cfg.raw:
        raise ConfigError("config has no 'adaptive' section")
    a = cfg.raw["adaptive"]
    scen = cfg.scenario
    method = a.get("method", "analytic-shift")
    actor = None
    if method == "rl-generalize":
        path = args.checkpoint or cfg.artifact("actor")
        if path is None:
            raise harness.MissingArtifactError("rl-generalize needs --checkpoint or artifacts.actor")
        actor = load_checkpoint(path)[0]
    pulse = None
    if method == "analytic-shift" and (args.pulse or cfg.artifact("pulse")):
        pulse = _pulse(args, cfg, scen)
    recs = harness.adaptive_loop(scen, a["true_params"], a.get("initial_guess", list(scen.params)),
                                 method, a.get("rounds", 5), cfg.seed, pulse=pulse, actor=actor,
                                 grape=cfg.grape_config())
    harness.write_adaptive_csv(os.path.join(args.out, "adaptive.csv"), recs, args.timing)
    print(f"{len(recs)} rounds")


COMMANDS = {
    "simulate": cmd_simulate,
    "grape": cmd_grape,
    "train-rl": cmd_train_rl,
    "evaluate-rl": cmd_evaluate_rl,
    "shift": cmd_shift,
    "sweep": cmd_sweep,
    "time-resolved": cmd_time_resolved,
    "t-sweep": cmd_t_sweep,
    "adaptive": cmd_adaptive,
}


def build_parser():
    p = argparse.ArgumentParser(prog="genctrl", description="Control-enhanced multiparameter estimation runs.")
    p.add_argument("--config", required=True, help="JSON run configuration")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    p.add_argument("--timing", action="store_true",
                   help="write measured wall times (outputs are then no longer byte-reproducible)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        if name in ("simulate", "shift", "time-resolved", "adaptive"):
            sp.add_argument("--pulse", help="pulse CSV (defaults to artifacts.pulse, else zero)")
        if name in ("evaluate-rl", "adaptive"):
            sp.add_argument("--checkpoint", help="actor checkpoint JSON")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for attr in ("pulse", "checkpoint"):
        if not hasattr(args, attr):
            setattr(args, attr, None)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg.seed = args.seed
            cfg.raw["seed"] = args.seed
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](args, cfg)
    except (ConfigError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    return 0
