"""Experiment runners: parameter sweeps, time series, T sweeps and the adaptive loop.

Every runner returns plain records; the ``write_*`` helpers turn them into CSV
rows in a fixed order so a rerun with the same seed reproduces the file byte
for byte (wall times are only written when asked for).
"""

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .ddpg import evaluate_policy, load_checkpoint
from .dynamics import scenario_from_dict
from .fisher import evaluate, f0_objective
from .grape import GrapeConfig, grape_optimize
from .shift import BoundViolationError, POLE_TOL, decompose_shift, shift_pulse

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("axis_value", "method", "cr_bound", "f0", "feasible", "wall_time_s", "seed")
PARAM_AXES = {"B": 0, "omega1": 0, "omega2": 1, "g": 2}


class MissingArtifactError(FileNotFoundError):
    pass


@dataclass
class RunRecord:
    method: str
    axis_value: object
    params: tuple
    cr_bound: float
    f0: float
    wall_time_s: float
    seed: int
    feasible: bool = True
    singular: bool = False


@dataclass
class AdaptiveRecord:
    round: int
    guess: tuple
    method: str
    cr_bound: float
    f0: float
    wall_time_s: float
    seed: int
    feasible: bool = True


def fmt(value):
    """CSV cell text; floats use repr so infinities come out as ``inf``."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, tuple):
        return ":".join(fmt(v) for v in value)
    return str(value)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# -- pulses ----------------------------------------------------------------

def write_pulse_csv(path, scenario, pulse):
    pulse = np.asarray(pulse, dtype=float)
    rows = [(j, j * scenario.dt, *pulse[:, j]) for j in range(pulse.shape[1])]
    _write_rows(path, ("slice", "t", *scenario.control_labels), rows)


def read_pulse_csv(path, scenario=None):
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError:
        raise MissingArtifactError(f"pulse file not found: {path}") from None
    header, body = rows[0], rows[1:]
    pulse = np.array([[float(v) for v in r[2:]] for r in body]).T
    if scenario is not None:
        labels = tuple(header[2:])
        if labels != tuple(scenario.control_labels) or pulse.shape[1] != scenario.n_slices:
            raise ValueError(f"pulse in {path} does not match the scenario's channels or slices")
    return pulse


def write_grape_history(path, report):
    _write_rows(path, ("iteration", "f0", "cr_bound"), [row[:3] for row in report.history])


# -- scenario variants ------------------------------------------------------

def variant(base, axis, value):
    """Scenario at one sweep point; returns ``(scenario, params)``."""
    x = np.array(base.params, dtype=float)
    if axis in PARAM_AXES:
        x[PARAM_AXES[axis]] = value
        return base.with_params(tuple(x)), tuple(x)
    if axis == "direction":
        x[1], x[2] = value
        return base.with_params(tuple(x)), tuple(x)
    d = base.to_dict()
    if axis == "T":
        d["T"] = float(value)
    elif axis == "gamma":
        d["gamma"] = [float(value)] * len(d["gamma"])
    else:
        raise ValueError(f"unknown sweep axis {axis!r}")
    return scenario_from_dict(d), tuple(x)


def _is_singular(scenario, x):
    if scenario.kind != "example1":
        return False
    return x[0] == 0 or abs(math.sin(x[1])) < POLE_TOL


# -- per-method evaluation --------------------------------------------------

def _no_control(base, scen, x, ctx):
    ev = evaluate(scen, scen.zero_pulse(), series=False)
    return ev.cr_bound, ev.f0, True


def _analytic_shift(base, scen, x, ctx):
    if scen.T != base.T or tuple(scen.gammas) != tuple(base.gammas):
        # only Hamiltonian parameter changes can be absorbed by the controls
        return np.nan, np.nan, False
    dec = decompose_shift(base, base.params, x)
    if not dec.feasible:
        return np.nan, np.nan, False
    try:
        shifted = shift_pulse(ctx["pulse"], dec, base.u_max)
    except BoundViolationError as err:
        log.info("shift to %s leaves the control bound: %s", x, err)
        return np.nan, np.nan, False
    ev = evaluate(scen, shifted, series=False)
    return ev.cr_bound, ev.f0, True


def _rl_generalize(base, scen, x, ctx):
    pulse, bound = evaluate_policy(ctx["actor"], scen)
    f0 = f0_objective(evaluate(scen, pulse, series=False).cfim)
    return bound, f0, True


def _grape(base, scen, x, ctx):
    if ctx["grape_init"] == "random":
        init = scen.random_pulse(ctx["rng"])
    else:
        init = scen.zero_pulse()
    rep = grape_optimize(scen, init, ctx["grape"])
    return rep.best_cr_bound, rep.best_f0, True


METHOD_RUNNERS = {
    "no-control": _no_control,
    "analytic-shift": _analytic_shift,
    "rl-generalize": _rl_generalize,
    "grape": _grape,
}


def _load_artifacts(spec):
    ctx = {"grape": spec.grape or GrapeConfig(), "grape_init": spec.grape_init}
    base = spec.base_scenario
    if "analytic-shift" in spec.methods:
        if spec.pulse_path is None:
            raise MissingArtifactError("analytic-shift needs an optimized pulse (artifacts.pulse)")
        ctx["pulse"] = read_pulse_csv(spec.pulse_path, base)
    if "rl-generalize" in spec.methods:
        if spec.actor_path is None:
            raise MissingArtifactError("rl-generalize needs a trained actor (artifacts.actor)")
        try:
            actor, trained_on, _ = load_checkpoint(spec.actor_path)
        except FileNotFoundError:
            raise MissingArtifactError(f"actor checkpoint not found: {spec.actor_path}") from None
        if trained_on.kind != base.kind:
            raise ValueError(f"actor trained on {trained_on.kind}, sweep runs {base.kind}")
        ctx["actor"] = actor
    return ctx


def run_sweep(spec, seed=0, threads=1, csv_path=None, timing=True):
    """Evaluate every method at every grid point, in grid order."""
    ctx = _load_artifacts(spec)
    base = spec.base_scenario

    def point(item):
        idx, value = item
        scen, x = variant(base, spec.axis, value)
        out = []
        for m, method in enumerate(spec.methods):
            local = dict(ctx, rng=np.random.default_rng(np.random.SeedSequence([seed, idx, m])))
            t0 = time.perf_counter()
            bound, f0, ok = METHOD_RUNNERS[method](base, scen, x, local)
            out.append(RunRecord(method, value, x, bound, f0, time.perf_counter() - t0,
                                 seed, ok, _is_singular(scen, x)))
        return out

    items = list(enumerate(spec.grid))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(point, items))
    else:
        chunks = [point(it) for it in items]
    records = [r for chunk in chunks for r in chunk]
    if csv_path is not None:
        write_sweep_csv(csv_path, records, timing)
    return records


def write_sweep_csv(path, records, timing=True):
    rows = [(r.axis_value, r.method, r.cr_bound, r.f0, r.feasible,
             r.wall_time_s if timing else math.nan, r.seed) for r in records]
    _write_rows(path, SWEEP_COLUMNS, rows)


# -- time resolved and T sweep ----------------------------------------------

def run_time_resolved(scenario, pulse=None, csv_path=None):
    """(t, tr F^-1) at every slice boundary; the t = 0 row is ``inf``."""
    pulse = scenario.zero_pulse() if pulse is None else pulse
    ev = evaluate(scenario, pulse, series=True)
    rows = list(zip(ev.times, ev.series))
    if csv_path is not None:
        _write_rows(csv_path, ("t", "cr_bound"), rows)
    return rows


def run_T_sweep(scenario, T_grid, method="no-control", grape=None, csv_path=None):
    """Normalized reciprocal bound (T tr F^-1)^-1 with the 4T/3 unitary reference."""
    rows = []
    for T in T_grid:
        scen, _ = variant(scenario, "T", T)
        if method == "grape":
            bound = grape_optimize(scen, scen.zero_pulse(), grape or GrapeConfig()).best_cr_bound
        elif method == "no-control":
            bound = evaluate(scen, scen.zero_pulse(), series=False).cr_bound
        else:
            raise ValueError(f"T sweep supports no-control or grape, not {method!r}")
        inv = 0.0 if not np.isfinite(bound) else 1.0 / (T * bound)
        rows.append((float(T), inv, 4.0 * T / 3.0, bound))
    if csv_path is not None:
        _write_rows(csv_path, ("T", "inv_T_cr_bound", "reference_4T_over_3", "cr_bound"), rows)
    return rows


# -- adaptive workflow ------------------------------------------------------

def _canonical(scenario, x):
    """Fold an estimate back into the scenario's coordinate chart."""
    x = np.array(x, dtype=float)
    if scenario.kind == "example1":
        b, th, ph = x
        if b < 0:
            b, th, ph = -b, math.pi - th, ph + math.pi
        th = math.remainder(th, 2 * math.pi)
        if th < 0:
            th, ph = -th, ph + math.pi
        x = np.array([b, th, ph % (2 * math.pi)])
    return tuple(float(v) for v in x)


def adaptive_loop(scenario, true_x, initial_guess, method="analytic-shift", rounds=5, seed=0,
                  pulse=None, actor=None, grape=None):
    """Simulated estimate-then-control loop.

    Each round designs a control for the current guess, measures the bound at
    the hidden true point, and draws the next guess from a normal centred on
    the truth with per-axis spread sqrt(diag F^-1).  The analytic-shift route
    shifts one reference pulse (optimized at ``scenario.params`` or supplied)
    instead of re-optimizing.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    grape = grape or GrapeConfig()
    rng = np.random.default_rng(seed)
    truth = scenario.with_params(tuple(true_x))
    guess = _canonical(scenario, initial_guess)
    reference = None
    if method == "analytic-shift" and pulse is not None:
        reference = (tuple(scenario.params), np.asarray(pulse, dtype=float))
    if method == "rl-generalize" and actor is None:
        raise MissingArtifactError("rl-generalize needs a trained actor")
    log_rows = []
    for k in range(rounds):
        t0 = time.perf_counter()
        feasible = True
        at_guess = scenario.with_params(guess)
        if method == "no-control":
            u = scenario.zero_pulse()
        elif method == "grape":
            u = grape_optimize(at_guess, scenario.zero_pulse(), grape).best_pulse
        elif method == "rl-generalize":
            u = evaluate_policy(actor, at_guess)[0]
        elif method == "analytic-shift":
            if reference is None:
                reference = (guess, grape_optimize(at_guess, scenario.zero_pulse(), grape).best_pulse)
            dec = decompose_shift(scenario, reference[0], guess)
            u = reference[1]
            if dec.feasible:
                try:
                    u = shift_pulse(reference[1], dec, scenario.u_max)
                except BoundViolationError:
                    feasible = False
            else:
                feasible = False
        else:
            raise ValueError(f"unknown method {method!r}")
        elapsed = time.perf_counter() - t0
        ev = evaluate(truth, u, series=False)
        log_rows.append(AdaptiveRecord(k, guess, method, ev.cr_bound, ev.f0, elapsed, seed, feasible))
        if not np.isfinite(ev.cr_bound):
            continue
        spread = np.sqrt(np.clip(np.diag(np.linalg.inv(ev.cfim)), 0.0, None))
        guess = _canonical(scenario, rng.normal(np.asarray(true_x, dtype=float), spread))
    return log_rows


def write_adaptive_csv(path, records, timing=True):
    header = ("round", "x1", "x2", "x3", "method", "cr_bound", "f0", "feasible", "wall_time_s", "seed")
    rows = [(r.round, *r.guess, r.method, r.cr_bound, r.f0, r.feasible,
             r.wall_time_s if timing else math.nan, r.seed) for r in records]
    _write_rows(path, header, rows)
