"""Gradient ascent pulse engineering on the f0 surrogate.

The gradient of f0 with respect to every amplitude u_ij is exact for the
piecewise-constant model.  Each slice exponential is taken in a nilpotent
algebra carrying the parameter directions dt dL/dx_alpha and the control
directions dt L_{H_i}, which gives e^{dt L_j}, its first derivatives and the
mixed second derivatives in one pass.  A backward (adjoint) sweep then
collects all P x N derivatives in O(N P) work.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DIM, check_pulse, commutator_superop, slice_generators, vec
from .fisher import (
    PROB_FLOOR,
    cfim,
    cr_bound,
    evaluate,
    f0_objective,
    forward,
    param_generators,
    probabilities,
    probability_derivatives,
)
from .linalg import NilpotentAlgebra

__all__ = ["GrapeConfig", "GrapeReport", "f0_and_gradient", "grape_gradient", "grape_optimize"]


@dataclass
class GrapeConfig:
    method: str = "adam"
    learning_rate: float = None
    iterations: int = 200
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    clip_to_bounds: bool = True

    def __post_init__(self):
        self.method = self.method.lower()
        if self.method not in ("gd", "adam"):
            raise ValueError(f"unknown GRAPE method {self.method!r}")
        if self.learning_rate is None:
            self.learning_rate = 0.01 if self.method == "gd" else 0.005
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.iterations < 0:
            raise ValueError("iterations must be non-negative")


@dataclass
class GrapeReport:
    best_pulse: np.ndarray
    best_f0: float
    best_cr_bound: float
    final_pulse: np.ndarray
    history: list = field(default_factory=list)
    wall_time: float = 0.0

    def history_rows(self):
        """(iteration, f0, cr_bound, best_f0) tuples."""
        return list(self.history)


def _final_weights(probs, dprobs):
    """df0/dp_y and df0/d(dp_y/dx_alpha) at the final state."""
    f = cfim(probs, dprobs)
    f0 = f0_objective(f)
    k, ny = dprobs.shape
    g_p = np.zeros(ny)
    g_d = np.zeros((k, ny))
    if f0 == 0.0:
        return f, f0, g_p, g_d
    w = f0**2 / np.diag(f) ** 2
    keep = probs >= PROB_FLOOR
    p = probs[keep]
    d = dprobs[:, keep]
    g_p[keep] = -np.sum(w[:, None] * d**2, axis=0) / p**2
    g_d[:, keep] = 2 * w[:, None] * d / p
    return f, f0, g_p, g_d


def f0_and_gradient(scenario, pulse, params=None):
    """Return ``(f0, cfim, grad)`` with ``grad[i, j] = d f0 / d u_i(j dt)``."""
    pulse = check_pulse(scenario, pulse)
    gens = slice_generators(scenario, pulse, params)
    dgens = param_generators(scenario, params)
    cgens = [scenario.dt * commutator_superop(h) for h in scenario.control_ops]
    k, p_ch, n = len(dgens), len(cgens), scenario.n_slices

    alg = NilpotentAlgebra.mixed(k, p_ch)
    dirs = np.broadcast_to(np.array(dgens + cgens), (n, k + p_ch, DIM * DIM, DIM * DIM))
    x = alg.expm(alg.element(gens, dirs))
    props = x[:, 0]
    frech = x[:, 1:k + 1]
    dprop = x[:, k + 1:k + 1 + p_ch]
    mixed = np.empty((n, k, p_ch, DIM * DIM, DIM * DIM), dtype=complex)
    for a in range(k):
        for i in range(p_ch):
            mixed[:, a, i] = x[:, alg.index[(a, k + i)]]

    states, derivs = forward(scenario.probe, props, frech)
    probs = probabilities(states[-1], scenario.povm)
    dprobs = probability_derivatives(derivs[-1], scenario.povm)
    f, f0, g_p, g_d = _final_weights(probs, dprobs)
    grad = np.zeros((p_ch, n))
    if f0 == 0.0:
        return f0, f, grad

    pis = np.array([vec(pi) for pi in scenario.povm])
    lam = g_p @ pis
    mu = g_d @ pis
    for j in range(n - 1, -1, -1):
        r = vec(states[j])
        s = derivs[j].transpose(0, 2, 1).reshape(k, -1)
        dm_r = dprop[j] @ r
        g = np.real(dm_r @ lam.conj())
        dm_s = np.einsum("iab,kb->kia", dprop[j], s)
        mix_r = mixed[j] @ r
        g += np.real(np.einsum("ka,kia->i", mu.conj(), dm_s + mix_r))
        grad[:, j] = g
        lam = props[j].conj().T @ lam + np.einsum("kba,kb->a", frech[j].conj(), mu)
        mu = mu @ props[j].conj()
    return f0, f, grad


def grape_gradient(scenario, pulse, params=None):
    """P x N array of d f0 / d u_i(j dt)."""
    return f0_and_gradient(scenario, pulse, params)[2]


def grape_optimize(scenario, initial_pulse, config=None, params=None, callback=None):
    """Ascend f0 from ``initial_pulse`` for ``config.iterations`` steps.

    History rows are (iteration, f0, cr_bound, best_f0) for the pulse at the
    start of each iteration, plus a final row for the last pulse.
    """
    config = config or GrapeConfig()
    pulse = check_pulse(scenario, initial_pulse).copy()
    if np.any(np.abs(pulse) > scenario.u_max):
        raise ValueError("initial pulse exceeds the amplitude bound")
    start = time.perf_counter()
    b1, b2 = config.adam_betas
    m = np.zeros_like(pulse)
    v = np.zeros_like(pulse)
    best = (-np.inf, np.inf, pulse.copy())
    history = []

    def record(it, f0, f, p):
        nonlocal best
        bound = cr_bound(f)
        if f0 > best[0]:
            best = (f0, bound, p.copy())
        history.append((it, f0, bound, best[0]))

    for it in range(config.iterations):
        f0, f, grad = f0_and_gradient(scenario, pulse, params)
        record(it, f0, f, pulse)
        if callback is not None:
            callback(it, f0, history[-1][2])
        if config.method == "gd":
            step = config.learning_rate * grad
        else:
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad**2
            m_hat = m / (1 - b1 ** (it + 1))
            v_hat = v / (1 - b2 ** (it + 1))
            step = config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
        pulse = pulse + step
        if config.clip_to_bounds:
            pulse = np.clip(pulse, -scenario.u_max, scenario.u_max)

    final = evaluate(scenario, pulse, params, series=False)
    record(config.iterations, final.f0, final.cfim, pulse)
    return GrapeReport(
        best_pulse=best[2],
        best_f0=best[0],
        best_cr_bound=best[1],
        final_pulse=pulse,
        history=history,
        wall_time=time.perf_counter() - start,
    )
