"""Parameter sensitivities of the final state and classical Fisher information.

The derivative of rho(T) with respect to each parameter is propagated slice
by slice with the exact Frechet derivative of the slice exponential:

    d rho_{j+1} = e^{dt L_j} d rho_j + L(dt L_j, dt dL_j/dx) rho_j
"""

from dataclasses import dataclass

import numpy as np

from .dynamics import (
    DIM,
    check_density_matrix,
    commutator_superop,
    slice_generators,
    unvec,
    vec,
)
from .linalg import NilpotentAlgebra, expm

__all__ = [
    "Sensitivity",
    "Evaluation",
    "param_generators",
    "slice_maps",
    "forward",
    "propagate_with_sensitivity",
    "probabilities",
    "probability_derivatives",
    "cfim",
    "cr_bound",
    "f0_objective",
    "evaluate",
    "PROB_FLOOR",
    "COND_CAP",
]

PROB_FLOOR = 1e-12
COND_CAP = 1e12
_RATIO_CAP = 1e12


@dataclass
class Sensitivity:
    """States and their parameter derivatives at every slice boundary.

    ``states`` has shape (N+1, 4, 4) and ``derivs`` (N+1, n_params, 4, 4).
    ``propagators`` and ``frechet`` hold e^{dt L_j} and the per-parameter
    Frechet derivatives, shapes (N, 16, 16) and (N, n_params, 16, 16).
    """

    states: np.ndarray
    derivs: np.ndarray
    propagators: np.ndarray
    frechet: np.ndarray

    @property
    def state(self):
        return self.states[-1]

    @property
    def final_derivs(self):
        return self.derivs[-1]


@dataclass
class Evaluation:
    cfim: np.ndarray
    cr_bound: float
    f0: float
    times: np.ndarray
    series: np.ndarray
    probs: np.ndarray
    dprobs: np.ndarray
    flagged: bool = False


def param_generators(scenario, params=None):
    """dt * dL/dx_alpha for each parameter (controls and noise do not depend on x)."""
    x = scenario.params if params is None else np.asarray(params, dtype=float)
    return [scenario.dt * commutator_superop(d) for d in scenario.free_derivatives(x)]


def slice_maps(gens, dgens, exact=True):
    """Slice propagators e^{dt L_j} and their Frechet derivatives along each dt dL/dx_alpha.

    ``gens`` has shape (N, 16, 16); returns arrays (N, 16, 16) and (N, K, 16, 16).
    """
    gens = np.asarray(gens, dtype=complex)
    k = len(dgens)
    if not exact:
        props = np.array([expm(g) for g in gens])
        return props, np.einsum("jab,kbc->jkac", props, np.asarray(dgens))
    alg = NilpotentAlgebra.first_order(k)
    dirs = np.broadcast_to(np.asarray(dgens, dtype=complex), (len(gens), k) + gens.shape[1:])
    x = alg.expm(alg.element(gens, dirs))
    return x[:, 0], x[:, 1:]


def forward(probe, props, frech, check=True):
    """Run the state and sensitivity recursion given precomputed slice maps."""
    n, k = frech.shape[0], frech.shape[1]
    states = np.empty((n + 1, DIM, DIM), dtype=complex)
    derivs = np.zeros((n + 1, k, DIM, DIM), dtype=complex)
    states[0] = probe
    v = vec(probe).astype(complex)
    dv = np.zeros((k, DIM * DIM), dtype=complex)
    for j in range(n):
        dv = dv @ props[j].T + frech[j] @ v
        v = props[j] @ v
        states[j + 1] = unvec(v)
        if check:
            check_density_matrix(states[j + 1], f"at slice {j + 1}")
        derivs[j + 1] = dv.reshape(k, DIM, DIM).transpose(0, 2, 1)
    return states, derivs


def propagate_with_sensitivity(scenario, pulse, params=None, exact=True, check=True):
    """Propagate rho and d rho/dx_alpha through all slices.

    ``exact=False`` replaces the Frechet derivative by the first-order
    expression e^{dt L_j} dt dL_j/dx, which is only accurate to O(dt).
    """
    gens = slice_generators(scenario, pulse, params)
    dgens = param_generators(scenario, params)
    props, frech = slice_maps(gens, dgens, exact=exact)
    states, derivs = forward(scenario.probe, props, frech, check=check)
    return Sensitivity(states=states, derivs=derivs, propagators=props, frechet=frech)


def probabilities(state, povm):
    """p_y = tr(rho Pi_y)."""
    return np.array([np.real(np.trace(state @ p)) for p in povm])


def probability_derivatives(derivs, povm):
    """Matrix of d p_y / d x_alpha with shape (n_params, n_outcomes)."""
    return np.array([[np.real(np.trace(d @ p)) for p in povm] for d in derivs])


def _cfim(probs, dprobs, eps=PROB_FLOOR):
    probs = np.asarray(probs, dtype=float)
    dprobs = np.atleast_2d(np.asarray(dprobs, dtype=float))
    keep = probs >= eps
    dropped = dprobs[:, ~keep]
    # a vanishing outcome whose derivative does not also vanish signals a divergent bound
    flagged = bool(dropped.size and np.max(dropped**2) / eps > _RATIO_CAP)
    d = dprobs[:, keep]
    f = (d / probs[keep]) @ d.T
    return 0.5 * (f + f.T), flagged


def cfim(probs, dprobs, eps=PROB_FLOOR):
    """Classical Fisher information F_ab = sum_y dp_y/dx_a dp_y/dx_b / p_y.

    Outcomes with p_y below ``eps`` are left out.
    """
    return _cfim(probs, dprobs, eps)[0]


def cr_bound(f, cond_cap=COND_CAP):
    """tr F^{-1}, or +inf when F is singular or worse conditioned than ``cond_cap``."""
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        return np.inf
    w = np.linalg.eigvalsh(0.5 * (f + f.T))
    if w[-1] <= 0 or w[0] <= w[-1] / cond_cap:
        return np.inf
    return float(np.sum(1.0 / w))


def f0_objective(f):
    """Surrogate (sum_a 1/F_aa)^{-1}; zero if any diagonal entry is not positive."""
    diag = np.diag(np.asarray(f, dtype=float))
    if np.any(diag <= 0):
        return 0.0
    return float(1.0 / np.sum(1.0 / diag))


def evaluate(scenario, pulse, params=None, exact=True, series=True):
    """CFIM, CR bound and f0 at T, plus the CR bound at every slice boundary."""
    sens = propagate_with_sensitivity(scenario, pulse, params, exact=exact)
    n = scenario.n_slices
    bounds = np.full(n + 1, np.inf)
    if series:
        for j in range(1, n):
            p = probabilities(sens.states[j], scenario.povm)
            dp = probability_derivatives(sens.derivs[j], scenario.povm)
            bounds[j] = cr_bound(cfim(p, dp))
    p = probabilities(sens.state, scenario.povm)
    dp = probability_derivatives(sens.final_derivs, scenario.povm)
    f, flagged = _cfim(p, dp)
    bound = cr_bound(f)
    bounds[n] = bound
    return Evaluation(
        cfim=f,
        cr_bound=bound,
        f0=f0_objective(f),
        times=np.arange(n + 1) * scenario.dt,
        series=bounds,
        probs=p,
        dprobs=dp,
        flagged=flagged,
    )
