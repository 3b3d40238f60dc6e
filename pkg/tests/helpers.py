"""Independent oracles shared by the unit and acceptance tests."""

import numpy as np

from genctrl.dynamics import build_hamiltonian, build_liouvillian, propagate, slice_generators
from genctrl.fisher import (
    cfim,
    f0_objective,
    forward,
    param_generators,
    probabilities,
    probability_derivatives,
    slice_maps,
)


def max_rel(a, b):
    """Norm-wise relative error max|a - b| / max|b|."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max() / np.abs(b).max())


def fd_state_derivatives(scenario, pulse, h=1e-5):
    x = np.array(scenario.params, dtype=float)
    out = []
    for a in range(len(x)):
        xp, xm = x.copy(), x.copy()
        xp[a] += h
        xm[a] -= h
        out.append((propagate(scenario, pulse, xp).final - propagate(scenario, pulse, xm).final) / (2 * h))
    return np.array(out)


class F0Oracle:
    """f0 as a plain function of the pulse, re-exponentiating only the slice that changed."""

    def __init__(self, scenario, pulse):
        self.s = scenario
        self.pulse = np.array(pulse, dtype=float)
        self.dgens = param_generators(scenario)
        self.props, self.frech = slice_maps(slice_generators(scenario, self.pulse), self.dgens)

    def f0(self, props, frech):
        states, derivs = forward(self.s.probe, props, frech, check=False)
        p = probabilities(states[-1], self.s.povm)
        dp = probability_derivatives(derivs[-1], self.s.povm)
        return f0_objective(cfim(p, dp))

    def perturbed(self, i, j, delta):
        u = self.pulse.copy()
        u[i, j] += delta
        props, frech = self.props.copy(), self.frech.copy()
        gj = _slice_generator(self.s, u, j)
        pj, fj = slice_maps(gj[None], self.dgens)
        props[j], frech[j] = pj[0], fj[0]
        return self.f0(props, frech)

    def gradient(self, h=1e-6):
        g = np.zeros_like(self.pulse)
        for i in range(g.shape[0]):
            for j in range(g.shape[1]):
                g[i, j] = (self.perturbed(i, j, h) - self.perturbed(i, j, -h)) / (2 * h)
        return g


def _slice_generator(scenario, pulse, j):
    # build dt L_j directly; the perturbed pulse may sit a hair outside the amplitude bound
    h = build_hamiltonian(scenario, pulse[:, j])
    return scenario.dt * build_liouvillian(h, scenario.noise)


ACCEPTANCE_LINES = []


def record_criterion(n, ok, detail):
    """Print and remember one acceptance verdict line."""
    line = f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
