"""Estimation scenarios and piecewise-constant Lindblad propagation.

Conventions: basis {|00>, |01>, |10>, |11>}, qubit 1 is the left tensor
factor, and density matrices are vectorized by stacking columns, so
vec(A X B) = (B^T kron A) vec(X).
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .linalg import dagger, expm, pauli_embed

__all__ = [
    "Scenario",
    "Trajectory",
    "PropagationError",
    "vec",
    "unvec",
    "commutator_superop",
    "build_hamiltonian",
    "build_liouvillian",
    "slice_generators",
    "propagate",
    "check_density_matrix",
    "make_example1",
    "make_example2",
    "scenario_from_dict",
    "bell_state",
    "plus_plus_state",
]

DIM = 4
HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
POSITIVITY_TOL = -1e-10


class PropagationError(RuntimeError):
    """A propagated state left the set of density matrices."""


def vec(rho):
    return np.asarray(rho).reshape(-1, order="F")


def unvec(v, dim=DIM):
    return np.asarray(v).reshape((dim, dim), order="F")


def commutator_superop(h):
    """Superoperator of X -> -i[H, X]."""
    h = np.asarray(h, dtype=complex)
    ident = np.eye(h.shape[0], dtype=complex)
    return -1j * (np.kron(ident, h) - np.kron(h.T, ident))


def dephasing_superop(op, rate):
    """Superoperator of X -> rate/2 (A X A^dagger - X)."""
    op = np.asarray(op, dtype=complex)
    n = op.shape[0]
    return 0.5 * rate * (np.kron(op.conj(), op) - np.eye(n * n))


@dataclass(frozen=True)
class Scenario:
    """Everything needed to simulate one estimation problem.

    ``free_hamiltonian(x)`` returns H0(x) and ``free_derivatives(x)`` returns
    the list of dH0/dx_alpha.  Noise channels are (operator, rate) pairs acting
    as rate/2 (A rho A^dagger - rho).
    """

    kind: str
    params: np.ndarray
    free_hamiltonian: Callable
    free_derivatives: Callable
    control_ops: tuple
    control_labels: tuple
    noise: tuple
    probe: np.ndarray
    povm: tuple
    T: float
    dt: float
    u_max: float
    gammas: tuple = ()
    restricted: bool = False
    n_slices: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "params", np.array(self.params, dtype=float))
        n = self.T / self.dt
        n_int = int(round(n))
        if n_int < 1 or abs(n - n_int) > 1e-9:
            raise ValueError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        object.__setattr__(self, "n_slices", n_int)
        if self.u_max <= 0:
            raise ValueError("u_max must be positive")
        for _, rate in self.noise:
            if rate < 0:
                raise ValueError("dephasing rates must be non-negative")

    @property
    def n_controls(self):
        return len(self.control_ops)

    @property
    def n_params(self):
        return len(self.params)

    def with_params(self, params):
        return replace(self, params=np.array(params, dtype=float))

    def zero_pulse(self):
        return np.zeros((self.n_controls, self.n_slices))

    def random_pulse(self, rng, scale=1.0):
        """Uniform random pulse in [-scale*u_max, scale*u_max]."""
        return rng.uniform(-scale * self.u_max, scale * self.u_max,
                           size=(self.n_controls, self.n_slices))

    def conjugated(self, u):
        """Same problem expressed in the basis rotated by the unitary ``u``."""
        u = np.asarray(u, dtype=complex)
        ud = dagger(u)
        h0 = self.free_hamiltonian
        dh0 = self.free_derivatives
        return replace(
            self,
            kind=self.kind + "-conjugated",
            free_hamiltonian=lambda x: u @ h0(x) @ ud,
            free_derivatives=lambda x: [u @ d @ ud for d in dh0(x)],
            control_ops=tuple(u @ h @ ud for h in self.control_ops),
            noise=tuple((u @ a @ ud, r) for a, r in self.noise),
            probe=u @ self.probe @ ud,
            povm=tuple(u @ p @ ud for p in self.povm),
        )

    def to_dict(self):
        if self.kind not in ("example1", "example2"):
            raise ValueError(f"scenario kind {self.kind!r} has no JSON form")
        return {
            "kind": self.kind,
            "params": [float(v) for v in self.params],
            "gamma": [float(g) for g in self.gammas],
            "T": float(self.T),
            "dt": float(self.dt),
            "u_max": float(self.u_max),
            "restricted": bool(self.restricted),
        }


@dataclass
class Trajectory:
    """States rho(0), rho(dt), ..., rho(T) plus the slice propagators used."""

    states: np.ndarray
    propagators: np.ndarray

    @property
    def final(self):
        return self.states[-1]


def bell_state():
    psi = np.zeros(4, dtype=complex)
    psi[0] = psi[3] = 1 / np.sqrt(2)
    return np.outer(psi, psi.conj())


def plus_plus_state():
    psi = np.full(4, 0.5, dtype=complex)
    return np.outer(psi, psi.conj())


def _projector(psi):
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def bell_povm():
    s = 1 / np.sqrt(2)
    return (
        _projector([s, 0, 0, s]),
        _projector([s, 0, 0, -s]),
        _projector([0, s, s, 0]),
        _projector([0, s, -s, 0]),
    )


def pm_povm():
    plus = np.array([1, 1]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    return tuple(_projector(np.kron(a, b))
                 for a, b in ((plus, plus), (plus, minus), (minus, plus), (minus, minus)))


def _local_controls(axes_per_qubit):
    ops, labels = [], []
    for q in (1, 2):
        for a in axes_per_qubit:
            ops.append(pauli_embed(q, a))
            labels.append(f"{a}{q}")
    return tuple(ops), tuple(labels)


def field_direction(theta, phi):
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def field_jacobian(params):
    """d(Bx, By, Bz)/d(B, theta, phi); column alpha is the derivative along x_alpha."""
    b, th, ph = params
    n = field_direction(th, ph)
    e_th = np.array([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)])
    e_ph = np.array([-np.sin(ph), np.cos(ph), 0.0])
    return np.column_stack([n, b * e_th, b * np.sin(th) * e_ph])


_SIGMA1 = tuple(pauli_embed(1, a) for a in "xyz")


def _example1_h0(x):
    bvec = x[0] * field_direction(x[1], x[2])
    return sum(c * s for c, s in zip(bvec, _SIGMA1))


def _example1_dh0(x):
    jac = field_jacobian(x)
    return [sum(jac[k, a] * _SIGMA1[k] for k in range(3)) for a in range(3)]


_Z1, _Z2 = pauli_embed(1, "z"), pauli_embed(2, "z")
_ZZ = _Z1 @ _Z2


def _example2_h0(x):
    return x[0] * _Z1 + x[1] * _Z2 + x[2] * _ZZ


def _example2_dh0(x):
    return [_Z1, _Z2, _ZZ]


def make_example1(params=(1.0, np.pi / 4, np.pi / 4), gamma=0.2, T=5.0, dt=0.1, u_max=3.0):
    """Qubit 1 in a field B(sin t cos p, sin t sin p, cos t); qubit 2 is an ancilla."""
    b, th, ph = params
    if b < 0 or not 0 <= th <= np.pi:
        raise ValueError(f"invalid Example-1 parameters {params}")
    ops, labels = _local_controls("xyz")
    return Scenario(
        kind="example1",
        params=np.array(params, dtype=float),
        free_hamiltonian=_example1_h0,
        free_derivatives=_example1_dh0,
        control_ops=ops,
        control_labels=labels,
        noise=((_Z1, float(gamma)),),
        probe=bell_state(),
        povm=bell_povm(),
        T=float(T),
        dt=float(dt),
        u_max=float(u_max),
        gammas=(float(gamma),),
    )


def make_example2(params=(1.0, 1.2, 0.1), gamma=(0.1, 0.1), T=5.0, dt=0.1, u_max=5.0,
                  restricted=False):
    """ZZ-coupled qubits with local z fields; ``restricted`` drops the sigma_z controls."""
    if np.isscalar(gamma):
        gamma = (gamma, gamma)
    g1, g2 = (float(g) for g in gamma)
    ops, labels = _local_controls("xy" if restricted else "xyz")
    return Scenario(
        kind="example2",
        params=np.array(params, dtype=float),
        free_hamiltonian=_example2_h0,
        free_derivatives=_example2_dh0,
        control_ops=ops,
        control_labels=labels,
        noise=((_Z1, g1), (_Z2, g2)),
        probe=plus_plus_state(),
        povm=pm_povm(),
        T=float(T),
        dt=float(dt),
        u_max=float(u_max),
        gammas=(g1, g2),
        restricted=bool(restricted),
    )


def scenario_from_dict(d):
    kind = d["kind"]
    kw = {k: d[k] for k in ("T", "dt", "u_max") if k in d}
    if "params" in d:
        kw["params"] = tuple(d["params"])
    if kind == "example1":
        if "gamma" in d:
            g = d["gamma"]
            kw["gamma"] = g[0] if isinstance(g, (list, tuple)) else g
        return make_example1(**kw)
    if kind == "example2":
        if "gamma" in d:
            kw["gamma"] = d["gamma"]
        return make_example2(restricted=d.get("restricted", False), **kw)
    raise ValueError(f"unknown scenario kind {kind!r}")


def build_hamiltonian(scenario, pulse_column, params=None):
    x = scenario.params if params is None else params
    h = np.array(scenario.free_hamiltonian(x), dtype=complex)
    for u, op in zip(pulse_column, scenario.control_ops):
        h = h + u * op
    return h


def build_liouvillian(h, noise=()):
    h = np.asarray(h, dtype=complex)
    if not np.allclose(h, dagger(h), rtol=0, atol=1e-12):
        raise ValueError("Hamiltonian is not Hermitian")
    lv = commutator_superop(h)
    for op, rate in noise:
        lv = lv + dephasing_superop(op, rate)
    return lv


def check_pulse(scenario, pulse):
    pulse = np.asarray(pulse, dtype=float)
    expected = (scenario.n_controls, scenario.n_slices)
    if pulse.shape != expected:
        raise ValueError(f"pulse shape {pulse.shape} != {expected}")
    worst = np.max(np.abs(pulse)) if pulse.size else 0.0
    if not worst <= scenario.u_max * (1 + 1e-12):
        raise ValueError(f"pulse amplitude {worst:.6g} exceeds bound {scenario.u_max}")
    return pulse


def slice_generators(scenario, pulse, params=None):
    """Array of dt * L_j for every slice, shape (N, 16, 16)."""
    pulse = check_pulse(scenario, pulse)
    x = scenario.params if params is None else np.asarray(params, dtype=float)
    h0 = np.array(scenario.free_hamiltonian(x), dtype=complex)
    noise_part = sum((dephasing_superop(op, r) for op, r in scenario.noise),
                     np.zeros((DIM * DIM, DIM * DIM), dtype=complex))
    base = commutator_superop(h0) + noise_part
    ctrl = [commutator_superop(op) for op in scenario.control_ops]
    gens = np.empty((scenario.n_slices, DIM * DIM, DIM * DIM), dtype=complex)
    for j in range(scenario.n_slices):
        lv = base.copy()
        for i, c in enumerate(ctrl):
            lv += pulse[i, j] * c
        gens[j] = scenario.dt * lv
    return gens


def check_density_matrix(rho, where=""):
    herm = np.max(np.abs(rho - dagger(rho)))
    tr = abs(np.trace(rho) - 1)
    if herm > HERMITIAN_TOL or tr > TRACE_TOL:
        raise PropagationError(f"state {where} drifted: hermiticity {herm:.2e}, trace {tr:.2e}")
    lo = np.linalg.eigvalsh(0.5 * (rho + dagger(rho)))[0]
    if lo < POSITIVITY_TOL:
        raise PropagationError(f"state {where} lost positivity: min eigenvalue {lo:.2e}")


def propagate(scenario, pulse, params=None, check=True, steps: Optional[int] = None,
              initial: Optional[np.ndarray] = None, start: int = 0):
    """Evolve the probe through the slices of ``pulse``.

    ``start``/``steps`` select a window of slices, and ``initial`` overrides
    the probe, which allows split propagation.
    """
    gens = slice_generators(scenario, pulse, params)
    stop = scenario.n_slices if steps is None else start + steps
    rho = np.array(scenario.probe if initial is None else initial, dtype=complex)
    states = [rho]
    props = []
    v = vec(rho)
    for j in range(start, stop):
        m = expm(gens[j])
        props.append(m)
        v = m @ v
        rho = unvec(v)
        if check:
            check_density_matrix(rho, f"at slice {j + 1}")
        states.append(rho)
    return Trajectory(states=np.array(states), propagators=np.array(props))
