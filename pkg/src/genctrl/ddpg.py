"""Deep deterministic policy gradient agent for pulse design.

The agent sees the full density matrix (32 reals), emits one control
amplitude per channel for each slice, and is rewarded only at the final
slice with 100 * sum_{n=1..4} 10^(-10^n tr F^-1).
"""

import json
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .dynamics import (
    DIM,
    PropagationError,
    build_liouvillian,
    check_density_matrix,
    commutator_superop,
    scenario_from_dict,
)
from .fisher import evaluate
from .linalg import expm
from .nets import Adam, Mlp, actor_network, critic_network

__all__ = [
    "TrainConfig",
    "TrainResult",
    "ReplayMemory",
    "OUNoise",
    "QuantumEnv",
    "observe",
    "reward",
    "soft_update",
    "critic_loss_gradients",
    "actor_loss_gradients",
    "train",
    "evaluate_policy",
    "save_checkpoint",
    "load_checkpoint",
]

log = logging.getLogger(__name__)


def observe(rho):
    """Real parts row-major followed by imaginary parts row-major.

    The state is Hermitized first so round-off never leaks into the imaginary diagonal.
    """
    rho = np.asarray(rho, dtype=complex)
    rho = 0.5 * (rho + rho.conj().T)
    return np.concatenate([rho.real.ravel(), rho.imag.ravel()])


def reward(bound, step, n_slices):
    if step != n_slices:
        return 0.0
    if not np.isfinite(bound):
        return 0.0
    return float(100.0 * sum(10.0 ** (-(10.0**n) * bound) for n in range(1, 5)))


def soft_update(target, online, tau):
    """target <- tau * online + (1 - tau) * target, in place; returns ``target``."""
    if not target.same_architecture(online):
        raise ValueError("target and online networks differ in architecture")
    target.flat *= 1 - tau
    target.flat += np.multiply(online.flat, tau, dtype=target.flat.dtype)
    return target


class OUNoise:
    """Ornstein-Uhlenbeck process x <- x - theta x + sigma N(0, 1), one per channel."""

    def __init__(self, size, theta=0.15, sigma=0.2, rng=None, x0=None):
        self.size = size
        self.theta = theta
        self.sigma = sigma
        self.rng = np.random.default_rng() if rng is None else rng
        self.x0 = np.zeros(size) if x0 is None else np.array(x0, dtype=float)
        self.reset()

    def reset(self):
        self.state = self.x0.copy()

    def sample(self):
        self.state = self.state - self.theta * self.state + self.sigma * self.rng.normal(size=self.size)
        return self.state.copy()


class ReplayMemory:
    """Fixed-capacity ring buffer of (s, a, r, s', terminal) samples."""

    def __init__(self, capacity, obs_dim, act_dim, dtype=np.float64):
        self.capacity = int(capacity)
        self.s = np.zeros((self.capacity, obs_dim), dtype=dtype)
        self.a = np.zeros((self.capacity, act_dim), dtype=dtype)
        self.r = np.zeros(self.capacity)
        self.s2 = np.zeros((self.capacity, obs_dim), dtype=dtype)
        self.done = np.zeros(self.capacity, dtype=bool)
        self.size = 0
        self._next = 0

    def __len__(self):
        return self.size

    def push(self, s, a, r, s2, done):
        k = self._next
        self.s[k], self.a[k], self.r[k], self.s2[k], self.done[k] = s, a, r, s2, done
        self._next = (k + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, rng, batch):
        return rng.integers(0, self.size, size=batch)

    def sample(self, rng, batch):
        idx = self.sample_indices(rng, batch)
        return self.s[idx], self.a[idx], self.r[idx], self.s2[idx], self.done[idx]


class QuantumEnv:
    """One episode = N slices starting from the probe state."""

    def __init__(self, scenario):
        self.scenario = scenario
        s = scenario
        self._base = s.dt * build_liouvillian(s.free_hamiltonian(s.params), s.noise)
        self._ctrl = np.array([s.dt * commutator_superop(h) for h in s.control_ops])
        self.reset()

    def reset(self):
        self.rho = np.array(self.scenario.probe, dtype=complex)
        self.step_index = 0
        self.actions = []
        return observe(self.rho)

    def step(self, action):
        """Apply one slice; returns (observation, reward, done, bound)."""
        action = np.asarray(action, dtype=float)
        gen = self._base + np.tensordot(action, self._ctrl, axes=1)
        v = expm(gen) @ self.rho.reshape(-1, order="F")
        self.rho = v.reshape((DIM, DIM), order="F")
        check_density_matrix(self.rho, f"at slice {self.step_index + 1}")
        self.actions.append(action.copy())
        self.step_index += 1
        n = self.scenario.n_slices
        done = self.step_index == n
        bound = np.nan
        if done:
            bound = evaluate(self.scenario, self.pulse(), series=False).cr_bound
        return observe(self.rho), reward(bound, self.step_index, n), done, bound

    def pulse(self):
        return np.array(self.actions).T


@dataclass
class TrainConfig:
    episodes: int = 10000
    replay_capacity: int = 50000
    batch_size: int = 64
    discount: float = 0.99
    actor_lr: float = 1e-4
    critic_lr: float = 1e-4
    tau: float = 1e-3
    ou_theta: float = 0.15
    ou_sigma: float = None
    hidden: tuple = (400, 300)
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.discount < 1:
            raise ValueError("discount must lie in [0, 1)")
        self.hidden = tuple(self.hidden)


@dataclass
class TrainResult:
    actor: Mlp
    critic: Mlp
    config: TrainConfig
    curve: list = field(default_factory=list)
    wall_time: float = 0.0


def critic_loss_gradients(critic, s, a, y):
    """Mean squared error between Q(s, a) and targets ``y``; returns (loss, grads)."""
    q, cache = critic.forward(s, a, cache=True)
    diff = q[:, 0] - np.asarray(y, dtype=q.dtype)
    loss = float(np.mean(diff**2))
    grads, _, _ = critic.backward(cache, diff[:, None] * (2.0 / len(y)))
    return loss, grads


def actor_loss_gradients(actor, critic, s):
    """Policy loss -mean Q(s, mu(s)); returns (loss, actor grads)."""
    a, a_cache = actor.forward(s, cache=True)
    q, q_cache = critic.forward(s, a, cache=True)
    _, _, grad_a = critic.backward(q_cache, np.full_like(q, -1.0 / len(s)), param_grads=False)
    grads, _, _ = actor.backward(a_cache, grad_a)
    return float(-np.mean(q)), grads


def train(scenario, config=None, progress=None):
    """Run DDPG on ``scenario``; ``curve`` rows are (episode, reward, cr_bound)."""
    config = config or TrainConfig()
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    init_rng, noise_rng, sample_rng = (np.random.default_rng(s) for s in seeds)
    p, u_max = scenario.n_controls, scenario.u_max
    obs_dim = 2 * DIM * DIM
    dtype = np.dtype(config.dtype)
    actor = actor_network(p, u_max, init_rng, obs_dim, config.hidden, dtype)
    critic = critic_network(p, init_rng, obs_dim, config.hidden, dtype)
    actor_t, critic_t = actor.copy(), critic.copy()
    actor_opt = Adam(actor.flat.size, lr=config.actor_lr, dtype=dtype)
    critic_opt = Adam(critic.flat.size, lr=config.critic_lr, dtype=dtype)
    sigma = 0.2 * u_max if config.ou_sigma is None else config.ou_sigma
    noise = OUNoise(p, config.ou_theta, sigma, noise_rng)
    memory = ReplayMemory(config.replay_capacity, obs_dim, p, dtype)
    env = QuantumEnv(scenario)
    curve = []
    start = time.perf_counter()
    for ep in range(config.episodes):
        s = env.reset()
        noise.reset()
        r, bound = 0.0, np.nan
        try:
            for _ in range(scenario.n_slices):
                a = np.clip(actor.forward(s) + noise.sample(), -u_max, u_max)
                s2, r, done, bound = env.step(a)
                memory.push(s, a, r, s2, done)
                s = s2
                if len(memory) >= config.batch_size:
                    _update(actor, critic, actor_t, critic_t, actor_opt, critic_opt,
                            memory, sample_rng, config)
        except PropagationError as exc:
            log.warning("episode %d aborted: %s", ep, exc)
            r, bound = 0.0, np.inf
        curve.append((ep, r, bound))
        if progress is not None:
            progress(ep, r, bound)
    return TrainResult(actor=actor, critic=critic, config=config, curve=curve,
                       wall_time=time.perf_counter() - start)


def _update(actor, critic, actor_t, critic_t, actor_opt, critic_opt, memory, rng, config):
    s, a, r, s2, done = memory.sample(rng, config.batch_size)
    q_next = critic_t.forward(s2, actor_t.forward(s2))[:, 0]
    y = (r + config.discount * np.where(done, 0.0, q_next)).astype(actor.dtype)
    _, grads = critic_loss_gradients(critic, s, a, y)
    critic_opt.step(critic.flat, critic.flatten(grads))
    _, grads = actor_loss_gradients(actor, critic, s)
    actor_opt.step(actor.flat, actor.flatten(grads))
    soft_update(critic_t, critic, config.tau)
    soft_update(actor_t, actor, config.tau)


def evaluate_policy(actor, scenario):
    """Noise-free rollout; returns (pulse, tr F^-1 at T)."""
    env = QuantumEnv(scenario)
    s = env.reset()
    bound = np.inf
    for _ in range(scenario.n_slices):
        a = np.clip(actor.forward(s), -scenario.u_max, scenario.u_max)
        s, _, _, bound = env.step(a)
    return env.pulse(), bound


def save_checkpoint(path, result, scenario):
    record = {
        "actor": result.actor.to_dict(),
        "critic": result.critic.to_dict(),
        "u_max": scenario.u_max,
        "scenario": scenario.to_dict(),
        "training": {k: (list(v) if isinstance(v, tuple) else v)
                     for k, v in asdict(result.config).items()},
        "seed": result.config.seed,
    }
    with open(path, "w") as fh:
        json.dump(record, fh)


def load_checkpoint(path):
    """Return ``(actor, scenario, record)`` from a JSON checkpoint."""
    with open(path) as fh:
        record = json.load(fh)
    actor = Mlp.from_dict(record["actor"])
    return actor, scenario_from_dict(record["scenario"]), record
