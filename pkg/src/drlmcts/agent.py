"""Detection as an MDP, actor-critic/state-value losses, and self-play training.

At step ``l`` the agent sees the state

    [y; y'; H^T y'; chi_l; chi_{l-1}; b; d]

where ``chi_l`` is the recovered tail zero-padded to length ``m``, and picks
the next element ``x_{m-l}``.  The reward is the negated cumulative path
metric after the action.  Rewards and final returns enter the losses
multiplied by ``reward_scale`` so they fit the tanh-bounded value heads.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import nn
from .errors import DegenerateChannelError, InvalidParameterError, TrainingDivergenceError
from .nn import Mlp, RmsPropState
from .scenario import Scenario, TrainConfig
from .signal_model import (
    PartialPath,
    RealSystem,
    generate_varying_channel,
    simulate_system,
)

__all__ = [
    "Agent",
    "Transition",
    "TransitionBatch",
    "build_state",
    "td_error",
    "critic_loss_and_grad",
    "actor_loss_and_grad",
    "state_value_loss_and_grad",
    "sample_action",
    "play_episodes",
    "self_play_episode",
    "detect_drl",
    "train",
    "write_training_log",
]

log = logging.getLogger(__name__)

LOG_CLAMP = 1e-12


@dataclass
class Agent:
    """Actor, critic and state-value networks plus the reward scale they share."""

    actor: Mlp
    critic: Mlp
    state_value: Mlp
    reward_scale: float

    @classmethod
    def create(cls, m: int, n: int, n_t: int, n_actions: int, seed: int = 0,
               reward_scale: float | None = None, l2: Sequence[float] = (0.0, 0.0, 0.0)) -> "Agent":
        actor = nn.init_weights(nn.build_actor(m, n, n_t, n_actions, l2[0]), seed)
        critic = nn.init_weights(nn.build_critic(m, n, n_t, l2[1]), seed + 1)
        value = nn.init_weights(nn.build_state_value(m, n, n_t, n_actions, l2[2]), seed + 2)
        scale = reward_scale if reward_scale is not None else 1.0 / (2 * n)
        return cls(actor, critic, value, scale)

    @property
    def nets(self) -> tuple[Mlp, Mlp, Mlp]:
        return (self.actor, self.critic, self.state_value)

    def copy(self) -> "Agent":
        return Agent(self.actor.copy(), self.critic.copy(), self.state_value.copy(),
                     self.reward_scale)

    def policy(self, state: np.ndarray) -> np.ndarray:
        return nn.forward(self.actor, state)[0]

    def value(self, state: np.ndarray, policy: np.ndarray) -> np.ndarray:
        """Scaled prediction of the final ``-d(x_1^m)``."""
        out = nn.forward(self.state_value, np.concatenate([state, policy], axis=-1))[0]
        return out[..., 0]

    def save(self, path) -> None:
        nn.save_checkpoint(self.nets, path)

    @classmethod
    def load(cls, path, reward_scale: float) -> "Agent":
        nets = nn.load_checkpoint(path)
        if len(nets) != 3:
            raise nn.CheckpointCorruptError(f"expected 3 networks, found {len(nets)}")
        return cls(*nets, reward_scale=reward_scale)


# -- states -------------------------------------------------------------------

def build_state(sys: RealSystem, path: PartialPath) -> np.ndarray:
    """State vector for the partial path ``path`` (length ``4m + n + 2``)."""
    m = sys.m
    l = path.step
    chi = np.zeros(m)
    chi_prev = np.zeros(m)
    if l:
        tail = path.symbols[::-1]  # x_{m-l+1}, ..., x_m
        chi[m - l:] = tail
        chi_prev[m - l + 1:] = tail[1:]
    return np.concatenate([sys.y, sys.y_prime, sys.Hty, chi, chi_prev,
                           [path.last_branch, path.cum_metric]])


# -- transitions ----------------------------------------------------------------

@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float  # raw, i.e. -d(x_{m-l}^m)
    next_state: np.ndarray
    step: int
    episode_return: float = 0.0


@dataclass
class TransitionBatch:
    """``B`` complete episodes stored as arrays.

    ``states[j, l]`` is ``s_l`` of episode ``j``; ``next_states[j, l]`` is
    ``s_{l+1}``.  Rewards and returns are raw (unscaled) metrics.
    """

    states: np.ndarray  # (B, m, S)
    next_states: np.ndarray  # (B, m, S)
    actions: np.ndarray  # (B, m) int
    rewards: np.ndarray  # (B, m)
    returns: np.ndarray  # (B,)
    n_actions: int

    @property
    def episodes(self) -> int:
        return self.states.shape[0]

    @property
    def m(self) -> int:
        return self.states.shape[1]

    def transitions(self, j: int = 0) -> list[Transition]:
        return [Transition(self.states[j, l], int(self.actions[j, l]), float(self.rewards[j, l]),
                           self.next_states[j, l], l, float(self.returns[j]))
                for l in range(self.m)]

    @classmethod
    def from_transitions(cls, episodes: Sequence[Sequence[Transition]],
                         n_actions: int) -> "TransitionBatch":
        if not episodes:
            raise InvalidParameterError("empty batch")
        episodes = [sorted(ep, key=lambda t: t.step) for ep in episodes]
        return cls(
            states=np.array([[t.state for t in ep] for ep in episodes]),
            next_states=np.array([[t.next_state for t in ep] for ep in episodes]),
            actions=np.array([[t.action for t in ep] for ep in episodes], dtype=int),
            rewards=np.array([[t.reward for t in ep] for ep in episodes]),
            returns=np.array([ep[-1].episode_return for ep in episodes]),
            n_actions=n_actions,
        )


def _as_batch(batch, n_actions: int | None = None) -> TransitionBatch:
    if isinstance(batch, TransitionBatch):
        return batch
    batch = list(batch)
    if batch and isinstance(batch[0], Transition):
        batch = [batch]
    if n_actions is None:
        raise InvalidParameterError("n_actions is required for transition lists")
    return TransitionBatch.from_transitions(batch, n_actions)


# -- losses -------------------------------------------------------------------

def td_error(reward: float, q_l: float, q_next: float, gamma: float, m: int, step: int) -> float:
    """``r + gamma**(m-l) * q_{l+1} - q_l`` with ``q_m = 0`` at the last step."""
    if not 0 <= step <= m - 1:
        raise InvalidParameterError(f"step must lie in [0, {m - 1}]")
    if step == m - 1:
        q_next = 0.0
    return reward + gamma ** (m - step) * q_next - q_l


def _discounts(gamma: float, m: int) -> np.ndarray:
    return gamma ** (m - np.arange(m, dtype=float))


def _critic_td(batch: TransitionBatch, critic: Mlp, gamma: float, scale: float):
    B, m, S = batch.states.shape
    q, cache = nn.forward(critic, batch.states.reshape(B * m, S))
    q = q[:, 0].reshape(B, m)
    q_next = np.zeros_like(q)
    q_next[:, :-1] = q[:, 1:]
    td = scale * batch.rewards + _discounts(gamma, m) * q_next - q
    return td, cache


def critic_loss_and_grad(batch, agent: Agent, cfg: TrainConfig):
    """Mean-over-episodes squared TD error plus ``c1 ||theta_c||^2``.

    The bootstrap target is held constant.
    """
    batch = _as_batch(batch, agent.actor.out_dim)
    B, m, _ = batch.states.shape
    td, cache = _critic_td(batch, agent.critic, cfg.gamma, agent.reward_scale)
    loss = float(np.sum(td * td)) / B + cfg.c1 * agent.critic.l2_norm_sq()
    if not np.isfinite(loss):
        raise TrainingDivergenceError("critic loss is not finite")
    dq = (-2.0 / B) * td.reshape(B * m, 1)
    grads = nn.add_l2(agent.critic, nn.backward(agent.critic, cache, dq), cfg.c1)
    return loss, grads


def _entropy(p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    logp = np.log(np.maximum(p, LOG_CLAMP))
    return -np.sum(p * logp, axis=-1), logp


def actor_loss_and_grad(batch, agent: Agent, cfg: TrainConfig):
    """TD-weighted cross entropy minus ``c2`` times the entropy, plus ``c3 ||theta_a||^2``.

    The TD error is a constant coefficient (no gradient into the critic).
    """
    batch = _as_batch(batch, agent.actor.out_dim)
    B, m, S = batch.states.shape
    td, _ = _critic_td(batch, agent.critic, cfg.gamma, agent.reward_scale)
    td = td.reshape(B * m)
    p, cache = nn.forward(agent.actor, batch.states.reshape(B * m, S))
    onehot = np.zeros_like(p)
    onehot[np.arange(B * m), batch.actions.reshape(B * m)] = 1.0
    ent, logp = _entropy(p)
    ce = -np.sum(onehot * logp, axis=-1)
    loss = float(np.sum(td * ce - cfg.c2 * ent)) / B + cfg.c3 * agent.actor.l2_norm_sq()
    if not np.isfinite(loss):
        raise TrainingDivergenceError("actor loss is not finite")
    dlogits = td[:, None] * (p - onehot) + cfg.c2 * p * (logp + ent[:, None])
    grads = nn.backward(agent.actor, cache, dlogits / B, wrt="logits")
    return loss, nn.add_l2(agent.actor, grads, cfg.c3)


def state_value_loss_and_grad(batch, agent: Agent, cfg: TrainConfig):
    """Squared error between ``u_l`` and the scaled final return, plus ``c4 ||theta_s||^2``.

    The policy part of the input is a constant.
    """
    batch = _as_batch(batch, agent.actor.out_dim)
    B, m, S = batch.states.shape
    flat = batch.states.reshape(B * m, S)
    p = nn.forward(agent.actor, flat)[0]
    u, cache = nn.forward(agent.state_value, np.concatenate([flat, p], axis=1))
    target = np.repeat(agent.reward_scale * batch.returns, m)
    err = u[:, 0] - target
    loss = float(np.sum(err * err)) / B + cfg.c4 * agent.state_value.l2_norm_sq()
    if not np.isfinite(loss):
        raise TrainingDivergenceError("state-value loss is not finite")
    grads = nn.backward(agent.state_value, cache, (2.0 / B) * err[:, None])
    return loss, nn.add_l2(agent.state_value, grads, cfg.c4)


# -- acting -------------------------------------------------------------------

def sample_action(p_hat: np.ndarray, rng: np.random.Generator | None = None,
                  mode: str = "sample") -> int:
    """Draw from (``sample``) or take the argmax of (``greedy``) a distribution.

    Greedy ties resolve to the lowest index.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    if abs(p_hat.sum() - 1.0) > 1e-6:
        raise InvalidParameterError("p_hat must sum to 1")
    if mode == "greedy":
        return int(np.argmax(p_hat))
    if mode != "sample":
        raise InvalidParameterError(f"unknown mode {mode!r}")
    cdf = np.cumsum(p_hat)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, len(p_hat) - 1)


def play_episodes(systems: Sequence[RealSystem], agent: Agent, rng: np.random.Generator | None,
                  mode: str = "sample", forced_actions: np.ndarray | None = None) -> TransitionBatch:
    """Run the actor on every system in lockstep and record full episodes."""
    B = len(systems)
    sys0 = systems[0]
    m, n = sys0.m, sys0.n
    levels = sys0.constellation.levels
    q = len(levels)
    Y = np.array([s.y for s in systems])
    R = np.array([s.R for s in systems])
    prefix = np.concatenate([Y, np.array([s.y_prime for s in systems]),
                             np.array([s.Hty for s in systems])], axis=1)
    S = nn.state_dim(m, n)
    states = np.zeros((B, m + 1, S))
    actions = np.zeros((B, m), dtype=int)
    rewards = np.zeros((B, m))
    chi = np.zeros((B, m))
    chi_prev = np.zeros((B, m))
    b = np.zeros(B)
    d = np.zeros(B)
    rows = np.arange(B)
    for l in range(m + 1):
        states[:, l] = np.concatenate([prefix, chi, chi_prev, b[:, None], d[:, None]], axis=1)
        if l == m:
            break
        if forced_actions is not None:
            a = np.asarray(forced_actions)[:, l].astype(int)
        else:
            p = nn.forward(agent.actor, states[:, l])[0]
            if mode == "greedy":
                a = np.argmax(p, axis=1)
            else:
                cdf = np.cumsum(p, axis=1)
                u = rng.random(B)[:, None] * cdf[:, -1:]
                a = np.minimum(np.sum(cdf <= u, axis=1), q - 1)
        k = m - 1 - l
        chi_prev = chi.copy()
        chi[rows, k] = levels[a]
        resid = Y[:, k] - np.einsum("bi,bi->b", R[:, k, k:], chi[:, k:])
        b = resid * resid
        d = d + b
        actions[:, l] = a
        rewards[:, l] = -d
    return TransitionBatch(states[:, :m].copy(), states[:, 1:].copy(), actions, rewards,
                           rewards[:, -1].copy(), q)


def self_play_episode(sys: RealSystem, agent: Agent, rng: np.random.Generator,
                      forced_actions: Sequence[int] | None = None) -> list[Transition]:
    """One sampled detection episode as ``m`` transitions."""
    forced = None if forced_actions is None else np.asarray([forced_actions])
    return play_episodes([sys], agent, rng, "sample", forced).transitions(0)


def detect_drl(sys: RealSystem, agent: Agent) -> np.ndarray:
    """Greedy detector: take the most probable action at every step."""
    levels = sys.constellation.pam_levels
    path = PartialPath()
    for _ in range(sys.m):
        p = agent.policy(build_state(sys, path))
        path = path.extend(sys, levels[sample_action(p, None, "greedy")])
    return path.tail()


# -- training -----------------------------------------------------------------

def _training_systems(scenario: Scenario, channel, count: int, first_j: int,
                      rng: np.random.Generator) -> list[RealSystem]:
    lo, hi = scenario.train_snr_range()
    systems = []
    j = first_j
    while len(systems) < count:
        H = generate_varying_channel(channel, j)
        j += 1
        try:
            systems.append(simulate_system(H, scenario.constellation, rng.uniform(lo, hi), rng))
        except DegenerateChannelError:
            log.warning("degenerate training channel at j=%d, resampling", j - 1)
    return systems


def _worker_gradients(agent: Agent, cfg: TrainConfig, scenario: Scenario, channel,
                      update: int, worker: int, count: int, first_j: int):
    rng = np.random.default_rng([cfg.seed, 2, update, worker])
    systems = _training_systems(scenario, channel, count, first_j, rng)
    batch = play_episodes(systems, agent, rng, "sample")
    lc, gc = critic_loss_and_grad(batch, agent, cfg)
    la, ga = actor_loss_and_grad(batch, agent, cfg)
    ls, gs = state_value_loss_and_grad(batch, agent, cfg)
    return count, (lc, la, ls), (ga, gc, gs), float(np.mean(batch.returns))


def _split(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if w < extra else 0) for w in range(parts)]


def _average(results) -> tuple:
    total = sum(r[0] for r in results)
    weights = [r[0] / total for r in results]
    losses = tuple(sum(w * r[1][i] for w, r in zip(weights, results)) for i in range(3))
    grads = []
    for i in range(3):
        per_net = None
        for w, r in zip(weights, results):
            flat = [w * g for g in nn.flatten_grads(r[2][i])]
            per_net = flat if per_net is None else [a + b for a, b in zip(per_net, flat)]
        grads.append(per_net)
    mean_return = sum(w * r[3] for w, r in zip(weights, results))
    return losses, grads, mean_return


def train(cfg: TrainConfig, scenario: Scenario, agent: Agent | None = None,
          checkpoint_path=None, checkpoint_every: int = 100,
          max_threads: int | None = None, progress=None):
    """Synchronous multi-worker self-play training.

    Each round, every worker plays its share of ``episodes_per_update``
    episodes against the current global parameters and returns local
    gradients of all three losses; the averaged gradients drive one RMSProp
    step per network.  Returns ``(agent, log_rows)``.
    """
    if agent is None:
        agent = Agent.create(scenario.m, scenario.n, scenario.n_t, scenario.constellation.size,
                             seed=cfg.seed, reward_scale=cfg.resolved_reward_scale(scenario.n))
    for net, c in zip(agent.nets, (cfg.c3, cfg.c1, cfg.c4)):
        net.l2_coeff = c
    optimizers = [RmsPropState.for_params(net.parameters(), cfg.learning_rate)
                  for net in agent.nets]
    channel = scenario.training_channel()
    shares = _split(cfg.episodes_per_update, cfg.workers)
    offsets = np.concatenate([[0], np.cumsum(shares)])
    # headroom so degenerate-channel resamples never collide with the next worker's indices
    stride = 2 * cfg.episodes_per_update
    rows = []
    threads = min(cfg.workers, max_threads or cfg.workers)
    pool = ThreadPoolExecutor(threads) if threads > 1 else None
    t0 = time.perf_counter()
    try:
        for update in range(cfg.total_updates):
            jobs = [(agent, cfg, scenario, channel, update, w, shares[w],
                     1 + update * stride + 2 * int(offsets[w]))
                    for w in range(cfg.workers)]
            if pool is None:
                results = [_worker_gradients(*job) for job in jobs]
            else:
                results = list(pool.map(lambda job: _worker_gradients(*job), jobs))
            losses, grads, mean_return = _average(results)
            # nothing is mutated until every loss and gradient is known to be finite
            if not all(np.isfinite(losses)) or not all(
                    np.all(np.isfinite(g)) for net_grads in grads for g in net_grads):
                raise TrainingDivergenceError(
                    f"training diverged at update {update}", last_good=agent)
            for net, opt, g in zip(agent.nets, optimizers, grads):
                nn.rmsprop_step(opt, net.parameters(), g)
                net.touch()
            rows.append({
                "update": update,
                "critic_loss": losses[0],
                "actor_loss": losses[1],
                "state_value_loss": losses[2],
                "mean_return": mean_return,
                "wall_s": time.perf_counter() - t0,
            })
            if progress is not None:
                progress(rows[-1])
            if checkpoint_path is not None and (update + 1) % checkpoint_every == 0:
                agent.save(checkpoint_path)
    finally:
        if pool is not None:
            pool.shutdown()
    if checkpoint_path is not None:
        agent.save(checkpoint_path)
    return agent, rows


LOG_FIELDS = ("update", "critic_loss", "actor_loss", "state_value_loss", "mean_return", "wall_s")


def write_training_log(rows, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in LOG_FIELDS})
