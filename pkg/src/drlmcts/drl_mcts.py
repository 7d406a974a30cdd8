"""Tree search guided by the trained policy and state-value networks.

Random rollouts are replaced by a state-value estimate at the expanded leaf,
child priors come from the actor, and selection uses PUCT.  The most visited
root child is taken at every step; the tree is reused and the playout budget
decays as in plain MCTS.

Node values live in scaled units (``-d * reward_scale``).  ``c_puct`` is
given in raw metric units and converted with the same scale, so a setting
such as ``c_puct = 20`` weighs exploration against unscaled path metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agent import Agent, build_state
from .errors import ConfigurationError, InvalidParameterError
from .mcts import PlayoutRecord, playouts_at_step
from .signal_model import PartialPath, RealSystem

__all__ = [
    "DrlNode",
    "DrlMctsConfig",
    "select_puct",
    "expand_drl_node",
    "run_drl_playout",
    "detect_drl_mcts",
]


class DrlNode:
    __slots__ = ("symbol", "symbols", "u_bar", "prior", "select_count", "children",
                 "cum_metric", "branch", "cached_policy")

    def __init__(self, symbols: tuple = (), cum_metric: float = 0.0, branch: float = 0.0,
                 prior: float = 0.0):
        self.symbols = symbols
        self.symbol = symbols[-1] if symbols else None
        self.cum_metric = cum_metric
        self.branch = branch
        self.prior = prior
        self.u_bar = 0.0
        self.select_count = 0
        self.children: list[DrlNode] = []
        self.cached_policy = None

    @property
    def depth(self) -> int:
        return len(self.symbols)

    def path(self) -> PartialPath:
        return PartialPath(self.symbols, self.cum_metric, self.branch)

    def __repr__(self):
        return (f"DrlNode(symbols={self.symbols}, u_bar={self.u_bar:.4g}, "
                f"prior={self.prior:.3g}, z={self.select_count})")


@dataclass(frozen=True)
class DrlMctsConfig:
    c_puct: float = 20.0
    playouts_initial: int = 20
    beta_p: float = 0.95
    root_noise: bool = False
    dirichlet_alpha: float = 0.3
    noise_fraction: float = 0.25
    rng_seed: int = 0

    def __post_init__(self):
        if self.c_puct < 0:
            raise InvalidParameterError("c_puct must be nonnegative")
        if self.playouts_initial < 1:
            raise InvalidParameterError("playouts_initial must be at least 1")
        if not 0.0 < self.beta_p < 1.0:
            raise InvalidParameterError("beta_p must lie in (0, 1)")


class _Evaluator:
    """Wraps the networks and counts forward passes."""

    def __init__(self, agent: Agent):
        if agent is None:
            raise ConfigurationError("DRL-MCTS needs a trained agent")
        self.agent = agent
        self.actor_calls = 0
        self.value_calls = 0

    def __call__(self, sys: RealSystem, node: DrlNode) -> tuple[np.ndarray, float]:
        state = build_state(sys, node.path())
        p = self.agent.policy(state)
        self.actor_calls += 1
        u = float(self.agent.value(state, p))
        self.value_calls += 1
        return p, u


def select_puct(node: DrlNode, c_puct: float) -> int:
    """Child index maximising ``U_bar + c_puct * P * sqrt(Z) / (1 + z)``; ties to the lowest index."""
    sqrt_parent = math.sqrt(node.select_count)
    best_i = 0
    best = -math.inf
    for i, child in enumerate(node.children):
        score = child.u_bar + c_puct * child.prior * sqrt_parent / (1.0 + child.select_count)
        if score > best:
            best = score
            best_i = i
    return best_i


def expand_drl_node(node: DrlNode, sys: RealSystem, policy: np.ndarray) -> None:
    """Add one child per PAM level with priors taken from ``policy``."""
    depth = len(node.symbols)
    k = sys.m - 1 - depth
    row = sys.r_rows[k]
    acc = sys.y_list[k]
    symbols = node.symbols
    for j in range(depth):
        acc -= row[j] * symbols[j]
    rkk = sys.r_diag[k]
    base = node.cum_metric
    children = []
    for i, v in enumerate(sys.constellation.pam_levels):
        r = acc - rkk * v
        b = r * r
        children.append(DrlNode(symbols + (v,), base + b, b, float(policy[i])))
    node.cached_policy = policy
    node.children = children


def _backpropagate(path, value: float) -> None:
    for nd in path:
        nd.select_count += 1
        nd.u_bar += (value - nd.u_bar) / nd.select_count


def run_drl_playout(root: DrlNode, sys: RealSystem, agent, c_puct: float) -> PlayoutRecord:
    """PUCT descent, network expansion of a non-terminal leaf, value backup.

    ``agent`` is an :class:`Agent` or an evaluator callable returning
    ``(policy, value)`` for a node.  ``c_puct`` is used as given, in the
    units of the node values.
    """
    evaluate = agent if callable(agent) and not isinstance(agent, Agent) else _Evaluator(agent)
    node = root
    path = [root]
    while node.children:
        node = node.children[select_puct(node, c_puct)]
        path.append(node)
    if len(node.symbols) < sys.m:
        policy, value = evaluate(sys, node)
        expand_drl_node(node, sys, policy)
    else:
        value = -node.cum_metric * _scale_of(evaluate)
    _backpropagate(path, value)
    return PlayoutRecord(path, value)


def _scale_of(evaluate) -> float:
    agent = getattr(evaluate, "agent", None)
    return agent.reward_scale if agent is not None else getattr(evaluate, "reward_scale", 1.0)


def _add_root_noise(root: DrlNode, cfg: DrlMctsConfig, rng: np.random.Generator) -> None:
    noise = rng.dirichlet([cfg.dirichlet_alpha] * len(root.children))
    for child, eta in zip(root.children, noise):
        child.prior = (1 - cfg.noise_fraction) * child.prior + cfg.noise_fraction * eta


def _best_child(node: DrlNode) -> DrlNode:
    best = node.children[0]
    for child in node.children[1:]:
        if (child.select_count, child.u_bar) > (best.select_count, best.u_bar):
            best = child
    return best


def detect_drl_mcts(sys: RealSystem, agent: Agent, cfg: DrlMctsConfig = DrlMctsConfig(),
                    rng: np.random.Generator | None = None, evaluator=None) -> np.ndarray:
    """Recover ``x`` with network-guided search; ``playouts_initial=1`` is greedy DRL."""
    evaluate = evaluator if evaluator is not None else _Evaluator(agent)
    c_eff = cfg.c_puct * _scale_of(evaluate)
    if cfg.root_noise and rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    root = DrlNode()
    # the root is expanded outside the playout budget so the first counted
    # playout already chooses among its children
    policy, value = evaluate(sys, root)
    expand_drl_node(root, sys, policy)
    _backpropagate([root], value)
    for step in range(sys.m):
        if not root.children:
            policy, value = evaluate(sys, root)
            expand_drl_node(root, sys, policy)
            _backpropagate([root], value)
        if cfg.root_noise:
            _add_root_noise(root, cfg, rng)
        for _ in range(playouts_at_step(cfg.playouts_initial, cfg.beta_p, step)):
            run_drl_playout(root, sys, evaluate, c_eff)
        root = _best_child(root)
    return np.array(root.symbols[::-1], dtype=float)
