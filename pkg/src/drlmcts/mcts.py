"""Monte Carlo tree search detection with random rollouts.

One search is run per recovered element.  Between steps the best root child
becomes the new root and keeps its subtree statistics, and the playout budget
shrinks geometrically by ``beta_p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import InvalidParameterError
from .signal_model import RealSystem

__all__ = [
    "MctsNode",
    "MctsConfig",
    "PlayoutRecord",
    "playouts_at_step",
    "expand_node",
    "select_uct",
    "run_playout",
    "detect_mcts",
    "count_nodes",
]


class MctsNode:
    """Search-tree node for the partial path ``symbols`` (recovery order)."""

    __slots__ = ("symbol", "symbols", "d_bar", "visits", "children", "cum_metric")

    def __init__(self, symbols: tuple = (), cum_metric: float = 0.0):
        self.symbols = symbols
        self.symbol = symbols[-1] if symbols else None
        self.cum_metric = cum_metric
        self.d_bar = 0.0
        self.visits = 0
        self.children: list[MctsNode] = []

    @property
    def depth(self) -> int:
        return len(self.symbols)

    def __repr__(self):
        return (f"MctsNode(symbols={self.symbols}, d_bar={self.d_bar:.4g}, "
                f"visits={self.visits}, children={len(self.children)})")


@dataclass(frozen=True)
class MctsConfig:
    c_uct: float = 350.0
    playouts_initial: int = 200
    beta_p: float = 0.95
    rng_seed: int = 0

    def __post_init__(self):
        if self.c_uct < 0:
            raise InvalidParameterError("c_uct must be nonnegative")
        if self.playouts_initial < 1:
            raise InvalidParameterError("playouts_initial must be at least 1")
        if not 0.0 < self.beta_p < 1.0:
            raise InvalidParameterError("beta_p must lie in (0, 1)")


class PlayoutRecord(NamedTuple):
    path: list
    value: float


def playouts_at_step(playouts_initial: int, beta_p: float, step: int) -> int:
    """Decayed playout budget ``floor(P0 * beta_p**step)``, at least one."""
    # the small guard keeps exact products such as 200 * 0.95**0 from flooring down
    return max(1, math.floor(playouts_initial * beta_p ** step + 1e-9))


def expand_node(node, sys: RealSystem, factory=MctsNode) -> None:
    """Attach one child per PAM level, each carrying its path metric."""
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
    for v in sys.constellation.pam_levels:
        r = acc - rkk * v
        children.append(factory(symbols + (v,), base + r * r))
    node.children = children


def _rollout_metric(node: MctsNode, sys: RealSystem, rng: np.random.Generator) -> float:
    m = sys.m
    depth = len(node.symbols)
    if depth == m:
        return node.cum_metric
    levels = sys.constellation.pam_levels
    draws = rng.integers(0, len(levels), size=m - depth).tolist()
    symbols = list(node.symbols)
    y, diag, rows = sys.y_list, sys.r_diag, sys.r_rows
    d = node.cum_metric
    for step, idx in zip(range(depth, m), draws):
        k = m - 1 - step
        row = rows[k]
        v = levels[idx]
        acc = y[k] - diag[k] * v
        for j in range(step):
            acc -= row[j] * symbols[j]
        d += acc * acc
        symbols.append(v)
    return d


def select_uct(node: MctsNode, c_uct: float) -> int:
    """Child index maximising ``D_bar + c_uct * sqrt(ln V / v)``.

    Unvisited children come first (lowest index); ties go to the lowest index.
    """
    children = node.children
    for i, child in enumerate(children):
        if child.visits == 0:
            return i
    log_parent = math.log(node.visits) if node.visits > 0 else 0.0
    best_i = 0
    best = -math.inf
    for i, child in enumerate(children):
        score = child.d_bar + c_uct * math.sqrt(log_parent / child.visits)
        if score > best:
            best = score
            best_i = i
    return best_i


def run_playout(root: MctsNode, sys: RealSystem, rng: np.random.Generator,
                c_uct: float) -> PlayoutRecord:
    """Selection, expansion, random simulation and backpropagation."""
    node = root
    path = [root]
    while node.children:
        node = node.children[select_uct(node, c_uct)]
        path.append(node)
    if len(node.symbols) < sys.m:
        expand_node(node, sys)
        node = node.children[int(rng.integers(0, len(node.children)))]
        path.append(node)
    value = -_rollout_metric(node, sys, rng)
    for nd in path:
        nd.visits += 1
        nd.d_bar += (value - nd.d_bar) / nd.visits
    return PlayoutRecord(path, value)


def _best_child(node: MctsNode) -> MctsNode:
    best = None
    for child in node.children:
        if child.visits == 0:
            continue
        if best is None or child.d_bar > best.d_bar:
            best = child
    return best if best is not None else node.children[0]


def detect_mcts(sys: RealSystem, cfg: MctsConfig = MctsConfig(),
                rng: np.random.Generator | None = None) -> np.ndarray:
    """Recover ``x`` element by element with a reused, decaying search tree."""
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    root = MctsNode()
    for step in range(sys.m):
        for _ in range(playouts_at_step(cfg.playouts_initial, cfg.beta_p, step)):
            run_playout(root, sys, rng, cfg.c_uct)
        root = _best_child(root)
    return np.array(root.symbols[::-1], dtype=float)


def count_nodes(node) -> int:
    total = 1
    stack = list(node.children)
    while stack:
        nd = stack.pop()
        total += 1
        stack.extend(nd.children)
    return total
