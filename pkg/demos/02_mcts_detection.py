"""Monte Carlo tree search as a detector.

MCTS needs no training: each playout descends by UCT, expands a leaf,
finishes the vector with random symbols and backs up minus the path metric.
More playouts give a better estimate of which first symbol is best, which
shows up as a lower error rate.

Run with ``python demos/02_mcts_detection.py``.
"""

import numpy as np

from drlmcts import BPSK, MctsConfig, detect_mcts, detect_ml, random_base_channel, simulate_system
from drlmcts.mcts import MctsNode, run_playout

rng = np.random.default_rng(3)
H = random_base_channel(4, 4, BPSK, 0.0, 11).H_c
sys = simulate_system(H, BPSK, 10.0, rng)

# Look inside one tree: after 100 playouts the root children carry the
# running mean of the backed-up values and their visit counts.
root = MctsNode()
for _ in range(100):
    run_playout(root, sys, rng, c_uct=20.0)
for child in root.children:
    print(f"first symbol {child.symbol:+.0f}: mean value {child.d_bar:8.3f}, visits {child.visits}")
print("ML first symbol:", detect_ml(sys)[-1])

# Error rate against playout budget on a fixed set of instances.
systems = [simulate_system(random_base_channel(4, 4, BPSK, 0.0, 100 + t).H_c, BPSK, 8.0, rng)
           for t in range(300)]
ml_errors = sum(np.count_nonzero(detect_ml(s) != s.x_true) for s in systems)
print(f"ML errors: {ml_errors}")
for playouts in (5, 20, 200):
    cfg = MctsConfig(c_uct=20.0, playouts_initial=playouts, rng_seed=0)
    e = sum(np.count_nonzero(detect_mcts(s, cfg) != s.x_true) for s in systems)
    print(f"MCTS with {playouts:3d} playouts: {e} errors")
