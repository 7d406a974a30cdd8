"""Network-guided tree search.

The trained actor supplies PUCT priors and the state-value network replaces
random rollouts.  With one playout the search only follows the actor's most
likely symbol, which is the greedy DRL detector; a handful of playouts lets
the value network correct it.

Run ``python demos/03_train_agent.py`` first, then
``python demos/04_drl_guided_search.py``.
"""

from pathlib import Path

import numpy as np

from drlmcts import Agent, DrlMctsConfig, Scenario, detect_drl, detect_drl_mcts, detect_ml
from drlmcts.bench import generate_instances

CKPT = Path(__file__).with_name("quick2x2.ckpt")
agent = Agent.load(CKPT, reward_scale=0.02)
scenario = Scenario(2, 2, "BPSK", 0.0, (12.0,), 1000, seed=5)
instances = generate_instances(scenario, 12.0, 1000)

# One playout reproduces the greedy detector exactly.
one = DrlMctsConfig(playouts_initial=1)
same = sum(np.array_equal(detect_drl_mcts(s, agent, one), detect_drl(s, agent)) for s in instances)
print(f"1 playout == greedy DRL on {same}/{len(instances)} instances")

for playouts in (1, 4, 16, 64):
    cfg = DrlMctsConfig(c_puct=5.0, playouts_initial=playouts)
    agree = sum(np.array_equal(detect_drl_mcts(s, agent, cfg), detect_ml(s)) for s in instances)
    print(f"{playouts:2d} playouts: output equals ML on {agree}/{len(instances)}")
