"""Self-play training of the actor, critic and state-value networks.

The agent detects one symbol per step; its reward is minus the branch metric
of the symbol it picked.  After a couple of thousand updates on a 2x2 BPSK
link the greedy policy is close to ML.  The checkpoint written at the end is
reused by the next demo.

Run with ``python demos/03_train_agent.py`` (about a minute).
"""

from pathlib import Path

import numpy as np

from drlmcts import Agent, Scenario, TrainConfig, detect_drl, detect_ml, train
from drlmcts.bench import generate_instances

OUT = Path(__file__).with_name("quick2x2.ckpt")

cfg = TrainConfig(total_updates=2000, learning_rate=1e-3, reward_scale=0.02,
                  train_snr_db=(12.0, 12.0), seed=0)
scenario = Scenario(2, 2, "BPSK", 0.0, (0.0, 4.0, 8.0, 12.0), 2000, seed=5, train=cfg)


def report(row):
    if row["update"] % 250 == 0:
        print(f"update {row['update']:5d}  critic {row['critic_loss']:.4f}  "
              f"value {row['state_value_loss']:.4f}  mean return {row['mean_return']:.3f}")


untrained = Agent.create(scenario.m, scenario.n, scenario.n_t, 2, seed=cfg.seed,
                         reward_scale=cfg.reward_scale)
agent, rows = train(cfg, scenario, progress=report)
agent.save(OUT)
print("saved", OUT)

instances = generate_instances(scenario, 12.0, 2000, snr_index=3)
for name, detect in [("untrained greedy", lambda s: detect_drl(s, untrained)),
                     ("trained greedy", lambda s: detect_drl(s, agent)),
                     ("ML", detect_ml)]:
    errors = sum(np.count_nonzero(detect(s) != s.x_true) for s in instances)
    print(f"{name:17s} SER at 12 dB: {errors / (2 * len(instances)):.4f}")
