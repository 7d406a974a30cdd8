"""A paired SER sweep written to CSV, the same path the ``drlmcts bench`` command takes.

Every detector sees the same channel, symbols and noise in each trial, so the
differences between rows come from the detectors alone.

Run ``python demos/03_train_agent.py`` first, then
``python demos/05_benchmark_sweep.py``.
"""

from pathlib import Path

from drlmcts import Agent, emit_csv, load_scenario, read_csv, run_sweep

HERE = Path(__file__).parent
scenario = load_scenario(HERE.parent / "scenarios" / "quick2x2.txt")
agent = Agent.load(HERE / "quick2x2.ckpt", scenario.train.resolved_reward_scale(scenario.n))

results = run_sweep(scenario, agent, workers=1)
out = HERE / "quick2x2_ser.csv"
emit_csv(results, out)

print(f"{'detector':32s} {'SNR':>5s} {'SER':>9s} {'ms/vector':>10s}")
for r in read_csv(out, scenario.n_t):
    print(f"{r.detector:32s} {r.snr_db:5.1f} {r.ser:9.5f} {1e3 * r.mean_runtime_s:10.3f}")
