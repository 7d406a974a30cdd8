"""MIMO symbol detection by tree search over the QR-expanded ML metric.

Submodules
----------
signal_model
    Constellations, varying channels, real-valued QR model and tree metrics.
baseline
    Exact ML (branch and bound, exhaustive) and MMSE detectors.
mcts
    UCT tree search with random rollouts.
nn
    Small dense networks, backpropagation, RMSProp and the checkpoint format.
agent
    Detection MDP, actor/critic/state-value losses and self-play training.
drl_mcts
    PUCT search guided by the trained networks.
bench
    Paired Monte Carlo SER sweeps, runtime measurement and CSV output.
"""

from .agent import Agent, detect_drl, train
from .baseline import detect_ml, detect_ml_exhaustive, detect_mmse
from .bench import SerResult, emit_csv, measure_runtime, read_csv, run_sweep
from .drl_mcts import DrlMctsConfig, detect_drl_mcts
from .mcts import MctsConfig, detect_mcts
from .scenario import DetectorSpec, Scenario, TrainConfig, load_scenario, parse_scenario
from .signal_model import (
    BPSK,
    QAM16,
    QPSK,
    ComplexChannelInstance,
    Constellation,
    RealSystem,
    branch_metric,
    generate_varying_channel,
    get_constellation,
    path_metric,
    random_base_channel,
    simulate_system,
    to_real_system,
)

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "BPSK",
    "QAM16",
    "QPSK",
    "ComplexChannelInstance",
    "Constellation",
    "DetectorSpec",
    "DrlMctsConfig",
    "MctsConfig",
    "RealSystem",
    "Scenario",
    "SerResult",
    "TrainConfig",
    "branch_metric",
    "detect_drl",
    "detect_drl_mcts",
    "detect_mcts",
    "detect_ml",
    "detect_ml_exhaustive",
    "detect_mmse",
    "emit_csv",
    "generate_varying_channel",
    "get_constellation",
    "load_scenario",
    "measure_runtime",
    "parse_scenario",
    "path_metric",
    "random_base_channel",
    "read_csv",
    "run_sweep",
    "simulate_system",
    "to_real_system",
    "train",
]
