"""Command line entry point: ``train``, ``bench`` and ``detect``.

Exit status is 0 on success, 2 for configuration problems (bad scenario,
missing or malformed checkpoint, invalid parameters) and 3 for numerical
failures (training divergence, persistently degenerate channels).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .agent import Agent, train, write_training_log
from .bench import (
    worker_count,
    count_symbol_errors,
    emit_csv,
    make_detector,
    run_sweep,
    trial_instance,
)
from .errors import (
    CapacityError,
    CheckpointFormatError,
    ConfigurationError,
    DegenerateChannelError,
    InvalidParameterError,
    NumericalError,
    TrainingDivergenceError,
)
from .scenario import Scenario, load_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

log = logging.getLogger("drlmcts")


def _load_agent(path, scenario: Scenario) -> Agent | None:
    if path is None:
        return None
    if not Path(path).is_file():
        raise ConfigurationError(f"checkpoint {path} does not exist")
    return Agent.load(path, scenario.train.resolved_reward_scale(scenario.n))


def cmd_train(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg = scenario.train
    every = max(1, cfg.total_updates // 20)

    def progress(row):
        if row["update"] % every == 0 or row["update"] == cfg.total_updates - 1:
            log.info("update %d  critic %.4g  actor %.4g  value %.4g  return %.4g",
                     row["update"], row["critic_loss"], row["actor_loss"],
                     row["state_value_loss"], row["mean_return"])

    try:
        _, rows = train(cfg, scenario, checkpoint_path=args.out,
                        max_threads=worker_count(cfg.workers), progress=progress)
    except TrainingDivergenceError as exc:
        if exc.last_good is not None:
            exc.last_good.save(args.out)
            log.error("%s; last good parameters written to %s", exc, args.out)
        raise
    if args.log:
        write_training_log(rows, args.log)
    log.info("wrote %s", args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    scenario = load_scenario(args.scenario)
    agent = _load_agent(args.ckpt, scenario)
    results = run_sweep(scenario, agent, workers=args.workers)
    emit_csv(results, args.out)
    log.info("wrote %d rows to %s", len(results), args.out)
    return EXIT_OK


def cmd_detect(args) -> int:
    """Detect ``n`` random symbol vectors at one SNR and print every estimate."""
    scenario = load_scenario(args.scenario)
    if args.n < 1:
        raise ConfigurationError("--n must be at least 1")
    agent = _load_agent(args.ckpt, scenario)
    detectors = [(spec.label, make_detector(spec, agent)) for spec in scenario.detector_set]
    base = scenario.base_channel()
    errors = dict.fromkeys((label for label, _ in detectors), 0)
    out = sys.stdout
    out.write("trial,detector,x_true,x_hat,symbol_errors\n")
    for trial in range(args.n):
        system, _, _ = trial_instance(scenario, base, 0, args.snr, trial)
        truth = " ".join(f"{v:g}" for v in system.x_true)
        for i, (label, detect) in enumerate(detectors):
            x_hat = detect(system, np.random.default_rng([scenario.seed, 3, 0, trial, i]))
            e = count_symbol_errors(x_hat, system.x_true, system.constellation)
            errors[label] += e
            out.write(f"{trial},{label},{truth},{' '.join(f'{v:g}' for v in x_hat)},{e}\n")
    total = args.n * scenario.n_t
    for label, e in errors.items():
        log.info("%s: %d/%d symbol errors (SER %.6g)", label, e, total, e / total)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drlmcts", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="self-play training of the three networks")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True, help="checkpoint to write")
    p.add_argument("--log", help="optional CSV file for per-update losses")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("bench", help="SER / runtime sweep over the scenario's SNR grid")
    p.add_argument("--scenario", required=True)
    p.add_argument("--ckpt", help="checkpoint, needed for drl and drl_mcts detectors")
    p.add_argument("--out", required=True, help="CSV file to write")
    p.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: scenario value)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("detect", help="run the scenario's detectors on a few vectors")
    p.add_argument("--scenario", required=True)
    p.add_argument("--ckpt")
    p.add_argument("--snr", type=float, required=True, help="SNR in dB")
    p.add_argument("--n", type=int, default=10, help="number of symbol vectors")
    p.set_defaults(func=cmd_detect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigurationError, CheckpointFormatError, InvalidParameterError,
            CapacityError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (NumericalError, DegenerateChannelError) as exc:
        log.error("%s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
