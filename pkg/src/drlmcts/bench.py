"""Monte Carlo SER sweeps, runtime measurement and CSV output.

Every trial draws its channel, symbols and noise from a stream keyed by
``(seed, snr_index, trial_index)``, and every detector of the scenario is run
on that same instance, so comparisons are paired and results do not depend on
how trials are split across worker processes.
"""

from __future__ import annotations

import csv
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agent import Agent, detect_drl
from .baseline import detect_ml, detect_mmse
from .drl_mcts import DrlMctsConfig, detect_drl_mcts
from .errors import ConfigurationError, DegenerateChannelError, InvalidParameterError, NumericalError
from .mcts import MctsConfig, detect_mcts
from .scenario import DetectorSpec, Scenario
from .signal_model import Constellation, RealSystem, generate_varying_channel, simulate_system

__all__ = [
    "MAX_WORKERS_ENV",
    "worker_count",
    "SerResult",
    "make_detector",
    "count_symbol_errors",
    "trial_instance",
    "generate_instances",
    "run_sweep",
    "measure_runtime",
    "emit_csv",
    "read_csv",
    "CSV_HEADER",
]

log = logging.getLogger(__name__)

MAX_WORKERS_ENV = "DRLMCTS_MAX_WORKERS"
CSV_HEADER = ("detector", "snr_db", "trials", "symbol_errors", "ser", "mean_runtime_s")
DEGENERATE_BUDGET = 0.01

Detector = Callable[[RealSystem, np.random.Generator], np.ndarray]


@dataclass(frozen=True)
class SerResult:
    detector: str
    snr_db: float
    trials: int
    symbol_errors: int
    symbols_total: int
    ser: float
    mean_runtime_s: float


def make_detector(spec: DetectorSpec, agent: Agent | None = None) -> Detector:
    """Bind a detector spec (and the agent, for DRL detectors) to a callable."""
    if spec.uses_agent and agent is None:
        raise ConfigurationError(f"detector {spec.label!r} needs a trained checkpoint")
    beta = spec.param("beta_p", 0.95)
    if spec.name == "ml":
        return lambda sys, rng: detect_ml(sys)
    if spec.name == "mmse":
        return lambda sys, rng: detect_mmse(sys)
    if spec.name == "mcts":
        cfg = MctsConfig(c_uct=spec.param("c_uct", 350.0),
                         playouts_initial=int(spec.param("playouts", 200)), beta_p=beta)
        return lambda sys, rng: detect_mcts(sys, cfg, rng)
    if spec.name == "drl":
        return lambda sys, rng: detect_drl(sys, agent)
    if spec.name == "drl_mcts":
        cfg = DrlMctsConfig(c_puct=spec.param("c_puct", 20.0),
                            playouts_initial=int(spec.param("playouts", 20)), beta_p=beta)
        return lambda sys, rng: detect_drl_mcts(sys, agent, cfg)
    raise ConfigurationError(f"unknown detector {spec.name!r}")


def count_symbol_errors(x_hat: np.ndarray, x_true: np.ndarray, constellation: Constellation) -> int:
    """Transmit-symbol errors; a QAM symbol is wrong if either component is."""
    wrong = np.asarray(x_hat) != np.asarray(x_true)
    if constellation.is_real:
        return int(np.count_nonzero(wrong))
    half = wrong.size // 2
    return int(np.count_nonzero(wrong[:half] | wrong[half:]))


def _trial_rng(seed: int, snr_index: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, 1, snr_index, trial])


def trial_instance(scenario: Scenario, base, snr_index: int, snr_db: float, trial: int,
                   ) -> tuple[RealSystem, np.random.Generator, int]:
    """Build the system for one trial; returns it, the detector RNG and the resample count."""
    rng = _trial_rng(scenario.seed, snr_index, trial)
    j = 1 + (snr_index * scenario.trials + trial) * 16
    for attempt in range(16):
        H = generate_varying_channel(base, j + attempt)
        try:
            sys = simulate_system(H, scenario.constellation, snr_db, rng,
                                  sigma_w2=scenario.noise_variance)
            return sys, rng, attempt
        except DegenerateChannelError:
            log.warning("degenerate channel (snr index %d, trial %d), resampling",
                        snr_index, trial)
    raise NumericalError("channel stayed degenerate after 16 resamples")


def generate_instances(scenario: Scenario, snr_db: float, count: int,
                       snr_index: int = 0) -> list[RealSystem]:
    base = scenario.base_channel()
    return [trial_instance(scenario, base, snr_index, snr_db, t)[0] for t in range(count)]


def _run_chunk(scenario: Scenario, agent: Agent | None, snr_index: int,
               trials: Sequence[int]):
    snr_db = scenario.snr_grid_db[snr_index]
    base = scenario.base_channel()
    detectors = [make_detector(spec, agent) for spec in scenario.detector_set]
    errors = np.zeros(len(detectors), dtype=np.int64)
    runtime = np.zeros(len(detectors))
    resampled = 0
    for trial in trials:
        sys, _, extra = trial_instance(scenario, base, snr_index, snr_db, trial)
        resampled += extra
        for i, detect in enumerate(detectors):
            det_rng = np.random.default_rng([scenario.seed, 3, snr_index, trial, i])
            t0 = time.perf_counter()
            x_hat = detect(sys, det_rng)
            runtime[i] += time.perf_counter() - t0
            errors[i] += count_symbol_errors(x_hat, sys.x_true, sys.constellation)
    return snr_index, errors, runtime, resampled


def worker_count(requested: int) -> int:
    """Requested worker count, capped by ``$DRLMCTS_MAX_WORKERS`` when set."""
    cap = os.environ.get(MAX_WORKERS_ENV)
    if cap:
        try:
            requested = min(requested, max(1, int(cap)))
        except ValueError:
            raise ConfigurationError(f"{MAX_WORKERS_ENV} must be an integer") from None
    return max(1, requested)


def run_sweep(scenario: Scenario, agent: Agent | None = None, workers: int | None = None,
              chunk_size: int = 250) -> list[SerResult]:
    """SER and mean runtime of every detector at every SNR point."""
    specs = scenario.detector_set
    if any(s.uses_agent for s in specs) and agent is None:
        raise ConfigurationError("a checkpoint is required for DRL-based detectors")
    workers = worker_count(workers if workers is not None else scenario.workers)
    # chunks cycle through the SNR points so slow drift in machine speed spreads
    # evenly over the grid instead of showing up as an SNR dependence of runtime
    jobs = [(scenario, agent, si, range(start, min(start + chunk_size, scenario.trials)))
            for start in range(0, scenario.trials, chunk_size)
            for si in range(len(scenario.snr_grid_db))]
    n_snr = len(scenario.snr_grid_db)
    errors = np.zeros((n_snr, len(specs)), dtype=np.int64)
    runtime = np.zeros((n_snr, len(specs)))
    resampled = np.zeros(n_snr, dtype=np.int64)
    if workers == 1:
        outputs = (_run_chunk(*job) for job in jobs)
        pool = None
    else:
        pool = ProcessPoolExecutor(workers)
        outputs = pool.map(_run_chunk, *zip(*jobs))
    try:
        for si, err, rt, extra in outputs:
            errors[si] += err
            runtime[si] += rt
            resampled[si] += extra
    finally:
        if pool is not None:
            pool.shutdown()
    for si, count in enumerate(resampled):
        if count:
            log.warning("SNR %.6g dB: %d degenerate channels resampled",
                        scenario.snr_grid_db[si], count)
        if count > DEGENERATE_BUDGET * scenario.trials:
            raise NumericalError("too many degenerate channels; aborting sweep")
    total = scenario.trials * scenario.n_t
    results = []
    for si, snr in enumerate(scenario.snr_grid_db):
        for di, spec in enumerate(specs):
            e = int(errors[si, di])
            results.append(SerResult(spec.label, float(snr), scenario.trials, e, total,
                                     e / total, float(runtime[si, di]) / scenario.trials))
    return results


def measure_runtime(detector: Detector, instances: Sequence[RealSystem], warmup: int = 10,
                    seed: int = 0) -> float:
    """Mean wall-clock seconds per symbol vector, excluding the first ``warmup`` runs."""
    if len(instances) < 100:
        raise InvalidParameterError("runtime measurement needs at least 100 instances")
    times = []
    for i, sys in enumerate(instances):
        rng = np.random.default_rng([seed, i])
        t0 = time.perf_counter()
        detector(sys, rng)
        times.append(time.perf_counter() - t0)
    return float(np.mean(times[warmup:]))


def _sort_key(r: SerResult):
    return (r.detector, r.snr_db)


def emit_csv(results: Sequence[SerResult], path) -> None:
    """Write one row per (detector, SNR), sorted by detector then SNR."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in sorted(results, key=_sort_key):
            writer.writerow([r.detector, repr(float(r.snr_db)), r.trials, r.symbol_errors,
                             f"{r.ser:.6g}", repr(float(r.mean_runtime_s))])


def read_csv(path, symbols_per_trial: int) -> list[SerResult]:
    """Parse a file written by :func:`emit_csv`.

    ``symbols_per_trial`` (``N_T``) restores ``symbols_total``; the SER is
    recomputed exactly and checked against the printed value.
    """
    results = []
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ConfigurationError(f"unexpected CSV header {header!r}")
        for row in reader:
            label, snr, trials, errs, ser_text, runtime = row
            trials, errs = int(trials), int(errs)
            total = trials * symbols_per_trial
            ser = errs / total
            if not math.isclose(ser, float(ser_text), rel_tol=1e-5, abs_tol=1e-12):
                raise ConfigurationError(f"SER column disagrees with counts in row {row!r}")
            results.append(SerResult(label, float(snr), trials, errs, total, ser, float(runtime)))
    return results
