"""Fixed synthetic benchmark: full supervision vs budgeted active learning.

Twenty generated patients (three timepoints, 64x64x6) are split 12/4/4 into
train/val/test, giving 216 training pairs. Slices are cropped to the foreground
and resized to 32x32 so that the whole comparison runs on one CPU core.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

from .data import SynthParams, generate_synthetic, preprocess_dataset
from .data.split import split_patients
from .learner import LearnerConfig
from .loop import ExperimentConfig, ExperimentLog, full_supervision_config, run_al_loop
from .strategies import StrategyConfig

log = logging.getLogger(__name__)

BENCHMARK_STRATEGIES = ("random", "entropy", "kcenter", "cluster_margin")


@dataclass
class BenchmarkSpec:
    synth: SynthParams = field(default_factory=lambda: SynthParams(n_patients=20, seed=1))
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    split_seed: int = 0
    target_hw: tuple[int, int] = (32, 32)
    budget: float = 0.2
    q0: int = 20
    q: int = 8
    repeats: int = 3
    al_learner: LearnerConfig = field(default_factory=lambda: LearnerConfig(base_channels=8, lr=1e-3, batch_size=4))
    full_learner: LearnerConfig = field(default_factory=lambda: LearnerConfig(base_channels=8, lr=2e-3, batch_size=8))


def benchmark_splits(spec: BenchmarkSpec | None = None):
    spec = spec or BenchmarkSpec()
    data = preprocess_dataset(generate_synthetic(spec.synth), spec.target_hw)
    return split_patients(data, spec.split, spec.split_seed)


def experiment_config(spec: BenchmarkSpec, strategy: str) -> ExperimentConfig:
    return ExperimentConfig(
        budget=spec.budget,
        q0=spec.q0,
        q=spec.q,
        strategy=StrategyConfig(name=strategy),
        learner=spec.al_learner,
        repeats=spec.repeats,
    )


@dataclass
class BenchmarkResult:
    full: ExperimentLog
    strategies: dict[str, ExperimentLog]
    seconds: float

    @property
    def d_full(self) -> float:
        return self.full.summary()["mean"]["final_dice"]

    def best_dice(self) -> dict[str, float]:
        return {name: lg.summary()["mean"]["highest_dice"] for name, lg in self.strategies.items()}


def run_benchmark(spec: BenchmarkSpec | None = None, strategies=BENCHMARK_STRATEGIES) -> BenchmarkResult:
    spec = spec or BenchmarkSpec()
    t0 = time.perf_counter()
    train, val, test = benchmark_splits(spec)
    base = experiment_config(spec, strategies[0])
    full = run_al_loop(full_supervision_config(base, spec.full_learner), train, val, test)
    log.info("full supervision: %s", full.summary()["mean"])
    logs = {}
    for name in strategies:
        cfg = replace(base, strategy=StrategyConfig(name=name))
        logs[name] = run_al_loop(cfg, train, val, test)
        log.info("%s: %s", name, logs[name].summary()["mean"])
    return BenchmarkResult(full, logs, time.perf_counter() - t0)
