"""Flat ``key = value`` run configuration.

Every field of :class:`ExperimentConfig`, :class:`StrategyConfig` and
:class:`LearnerConfig` is addressable by its own name (the strategy name is
``strategy``). Run-level keys: ``dataset``, ``split``, ``split_seed``,
``target_hw``. ``#`` starts a comment. Unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .learner import LearnerConfig
from .loop import ExperimentConfig
from .strategies import StrategyConfig

_EXPERIMENT_KEYS = {
    "budget",
    "q0",
    "q",
    "pool_init_seed",
    "learner_seed",
    "strategy_seed",
    "eval_every_iteration",
    "repeats",
    "threshold",
}
_STRATEGY_KEYS = {f.name for f in dataclasses.fields(StrategyConfig)} - {"name"}
# per-iteration seeds come from learner_seed
_LEARNER_KEYS = {f.name for f in dataclasses.fields(LearnerConfig)} - {"init_seed"}
_RUN_KEYS = {"dataset", "split", "split_seed", "target_hw"}
KNOWN_KEYS = _EXPERIMENT_KEYS | _STRATEGY_KEYS | _LEARNER_KEYS | _RUN_KEYS | {"strategy"}


@dataclass
class RunConfig:
    dataset: str | None = None
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    split_seed: int = 0
    target_hw: tuple[int, int] | None = None
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "split": list(self.split),
            "split_seed": self.split_seed,
            "target_hw": list(self.target_hw) if self.target_hw else None,
            "experiment": self.experiment.to_dict(),
        }


def parse_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _number(v: str):
    """'0.2' -> float fraction, '24' -> int count."""
    try:
        return float(v) if any(ch in v for ch in ".eE") else int(v)
    except ValueError:
        raise ConfigError(f"not a number: {v!r}") from None


def _optional_float(v: str):
    return None if v.lower() in ("none", "") else float(v)


def _hw(v: str):
    if v.lower() in ("none", "0", ""):
        return None
    parts = v.lower().replace("x", ",").split(",")
    dims = tuple(int(p) for p in parts if p.strip())
    if len(dims) == 1:
        dims = dims * 2
    if len(dims) != 2 or min(dims) < 1:
        raise ConfigError(f"target_hw must be N or HxW, got {v!r}")
    return dims


def _coerce(cls, name: str, value: str):
    default = {f.name: f for f in dataclasses.fields(cls)}[name].default
    if name in ("budget", "q0"):
        return _number(value)
    if name == "output_prior":
        return _optional_float(value)
    if isinstance(default, bool):
        return _bool(value)
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return value


def build_config(values: dict[str, str]) -> RunConfig:
    try:
        exp_kw = {k: _coerce(ExperimentConfig, k, v) for k, v in values.items() if k in _EXPERIMENT_KEYS}
        strat_kw = {k: _coerce(StrategyConfig, k, v) for k, v in values.items() if k in _STRATEGY_KEYS}
        learn_kw = {k: _coerce(LearnerConfig, k, v) for k, v in values.items() if k in _LEARNER_KEYS}
        if "strategy" in values:
            strat_kw["name"] = values["strategy"]
        exp = ExperimentConfig(strategy=StrategyConfig(**strat_kw), learner=LearnerConfig(**learn_kw), **exp_kw)
        run = RunConfig(experiment=exp)
        if "dataset" in values:
            run.dataset = values["dataset"]
        if "split" in values:
            run.split = tuple(float(x) for x in values["split"].split(","))
            if len(run.split) != 3:
                raise ConfigError("split needs three comma-separated ratios")
        if "split_seed" in values:
            run.split_seed = int(values["split_seed"])
        if "target_hw" in values:
            run.target_hw = _hw(values["target_hw"])
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    return run


def load_config(path, overrides: list[str] | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc}") from exc
    values = parse_text(text)
    for item in overrides or []:
        values.update(parse_text(item))
    run = build_config(values)
    if run.dataset is not None and not Path(run.dataset).is_absolute():
        run.dataset = str((Path(path).parent / run.dataset).resolve())
    return run


def dump_config(run: RunConfig) -> str:
    """Inverse of :func:`load_config` for a fully specified RunConfig."""
    exp = run.experiment
    lines = []
    if run.dataset is not None:
        lines.append(f"dataset = {run.dataset}")
    lines.append("split = " + ",".join(repr(float(x)) for x in run.split))
    lines.append(f"split_seed = {run.split_seed}")
    lines.append("target_hw = " + ("none" if run.target_hw is None else f"{run.target_hw[0]}x{run.target_hw[1]}"))
    lines.append(f"strategy = {exp.strategy.name}")
    for k in sorted(_EXPERIMENT_KEYS):
        lines.append(f"{k} = {getattr(exp, k)!r}".replace("'", ""))
    for k in sorted(_STRATEGY_KEYS):
        lines.append(f"{k} = {getattr(exp.strategy, k)}")
    for k in sorted(_LEARNER_KEYS):
        lines.append(f"{k} = {getattr(exp.learner, k)}")
    return "\n".join(lines) + "\n"
