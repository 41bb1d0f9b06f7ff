"""The budgeted query / label / retrain loop, its log and resumable state."""

from __future__ import annotations

import csv
import io
import json
import logging
import struct
import time
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import ChangeLabel, PairKey, PairPool
from .errors import BudgetExceedsPool, CorruptCheckpoint, NonFiniteLoss
from .learner import LearnerConfig, learner_from_bytes, learner_to_bytes
from .metrics import evaluate_testset
from .strategies import StrategyConfig, query
from .utils.seeding import derive_seed

log = logging.getLogger(__name__)

LOG_COLUMNS = ["repeat", "iteration", "labeled_count", "dice", "recall", "precision", "epochs", "wall_ms"]
STATE_MAGIC = b"LGALEXP\x00"
STATE_VERSION = 1


def resolve_count(value, n_pool: int) -> int:
    """A float in (0, 1] is a fraction of the pool (rounded); an int is a count."""
    if isinstance(value, float) and 0.0 < value <= 1.0:
        return int(round(value * n_pool))
    return int(value)


@dataclass
class ExperimentConfig:
    budget: float | int = 0.2
    q0: float | int = 100
    q: int = 50
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    pool_init_seed: int = 0
    learner_seed: int = 0
    strategy_seed: int = 0
    eval_every_iteration: bool = True
    repeats: int = 3
    threshold: float = 0.5

    def resolve(self, n_pool: int) -> tuple[int, int]:
        """(B, q0) as pair counts for a pool of ``n_pool`` pairs."""
        B = resolve_count(self.budget, n_pool)
        q0 = resolve_count(self.q0, n_pool)
        if q0 < 1 or self.q < 1:
            raise ValueError("q0 and q must be >= 1")
        if B > n_pool:
            raise BudgetExceedsPool(f"budget {B} exceeds the pool of {n_pool} pairs")
        if q0 > B:
            raise ValueError(f"q0={q0} exceeds the budget {B}")
        return B, q0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        d["strategy"] = StrategyConfig(**d["strategy"])
        d["learner"] = LearnerConfig(**d["learner"])
        return cls(**d)


@dataclass
class IterationRecord:
    repeat: int
    iteration: int
    labeled_count: int
    selected: list
    epochs: int
    dice: float | None
    recall: float | None
    precision: float | None
    wall_ms: int = 0

    def row(self) -> list:
        def fmt(x):
            return "" if x is None else f"{x:.4f}"

        return [
            self.repeat,
            self.iteration,
            self.labeled_count,
            fmt(self.dice),
            fmt(self.recall),
            fmt(self.precision),
            self.epochs,
            self.wall_ms,
        ]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["selected"] = [str(k) for k in self.selected]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "IterationRecord":
        d = dict(d)
        d["selected"] = [PairKey.parse(k) for k in d["selected"]]
        return cls(**d)


@dataclass
class ExperimentLog:
    records: list[IterationRecord] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seeds: list[dict] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)

    def for_repeat(self, repeat: int) -> list[IterationRecord]:
        return [r for r in self.records if r.repeat == repeat]

    @property
    def repeats(self) -> list[int]:
        return sorted({r.repeat for r in self.records})

    def selection_iterations(self, repeat: int = 0) -> dict:
        out = {}
        for r in self.for_repeat(repeat):
            for k in r.selected:
                out[k] = r.iteration
        return out

    def summary(self) -> dict:
        """Per-repeat final / best dice and their means across repeats."""
        per = []
        for rep in self.repeats:
            rows = [r for r in self.for_repeat(rep) if r.dice is not None]
            if not rows:
                continue
            final = rows[-1]
            best = max(rows, key=lambda r: r.dice)
            per.append(
                {
                    "repeat": rep,
                    "labeled_count": final.labeled_count,
                    "final_dice": final.dice,
                    "final_recall": final.recall,
                    "final_precision": final.precision,
                    "highest_dice": best.dice,
                    "highest_dice_labeled_count": best.labeled_count,
                }
            )
        mean = {}
        if per:
            for k in ("final_dice", "final_recall", "final_precision", "highest_dice"):
                mean[k] = float(np.mean([p[k] for p in per]))
        return {"repeats": per, "mean": mean}

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in self.records:
            w.writerow(r.row())
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def selections_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["repeat", "iteration", "pair_key"])
        for r in self.records:
            for k in r.selected:
                w.writerow([r.repeat, r.iteration, str(k)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_dict(self) -> dict:
        return {
            "records": [r.to_dict() for r in self.records],
            "config": self.config,
            "seeds": self.seeds,
            "failures": self.failures,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentLog":
        return cls([IterationRecord.from_dict(r) for r in d["records"]], d["config"], d["seeds"], d["failures"])


# ---------------------------------------------------------------------- oracle
def oracle_label(key: PairKey, dataset) -> ChangeLabel:
    """Simulated annotator: reveal the stored ground-truth mask."""
    return ChangeLabel(key, dataset.mask(key))


def init_labeled(pool: PairPool, q0: int, seed: int, dataset) -> PairPool:
    if q0 > len(pool):
        raise BudgetExceedsPool(f"q0={q0} exceeds the pool of {len(pool)} pairs")
    rng = np.random.default_rng(seed)
    for i in sorted(rng.choice(len(pool), size=q0, replace=False)):
        key = pool.pairs[i].key
        pool.add_label(oracle_label(key, dataset))
    return pool


def _xy(pool: PairPool, keys):
    return pool.inputs(keys), pool.masks(keys)


def repeat_seeds(cfg: ExperimentConfig, repeat: int) -> dict:
    return {
        "repeat": repeat,
        "pool_init": derive_seed("pool_init", cfg.pool_init_seed, repeat),
        "learner": derive_seed("learner", cfg.learner_seed, repeat),
        "strategy": derive_seed("strategy", cfg.strategy_seed, repeat),
    }


# ---------------------------------------------------------------- checkpoints
def pack_state(state: dict, learner) -> bytes:
    js = json.dumps(state, sort_keys=True).encode()
    lb = learner_to_bytes(learner) if learner is not None else b""
    body = js + lb
    return STATE_MAGIC + struct.pack("<IIQI", STATE_VERSION, len(js), len(lb), zlib.crc32(body)) + body


def unpack_state(data: bytes) -> tuple[dict, object]:
    prefix = len(STATE_MAGIC) + struct.calcsize("<IIQI")
    if len(data) < prefix or data[: len(STATE_MAGIC)] != STATE_MAGIC:
        raise CorruptCheckpoint("bad experiment checkpoint magic")
    version, jlen, llen, crc = struct.unpack("<IIQI", data[len(STATE_MAGIC) : prefix])
    if version != STATE_VERSION:
        raise CorruptCheckpoint(f"unsupported experiment checkpoint version {version}")
    body = data[prefix:]
    if len(body) != jlen + llen or zlib.crc32(body) != crc:
        raise CorruptCheckpoint("experiment checkpoint checksum or length mismatch")
    state = json.loads(body[:jlen].decode())
    learner = learner_from_bytes(body[jlen:]) if llen else None
    return state, learner


def checkpoint(path, log: ExperimentLog, pool: PairPool, learner, *, repeat: int, iteration: int, selected_at: dict):
    """Write the complete loop state after an iteration has been trained and evaluated."""
    state = {
        "log": log.to_dict(),
        "repeat": repeat,
        "iteration": iteration,
        "labeled": [[str(k), selected_at[k]] for k in pool.labeled_keys],
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(pack_state(state, learner))
    tmp.replace(path)
    return path


def resume(path) -> dict:
    state, learner = unpack_state(Path(path).read_bytes())
    state["learner"] = learner
    state["log"] = ExperimentLog.from_dict(state["log"])
    return state


# ----------------------------------------------------------------------- loop
class _RepeatAborted(Exception):
    pass


def _train(cfg: ExperimentConfig, prev, pool: PairPool, val_xy, seed: int):
    keys = pool.labeled_keys
    X, y = _xy(pool, keys)
    if cfg.learner.warm_start and prev is not None:
        model = prev
        model.set_params(init_seed=seed)
    else:
        model = cfg.learner.make_estimator(init_seed=seed)
    return model.fit(X, y, val_xy[0], val_xy[1], keys=keys)


def run_al_loop(
    cfg: ExperimentConfig,
    train,
    val,
    test,
    *,
    checkpoint_path=None,
    resume_state: dict | None = None,
    stop_after: int | None = None,
    on_model=None,
) -> ExperimentLog:
    """Run every repeat of the budget loop on the (train, val, test) datasets.

    ``stop_after`` halts after that many trained iterations in this call (used to
    simulate interruption); ``on_model(repeat, iteration, learner)`` observes each
    trained model.
    """
    n_pool = train.n_pairs()
    B, q0 = cfg.resolve(n_pool)
    val_pool = val.labeled_pool()
    val_xy = _xy(val_pool, val_pool.keys)

    if resume_state is not None:
        elog = resume_state["log"]
        start_repeat = resume_state["repeat"]
    else:
        elog = ExperimentLog(config=cfg.to_dict())
        start_repeat = 0
    trained_this_call = 0

    for rep in range(start_repeat, cfg.repeats):
        seeds = repeat_seeds(cfg, rep)
        pool = train.pair_pool()
        learner = None
        resumed = resume_state is not None and rep == start_repeat
        if resumed:
            selected_at = {}
            for ks, it in resume_state["labeled"]:
                key = PairKey.parse(ks)
                pool.add_label(oracle_label(key, train))
                selected_at[key] = it
            iteration = resume_state["iteration"]
            learner = resume_state["learner"]
        else:
            if seeds not in elog.seeds:
                elog.seeds.append(seeds)
            init_labeled(pool, q0, seeds["pool_init"], train)
            selected_at = {k: 0 for k in pool.labeled_keys}
            iteration = 0
        try:
            while True:
                if not resumed:
                    t0 = time.perf_counter()
                    try:
                        learner = _train(cfg, learner, pool, val_xy, derive_seed(seeds["learner"], iteration))
                    except NonFiniteLoss as exc:
                        elog.failures.append({"repeat": rep, "iteration": iteration, "error": str(exc)})
                        log.error("repeat %d aborted: %s", rep, exc)
                        raise _RepeatAborted from exc
                    last = len(pool.labeled) >= B
                    if cfg.eval_every_iteration or last:
                        d, r, p = evaluate_testset(learner, test, cfg.threshold)
                    else:
                        d = r = p = None
                    elog.records.append(
                        IterationRecord(
                            rep,
                            iteration,
                            len(pool.labeled),
                            sorted(k for k, it in selected_at.items() if it == iteration),
                            int(learner.n_epochs_),
                            d,
                            r,
                            p,
                            int(round((time.perf_counter() - t0) * 1000)),
                        )
                    )
                    log.info(
                        "repeat %d iteration %d |D_L|=%d dice=%s", rep, iteration, len(pool.labeled), d
                    )
                    if on_model is not None:
                        on_model(rep, iteration, learner)
                    if checkpoint_path is not None:
                        checkpoint(
                            checkpoint_path, elog, pool, learner, repeat=rep, iteration=iteration, selected_at=selected_at
                        )
                    trained_this_call += 1
                    if stop_after is not None and trained_this_call >= stop_after:
                        return elog
                resumed = False
                if len(pool.labeled) >= B:
                    break
                q_i = min(cfg.q, B - len(pool.labeled))
                rng = np.random.default_rng(derive_seed(seeds["strategy"], iteration))
                chosen = query(cfg.strategy, learner, pool, q_i, rng, iteration=iteration)
                iteration += 1
                for key in chosen:
                    pool.add_label(oracle_label(key, train))
                    selected_at[key] = iteration
        except _RepeatAborted:
            continue
        # the next repeat starts from scratch; resuming only applies to the first one
        resume_state = None
    return elog


def full_supervision_config(cfg: ExperimentConfig, learner: LearnerConfig | None = None) -> ExperimentConfig:
    """Same seeds, every pair labeled up front: a single training per repeat."""
    return ExperimentConfig(
        budget=1.0,
        q0=1.0,
        q=cfg.q,
        strategy=cfg.strategy,
        learner=learner or cfg.learner,
        pool_init_seed=cfg.pool_init_seed,
        learner_seed=cfg.learner_seed,
        strategy_seed=cfg.strategy_seed,
        eval_every_iteration=True,
        repeats=cfg.repeats,
        threshold=cfg.threshold,
    )
