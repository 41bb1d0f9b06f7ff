import numpy as np
import pytest

from longal import loop as loop_mod
from longal.data import SynthParams, generate_synthetic
from longal.errors import BudgetExceedsPool, CorruptCheckpoint, NonFiniteLoss
from longal.loop import (
    ExperimentConfig,
    ExperimentLog,
    full_supervision_config,
    init_labeled,
    oracle_label,
    resolve_count,
    resume,
    run_al_loop,
)
from longal.strategies import StrategyConfig


def _cfg(fast_learner, **kw):
    base = dict(budget=12, q0=6, q=3, strategy=StrategyConfig("random"), learner=fast_learner, repeats=1)
    base.update(kw)
    return ExperimentConfig(**base)


def _rows(log):
    """Log CSV without the wall-time column."""
    return [line.rsplit(",", 1)[0] for line in log.to_csv().splitlines()]


# ------------------------------------------------------------- budget rules
def test_resolve_count():
    assert resolve_count(0.08, 5520) == 442
    assert resolve_count(0.2, 216) == 43
    assert resolve_count(24, 72) == 24
    assert resolve_count(1.0, 72) == 72


def test_resolve_validation():
    with pytest.raises(BudgetExceedsPool):
        ExperimentConfig(budget=100).resolve(50)
    with pytest.raises(ValueError):
        ExperimentConfig(budget=5, q0=6).resolve(50)


# --------------------------------------------------------- initial labeling
@pytest.fixture(scope="module")
def pool_108():
    d = generate_synthetic(SynthParams(n_patients=6, h=12, w=12, c=6, lesion_diameter_range=(2, 3),
                                       lesion_count_range=(0, 1)))
    return d


def test_init_labeled_extremes(pool_108):
    pool = init_labeled(pool_108.pair_pool(), 1, 0, pool_108)
    assert len(pool.labeled) == 1
    pool = init_labeled(pool_108.pair_pool(), 108, 0, pool_108)
    assert len(pool.labeled) == 108 and not pool.unlabeled_keys


def test_init_labeled_seeds_differ(pool_108):
    sets = [frozenset(init_labeled(pool_108.pair_pool(), 10, s, pool_108).labeled) for s in range(20)]
    assert len(set(sets)) == 20
    assert init_labeled(pool_108.pair_pool(), 10, 3, pool_108).labeled == sets[3]


def test_oracle(tiny_dataset):
    empty = [k for k in tiny_dataset.pair_pool().keys if tiny_dataset.mask(k).sum() == 0]
    lab = oracle_label(empty[0], tiny_dataset)
    assert lab.mask.sum() == 0
    assert np.array_equal(oracle_label(empty[0], tiny_dataset).mask, lab.mask)


# ------------------------------------------------------------- Algorithm 1
def test_budget_equals_q0_trains_once(small_splits, fast_learner):
    log = run_al_loop(_cfg(fast_learner, budget=6), *small_splits)
    assert [r.labeled_count for r in log.records] == [6]
    assert log.records[0].dice is not None


def test_trace_and_partition(small_splits, fast_learner, monkeypatch):
    seen = []
    real_query = loop_mod.query

    def checked(cfg, learner, pool, q, rng, **kw):
        pool.check_partition()
        out = real_query(cfg, learner, pool, q, rng, **kw)
        seen.append((len(pool.labeled), q, out))
        return out

    monkeypatch.setattr(loop_mod, "query", checked)
    log = run_al_loop(_cfg(fast_learner, budget=12, q0=6, q=3), *small_splits)
    assert [r.labeled_count for r in log.records] == [6, 9, 12]
    assert [(n, q) for n, q, _ in seen] == [(6, 3), (9, 3)]
    picked = [k for r in log.records for k in r.selected]
    assert len(picked) == len(set(picked)) == 12
    assert [r.iteration for r in log.records] == [0, 1, 2]


def test_last_query_is_truncated(small_splits, fast_learner):
    log = run_al_loop(_cfg(fast_learner, budget=11, q0=6, q=3), *small_splits)
    assert [r.labeled_count for r in log.records] == [6, 9, 11]
    assert len(log.records[-1].selected) == 2


def test_same_init_across_strategies(small_splits, fast_learner):
    a = run_al_loop(_cfg(fast_learner), *small_splits)
    b = run_al_loop(_cfg(fast_learner, strategy=StrategyConfig("entropy")), *small_splits)
    assert a.records[0].selected == b.records[0].selected
    assert _rows(a)[1] == _rows(b)[1]
    assert a.records[1].selected != b.records[1].selected


def test_repeats_use_distinct_seeds(small_splits, fast_learner):
    log = run_al_loop(_cfg(fast_learner, repeats=2, budget=6), *small_splits)
    assert log.repeats == [0, 1]
    assert log.records[0].selected != log.records[1].selected
    s = log.summary()
    assert s["mean"]["final_dice"] == pytest.approx(np.mean([r.dice for r in log.records]))


def test_loop_is_deterministic(small_splits, fast_learner):
    cfg = _cfg(fast_learner, strategy=StrategyConfig("entropy"))
    assert _rows(run_al_loop(cfg, *small_splits)) == _rows(run_al_loop(cfg, *small_splits))


# ------------------------------------------------------------ checkpointing
def test_resume_reproduces_uninterrupted(tmp_path, small_splits, fast_learner):
    cfg = _cfg(fast_learner, strategy=StrategyConfig("margin"), repeats=2)
    full = run_al_loop(cfg, *small_splits)
    for stop in (1, 2, 4):
        path = tmp_path / f"s{stop}.ckpt"
        part = run_al_loop(cfg, *small_splits, checkpoint_path=path, stop_after=stop)
        assert len(part.records) == stop
        done = run_al_loop(cfg, *small_splits, checkpoint_path=path, resume_state=resume(path))
        assert _rows(done) == _rows(full)
        assert [r.selected for r in done.records] == [r.selected for r in full.records]


def test_resume_at_final_iteration_is_a_noop(tmp_path, small_splits, fast_learner):
    cfg = _cfg(fast_learner)
    path = tmp_path / "s.ckpt"
    log = run_al_loop(cfg, *small_splits, checkpoint_path=path)
    again = run_al_loop(cfg, *small_splits, resume_state=resume(path))
    assert _rows(again) == _rows(log)


def test_tampered_state_rejected(tmp_path, small_splits, fast_learner):
    path = tmp_path / "s.ckpt"
    run_al_loop(_cfg(fast_learner, budget=6), *small_splits, checkpoint_path=path)
    data = bytearray(path.read_bytes())
    data[10] ^= 0x01
    path.write_bytes(bytes(data))
    with pytest.raises(CorruptCheckpoint):
        resume(path)


def test_all_repeats_abort_on_non_finite(small_splits, fast_learner, monkeypatch):
    def boom(*a, **k):
        raise NonFiniteLoss("nan")

    monkeypatch.setattr(loop_mod, "_train", boom)
    log = run_al_loop(_cfg(fast_learner, repeats=2), *small_splits)
    assert not log.records and [f["repeat"] for f in log.failures] == [0, 1]


# ------------------------------------------------------------------ helpers
def test_log_roundtrip():
    cfg = ExperimentConfig(budget=0.3, q0=4)
    back = ExperimentConfig.from_dict(cfg.to_dict())
    assert back == cfg
    log = ExperimentLog(config=cfg.to_dict())
    assert ExperimentLog.from_dict(log.to_dict()).to_dict() == log.to_dict()


def test_full_supervision_single_training(small_splits, fast_learner):
    cfg = full_supervision_config(_cfg(fast_learner))
    log = run_al_loop(cfg, *small_splits)
    assert [r.labeled_count for r in log.records] == [small_splits[0].n_pairs()]
