"""Semantics of the task samplers, kind by kind."""

import numpy as np
import pytest

from episode_forge.dpp import build_l_ensemble, kdpp_prob
from episode_forge.episodes import (
    RegressionPool,
    make_embedding_table,
    synth_gaussian_world,
)
from episode_forge.errors import (
    NonFiniteDifficulty,
    PoolTooSmall,
    WrongSamplerKind,
)
from episode_forge.samplers import (
    SamplerConfig,
    SamplerState,
    next_meta_batch,
    refresh_embeddings,
    report_difficulty,
)
from episode_forge.stats import chi_square_gof


@pytest.fixture(scope="module")
def world():
    return synth_gaussian_world(12, 4, 1.0, 0.1, seed=100)


def batches(kind, pool, n, table=None, **kw):
    state = SamplerState(SamplerConfig(kind=kind, **kw), embedding_table=table)
    return [next_meta_batch(state, pool) for _ in range(n)], state


def class_sets(batch):
    return [frozenset(t.classes) for t in batch]


def test_uniform_fresh_tasks_each_batch(world):
    pool, _ = world
    got, _ = batches("uniform", pool, 10, n_way=3, meta_batch_size=4, seed=1)
    all_sets = {cs for b in got for cs in class_sets(b)}
    assert len(all_sets) > 10  # overwhelmingly likely with 220 possible sets


def test_determinism_same_config(world):
    pool, _ = world
    a, _ = batches("uniform", pool, 5, n_way=3, meta_batch_size=4, seed=9)
    b, _ = batches("uniform", pool, 5, n_way=3, meta_batch_size=4, seed=9)
    assert [[t.classes for t in batch] for batch in a] == [
        [t.classes for t in batch] for batch in b
    ]
    assert [[t.label_perm for t in batch] for batch in a] == [
        [t.label_perm for t in batch] for batch in b
    ]


def test_ndt_repeats_one_task_and_perm(world):
    pool, _ = world
    got, _ = batches("ndt", pool, 3, n_way=3, meta_batch_size=2, seed=2)
    tasks = [t for b in got for t in b]
    assert len(tasks) == 6
    assert len({t.classes for t in tasks}) == 1
    assert len({t.label_perm for t in tasks}) == 1


def test_ndb_fixed_class_sets_fresh_perms(world):
    pool, _ = world
    got, _ = batches("ndb", pool, 12, n_way=4, meta_batch_size=3, seed=3)
    first = [t.classes for t in got[0]]
    for batch in got[1:]:
        assert [t.classes for t in batch] == first
    distinct_sets = {cs for b in got for cs in class_sets(b)}
    assert len(distinct_sets) == len(set(class_sets(got[0])))
    # label shuffling actually happens somewhere in the stream
    perms_per_slot = {tuple(b[0].label_perm) for b in got}
    assert len(perms_per_slot) > 1


def test_ndtb_one_class_set_per_batch_fresh_perms(world):
    pool, _ = world
    got, _ = batches("ndtb", pool, 8, n_way=4, meta_batch_size=4, seed=4)
    for batch in got:
        assert len(set(class_sets(batch))) == 1
    perms = {t.label_perm for t in got[0]}
    assert len(perms) > 1  # 4 independent draws of S_4 collide rarely
    assert len({cs for b in got for cs in class_sets(b)}) == 8


def test_single_batch_kinds_force_m_one(world):
    pool, _ = world
    for kind in ("sbu", "sbu_bounded", "sbu_unbounded"):
        cfg = SamplerConfig(kind=kind, n_way=3, meta_batch_size=16, seed=5)
        assert cfg.meta_batch_size == 1
        state = SamplerState(cfg)
        assert len(next_meta_batch(state, pool)) == 1


def test_sbu_bounded_stays_in_frozen_pool(world):
    pool, _ = world
    got, state = batches(
        "sbu_bounded", pool, 60, n_way=3, seed=6, sbu_pool_size=5
    )
    frozen = {t.task_id for t in state.bounded_pool}
    assert len(frozen) >= 2
    for batch in got:
        assert batch[0].task_id in frozen


def test_ohtm_uniform_until_buffer_min(world):
    pool, _ = world
    state = SamplerState(
        SamplerConfig(kind="ohtm", n_way=3, meta_batch_size=4, seed=7,
                      ohtm_buffer_min=50)
    )
    difficulty = 0.0
    while len(state.ohtm_buffer) < 50:
        batch = next_meta_batch(state, pool)
        for t in batch:
            report_difficulty(state, t, difficulty)
            difficulty += 1.0
    # buffer crossed the minimum: the next batch mines its top half
    buffered = set(state.ohtm_buffer)
    batch = next_meta_batch(state, pool)
    assert all(t.task_id in buffered for t in batch[:2])
    ranked = sorted(state.ohtm_buffer.values(), key=lambda e: (e[1], e[0].task_id),
                    reverse=True)
    assert {t.task_id for t in batch[:2]} == {t.task_id for t, _ in ranked[:2]}


def test_ohtm_hard_slots_are_difficulty_top(world):
    pool, _ = world
    state = SamplerState(
        SamplerConfig(kind="ohtm", n_way=3, meta_batch_size=4, seed=8,
                      ohtm_buffer_min=3, ohtm_hard_fraction=0.5)
    )
    warmup = next_meta_batch(state, pool)
    extra = next_meta_batch(state, pool)
    tasks = (warmup + extra)[:3]
    for task, loss in zip(tasks, (5.0, 1.0, 3.0)):
        report_difficulty(state, task, loss)
    batch = next_meta_batch(state, pool)
    hard_ids = {t.task_id for t in batch[:2]}
    assert hard_ids == {tasks[0].task_id, tasks[2].task_id}


def test_ohtm_latest_difficulty_wins(world):
    pool, _ = world
    state = SamplerState(SamplerConfig(kind="ohtm", n_way=3, seed=9))
    task = next_meta_batch(state, pool)[0]
    report_difficulty(state, task, 1.0)
    report_difficulty(state, task, 0.2)
    assert state.ohtm_buffer[task.task_id][1] == 0.2
    with pytest.raises(NonFiniteDifficulty):
        report_difficulty(state, task, float("nan"))


def test_pool_too_small(world):
    pool, _ = world
    state = SamplerState(SamplerConfig(kind="uniform", n_way=13, seed=10))
    with pytest.raises(PoolTooSmall):
        next_meta_batch(state, pool)


def test_sdpp_duplicate_classes_never_cooccur():
    table = make_embedding_table(
        ["a", "b", "c", "d"],
        [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
    )
    pool, _ = synth_gaussian_world(4, 3, 1.0, 0.1, seed=11)
    pool = type(pool)(
        classes=("a", "b", "c", "d"), dim=3, split="train",
        example_source=pool.example_source,
    )
    state = SamplerState(
        SamplerConfig(kind="sdpp", n_way=2, meta_batch_size=1, seed=12),
        embedding_table=table,
    )
    ens = build_l_ensemble(table, pool.classes)
    assert kdpp_prob(ens, ("a", "b"), 2) == pytest.approx(0.0, abs=1e-12)
    for _ in range(10_000):
        task = next_meta_batch(state, pool)[0]
        assert set(task.classes) != {"a", "b"}


def test_sdpp_marginals_match_kdpp_prob():
    rng = np.random.default_rng(13)
    labels = [f"c{i}" for i in range(5)]
    table = make_embedding_table(labels, rng.standard_normal((5, 5)))
    pool, _ = synth_gaussian_world(5, 5, 1.0, 0.1, seed=14)
    pool = type(pool)(classes=tuple(labels), dim=5, split="train",
                      example_source=pool.example_source)
    state = SamplerState(
        SamplerConfig(kind="sdpp", n_way=2, meta_batch_size=4, seed=15),
        embedding_table=table,
    )
    ens = build_l_ensemble(table, pool.classes)
    from itertools import combinations

    pairs = list(combinations(labels, 2))
    probs = np.array([kdpp_prob(ens, p, 2) for p in pairs])
    counts = {frozenset(p): 0 for p in pairs}
    for _ in range(5_000):
        for task in next_meta_batch(state, pool):
            counts[frozenset(task.classes)] += 1
    observed = np.array([counts[frozenset(p)] for p in pairs])
    _, p_value = chi_square_gof(observed, probs)
    assert p_value > 0.01


def test_ddpp_warmup_then_dpp_and_refresh_rules():
    labels = ("a", "b", "c", "d")
    base = make_embedding_table(
        labels, [[2.0, 0.0], [0.0, 2.0], [1.0, 1.0], [1.0, -1.0]]
    )
    pool, _ = synth_gaussian_world(4, 2, 1.0, 0.1, seed=16)
    pool = type(pool)(classes=labels, dim=2, split="train",
                      example_source=pool.example_source)
    state = SamplerState(
        SamplerConfig(kind="ddpp", n_way=2, meta_batch_size=2, seed=17,
                      ddpp_warmup_batches=3),
        embedding_table=base,
    )
    for _ in range(2):
        next_meta_batch(state, pool)
    # refresh mid-warmup must not advance or reset the warmup counter
    refresh_embeddings(state, base)
    assert state.batches_emitted == 2
    next_meta_batch(state, pool)
    assert state.batches_emitted == 3
    # post-warmup draws go through the DPP; collapse embeddings and it fails
    collapsed = make_embedding_table(labels, [[1.0, 0.0]] * 4)
    refresh_embeddings(state, collapsed)
    from episode_forge.errors import InfeasibleK

    with pytest.raises(InfeasibleK):
        next_meta_batch(state, pool)


def test_refresh_wrong_kind_rejected():
    state = SamplerState(SamplerConfig(kind="uniform", seed=18))
    with pytest.raises(WrongSamplerKind):
        refresh_embeddings(state, None)


def test_regression_pool_sampling_kinds():
    pool = RegressionPool("sinusoid")
    got, _ = batches("ndt", pool, 3, n_way=5, meta_batch_size=2, seed=19)
    ids = {t.task_id for b in got for t in b}
    assert len(ids) == 1
    got, _ = batches("ndtb", pool, 4, n_way=5, meta_batch_size=3, seed=20)
    for batch in got:
        assert len({t.task_id for t in batch}) == 1
    assert len({b[0].task_id for b in got}) == 4
    got, _ = batches("uniform", pool, 4, n_way=5, meta_batch_size=3, seed=21)
    assert len({t.task_id for b in got for t in b}) == 12


def test_regression_pool_rejects_dpp():
    pool = RegressionPool("sinusoid")
    state = SamplerState(SamplerConfig(kind="sdpp", n_way=2, seed=22))
    with pytest.raises(WrongSamplerKind):
        next_meta_batch(state, pool)


def test_distinct_class_set_counts_over_horizon():
    # pool large enough that 100 independent 5-way draws collide with
    # negligible probability (C(50,5) ~ 2.1M sets)
    pool, _ = synth_gaussian_world(50, 4, 1.0, 0.1, seed=24)
    horizon = 100
    counts = {}
    for kind in ("ndt", "ndb", "ndtb", "uniform"):
        got, _ = batches(kind, pool, horizon, n_way=5, meta_batch_size=4, seed=23)
        counts[kind] = len({cs for b in got for cs in class_sets(b)})
    assert counts["ndt"] == 1
    assert counts["ndb"] <= 4
    assert counts["ndtb"] == horizon
    assert counts["uniform"] > counts["ndtb"]
