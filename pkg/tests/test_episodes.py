"""Worlds, embedding files, and episode realization."""

import math

import numpy as np
import pytest

from episode_forge.episodes import (
    draw_episode,
    draw_regression_episode,
    ingest_embeddings,
    make_embedding_table,
    make_task,
    sample_regression_task,
    synth_gaussian_splits,
    synth_gaussian_world,
    write_embeddings,
)
from episode_forge.errors import EmbeddingFileError, UnknownClass
from episode_forge.rng import stream


def test_ingest_two_orthonormal_rows(tmp_path):
    path = tmp_path / "emb.csv"
    path.write_text("class_id,e0,e1\na,1,0\nb,0,1\n")
    table = ingest_embeddings(path)
    assert table.dim == 2 and len(table) == 2
    np.testing.assert_allclose(table.vector("a"), [1.0, 0.0])
    np.testing.assert_allclose(table.vector("b"), [0.0, 1.0])


def test_ingest_empty_file_rejected(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(EmbeddingFileError):
        ingest_embeddings(path)


def test_ingest_header_only_rejected(tmp_path):
    path = tmp_path / "noheader.csv"
    path.write_text("class_id,e0,e1\n")
    with pytest.raises(EmbeddingFileError):
        ingest_embeddings(path)


def test_ingest_ragged_row_reports_line(tmp_path):
    path = tmp_path / "ragged.csv"
    path.write_text("class_id,e0,e1\na,1,0\nb,0\n")
    with pytest.raises(EmbeddingFileError) as err:
        ingest_embeddings(path)
    assert err.value.line == 3


def test_ingest_duplicate_class_rejected(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text("class_id,e0\na,1\na,2\n")
    with pytest.raises(EmbeddingFileError):
        ingest_embeddings(path)


def test_ingest_non_numeric_rejected(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("class_id,e0\na,zebra\n")
    with pytest.raises(EmbeddingFileError) as err:
        ingest_embeddings(path)
    assert err.value.line == 2


def test_write_then_read_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(41)
    table = make_embedding_table(
        [f"c{i:02d}" for i in range(50)], rng.standard_normal((50, 16))
    )
    path = tmp_path / "round.csv"
    write_embeddings(table, path)
    back = ingest_embeddings(path)
    assert back.labels == table.labels
    for label in table.labels:
        assert np.array_equal(back.vector(label), table.vector(label))


def test_synth_world_zero_noise_examples_equal_means():
    pool, table = synth_gaussian_world(5, 4, spread=1.0, noise=0.0, seed=3)
    rng = stream(0, "draws")
    xs = pool.draw_examples(pool.classes[2], 10, rng)
    np.testing.assert_allclose(xs, np.tile(table.vector(pool.classes[2]), (10, 1)))


def test_synth_world_seed_determinism():
    pool_a, table_a = synth_gaussian_world(6, 3, 1.0, 0.2, seed=9)
    pool_b, table_b = synth_gaussian_world(6, 3, 1.0, 0.2, seed=9)
    for label in table_a.labels:
        assert np.array_equal(table_a.vector(label), table_b.vector(label))
    xs_a = pool_a.draw_examples(pool_a.classes[0], 5, stream(1, "x"))
    xs_b = pool_b.draw_examples(pool_b.classes[0], 5, stream(1, "x"))
    assert np.array_equal(xs_a, xs_b)


def test_synth_world_empirical_mean_oracle():
    noise = 0.5
    pool, table = synth_gaussian_world(3, 4, spread=2.0, noise=noise, seed=5)
    label = pool.classes[1]
    xs = pool.draw_examples(label, 10_000, stream(2, "mc"))
    tol = 4 * noise / math.sqrt(10_000)
    assert np.all(np.abs(xs.mean(axis=0) - table.vector(label)) < tol)


def test_splits_are_disjoint():
    train_pool, _, test_pool, _ = synth_gaussian_splits(10, 4, 3, 1.0, 0.1, seed=2)
    assert not set(train_pool.classes) & set(test_pool.classes)
    assert train_pool.split == "train" and test_pool.split == "test"


def test_episode_shape_and_one_hot_contract():
    pool, _ = synth_gaussian_world(4, 3, 1.0, 0.1, seed=7)
    task = make_task(pool.classes[:2], (0, 1))
    ep = draw_episode(task, pool, k_shot=1, q_queries=1, rng=stream(0, "ep"))
    assert ep.support_x.shape == (2, 3) and ep.query_x.shape == (2, 3)
    np.testing.assert_allclose(ep.support_y.sum(axis=1), 1.0)
    np.testing.assert_allclose(ep.query_y.sum(axis=1), 1.0)
    # exactly K per slot
    np.testing.assert_allclose(ep.support_y.sum(axis=0), [1.0, 1.0])


def test_repeated_task_draws_fresh_examples():
    pool, _ = synth_gaussian_world(4, 3, 1.0, 0.1, seed=7)
    task = make_task(pool.classes[:2])
    rng = stream(0, "fresh")
    first = draw_episode(task, pool, 2, 2, rng)
    second = draw_episode(task, pool, 2, 2, rng)
    assert not np.array_equal(first.support_x, second.support_x)


def test_label_perm_swaps_slots_not_examples():
    pool, _ = synth_gaussian_world(4, 3, 1.0, 0.1, seed=7)
    identity = make_task(pool.classes[:2], (0, 1))
    swapped = make_task(pool.classes[:2], (1, 0))
    ep_a = draw_episode(identity, pool, 2, 3, stream(5, "pair"))
    ep_b = draw_episode(swapped, pool, 2, 3, stream(5, "pair"))
    np.testing.assert_array_equal(ep_a.support_x, ep_b.support_x)
    np.testing.assert_array_equal(ep_a.support_y, ep_b.support_y[:, ::-1])
    np.testing.assert_array_equal(ep_a.query_y, ep_b.query_y[:, ::-1])


def test_episode_unknown_class():
    pool, _ = synth_gaussian_world(4, 3, 1.0, 0.1, seed=7)
    task = make_task(("nope", pool.classes[0]))
    with pytest.raises(UnknownClass):
        draw_episode(task, pool, 1, 1, stream(0, "x"))


def test_task_id_stable_under_permutation():
    a = make_task(("x", "y", "z"), (0, 1, 2))
    b = make_task(("z", "x", "y"), (2, 1, 0))
    assert a.task_id == b.task_id


def test_sinusoid_zero_at_phase():
    rng = stream(0, "sin")
    for _ in range(20):
        task = sample_regression_task("sinusoid", rng)
        phase = task.param("phase")
        assert abs(task(phase)) < 1e-12


def test_sinusoid_peak_value():
    task = sample_regression_task("sinusoid", stream(1, "sin"))
    peak = task.param("phase") + math.pi / 2
    assert task(peak) == pytest.approx(task.param("amplitude"))


def test_line_flat_case_constant():
    from episode_forge.episodes import RegressionTask

    task = RegressionTask(
        family="sinusoid_line",
        params=(("form", "line"), ("intercept", 2.0), ("slope", 0.0)),
        domain=(-5.0, 5.0),
    )
    xs = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(task(xs), 2.0)


def test_sinusoid_amplitude_range_over_many_draws():
    rng = stream(3, "amp")
    amps = [sample_regression_task("sinusoid", rng).param("amplitude") for _ in range(10_000)]
    assert 0.1 <= min(amps) and max(amps) <= 5.0


def test_sinusoid_line_mixes_both_forms():
    rng = stream(4, "mix")
    forms = {sample_regression_task("sinusoid_line", rng).param("form") for _ in range(200)}
    assert forms == {"sine", "line"}


def test_harmonic_matches_direct_formula():
    rng = stream(5, "harm")
    task = sample_regression_task("harmonic", rng)
    a1, a2 = task.param("a1"), task.param("a2")
    f, p1, p2 = task.param("freq"), task.param("phi1"), task.param("phi2")
    xs = np.linspace(-5, 5, 23)
    expected = a1 * np.sin(f * xs + p1) + a2 * np.sin(2 * f * xs + p2)
    np.testing.assert_allclose(task(xs), expected, rtol=1e-12)


def test_regression_episode_contract():
    task = sample_regression_task("sinusoid", stream(6, "ep"))
    ep = draw_regression_episode(task, 5, 15, stream(7, "ep"))
    assert ep.x_support.shape == (5, 1) and ep.x_query.shape == (15, 1)
    np.testing.assert_allclose(ep.y_support, task(ep.x_support))
    np.testing.assert_allclose(ep.y_query, task(ep.x_query))
    assert ep.x_support.min() >= -5.0 and ep.x_support.max() <= 5.0
