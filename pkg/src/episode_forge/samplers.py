"""The task samplers: streams of meta-batches at different diversity levels.

Kinds and their batch semantics (M = meta-batch size, N = ways):

- ``uniform``      M fresh tasks per batch, classes sampled uniformly.
- ``ndt``          one task fixed at the first call and repeated in every slot
                   of every batch, label permutation included.
- ``ndb``          M tasks fixed at the first call; later batches repeat the
                   same class sets with freshly shuffled label permutations.
- ``ndtb``         each batch draws one fresh class set and fills all M slots
                   with it, each slot under its own label permutation.
- ``sbu``          meta-batch size forced to one; a fresh task per batch.
- ``sbu_unbounded``  same stream as sbu; the variant only means a larger
                   training budget downstream.
- ``sbu_bounded``  one task per batch drawn uniformly from a finite pool of
                   tasks frozen at the first call.
- ``ohtm``         once at least ``ohtm_buffer_min`` tasks have reported
                   difficulties, the hardest buffered tasks fill a fraction of
                   each batch and the rest stay uniform.
- ``sdpp``         every task is an independent k-DPP draw (k = N) over the
                   L-ensemble of the static class embeddings, so each task's
                   classes are picked for joint feature-space volume.
- ``ddpp``         uniform for ``ddpp_warmup_batches`` batches, then as sdpp
                   over the most recently refreshed embeddings.

Samplers also run over regression task sources (the uniform draw becomes a
parameter draw and label permutations do not apply); the DPP kinds need class
embeddings and therefore reject regression pools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dpp import build_l_ensemble, kdpp_sample
from .episodes import ClassPool, RegressionPool, make_task, sample_regression_task
from .errors import (
    NonFiniteDifficulty,
    PoolTooSmall,
    UnknownClass,
    WrongSamplerKind,
)
from .rng import stream

SAMPLER_KINDS = (
    "uniform",
    "ndt",
    "ndb",
    "ndtb",
    "sbu",
    "sbu_bounded",
    "sbu_unbounded",
    "ohtm",
    "sdpp",
    "ddpp",
)

_SINGLE_TASK_KINDS = ("sbu", "sbu_bounded", "sbu_unbounded")
_DPP_KINDS = ("sdpp", "ddpp")


@dataclass(frozen=True)
class SamplerConfig:
    kind: str
    n_way: int = 5
    meta_batch_size: int = 32
    ohtm_buffer_min: int = 50
    ohtm_hard_fraction: float = 0.5
    ddpp_warmup_batches: int = 500
    sbu_pool_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")
        if not 0.0 < self.ohtm_hard_fraction < 1.0:
            raise ValueError("ohtm_hard_fraction must be in (0, 1)")
        if self.n_way < 1 or self.meta_batch_size < 1:
            raise ValueError("n_way and meta_batch_size must be positive")
        if self.kind in _SINGLE_TASK_KINDS and self.meta_batch_size != 1:
            object.__setattr__(self, "meta_batch_size", 1)


class SamplerState:
    """Mutable per-run sampler state; single-owner, one instance per training run."""

    def __init__(self, config: SamplerConfig, embedding_table=None):
        self.config = config
        self.rng = stream(config.seed, "sampler", config.kind)
        self.fixed_task = None  # ndt
        self.fixed_batch = None  # ndb
        self.bounded_pool = None  # sbu_bounded
        self.ohtm_buffer: dict = {}  # task_id -> (task, latest difficulty)
        self.batches_emitted = 0
        self.embedding_table = embedding_table
        self._ensemble = None
        self._ensemble_items = None


def _draw_uniform_classes(state: SamplerState, pool: ClassPool) -> tuple:
    n = state.config.n_way
    if len(pool) < n:
        raise PoolTooSmall(f"pool has {len(pool)} classes, need {n}")
    idx = state.rng.choice(len(pool), size=n, replace=False)
    return tuple(pool.classes[i] for i in idx)


def _fresh_perm(state: SamplerState) -> tuple:
    return tuple(int(i) for i in state.rng.permutation(state.config.n_way))


def _draw_uniform_task(state: SamplerState, pool):
    if isinstance(pool, RegressionPool):
        return sample_regression_task(pool.family, state.rng)
    return make_task(_draw_uniform_classes(state, pool), _fresh_perm(state))


def _reshuffled(state: SamplerState, task, pool):
    if isinstance(pool, RegressionPool):
        return task
    return make_task(task.classes, _fresh_perm(state))


def _dpp_ensemble(state: SamplerState, pool: ClassPool):
    if isinstance(pool, RegressionPool):
        raise WrongSamplerKind(
            "DPP samplers need class embeddings; regression tasks have none"
        )
    if state.embedding_table is None:
        raise UnknownClass("DPP sampler has no embedding table")
    missing = [c for c in pool.classes if c not in state.embedding_table]
    if missing:
        raise UnknownClass(f"embeddings missing for classes {missing[:3]}")
    if state._ensemble is None or state._ensemble_items != pool.classes:
        state._ensemble = build_l_ensemble(state.embedding_table, pool.classes)
        state._ensemble_items = pool.classes
    return state._ensemble


def _draw_dpp_task(state: SamplerState, pool):
    ensemble = _dpp_ensemble(state, pool)
    picked = kdpp_sample(ensemble, state.config.n_way, state.rng)
    return make_task(tuple(sorted(picked, key=str)), _fresh_perm(state))


def next_meta_batch(state: SamplerState, pool) -> list:
    """Emit the next meta-batch of M tasks according to the sampler kind."""
    cfg = state.config
    m = cfg.meta_batch_size
    kind = cfg.kind

    if kind == "uniform":
        batch = [_draw_uniform_task(state, pool) for _ in range(m)]
    elif kind == "ndt":
        if state.fixed_task is None:
            state.fixed_task = _draw_uniform_task(state, pool)
        batch = [state.fixed_task] * m
    elif kind == "ndb":
        if state.fixed_batch is None:
            state.fixed_batch = [_draw_uniform_task(state, pool) for _ in range(m)]
            batch = list(state.fixed_batch)
        else:
            batch = [_reshuffled(state, t, pool) for t in state.fixed_batch]
    elif kind == "ndtb":
        base = _draw_uniform_task(state, pool)
        batch = [base] + [_reshuffled(state, base, pool) for _ in range(m - 1)]
    elif kind in ("sbu", "sbu_unbounded"):
        batch = [_draw_uniform_task(state, pool)]
    elif kind == "sbu_bounded":
        if state.bounded_pool is None:
            state.bounded_pool = [
                _draw_uniform_task(state, pool) for _ in range(cfg.sbu_pool_size)
            ]
        batch = [state.bounded_pool[int(state.rng.integers(len(state.bounded_pool)))]]
    elif kind == "ohtm":
        if len(state.ohtm_buffer) < cfg.ohtm_buffer_min:
            batch = [_draw_uniform_task(state, pool) for _ in range(m)]
        else:
            n_hard = min(math.ceil(m * cfg.ohtm_hard_fraction), len(state.ohtm_buffer))
            ranked = sorted(
                state.ohtm_buffer.values(),
                key=lambda entry: (entry[1], entry[0].task_id),
                reverse=True,
            )
            batch = [task for task, _ in ranked[:n_hard]]
            batch += [_draw_uniform_task(state, pool) for _ in range(m - n_hard)]
    elif kind == "sdpp":
        batch = [_draw_dpp_task(state, pool) for _ in range(m)]
    elif kind == "ddpp":
        if state.batches_emitted < cfg.ddpp_warmup_batches:
            batch = [_draw_uniform_task(state, pool) for _ in range(m)]
        else:
            batch = [_draw_dpp_task(state, pool) for _ in range(m)]
    else:  # pragma: no cover - guarded by SamplerConfig
        raise WrongSamplerKind(kind)

    state.batches_emitted += 1
    return batch


def report_difficulty(state: SamplerState, task, difficulty: float) -> None:
    """Record the latest difficulty (query loss; higher = harder) for a task."""
    difficulty = float(difficulty)
    if not math.isfinite(difficulty):
        raise NonFiniteDifficulty(f"difficulty {difficulty!r} for task {task.task_id}")
    state.ohtm_buffer[task.task_id] = (task, difficulty)


def refresh_embeddings(state: SamplerState, table) -> None:
    """Swap in a new embedding table for a dynamic-DPP sampler."""
    if state.config.kind != "ddpp":
        raise WrongSamplerKind(
            f"refresh_embeddings applies to ddpp, not {state.config.kind!r}"
        )
    state.embedding_table = table
    state._ensemble = None
    state._ensemble_items = None


def with_seed(config: SamplerConfig, seed: int) -> SamplerConfig:
    return replace(config, seed=seed)
