"""Sampler diversity: task -> batch -> overall, as squared parallelotope volumes.

Task diversity (TD) is the squared volume spanned by a task's class
embeddings; the task embedding (TE) is their mean. Batch diversity (BD) is
the squared volume spanned by a batch's TEs, and the batch embedding is
BE = BD * sum_i pi(t_i) TE_i with pi proportional to normalized TD (uniform
fallback when every TD is zero). The overall diversity (OD) of a sampler is
the squared volume spanned by the per-batch BEs over a protocol run,
averaged over seeds and finally scaled so the uniform sampler scores 1.

A batch of size one has BD = 0 by convention, which is what makes the
single-batch-uniform sampler score exactly zero.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import learners
from .episodes import ClassPool, EmbeddingTable, draw_episode
from .errors import ZeroUniformDiversity
from .geometry import gram_volume_sq, mean_vector
from .rng import child_seed, stream
from .samplers import SamplerConfig, SamplerState, next_meta_batch, report_difficulty


@dataclass(frozen=True)
class DiversityProtocol:
    n_batches: int = 5
    batch_size: int = 8
    n_seeds: int = 3

    def __post_init__(self):
        if self.n_batches < 2:
            raise ValueError("need at least two batches for a nonzero volume")
        if self.batch_size < 1 or self.n_seeds < 1:
            raise ValueError("batch_size and n_seeds must be positive")


def task_diversity(task, table: EmbeddingTable) -> float:
    """Squared volume of the parallelotope spanned by the task's class embeddings."""
    return gram_volume_sq(table.matrix(task.classes))


def task_embedding(task, table: EmbeddingTable) -> np.ndarray:
    """Mean embedding of the task's classes (label permutation is irrelevant)."""
    return mean_vector(table.matrix(task.classes))


def batch_diversity(batch, table: EmbeddingTable) -> float:
    """Squared volume spanned by the batch's task embeddings; 0 for |batch| = 1."""
    if len(batch) == 0:
        raise ValueError("batch must contain at least one task")
    if len(batch) == 1:
        return 0.0
    return gram_volume_sq(np.stack([task_embedding(t, table) for t in batch]))


def batch_embedding(batch, table: EmbeddingTable) -> np.ndarray:
    """BD-scaled expectation of the task embeddings under TD-proportional weights."""
    if len(batch) == 0:
        raise ValueError("batch must contain at least one task")
    tds = np.array([task_diversity(t, table) for t in batch])
    tes = np.stack([task_embedding(t, table) for t in batch])
    total = tds.sum()
    if total > 0.0:
        pi = tds / total
    else:
        pi = np.full(len(batch), 1.0 / len(batch))
    bd = batch_diversity(batch, table)
    return bd * (pi[:, None] * tes).sum(axis=0)


@dataclass
class DiversityReport:
    per_sampler: dict  # kind -> OD normalized so uniform == 1
    raw: dict  # kind -> raw OD (mean over seeds)
    intermediates: dict  # kind -> per-seed list of per-batch records
    protocol: DiversityProtocol
    seed: int


def frozen_protonet_feed(pool: ClassPool, table: EmbeddingTable, seed: int,
                         n_way: int, train_batches: int = 60,
                         meta_batch: int = 8, k_shot: int = 1,
                         q_queries: int = 15):
    """Scripted OHTM difficulty source: query loss of a frozen, briefly
    trained prototypical model.

    A linear-embed protonet is trained for ``train_batches`` uniform
    meta-batches on the pool, then frozen. The returned callable scores a
    task by the model's query cross-entropy on a freshly drawn episode, so
    repeated reports of one task fluctuate the way losses do during a live
    training run and the hard set keeps churning.
    """
    cfg = SamplerConfig(kind="uniform", n_way=n_way, meta_batch_size=meta_batch,
                        seed=child_seed(seed, "ohtm-feed-train"))
    state = SamplerState(cfg)
    rng = stream(seed, "ohtm-feed-episodes")
    model = learners.init_proto(stream(seed, "ohtm-feed-init"), in_dim=pool.dim)
    opt = learners.Adam(model.weight.size, lr=0.01)
    for _ in range(train_batches):
        tasks = next_meta_batch(state, pool)
        episodes = [draw_episode(t, pool, k_shot, q_queries, rng) for t in tasks]
        model, _, _ = learners.protonet_train_step(model, episodes, 0.01, opt)
    score_rng = stream(seed, "ohtm-feed-score")

    def difficulty(task) -> float:
        episode = draw_episode(task, pool, k_shot, q_queries, score_rng)
        loss, _, _ = learners.protonet_loss_grad(model, episode)
        return loss

    return difficulty


def _measure_seed(config: SamplerConfig, pool, table, protocol, run_seed: int,
                  ohtm_feed, ohtm_warmup_tasks: int):
    cfg = replace(config, seed=run_seed, meta_batch_size=protocol.batch_size)
    state = SamplerState(
        cfg, embedding_table=table if cfg.kind in ("sdpp", "ddpp") else None
    )
    if cfg.kind == "ohtm" and ohtm_feed is not None:
        warm_state = SamplerState(
            replace(cfg, kind="uniform", meta_batch_size=1,
                    seed=child_seed(run_seed, "ohtm-warmup"))
        )
        for _ in range(ohtm_warmup_tasks):
            task = next_meta_batch(warm_state, pool)[0]
            report_difficulty(state, task, ohtm_feed(task))
    records = []
    rows = []
    for _ in range(protocol.n_batches):
        batch = next_meta_batch(state, pool)
        be = batch_embedding(batch, table)
        rows.append(be)
        records.append(
            {
                "td": [task_diversity(t, table) for t in batch],
                "te": [task_embedding(t, table).tolist() for t in batch],
                "bd": batch_diversity(batch, table),
                "be": be.tolist(),
            }
        )
        if cfg.kind == "ohtm" and ohtm_feed is not None:
            for task in batch:
                report_difficulty(state, task, ohtm_feed(task))
    od = gram_volume_sq(np.stack(rows))
    return od, records


def overall_diversity(config: SamplerConfig, pool, table: EmbeddingTable,
                      protocol: DiversityProtocol = DiversityProtocol(),
                      seed: int = 0, ohtm_feed=None, ohtm_warmup_tasks: int = 150,
                      threads: int = 1, collect: dict | None = None) -> float:
    """Raw overall diversity: per-seed squared BE volume, averaged over seeds."""
    run_seeds = [child_seed(seed, "diversity", config.kind, s)
                 for s in range(protocol.n_seeds)]
    args = [(config, pool, table, protocol, rs, ohtm_feed, ohtm_warmup_tasks)
            for rs in run_seeds]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool_exec:
            results = list(pool_exec.map(lambda a: _measure_seed(*a), args))
    else:
        results = [_measure_seed(*a) for a in args]
    if collect is not None:
        collect["seeds"] = [rec for _, rec in results]
    return float(np.mean([od for od, _ in results]))


def diversity_report(kinds, pool, table: EmbeddingTable,
                     protocol: DiversityProtocol = DiversityProtocol(),
                     seed: int = 0, n_way: int = 5, ohtm_feed=None,
                     threads: int = 1,
                     sampler_overrides: dict | None = None) -> DiversityReport:
    """Measure every requested sampler kind and scale so uniform scores 1."""
    kinds = list(kinds)
    if "uniform" not in kinds:
        raise ValueError("the uniform sampler is required for normalization")
    if "ohtm" in kinds and ohtm_feed is None:
        ohtm_feed = frozen_protonet_feed(pool, table, child_seed(seed, "feed"),
                                         n_way=n_way)
    raw = {}
    intermediates = {}
    overrides = sampler_overrides or {}
    for kind in kinds:
        config = SamplerConfig(kind=kind, n_way=n_way,
                               meta_batch_size=protocol.batch_size,
                               **overrides.get(kind, {}))
        collect: dict = {}
        raw[kind] = overall_diversity(
            config, pool, table, protocol, seed=seed, ohtm_feed=ohtm_feed,
            threads=threads, collect=collect,
        )
        intermediates[kind] = collect["seeds"]
    base = raw["uniform"]
    if base <= 0.0:
        raise ZeroUniformDiversity(
            "uniform sampler measured zero raw diversity; embeddings or "
            "protocol are degenerate"
        )
    normalized = {kind: value / base for kind, value in raw.items()}
    return DiversityReport(
        per_sampler=normalized,
        raw=raw,
        intermediates=intermediates,
        protocol=protocol,
        seed=seed,
    )
