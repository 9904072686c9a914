"""Desk-scale meta-learners and the episodic training loop.

Regression models are the 2x40 rectifier MLP trained by MAML (first- or
second-order, hand-differentiated) or Reptile. Classification uses a
prototypical-network classifier with a linear embedding. ``run_experiment``
ties a sampler to a learner, feeds OHTM difficulties and dynamic-DPP
embedding refreshes back into the sampler, and evaluates on a frozen held-out
task pool shared across samplers.

Inner adaptation loops over the meta-batch are vectorized with a leading task
axis (weights become (M, fan_in, fan_out) stacks); the outer update reduces
in fixed episode order, so runs are bit-deterministic given their seeds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import stats
from .episodes import (
    ClassPool,
    EmbeddingTable,
    Episode,
    RegressionEpisode,
    RegressionPool,
    draw_episode,
    draw_regression_episode,
    make_embedding_table,
    make_task,
    sample_regression_task,
)
from .errors import DimensionMismatch
from .mlp import MlpParams, init_mlp, mlp_grad_hvp, mlp_loss_grad
from .rng import stream
from .samplers import (
    SamplerConfig,
    SamplerState,
    next_meta_batch,
    refresh_embeddings,
    report_difficulty,
)

logger = logging.getLogger("episode_forge")

LEARNERS = ("maml", "maml_fo", "reptile", "protonet")


# ---------------------------------------------------------------------------
# Outer optimizer


class Adam:
    """Adam over a flat parameter vector; (0.9, 0.999, 1e-8) defaults."""

    def __init__(self, size: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad**2
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Sgd:
    """Plain gradient step; noise averages linearly across iterations."""

    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return params - self.lr * grad


# ---------------------------------------------------------------------------
# Batched MLP machinery (leading task axis)


def _stack_params(p: MlpParams, m: int):
    ws = [np.repeat(w[None, :, :], m, axis=0) for w in p.weights]
    bs = [np.repeat(b[None, None, :], m, axis=0) for b in p.biases]
    return ws, bs


def _batched_loss_grad(ws, bs, x, y):
    """Per-task MSE losses and gradients; x, y are (M, B, dim) stacks."""
    last = len(ws) - 1
    acts = [x]
    zs = []
    a = x
    for i in range(len(ws)):
        z = a @ ws[i] + bs[i]
        zs.append(z)
        a = np.maximum(z, 0.0) if i < last else z
        acts.append(a)
    batch = x.shape[1]
    diff = acts[-1] - y
    losses = np.sum(diff**2, axis=-1).mean(axis=-1)  # (M,)
    delta = 2.0 * diff / batch
    g_ws = [None] * len(ws)
    g_bs = [None] * len(bs)
    for i in range(last, -1, -1):
        g_ws[i] = np.matmul(acts[i].transpose(0, 2, 1), delta)
        g_bs[i] = delta.sum(axis=1, keepdims=True)
        if i > 0:
            delta = np.matmul(delta, ws[i].transpose(0, 2, 1)) * (zs[i - 1] > 0.0)
    return losses, g_ws, g_bs


def _batched_losses(ws, bs, x, y):
    last = len(ws) - 1
    a = x
    for i in range(len(ws)):
        z = a @ ws[i] + bs[i]
        a = np.maximum(z, 0.0) if i < last else z
    return np.sum((a - y) ** 2, axis=-1).mean(axis=-1)


def _batched_sgd(ws, bs, x, y, steps: int, lr: float):
    for _ in range(steps):
        _, g_ws, g_bs = _batched_loss_grad(ws, bs, x, y)
        ws = [w - lr * g for w, g in zip(ws, g_ws)]
        bs = [b - lr * g for b, g in zip(bs, g_bs)]
    return ws, bs


def _stack_regression(episodes):
    xs = np.stack([e.x_support for e in episodes])
    ys = np.stack([e.y_support for e in episodes])
    xq = np.stack([e.x_query for e in episodes])
    yq = np.stack([e.y_query for e in episodes])
    return xs, ys, xq, yq


# ---------------------------------------------------------------------------
# MAML and Reptile


def maml_adapt(p: MlpParams, support_x, support_y, inner_steps: int,
               inner_lr: float) -> MlpParams:
    """Plain gradient descent on the support MSE, starting from ``p``."""
    if inner_steps < 1:
        raise ValueError("inner_steps must be >= 1")
    th = p
    for _ in range(inner_steps):
        grad, _ = mlp_loss_grad(th, support_x, support_y)
        th = th.axpy(-inner_lr, grad)
    return th


def maml_meta_gradient(p: MlpParams, episode, inner_steps: int,
                       inner_lr: float) -> tuple[MlpParams, float]:
    """Second-order meta-gradient of one episode's query loss.

    The inner iterates are stored; the query gradient is then pulled back
    through each step via v <- (I - lr * H_support(theta_t)) v, using the
    exact Hessian-vector product.
    """
    iterates = [p]
    th = p
    for _ in range(inner_steps):
        grad, _ = mlp_loss_grad(th, episode.x_support, episode.y_support)
        th = th.axpy(-inner_lr, grad)
        iterates.append(th)
    v, query_loss = mlp_loss_grad(th, episode.x_query, episode.y_query)
    for t in range(inner_steps - 1, -1, -1):
        _, hv = mlp_grad_hvp(iterates[t], episode.x_support, episode.y_support, v)
        v = v.axpy(-inner_lr, hv)
    return v, query_loss


def maml_meta_step(p: MlpParams, episodes, cfg, opt: Adam) -> tuple[MlpParams, np.ndarray]:
    """One outer step on the mean post-adaptation query loss.

    ``maml_fo`` treats the adapted parameters as constants (first order);
    ``maml`` differentiates through the unrolled inner steps. Returns the
    updated parameters and the per-episode query losses.
    """
    m = len(episodes)
    if m == 0:
        raise ValueError("meta batch must be non-empty")
    if cfg.learner == "maml":
        grads, losses = [], []
        for ep in episodes:
            g, ql = maml_meta_gradient(p, ep, cfg.inner_steps, cfg.inner_lr)
            grads.append(g.flat())
            losses.append(ql)
        meta_grad = np.mean(grads, axis=0)
        losses = np.array(losses)
    else:
        xs, ys, xq, yq = _stack_regression(episodes)
        ws, bs = _stack_params(p, m)
        ws, bs = _batched_sgd(ws, bs, xs, ys, cfg.inner_steps, cfg.inner_lr)
        losses, g_ws, g_bs = _batched_loss_grad(ws, bs, xq, yq)
        meta_grad = MlpParams(
            [g.mean(axis=0) for g in g_ws],
            [g.mean(axis=0)[0] for g in g_bs],
        ).flat()
    clip = cfg.meta_grad_clip
    if clip is not None:
        norm = float(np.linalg.norm(meta_grad))
        if norm > clip:
            meta_grad = meta_grad * (clip / norm)
    new_flat = opt.step(p.flat(), meta_grad)
    return p.like_from_flat(new_flat), losses


def _reptile_displacement(p: MlpParams, episodes, cfg):
    """Mean of (W~ - p) over the meta-batch, plus query losses at W~."""
    m = len(episodes)
    xs, ys, xq, yq = _stack_regression(episodes)
    ws, bs = _stack_params(p, m)
    ws, bs = _batched_sgd(ws, bs, xs, ys, cfg.inner_steps, cfg.inner_lr)
    losses = _batched_losses(ws, bs, xq, yq)
    delta = MlpParams(
        [adapted.mean(axis=0) - w for w, adapted in zip(p.weights, ws)],
        [adapted.mean(axis=0)[0] - b for b, adapted in zip(p.biases, bs)],
    )
    return delta, losses


def reptile_meta_step(p: MlpParams, episodes, cfg,
                      meta_lr: float | None = None) -> tuple[MlpParams, np.ndarray]:
    """Move the initialization toward the mean of the adapted weights.

    Per episode, ``inner_steps`` SGD steps on the support set give W~; the
    update is p <- p + meta_lr * mean(W~ - p). Query losses at W~ are
    returned for difficulty reporting. ``meta_lr`` overrides cfg.meta_lr so
    the training loop can anneal the outer step.
    """
    if len(episodes) == 0:
        raise ValueError("meta batch must be non-empty")
    step = cfg.meta_lr if meta_lr is None else meta_lr
    delta, losses = _reptile_displacement(p, episodes, cfg)
    return p.axpy(step, delta), losses


# ---------------------------------------------------------------------------
# Prototypical network


@dataclass
class ProtoModel:
    """Linear embedding x -> x @ W.T; prototypes are per-class support means."""

    weight: np.ndarray  # (embed_dim, in_dim)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    def embed(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.in_dim:
            raise DimensionMismatch(f"expected inputs of dimension {self.in_dim}")
        return x @ self.weight.T


def init_proto(rng: np.random.Generator, in_dim: int, embed_dim=None,
               identity: bool = False) -> ProtoModel:
    if identity:
        return ProtoModel(weight=np.eye(in_dim))
    embed_dim = in_dim if embed_dim is None else embed_dim
    w = rng.standard_normal((embed_dim, in_dim)) / np.sqrt(in_dim)
    return ProtoModel(weight=w)


def _prototypes(model: ProtoModel, episode: Episode) -> np.ndarray:
    e_s = model.embed(episode.support_x)  # (N*K, d)
    return episode.support_y.T @ e_s / episode.k_shot  # (N, d)


def protonet_predict(model: ProtoModel, episode: Episode) -> np.ndarray:
    """Per-query probabilities: softmax over negative squared distances
    to the class prototypes (support means in embed space)."""
    protos = _prototypes(model, episode)
    e_q = model.embed(episode.query_x)
    d2 = (
        np.sum(e_q**2, axis=1)[:, None]
        - 2.0 * e_q @ protos.T
        + np.sum(protos**2, axis=1)[None, :]
    )
    logits = -d2
    logits -= logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    return exp / exp.sum(axis=1, keepdims=True)


def protonet_loss_grad(model: ProtoModel, episode: Episode):
    """Query cross-entropy, its gradient w.r.t. the embedding weight, and
    the query accuracy."""
    e_s = model.embed(episode.support_x)
    protos = episode.support_y.T @ e_s / episode.k_shot
    e_q = model.embed(episode.query_x)
    d2 = (
        np.sum(e_q**2, axis=1)[:, None]
        - 2.0 * e_q @ protos.T
        + np.sum(protos**2, axis=1)[None, :]
    )
    logits = -d2
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    n_query = episode.query_y.shape[0]
    loss = -float(
        np.mean(np.sum(episode.query_y * (shifted - np.log(exp.sum(axis=1, keepdims=True))), axis=1))
    )
    accuracy = float(np.mean(probs.argmax(axis=1) == episode.query_y.argmax(axis=1)))

    g = (probs - episode.query_y) / n_query  # dLoss/dlogits
    row = g.sum(axis=1, keepdims=True)
    col = g.sum(axis=0)[:, None]
    d_eq = 2.0 * (g @ protos - row * e_q)
    d_protos = 2.0 * (g.T @ e_q - col * protos)
    d_es = episode.support_y @ d_protos / episode.k_shot
    grad_w = d_eq.T @ episode.query_x + d_es.T @ episode.support_x
    return loss, grad_w, accuracy


def protonet_train_step(model: ProtoModel, episodes, meta_lr: float,
                        opt: Adam | None = None):
    """Gradient step on the mean query cross-entropy over the meta-batch.

    Returns the updated model, the per-episode query losses (for OHTM), and
    the per-episode accuracies.
    """
    if len(episodes) == 0:
        raise ValueError("meta batch must be non-empty")
    losses, accs = [], []
    grad = np.zeros_like(model.weight)
    for ep in episodes:
        loss, g, acc = protonet_loss_grad(model, ep)
        losses.append(loss)
        accs.append(acc)
        grad += g
    grad /= len(episodes)
    if opt is None:
        new_w = model.weight - meta_lr * grad
    else:
        new_w = opt.step(model.weight.ravel(), grad.ravel()).reshape(model.weight.shape)
    return ProtoModel(weight=new_w), np.array(losses), np.array(accs)


def class_embeddings_from_model(model: ProtoModel, pool: ClassPool,
                                samples_per_class: int,
                                rng: np.random.Generator) -> EmbeddingTable:
    """Per class, the mean embedding of fresh examples; feeds dynamic DPP."""
    if samples_per_class < 1:
        raise ValueError("samples_per_class must be >= 1")
    rows = []
    for label in pool.classes:
        xs = pool.draw_examples(label, samples_per_class, rng)
        rows.append(model.embed(xs).mean(axis=0))
    return make_embedding_table(pool.classes, np.stack(rows))


# ---------------------------------------------------------------------------
# Experiment driver


@dataclass(frozen=True)
class TrainConfig:
    learner: str
    sampler: SamplerConfig
    epochs: int = 20
    batches_per_epoch: int = 100
    inner_steps: int = 1
    inner_lr: float = 0.01
    meta_lr: float = 0.001
    k_shot: int = 5
    q_queries: int = 15
    eval_pool_size: int = 1024
    seed: int = 0
    eval_seed: int = 9001
    family: str = "sinusoid"
    embed_dim: int | None = None
    ddpp_refresh_interval: int = 50
    ddpp_samples_per_class: int = 8
    # test-time adaptation budget; defaults to the training inner_steps
    eval_adapt_steps: int | None = None
    # outer step size schedule: constant, annealed linearly to zero, or
    # constant for the first half then annealed (warm_linear)
    meta_lr_schedule: str = "linear"
    # meta-gradient norm ceiling; None disables clipping
    meta_grad_clip: float | None = 10.0
    # inputs are multiplied by this before the MLP; the regression domain is
    # [-5, 5], so 0.2 maps it to [-1, 1] and keeps inner GD well-conditioned
    input_scale: float = 0.2
    # first-moment decay of the outer Adam step
    adam_beta1: float = 0.9
    # reptile outer update: plain interpolation toward the adapted weights,
    # or the mean displacement fed to Adam as a gradient
    reptile_outer: str = "plain"
    # maml outer optimizer: adam or plain sgd on the meta-gradient
    maml_outer: str = "adam"
    # fraction of final training batches whose iterates are averaged into
    # the evaluated parameters (Polyak tail averaging); 0 evaluates the
    # last iterate
    polyak_tail: float = 0.0

    @property
    def total_batches(self) -> int:
        return self.epochs * self.batches_per_epoch

    def meta_lr_at(self, batch_index: int) -> float:
        if self.meta_lr_schedule == "constant":
            return self.meta_lr
        if self.meta_lr_schedule == "warm_linear":
            half = self.total_batches // 2
            if batch_index < half:
                return self.meta_lr
            frac = (batch_index - half) / max(self.total_batches - half, 1)
            return self.meta_lr * (1.0 - frac)
        return self.meta_lr * (1.0 - batch_index / self.total_batches)

    def __post_init__(self):
        if self.learner not in LEARNERS:
            raise ValueError(f"unknown learner {self.learner!r}")
        for name in ("epochs", "batches_per_epoch", "inner_steps", "k_shot",
                     "q_queries", "eval_pool_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.inner_lr < 0 or self.meta_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.meta_lr_schedule not in ("constant", "linear", "warm_linear"):
            raise ValueError(f"unknown meta_lr_schedule {self.meta_lr_schedule!r}")
        if self.reptile_outer not in ("plain", "adam"):
            raise ValueError(f"unknown reptile_outer {self.reptile_outer!r}")
        if self.maml_outer not in ("adam", "sgd"):
            raise ValueError(f"unknown maml_outer {self.maml_outer!r}")


@dataclass
class RunResult:
    """Held-out per-task metrics plus the training curve.

    ``per_task`` is MSE for regression and accuracy for classification, one
    entry per task of the frozen evaluation pool. One epoch is
    ``batches_per_epoch`` meta-batches (recorded in metadata).
    """

    per_task: np.ndarray
    curve: list
    mean: float
    ci95: float
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ClassificationWorld:
    train_pool: ClassPool
    train_table: EmbeddingTable
    test_pool: ClassPool


def regression_eval_pool(family: str, size: int, k_shot: int, q_queries: int,
                         eval_seed: int):
    """Frozen held-out pool: tasks and their support/query draws.

    Keyed only by (eval_seed, family, shots), so every sampler and learner at
    the same master eval seed scores the exact same task list.
    """
    task_rng = stream(eval_seed, "eval-tasks", family)
    tasks = [sample_regression_task(family, task_rng) for _ in range(size)]
    ep_rng = stream(eval_seed, "eval-episodes", family, k_shot, q_queries)
    episodes = [draw_regression_episode(t, k_shot, q_queries, ep_rng) for t in tasks]
    return tasks, episodes


def _scale_episode(ep, scale: float):
    if scale == 1.0:
        return ep
    return RegressionEpisode(
        x_support=ep.x_support * scale, y_support=ep.y_support,
        x_query=ep.x_query * scale, y_query=ep.y_query,
    )


def classification_eval_pool(test_pool: ClassPool, n_way: int, size: int,
                             k_shot: int, q_queries: int, eval_seed: int):
    task_rng = stream(eval_seed, "eval-tasks", test_pool.split)
    tasks = []
    for _ in range(size):
        idx = task_rng.choice(len(test_pool), size=n_way, replace=False)
        classes = tuple(test_pool.classes[i] for i in idx)
        perm = tuple(int(i) for i in task_rng.permutation(n_way))
        tasks.append(make_task(classes, perm))
    ep_rng = stream(eval_seed, "eval-episodes", test_pool.split, k_shot, q_queries)
    episodes = [draw_episode(t, test_pool, k_shot, q_queries, ep_rng) for t in tasks]
    return tasks, episodes


def evaluate_regression(p: MlpParams, episodes, inner_steps: int,
                        inner_lr: float, chunk: int = 256) -> np.ndarray:
    """Post-adaptation query MSE per held-out task."""
    out = []
    for start in range(0, len(episodes), chunk):
        part = episodes[start : start + chunk]
        xs, ys, xq, yq = _stack_regression(part)
        ws, bs = _stack_params(p, len(part))
        ws, bs = _batched_sgd(ws, bs, xs, ys, inner_steps, inner_lr)
        out.append(_batched_losses(ws, bs, xq, yq))
    return np.concatenate(out)


def evaluate_protonet(model: ProtoModel, episodes) -> np.ndarray:
    """Query accuracy per held-out task."""
    accs = np.empty(len(episodes))
    for i, ep in enumerate(episodes):
        probs = protonet_predict(model, ep)
        accs[i] = np.mean(probs.argmax(axis=1) == ep.query_y.argmax(axis=1))
    return accs


def run_experiment(cfg: TrainConfig, world) -> RunResult:
    """Train with the configured sampler and score the frozen held-out pool."""
    if cfg.learner == "protonet":
        return _run_protonet(cfg, world)
    return _run_regression(cfg, world)


def _run_regression(cfg: TrainConfig, world: RegressionPool | None) -> RunResult:
    pool = world if world is not None else RegressionPool(cfg.family)
    sampler_cfg = replace(cfg.sampler, seed=cfg.seed)
    state = SamplerState(sampler_cfg)
    init_rng = stream(cfg.seed, "init", "mlp")
    params = init_mlp(init_rng, in_dim=1, hidden=(40, 40), out_dim=1)
    if cfg.learner != "reptile" and cfg.maml_outer == "sgd":
        opt = Sgd(lr=cfg.meta_lr)
    else:
        opt = Adam(params.flat().size, lr=cfg.meta_lr, beta1=cfg.adam_beta1)
    ep_rng = stream(cfg.seed, "train-episodes", pool.family)
    _, eval_episodes = regression_eval_pool(
        pool.family, cfg.eval_pool_size, cfg.k_shot, cfg.q_queries, cfg.eval_seed
    )
    eval_episodes = [_scale_episode(e, cfg.input_scale) for e in eval_episodes]

    ohtm_active = False
    curve = []
    batch_index = 0
    tail_start = int(cfg.total_batches * (1.0 - cfg.polyak_tail))
    tail_sum = None
    tail_count = 0
    for epoch in range(1, cfg.epochs + 1):
        epoch_losses = []
        for _ in range(cfg.batches_per_epoch):
            tasks = next_meta_batch(state, pool)
            episodes = [
                _scale_episode(
                    draw_regression_episode(t, cfg.k_shot, cfg.q_queries, ep_rng),
                    cfg.input_scale,
                )
                for t in tasks
            ]
            if cfg.learner == "reptile" and cfg.reptile_outer == "plain":
                params, losses = reptile_meta_step(
                    params, episodes, cfg, meta_lr=cfg.meta_lr_at(batch_index)
                )
            elif cfg.learner == "reptile":
                delta, losses = _reptile_displacement(params, episodes, cfg)
                opt.lr = cfg.meta_lr_at(batch_index)
                params = params.like_from_flat(
                    opt.step(params.flat(), -delta.flat())
                )
            else:
                opt.lr = cfg.meta_lr_at(batch_index)
                params, losses = maml_meta_step(params, episodes, cfg, opt)
            batch_index += 1
            if cfg.polyak_tail > 0.0 and batch_index > tail_start:
                flat = params.flat()
                tail_sum = flat if tail_sum is None else tail_sum + flat
                tail_count += 1
            epoch_losses.append(losses.mean())
            if sampler_cfg.kind == "ohtm":
                for task, loss in zip(tasks, losses):
                    report_difficulty(state, task, loss)
                if not ohtm_active and len(state.ohtm_buffer) >= sampler_cfg.ohtm_buffer_min:
                    ohtm_active = True
                    logger.info(
                        "ohtm buffer reached %d tasks; hard-task mining active",
                        sampler_cfg.ohtm_buffer_min,
                    )
        curve.append((epoch, float(np.mean(epoch_losses))))

    if tail_count > 0:
        params = params.like_from_flat(tail_sum / tail_count)
    adapt_steps = cfg.eval_adapt_steps if cfg.eval_adapt_steps else cfg.inner_steps
    per_task = evaluate_regression(params, eval_episodes, adapt_steps, cfg.inner_lr)
    mean, ci = stats.mean_ci95(per_task)
    return RunResult(
        per_task=per_task,
        curve=curve,
        mean=mean,
        ci95=ci,
        metadata={
            "metric": "mse",
            "family": pool.family,
            "epoch_unit": f"{cfg.batches_per_epoch} meta-batches",
        },
    )


def _run_protonet(cfg: TrainConfig, world: ClassificationWorld) -> RunResult:
    sampler_cfg = replace(cfg.sampler, seed=cfg.seed)
    needs_table = sampler_cfg.kind in ("sdpp", "ddpp")
    state = SamplerState(
        sampler_cfg, embedding_table=world.train_table if needs_table else None
    )
    init_rng = stream(cfg.seed, "init", "protonet")
    model = init_proto(init_rng, in_dim=world.train_pool.dim, embed_dim=cfg.embed_dim)
    opt = Adam(model.weight.size, lr=cfg.meta_lr)
    ep_rng = stream(cfg.seed, "train-episodes", "classification")
    refresh_rng = stream(cfg.seed, "ddpp-refresh")
    _, eval_episodes = classification_eval_pool(
        world.test_pool, sampler_cfg.n_way, cfg.eval_pool_size,
        cfg.k_shot, cfg.q_queries, cfg.eval_seed,
    )

    if sampler_cfg.kind == "ddpp":
        logger.info(
            "ddpp warmup: uniform sampling for the first %d meta-batches",
            sampler_cfg.ddpp_warmup_batches,
        )
    ohtm_active = False
    warmup_logged = False
    curve = []
    batches_total = 0
    for epoch in range(1, cfg.epochs + 1):
        epoch_accs = []
        for _ in range(cfg.batches_per_epoch):
            if (
                sampler_cfg.kind == "ddpp"
                and batches_total > 0
                and batches_total % cfg.ddpp_refresh_interval == 0
            ):
                table = class_embeddings_from_model(
                    model, world.train_pool, cfg.ddpp_samples_per_class, refresh_rng
                )
                refresh_embeddings(state, table)
                logger.info("ddpp embeddings refreshed at meta-batch %d", batches_total)
            tasks = next_meta_batch(state, world.train_pool)
            if (
                sampler_cfg.kind == "ddpp"
                and not warmup_logged
                and batches_total + 1 > sampler_cfg.ddpp_warmup_batches
            ):
                warmup_logged = True
                logger.info(
                    "ddpp warmup complete after %d meta-batches",
                    sampler_cfg.ddpp_warmup_batches,
                )
            episodes = [
                draw_episode(t, world.train_pool, cfg.k_shot, cfg.q_queries, ep_rng)
                for t in tasks
            ]
            model, losses, accs = protonet_train_step(model, episodes, cfg.meta_lr, opt)
            epoch_accs.append(accs.mean())
            if sampler_cfg.kind == "ohtm":
                for task, loss in zip(tasks, losses):
                    report_difficulty(state, task, loss)
                if not ohtm_active and len(state.ohtm_buffer) >= sampler_cfg.ohtm_buffer_min:
                    ohtm_active = True
                    logger.info(
                        "ohtm buffer reached %d tasks; hard-task mining active",
                        sampler_cfg.ohtm_buffer_min,
                    )
            batches_total += 1
        curve.append((epoch, float(np.mean(epoch_accs))))

    per_task = evaluate_protonet(model, eval_episodes)
    mean, ci = stats.mean_ci95(per_task)
    return RunResult(
        per_task=per_task,
        curve=curve,
        mean=mean,
        ci95=ci,
        metadata={
            "metric": "accuracy",
            "epoch_unit": f"{cfg.batches_per_epoch} meta-batches",
        },
    )
