"""Command-line surface: reproducible experiments with file-based outputs.

Subcommands: ``diversity`` (the sampler-diversity table), ``sample``
(episode stream as JSON Lines), ``train-regression`` and ``train-protonet``
(desk-scale runs with per-task metrics), ``dpp-check`` (empirical k-DPP
validation), and ``ttest`` (paired t-test on two per-task CSV files).

Every command resolves its options as: explicit flags > config file
(flat ``key=value`` lines, ``#`` comments ignored) > built-in defaults, and
writes the fully resolved configuration to ``manifest.txt`` in the output
directory. Re-running with ``--config manifest.txt`` reproduces the run;
result files are byte-identical given the same seed and ``--threads 1``.
Wall-clock metadata lives in ``run_info.txt``, the one file excluded from
the byte-identical guarantee.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__, diversity, dpp, learners, stats
from .episodes import (
    RegressionPool,
    draw_episode,
    ingest_embeddings,
    make_embedding_table,
    synth_gaussian_splits,
    synth_gaussian_world,
)
from .errors import EpisodeForgeError
from .rng import stream
from .samplers import SAMPLER_KINDS, SamplerConfig, SamplerState, next_meta_batch

logger = logging.getLogger("episode_forge")

# learner-specific defaults for the regression runs; chosen so the desk-scale
# budget reproduces the sampler trends (see README)
_REGRESSION_DEFAULTS = {
    "maml": {"inner_steps": 1, "inner_lr": 0.01, "meta_lr": 0.001,
             "meta_lr_schedule": "constant", "polyak_tail": 0.0},
    "maml_fo": {"inner_steps": 30, "inner_lr": 0.007, "meta_lr": 0.01,
                "meta_lr_schedule": "constant", "polyak_tail": 0.5},
    "reptile": {"inner_steps": 30, "inner_lr": 0.007, "meta_lr": 0.5,
                "meta_lr_schedule": "constant", "polyak_tail": 0.5},
}


class UsageError(EpisodeForgeError):
    pass


def parse_config_file(path) -> dict:
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
    return values


def _coerce(raw: str, kind):
    if kind is bool:
        if raw.lower() in ("1", "true", "yes"):
            return True
        if raw.lower() in ("0", "false", "no"):
            return False
        raise UsageError(f"cannot parse boolean from {raw!r}")
    if raw == "None":
        return None
    return kind(raw)


def resolve_options(args: argparse.Namespace, table, config: dict) -> dict:
    """flags > config file > defaults, per the (name, type, default) table."""
    resolved = {}
    for name, kind, default in table:
        flag_value = getattr(args, name, None)
        if flag_value is not None:
            resolved[name] = flag_value
        elif name in config:
            resolved[name] = _coerce(config[name], kind)
        else:
            resolved[name] = default
    return resolved


def write_manifest(out_dir: str, command: str, resolved: dict, outputs: list) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "manifest.txt")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# episode-forge {__version__}\n")
        fh.write(f"# command: {command}\n")
        for name in sorted(resolved):
            fh.write(f"{name}={resolved[name]}\n")
        for out in outputs:
            fh.write(f"# output: {out}\n")
    info = os.path.join(out_dir, "run_info.txt")
    with open(info, "w", encoding="utf-8") as fh:
        fh.write(f"command={command}\n")
        fh.write(f"version={__version__}\n")
        fh.write(f"wall_clock_utc={time.strftime('%Y-%m-%dT%H:%M:%SZ', time.gmtime())}\n")
        fh.write(f"outputs={','.join(outputs)}\n")
    return path


def _threads(resolved: dict) -> int:
    if resolved.get("threads"):
        return int(resolved["threads"])
    env = os.environ.get("EPISODE_FORGE_THREADS")
    return int(env) if env else 1


def _parse_synth(spec: str):
    parts = spec.split(",")
    if len(parts) != 4:
        raise UsageError("--synth expects classes,dim,spread,noise")
    return int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])


def _world_from(resolved: dict):
    if resolved.get("embeddings"):
        table = ingest_embeddings(resolved["embeddings"])
        noise = resolved.get("noise", 0.1)

        def example_source(label, count, rng):
            mu = table.vector(label)
            return mu + noise * rng.standard_normal((count, table.dim))

        from .episodes import ClassPool

        pool = ClassPool(classes=table.labels, dim=table.dim, split="train",
                         example_source=example_source)
        return pool, table
    if resolved.get("synth"):
        n_classes, dim, spread, noise = _parse_synth(resolved["synth"])
        return synth_gaussian_world(n_classes, dim, spread, noise,
                                    seed=resolved["world_seed"])
    raise UsageError("provide --embeddings FILE or --synth classes,dim,spread,noise")


def _csv_header(fh, manifest_rel: str):
    fh.write(f"# manifest: {manifest_rel}\n")


# ---------------------------------------------------------------------------
# diversity


_DIVERSITY_TABLE = [
    ("embeddings", str, None),
    ("synth", str, None),
    ("samplers", str, "uniform,ndt,ndb,ndtb,sbu,ohtm,sdpp"),
    ("n_way", int, 5),
    ("batches", int, 5),
    ("batch_size", int, 8),
    ("seeds", int, 3),
    ("seed", int, 0),
    ("world_seed", int, 7),
    ("noise", float, 0.1),
    ("threads", int, None),
    ("out_dir", str, "."),
]


def cmd_diversity(args, config) -> int:
    resolved = resolve_options(args, _DIVERSITY_TABLE, config)
    pool, table = _world_from(resolved)
    kinds = [k.strip().replace("-", "_") for k in resolved["samplers"].split(",") if k.strip()]
    for kind in kinds:
        if kind not in SAMPLER_KINDS:
            raise UsageError(f"unknown sampler kind {kind!r}")
    protocol = diversity.DiversityProtocol(
        n_batches=resolved["batches"],
        batch_size=resolved["batch_size"],
        n_seeds=resolved["seeds"],
    )
    report = diversity.diversity_report(
        kinds, pool, table, protocol, seed=resolved["seed"],
        n_way=resolved["n_way"], threads=_threads(resolved),
    )
    out_dir = resolved["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "diversity.csv")
    json_path = os.path.join(out_dir, "diversity.json")
    manifest = write_manifest(out_dir, "diversity", resolved,
                              ["diversity.csv", "diversity.json"])
    with open(csv_path, "w", encoding="utf-8") as fh:
        _csv_header(fh, os.path.basename(manifest))
        fh.write("sampler,od_normalized\n")
        for kind in kinds:
            fh.write(f"{kind},{report.per_sampler[kind]!r}\n")
    payload = {
        "protocol": asdict(report.protocol),
        "seed": report.seed,
        "per_sampler": report.per_sampler,
        "raw": report.raw,
        "intermediates": report.intermediates,
        "manifest": os.path.basename(manifest),
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    for kind in kinds:
        print(f"{kind},{report.per_sampler[kind]:.6g}")
    return 0


# ---------------------------------------------------------------------------
# sample


_SAMPLE_TABLE = [
    ("embeddings", str, None),
    ("synth", str, "50,16,1.0,0.1"),
    ("sampler", str, "uniform"),
    ("n_way", int, 5),
    ("k_shot", int, 1),
    ("q_queries", int, 15),
    ("meta_batch_size", int, 4),
    ("count", int, 1),
    ("seed", int, 0),
    ("world_seed", int, 7),
    ("noise", float, 0.1),
    ("ohtm_buffer_min", int, 50),
    ("ohtm_hard_fraction", float, 0.5),
    ("ddpp_warmup_batches", int, 500),
    ("sbu_pool_size", int, 32),
    ("out", str, None),
    ("threads", int, None),
]


def cmd_sample(args, config) -> int:
    resolved = resolve_options(args, _SAMPLE_TABLE, config)
    pool, table = _world_from(resolved)
    kind = resolved["sampler"].replace("-", "_")
    if kind not in SAMPLER_KINDS:
        raise UsageError(f"unknown sampler kind {kind!r}")
    cfg = SamplerConfig(
        kind=kind, n_way=resolved["n_way"],
        meta_batch_size=resolved["meta_batch_size"],
        ohtm_buffer_min=resolved["ohtm_buffer_min"],
        ohtm_hard_fraction=resolved["ohtm_hard_fraction"],
        ddpp_warmup_batches=resolved["ddpp_warmup_batches"],
        sbu_pool_size=resolved["sbu_pool_size"],
        seed=resolved["seed"],
    )
    state = SamplerState(cfg, embedding_table=table)
    ep_rng = stream(resolved["seed"], "cli-sample-episodes")
    sink = open(resolved["out"], "w", encoding="utf-8") if resolved["out"] else sys.stdout
    try:
        for _ in range(resolved["count"]):
            for task in next_meta_batch(state, pool):
                episode = draw_episode(task, pool, resolved["k_shot"],
                                       resolved["q_queries"], ep_rng)
                record = {
                    "task_id": task.task_id,
                    "classes": list(task.classes),
                    "support": [
                        {"x": [float(v) for v in x], "y": int(y.argmax())}
                        for x, y in zip(episode.support_x, episode.support_y)
                    ],
                    "query": [
                        {"x": [float(v) for v in x], "y": int(y.argmax())}
                        for x, y in zip(episode.query_x, episode.query_y)
                    ],
                }
                sink.write(json.dumps(record) + "\n")
    finally:
        if sink is not sys.stdout:
            sink.close()
    return 0


# ---------------------------------------------------------------------------
# train-regression


_TRAIN_REGRESSION_TABLE = [
    ("learner", str, "maml_fo"),
    ("family", str, "sinusoid"),
    ("shots", int, 5),
    ("q_queries", int, 15),
    ("sampler", str, "uniform"),
    ("epochs", int, 20),
    ("batches_per_epoch", int, 100),
    ("meta_batch_size", int, 32),
    ("inner_steps", int, None),
    ("inner_lr", float, None),
    ("meta_lr", float, None),
    ("meta_lr_schedule", str, None),
    ("polyak_tail", float, None),
    ("eval_pool_size", int, 1024),
    ("eval_seed", int, 9001),
    ("seed", int, 1),
    ("ohtm_buffer_min", int, 50),
    ("ohtm_hard_fraction", float, 0.5),
    ("sbu_pool_size", int, 32),
    ("threads", int, None),
    ("out_dir", str, "."),
]


def _write_run_outputs(out_dir: str, command: str, resolved: dict,
                       result: learners.RunResult) -> None:
    os.makedirs(out_dir, exist_ok=True)
    manifest = write_manifest(out_dir, command, resolved,
                              ["curve.csv", "per_task.csv", "summary.txt"])
    rel = os.path.basename(manifest)
    with open(os.path.join(out_dir, "curve.csv"), "w", encoding="utf-8") as fh:
        _csv_header(fh, rel)
        fh.write("epoch,mean_metric\n")
        for epoch, value in result.curve:
            fh.write(f"{epoch},{value!r}\n")
    with open(os.path.join(out_dir, "per_task.csv"), "w", encoding="utf-8") as fh:
        _csv_header(fh, rel)
        fh.write("task_index,metric\n")
        for i, value in enumerate(result.per_task):
            fh.write(f"{i},{float(value)!r}\n")
    summary = f"{result.mean:.6f} ± {result.ci95:.6f}"
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"# manifest: {rel}\n")
        fh.write(f"metric={result.metadata.get('metric')}\n")
        fh.write(f"mean_ci95={summary}\n")
    print(summary)


def cmd_train_regression(args, config) -> int:
    resolved = resolve_options(args, _TRAIN_REGRESSION_TABLE, config)
    learner = resolved["learner"].replace("-", "_")
    if learner not in _REGRESSION_DEFAULTS:
        raise UsageError(f"unknown regression learner {resolved['learner']!r}")
    defaults = _REGRESSION_DEFAULTS[learner]
    for key, value in defaults.items():
        if resolved[key] is None:
            resolved[key] = value
    family = resolved["family"].replace("-", "_")
    kind = resolved["sampler"].replace("-", "_")
    sampler_cfg = SamplerConfig(
        kind=kind, n_way=1, meta_batch_size=resolved["meta_batch_size"],
        ohtm_buffer_min=resolved["ohtm_buffer_min"],
        ohtm_hard_fraction=resolved["ohtm_hard_fraction"],
        sbu_pool_size=resolved["sbu_pool_size"],
        seed=resolved["seed"],
    )
    cfg = learners.TrainConfig(
        learner=learner, sampler=sampler_cfg,
        epochs=resolved["epochs"], batches_per_epoch=resolved["batches_per_epoch"],
        inner_steps=resolved["inner_steps"], inner_lr=resolved["inner_lr"],
        meta_lr=resolved["meta_lr"], k_shot=resolved["shots"],
        q_queries=resolved["q_queries"], eval_pool_size=resolved["eval_pool_size"],
        seed=resolved["seed"], eval_seed=resolved["eval_seed"], family=family,
        meta_lr_schedule=resolved["meta_lr_schedule"],
        polyak_tail=resolved["polyak_tail"],
    )
    resolved["learner"] = learner
    resolved["family"] = family
    resolved["sampler"] = kind
    result = learners.run_experiment(cfg, RegressionPool(family))
    if not np.isfinite(result.per_task).all():
        raise EpisodeForgeError("training diverged: non-finite eval losses")
    _write_run_outputs(resolved["out_dir"], "train-regression", resolved, result)
    return 0


# ---------------------------------------------------------------------------
# train-protonet


_TRAIN_PROTONET_TABLE = [
    ("synth", str, "50,16,1.0,0.1"),
    ("test_classes", int, 20),
    ("world_seed", int, 7),
    ("sampler", str, "uniform"),
    ("n_way", int, 5),
    ("k_shot", int, 1),
    ("q_queries", int, 15),
    ("epochs", int, 4),
    ("batches_per_epoch", int, 50),
    ("meta_batch_size", int, 16),
    ("meta_lr", float, 0.01),
    ("embed_dim", int, None),
    ("eval_pool_size", int, 1024),
    ("eval_seed", int, 9001),
    ("seed", int, 1),
    ("ohtm_buffer_min", int, 50),
    ("ohtm_hard_fraction", float, 0.5),
    ("ddpp_warmup_batches", int, 500),
    ("ddpp_refresh_interval", int, 50),
    ("sbu_pool_size", int, 32),
    ("threads", int, None),
    ("out_dir", str, "."),
]


def cmd_train_protonet(args, config) -> int:
    resolved = resolve_options(args, _TRAIN_PROTONET_TABLE, config)
    n_classes, dim, spread, noise = _parse_synth(resolved["synth"])
    train_pool, train_table, test_pool, _ = synth_gaussian_splits(
        n_classes, resolved["test_classes"], dim, spread, noise,
        seed=resolved["world_seed"],
    )
    kind = resolved["sampler"].replace("-", "_")
    sampler_cfg = SamplerConfig(
        kind=kind, n_way=resolved["n_way"],
        meta_batch_size=resolved["meta_batch_size"],
        ohtm_buffer_min=resolved["ohtm_buffer_min"],
        ohtm_hard_fraction=resolved["ohtm_hard_fraction"],
        ddpp_warmup_batches=resolved["ddpp_warmup_batches"],
        sbu_pool_size=resolved["sbu_pool_size"],
        seed=resolved["seed"],
    )
    cfg = learners.TrainConfig(
        learner="protonet", sampler=sampler_cfg,
        epochs=resolved["epochs"], batches_per_epoch=resolved["batches_per_epoch"],
        inner_steps=1, inner_lr=0.0, meta_lr=resolved["meta_lr"],
        k_shot=resolved["k_shot"], q_queries=resolved["q_queries"],
        eval_pool_size=resolved["eval_pool_size"], seed=resolved["seed"],
        eval_seed=resolved["eval_seed"], embed_dim=resolved["embed_dim"],
        ddpp_refresh_interval=resolved["ddpp_refresh_interval"],
        meta_lr_schedule="constant",
    )
    resolved["sampler"] = kind
    world = learners.ClassificationWorld(train_pool, train_table, test_pool)
    result = learners.run_experiment(cfg, world)
    _write_run_outputs(resolved["out_dir"], "train-protonet", resolved, result)
    return 0


# ---------------------------------------------------------------------------
# dpp-check


_DPP_CHECK_TABLE = [
    ("n", int, 4),
    ("k", int, 2),
    ("draws", int, 60000),
    ("dim", int, None),
    ("duplicate", bool, False),
    ("seed", int, 0),
    ("threads", int, None),
]


def run_dpp_check(n: int, k: int, draws: int, seed: int, dim=None,
                  duplicate=False, sampler=dpp.kdpp_sample):
    """Empirical k-DPP check: chi-square fit of sampled subsets against the
    brute-force probabilities. ``sampler`` is injectable for harness tests."""
    if n > 8 or k > 3:
        raise UsageError("dpp-check is limited to n <= 8, k <= 3")
    dim = n if dim is None else dim
    rng = stream(seed, "dpp-check-embeddings")
    vectors = rng.standard_normal((n, dim))
    if duplicate:
        vectors[1] = vectors[0]
    labels = [f"c{i}" for i in range(n)]
    table = make_embedding_table(labels, vectors)
    ensemble = dpp.build_l_ensemble(table, labels)
    from itertools import combinations

    subsets = list(combinations(labels, k))
    probs = np.array([dpp.kdpp_prob(ensemble, s, k) for s in subsets])
    counts = {frozenset(s): 0 for s in subsets}
    draw_rng = stream(seed, "dpp-check-draws")
    for _ in range(draws):
        counts[frozenset(sampler(ensemble, k, draw_rng))] += 1
    observed = np.array([counts[frozenset(s)] for s in subsets])
    keep = probs > 0
    if not np.all(keep):
        # zero-probability subsets must never be drawn; fold them out of the
        # chi-square and fail immediately if one was sampled
        if observed[~keep].sum() > 0:
            return 0.0, float("inf"), observed, probs
    stat, p = stats.chi_square_gof(observed[keep], probs[keep] / probs[keep].sum())
    return p, stat, observed, probs


def cmd_dpp_check(args, config) -> int:
    resolved = resolve_options(args, _DPP_CHECK_TABLE, config)
    p, stat, observed, probs = run_dpp_check(
        resolved["n"], resolved["k"], resolved["draws"], resolved["seed"],
        dim=resolved["dim"], duplicate=resolved["duplicate"],
    )
    verdict = "pass" if p > 0.01 else "fail"
    print(f"chi_square={stat:.4f}")
    print(f"p_value={p:.6g}")
    print(f"verdict={verdict}")
    zero = [i for i, pr in enumerate(probs) if pr == 0.0]
    if zero:
        print(f"zero_probability_subsets={len(zero)} observed={int(observed[zero].sum())}")
    return 0


# ---------------------------------------------------------------------------
# ttest


def _read_metric_csv(path) -> np.ndarray:
    values = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("task_index"):
                continue
            parts = line.split(",")
            values.append(float(parts[-1]))
    if not values:
        raise UsageError(f"{path}: no metric rows")
    return np.array(values)


def cmd_ttest(args, config) -> int:
    del config
    a = _read_metric_csv(args.file_a)
    b = _read_metric_csv(args.file_b)
    result = stats.paired_t_test(a, b)
    alpha = args.alpha if args.alpha is not None else 0.05
    significant = "yes" if result.p < alpha else "no"
    print(f"t,p,dof,significant@{alpha}")
    print(f"{result.t:.6g},{result.p:.6g},{result.dof},{significant}")
    return 0


# ---------------------------------------------------------------------------
# parser


def _add_table_options(sub, table):
    for name, kind, _default in table:
        flag = "--" + name.replace("_", "-")
        if kind is bool:
            sub.add_argument(flag, dest=name, action="store_const", const=True)
        else:
            sub.add_argument(flag, dest=name, type=kind)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="episode-forge",
        description="Episodic task samplers, diversity measurement, and "
                    "desk-scale meta-learning runs.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    subs = parser.add_subparsers(dest="command", required=True)

    for name, table in (
        ("diversity", _DIVERSITY_TABLE),
        ("sample", _SAMPLE_TABLE),
        ("train-regression", _TRAIN_REGRESSION_TABLE),
        ("train-protonet", _TRAIN_PROTONET_TABLE),
        ("dpp-check", _DPP_CHECK_TABLE),
    ):
        sub = subs.add_parser(name)
        sub.add_argument("--config", type=str, default=None)
        _add_table_options(sub, table)

    ttest = subs.add_parser("ttest")
    ttest.add_argument("file_a")
    ttest.add_argument("file_b")
    ttest.add_argument("--alpha", type=float, default=None)
    ttest.add_argument("--config", type=str, default=None)
    return parser


_COMMANDS = {
    "diversity": cmd_diversity,
    "sample": cmd_sample,
    "train-regression": cmd_train_regression,
    "train-protonet": cmd_train_protonet,
    "dpp-check": cmd_dpp_check,
    "ttest": cmd_ttest,
}


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO,
                        format="%(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    config = parse_config_file(args.config) if args.config else {}
    try:
        return _COMMANDS[args.command](args, config)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except EpisodeForgeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
