"""Class pools, synthetic worlds, and realization of tasks into episodes.

A Task is an ordered set of N class labels plus a label permutation assigning
each class to an episode label slot. Drawing an episode realizes the task into
a support set (K examples per class) and a query set (Q per class) with
one-hot labels; repeating a task never repeats examples. Regression tasks are
parameterized functions (sinusoid, sinusoid-or-line, harmonic) realized into
noiseless (x, y) support/query pairs.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    DimensionMismatch,
    EmbeddingFileError,
    EmptyInput,
    UnknownClass,
)
from .rng import stream

REGRESSION_FAMILIES = ("sinusoid", "sinusoid_line", "harmonic")


# ---------------------------------------------------------------------------
# Embedding tables


@dataclass(frozen=True)
class EmbeddingTable:
    """Map from class label to a d-dimensional feature vector."""

    dim: int
    entries: dict

    def __post_init__(self):
        for label, vec in self.entries.items():
            if vec.shape != (self.dim,):
                raise DimensionMismatch(
                    f"embedding for {label!r} has dim {vec.shape}, expected ({self.dim},)"
                )

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, label) -> bool:
        return label in self.entries

    @property
    def labels(self) -> tuple:
        return tuple(self.entries)

    def vector(self, label) -> np.ndarray:
        try:
            return self.entries[label]
        except KeyError:
            raise UnknownClass(label) from None

    def matrix(self, labels) -> np.ndarray:
        """Stack the embeddings of ``labels`` as rows."""
        return np.stack([self.vector(lab) for lab in labels])


def make_embedding_table(labels, vectors) -> EmbeddingTable:
    vectors = np.asarray(vectors, dtype=float)
    if vectors.ndim != 2 or len(labels) != vectors.shape[0]:
        raise DimensionMismatch("need one row per label")
    entries = {}
    for label, row in zip(labels, vectors):
        if label in entries:
            raise EmbeddingFileError(f"duplicate class {label!r}")
        entries[label] = row.copy()
    return EmbeddingTable(dim=vectors.shape[1], entries=entries)


def ingest_embeddings(path) -> EmbeddingTable:
    """Read an embedding CSV: header ``class_id,e0,...,e{d-1}``, one row per class."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmbeddingFileError("empty embedding file", line=1) from None
        if len(header) < 2 or header[0] != "class_id":
            raise EmbeddingFileError(
                "header must be class_id,e0,...,e{d-1}", line=1
            )
        dim = len(header) - 1
        entries = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != dim + 1:
                raise EmbeddingFileError(
                    f"expected {dim + 1} fields, got {len(row)}", line=lineno
                )
            label = row[0]
            if label in entries:
                raise EmbeddingFileError(f"duplicate class {label!r}", line=lineno)
            try:
                entries[label] = np.array([float(v) for v in row[1:]])
            except ValueError:
                raise EmbeddingFileError("non-numeric embedding value", line=lineno) from None
    if not entries:
        raise EmbeddingFileError("embedding file contains no rows", line=1)
    return EmbeddingTable(dim=dim, entries=entries)


def write_embeddings(table: EmbeddingTable, path) -> None:
    """Write the CSV form of a table; floats use repr so round-trips are bit-exact."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class_id"] + [f"e{i}" for i in range(table.dim)])
        for label, vec in table.entries.items():
            writer.writerow([label] + [repr(float(v)) for v in vec])


# ---------------------------------------------------------------------------
# Tasks


def _stable_id(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little")


@dataclass(frozen=True)
class Task:
    """N ordered class labels plus a permutation mapping position -> label slot."""

    classes: tuple
    label_perm: tuple
    task_id: int

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("task classes must be distinct")
        if sorted(self.label_perm) != list(range(len(self.classes))):
            raise ValueError("label_perm must be a bijection on class positions")

    @property
    def n_way(self) -> int:
        return len(self.classes)


def make_task(classes, label_perm=None) -> Task:
    classes = tuple(classes)
    if label_perm is None:
        label_perm = tuple(range(len(classes)))
    task_id = _stable_id(",".join(str(c) for c in sorted(classes, key=str)))
    return Task(classes=classes, label_perm=tuple(int(i) for i in label_perm), task_id=task_id)


# ---------------------------------------------------------------------------
# Class pools and synthetic worlds


@dataclass(frozen=True)
class ClassPool:
    """Label universe plus a per-class stochastic example source.

    ``example_source(label, count, rng)`` returns a (count, dim) array of
    feature-space examples; it must be pure given the rng state.
    """

    classes: tuple
    dim: int
    split: str
    example_source: Callable = field(repr=False)

    def __post_init__(self):
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("pool classes must be distinct")

    def __len__(self) -> int:
        return len(self.classes)

    def draw_examples(self, label, count: int, rng: np.random.Generator) -> np.ndarray:
        if label not in self.classes:
            raise UnknownClass(label)
        return self.example_source(label, count, rng)


def synth_gaussian_world(
    n_classes: int,
    dim: int,
    spread: float,
    noise: float,
    seed: int,
    split: str = "train",
    label_prefix: str = "c",
) -> tuple[ClassPool, EmbeddingTable]:
    """Isotropic Gaussian class world.

    Class means are drawn i.i.d. from N(0, spread^2 I); examples are the class
    mean plus N(0, noise^2 I) noise. The returned table holds the exact means,
    which double as the class embeddings for DPP sampling and diversity.
    """
    if n_classes < 2 or dim < 2:
        raise ValueError("need n_classes >= 2 and dim >= 2")
    if spread <= 0 or noise < 0:
        raise ValueError("spread must be positive and noise non-negative")
    mean_rng = stream(seed, "world-means", split)
    means = spread * mean_rng.standard_normal((n_classes, dim))
    labels = tuple(f"{label_prefix}{i:03d}" for i in range(n_classes))
    table = make_embedding_table(labels, means)

    def example_source(label, count, rng):
        mu = table.vector(label)
        return mu + noise * rng.standard_normal((count, dim))

    pool = ClassPool(classes=labels, dim=dim, split=split, example_source=example_source)
    return pool, table


def synth_gaussian_splits(
    n_train: int,
    n_test: int,
    dim: int,
    spread: float,
    noise: float,
    seed: int,
):
    """Disjoint train/test pools from the same generative world."""
    train_pool, train_table = synth_gaussian_world(
        n_train, dim, spread, noise, seed, split="train", label_prefix="c"
    )
    test_pool, test_table = synth_gaussian_world(
        n_test, dim, spread, noise, seed, split="test", label_prefix="t"
    )
    return train_pool, train_table, test_pool, test_table


# ---------------------------------------------------------------------------
# Classification episodes


@dataclass(frozen=True)
class Episode:
    """Support and query sets with one-hot labels over N slots."""

    support_x: np.ndarray  # (N*K, D)
    support_y: np.ndarray  # (N*K, N) one-hot
    query_x: np.ndarray  # (N*Q, D)
    query_y: np.ndarray  # (N*Q, N) one-hot
    n_way: int
    k_shot: int
    q_queries: int


def draw_episode(task: Task, pool: ClassPool, k_shot: int, q_queries: int,
                 rng: np.random.Generator) -> Episode:
    """Realize ``task`` into fresh support/query examples.

    Each call draws new examples from the pool; labels pass through
    ``task.label_perm`` so the same class set can occupy different slots.
    """
    if k_shot < 1 or q_queries < 1:
        raise ValueError("k_shot and q_queries must be >= 1")
    n = task.n_way
    sup_x, sup_y, qry_x, qry_y = [], [], [], []
    for position, label in enumerate(task.classes):
        slot = task.label_perm[position]
        xs = pool.draw_examples(label, k_shot + q_queries, rng)
        onehot = np.zeros(n)
        onehot[slot] = 1.0
        sup_x.append(xs[:k_shot])
        qry_x.append(xs[k_shot:])
        sup_y.append(np.tile(onehot, (k_shot, 1)))
        qry_y.append(np.tile(onehot, (q_queries, 1)))
    return Episode(
        support_x=np.concatenate(sup_x),
        support_y=np.concatenate(sup_y),
        query_x=np.concatenate(qry_x),
        query_y=np.concatenate(qry_y),
        n_way=n,
        k_shot=k_shot,
        q_queries=q_queries,
    )


# ---------------------------------------------------------------------------
# Regression tasks


@dataclass(frozen=True)
class RegressionTask:
    """A target function drawn from one of the regression families."""

    family: str
    params: tuple  # ((name, value), ...) sorted by name
    domain: tuple[float, float]

    def __post_init__(self):
        if self.family not in REGRESSION_FAMILIES:
            raise ValueError(f"unknown regression family {self.family!r}")

    @property
    def task_id(self) -> int:
        return _stable_id(f"{self.family}:{self.params!r}")

    def param(self, name: str) -> float:
        for key, value in self.params:
            if key == name:
                return value
        raise KeyError(name)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        p = dict(self.params)
        if self.family == "harmonic":
            return p["a1"] * np.sin(p["freq"] * x + p["phi1"]) + p["a2"] * np.sin(
                2.0 * p["freq"] * x + p["phi2"]
            )
        if p.get("form") == "line":
            return p["slope"] * x + p["intercept"]
        return p["amplitude"] * np.sin(x - p["phase"])


# Parameter ranges for the three families (x domain is [-5, 5] throughout):
# sinusoid amplitude in [0.1, 5], phase in [0, pi]; line slope/intercept in
# [-3, 3]; harmonic base frequency in [0.5, 1.5], amplitudes in [0.1, 5],
# phases in [0, 2*pi].
_DOMAIN = (-5.0, 5.0)


def sample_regression_task(family: str, rng: np.random.Generator) -> RegressionTask:
    if family not in REGRESSION_FAMILIES:
        raise ValueError(f"unknown regression family {family!r}")
    if family == "harmonic":
        params = (
            ("a1", float(rng.uniform(0.1, 5.0))),
            ("a2", float(rng.uniform(0.1, 5.0))),
            ("freq", float(rng.uniform(0.5, 1.5))),
            ("phi1", float(rng.uniform(0.0, 2.0 * math.pi))),
            ("phi2", float(rng.uniform(0.0, 2.0 * math.pi))),
        )
        return RegressionTask(family=family, params=params, domain=_DOMAIN)
    use_line = family == "sinusoid_line" and rng.random() < 0.5
    if use_line:
        params = (
            ("form", "line"),
            ("intercept", float(rng.uniform(-3.0, 3.0))),
            ("slope", float(rng.uniform(-3.0, 3.0))),
        )
    else:
        params = (
            ("amplitude", float(rng.uniform(0.1, 5.0))),
            ("form", "sine"),
            ("phase", float(rng.uniform(0.0, math.pi))),
        )
    return RegressionTask(family=family, params=params, domain=_DOMAIN)


@dataclass(frozen=True)
class RegressionEpisode:
    x_support: np.ndarray  # (K, 1)
    y_support: np.ndarray  # (K, 1)
    x_query: np.ndarray  # (Q, 1)
    y_query: np.ndarray  # (Q, 1)


def draw_regression_episode(task: RegressionTask, k_shot: int, q_queries: int,
                            rng: np.random.Generator) -> RegressionEpisode:
    """Sample x uniformly from the task domain; y is the exact function value."""
    lo, hi = task.domain
    x = rng.uniform(lo, hi, size=k_shot + q_queries)
    y = task(x)
    return RegressionEpisode(
        x_support=x[:k_shot, None],
        y_support=y[:k_shot, None],
        x_query=x[k_shot:, None],
        y_query=y[k_shot:, None],
    )


@dataclass(frozen=True)
class RegressionPool:
    """Task source for a regression family; plays the role of a class pool."""

    family: str
    split: str = "train"

    def __post_init__(self):
        if self.family not in REGRESSION_FAMILIES:
            raise ValueError(f"unknown regression family {self.family!r}")
