"""L-ensembles over class embeddings and exact k-DPP sampling.

The L-ensemble is the PSD similarity matrix L[i, j] = <psi_i, psi_j> over the
class feature vectors. A k-DPP draws a size-k subset A with probability
proportional to det(L_A), i.e. to the squared volume of the parallelotope
spanned by the selected feature vectors, so near-parallel (similar) classes
are sampled together rarely and duplicates never.

Sampling is the standard two-phase exact method: pick an eigenvector index
set of size k via the elementary-symmetric-polynomial recurrence, then pick
items one at a time with probability proportional to the squared row norms of
the selected eigenbasis, deflating and re-orthonormalizing after each pick.
``kdpp_prob`` is the brute-force enumeration oracle used to validate the
sampler; it shares no code with the sampling path beyond the matrix itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from .errors import DimensionMismatch, EnumerationTooLarge, InfeasibleK, UnknownClass

# Eigenvalues below this fraction of the largest are treated as exact zeros
# when computing the rank (feasibility of k).
_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class LEnsemble:
    """Similarity kernel plus its cached eigendecomposition.

    ``matrix`` is N x N symmetric PSD, ``item_ids`` labels its rows/columns.
    Eigenvalues are clamped at zero; the decomposition must reconstruct the
    matrix to 1e-6 relative Frobenius error.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    item_ids: tuple
    _esp_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        m = self.matrix
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch("L must be square")
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.T).max() > 1e-9 * scale:
            raise ValueError("L must be symmetric")
        if self.eigenvalues.min() < -1e-9 * max(1.0, float(self.eigenvalues.max())):
            raise ValueError("L must be positive semi-definite")
        recon = (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T
        err = np.linalg.norm(recon - m) / max(np.linalg.norm(m), 1e-30)
        if err > 1e-6:
            raise ValueError(f"eigendecomposition reconstruction error {err:.2e}")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def rank(self) -> int:
        cached = self._esp_cache.get("rank")
        if cached is None:
            lam_max = float(self.eigenvalues.max(initial=0.0))
            cached = (
                0 if lam_max == 0.0
                else int(np.sum(self.eigenvalues > _RANK_RTOL * lam_max))
            )
            self._esp_cache["rank"] = cached
        return cached

    def index_of(self, item) -> int:
        try:
            return self.item_ids.index(item)
        except ValueError:
            raise UnknownClass(item) from None

    def esp_table(self, k: int) -> np.ndarray:
        if k not in self._esp_cache:
            self._esp_cache[k] = elementary_symmetric(self.eigenvalues, k)
        return self._esp_cache[k]


def l_ensemble_from_matrix(l, item_ids=None) -> LEnsemble:
    """Wrap an existing PSD matrix (symmetrized, eigenvalues clamped at 0)."""
    l = np.asarray(l, dtype=float)
    l = 0.5 * (l + l.T)
    vals, vecs = np.linalg.eigh(l)
    vals = np.maximum(vals, 0.0)
    ids = tuple(range(l.shape[0])) if item_ids is None else tuple(item_ids)
    if len(ids) != l.shape[0]:
        raise DimensionMismatch("item_ids must match the matrix size")
    return LEnsemble(matrix=l, eigenvalues=vals, eigenvectors=vecs, item_ids=ids)


def build_l_ensemble(table, items) -> LEnsemble:
    """L[i, j] = dot(psi_i, psi_j) over the given items' embeddings."""
    items = tuple(items)
    if len(items) == 0:
        raise UnknownClass("cannot build an L-ensemble over zero items")
    rows = [table.vector(item) for item in items]
    psi = np.stack(rows)  # (N, d): row i is the feature vector of item i
    return l_ensemble_from_matrix(psi @ psi.T, items)


def elementary_symmetric(eigenvalues, k: int) -> np.ndarray:
    """Table E[l, n] of elementary symmetric polynomials e_l over the first n values.

    Recurrence: e_l^n = e_l^{n-1} + lam_n * e_{l-1}^{n-1}, with e_0^n = 1 and
    e_l^0 = 0 for l >= 1.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    n_items = lam.size
    if k > n_items:
        raise ValueError("k cannot exceed the number of eigenvalues")
    e = np.zeros((k + 1, n_items + 1))
    e[0, :] = 1.0
    for n in range(1, n_items + 1):
        for l in range(1, k + 1):
            e[l, n] = e[l, n - 1] + lam[n - 1] * e[l - 1, n - 1]
    return e


def _select_eigenvectors(ensemble: LEnsemble, k: int, rng: np.random.Generator) -> list[int]:
    """Phase 1: choose k eigenvector indices, walking n from N down to 1.

    Index n is included with probability lam_n * e_{l-1}^{n-1} / e_l^n where l
    slots remain open.
    """
    e = ensemble.esp_table(k)
    lam = ensemble.eigenvalues
    chosen: list[int] = []
    l = k
    for n in range(ensemble.size, 0, -1):
        if l == 0:
            break
        if e[l, n] <= 0.0:
            continue
        if l == n or rng.random() < lam[n - 1] * e[l - 1, n - 1] / e[l, n]:
            chosen.append(n - 1)
            l -= 1
    if l != 0:
        raise InfeasibleK(f"could not fill {k} eigenvector slots")
    return chosen


def _orthonormalize(v: np.ndarray) -> np.ndarray:
    """In-place two-pass modified Gram-Schmidt over the columns of v."""
    for c in range(v.shape[1]):
        if c:
            prev = v[:, :c]
            v[:, c] -= prev @ (prev.T @ v[:, c])
            v[:, c] -= prev @ (prev.T @ v[:, c])
        norm = np.sqrt(v[:, c] @ v[:, c])
        if norm > 0.0:
            v[:, c] /= norm
    return v


def kdpp_sample(ensemble: LEnsemble, k: int, rng: np.random.Generator) -> list:
    """Draw a size-k subset with probability det(L_A) / sum_{|B|=k} det(L_B).

    Returns the item ids in pick order (the subset itself is unordered).
    Raises :class:`InfeasibleK` when k exceeds the rank of L: the embeddings
    then cannot span a k-dimensional volume.
    """
    if k < 1:
        raise InfeasibleK("k must be >= 1")
    if k > ensemble.rank:
        raise InfeasibleK(
            f"k={k} exceeds rank {ensemble.rank} of the L-ensemble"
        )
    v = ensemble.eigenvectors[:, _select_eigenvectors(ensemble, k, rng)].copy()
    picked: list[int] = []
    for _ in range(k):
        weights = np.einsum("ij,ij->i", v, v)
        weights[picked] = 0.0  # true probability of re-picking is exactly zero
        cum = np.cumsum(weights)
        total = cum[-1]
        if total <= 0.0:
            raise InfeasibleK("projected basis collapsed during sampling")
        i = min(int(np.searchsorted(cum, rng.random() * total, side="right")),
                ensemble.size - 1)
        picked.append(i)
        if v.shape[1] == 1:
            break
        # Condition the remaining subspace on item i: eliminate one column
        # against row i, then re-orthonormalize to bound numerical drift.
        j = int(np.argmax(np.abs(v[i, :])))
        col = v[:, j].copy()
        v[:, j] = v[:, -1]
        v = v[:, :-1]
        v -= np.outer(col, v[i, :] / col[i])
        v = _orthonormalize(v)
    return [ensemble.item_ids[i] for i in picked]


def kdpp_prob(ensemble: LEnsemble, subset, k: int, cap: int = 200_000) -> float:
    """Exact k-DPP probability of ``subset`` by enumerating all k-subsets.

    Brute-force oracle: normalizes det(L_subset) against the sum of principal
    minors over every size-k subset. Guarded to small ground sets.
    """
    subset = tuple(subset)
    if len(set(subset)) != len(subset) or len(subset) != k:
        raise ValueError(f"subset must contain exactly k={k} distinct items")
    n = ensemble.size
    if n > 20:
        raise EnumerationTooLarge("enumeration oracle limited to N <= 20")
    if comb(n, k) > cap:
        raise EnumerationTooLarge(f"C({n},{k}) exceeds the cap of {cap}")
    idx = [ensemble.index_of(item) for item in subset]
    minor = ensemble.matrix[np.ix_(idx, idx)]
    numerator = max(float(np.linalg.det(minor)), 0.0)
    total = 0.0
    for combo in combinations(range(n), k):
        sub = ensemble.matrix[np.ix_(combo, combo)]
        total += max(float(np.linalg.det(sub)), 0.0)
    if total <= 0.0:
        raise InfeasibleK(f"no size-{k} subset has positive volume")
    return numerator / total
