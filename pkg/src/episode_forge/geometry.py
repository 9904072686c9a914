"""Squared volumes of parallelotopes spanned by row vectors.

For an m x n matrix A (rows = edge vectors, m <= n), the squared m-dimensional
volume of the spanned parallelotope equals det(A A^T). The determinant is taken
of the small m x m Gram matrix, never of A itself, which stays stable when
m is much smaller than n.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, EmptyInput


def as_row_matrix(rows) -> np.ndarray:
    """Validate and convert a list of equal-length vectors to a 2-D array."""
    try:
        a = np.asarray(rows, dtype=float)
    except ValueError as exc:
        raise DimensionMismatch(f"rows have unequal lengths: {exc}") from exc
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2 or a.dtype == object:
        raise DimensionMismatch("rows must form a 2-D real matrix")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise EmptyInput("need at least one row of dimension >= 1")
    return a


def gram_volume_sq(rows) -> float:
    """det(A A^T) for the row matrix A: the squared parallelotope volume.

    Returns 0.0 for any linearly dependent row set (including m > n). Tiny
    negative determinants from roundoff are clamped to zero, since Gram
    matrices are positive semi-definite.
    """
    a = as_row_matrix(rows)
    if a.shape[0] > a.shape[1]:
        return 0.0
    gram = a @ a.T
    det = float(np.linalg.det(gram))
    return det if det > 0.0 else 0.0


def mean_vector(vectors) -> np.ndarray:
    """Componentwise arithmetic mean of a non-empty list of equal-dim vectors."""
    if len(vectors) == 0:
        raise EmptyInput("mean of zero vectors is undefined")
    a = as_row_matrix(vectors)
    return a.mean(axis=0)
