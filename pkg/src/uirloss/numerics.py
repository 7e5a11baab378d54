"""Dense float64 primitives shared by the rest of the package.

Vectors and matrices are plain ``numpy.ndarray`` objects of dtype float64.
The functions here validate their inputs and raise :class:`DimensionError`
or :class:`DegenerateInputError` rather than silently producing NaNs.
"""

import numpy as np

NORM_EPS = 1e-12


class DimensionError(ValueError):
    """Empty input or mismatched shapes."""


class DegenerateInputError(ValueError):
    """Input whose norm is too small to normalize."""


def as_vec(x):
    """Return ``x`` as a finite 1-D float64 array."""
    v = np.asarray(x, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains NaN or Inf")
    return v


def as_mat(x):
    """Return ``x`` as a finite 2-D float64 array."""
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains NaN or Inf")
    return m


def softmax(z, axis=-1):
    """Max-shifted softmax along ``axis``.

    Works for a single vector or a batch of rows. Any finite input is safe:
    the largest entry is subtracted before exponentiation.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0 or z.shape[axis] == 0:
        raise DimensionError("softmax of an empty vector")
    shifted = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0 or z.shape[axis] == 0:
        raise DimensionError("log_softmax of an empty vector")
    shifted = z - np.max(z, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def logsumexp(z, axis=-1):
    z = np.asarray(z, dtype=np.float64)
    if z.size == 0 or z.shape[axis] == 0:
        raise DimensionError("logsumexp of an empty vector")
    zmax = np.max(z, axis=axis, keepdims=True)
    out = zmax + np.log(np.sum(np.exp(z - zmax), axis=axis, keepdims=True))
    return np.squeeze(out, axis=axis)


def l2_normalize(v):
    """Scale ``v`` to unit Euclidean norm."""
    v = as_vec(v)
    n = np.linalg.norm(v)
    if n <= NORM_EPS:
        raise DegenerateInputError(f"cannot normalize vector with norm {n:.3g}")
    return v / n


def l2_normalize_rows(m):
    """Row-wise :func:`l2_normalize`; raises if any row is degenerate."""
    m = as_mat(m)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    if np.any(norms <= NORM_EPS):
        raise DegenerateInputError("matrix has a row with (near) zero norm")
    return m / norms


def cosine_distance(u, v):
    """``1 - u.v / (|u| |v|)``, clipped to [0, 2]."""
    u = as_vec(u)
    v = as_vec(v)
    if u.shape != v.shape:
        raise DimensionError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu <= NORM_EPS or nv <= NORM_EPS:
        raise DegenerateInputError("cosine distance with a zero vector")
    d = 1.0 - float(np.dot(u, v)) / (nu * nv)
    return min(max(d, 0.0), 2.0)


def cosine_similarity_matrix(a, b):
    """Cosine similarity between every row of ``a`` and every row of ``b``."""
    return l2_normalize_rows(a) @ l2_normalize_rows(b).T
