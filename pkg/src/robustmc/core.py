"""Dense matrices, index sets, matrix norms and error metrics.

Matrices are plain 2-D float64 numpy arrays; :func:`as_matrix` is the single
validation gate.  Index sets are boolean masks wrapped in :class:`IndexSet`.
"""
from dataclasses import dataclass

import numpy as np

NORM_KINDS = ("nuclear", "operator", "sup", "l1", "l21", "l2inf", "frobenius")

RANK_RTOL = 1e-12


class DimensionError(ValueError):
    """Operands have incompatible shapes."""


def as_matrix(A, name="A"):
    """Return `A` as a finite, non-empty 2-D float64 array."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains NaN or Inf")
    return A


def dims_info(m1, m2):
    """Return ``(d, m, M)`` = (m1 + m2, min, max)."""
    return m1 + m2, min(m1, m2), max(m1, m2)


@dataclass(frozen=True, eq=False)
class IndexSet:
    """Subset of the ``m1 x m2`` grid stored as a boolean mask."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise DimensionError("IndexSet mask must be 2-D")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_pairs(cls, dims, pairs):
        m1, m2 = dims
        mask = np.zeros((m1, m2), dtype=bool)
        for j, k in pairs:
            if not (0 <= j < m1 and 0 <= k < m2):
                raise DimensionError(f"index ({j}, {k}) outside {m1}x{m2} grid")
            mask[j, k] = True
        return cls(mask)

    @classmethod
    def full(cls, dims):
        return cls(np.ones(dims, dtype=bool))

    @classmethod
    def empty(cls, dims):
        return cls(np.zeros(dims, dtype=bool))

    @classmethod
    def columns(cls, dims, cols):
        """The columnwise set ``{all rows} x cols``."""
        mask = np.zeros(dims, dtype=bool)
        mask[:, list(cols)] = True
        return cls(mask)

    @property
    def dims(self):
        return self.mask.shape

    def complement(self):
        return IndexSet(~self.mask)

    def pairs(self):
        return [tuple(int(v) for v in p) for p in np.argwhere(self.mask)]

    def __len__(self):
        return int(self.mask.sum())

    def __contains__(self, jk):
        j, k = jk
        return bool(self.mask[j, k])

    def __eq__(self, other):
        if not isinstance(other, IndexSet):
            return NotImplemented
        return self.mask.shape == other.mask.shape and bool(np.all(self.mask == other.mask))

    def __hash__(self):
        return hash((self.mask.shape, self.mask.tobytes()))


@dataclass(frozen=True)
class ErrorReport:
    normalized_frob_L: float
    normalized_frob_S: float
    noncorrupted_S_error: float

    def as_dict(self):
        return {
            "normalized_frob_L": self.normalized_frob_L,
            "normalized_frob_S": self.normalized_frob_S,
            "noncorrupted_S_error": self.noncorrupted_S_error,
        }


def norm(A, kind):
    """Matrix norm of `A`.

    Parameters
    ----------
    A : array_like, shape (m1, m2)
    kind : str
        One of ``nuclear`` (sum of singular values), ``operator`` (largest
        singular value), ``sup`` (largest absolute entry), ``l1`` (sum of
        absolute entries), ``l21`` (sum of column l2 norms), ``l2inf``
        (largest column l2 norm) or ``frobenius``.

    Returns
    -------
    float
    """
    A = as_matrix(A)
    if kind == "nuclear":
        return float(np.linalg.svd(A, compute_uv=False).sum())
    if kind == "operator":
        return float(np.linalg.svd(A, compute_uv=False)[0])
    if kind == "sup":
        return float(np.abs(A).max())
    if kind == "l1":
        return float(np.abs(A).sum())
    if kind == "l21":
        return float(np.sqrt((A * A).sum(axis=0)).sum())
    if kind == "l2inf":
        return float(np.sqrt((A * A).sum(axis=0)).max())
    if kind == "frobenius":
        return float(np.sqrt((A * A).sum()))
    raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def numerical_rank(A, rtol=RANK_RTOL):
    """Number of singular values above ``rtol * sigma_max``."""
    sv = np.linalg.svd(as_matrix(A), compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rtol * sv[0]))


def restrict(A, I):
    """Copy of `A` with entries outside the index set `I` set to zero."""
    A = as_matrix(A)
    if A.shape != I.dims:
        raise DimensionError(f"matrix shape {A.shape} does not match index set dims {I.dims}")
    return np.where(I.mask, A, 0.0)


def error_report(L_hat, S_hat, L0, S0, I):
    """Normalized squared errors of an estimate.

    ``I`` is the non-corrupted index set (complement of the corruption
    support); the third field is ``||S_hat restricted to I||_2^2 / |I|``.
    """
    L_hat, S_hat = as_matrix(L_hat, "L_hat"), as_matrix(S_hat, "S_hat")
    L0, S0 = as_matrix(L0, "L0"), as_matrix(S0, "S0")
    shape = L0.shape
    for name, X in (("L_hat", L_hat), ("S_hat", S_hat), ("S0", S0)):
        if X.shape != shape:
            raise DimensionError(f"{name} has shape {X.shape}, expected {shape}")
    if I.dims != shape:
        raise DimensionError(f"index set dims {I.dims} do not match {shape}")
    size = shape[0] * shape[1]
    dl = L_hat - L0
    ds = S_hat - S0
    s_i = restrict(S_hat, I)
    n_i = len(I)
    return ErrorReport(
        normalized_frob_L=float((dl * dl).sum() / size),
        normalized_frob_S=float((ds * ds).sum() / size),
        noncorrupted_S_error=float((s_i * s_i).sum() / n_i) if n_i else 0.0,
    )


def write_matrix_csv(path, A):
    A = as_matrix(A)
    with open(path, "w") as fh:
        fh.write(f"{A.shape[0]},{A.shape[1]}\n")
        for row in A:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_matrix_csv(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    try:
        rows, cols = (int(v) for v in lines[0].split(","))
        data = [[float(v) for v in ln.split(",")] for ln in lines[1:]]
    except ValueError as exc:
        raise ValueError(f"{path}: malformed matrix file ({exc})") from None
    A = np.array(data, dtype=np.float64)
    if A.shape != (rows, cols):
        raise DimensionError(f"{path}: header says {rows}x{cols}, body is {A.shape}")
    return as_matrix(A)
