"""Sampling distributions over the non-corrupted index set.

A :class:`SamplingDistribution` is a dense probability table ``pmf`` over the
``m1 x m2`` grid together with its support (the non-corrupted set ``I``).
:func:`measure_constants` returns the tightest constants for which the four
sampling conditions used by the error bounds hold.
"""
import csv
import math
from dataclasses import dataclass

import numpy as np

from .core import IndexSet, dims_info

PMF_ATOL = 1e-10
LOAD_RENORM_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SamplingDistribution:
    support: IndexSet
    pmf: np.ndarray

    def __post_init__(self):
        pmf = np.array(self.pmf, dtype=np.float64)
        if pmf.shape != self.support.dims:
            raise ValueError(f"pmf shape {pmf.shape} != support dims {self.support.dims}")
        if np.any(pmf < 0) or not np.all(np.isfinite(pmf)):
            raise ValueError("probabilities must be finite and nonnegative")
        if np.any(pmf[~self.support.mask] > 0):
            raise ValueError("pmf puts mass outside its support")
        if abs(pmf.sum() - 1.0) > PMF_ATOL:
            raise ValueError(f"probabilities sum to {pmf.sum():.17g}, not 1")
        pmf.setflags(write=False)
        object.__setattr__(self, "pmf", pmf)

    @property
    def dims(self):
        return self.support.dims

    def column_marginals(self):
        return self.pmf.sum(axis=0)

    def row_marginals(self):
        return self.pmf.sum(axis=1)


@dataclass(frozen=True)
class AssumptionConstants:
    mu: float
    L_const: float
    gamma: float
    mu1: float

    def as_dict(self):
        return {"mu": self.mu, "L_const": self.L_const, "gamma": self.gamma, "mu1": self.mu1}


def uniform_on(I):
    """Uniform distribution on the index set `I`."""
    size = len(I)
    if size == 0:
        raise ValueError("cannot build a uniform distribution on an empty index set")
    return SamplingDistribution(I, np.where(I.mask, 1.0 / size, 0.0))


def tilt(I, beta):
    """Column-tilted distribution ``pi_jk ∝ 1 + beta * cos(2 pi k / m2)`` on `I`.

    Columns are indexed from 0.  ``0 <= beta < 1`` keeps every weight
    strictly positive.
    """
    if not 0.0 <= beta < 1.0:
        raise ValueError("tilt requires 0 <= beta < 1")
    if len(I) == 0:
        raise ValueError("cannot tilt an empty index set")
    m1, m2 = I.dims
    w = 1.0 + beta * np.cos(2.0 * np.pi * np.arange(m2) / m2)
    weights = np.where(I.mask, np.broadcast_to(w, (m1, m2)), 0.0)
    return SamplingDistribution(I, weights / weights.sum())


def measure_constants(pi):
    """Tightest sampling constants of `pi`.

    Returns ``mu = 1/(|I| min pi)``, ``L = m max(col/row marginals)``,
    ``gamma = sqrt(|I| m2 max_k sum_j pi_jk^2)`` and ``mu1 = |I| max pi``.
    A zero probability inside the support gives ``mu = inf``.
    """
    m1, m2 = pi.dims
    _, m, _ = dims_info(m1, m2)
    size = len(pi.support)
    on_support = pi.pmf[pi.support.mask]
    pmin = on_support.min()
    mu = math.inf if pmin <= 0.0 else 1.0 / (size * pmin)
    # correctly rounded sums keep uniform marginals exact (pairwise sums can drift by an ulp)
    P = pi.pmf
    col = max(math.fsum(P[:, k]) for k in range(m2))
    row = max(math.fsum(P[j]) for j in range(m1))
    L_const = m * max(col, row)
    gamma = math.sqrt(size * m2 * max(math.fsum(P[:, k] ** 2) for k in range(m2)))
    mu1 = size * on_support.max()
    return AssumptionConstants(mu=float(mu), L_const=float(L_const),
                               gamma=float(gamma), mu1=float(mu1))


def check_milder_marginal(pi, gamma):
    """True iff every column marginal is at most ``sqrt(2) gamma / m2``."""
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    m2 = pi.dims[1]
    return bool(pi.column_marginals().max() <= math.sqrt(2.0) * gamma / m2)


def sample_noncorrupted(pi, n, seed):
    """Draw `n` i.i.d. grid cells from `pi` (with replacement).

    `seed` may be an int, a sequence of ints or a ``numpy.random.Generator``.
    Returns integer arrays ``(rows, cols)``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    m1, m2 = pi.dims
    flat = rng.choice(m1 * m2, size=n, p=pi.pmf.ravel())
    return flat // m2, flat % m2


def write_distribution_csv(path, pi):
    rows, cols = np.nonzero(pi.support.mask)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "prob"])
        for j, k in zip(rows, cols):
            w.writerow([int(j), int(k), repr(float(pi.pmf[j, k]))])


def read_distribution_csv(path, dims=None):
    """Load a ``row,col,prob`` file.

    Listed cells form the support.  Totals within 1e-6 of one are
    renormalized; anything further off is rejected.
    """
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["row", "col", "prob"]:
            raise ValueError(f"{path}: expected header row,col,prob")
        entries = [(int(r["row"]), int(r["col"]), float(r["prob"])) for r in reader]
    if not entries:
        raise ValueError(f"{path}: no entries")
    if dims is None:
        dims = (max(e[0] for e in entries) + 1, max(e[1] for e in entries) + 1)
    mask = np.zeros(dims, dtype=bool)
    pmf = np.zeros(dims)
    for j, k, p in entries:
        mask[j, k] = True
        pmf[j, k] += p
    total = pmf.sum()
    if abs(total - 1.0) >= LOAD_RENORM_TOL:
        raise ValueError(f"{path}: probabilities sum to {total}, off by more than {LOAD_RENORM_TOL}")
    return SamplingDistribution(IndexSet(mask), pmf / total)
