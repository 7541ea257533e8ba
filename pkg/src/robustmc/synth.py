"""Synthetic ground truth, corrupted observations and hard instances.

Observation sets keep the non-corrupted part (drawn i.i.d. from a sampling
distribution on ``I``) apart from the corrupted part (placed inside the
corruption support by an adversary).  The split and the noise values exist
for evaluation only; estimators consume :meth:`ObservationSet.samples`, a
flag-free view.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .core import IndexSet, as_matrix, dims_info, numerical_rank
from .sampling import sample_noncorrupted

CORRUPTION_KINDS = ("columnwise", "entrywise")
ADVERSARIES = ("uniform_support", "single_column", "worst_sign")

# corrupted magnitudes are drawn from [a/10, a]
MIN_CORRUPTION_FRACTION = 0.1

BOX_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    L0: np.ndarray
    S0: np.ndarray
    a_bound: float
    rank_r: int
    sparsity_s: int
    corruption_kind: str
    corrupted_support: IndexSet

    def __post_init__(self):
        L0 = as_matrix(self.L0, "L0")
        S0 = as_matrix(self.S0, "S0")
        if S0.shape != L0.shape or self.corrupted_support.dims != L0.shape:
            raise ValueError("L0, S0 and corrupted_support must share dimensions")
        if self.corruption_kind not in CORRUPTION_KINDS:
            raise ValueError(f"corruption_kind must be one of {CORRUPTION_KINDS}")
        if self.a_bound <= 0:
            raise ValueError("a_bound must be positive")
        m1, m2 = L0.shape
        if np.abs(L0).max() > self.a_bound + BOX_ATOL or np.abs(S0).max() > self.a_bound + BOX_ATOL:
            raise ValueError("L0 and S0 must satisfy the sup-norm bound a_bound")
        if numerical_rank(L0) > self.rank_r:
            raise ValueError("rank(L0) exceeds rank_r")
        if np.any(S0[~self.corrupted_support.mask] != 0):
            raise ValueError("S0 must vanish outside corrupted_support")
        if self.corruption_kind == "columnwise":
            if 2 * self.sparsity_s > m2:
                raise ValueError("columnwise sparsity requires s <= m2/2")
            if np.count_nonzero(np.any(S0 != 0, axis=0)) > self.sparsity_s:
                raise ValueError("S0 has more than s nonzero columns")
        else:
            if 2 * self.sparsity_s > m1 * m2:
                raise ValueError("entrywise sparsity requires s <= m1*m2/2")
            if np.count_nonzero(S0) > self.sparsity_s:
                raise ValueError("S0 has more than s nonzero entries")
        object.__setattr__(self, "L0", L0)
        object.__setattr__(self, "S0", S0)

    @property
    def dims(self):
        return self.L0.shape

    @property
    def noncorrupted_set(self):
        return self.corrupted_support.complement()


@dataclass(frozen=True, eq=False)
class Samples:
    """Flag-free observations ``(rows[i], cols[i]) -> values[i]``: all an estimator sees."""

    dims: tuple
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    @property
    def N(self):
        return int(self.values.shape[0])

    def cell_stats(self):
        """Per-cell hit counts, value sums and the total of squared values."""
        from ._kernels import cell_stats
        return cell_stats(self.rows, self.cols, self.values, self.dims[0], self.dims[1])

    def transpose(self):
        return _canonical(Samples((self.dims[1], self.dims[0]), self.cols, self.rows, self.values))


def _canonical(samples):
    order = np.lexsort((samples.values, samples.cols, samples.rows))
    return Samples(tuple(int(v) for v in samples.dims),
                   np.ascontiguousarray(samples.rows[order], dtype=np.int64),
                   np.ascontiguousarray(samples.cols[order], dtype=np.int64),
                   np.ascontiguousarray(samples.values[order], dtype=np.float64))


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Observations split into non-corrupted and corrupted parts.

    ``noise`` (one value per observation, non-corrupted first) and
    ``S0_effective`` are generator-side ground truth and may be ``None`` for
    sets read back from disk.
    """

    dims: tuple
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    c_rows: np.ndarray
    c_cols: np.ndarray
    c_values: np.ndarray
    noise: np.ndarray = field(default=None)
    S0_effective: np.ndarray = field(default=None)

    @property
    def n(self):
        return int(self.values.shape[0])

    @property
    def n_tilde(self):
        return int(self.c_values.shape[0])

    @property
    def N(self):
        return self.n + self.n_tilde

    @property
    def aleph(self):
        return self.N / self.n

    def samples(self):
        """All observations merged and sorted by (row, col, value).

        The canonical order hides which observations were corrupted.
        """
        return _canonical(Samples(
            self.dims,
            np.concatenate([self.rows, self.c_rows]),
            np.concatenate([self.cols, self.c_cols]),
            np.concatenate([self.values, self.c_values]),
        ))

    def corrupted_cells(self):
        """Distinct cells hit by corrupted observations."""
        mask = np.zeros(self.dims, dtype=bool)
        mask[self.c_rows, self.c_cols] = True
        return IndexSet(mask)


def gen_low_rank(m1, m2, r, a_bound, seed):
    """Rank-`r` Gaussian product ``U V^T`` rescaled to sup-norm exactly `a_bound`."""
    if not 1 <= r <= min(m1, m2):
        raise ValueError(f"rank {r} outside [1, {min(m1, m2)}]")
    if a_bound <= 0:
        raise ValueError("a_bound must be positive")
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((m1, r))
    V = rng.standard_normal((m2, r))
    L = U @ V.T
    return L * (a_bound / np.abs(L).max())


def _corruption_values(rng, size, a_bound):
    mag = rng.uniform(MIN_CORRUPTION_FRACTION * a_bound, a_bound, size=size)
    sign = np.where(rng.random(size) < 0.5, -1.0, 1.0)
    return mag * sign


def gen_corruption(m1, m2, s, a_bound, kind, seed):
    """Sparse corruption matrix and its support.

    Columnwise: `s` random columns, fully populated.  Entrywise: `s` random
    cells.  Nonzero values are uniform on ``[-a, -a/10] U [a/10, a]``.
    """
    rng = np.random.default_rng(seed)
    S0 = np.zeros((m1, m2))
    if kind == "columnwise":
        if not 0 <= s <= m2 / 2:
            raise ValueError("columnwise corruption requires 0 <= s <= m2/2")
        cols = np.sort(rng.choice(m2, size=s, replace=False))
        support = IndexSet.columns((m1, m2), cols)
    elif kind == "entrywise":
        if not 0 <= s <= m1 * m2 / 2:
            raise ValueError("entrywise corruption requires 0 <= s <= m1*m2/2")
        flat = rng.choice(m1 * m2, size=s, replace=False)
        mask = np.zeros(m1 * m2, dtype=bool)
        mask[flat] = True
        support = IndexSet(mask.reshape(m1, m2))
    else:
        raise ValueError(f"kind must be one of {CORRUPTION_KINDS}")
    S0[support.mask] = _corruption_values(rng, len(support), a_bound)
    return S0, support


def gen_instance(m1, m2, r, s, a_bound, kind, seed):
    """Low-rank plus sparse instance with independent streams for each part."""
    ss = np.random.SeedSequence(seed)
    s_low, s_sparse = ss.spawn(2)
    L0 = gen_low_rank(m1, m2, r, a_bound, s_low)
    S0, support = gen_corruption(m1, m2, s, a_bound, kind, s_sparse)
    return ProblemInstance(L0, S0, float(a_bound), r, s, kind, support)


def gen_observations(inst, pi, n, n_tilde, noise_sigma, adversary, seed, signed_values=False):
    """Draw non-corrupted and corrupted noisy observations of ``L0 + S0``.

    Parameters
    ----------
    inst : ProblemInstance
    pi : SamplingDistribution
        Must put no mass on ``inst.corrupted_support``.
    n, n_tilde : int
        Numbers of non-corrupted and corrupted observations.
    noise_sigma : float
        Standard deviation of the Gaussian noise.
    adversary : {'uniform_support', 'single_column', 'worst_sign'}
        ``uniform_support`` spreads corrupted draws uniformly over the
        support; ``single_column`` puts all of them in one support column;
        ``worst_sign`` spreads them uniformly and replaces the corruption
        values by ``a * sign(L0)``.
    seed : int or sequence of int
    signed_values : bool
        Use the ``a * sign(L0)`` values with any adversary.

    Returns
    -------
    ObservationSet
        ``S0_effective`` is the corruption actually applied, zeroed outside
        the cells hit by corrupted draws.
    """
    if adversary not in ADVERSARIES:
        raise ValueError(f"adversary must be one of {ADVERSARIES}")
    if n < 1 or n_tilde < 0:
        raise ValueError("need n >= 1 and n_tilde >= 0")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    support = inst.corrupted_support
    if pi.dims != inst.dims:
        raise ValueError("sampling distribution dims differ from the instance")
    if np.any(pi.pmf[support.mask] > 0):
        raise ValueError("sampling distribution puts mass on the corruption support")
    if n_tilde > 0 and len(support) == 0:
        raise ValueError("corrupted observations requested but the corruption support is empty")

    rng = np.random.default_rng(seed)
    L0 = inst.L0
    rows, cols = sample_noncorrupted(pi, n, rng)
    xi = noise_sigma * rng.standard_normal(n)
    values = L0[rows, cols] + xi

    S_used = inst.S0
    if adversary == "worst_sign" or signed_values:
        S_used = np.where(support.mask, inst.a_bound * np.where(L0 >= 0, 1.0, -1.0), 0.0)
    cells = np.argwhere(support.mask)
    if n_tilde > 0:
        if adversary == "single_column":
            target = rng.choice(np.unique(cells[:, 1]))
            cells = cells[cells[:, 1] == target]
        pick = rng.integers(0, len(cells), size=n_tilde)
        c_rows, c_cols = cells[pick, 0], cells[pick, 1]
    else:
        c_rows = c_cols = np.zeros(0, dtype=np.int64)
    xi_c = noise_sigma * rng.standard_normal(n_tilde)
    c_values = L0[c_rows, c_cols] + S_used[c_rows, c_cols] + xi_c

    hit = np.zeros(inst.dims, dtype=bool)
    hit[c_rows, c_cols] = True
    return ObservationSet(
        dims=inst.dims,
        rows=rows.astype(np.int64), cols=cols.astype(np.int64), values=values,
        c_rows=c_rows.astype(np.int64), c_cols=c_cols.astype(np.int64), c_values=c_values,
        noise=np.concatenate([xi, xi_c]),
        S0_effective=np.where(hit, S_used, 0.0),
    )


def effective_instance(inst, obs):
    """`inst` with S0 replaced by the corruption actually observed."""
    return ProblemInstance(inst.L0, obs.S0_effective, inst.a_bound, inst.rank_r,
                           inst.sparsity_s, inst.corruption_kind, inst.corrupted_support)


def gen_lower_bound_instance(m1, m2, r, s, n, sigma, a_bound, gamma, kind, seed):
    """Random member of the block-structured test family behind the minimax lower bounds.

    The low-rank part replicates a random binary ``m1 x r`` pattern with
    level ``gamma (sigma ∧ a) sqrt(r M / n)`` over the left half of the
    columns (``r x m2`` pattern over row blocks when ``m1 < m2``).  The
    corruption has level ``gamma (sigma ∧ a)`` on the last `s` columns
    (columnwise) or on at most `s` cells of the right half (entrywise).
    """
    if m1 < 2 or m2 < 2:
        raise ValueError("need m1, m2 >= 2")
    if not 1 <= r <= min(m1, m2):
        raise ValueError(f"rank {r} outside [1, {min(m1, m2)}]")
    if not 0 < gamma <= 1:
        raise ValueError("need 0 < gamma <= 1")
    if sigma <= 0 or a_bound <= 0:
        raise ValueError("sigma and a_bound must be positive")
    _, _, M = dims_info(m1, m2)
    if r * M > n:
        raise ValueError("the family requires r*M <= n")
    if kind == "columnwise":
        if not 1 <= s <= m2 / 2:
            raise ValueError("columnwise family requires 1 <= s <= m2/2")
    elif kind == "entrywise":
        if not 1 <= s <= m1 * m2 / 2:
            raise ValueError("entrywise family requires 1 <= s <= m1*m2/2")
    else:
        raise ValueError(f"kind must be one of {CORRUPTION_KINDS}")

    rng = np.random.default_rng(seed)
    level = gamma * min(sigma, a_bound)
    l_level = level * np.sqrt(r * M / n)
    L0 = np.zeros((m1, m2))
    if m1 >= m2:
        block = l_level * rng.integers(0, 2, size=(m1, r))
        reps = m2 // (2 * r)
        if reps:
            L0[:, :r * reps] = np.tile(block, (1, reps))
    else:
        half = m2 // 2
        block = l_level * rng.integers(0, 2, size=(r, half))
        reps = m1 // r
        L0[:r * reps, :half] = np.tile(block, (reps, 1))

    S0 = np.zeros((m1, m2))
    if kind == "columnwise":
        support = IndexSet.columns((m1, m2), range(m2 - s, m2))
        S0[:, m2 - s:] = level * rng.integers(0, 2, size=(m1, s))
    else:
        first = m2 // 2
        region = np.zeros((m1, m2), dtype=bool)
        region[:, first:] = True
        pattern = region & (rng.random((m1, m2)) < 0.5)
        on = np.flatnonzero(pattern)
        if on.size > s:
            keep = rng.choice(on, size=s, replace=False)
            pattern = np.zeros(m1 * m2, dtype=bool)
            pattern[keep] = True
            pattern = pattern.reshape(m1, m2)
        S0[pattern] = level
        support = IndexSet(pattern)
    return ProblemInstance(L0, S0, float(a_bound), r, s, kind, support)


OBS_HEADER = ["row", "col", "value", "flag"]


def write_observations_csv(path, obs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OBS_HEADER)
        for j, k, y in zip(obs.rows, obs.cols, obs.values):
            w.writerow([int(j), int(k), repr(float(y)), 0])
        for j, k, y in zip(obs.c_rows, obs.c_cols, obs.c_values):
            w.writerow([int(j), int(k), repr(float(y)), 1])


def _read_obs_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != OBS_HEADER:
            raise ValueError(f"{path}: expected header {','.join(OBS_HEADER)}")
        return [row for row in reader if row]


def read_samples(path, dims):
    """Solver-side reader: row, col and value only; the flag column is never parsed."""
    body = _read_obs_rows(path)
    if not body:
        raise ValueError(f"{path}: no observations")
    rows = np.array([int(r[0]) for r in body], dtype=np.int64)
    cols = np.array([int(r[1]) for r in body], dtype=np.int64)
    values = np.array([float(r[2]) for r in body], dtype=np.float64)
    m1, m2 = dims
    if rows.min() < 0 or cols.min() < 0 or rows.max() >= m1 or cols.max() >= m2:
        raise ValueError(f"{path}: observation index outside {m1}x{m2}")
    return _canonical(Samples((m1, m2), rows, cols, values))


def read_observations(path, dims):
    """Evaluation-side reader that keeps the corruption flags."""
    body = _read_obs_rows(path)
    flag = np.array([int(r[3]) for r in body], dtype=np.int64)
    rows = np.array([int(r[0]) for r in body], dtype=np.int64)
    cols = np.array([int(r[1]) for r in body], dtype=np.int64)
    values = np.array([float(r[2]) for r in body], dtype=np.float64)
    clean = flag == 0
    return ObservationSet(tuple(dims), rows[clean], cols[clean], values[clean],
                          rows[~clean], cols[~clean], values[~clean])
