"""Regularization levels, rate predictions and stochastic-term diagnostics.

All logarithms are natural.  The absolute constant ``C`` in the
regularization formulas is a free parameter (default 1).
"""
import csv
import math
from collections import namedtuple
from dataclasses import asdict, dataclass

import numpy as np

from .core import dims_info
from .sampling import AssumptionConstants

PsiTerms = namedtuple("PsiTerms", ["psi1", "psi2", "psi3", "psi4"])

SCALING_NORMS = ("Sigma_op", "Sigma_l2inf", "SigmaR_l2inf", "W_l2inf", "Sigma_sup", "W_sup")


@dataclass(frozen=True)
class RatePrediction:
    lambda1: float
    lambda2: float
    n_star: float
    psi1: float
    psi2: float
    psi3: float
    psi4: float
    psi_GS: float
    psi_S: float
    constants: dict

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class StochasticTerms:
    Sigma: np.ndarray
    SigmaR: np.ndarray
    W: np.ndarray


def lambdas_columnwise(sigma, a, L_const, gamma, N, m1, m2, C=1.0):
    """``lambda1 = C (sigma v a) sqrt(L log d / (N m))``, ``lambda2 = C gamma (sigma v a) sqrt(log d / (N m2))``."""
    d, m, _ = dims_info(m1, m2)
    scale = C * max(sigma, a)
    lam1 = scale * math.sqrt(L_const * math.log(d) / (N * m))
    lam2 = scale * gamma * math.sqrt(math.log(d) / (N * m2))
    return lam1, lam2


def lambdas_entrywise(sigma, a, mu1, N, m1, m2, C=1.0):
    """``lambda1 = C (sigma v a) sqrt(mu1 log d / (N m))``, ``lambda2 = C (sigma v a) log d / N``."""
    d, m, _ = dims_info(m1, m2)
    scale = C * max(sigma, a)
    return scale * math.sqrt(mu1 * math.log(d) / (N * m)), scale * math.log(d) / N


def n_star(gamma, L_const, m1, m2):
    """Sample size above which the columnwise regularization levels apply."""
    d, m, _ = dims_info(m1, m2)
    return 2.0 * math.log(d) * max(m2 / gamma, m * math.log(m) ** 2 / L_const)


def entrywise_window(mu1, L_const, m1, m2):
    """Range ``(low, high)`` of n for which the entrywise levels apply."""
    d, m, _ = dims_info(m1, m2)
    low = 2.0 * m * math.log(d) * math.log(m) ** 2 / L_const
    high = m1 * m2 * math.log(d) / mu1
    return low, high


def psi_terms(*, mu, m1, m2, r, n, N, n_tilde, I_tilde_size, R_id_omega_tilde,
              lambda1, lambda2, a, sigma, E_SigmaR_op, E_SigmaR_dual):
    """The four error terms of the general upper bound, transcribed term by term.

    ``E_SigmaR_op`` and ``E_SigmaR_dual`` are (estimates of) the expected
    operator norm and dual-regularizer norm of the Rademacher term;
    ``R_id_omega_tilde`` is the regularizer evaluated at the 0/1 indicator of
    the corrupted observations.
    """
    d = m1 + m2
    aleph = N / n
    log_d = math.log(d)
    corr = mu * n_tilde * (a * a + sigma * sigma * log_d) / N
    psi1 = (mu * mu * m1 * m2 * r * (aleph ** 2 * lambda1 ** 2 + a * a * E_SigmaR_op ** 2)
            + a * a * mu * math.sqrt(log_d / n))
    psi2 = mu * a * R_id_omega_tilde * (
        lambda2 * a / lambda1 * E_SigmaR_op + aleph * lambda2 + a * E_SigmaR_dual)
    psi3 = (corr * (a * E_SigmaR_op / lambda1 + a * E_SigmaR_dual / lambda2 + aleph)
            + a * a * I_tilde_size / (m1 * m2))
    psi4 = (mu * a * a * math.sqrt(log_d / n)
            + mu * a * R_id_omega_tilde * (aleph * lambda2 + a * E_SigmaR_dual)
            + (a * E_SigmaR_dual / lambda2 + aleph) * corr)
    return PsiTerms(psi1, psi2, psi3, psi4)


def psi_rates(sigma, a, r, n, n_tilde, s, m1, m2, kind, M=None):
    """Minimax rate: ``(sigma ∧ a)^2 ((M r + n_tilde)/n + s/m2)`` (columnwise) or ``s/(m1 m2)`` (entrywise)."""
    if M is None:
        M = max(m1, m2)
    base = min(sigma, a) ** 2
    head = (M * r + n_tilde) / n
    if kind == "columnwise":
        return base * (head + s / m2)
    if kind == "entrywise":
        return base * (head + s / (m1 * m2))
    raise ValueError("kind must be 'columnwise' or 'entrywise'")


def dual_norm(A, regularizer):
    if regularizer == "l1":
        return float(np.abs(A).max())
    return float(np.sqrt((A * A).sum(axis=0)).max())


def stochastic_terms(obs, xi=None, seed=0):
    """Noise-weighted, Rademacher-weighted and plain averages of the non-corrupted design.

    ``xi`` defaults to the generator noise stored in `obs`; the Rademacher
    signs come from `seed`.
    """
    n, N = obs.n, obs.N
    if xi is None:
        if obs.noise is None:
            raise ValueError("noise values are required to form Sigma")
        xi = obs.noise[:n]
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape != (n,):
        raise ValueError(f"expected {n} noise values, got {xi.shape}")
    m1, m2 = obs.dims
    rng = np.random.default_rng(seed)
    eps = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    flat = obs.rows * m2 + obs.cols
    size = m1 * m2
    Sigma = np.bincount(flat, weights=xi, minlength=size).reshape(m1, m2) / N
    SigmaR = np.bincount(flat, weights=eps, minlength=size).reshape(m1, m2) / n
    W = np.bincount(flat, minlength=size).reshape(m1, m2).astype(np.float64) / N
    return StochasticTerms(Sigma, SigmaR, W)


def expected_sigma_R_norms(obs, regularizer, draws=100, seed=0):
    """Monte-Carlo ``(E ||Sigma_R||, E R*(Sigma_R))`` with the design held fixed."""
    m1, m2 = obs.dims
    n = obs.n
    flat = obs.rows * m2 + obs.cols
    rng = np.random.default_rng(seed)
    op = dual = 0.0
    for _ in range(draws):
        eps = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        SR = np.bincount(flat, weights=eps, minlength=m1 * m2).reshape(m1, m2) / n
        op += np.linalg.svd(SR, compute_uv=False)[0]
        dual += dual_norm(SR, regularizer)
    return op / draws, dual / draws


def bound_sigma_R_norms(constants, n, N, m1, m2, regularizer):
    """Order-of-magnitude surrogates for ``E ||Sigma_R||`` and ``E R*(Sigma_R)`` (unit constants)."""
    d, m, _ = dims_info(m1, m2)
    log_d = math.log(d)
    op = math.sqrt(constants.L_const * log_d / (n * m)) + log_d ** 2 / N
    if regularizer == "l21":
        dual = math.sqrt(constants.gamma * log_d / (n * m2)) + log_d / n
    else:
        dual = math.sqrt(constants.mu1 * log_d / (n * m1 * m2)) + log_d / n
    return op, dual


def predict(*, m1, m2, r, s, n, n_tilde, sigma, a, kind, constants=None, C=1.0,
            E_SigmaR_op=None, E_SigmaR_dual=None, R_id_omega_tilde=None):
    """Evaluate tuning levels, sample-size threshold and all rate terms for one configuration.

    Missing expectations fall back to :func:`bound_sigma_R_norms`; a missing
    ``R_id_omega_tilde`` uses ``sqrt(s n_tilde)`` (columnwise) or
    ``n_tilde`` (entrywise).
    """
    if constants is None:
        constants = AssumptionConstants(1.0, 1.0, 1.0, 1.0)
    N = n + n_tilde
    regularizer = "l21" if kind == "columnwise" else "l1"
    if kind == "columnwise":
        lam1, lam2 = lambdas_columnwise(sigma, a, constants.L_const, constants.gamma, N, m1, m2, C)
        I_tilde = m1 * s
        R_id = math.sqrt(s * n_tilde) if R_id_omega_tilde is None else R_id_omega_tilde
    elif kind == "entrywise":
        lam1, lam2 = lambdas_entrywise(sigma, a, constants.mu1, N, m1, m2, C)
        I_tilde = s
        R_id = float(n_tilde) if R_id_omega_tilde is None else R_id_omega_tilde
    else:
        raise ValueError("kind must be 'columnwise' or 'entrywise'")
    if E_SigmaR_op is None or E_SigmaR_dual is None:
        op, dual = bound_sigma_R_norms(constants, n, N, m1, m2, regularizer)
        E_SigmaR_op = op if E_SigmaR_op is None else E_SigmaR_op
        E_SigmaR_dual = dual if E_SigmaR_dual is None else E_SigmaR_dual
    psi = psi_terms(mu=constants.mu, m1=m1, m2=m2, r=r, n=n, N=N, n_tilde=n_tilde,
                    I_tilde_size=I_tilde, R_id_omega_tilde=R_id, lambda1=lam1, lambda2=lam2,
                    a=a, sigma=sigma, E_SigmaR_op=E_SigmaR_op, E_SigmaR_dual=E_SigmaR_dual)
    consts = {"C": C, "sigma": sigma, "a": a}
    consts.update(constants.as_dict())
    return RatePrediction(
        lambda1=lam1, lambda2=lam2,
        n_star=n_star(constants.gamma, constants.L_const, m1, m2),
        psi1=psi.psi1, psi2=psi.psi2, psi3=psi.psi3, psi4=psi.psi4,
        psi_GS=psi_rates(sigma, a, r, n, n_tilde, s, m1, m2, "columnwise"),
        psi_S=psi_rates(sigma, a, r, n, n_tilde, s, m1, m2, "entrywise"),
        constants=consts,
    )


def loglog_slope(x, y):
    """Least-squares slope and its standard error for ``log y`` against ``log x``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if np.any(y <= 0) or np.any(x <= 0):
        return math.nan, math.nan
    lx, ly = np.log(x), np.log(y)
    xc = lx - lx.mean()
    sxx = float(xc @ xc)
    slope = float(xc @ (ly - ly.mean()) / sxx)
    k = len(x)
    if k <= 2:
        return slope, math.nan
    resid = ly - ly.mean() - slope * xc
    return slope, math.sqrt(float(resid @ resid) / (k - 2) / sxx)


@dataclass
class ScalingTable:
    rows: list
    slopes: dict

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["N", "norm_name", "mean", "stderr", "slope_so_far"])
            for row in self.rows:
                w.writerow([row["N"], row["norm_name"], repr(row["mean"]),
                            repr(row["stderr"]), repr(row["slope_so_far"])])


def _scaling_norms(pi_flat, m1, m2, N, sigma, rng):
    flat = rng.choice(m1 * m2, size=N, p=pi_flat)
    z = rng.standard_normal(N)
    eps = np.where(rng.random(N) < 0.5, -1.0, 1.0)
    size = m1 * m2
    Sigma = np.bincount(flat, weights=sigma * z, minlength=size).reshape(m1, m2) / N
    SigmaR = np.bincount(flat, weights=eps, minlength=size).reshape(m1, m2) / N
    W = np.bincount(flat, minlength=size).reshape(m1, m2).astype(np.float64) / N
    col = lambda A: float(np.sqrt((A * A).sum(axis=0)).max())
    return {
        "Sigma_op": float(np.linalg.svd(Sigma, compute_uv=False)[0]),
        "Sigma_l2inf": col(Sigma),
        "SigmaR_l2inf": col(SigmaR),
        "W_l2inf": col(W),
        "Sigma_sup": float(np.abs(Sigma).max()),
        "W_sup": float(np.abs(W).max()),
    }


def diagnose_scaling(pi, sigma, N_grid, replications, seed):
    """Monte-Carlo means of stochastic-term norms over a grid of sample sizes.

    Every observation is non-corrupted (``n = N``).  Replication ``k`` at
    grid point ``i`` uses the stream ``default_rng([seed, i, k])``, so two
    calls differing only in `sigma` share designs and noise shapes.

    Returns
    -------
    ScalingTable
        One row per ``(N, norm)`` with mean, standard error and the log-log
        slope over the grid points up to that N; ``slopes`` holds the slope
        over the whole grid.
    """
    N_grid = [int(N) for N in N_grid]
    if any(b <= a for a, b in zip(N_grid, N_grid[1:])):
        raise ValueError("N_grid must be strictly increasing")
    if replications < 20:
        raise ValueError("replications must be >= 20")
    m1, m2 = pi.dims
    pi_flat = pi.pmf.ravel()
    means = {name: [] for name in SCALING_NORMS}
    rows = []
    for i, N in enumerate(N_grid):
        samples = {name: [] for name in SCALING_NORMS}
        for k in range(replications):
            rng = np.random.default_rng([seed, i, k])
            for name, value in _scaling_norms(pi_flat, m1, m2, N, sigma, rng).items():
                samples[name].append(value)
        for name in SCALING_NORMS:
            vals = np.array(samples[name])
            mean = float(vals.mean())
            means[name].append(mean)
            slope = loglog_slope(N_grid[:i + 1], means[name])[0] if i else math.nan
            rows.append({"N": N, "norm_name": name, "mean": mean,
                         "stderr": float(vals.std(ddof=1) / math.sqrt(replications)),
                         "slope_so_far": slope})
    slopes = {name: loglog_slope(N_grid, means[name])[0] for name in SCALING_NORMS}
    return ScalingTable(rows, slopes)
