"""Proximal operators for the nuclear, l1 and l2,1 penalties and the sup-norm box.

``prox_l1_box`` is exact because both terms separate over entries.  The
nuclear and l2,1 penalties do not commute with clipping, so when the box is
active their box-constrained proxes run a fixed number of rounds of the
Dykstra-like proximal splitting (Bauschke & Combettes, 2008) and report the
result as inexact.
"""
from dataclasses import dataclass

import numpy as np

from .core import as_matrix


class SVDError(ArithmeticError):
    """LAPACK failed to converge on a singular value decomposition."""


@dataclass(frozen=True)
class ProxConfig:
    a_bound: float
    dykstra_iters: int = 20
    svd_tol: float = 1e-12

    def __post_init__(self):
        if self.a_bound <= 0:
            raise ValueError("a_bound must be positive")
        if self.dykstra_iters < 1:
            raise ValueError("dykstra_iters must be >= 1")


def _check_tau(tau):
    if tau < 0:
        raise ValueError("tau must be nonnegative")


def soft_threshold(A, tau):
    """Entrywise ``sign(x) * max(|x| - tau, 0)``: prox of ``tau * ||.||_1``."""
    _check_tau(tau)
    A = as_matrix(A)
    return np.sign(A) * np.maximum(np.abs(A) - tau, 0.0)


def group_soft_threshold(A, tau):
    """Column shrinkage ``c * max(1 - tau/||c||, 0)``: prox of ``tau * ||.||_{2,1}``."""
    _check_tau(tau)
    A = as_matrix(A)
    norms = np.sqrt((A * A).sum(axis=0))
    scale = np.zeros_like(norms)
    nz = norms > tau
    scale[nz] = 1.0 - tau / norms[nz]
    return A * scale


def _svd(A):
    try:
        return np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise SVDError(str(exc)) from exc


def svt(A, tau):
    """Singular value thresholding: prox of ``tau * ||.||_*``."""
    _check_tau(tau)
    A = as_matrix(A)
    U, sv, Vt = _svd(A)
    sv = np.maximum(sv - tau, 0.0)
    keep = sv > 0
    return (U[:, keep] * sv[keep]) @ Vt[keep]


def box_clip(A, a_bound):
    """Euclidean projection onto ``{X : ||X||_inf <= a_bound}``."""
    if a_bound <= 0:
        raise ValueError("a_bound must be positive")
    return np.clip(as_matrix(A), -a_bound, a_bound)


def prox_l1_box(A, tau, a_bound):
    """Exact prox of ``tau * ||.||_1`` plus the box indicator."""
    return box_clip(soft_threshold(A, tau), a_bound)


def _dykstra(A, prox_f, a_bound, iters):
    # x <- prox_f, then box; the corrections p, q make the fixed point prox_{f + box}(A)
    x = A
    p = np.zeros_like(A)
    q = np.zeros_like(A)
    for _ in range(iters):
        y = prox_f(x + p)
        p = x + p - y
        x = np.clip(y + q, -a_bound, a_bound)
        q = y + q - x
    return x


def _prox_with_box(A, tau, a_bound, cfg, prox_f, return_info):
    A = as_matrix(A)
    _check_tau(tau)
    if cfg is None:
        cfg = ProxConfig(a_bound=a_bound)
    P = prox_f(A, tau)
    # overshoot within svd_tol is rounding noise; clipping it keeps the prox exact to that level
    if np.abs(P).max() <= a_bound * (1.0 + cfg.svd_tol):
        P = np.clip(P, -a_bound, a_bound)
        return (P, True) if return_info else P
    X = _dykstra(A, lambda Z: prox_f(Z, tau), a_bound, cfg.dykstra_iters)
    return (X, False) if return_info else X


def prox_nuclear_box(A, tau, a_bound, cfg=None, return_info=False):
    """Prox of ``tau * ||.||_*`` plus the box indicator.

    Returns plain SVT when it already lies in the box (exact).  Otherwise
    runs ``cfg.dykstra_iters`` Dykstra rounds between SVT and clipping; the
    output is feasible but only approximately the prox.  With
    ``return_info=True`` the result is ``(X, exact)``.
    """
    return _prox_with_box(A, tau, a_bound, cfg, svt, return_info)


def prox_l21_box(A, tau, a_bound, cfg=None, return_info=False):
    """Prox of ``tau * ||.||_{2,1}`` plus the box indicator (see :func:`prox_nuclear_box`)."""
    return _prox_with_box(A, tau, a_bound, cfg, group_soft_threshold, return_info)
