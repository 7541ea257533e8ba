"""Hot loops: per-cell aggregation and the projected-subgradient reference solver.

Each kernel has a numba version and a numpy version with the same maths.
:mod:`robustmc._jit` picks one at import time (``ROBUSTMC_DISABLE_NUMBA=1``
forces numpy).
"""
import math

import numpy as np

from ._jit import HAVE_NUMBA, njit

REG_L1 = 0
REG_L21 = 1
REG_CODES = {"l1": REG_L1, "l21": REG_L21}

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 40
# singular values below this fraction of the largest count as zero in the nuclear subgradient
SV_RTOL = 1e-12


# ---------------------------------------------------------------- cell stats

def _cell_stats_numpy(rows, cols, values, m1, m2):
    flat = rows * m2 + cols
    cnt = np.bincount(flat, minlength=m1 * m2).astype(np.float64)
    sm = np.bincount(flat, weights=values, minlength=m1 * m2)
    return cnt.reshape(m1, m2), sm.reshape(m1, m2)


@njit(cache=True)
def _cell_stats_jit(rows, cols, values, m1, m2):
    cnt = np.zeros((m1, m2))
    sm = np.zeros((m1, m2))
    for i in range(values.shape[0]):
        cnt[rows[i], cols[i]] += 1.0
        sm[rows[i], cols[i]] += values[i]
    return cnt, sm


def cell_stats(rows, cols, values, m1, m2):
    """Hit counts ``n_jk``, value sums and ``sum(values**2)``."""
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    if HAVE_NUMBA:
        cnt, sm = _cell_stats_jit(rows, cols, values, m1, m2)
    else:
        cnt, sm = _cell_stats_numpy(rows, cols, values, m1, m2)
    return cnt, sm, float(np.dot(values, values))


# ------------------------------------------------------ warm-started Jacobi

@njit(cache=True)
def _jacobi_svd_inplace(B, V):
    """One-sided Jacobi: rotate columns of `B` (and `V`) until mutually orthogonal.

    On exit ``B_in @ V_in.T == B_out @ V_out.T`` and the column norms of
    `B` are the singular values.  Starting from the previous right singular
    basis makes consecutive calls cheap when the matrix changes slowly.
    """
    m, n = B.shape
    fro2 = 0.0
    for i in range(m):
        for j in range(n):
            fro2 += B[i, j] * B[i, j]
    # columns this small are rounding debris of a rank-deficient matrix
    negligible = 1e-30 * fro2
    for sweep in range(JACOBI_MAX_SWEEPS):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = 0.0
                beta = 0.0
                gam = 0.0
                for i in range(m):
                    bp = B[i, p]
                    bq = B[i, q]
                    alpha += bp * bp
                    beta += bq * bq
                    gam += bp * bq
                if gam == 0.0 or alpha <= negligible or beta <= negligible:
                    continue
                rel = abs(gam) / (math.sqrt(alpha) * math.sqrt(beta))
                if rel > off:
                    off = rel
                if rel < JACOBI_TOL:
                    continue
                zeta = (beta - alpha) / (2.0 * gam)
                if zeta >= 0.0:
                    t = 1.0 / (zeta + math.sqrt(1.0 + zeta * zeta))
                else:
                    t = -1.0 / (-zeta + math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    bp = B[i, p]
                    bq = B[i, q]
                    B[i, p] = c * bp - s * bq
                    B[i, q] = s * bp + c * bq
                for i in range(n):
                    vp = V[i, p]
                    vq = V[i, q]
                    V[i, p] = c * vp - s * vq
                    V[i, q] = s * vp + c * vq
        if off < JACOBI_TOL:
            break


# ------------------------------------------------ projected subgradient loop

@njit(cache=True)
def _objective_parts_jit(L, S, cnt, sm, sumsq, N, reg):
    m1, m2 = L.shape
    data = sumsq
    reg_val = 0.0
    for k in range(m2):
        col = 0.0
        for j in range(m1):
            v = L[j, k] + S[j, k]
            data += cnt[j, k] * v * v - 2.0 * sm[j, k] * v
            if reg == 0:
                reg_val += abs(S[j, k])
            else:
                col += S[j, k] * S[j, k]
        if reg == 1:
            reg_val += math.sqrt(col)
    return data / N, reg_val


@njit(cache=True)
def _oracle_jit(cnt, sm, sumsq, N, lam1, lam2, reg, a, c, iters, L, S):
    m1, m2 = L.shape
    V = np.eye(m2)
    B = np.empty((m1, m2))
    polar = np.empty((m1, m2))
    sv = np.empty(m2)
    gL = np.empty((m1, m2))
    gS = np.empty((m1, m2))
    L_best = L.copy()
    S_best = S.copy()
    f_best = np.inf
    L_sum = np.zeros((m1, m2))
    S_sum = np.zeros((m1, m2))
    f_sum = 0.0
    n_sum = 0
    trace = np.empty(iters + 1)
    for t in range(1, iters + 2):
        # B = L V  (warm start from the previous right basis)
        for j in range(m1):
            for k in range(m2):
                acc = 0.0
                for l in range(m2):
                    acc += L[j, l] * V[l, k]
                B[j, k] = acc
        _jacobi_svd_inplace(B, V)
        nuc = 0.0
        for j in range(m1):
            for k in range(m2):
                polar[j, k] = 0.0
        top = 0.0
        for l in range(m2):
            nrm = 0.0
            for i in range(m1):
                nrm += B[i, l] * B[i, l]
            sv[l] = math.sqrt(nrm)
            nuc += sv[l]
            top = max(top, sv[l])
        for l in range(m2):
            nrm = sv[l]
            if nrm > SV_RTOL * top:
                for j in range(m1):
                    u = B[j, l] / nrm
                    for k in range(m2):
                        polar[j, k] += u * V[k, l]
        data, reg_val = _objective_parts_jit(L, S, cnt, sm, sumsq, N, reg)
        f = data + lam1 * nuc + lam2 * reg_val
        trace[t - 1] = f
        if f < f_best:
            f_best = f
            L_best[:, :] = L
            S_best[:, :] = S
        if t == iters + 1:
            break
        L_sum += L
        S_sum += S
        f_sum += f
        n_sum += 1
        gnorm2 = 0.0
        for k in range(m2):
            col = 0.0
            if reg == 1:
                for j in range(m1):
                    col += S[j, k] * S[j, k]
                col = math.sqrt(col)
            for j in range(m1):
                g = 2.0 * (cnt[j, k] * (L[j, k] + S[j, k]) - sm[j, k]) / N
                gL[j, k] = g + lam1 * polar[j, k]
                if reg == 0:
                    sg = 0.0
                    if S[j, k] > 0.0:
                        sg = 1.0
                    elif S[j, k] < 0.0:
                        sg = -1.0
                else:
                    sg = S[j, k] / col if col > 0.0 else 0.0
                gS[j, k] = g + lam2 * sg
                gnorm2 += gL[j, k] * gL[j, k] + gS[j, k] * gS[j, k]
        if gnorm2 == 0.0:
            trace = trace[:t]
            break
        step = c / math.sqrt(t) / math.sqrt(gnorm2)
        for j in range(m1):
            for k in range(m2):
                x = L[j, k] - step * gL[j, k]
                L[j, k] = min(a, max(-a, x))
                y = S[j, k] - step * gS[j, k]
                S[j, k] = min(a, max(-a, y))
    n_sum = max(n_sum, 1)
    return L_best, S_best, f_best, L_sum / n_sum, S_sum / n_sum, f_sum / n_sum, trace


def _objective_parts_numpy(L, S, cnt, sm, sumsq, N, reg):
    v = L + S
    data = (sumsq + (cnt * v * v).sum() - 2.0 * (sm * v).sum()) / N
    if reg == REG_L1:
        reg_val = np.abs(S).sum()
    else:
        reg_val = np.sqrt((S * S).sum(axis=0)).sum()
    return data, reg_val


def _oracle_numpy(cnt, sm, sumsq, N, lam1, lam2, reg, a, c, iters, L, S):
    L_best, S_best, f_best = L.copy(), S.copy(), np.inf
    L_sum = np.zeros_like(L)
    S_sum = np.zeros_like(S)
    f_sum = 0.0
    n_sum = 0
    trace = []
    for t in range(1, iters + 2):
        U, sv, Vt = np.linalg.svd(L, full_matrices=False)
        data, reg_val = _objective_parts_numpy(L, S, cnt, sm, sumsq, N, reg)
        f = data + lam1 * sv.sum() + lam2 * reg_val
        trace.append(f)
        if f < f_best:
            f_best, L_best, S_best = f, L.copy(), S.copy()
        if t == iters + 1:
            break
        L_sum += L
        S_sum += S
        f_sum += f
        n_sum += 1
        g = 2.0 * (cnt * (L + S) - sm) / N
        keep = sv > SV_RTOL * sv[0] if sv.size else sv > 0
        gL = g + lam1 * (U[:, keep] @ Vt[keep])
        if reg == REG_L1:
            gS = g + lam2 * np.sign(S)
        else:
            col = np.sqrt((S * S).sum(axis=0))
            gS = g + lam2 * np.divide(S, col, out=np.zeros_like(S), where=col > 0)
        gnorm = math.sqrt((gL * gL).sum() + (gS * gS).sum())
        if gnorm == 0.0:
            break
        step = c / math.sqrt(t) / gnorm
        L = np.clip(L - step * gL, -a, a)
        S = np.clip(S - step * gS, -a, a)
    n_sum = max(n_sum, 1)
    return L_best, S_best, f_best, L_sum / n_sum, S_sum / n_sum, f_sum / n_sum, np.array(trace)


def oracle_subgradient(cnt, sm, sumsq, N, lam1, lam2, reg, a, c, iters, L0=None, S0=None):
    """Projected subgradient descent with normalized steps ``c / sqrt(t)``.

    Returns ``(L_best, S_best, f_best, L_avg, S_avg, f_avg, trace)`` where
    the averages run over the iterates at which a step was taken.
    """
    shape = cnt.shape
    L = np.zeros(shape) if L0 is None else np.array(L0, dtype=np.float64)
    S = np.zeros(shape) if S0 is None else np.array(S0, dtype=np.float64)
    fn = _oracle_jit if HAVE_NUMBA else _oracle_numpy
    return fn(np.ascontiguousarray(cnt), np.ascontiguousarray(sm), float(sumsq), float(N),
              float(lam1), float(lam2), int(reg), float(a), float(c), int(iters), L, S)
