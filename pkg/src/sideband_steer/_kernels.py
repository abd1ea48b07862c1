"""Hot numeric kernels: numba fast path with a pure-numpy fallback.

The backend is picked once at import time.  Setting the environment
variable ``SIDEBAND_STEER_NO_NUMBA=1`` forces the numpy implementations
even when numba is installed.  Both implementations stay importable so
``benchmarks/benchmark_kernels.py`` can time them side by side.

All kernels operate on 0-based index arrays.  Pair rotations exploit the
disjoint two-level structure of the coupling operators: a segment flow is
a bundle of independent 2x2 rotations, never a dense matrix exponential.
"""

from __future__ import annotations

import math
import os

import numpy as np

_ENV_FLAG = "SIDEBAND_STEER_NO_NUMBA"


def _numba_disabled() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip() not in ("", "0")


try:
    if _numba_disabled():
        raise ImportError("numba disabled via " + _ENV_FLAG)
    from numba import njit

    HAVE_NUMBA = True
except ImportError:
    njit = None
    HAVE_NUMBA = False


def backend_name() -> str:
    return "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# pair rotations
#
# kind 0 ("E"): exp(b*E) on a pair (j,k) acts as
#   a_j <- cos(b) a_j + i sin(b) a_k,   a_k <- i sin(b) a_j + cos(b) a_k
# kind 1 ("F"): exp(b*F) acts as
#   a_j <- cos(b) a_j + sin(b) a_k,     a_k <- -sin(b) a_j + cos(b) a_k
# ---------------------------------------------------------------------------


def rotate_pairs_numpy(state, pj, pk, betas, kinds):
    """Apply disjoint 2x2 rotations to ``state`` in place."""
    if len(pj) == 0:
        return state
    a = state[pj]
    b = state[pk]
    c = np.cos(betas)
    s = np.sin(betas)
    se = np.where(kinds == 0, 1j * s, s.astype(np.complex128))
    state[pj] = c * a + se * b
    state[pk] = np.where(kinds == 0, se, -se) * a + c * b
    return state


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def rotate_pairs_numba(state, pj, pk, betas, kinds):  # pragma: no cover
        for i in range(pj.shape[0]):
            j = pj[i]
            k = pk[i]
            c = math.cos(betas[i])
            s = math.sin(betas[i])
            aj = state[j]
            ak = state[k]
            if kinds[i] == 0:
                state[j] = c * aj + 1j * s * ak
                state[k] = 1j * s * aj + c * ak
            else:
                state[j] = c * aj + s * ak
                state[k] = -s * aj + c * ak
        return state

else:
    rotate_pairs_numba = None

rotate_pairs = rotate_pairs_numba if HAVE_NUMBA else rotate_pairs_numpy


def rotate_pairs_matrix(mat, pj, pk, betas, kinds):
    """Row-wise pair rotations on a (dim, ncols) matrix, in place."""
    if len(pj) == 0:
        return mat
    a = mat[pj, :]
    b = mat[pk, :]
    c = np.cos(betas)[:, None]
    s = np.sin(betas)[:, None]
    se = np.where((kinds == 0)[:, None], 1j * s, s.astype(np.complex128))
    mat[pj, :] = c * a + se * b
    mat[pk, :] = np.where((kinds == 0)[:, None], se, -se) * a + c * b
    return mat


# ---------------------------------------------------------------------------
# decoupling-time scan
#
# bound(s) = sum over classes of max over class members w of 2|sin(w*tbar/2)|
# with tbar = t_hat + step*s.  Returns the first s in [s0, s1) whose bound
# is below eps (or -1) plus the best (s, bound) seen, so exhausted searches
# can report how close they got.
# ---------------------------------------------------------------------------


def scan_decoupling_numpy(t_hat, step, w, cls_ptr, eps, s0, s1, best_s, best_bound):
    s = np.arange(s0, s1, dtype=np.float64)
    half = 0.5 * (t_hat + step * s)
    tot = np.zeros_like(half)
    for c in range(len(cls_ptr) - 1):
        lo, hi = cls_ptr[c], cls_ptr[c + 1]
        if hi == lo:
            continue
        if hi - lo == 1:
            m = np.abs(np.sin(w[lo] * half))
        else:
            m = np.abs(np.sin(np.multiply.outer(w[lo:hi], half))).max(axis=0)
        tot += 2.0 * m
    i = int(np.argmin(tot))
    if tot[i] < best_bound:
        best_bound = float(tot[i])
        best_s = s0 + i
    hits = np.flatnonzero(tot < eps)
    cand = int(s0 + hits[0]) if hits.size else -1
    return cand, best_s, best_bound


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def scan_decoupling_numba(t_hat, step, w, cls_ptr, eps, s0, s1, best_s, best_bound):  # pragma: no cover
        nc = cls_ptr.shape[0] - 1
        for s in range(s0, s1):
            half = 0.5 * (t_hat + step * s)
            tot = 0.0
            for c in range(nc):
                mx = 0.0
                for i in range(cls_ptr[c], cls_ptr[c + 1]):
                    v = abs(math.sin(w[i] * half))
                    if v > mx:
                        mx = v
                tot += 2.0 * mx
                if tot >= best_bound and tot >= eps:
                    break
            if tot < best_bound:
                best_bound = tot
                best_s = s
            if tot < eps:
                return s, best_s, best_bound
        return -1, best_s, best_bound

else:
    scan_decoupling_numba = None

scan_decoupling = scan_decoupling_numba if HAVE_NUMBA else scan_decoupling_numpy


# ---------------------------------------------------------------------------
# planner objective + adjoint gradient
#
# Forward: phi_{k+1} = exp(theta_k * S_k) phi_k over per-segment pair lists
# (CSR layout seg_ptr / pj / pk / pc / pkind, rotation angle theta_k * pc).
# Objective: f = ||phi_K - target||^2 summed componentwise (no cancellation,
# so values down to ~1e-30 stay meaningful).
# Backward: mu_K = phi_K - target, grad_k = 2 Re<mu_k, S_k phi_{k+1}>,
# mu_{k-1} = exp(-theta_k S_k) mu_k.
# ---------------------------------------------------------------------------


def objective_grad_numpy(thetas, phi0, target, seg_ptr, pj, pk, pc, pkind):
    nseg = len(thetas)
    dim = phi0.shape[0]
    states = np.empty((nseg + 1, dim), dtype=np.complex128)
    states[0] = phi0
    for k in range(nseg):
        states[k + 1] = states[k]
        lo, hi = seg_ptr[k], seg_ptr[k + 1]
        rotate_pairs_numpy(states[k + 1], pj[lo:hi], pk[lo:hi], thetas[k] * pc[lo:hi], pkind[lo:hi])
    mu = states[nseg] - target
    f = float(np.sum(mu.real**2 + mu.imag**2))
    grad = np.zeros(nseg, dtype=np.float64)
    for k in range(nseg - 1, -1, -1):
        lo, hi = seg_ptr[k], seg_ptr[k + 1]
        phi = states[k + 1]
        j = pj[lo:hi]
        kk = pk[lo:hi]
        c = pc[lo:hi]
        e = pkind[lo:hi] == 0
        sj = np.where(e, 1j * c, c) * phi[kk]
        sk = np.where(e, 1j * c, -c) * phi[j]
        grad[k] = 2.0 * float(np.sum((np.conj(mu[j]) * sj + np.conj(mu[kk]) * sk).real))
        rotate_pairs_numpy(mu, j, kk, -thetas[k] * c, pkind[lo:hi])
    return f, grad


if HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def objective_grad_numba(thetas, phi0, target, seg_ptr, pj, pk, pc, pkind):  # pragma: no cover
        nseg = thetas.shape[0]
        dim = phi0.shape[0]
        states = np.empty((nseg + 1, dim), dtype=np.complex128)
        for d in range(dim):
            states[0, d] = phi0[d]
        for k in range(nseg):
            for d in range(dim):
                states[k + 1, d] = states[k, d]
            for i in range(seg_ptr[k], seg_ptr[k + 1]):
                j = pj[i]
                kk = pk[i]
                b = thetas[k] * pc[i]
                c = math.cos(b)
                s = math.sin(b)
                aj = states[k + 1, j]
                ak = states[k + 1, kk]
                if pkind[i] == 0:
                    states[k + 1, j] = c * aj + 1j * s * ak
                    states[k + 1, kk] = 1j * s * aj + c * ak
                else:
                    states[k + 1, j] = c * aj + s * ak
                    states[k + 1, kk] = -s * aj + c * ak
        mu = np.empty(dim, dtype=np.complex128)
        f = 0.0
        for d in range(dim):
            mu[d] = states[nseg, d] - target[d]
            f += mu[d].real * mu[d].real + mu[d].imag * mu[d].imag
        grad = np.zeros(nseg, dtype=np.float64)
        for k in range(nseg - 1, -1, -1):
            g = 0.0
            for i in range(seg_ptr[k], seg_ptr[k + 1]):
                j = pj[i]
                kk = pk[i]
                c = pc[i]
                if pkind[i] == 0:
                    sj = 1j * c * states[k + 1, kk]
                    sk = 1j * c * states[k + 1, j]
                else:
                    sj = c * states[k + 1, kk]
                    sk = -c * states[k + 1, j]
                g += (mu[j].conjugate() * sj + mu[kk].conjugate() * sk).real
            grad[k] = 2.0 * g
            for i in range(seg_ptr[k], seg_ptr[k + 1]):
                j = pj[i]
                kk = pk[i]
                b = -thetas[k] * pc[i]
                c = math.cos(b)
                s = math.sin(b)
                aj = mu[j]
                ak = mu[kk]
                if pkind[i] == 0:
                    mu[j] = c * aj + 1j * s * ak
                    mu[kk] = 1j * s * aj + c * ak
                else:
                    mu[j] = c * aj + s * ak
                    mu[kk] = -s * aj + c * ak
        return f, grad

else:
    objective_grad_numba = None

objective_grad = objective_grad_numba if HAVE_NUMBA else objective_grad_numpy
