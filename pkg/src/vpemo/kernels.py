"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

The public names (``knn_convert``, ``edit_table``, ``edit_backtrace``,
``perplexity_search``, ``tsne_gradient``) are bound at import time according
to :data:`vpemo._accel.USE_NUMBA`. Both flavours are always importable through
:data:`NUMBA_KERNELS` / :data:`NUMPY_KERNELS` so that tests and the benchmark
can compare them directly.

All kernels take float64 / int64 arrays; callers do the conversion.
"""
from __future__ import annotations

import math

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, njit

# ---------------------------------------------------------------------------
# kNN regression over a frame pool
# ---------------------------------------------------------------------------


def _np_knn_convert(source, pool, k, cosine, chunk=512):
    n, d = source.shape
    if cosine:
        ref = pool / np.sqrt((pool * pool).sum(axis=1))[:, None]
    out = np.empty((n, d))
    for start in range(0, n, chunk):
        src = source[start:start + chunk]
        if cosine:
            sims = src @ ref.T
        else:
            diff = src[:, None, :] - pool[None, :, :]
            sims = -(diff * diff).sum(axis=2)
        # stable sort on the negated scores keeps lower pool index first on ties
        idx = np.argsort(-sims, axis=1, kind="stable")[:, :k]
        acc = np.zeros((src.shape[0], d))
        for r in range(k):
            acc += pool[idx[:, r]]
        out[start:start + chunk] = acc / k
    return out


@njit(cache=True)
def _nb_knn_convert(source, pool, k, cosine):
    n, d = source.shape
    m = pool.shape[0]
    out = np.zeros((n, d))
    ref = np.empty((m, d))
    if cosine:
        for j in range(m):
            s = 0.0
            for c in range(d):
                s += pool[j, c] * pool[j, c]
            s = math.sqrt(s)
            for c in range(d):
                ref[j, c] = pool[j, c] / s
    sims = np.empty(m)
    best = np.empty(k, np.int64)
    for i in range(n):
        for j in range(m):
            s = 0.0
            if cosine:
                for c in range(d):
                    s += source[i, c] * ref[j, c]
                sims[j] = s
            else:
                for c in range(d):
                    t = source[i, c] - pool[j, c]
                    s += t * t
                sims[j] = -s
        filled = 0
        for j in range(m):
            v = sims[j]
            if filled < k:
                pos = filled
                filled += 1
            elif v > sims[best[k - 1]]:
                pos = k - 1
            else:
                continue
            # strict comparison: an equal score never overtakes a lower index
            while pos > 0 and v > sims[best[pos - 1]]:
                best[pos] = best[pos - 1]
                pos -= 1
            best[pos] = j
        for r in range(k):
            for c in range(d):
                out[i, c] += pool[best[r], c]
        for c in range(d):
            out[i, c] /= k
    return out


# ---------------------------------------------------------------------------
# Levenshtein alignment over integer token ids
# ---------------------------------------------------------------------------


def _np_edit_table(ref, hyp):
    n, m = len(ref), len(hyp)
    table = np.empty((n + 1, m + 1), dtype=np.int64)
    cols = np.arange(m + 1, dtype=np.int64)
    table[0] = cols
    for i in range(1, n + 1):
        prev = table[i - 1]
        best = np.empty(m + 1, dtype=np.int64)
        best[0] = i
        cost = (hyp != ref[i - 1]).astype(np.int64)
        best[1:] = np.minimum(prev[:-1] + cost, prev[1:] + 1)
        # insertions: row[j] = min_{q<=j} best[q] + (j - q)
        table[i] = np.minimum.accumulate(best - cols) + cols
    return table


@njit(cache=True)
def _nb_edit_table(ref, hyp):
    n = ref.shape[0]
    m = hyp.shape[0]
    table = np.empty((n + 1, m + 1), np.int64)
    for j in range(m + 1):
        table[0, j] = j
    for i in range(1, n + 1):
        table[i, 0] = i
        for j in range(1, m + 1):
            best = table[i - 1, j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1)
            dele = table[i - 1, j] + 1
            if dele < best:
                best = dele
            ins = table[i, j - 1] + 1
            if ins < best:
                best = ins
            table[i, j] = best
    return table


def _py_edit_backtrace(table, ref, hyp):
    """Walk back from the corner; prefer diagonal, then deletion, then insertion."""
    i = ref.shape[0]
    j = hyp.shape[0]
    subs = dels = ins = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            if table[i, j] == table[i - 1, j - 1] + cost:
                subs += cost
                i -= 1
                j -= 1
                continue
        if i > 0 and table[i, j] == table[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return subs, dels, ins


_nb_edit_backtrace = njit(cache=True)(_py_edit_backtrace)


# ---------------------------------------------------------------------------
# t-SNE: per-point bandwidth search and gradient
# ---------------------------------------------------------------------------


def _np_perplexity_search(dist2, perplexity, tol, max_iter):
    n = dist2.shape[0]
    target = math.log(perplexity)
    cond = np.zeros((n, n))
    betas = np.ones(n)
    entropies = np.empty(n)
    for i in range(n):
        d = np.concatenate((dist2[i, :i], dist2[i, i + 1:]))
        d = d - d.min()
        beta, lo, hi = 1.0, 0.0, math.inf
        for _ in range(max_iter):
            p = np.exp(-d * beta)
            s = p.sum()
            h = math.log(s) + beta * float(d @ p) / s
            diff = h - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == math.inf else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
        row = p / s
        cond[i, :i] = row[:i]
        cond[i, i + 1:] = row[i:]
        betas[i] = beta
        entropies[i] = h
    return cond, betas, entropies


@njit(cache=True)
def _nb_perplexity_search(dist2, perplexity, tol, max_iter):
    n = dist2.shape[0]
    target = math.log(perplexity)
    cond = np.zeros((n, n))
    betas = np.ones(n)
    entropies = np.empty(n)
    d = np.empty(n - 1)
    p = np.empty(n - 1)
    for i in range(n):
        q = 0
        for j in range(n):
            if j != i:
                d[q] = dist2[i, j]
                q += 1
        dmin = d[0]
        for q in range(n - 1):
            if d[q] < dmin:
                dmin = d[q]
        for q in range(n - 1):
            d[q] -= dmin
        beta = 1.0
        lo = 0.0
        hi = math.inf
        s = 1.0
        h = 0.0
        for _ in range(max_iter):
            s = 0.0
            dp = 0.0
            for q in range(n - 1):
                p[q] = math.exp(-d[q] * beta)
                s += p[q]
                dp += d[q] * p[q]
            h = math.log(s) + beta * dp / s
            diff = h - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                if hi == math.inf:
                    beta = beta * 2.0
                else:
                    beta = 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
        q = 0
        for j in range(n):
            if j != i:
                cond[i, j] = p[q] / s
                q += 1
        betas[i] = beta
        entropies[i] = h
    return cond, betas, entropies


def _np_tsne_gradient(Y, P, exaggeration):
    diff = Y[:, None, :] - Y[None, :, :]
    num = 1.0 / (1.0 + (diff * diff).sum(axis=2))
    np.fill_diagonal(num, 0.0)
    Q = num / num.sum()
    PQ = (exaggeration * P - Q) * num
    grad = 4.0 * (PQ.sum(axis=1)[:, None] * Y - PQ @ Y)
    mask = P > 0
    kl = float((P[mask] * np.log(P[mask] / np.maximum(Q[mask], 1e-300))).sum())
    return grad, kl


@njit(cache=True)
def _nb_tsne_gradient(Y, P, exaggeration):
    n, dims = Y.shape
    num = np.zeros((n, n))
    total = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for c in range(dims):
                t = Y[i, c] - Y[j, c]
                s += t * t
            v = 1.0 / (1.0 + s)
            num[i, j] = v
            num[j, i] = v
            total += 2.0 * v
    grad = np.zeros((n, dims))
    kl = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            q = num[i, j] / total
            p = P[i, j]
            mult = 4.0 * (exaggeration * p - q) * num[i, j]
            for c in range(dims):
                grad[i, c] += mult * (Y[i, c] - Y[j, c])
            if p > 0.0:
                kl += p * math.log(p / max(q, 1e-300))
    return grad, kl


NUMPY_KERNELS = {
    "knn_convert": _np_knn_convert,
    "edit_table": _np_edit_table,
    "edit_backtrace": _py_edit_backtrace,
    "perplexity_search": _np_perplexity_search,
    "tsne_gradient": _np_tsne_gradient,
}

NUMBA_KERNELS = {
    "knn_convert": _nb_knn_convert,
    "edit_table": _nb_edit_table,
    "edit_backtrace": _nb_edit_backtrace,
    "perplexity_search": _nb_perplexity_search,
    "tsne_gradient": _nb_tsne_gradient,
} if HAVE_NUMBA else dict(NUMPY_KERNELS)

BACKEND = "numba" if USE_NUMBA else "numpy"
_active = NUMBA_KERNELS if USE_NUMBA else NUMPY_KERNELS

knn_convert = _active["knn_convert"]
edit_table = _active["edit_table"]
edit_backtrace = _active["edit_backtrace"]
perplexity_search = _active["perplexity_search"]
tsne_gradient = _active["tsne_gradient"]
