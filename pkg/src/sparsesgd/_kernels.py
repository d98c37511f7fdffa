"""Compiled hot loops shared by the objective, metric, and solver layers.

Every kernel takes the dataset as raw CSR arrays (indptr int64, indices
uint32, values float64) plus dense float64 model vectors, and is compiled
with ``nogil=True`` so worker threads mutate the shared model concurrently
with no interpreter lock held.  Per-coordinate float64 writes are aligned
word writes: concurrent writers can lose updates but never produce torn
values, which is the contract the asynchronous solvers are built on.

The per-sample gradient formula lives in exactly one place
(``sample_grad_into``); the epoch loops and the full-gradient accumulators
inline the same expressions in the same order, which keeps the mean of the
stochastic gradients bitwise equal to the full gradient.
"""

import math

import numpy as np
from numba import njit

# objective family codes
HINGE = 0  # squared hinge loss + L2 on the sample's support
LOGISTIC = 1  # logistic loss + L1 on the sample's support


@njit(cache=True, nogil=True)
def margin(indptr, indices, values, w, i):
    """Plain sequential dot product w . x_i over the row's support."""
    m = 0.0
    for p in range(indptr[i], indptr[i + 1]):
        m += values[p] * w[indices[p]]
    return m


@njit(cache=True, nogil=True)
def sample_loss(indptr, indices, values, w, i, y, obj_code, eta):
    m = margin(indptr, indices, values, w, i)
    if obj_code == HINGE:
        z = 1.0 - y * m
        hinge = z * z if z > 0.0 else 0.0
        reg = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            wj = w[indices[p]]
            reg += wj * wj
        return hinge + 0.5 * eta * reg
    else:
        ym = y * m
        # stable log(1 + exp(-ym))
        if ym >= 0.0:
            ll = math.log1p(math.exp(-ym))
        else:
            ll = -ym + math.log1p(math.exp(ym))
        reg = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            reg += abs(w[indices[p]])
        return ll + eta * reg


@njit(cache=True, nogil=True)
def sample_grad_into(indptr, indices, values, w, i, y, obj_code, eta, out):
    """Gradient over support(x_i), written into out[0:nnz_i]."""
    a = indptr[i]
    b = indptr[i + 1]
    m = 0.0
    for p in range(a, b):
        m += values[p] * w[indices[p]]
    if obj_code == HINGE:
        z = 1.0 - y * m
        g = -2.0 * z * y if z > 0.0 else 0.0
        for p in range(a, b):
            out[p - a] = g * values[p] + eta * w[indices[p]]
    else:
        s = 1.0 / (1.0 + math.exp(y * m))  # sigmoid(-y m)
        g = -y * s
        for p in range(a, b):
            wj = w[indices[p]]
            sub = eta if wj > 0.0 else (-eta if wj < 0.0 else 0.0)
            out[p - a] = g * values[p] + sub
    return b - a


@njit(cache=True, nogil=True)
def all_losses(indptr, indices, values, labels, w, obj_code, eta):
    n = labels.size
    out = np.empty(n)
    for i in range(n):
        out[i] = sample_loss(indptr, indices, values, w, i, labels[i], obj_code, eta)
    return out


@njit(cache=True, nogil=True)
def all_margins(indptr, indices, values, w, n):
    out = np.empty(n)
    for i in range(n):
        out[i] = margin(indptr, indices, values, w, i)
    return out


@njit(cache=True, nogil=True)
def grad_sum_range(indptr, indices, values, labels, w, obj_code, eta, i0, i1, acc):
    """Sum of per-sample gradients over samples [i0, i1), accumulated into acc."""
    max_nnz = 0
    for i in range(i0, i1):
        nnz = indptr[i + 1] - indptr[i]
        if nnz > max_nnz:
            max_nnz = nnz
    scratch = np.empty(max_nnz)
    for i in range(i0, i1):
        a = indptr[i]
        k = sample_grad_into(indptr, indices, values, w, i, labels[i], obj_code, eta, scratch)
        for p in range(k):
            acc[indices[a + p]] += scratch[p]


@njit(cache=True, nogil=True)
def full_gradient(indptr, indices, values, labels, w, obj_code, eta):
    n = labels.size
    acc = np.zeros(w.size)
    grad_sum_range(indptr, indices, values, labels, w, obj_code, eta, 0, n, acc)
    for j in range(w.size):
        acc[j] = acc[j] / n
    return acc


@njit(cache=True, nogil=True)
def sparse_epoch(indptr, indices, values, labels, w, ids, seq, scale, step, eta, obj_code):
    """One worker's pass: seq[k] selects a position in ids; the update is
    w <- w - step*scale[pos] * grad_i(w), all writes coordinate-wise.

    Returns the number of coordinates written (nnz touched).
    """
    touched = 0
    for k in range(seq.size):
        j = seq[k]
        i = ids[j]
        a = indptr[i]
        b = indptr[i + 1]
        m = 0.0
        for p in range(a, b):
            m += values[p] * w[indices[p]]
        y = labels[i]
        c = step * scale[j]
        if obj_code == HINGE:
            z = 1.0 - y * m
            g = -2.0 * z * y if z > 0.0 else 0.0
            for p in range(a, b):
                jj = indices[p]
                w[jj] -= c * (g * values[p] + eta * w[jj])
        else:
            s = 1.0 / (1.0 + math.exp(y * m))
            g = -y * s
            for p in range(a, b):
                jj = indices[p]
                wj = w[jj]
                sub = eta if wj > 0.0 else (-eta if wj < 0.0 else 0.0)
                w[jj] -= c * (g * values[p] + sub)
        touched += b - a
    return touched


@njit(cache=True, nogil=True)
def svrg_epoch(indptr, indices, values, labels, w, snap, mu, ids, seq, step, eta, obj_code):
    """Variance-reduced pass: w <- w - step*(grad_i(w) - grad_i(snap) + mu).

    The mu term is dense, so every iteration writes all d coordinates; the
    correction grad_i(w) - grad_i(snap) is applied sparsely on top.
    Returns coordinates written (d per iteration).
    """
    d = w.size
    touched = 0
    for k in range(seq.size):
        i = ids[seq[k]]
        a = indptr[i]
        b = indptr[i + 1]
        y = labels[i]
        mw = 0.0
        ms = 0.0
        for p in range(a, b):
            mw += values[p] * w[indices[p]]
            ms += values[p] * snap[indices[p]]
        if obj_code == HINGE:
            zw = 1.0 - y * mw
            zs = 1.0 - y * ms
            gw = -2.0 * zw * y if zw > 0.0 else 0.0
            gs = -2.0 * zs * y if zs > 0.0 else 0.0
            for jj in range(d):
                w[jj] -= step * mu[jj]
            for p in range(a, b):
                jj = indices[p]
                w[jj] -= step * ((gw - gs) * values[p] + eta * (w[jj] - snap[jj]))
        else:
            sw = 1.0 / (1.0 + math.exp(y * mw))
            ss = 1.0 / (1.0 + math.exp(y * ms))
            gw = -y * sw
            gs = -y * ss
            for jj in range(d):
                w[jj] -= step * mu[jj]
            for p in range(a, b):
                jj = indices[p]
                wj = w[jj]
                sj = snap[jj]
                subw = eta if wj > 0.0 else (-eta if wj < 0.0 else 0.0)
                subs = eta if sj > 0.0 else (-eta if sj < 0.0 else 0.0)
                w[jj] -= step * ((gw - gs) * values[p] + (subw - subs))
        touched += d
    return touched


@njit(cache=True, nogil=True)
def supports_intersect(indices, a0, a1, b0, b1):
    """Merge-scan over two sorted index slices."""
    p = a0
    q = b0
    while p < a1 and q < b1:
        u = indices[p]
        v = indices[q]
        if u == v:
            return True
        if u < v:
            p += 1
        else:
            q += 1
    return False


@njit(cache=True, nogil=True)
def conflict_hits_exhaustive(indptr, indices, n):
    hits = 0
    for i in range(n):
        for j in range(i + 1, n):
            if supports_intersect(indices, indptr[i], indptr[i + 1],
                                  indptr[j], indptr[j + 1]):
                hits += 2  # ordered pairs (i,j) and (j,i)
    return hits


@njit(cache=True, nogil=True)
def conflict_hits_sampled(indptr, indices, ii, jj):
    hits = 0
    for k in range(ii.size):
        i = ii[k]
        j = jj[k]
        if supports_intersect(indices, indptr[i], indptr[i + 1],
                              indptr[j], indptr[j + 1]):
            hits += 1
    return hits
