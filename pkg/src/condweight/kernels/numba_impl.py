"""Loop kernels compiled with numba. See numpy_impl for the contracts."""

import functools

import numba as nb
import numpy as np

njit = functools.partial(nb.njit, cache=True, nogil=True)


@njit
def pb_pmf(p):
    N = p.shape[0]
    out = np.zeros(N + 1)
    out[0] = 1.0
    for i in range(N):
        pk = p[i]
        for c in range(i + 1, 0, -1):
            out[c] = out[c] * (1.0 - pk) + out[c - 1] * pk
        out[0] *= 1.0 - pk
    return out


@njit
def _cps_recursion(w, n, table):
    N = w.shape[0]
    f = np.zeros(N)
    g = np.empty(N)
    h = np.zeros(n + 1)
    keep = table.shape[0] > 0
    wmax = 0.0
    for k in range(N):
        if w[k] > wmax:
            wmax = w[k]
    amp = 1.0
    for m in range(1, n + 1):
        s = 0.0
        for k in range(N):
            g[k] = w[k] * (1.0 - f[k])
            s += g[k]
        hm = m / s
        h[m] = hm
        for k in range(N):
            f[k] = hm * g[k]
        amp *= max(1.0, 2.0 * hm * wmax)
        if keep:
            table[m, :] = f
    return f, h, amp


def cps_recursion(w, n, keep_table):
    table = np.zeros((n + 1, w.shape[0])) if keep_table else np.zeros((0, w.shape[0]))
    f, h, amp = _cps_recursion(w, n, table)
    return f, h, amp, table


@njit
def _remove_one(P, qk, n, N):
    if qk <= 0.5:
        prev = 0.0
        for j in range(n):
            prev = (P[j] - qk * prev) / (1.0 - qk)
        return prev
    nxt = 0.0
    for j in range(N, n - 1, -1):
        nxt = (P[j] - (1.0 - qk) * nxt) / qk
    return nxt


@njit
def cps_loo(q, n):
    N = q.shape[0]
    P = pb_pmf(q)
    out = np.empty(N)
    for k in range(N):
        out[k] = q[k] * _remove_one(P, q[k], n, N) / P[n]
    return out


@njit
def cps_pairs(q, n):
    N = q.shape[0]
    P = pb_pmf(q)
    Rk = np.zeros(N + 1)
    acc = np.zeros(N)
    hi_acc = np.zeros(N)
    out = np.zeros((N, N))
    for k in range(N):
        qk = q[k]
        Rk[:] = 0.0
        if qk <= 0.5:
            prev = 0.0
            for j in range(N):
                prev = (P[j] - qk * prev) / (1.0 - qk)
                Rk[j] = prev
        else:
            nxt = 0.0
            for j in range(N, 0, -1):
                nxt = (P[j] - (1.0 - qk) * nxt) / qk
                Rk[j - 1] = nxt
        out[k, k] = qk * _remove_one(P, qk, n, N) / P[n]
        if n < 2:
            continue
        # all l at once, innermost over l so the loop vectorises
        acc[:] = 0.0
        for j in range(n - 1):
            r = Rk[j]
            for l in range(N):
                if q[l] <= 0.5:
                    acc[l] = (r - q[l] * acc[l]) / (1.0 - q[l])
        hi_acc[:] = 0.0
        for j in range(N - 1, n - 2, -1):
            r = Rk[j]
            for l in range(N):
                if q[l] > 0.5:
                    hi_acc[l] = (r - (1.0 - q[l]) * hi_acc[l]) / q[l]
        for l in range(N):
            if l != k:
                t = acc[l] if q[l] <= 0.5 else hi_acc[l]
                out[k, l] = qk * q[l] * t / P[n]
    for k in range(N):
        for l in range(k + 1, N):
            v = 0.5 * (out[k, l] + out[l, k])
            out[k, l] = v
            out[l, k] = v
    return out


@njit
def decode_fixed(u, order, offsets, alloc):
    B = u.shape[0]
    H = alloc.shape[0]
    n = 0
    maxN = 0
    for h in range(H):
        n += alloc[h]
        if offsets[h + 1] - offsets[h] > maxN:
            maxN = offsets[h + 1] - offsets[h]
    idx = np.empty((B, n), dtype=np.int64)
    perm = np.arange(maxN)
    for b in range(B):
        col = 0
        for h in range(H):
            off = offsets[h]
            Nh = offsets[h + 1] - off
            nh = alloc[h]
            for j in range(nh):
                r = j + np.int64(u[b, col + j] * (Nh - j))
                if r > Nh - 1:
                    r = Nh - 1
                t = perm[j]
                perm[j] = perm[r]
                perm[r] = t
                idx[b, col + j] = order[off + perm[j]]
            # restore the identity permutation for the next draw
            for j in range(nh - 1, -1, -1):
                r = j + np.int64(u[b, col + j] * (Nh - j))
                if r > Nh - 1:
                    r = Nh - 1
                t = perm[j]
                perm[j] = perm[r]
                perm[r] = t
            col += nh
    return idx


@njit
def decode_poisson(u, p, labels, required, n_max, max_valid):
    B, N = u.shape
    H = required.shape[0]
    rows = min(B, max_valid)
    idx = np.full((rows, n_max), -1, dtype=np.int64)
    sizes = np.zeros(rows, dtype=np.int64)
    counts = np.zeros(H, dtype=np.int64)
    v = 0
    used = 0
    for b in range(B):
        if v >= max_valid:
            break
        used = b + 1
        counts[:] = 0
        c = 0
        for k in range(N):
            if u[b, k] < p[k]:
                if c < n_max:
                    idx[v, c] = k
                c += 1
                counts[labels[k]] += 1
        ok = c <= n_max
        for h in range(H):
            if required[h] >= 0 and counts[h] != required[h]:
                ok = False
        if ok:
            sizes[v] = c
            v += 1
        else:
            for j in range(min(c, n_max)):
                idx[v, j] = -1
    return idx[:v], sizes[:v], used


@njit
def linear_stat(idx, sizes, wmat):
    B = idx.shape[0]
    q = wmat.shape[0]
    phi = np.zeros((B, q))
    for b in range(B):
        for j in range(sizes[b]):
            k = idx[b, j]
            for c in range(q):
                phi[b, c] += wmat[c, k]
    return phi


@njit
def tally(idx, sizes, accept, pair_pos, Mk, Mkl):
    B = idx.shape[0]
    P = Mkl.shape[0]
    present = np.empty(idx.shape[1], dtype=np.int64)
    a = 0
    for b in range(B):
        if not accept[b]:
            continue
        a += 1
        m = 0
        for j in range(sizes[b]):
            k = idx[b, j]
            Mk[k] += 1
            if P > 0 and pair_pos[k] >= 0:
                present[m] = pair_pos[k]
                m += 1
        for i in range(m):
            for j in range(m):
                Mkl[present[i], present[j]] += 1
    return a
