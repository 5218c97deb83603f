"""Vectorised numpy kernels.

Every function here has a loop twin in :mod:`condweight.kernels.numba_impl`
with the same signature. The sampling kernels (``decode_*``, ``linear_stat``,
``tally``) are bitwise-identical across the two backends: they consume the
same uniforms and accumulate floating point sums in the same order.
"""

import numpy as np

# rows of scratch permutation kept in memory at once by decode_fixed
_PERM_BUDGET = 1 << 22


def pb_pmf(p):
    """Poisson-binomial pmf by the O(N^2) convolution recurrence."""
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros(p.shape[0] + 1)
    out[0] = 1.0
    for i, pk in enumerate(p):
        # counts 0..i+1 after adding unit i
        out[1 : i + 2] = out[1 : i + 2] * (1.0 - pk) + out[0 : i + 1] * pk
        out[0] *= 1.0 - pk
    return out


def cps_recursion(w, n, keep_table):
    N = w.shape[0]
    f = np.zeros(N)
    h = np.zeros(n + 1)
    table = np.zeros((n + 1, N)) if keep_table else np.zeros((0, N))
    amp = 1.0
    wmax = w.max() if N else 0.0
    for m in range(1, n + 1):
        g = w * (1.0 - f)
        hm = m / g.sum()
        h[m] = hm
        f = hm * g
        amp *= max(1.0, 2.0 * hm * wmax)
        if keep_table:
            table[m] = f
    return f, h, amp, table


def _remove_unit_at(P, q, n):
    """P_{-k}(n-1) for each k, choosing the stable deconvolution direction."""
    N = q.shape[0]
    out = np.empty(N)
    lo = q <= 0.5
    if lo.any():
        ql = q[lo]
        prev = np.zeros(ql.shape[0])
        for j in range(n):
            prev = (P[j] - ql * prev) / (1.0 - ql)
        out[lo] = prev
    hi = ~lo
    if hi.any():
        qh = q[hi]
        nxt = np.zeros(qh.shape[0])
        for j in range(N, n - 1, -1):
            nxt = (P[j] - (1.0 - qh) * nxt) / qh
        out[hi] = nxt
    return out


def cps_loo(q, n):
    P = pb_pmf(q)
    return q * _remove_unit_at(P, q, n) / P[n]


def _remove_all(P, q):
    """Row k holds the pmf of the count without unit k (length N)."""
    N = q.shape[0]
    R = np.zeros((N, N + 1))
    lo = q <= 0.5
    ql = q[lo]
    prev = np.zeros(ql.shape[0])
    rows_lo = np.flatnonzero(lo)
    for j in range(N):
        prev = (P[j] - ql * prev) / (1.0 - ql)
        R[rows_lo, j] = prev
    hi = ~lo
    qh = q[hi]
    rows_hi = np.flatnonzero(hi)
    nxt = np.zeros(qh.shape[0])
    for j in range(N, 0, -1):
        nxt = (P[j] - (1.0 - qh) * nxt) / qh
        R[rows_hi, j - 1] = nxt
    return R


def cps_pairs(q, n):
    N = q.shape[0]
    P = pb_pmf(q)
    R = _remove_all(P, q)
    # second removal: target index n-2 of the pmf without both k and l
    target = np.zeros((N, N))
    if n >= 2:
        lo = q <= 0.5
        hi = ~lo
        if lo.any():
            ql = q[lo][None, :]
            prev = np.zeros((N, int(lo.sum())))
            for j in range(n - 1):
                prev = (R[:, j][:, None] - ql * prev) / (1.0 - ql)
            target[:, lo] = prev
        if hi.any():
            qh = q[hi][None, :]
            nxt = np.zeros((N, int(hi.sum())))
            for j in range(N - 1, n - 2, -1):
                nxt = (R[:, j][:, None] - (1.0 - qh) * nxt) / qh
            target[:, hi] = nxt
    out = np.outer(q, q) * target / P[n]
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, q * _remove_unit_at(P, q, n) / P[n])
    return out


def decode_fixed(u, order, offsets, alloc):
    """Stratified partial Fisher-Yates: one row of uniforms per draw."""
    B = u.shape[0]
    idx = np.empty((B, int(alloc.sum())), dtype=np.int64)
    col = 0
    for h in range(alloc.shape[0]):
        off = offsets[h]
        Nh = offsets[h + 1] - off
        nh = alloc[h]
        if nh == 0:
            continue
        step = max(1, _PERM_BUDGET // max(Nh, 1))
        for b0 in range(0, B, step):
            ub = u[b0 : b0 + step, col : col + nh]
            nb = ub.shape[0]
            perm = np.tile(np.arange(Nh, dtype=np.int64), (nb, 1))
            rows = np.arange(nb)
            for j in range(nh):
                r = j + (ub[:, j] * (Nh - j)).astype(np.int64)
                np.minimum(r, Nh - 1, out=r)
                pj = perm[:, j].copy()
                perm[:, j] = perm[rows, r]
                perm[rows, r] = pj
            idx[b0 : b0 + nb, col : col + nh] = order[off + perm[:, :nh]]
        col += nh
    return idx


def decode_poisson(u, p, labels, required, n_max, max_valid):
    """Poisson attempts, keeping the first ``max_valid`` meeting ``required``.

    Returns ``(idx, sizes, used)`` where ``used`` is the number of attempts
    consumed (attempts after the last kept one are discarded).
    """
    B, N = u.shape
    mask = u < p[None, :]
    H = required.shape[0]
    onehot = np.zeros((N, H), dtype=np.int64)
    onehot[np.arange(N), labels] = 1
    counts = mask.astype(np.int64) @ onehot
    sizes_all = mask.sum(axis=1)
    ok = np.all((required[None, :] < 0) | (counts == required[None, :]), axis=1)
    ok &= sizes_all <= n_max
    rows = np.flatnonzero(ok)
    if rows.shape[0] >= max_valid:
        rows = rows[:max_valid]
        used = int(rows[-1]) + 1 if max_valid > 0 else 0
    else:
        used = B
    sub = mask[rows]
    sizes = sizes_all[rows].astype(np.int64)
    order = np.argsort(~sub, axis=1, kind="stable")[:, :n_max]
    width = np.arange(n_max)[None, :]
    idx = np.where(width < sizes[:, None], order, -1).astype(np.int64)
    return idx, sizes, used


def linear_stat(idx, sizes, wmat):
    B, W = idx.shape
    q = wmat.shape[0]
    phi = np.zeros((B, q))
    safe = np.where(idx >= 0, idx, 0)
    for j in range(W):
        live = (j < sizes)[:, None]
        phi += np.where(live, wmat[:, safe[:, j]].T, 0.0)
    return phi


def tally(idx, sizes, accept, pair_pos, Mk, Mkl):
    rows = np.flatnonzero(accept)
    if rows.shape[0] == 0:
        return 0
    sub = idx[rows]
    live = np.arange(sub.shape[1])[None, :] < sizes[rows][:, None]
    flat = sub[live]
    Mk += np.bincount(flat, minlength=Mk.shape[0])
    P = Mkl.shape[0]
    if P:
        pos = np.where(live, pair_pos[np.where(live, sub, 0)], -1)
        Z = np.zeros((rows.shape[0], P + 1), dtype=np.int64)
        rr = np.repeat(np.arange(rows.shape[0]), sub.shape[1])
        Z[rr, pos.ravel()] = 1
        Z = Z[:, :P]
        Mkl += Z.T @ Z
    return int(rows.shape[0])
