"""Exact inclusion probabilities for conditional Poisson sampling (CPS).

CPS of size n with Poisson parameters p draws s with probability
proportional to prod_{k in s} p_k prod_{k not in s} (1 - p_k) on |s| = n.

Forward map
-----------
The size recursion runs over m = 1..n::

    g_k  = w_k * (1 - f_k(m-1)),      w_k = p_k / (1 - p_k)
    f(m) = m * g / sum(g),            f(0) = 0

It is exact but amplifies rounding error by up to ``2 h_m max(w)`` per
step, which explodes once some units are nearly certain to be drawn
(errors of order one already at N = 12 with p close to 1). The recursion
tracks that amplification; past a threshold the probabilities come from
the Poisson-binomial leave-one-out identity instead::

    pi_k = q_k P(S_{-k} = n - 1) / P(S = n)

computed with odds rescaled so that sum(q) = n (the CPS law is invariant
to a common odds factor), which keeps P(S = n) near the mode. Removing
one unit from the pmf runs forward for q_k <= 1/2 and backward otherwise,
so every step contracts the error.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import expit, logit

from condweight import kernels

# recursion result is accepted when amplification * eps stays below this
RECURSION_TOL = 1e-12
_EPS = np.finfo(np.float64).eps
ENUMERATION_LIMIT = 20


class CPSError(ValueError):
    pass


class InversionError(RuntimeError):
    def __init__(self, residual, iterations):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"CPS inversion stalled after {iterations} iterations, residual {residual:.3g}")


@dataclass(frozen=True, eq=False)
class CPSWorkspace:
    """State of the size recursion.

    ``f_table[m]`` holds f_k(U, p, m) for m = 0..n, ``h_values[m]`` the
    normaliser of step m and ``amplification`` the product of per-step
    error growth bounds.
    """

    odds: np.ndarray
    f_table: np.ndarray
    h_values: np.ndarray
    amplification: float

    @property
    def pi(self) -> np.ndarray:
        return self.f_table[-1]

    @property
    def reliable(self) -> bool:
        return self.amplification * _EPS <= RECURSION_TOL


def _check(p, n):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise CPSError("p must be a vector")
    if ((p <= 0) | (p >= 1)).any():
        raise CPSError("p_k must lie strictly inside (0, 1); handle p_k = 1 before calling")
    n = int(n)
    if n < 0 or n > p.shape[0]:
        raise CPSError(f"need 0 <= n <= N, got n={n}, N={p.shape[0]}")
    return p, n


def cps_recursion(p, n) -> CPSWorkspace:
    """Run the size recursion and keep every intermediate f(m)."""
    p, n = _check(p, n)
    w = p / (1.0 - p)
    f, h, amp, table = kernels.cps_recursion(w, n, True)
    return CPSWorkspace(w, table, h, amp)


def rescale(p, n) -> np.ndarray:
    """Equivalent Poisson parameters (same CPS law) with sum equal to n."""
    p, n = _check(p, n)
    N = p.shape[0]
    if n == 0 or n == N:
        return p.copy()
    lw = np.log(p) - np.log1p(-p)
    target = n / N
    base = logit(target)
    lo, hi = base - lw.max(), base - lw.min()
    if hi - lo < 1e-300:
        return np.full(N, target)
    t = brentq(lambda t: expit(t + lw).sum() - n, lo, hi, xtol=1e-15, rtol=4 * _EPS)
    return expit(t + lw)


def cps_inclusion_probs(p, n, method: str = "auto") -> np.ndarray:
    """First-order CPS inclusion probabilities.

    ``method`` is ``"recursion"``, ``"stable"`` or ``"auto"`` (recursion,
    falling back to the leave-one-out form when its amplification bound says
    the result may be off by more than ``RECURSION_TOL``).
    """
    p, n = _check(p, n)
    N = p.shape[0]
    if n == 0:
        return np.zeros(N)
    if n == N:
        return np.ones(N)
    if method not in ("auto", "recursion", "stable"):
        raise CPSError(f"unknown method {method!r}")
    if method != "stable":
        f, _, amp, _ = kernels.cps_recursion(p / (1.0 - p), n, False)
        if method == "recursion" or amp * _EPS <= RECURSION_TOL:
            return f
    q = rescale(p, n)
    return np.clip(kernels.cps_loo(q, n), 0.0, 1.0)


def cps_joint_inclusion_probs(p, n) -> np.ndarray:
    """Matrix of pi_kl; the diagonal holds pi_k."""
    p, n = _check(p, n)
    N = p.shape[0]
    if n == 0:
        return np.zeros((N, N))
    if n == N:
        return np.ones((N, N))
    return np.clip(kernels.cps_pairs(rescale(p, n), n), 0.0, 1.0)


def cps_invert(pi_target, n, tol: float = 1e-10, max_iter: int = 500) -> np.ndarray:
    """Poisson parameters p (normalised to sum n) whose CPS has the given pi.

    Damped fixed point on the log-odds, ``theta += logit(target) -
    logit(pi(theta))``, with a Newton step (Jacobian pi_kl - pi_k pi_l,
    solved in least squares since a common shift is free) whenever the
    residual fails to shrink by half.
    """
    target = np.asarray(pi_target, dtype=np.float64)
    if ((target <= 0) | (target >= 1)).any():
        raise CPSError("targets must lie strictly inside (0, 1)")
    n = int(n)
    if abs(target.sum() - n) > max(tol, 1e-9 * n):
        raise CPSError(f"targets sum to {target.sum()}, expected {n}")
    theta = logit(target)
    lt = theta.copy()
    prev = np.inf
    for it in range(1, max_iter + 1):
        pi = cps_inclusion_probs(expit(theta), n)
        resid = np.abs(pi - target).max()
        if resid <= tol:
            return rescale(expit(theta), n)
        if resid > 0.5 * prev:
            J = cps_joint_inclusion_probs(expit(theta), n) - np.outer(pi, pi)
            np.fill_diagonal(J, pi * (1.0 - pi))
            step = np.linalg.lstsq(J, target - pi, rcond=None)[0]
            cand = theta + step
            cand_resid = np.abs(cps_inclusion_probs(expit(cand), n) - target).max()
            if cand_resid < resid:
                theta = cand
                prev = cand_resid
                continue
        theta = theta + (lt - logit(np.clip(pi, 1e-300, 1 - 1e-16)))
        prev = resid
    raise InversionError(resid, max_iter)


def _labels_and_counts(strata, counts):
    strata = np.asarray(strata)
    if isinstance(counts, dict):
        keys = sorted(counts)
        return strata, keys, [int(counts[k]) for k in keys]
    keys = sorted(set(strata.tolist()))
    counts = list(counts)
    if len(counts) != len(keys):
        raise CPSError("one count per stratum required")
    return strata, keys, [int(c) for c in counts]


def cps_poststrat_conditional_probs(p, strata, counts) -> np.ndarray:
    """Conditional pi given the realised per-stratum sample counts.

    Given the counts, the law is an independent CPS of size n_h inside each
    stratum (with the original p restricted to that stratum).
    """
    p = np.asarray(p, dtype=np.float64)
    strata, keys, cnts = _labels_and_counts(strata, counts)
    if set(strata.tolist()) - set(keys):
        raise CPSError("a count is required for every stratum")
    out = np.empty(p.shape[0])
    for h, nh in zip(keys, cnts):
        sel = strata == h
        Nh = int(sel.sum())
        if nh < 1:
            raise CPSError(f"stratum {h}: conditioning needs n_h >= 1")
        if nh > Nh:
            raise CPSError(f"stratum {h}: n_h={nh} exceeds N_h={Nh}")
        out[sel] = cps_inclusion_probs(p[sel], nh)
    return out


def enumerate_samples(p, n, strata=None, counts=None):
    """All size-n samples (optionally with given stratum counts) and their CPS law.

    Returns ``(members, probs)`` where ``members`` is a boolean matrix with
    one row per sample.
    """
    p = np.asarray(p, dtype=np.float64)
    N = p.shape[0]
    if N > ENUMERATION_LIMIT:
        raise CPSError(f"enumeration refused for N={N} > {ENUMERATION_LIMIT}")
    combos = list(itertools.combinations(range(N), n))
    combos = np.array(combos, dtype=np.int64).reshape(len(combos), n)
    members = np.zeros((combos.shape[0], N), dtype=bool)
    members[np.repeat(np.arange(combos.shape[0]), n), combos.ravel()] = True
    if counts is not None:
        strata, keys, cnts = _labels_and_counts(strata, counts)
        keep = np.ones(members.shape[0], dtype=bool)
        for h, nh in zip(keys, cnts):
            keep &= members[:, strata == h].sum(axis=1) == nh
        members = members[keep]
    with np.errstate(divide="ignore"):
        logw = np.where(members, np.log(p), np.log1p(-p)).sum(axis=1)
    weight = np.exp(logw - logw.max()) if logw.size else logw
    return members, weight / weight.sum()


def enumerate_cps_oracle(p, n, condition: Optional[tuple] = None) -> np.ndarray:
    """Inclusion probabilities by brute force; ``condition`` is ``(strata, counts)``."""
    strata, counts = condition if condition is not None else (None, None)
    members, probs = enumerate_samples(p, n, strata, counts)
    return probs @ members


