"""Sampling designs, sample draws and first-order inclusion probabilities.

Every design reduces to one of two kernel layouts:

* ``fixed`` -- stratified simple random sampling (plain SRS is one stratum).
  A draw consumes one uniform per selected unit (partial Fisher-Yates).
* ``poisson`` -- independent Bernoulli attempts, optionally rejected unless
  per-stratum sizes hit their targets (CPS and stratified CPS). An attempt
  consumes one uniform per population unit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from condweight import kernels
from condweight.population import Population
from condweight.rng import as_generator


class DesignError(ValueError):
    pass


class RejectionCapExceeded(RuntimeError):
    def __init__(self, attempts, p_accept):
        self.attempts = attempts
        self.p_accept = p_accept
        super().__init__(
            f"rejective sampler gave up after {attempts} attempts; "
            f"P(size constraint) = {p_accept:.3g}"
        )


@dataclass(frozen=True)
class SRS:
    n: int


@dataclass(frozen=True)
class StratifiedSRS:
    allocation: dict
    by: str = "design"


@dataclass(frozen=True, eq=False)
class Poisson:
    p: np.ndarray


@dataclass(frozen=True, eq=False)
class CPS:
    n: int
    p: np.ndarray


@dataclass(frozen=True, eq=False)
class StratifiedCPS:
    sizes: dict
    p: np.ndarray
    by: str = "design"


Design = Union[SRS, StratifiedSRS, Poisson, CPS, StratifiedCPS]


@dataclass(frozen=True, eq=False)
class Sample:
    ids: np.ndarray
    design: Optional[Design] = field(default=None, repr=False)

    def __post_init__(self):
        ids = np.unique(np.asarray(self.ids, dtype=np.int64))
        ids.setflags(write=False)
        object.__setattr__(self, "ids", ids)

    def __len__(self):
        return int(self.ids.shape[0])

    def __contains__(self, k):
        i = np.searchsorted(self.ids, k)
        return bool(i < self.ids.shape[0] and self.ids[i] == k)

    def positions(self, pop: Population) -> np.ndarray:
        return pop.positions(self.ids)


@dataclass(frozen=True, eq=False)
class Layout:
    mode: str
    width: int
    order: Optional[np.ndarray] = None
    offsets: Optional[np.ndarray] = None
    alloc: Optional[np.ndarray] = None
    p: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    required: Optional[np.ndarray] = None
    n_max: int = 0


def describe(design: Design) -> dict:
    """JSON-friendly description, used for files and accumulator identity."""
    if isinstance(design, SRS):
        return {"kind": "srs", "n": int(design.n)}
    if isinstance(design, StratifiedSRS):
        return {
            "kind": "stratified_srs",
            "allocation": {str(k): int(v) for k, v in sorted(design.allocation.items())},
            "by": design.by,
        }
    if isinstance(design, Poisson):
        return {"kind": "poisson", "p": [float(v) for v in design.p]}
    if isinstance(design, CPS):
        return {"kind": "cps", "n": int(design.n), "p": [float(v) for v in design.p]}
    if isinstance(design, StratifiedCPS):
        return {
            "kind": "stratified_cps",
            "sizes": {str(k): int(v) for k, v in sorted(design.sizes.items())},
            "p": [float(v) for v in design.p],
            "by": design.by,
        }
    raise DesignError(f"unknown design {design!r}")


def from_description(d: dict) -> Design:
    kind = d.get("kind")
    if kind == "srs":
        return SRS(int(d["n"]))
    if kind == "stratified_srs":
        return StratifiedSRS({int(k): int(v) for k, v in d["allocation"].items()}, d.get("by", "design"))
    if kind == "poisson":
        return Poisson(np.asarray(d["p"], dtype=np.float64))
    if kind == "cps":
        return CPS(int(d["n"]), np.asarray(d["p"], dtype=np.float64))
    if kind == "stratified_cps":
        return StratifiedCPS(
            {int(k): int(v) for k, v in d["sizes"].items()},
            np.asarray(d["p"], dtype=np.float64),
            d.get("by", "design"),
        )
    raise DesignError(f"unknown design kind {kind!r}")


def _check_p(p, N):
    p = np.asarray(p, dtype=np.float64)
    if p.shape != (N,):
        raise DesignError(f"p has length {p.shape[0]}, population has {N} units")
    if not ((p > 0) & (p <= 1)).all():
        raise DesignError("each p_k must lie in (0, 1]")
    return p


def _stratum_index(pop: Population, by: str, keys):
    labels = pop.strata(by)
    keys = sorted(int(k) for k in keys)
    present = sorted(set(int(v) for v in np.unique(labels)))
    if set(present) - set(keys):
        raise DesignError(f"no allocation given for strata {sorted(set(present) - set(keys))}")
    lookup = {h: i for i, h in enumerate(keys)}
    return keys, np.array([lookup[int(v)] for v in labels], dtype=np.int64)


def validate(design: Design, pop: Population) -> None:
    N = pop.N
    if isinstance(design, SRS):
        if not 0 < design.n <= N:
            raise DesignError(f"SRS needs 0 < n <= N, got n={design.n}, N={N}")
    elif isinstance(design, StratifiedSRS):
        keys, lab = _stratum_index(pop, design.by, design.allocation)
        sizes = np.bincount(lab, minlength=len(keys))
        for i, h in enumerate(keys):
            nh = design.allocation[h]
            if not 0 < nh <= sizes[i]:
                raise DesignError(f"stratum {h}: allocation {nh} not in 1..{sizes[i]}")
    elif isinstance(design, Poisson):
        _check_p(design.p, N)
    elif isinstance(design, CPS):
        p = _check_p(design.p, N)
        forced = int((p == 1).sum())
        if not forced <= design.n <= N:
            raise DesignError(f"CPS needs #{{p=1}} <= n <= N, got n={design.n}")
    elif isinstance(design, StratifiedCPS):
        p = _check_p(design.p, N)
        keys, lab = _stratum_index(pop, design.by, design.sizes)
        for i, h in enumerate(keys):
            sel = lab == i
            nh = design.sizes[h]
            forced = int((p[sel] == 1).sum())
            if not (0 < nh <= sel.sum() and forced <= nh):
                raise DesignError(f"stratum {h}: size {nh} invalid")
    else:
        raise DesignError(f"unknown design {design!r}")


def layout(design: Design, pop: Population) -> Layout:
    validate(design, pop)
    N = pop.N
    if isinstance(design, SRS):
        return Layout(
            "fixed",
            design.n,
            order=np.arange(N, dtype=np.int64),
            offsets=np.array([0, N], dtype=np.int64),
            alloc=np.array([design.n], dtype=np.int64),
        )
    if isinstance(design, StratifiedSRS):
        keys, lab = _stratum_index(pop, design.by, design.allocation)
        order = np.argsort(lab, kind="stable").astype(np.int64)
        sizes = np.bincount(lab, minlength=len(keys))
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        alloc = np.array([design.allocation[h] for h in keys], dtype=np.int64)
        return Layout("fixed", int(alloc.sum()), order=order, offsets=offsets, alloc=alloc)
    p = np.asarray(design.p, dtype=np.float64)
    if isinstance(design, Poisson):
        return Layout(
            "poisson", N, p=p, labels=np.zeros(N, np.int64), required=np.array([-1]), n_max=N
        )
    if isinstance(design, CPS):
        return Layout(
            "poisson",
            N,
            p=p,
            labels=np.zeros(N, np.int64),
            required=np.array([design.n], dtype=np.int64),
            n_max=design.n,
        )
    keys, lab = _stratum_index(pop, design.by, design.sizes)
    required = np.array([design.sizes[h] for h in keys], dtype=np.int64)
    return Layout("poisson", N, p=p, labels=lab, required=required, n_max=int(required.sum()))


def poisson_binomial_pmf(p) -> np.ndarray:
    """Exact law of the number of successes of independent Bernoulli(p_k)."""
    p = np.asarray(p, dtype=np.float64)
    if ((p < 0) | (p > 1)).any():
        raise DesignError("probabilities must lie in [0, 1]")
    return kernels.pb_pmf(p)


def _cps_probs(p, n):
    from condweight.cps_exact import cps_inclusion_probs

    pi = np.ones_like(p)
    free = p < 1
    pi[free] = cps_inclusion_probs(p[free], n - int((~free).sum()))
    return pi


def inclusion_probs(design: Design, pop: Population) -> np.ndarray:
    validate(design, pop)
    N = pop.N
    if isinstance(design, SRS):
        return np.full(N, design.n / N)
    if isinstance(design, StratifiedSRS):
        keys, lab = _stratum_index(pop, design.by, design.allocation)
        sizes = np.bincount(lab, minlength=len(keys))
        alloc = np.array([design.allocation[h] for h in keys])
        return (alloc / sizes)[lab]
    p = np.asarray(design.p, dtype=np.float64)
    if isinstance(design, Poisson):
        return p.copy()
    if isinstance(design, CPS):
        return _cps_probs(p, design.n)
    keys, lab = _stratum_index(pop, design.by, design.sizes)
    pi = np.empty(N)
    for i, h in enumerate(keys):
        sel = lab == i
        pi[sel] = _cps_probs(p[sel], design.sizes[h])
    return pi


def acceptance_probability(design: Design, pop: Population) -> float:
    """P(a Poisson attempt meets the size constraint), 1 for fixed layouts."""
    lay = layout(design, pop)
    if lay.mode == "fixed" or (lay.required < 0).all():
        return 1.0
    out = 1.0
    for i, r in enumerate(lay.required):
        if r >= 0:
            out *= float(poisson_binomial_pmf(lay.p[lay.labels == i])[r])
    return out


ATTEMPT_CAP = 10_000_000
_ATTEMPT_BLOCK = 64


def draw_positions(lay: Layout, gen: np.random.Generator, cap: int = ATTEMPT_CAP) -> np.ndarray:
    if lay.mode == "fixed":
        u = gen.random((1, lay.width))
        return kernels.decode_fixed(u, lay.order, lay.offsets, lay.alloc)[0]
    attempts = 0
    while attempts < cap:
        b = min(_ATTEMPT_BLOCK, cap - attempts)
        u = gen.random((b, lay.width))
        idx, sizes, used = kernels.decode_poisson(u, lay.p, lay.labels, lay.required, lay.n_max, 1)
        attempts += used
        if idx.shape[0]:
            return idx[0, : sizes[0]]
    return None


def draw(design: Design, pop: Population, rng, cap: int = ATTEMPT_CAP) -> Sample:
    """One sample from the design; ``rng`` is a Generator, Stream or seed."""
    lay = layout(design, pop)
    pos = draw_positions(lay, as_generator(rng), cap)
    if pos is None:
        raise RejectionCapExceeded(cap, acceptance_probability(design, pop))
    return Sample(pop.ids[pos], design)


class DrawCapExceeded(RuntimeError):
    def __init__(self, k, attempts):
        self.attempts = attempts
        super().__init__(f"unit {k} not drawn in {attempts} attempts")


def draw_until_contains(design: Design, pop: Population, k: int, rng, cap: int = 100_000) -> Sample:
    """Redraw until unit ``k`` is selected: the design law given k in s."""
    pos_k = pop.position(k)
    gen = as_generator(rng)
    lay = layout(design, pop)
    for _ in range(cap):
        pos = draw_positions(lay, gen)
        if pos is None:
            raise RejectionCapExceeded(ATTEMPT_CAP, acceptance_probability(design, pop))
        if (pos == pos_k).any():
            return Sample(pop.ids[pos], design)
    raise DrawCapExceeded(k, cap)


def random_cps_p(N: int, n: int, lo: float, hi: float, rng, tol: float = 1e-12) -> np.ndarray:
    """Random p in [lo, hi] with sum n: uniform draws, then rescale and clip until both hold."""
    if not lo * N <= n <= hi * N:
        raise DesignError("target sum unreachable inside the box")
    gen = as_generator(rng)
    p = lo + (hi - lo) * gen.random(N)
    for _ in range(1000):
        gap = n - p.sum()
        if abs(gap) <= tol:
            break
        free = p < hi if gap > 0 else p > lo
        # additive shift of the unclipped units, then clip back into the box
        p[free] += gap / max(int(free.sum()), 1)
        np.clip(p, lo, hi, out=p)
    else:  # pragma: no cover
        raise DesignError("box projection did not converge")
    return p
