"""Conditioning statistics, acceptance regions and CDF-based intervals."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from condweight import engine
from condweight.designs import Design, Sample, layout
from condweight.population import Population
from condweight.rng import as_stream


class ConditioningError(ValueError):
    pass


@dataclass(frozen=True)
class StrataCounts:
    """Sample counts per stratum, (n_1(s), ..., n_H(s))."""

    by: str = "post"

    def weights(self, pop: Population) -> np.ndarray:
        labels = pop.strata(self.by)
        keys = self.keys(pop)
        return np.stack([(labels == h).astype(np.float64) for h in keys])

    def keys(self, pop: Population) -> list:
        return sorted(int(h) for h in np.unique(pop.strata(self.by)))

    def describe(self) -> dict:
        return {"kind": "strata_counts", "by": self.by}


@dataclass(frozen=True, eq=False)
class HTMean:
    """Horvitz-Thompson mean of ``variable`` over an optional post-stratum."""

    pi: np.ndarray
    variable: str = "x"
    domain: Optional[int] = None

    def weights(self, pop: Population) -> np.ndarray:
        mask = pop.domain_mask(self.domain)
        vals = pop.values(self.variable, mask)
        pi = np.asarray(self.pi, dtype=np.float64)
        if (pi[mask] <= 0).any():
            raise ConditioningError("HT mean needs pi_k > 0 on the whole domain")
        n_dom = int(mask.sum())
        row = np.zeros(pop.N)
        row[mask] = vals[mask] / pi[mask] / n_dom
        return row[None, :]

    def describe(self) -> dict:
        return {"kind": "htmean", "variable": self.variable, "domain": self.domain}


ConditioningStatistic = Union[StrataCounts, HTMean]


def evaluate(stat: ConditioningStatistic, s: Sample, pop: Population) -> np.ndarray:
    """Statistic value for one sample (same summation as the MC kernels)."""
    w = stat.weights(pop)
    pos = s.positions(pop)
    if isinstance(stat, HTMean):
        dom = pop.domain_mask(stat.domain)
        missing = [int(pop.ids[i]) for i in pos if dom[i] and not (pop.has_x if stat.variable == "x" else pop.has_y)[i]]
        if missing:
            raise ConditioningError(f"sampled units {missing} lack {stat.variable}")
    out = np.zeros(w.shape[0])
    for i in pos:
        out += w[:, i]
    return out


@dataclass(frozen=True, eq=False)
class ConditioningEvent:
    """A_phi: samples whose statistic lies in [lo, hi] (component-wise, closed)."""

    statistic: ConditioningStatistic
    lo: np.ndarray
    hi: np.ndarray
    kind: str = "interval"

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=np.float64))
        if lo.shape != hi.shape:
            raise ConditioningError("region bounds differ in dimension")
        if (lo > hi).any():
            raise ConditioningError("empty region: lower bound above upper bound")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def describe(self) -> dict:
        d = {"statistic": self.statistic.describe()}
        if self.kind == "counts":
            d["counts"] = [int(v) for v in self.lo]
        else:
            d["interval"] = [float(self.lo[0]), float(self.hi[0])] if self.lo.size == 1 else [
                [float(a), float(b)] for a, b in zip(self.lo, self.hi)
            ]
        return d


def counts_event(s: Sample, pop: Population, by: str = "post") -> ConditioningEvent:
    """A_0 = {s : n_h(s) = n_h(s0) for all h}."""
    stat = StrataCounts(by)
    c = evaluate(stat, s, pop)
    return ConditioningEvent(stat, c, c, kind="counts")


def interval_event(stat: ConditioningStatistic, lo: float, hi: float) -> ConditioningEvent:
    return ConditioningEvent(stat, [lo], [hi], kind="interval")


def always_event(stat: ConditioningStatistic, pop: Population) -> ConditioningEvent:
    q = stat.weights(pop).shape[0]
    return ConditioningEvent(stat, np.full(q, -np.inf), np.full(q, np.inf), kind="interval")


def contains(event: ConditioningEvent, value) -> bool:
    v = np.atleast_1d(np.asarray(value, dtype=np.float64))
    if v.shape != event.lo.shape:
        raise ConditioningError(f"value has dimension {v.shape}, event {event.lo.shape}")
    return bool(((v >= event.lo) & (v <= event.hi)).all())


def event_from_dict(d: dict, pi=None) -> ConditioningEvent:
    sd = d["statistic"]
    if sd["kind"] == "strata_counts":
        stat = StrataCounts(sd.get("by", "post"))
        c = np.asarray(d["counts"], dtype=np.float64)
        return ConditioningEvent(stat, c, c, kind="counts")
    if sd["kind"] == "htmean":
        if pi is None:
            raise ConditioningError("HT mean event needs the design inclusion probabilities")
        stat = HTMean(np.asarray(pi), sd.get("variable", "x"), sd.get("domain"))
        lo, hi = d["interval"]
        return interval_event(stat, lo, hi)
    raise ConditioningError(f"unknown statistic kind {sd['kind']!r}")


@dataclass(frozen=True, eq=False)
class EmpiricalCDF:
    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=np.float64).ravel())
        if v.size == 0:
            raise ConditioningError("empty CDF sample")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def K(self) -> int:
        return int(self.values.shape[0])

    def __call__(self, u):
        return np.searchsorted(self.values, u, side="right") / self.K

    def quantile(self, q: float) -> float:
        """Lowest order statistic whose CDF value is at least q."""
        # tolerance guards q*K landing a hair above an integer
        i = math.ceil(q * self.K - 1e-9) - 1
        return float(self.values[min(max(i, 0), self.K - 1)])

    def mass(self, lo: float, hi: float) -> float:
        """Empirical probability of the closed interval [lo, hi]."""
        a = np.searchsorted(self.values, lo, side="left")
        b = np.searchsorted(self.values, hi, side="right")
        return (b - a) / self.K

    def histogram(self, bins: int = 50):
        return np.histogram(self.values, bins=bins)


def estimate_cdf(
    design: Design,
    pop: Population,
    stat: ConditioningStatistic,
    K_cdf: int,
    rng_stream,
    workers: int = 1,
    chunk_size: int = engine.CHUNK_SIZE,
) -> EmpiricalCDF:
    """Empirical law of a scalar statistic over K_cdf independent draws."""
    if K_cdf < 1:
        raise ConditioningError("K_cdf must be at least 1")
    from condweight import kernels

    stream = as_stream(rng_stream)
    lay = layout(design, pop)
    w = stat.weights(pop)
    if w.shape[0] != 1:
        raise ConditioningError("CDF estimation needs a scalar statistic")
    sizes = engine.chunk_sizes(K_cdf, chunk_size)

    def run(i):
        idx, sz = engine.chunk_draws(lay, stream.child(i).generator(), sizes[i])
        return kernels.linear_stat(idx, sz, w)[:, 0]

    parts = list(engine.imap_chunks(run, range(len(sizes)), workers))
    return EmpiricalCDF(np.concatenate(parts))


def build_interval(cdf: EmpiricalCDF, observed: float, alpha: float) -> tuple:
    """[G^-1(max(G(obs) - a/2, 0)), G^-1(min(G(obs) + a/2, 1))], widened to hold obs.

    Ends are order statistics of the CDF sample. The widening only matters
    when ``observed`` lies outside the sample range.
    """
    if not 0 < alpha <= 1:
        raise ConditioningError("alpha must lie in (0, 1]")
    g = float(cdf(observed))
    lo = cdf.quantile(max(g - alpha / 2, 0.0))
    hi = cdf.quantile(min(g + alpha / 2, 1.0))
    return min(lo, float(observed)), max(hi, float(observed))
