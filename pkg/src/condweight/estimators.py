"""Horvitz-Thompson type point and variance estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from condweight.designs import SRS, Sample
from condweight.population import Population


class EstimationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Unconditional weights 1/pi_k and conditional weights 1/pi_k^A for a sample."""

    unit_ids: np.ndarray
    d: np.ndarray
    d_cond: np.ndarray
    provenance: str

    def __post_init__(self):
        if self.provenance not in ("exact-prop1", "exact-prop2", "monte-carlo"):
            raise EstimationError(f"unknown provenance {self.provenance!r}")
        if (np.asarray(self.d_cond) <= 0).any() or (np.asarray(self.d) <= 0).any():
            raise EstimationError("weights must be positive")

    @property
    def correction(self) -> np.ndarray:
        return self.d_cond / self.d


@dataclass(frozen=True)
class EstimateReport:
    estimate: float
    variance: Optional[float]
    kind: str
    provenance: str
    sample_ids: tuple = field(default=(), repr=False)
    negative_variance: bool = False

    def as_dict(self) -> dict:
        return {
            "kind": self.kind,
            "provenance": self.provenance,
            "estimate": self.estimate,
            "variance": self.variance,
            "negative_variance": self.negative_variance,
            "n": len(self.sample_ids),
        }


def _sample_terms(s: Sample, pop: Population, variable: str, domain):
    pos = s.positions(pop)
    dom = pop.domain_mask(domain)
    pos = pos[dom[pos]]
    z = pop.values(variable, _mask(pop, pos))[pos]
    return pos, z, int(dom.sum())


def _mask(pop, pos):
    m = np.zeros(pop.N, dtype=bool)
    m[pos] = True
    return m


def _scale(total: float, scale: str, n_dom: int) -> float:
    if scale == "total":
        return total
    if scale == "mean":
        if n_dom == 0:
            raise EstimationError("empty domain")
        return total / n_dom
    raise EstimationError(f"unknown scale {scale!r}")


def _weighted(s, pop, probs, variable, scale, domain, what):
    pos, z, n_dom = _sample_terms(s, pop, variable, domain)
    pk = np.asarray(probs, dtype=np.float64)[pos]
    zero = pk <= 0
    if zero.any():
        bad = pop.ids[pos[zero]].tolist()
        raise EstimationError(f"{what} is zero for sampled units {bad}")
    return _scale(math.fsum(z / pk), scale, n_dom)


def ht_estimate(s: Sample, pop: Population, pi, variable: str = "y", scale: str = "total",
                domain: Optional[int] = None) -> float:
    """sum over s (within the domain) of z_k / pi_k; means divide by N_dom."""
    return _weighted(s, pop, pi, variable, scale, domain, "inclusion probability")


def cht_estimate(s: Sample, pop: Population, cond_pi, variable: str = "y", scale: str = "total",
                 domain: Optional[int] = None) -> float:
    """HT form with conditional inclusion probabilities."""
    try:
        return _weighted(s, pop, cond_pi, variable, scale, domain, "conditional inclusion probability")
    except EstimationError as e:
        if "is zero" in str(e):
            raise EstimationError(f"{e}; the conditioning region is too narrow for these units") from None
        raise


def poststrat_probs(s: Sample, pop: Population, by: str = "post") -> np.ndarray:
    """Conditional probabilities n_h(s)/N_h of an SRS given its stratum counts."""
    labels = pop.strata(by)
    keys, inv = np.unique(labels, return_inverse=True)
    Nh = np.bincount(inv)
    nh = np.bincount(inv[s.positions(pop)], minlength=keys.size)
    return (nh / Nh)[inv]


def poststrat_estimate(s: Sample, pop: Population, variable: str = "y", scale: str = "total",
                       by: str = "post") -> float:
    """CHT under SRS given the stratum counts, summed stratum by stratum.

    Computes sum_h N_h * (sum of z over s_h) / n_h. Algebraically this is
    ``cht_estimate`` with ``poststrat_probs``, but the grouping makes the
    calibration exact in floating point: an indicator of stratum h gives
    N_h * n_h / n_h, which rounds to N_h.
    """
    pos, z, n_dom = _sample_terms(s, pop, variable, None)
    labels = pop.strata(by)
    total = []
    for h in np.unique(labels[pos]):
        sel = labels[pos] == h
        Nh = int((labels == h).sum())
        total.append(Nh * math.fsum(z[sel]) / int(sel.sum()))
    return _scale(math.fsum(total), scale, n_dom)


def ht_conditional_expectation(pop: Population, design: SRS, counts, variable: str = "y",
                               by: str = "post") -> float:
    """E(HT total | n_h(s) = counts) under SRS: sum_h sum_{U_h} y_k N n_h / (n N_h)."""
    if not isinstance(design, SRS):
        raise EstimationError("closed form only for SRS")
    labels = pop.strata(by)
    keys = sorted(int(h) for h in np.unique(labels))
    if isinstance(counts, dict):
        nh = [int(counts[h]) for h in keys]
    else:
        nh = [int(c) for c in counts]
    if len(nh) != len(keys):
        raise EstimationError("one count per stratum required")
    if sum(nh) != design.n:
        raise EstimationError(f"counts sum to {sum(nh)}, design size is {design.n}")
    vals = pop.values(variable)
    N = pop.N
    out = []
    for h, c in zip(keys, nh):
        sel = labels == h
        out.append(math.fsum(vals[sel]) * N * c / (design.n * int(sel.sum())))
    return math.fsum(out)


def mc_estimate(s: Sample, pop: Population, acc, variable: str = "y", scale: str = "total",
                domain: Optional[int] = None) -> float:
    """Conditional HT estimate with per-unit Monte Carlo probabilities M_k / M_A."""
    from condweight.montecarlo import cond_probs

    if not np.array_equal(acc.unit_ids, pop.ids):
        raise EstimationError("accumulator was built on a different population")
    pos, _, _ = _sample_terms(s, pop, variable, domain)
    unseen = acc.M_k[pos] == 0
    if unseen.any():
        bad = pop.ids[pos[unseen]].tolist()
        raise EstimationError(
            f"sampled units {bad} never appeared in an accepted replicate; "
            "increase the accepted target or widen the region"
        )
    return _weighted(s, pop, cond_probs(acc), variable, scale, domain, "MC probability")


def ht_variance(z, pi, pi_kl) -> float:
    """sum_{k,l} (1/pi_kl) (z_k/pi_k) (z_l/pi_l) (pi_kl - pi_k pi_l) over the sample.

    ``pi_kl`` is the sample's pairwise matrix with pi_k on the diagonal.
    """
    z = np.asarray(z, dtype=np.float64)
    pi = np.asarray(pi, dtype=np.float64)
    pi_kl = np.asarray(pi_kl, dtype=np.float64)
    if (pi_kl <= 0).any():
        raise EstimationError("pairwise probabilities must be positive on the sample")
    e = z / pi
    return float(np.sum((1.0 - np.outer(pi, pi) / pi_kl) * np.outer(e, e)))


def plugin_variance(s: Sample, pop: Population, pi, pi_kl, variable: str = "y",
                    scale: str = "total", domain: Optional[int] = None) -> float:
    """Variance estimator from population-indexed pi (length N) and pi_kl (N x N)."""
    pos, z, n_dom = _sample_terms(s, pop, variable, domain)
    pi = np.asarray(pi, dtype=np.float64)[pos]
    sub = np.asarray(pi_kl, dtype=np.float64)[np.ix_(pos, pos)]
    v = ht_variance(z, pi, sub)
    return v if scale == "total" else v / n_dom**2


def mc_variance(s: Sample, pop: Population, acc, variable: str = "y", scale: str = "total",
                domain: Optional[int] = None) -> float:
    """Plug-in variance of the MC estimator from pairwise counts over s.

    The value can be negative when joints are poorly estimated; it is
    returned unchanged (see :func:`mc_report` for the flag).
    """
    from condweight.montecarlo import MCError, cond_joint_probs, cond_probs

    pos, z, n_dom = _sample_terms(s, pop, variable, domain)
    try:
        sub = cond_joint_probs(acc).submatrix(pop.ids[pos])
    except MCError as e:
        raise EstimationError(f"pairs not tracked for this sample: {e}") from None
    pi = cond_probs(acc)[pos]
    v = ht_variance(z, pi, sub)
    return v if scale == "total" else v / n_dom**2


def mc_report(s: Sample, pop: Population, acc, variable: str = "y", scale: str = "total",
              domain: Optional[int] = None, with_variance: bool = True) -> EstimateReport:
    est = mc_estimate(s, pop, acc, variable, scale, domain)
    var = mc_variance(s, pop, acc, variable, scale, domain) if with_variance else None
    return EstimateReport(
        est, var, "mc", "monte-carlo", tuple(int(k) for k in s.ids),
        negative_variance=var is not None and var < 0,
    )
