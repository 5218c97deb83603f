"""End-to-end simulation studies."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.signal import find_peaks

from condweight import engine
from condweight.conditioning import (
    HTMean,
    always_event,
    build_interval,
    estimate_cdf,
    evaluate,
    interval_event,
)
from condweight.cps_exact import cps_poststrat_conditional_probs
from condweight.designs import (
    CPS,
    SRS,
    Sample,
    StratifiedSRS,
    draw_positions,
    draw_until_contains,
    inclusion_probs,
    layout,
    random_cps_p,
)
from condweight.estimators import cht_estimate, ht_estimate, mc_estimate, mc_variance, poststrat_probs
from condweight.harness.config import ExperimentConfig
from condweight.montecarlo import cond_probs, run_mc
from condweight.population import (
    Population,
    gen_outlier_population,
    gen_poststrat_population,
    gen_strata_jumper_population,
    population_stat,
)
from condweight.rng import Stream

REPLICATION_CHUNK = 256
HIST_BINS = 50


@dataclass
class Replication:
    index: int
    counts: tuple
    ht: Optional[float]
    cht: Optional[float]
    excluded: bool = False

    def closer(self, truth: float, tol: float = 0.0) -> Optional[float]:
        if self.excluded:
            return None
        a, b = abs(self.cht - truth), abs(self.ht - truth)
        if abs(a - b) <= tol:
            return 0.5
        return 1.0 if a < b else 0.0


@dataclass
class AdjustmentRun:
    """One outlier or strata-jumper run: s0, event, MC table and estimates."""

    index: int
    sample_ids: np.ndarray
    phi_obs: float
    interval: tuple
    cdf_mass: float
    K: int
    M_A: int
    unit_ids: np.ndarray
    x: np.ndarray
    has_x: np.ndarray
    pi: np.ndarray
    pi_cond: Optional[np.ndarray]
    M_k: Optional[np.ndarray]
    truth: float
    ht: float
    mc: Optional[float]
    mc_var: Optional[float]
    focus_id: int
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    adjusted: bool = True

    @property
    def acceptance_rate(self) -> float:
        return self.M_A / self.K if self.K else float("nan")

    @property
    def pi_focus(self) -> Optional[float]:
        if self.pi_cond is None:
            return None
        return float(self.pi_cond[np.flatnonzero(self.unit_ids == self.focus_id)[0]])

    @property
    def mc_closer(self) -> Optional[bool]:
        if self.mc is None:
            return None
        return abs(self.mc - self.truth) < abs(self.ht - self.truth)


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    truth: float
    replications: list = field(default_factory=list)
    runs: list = field(default_factory=list)
    event: Optional[dict] = None
    runtime: float = 0.0

    @property
    def included(self) -> list:
        return [r for r in self.replications if not r.excluded]

    @property
    def n_excluded(self) -> int:
        return sum(r.excluded for r in self.replications)

    @property
    def closer_fraction(self) -> Optional[float]:
        tol = self.config.get("tie_tolerance", 0.0)
        vals = [r.closer(self.truth, tol) for r in self.included]
        return float(np.mean(vals)) if vals else None

    @property
    def ties(self) -> int:
        tol = self.config.get("tie_tolerance", 0.0)
        return sum(r.closer(self.truth, tol) == 0.5 for r in self.included)

    def empirical_variances(self) -> tuple:
        inc = self.included
        if len(inc) < 2:
            return None, None
        ht = np.array([r.ht for r in inc])
        cht = np.array([r.cht for r in inc])
        return float(np.var(ht, ddof=1)), float(np.var(cht, ddof=1))

    def summary(self) -> dict:
        out = {"kind": self.kind, "truth": self.truth}
        if self.replications or self.kind.startswith("poststrat"):
            v_ht, v_cht = self.empirical_variances()
            out.update(
                replications=len(self.replications),
                excluded=self.n_excluded,
                ties=self.ties,
                closer_fraction=self.closer_fraction,
                var_ht=v_ht,
                var_cht=v_cht,
            )
        if self.runs:
            adj = [r for r in self.runs if r.adjusted]
            out.update(
                runs=len(self.runs),
                mc_closer_runs=sum(bool(r.mc_closer) for r in adj),
                pi_focus=[r.pi_focus for r in self.runs],
                acceptance_rate=[r.acceptance_rate for r in self.runs],
                ht=[r.ht for r in self.runs],
                mc=[r.mc for r in self.runs],
                bimodal=[is_bimodal(r.hist_counts) for r in self.runs],
                non_monotonic=[
                    None if r.pi_cond is None else weight_correction_non_monotonic(r) for r in self.runs
                ],
            )
        if self.event is not None:
            out["event"] = self.event
        return out


def is_bimodal(counts) -> bool:
    """At least two histogram peaks that stand out of binomial noise.

    A peak counts when its prominence exceeds both 4 sqrt(height) and half a
    percent of the tallest bin.
    """
    h = np.concatenate([[0], np.asarray(counts, dtype=np.float64), [0]])
    if h.max() <= 0:
        return False
    peaks, props = find_peaks(h, prominence=0)
    keep = props["prominences"] >= np.maximum(4 * np.sqrt(h[peaks]), 0.005 * h.max())
    return int(keep.sum()) >= 2


def weight_curve(run: AdjustmentRun):
    """(x, pi / pi_cond) for units with x and a positive conditional probability, sorted by x."""
    ok = run.has_x & (run.pi_cond > 0)
    order = np.argsort(run.x[ok], kind="stable")
    return run.x[ok][order], (run.pi[ok] / run.pi_cond[ok])[order], run.unit_ids[ok][order]


def weight_correction_non_monotonic(run: AdjustmentRun) -> bool:
    _, ratio, _ = weight_curve(run)
    slope = np.sign(np.diff(ratio))
    slope = slope[slope != 0]
    return bool(slope.size and (slope > 0).any() and (slope < 0).any())


def _pop_seed(cfg: ExperimentConfig, stream: Stream):
    return cfg.population_seed if cfg.population_seed is not None else stream.child("population")


def _replicate(cfg, pop, design, stream, per_sample):
    """Draw ``cfg.replications`` samples in chunks and map ``per_sample`` over them."""
    lay = layout(design, pop)
    sizes = engine.chunk_sizes(cfg.replications, REPLICATION_CHUNK)
    starts = np.concatenate([[0], np.cumsum(sizes)]).astype(int)

    def chunk(i):
        idx, sz = engine.chunk_draws(lay, stream.child(i).generator(), sizes[i])
        return [
            per_sample(starts[i] + j, Sample(pop.ids[idx[j, : sz[j]]], design)) for j in range(sizes[i])
        ]

    out = []
    for part in engine.imap_chunks(chunk, range(len(sizes)), cfg.workers):
        out.extend(part)
    return out


def _counts(pop, s):
    labels = pop.strata("post")
    keys = np.unique(labels)
    sl = labels[s.positions(pop)]
    return tuple(int((sl == h).sum()) for h in keys)


def _poststrat_pop(cfg, master):
    pc = cfg.population
    return gen_poststrat_population(pc["N"], tuple(pc["y_range"]), tuple(pc["cutpoints"]), _pop_seed(cfg, master))


def run_poststrat_srs(cfg: ExperimentConfig) -> ExperimentReport:
    """HT mean vs post-stratified mean over repeated SRS draws."""
    _expect(cfg, "poststrat-srs")
    t0 = time.perf_counter()
    master = Stream(cfg.seed)
    pop = _poststrat_pop(cfg, master)
    design = SRS(int(cfg.design["n"]))
    pi = inclusion_probs(design, pop)
    truth = population_stat(pop, "mean_y")

    def one(i, s):
        c = _counts(pop, s)
        ht = ht_estimate(s, pop, pi, "y", "mean")
        if min(c) == 0:
            return Replication(i, c, ht, None, excluded=True)
        return Replication(i, c, ht, cht_estimate(s, pop, poststrat_probs(s, pop), "y", "mean"))

    reps = _replicate(cfg, pop, design, master.child("replications"), one)
    return ExperimentReport(cfg.kind, cfg.to_dict(), truth, reps, runtime=time.perf_counter() - t0)


def run_poststrat_cps(cfg: ExperimentConfig) -> ExperimentReport:
    """Same comparison under conditional Poisson sampling with exact conditional weights."""
    _expect(cfg, "poststrat-cps")
    t0 = time.perf_counter()
    master = Stream(cfg.seed)
    pop = _poststrat_pop(cfg, master)
    n = int(cfg.design["n"])
    lo, hi = cfg.design["p_range"]
    p = random_cps_p(pop.N, n, lo, hi, master.child("p"))
    design = CPS(n, p)
    pi = inclusion_probs(design, pop)
    truth = population_stat(pop, "mean_y")
    strata = pop.strata("post")

    def one(i, s):
        c = _counts(pop, s)
        ht = ht_estimate(s, pop, pi, "y", "mean")
        if min(c) == 0:
            return Replication(i, c, ht, None, excluded=True)
        cond = cps_poststrat_conditional_probs(p, strata, list(c))
        return Replication(i, c, ht, cht_estimate(s, pop, cond, "y", "mean"))

    reps = _replicate(cfg, pop, design, master.child("replications"), one)
    return ExperimentReport(cfg.kind, cfg.to_dict(), truth, reps, runtime=time.perf_counter() - t0)


def _adjust(cfg, pop, design, s0, stat, focus_id, domain, run_stream, index, pair_units):
    """CDF set, interval event, MC set and estimates for one realised sample."""
    budget = cfg.budget()
    pi = inclusion_probs(design, pop)
    obs = float(evaluate(stat, s0, pop)[0])
    cdf = estimate_cdf(
        design, pop, stat, budget["cdf_draws"], run_stream.child("cdf"), cfg.workers, cfg.chunk_size
    )
    counts, edges = cdf.histogram(HIST_BINS)
    truth = population_stat(pop, "mean_y", domain)
    ht = ht_estimate(s0, pop, pi, "y", "mean", domain)
    if cfg.event == "none":
        event = always_event(stat, pop)
        lo, hi = -np.inf, np.inf
    else:
        lo, hi = build_interval(cdf, obs, cfg.alpha)
        event = interval_event(stat, lo, hi)
    common = dict(
        index=index, sample_ids=s0.ids, phi_obs=obs, interval=(lo, hi), cdf_mass=float(cdf.mass(lo, hi)),
        unit_ids=pop.ids, x=pop.x, has_x=pop.has_x, pi=pi, truth=truth, ht=ht, focus_id=focus_id,
        hist_counts=counts, hist_edges=edges,
    )
    if focus_id not in s0:
        return AdjustmentRun(K=0, M_A=0, pi_cond=None, M_k=None, mc=None, mc_var=None, adjusted=False, **common)
    acc = run_mc(
        design, pop, event,
        target_accepted=budget["mc_target_accepted"], target_draws=budget["mc_draws"],
        pair_units=pair_units, rng_stream=run_stream.child("mc"),
        workers=cfg.workers, chunk_size=cfg.chunk_size,
    )
    mc = mc_estimate(s0, pop, acc, "y", "mean", domain)
    try:
        var = mc_variance(s0, pop, acc, "y", "mean", domain)
    except ValueError:
        var = None
    return AdjustmentRun(
        K=acc.K, M_A=acc.M_A, pi_cond=cond_probs(acc), M_k=acc.M_k.copy(), mc=mc, mc_var=var, **common
    )


def run_outlier(cfg: ExperimentConfig) -> ExperimentReport:
    """SRS with one extreme x; condition on the HT mean of x around its observed value."""
    _expect(cfg, "outlier")
    t0 = time.perf_counter()
    pc = cfg.population
    master = Stream(cfg.seed)
    runs = []
    for r in range(cfg.runs):
        rs = master.child("run", r)
        pop = gen_outlier_population(
            pc["N"], pc["x_mean"], pc["x_sd"], pc["outlier_id"], pc["outlier_x"], tuple(pc["model"]),
            _pop_seed(cfg, rs),
        )
        design = SRS(int(cfg.design["n"]))
        s0 = draw_until_contains(design, pop, pc["outlier_id"], rs.child("s0"))
        stat = HTMean(inclusion_probs(design, pop), "x")
        runs.append(_adjust(cfg, pop, design, s0, stat, pc["outlier_id"], None, rs, r, s0.ids))
    truth = runs[0].truth if runs else float("nan")
    return ExperimentReport(
        cfg.kind, cfg.to_dict(), truth, runs=runs, event=_event_summary(runs), runtime=time.perf_counter() - t0
    )


def _draw_without(design, pop, k, stream, cap=100_000):
    lay = layout(design, pop)
    gen = stream.generator()
    pk = pop.position(k)
    for _ in range(cap):
        pos = draw_positions(lay, gen)
        if not (pos == pk).any():
            return Sample(pop.ids[pos], design)
    raise RuntimeError(f"unit {k} drawn in all {cap} attempts")


def run_strata_jumper(cfg: ExperimentConfig) -> ExperimentReport:
    """Stratified SRS where one small-stratum unit turns out to be large."""
    _expect(cfg, "strata-jumper")
    t0 = time.perf_counter()
    pc = cfg.population
    master = Stream(cfg.seed)
    n1, n2 = cfg.design["allocation"]
    runs = []
    for r in range(cfg.runs):
        rs = master.child("run", r)
        pop = gen_strata_jumper_population(
            pc["N1"], pc["N2"], pc["jumper_id"], pc["x_mean"], pc["x_sd"], tuple(pc["model"]),
            _pop_seed(cfg, rs),
        )
        design = StratifiedSRS({1: int(n1), 2: int(n2)}, by="design")
        if cfg.jumper_in_sample:
            s0 = draw_until_contains(design, pop, pc["jumper_id"], rs.child("s0"))
        else:
            s0 = _draw_without(design, pop, pc["jumper_id"], rs.child("s0"))
        stat = HTMean(inclusion_probs(design, pop), "x", domain=2)
        dom = pop.domain_mask(2)
        pairs = [k for k in s0.ids if dom[pop.position(k)]]
        runs.append(_adjust(cfg, pop, design, s0, stat, pc["jumper_id"], 2, rs, r, pairs))
    truth = runs[0].truth if runs else float("nan")
    return ExperimentReport(
        cfg.kind, cfg.to_dict(), truth, runs=runs, event=_event_summary(runs), runtime=time.perf_counter() - t0
    )


def _event_summary(runs):
    if not runs:
        return None
    r = runs[0]
    return {
        "statistic": "htmean_x",
        "observed": r.phi_obs,
        "interval": [float(r.interval[0]), float(r.interval[1])],
        "cdf_mass": float(r.cdf_mass),
    }


def _expect(cfg, kind):
    if cfg.kind != kind:
        raise ValueError(f"config kind {cfg.kind!r} does not match experiment {kind!r}")


RUNNERS = {
    "poststrat-srs": run_poststrat_srs,
    "poststrat-cps": run_poststrat_cps,
    "outlier": run_outlier,
    "strata-jumper": run_strata_jumper,
}


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    return RUNNERS[cfg.kind](cfg)
