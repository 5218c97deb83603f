import math
from statistics import NormalDist

import numpy as np
import pytest

from condweight.conditioning import StrataCounts, always_event, counts_event
from condweight.cps_exact import enumerate_samples
from condweight.designs import CPS, SRS, Sample, StratifiedCPS, inclusion_probs
from condweight.montecarlo import (
    LowAcceptance,
    MCAccumulator,
    MCError,
    ci_halfwidth,
    cond_joint_probs,
    cond_probs,
    expected_draws,
    merge,
    relative_bias_bound,
    relative_bias_bound_mills,
    relative_bias_bound_sum,
    run_chunks,
    run_mc,
)
from condweight.population import from_arrays
from condweight.rng import Stream


def pop_n(N, strata):
    return from_arrays(np.arange(1, N + 1), x=np.arange(1.0, N + 1), y=np.ones(N), stratum_post=strata,
                       stratum_design=strata)


def test_always_true_event():
    pop = pop_n(10, [1] * 10)
    d = SRS(3)
    acc = run_mc(d, pop, always_event(StrataCounts(), pop), target_draws=10_000, rng_stream=1)
    assert acc.K == acc.M_A == 10_000
    pi = inclusion_probs(d, pop)
    assert np.all(np.abs(cond_probs(acc) - pi) <= 4 * np.sqrt(pi * (1 - pi) / acc.K))
    acc.check()


def test_target_accepted_minimal_on_chunk_grid():
    pop = pop_n(12, [1] * 6 + [2] * 6)
    d = SRS(4)
    ev = counts_event(Sample([1, 7, 8, 9]), pop)
    acc = run_mc(d, pop, ev, target_accepted=3000, rng_stream=2, chunk_size=1000)
    assert acc.M_A >= 3000
    prefix = run_chunks(d, pop, ev, range(len(acc.chunks) - 1), rng_stream=2, chunk_size=1000)
    assert prefix.M_A < 3000
    assert acc.K == 1000 * len(acc.chunks)


def test_workers_do_not_change_result():
    pop = pop_n(15, [1] * 7 + [2] * 8)
    d = CPS(5, np.linspace(0.1, 0.6, 15))
    ev = counts_event(Sample([1, 2, 8, 9, 10]), pop)
    kw = dict(target_accepted=2000, pair_units=[1, 2, 8, 9, 10], rng_stream=Stream(9).child("mc"), chunk_size=512)
    a = run_mc(d, pop, ev, workers=1, **kw)
    b = run_mc(d, pop, ev, workers=8, **kw)
    assert a.same_counts(b) and a.identity == b.identity


def test_merge_rules():
    pop = pop_n(10, [1] * 5 + [2] * 5)
    d = SRS(4)
    ev = counts_event(Sample([1, 2, 6, 7]), pop)
    whole = run_chunks(d, pop, ev, range(10), pair_units=[1, 2], rng_stream=3, chunk_size=1000)
    parts = [run_chunks(d, pop, ev, [i], pair_units=[1, 2], rng_stream=3, chunk_size=1000) for i in range(10)]
    acc = parts[0]
    for p in parts[1:]:
        acc = merge(acc, p)
    assert acc.same_counts(whole)
    one = run_mc(d, pop, ev, target_draws=10_000, pair_units=[1, 2], rng_stream=3, chunk_size=1000)
    assert one.same_counts(whole)
    assert merge(parts[0], parts[1]).same_counts(merge(parts[1], parts[0]))
    assert merge(parts[0], parts[0].empty_like()).same_counts(parts[0])
    with pytest.raises(MCError):
        merge(parts[0], parts[0])
    other = run_chunks(d, pop, ev, [11], rng_stream=4, chunk_size=1000)
    with pytest.raises(MCError):
        merge(parts[0], other)


def test_prop1_counts_event_under_srs():
    strata = [1] * 8 + [2] * 12
    pop = pop_n(20, strata)
    s0 = Sample([1, 2, 3, 9, 10])
    ev = counts_event(s0, pop)
    acc = run_mc(SRS(5), pop, ev, target_accepted=10_000, rng_stream=5)
    target = np.where(np.array(strata) == 1, 3 / 8, 2 / 12)
    pc = cond_probs(acc)
    assert np.all(np.abs(pc - target) <= 4 * np.sqrt(target * (1 - target) / acc.M_A))


def test_cond_probs_requires_hits():
    acc = MCAccumulator(np.arange(1, 4), [])
    with pytest.raises(MCError):
        cond_probs(acc)
    full = MCAccumulator(np.arange(1, 3), [], K=5, M_A=5, M_k=np.array([5, 0]))
    assert list(cond_probs(full)) == [1.0, 0.0]


def test_joint_probs_srs():
    pop = pop_n(4, [1] * 4)
    acc = run_mc(SRS(2), pop, always_event(StrataCounts(), pop), target_draws=20_000, pair_units=[1, 2, 3, 4],
                 rng_stream=6)
    jp = cond_joint_probs(acc)
    pc = cond_probs(acc)
    for k in range(1, 5):
        assert jp[k, k] == pc[k - 1]
        for l in range(k + 1, 5):
            assert jp[k, l] == jp[l, k]
            assert abs(jp[k, l] - 1 / 6) <= 4 * math.sqrt(1 / 6 * 5 / 6 / acc.M_A)
    small = run_mc(SRS(2), pop, always_event(StrataCounts(), pop), target_draws=10, pair_units=[1, 2],
                   rng_stream=6)
    with pytest.raises(MCError):
        cond_joint_probs(small)[1, 3]


def test_joint_probs_cps_enumerated():
    strata = np.array([1, 1, 1, 2, 2, 2])
    pop = pop_n(6, strata)
    p = np.array([0.3, 0.6, 0.5, 0.2, 0.7, 0.4])
    s0 = Sample([1, 2, 4])
    ev = counts_event(s0, pop)
    acc = run_mc(CPS(3, p), pop, ev, target_accepted=10_000, pair_units=pop.ids, rng_stream=7)
    members, probs = enumerate_samples(p, 3, strata, [2, 1])
    exact = (members.T * probs) @ members
    est = cond_joint_probs(acc).matrix
    se = np.sqrt(exact * (1 - exact) / acc.M_A)
    assert np.all(np.abs(est - exact) <= 4 * se + 1e-12)


def test_low_acceptance_aborts():
    pop = pop_n(30, [1] * 15 + [2] * 15)
    ev = counts_event(Sample(np.arange(1, 11)), pop)  # all ten from stratum 1
    with pytest.raises(LowAcceptance):
        run_mc(SRS(10), pop, ev, target_accepted=1000, rng_stream=8, floor=1e-3, probe_draws=50_000,
               chunk_size=10_000)


def test_stratified_cps_layout_runs():
    pop = pop_n(8, [1] * 4 + [2] * 4)
    d = StratifiedCPS({1: 2, 2: 2}, np.linspace(0.2, 0.8, 8))
    acc = run_mc(d, pop, always_event(StrataCounts(), pop), target_draws=5000, rng_stream=1)
    assert np.allclose(cond_probs(acc), inclusion_probs(d, pop), atol=0.05)


def test_ci_halfwidth():
    assert ci_halfwidth(49782, 0.05) == pytest.approx(0.004392198154415072, rel=1e-12)
    assert ci_halfwidth(4 * 49782, 0.05) == pytest.approx(ci_halfwidth(49782, 0.05) / 2, rel=1e-12)
    z = NormalDist().inv_cdf(0.84)
    assert ci_halfwidth(1000, 0.32) == pytest.approx(z * math.sqrt(1 / 4000), rel=1e-12)
    assert z == pytest.approx(0.99, abs=0.005)


def test_relative_bias_bound_forms():
    # direct 40-digit evaluations of the three expressions
    assert relative_bias_bound(10**6, 0.01, 0.2, 20) == pytest.approx(0.99999997796753286, abs=1e-15)
    assert relative_bias_bound_mills(10**6, 0.01, 0.2, 20) == pytest.approx(0.99960149407776374, abs=1e-13)
    s = relative_bias_bound_sum(10**6, 0.01, np.full(20, 0.2))
    assert s == pytest.approx(0.99961930481795447, abs=1e-13)
    # the standard Mills ratio keeps the closed form below the sum form; the printed exponent does not
    assert relative_bias_bound_mills(10**6, 0.01, 0.2, 20) <= s
    assert relative_bias_bound(10**6, 0.01, 0.2, 20) > s


def test_relative_bias_bound_limits():
    assert relative_bias_bound(0, 0.01, 0.2, 20) == 0.0
    assert relative_bias_bound(10, 0.01, 0.2, 20) == 0.0
    assert relative_bias_bound(10**12, 0.01, 0.2, 20) == 1.0


def test_expected_draws():
    assert expected_draws(0.05, 10**6) == pytest.approx(2e7)
    assert expected_draws(1.0, 50) == 50


def test_negative_binomial_mean():
    pop = pop_n(10, [1] * 5 + [2] * 5)
    ev = counts_event(Sample([1, 2, 6]), pop)  # counts (2, 1)
    # P(counts = (2, 1)) under SRS(3) of 10 = C(5,2) C(5,1) / C(10,3)
    p = 10 * 5 / 120
    Ks = []
    for r in range(200):
        acc = run_mc(SRS(3), pop, ev, target_accepted=50, rng_stream=Stream(r), chunk_size=1)
        Ks.append(acc.K)
    assert abs(np.mean(Ks) - expected_draws(p, 50)) < 0.15 * expected_draws(p, 50)
