import itertools

import numpy as np
import pytest

from condweight.designs import (
    CPS,
    SRS,
    DesignError,
    DrawCapExceeded,
    Poisson,
    RejectionCapExceeded,
    StratifiedCPS,
    StratifiedSRS,
    acceptance_probability,
    describe,
    draw,
    draw_until_contains,
    from_description,
    inclusion_probs,
    layout,
    poisson_binomial_pmf,
    random_cps_p,
)
from condweight.engine import chunk_draws
from condweight.population import from_arrays, gen_strata_jumper_population
from condweight.rng import Stream


def flat_pop(N, strata=None):
    return from_arrays(np.arange(1, N + 1), x=np.arange(N, dtype=float), y=np.ones(N), stratum_design=strata,
                       stratum_post=strata)


def frequencies(design, pop, R, seed=0):
    lay = layout(design, pop)
    idx, sizes = chunk_draws(lay, Stream(seed).generator(), R)
    counts = np.zeros(pop.N)
    for j in range(idx.shape[1]):
        live = j < sizes
        np.add.at(counts, idx[live, j], 1)
    return counts / R, idx, sizes


def test_srs_probs():
    assert np.all(inclusion_probs(SRS(100), flat_pop(500)) == 0.2)


def test_poisson_probs():
    pop = flat_pop(5)
    assert np.all(inclusion_probs(Poisson(np.full(5, 0.3)), pop) == 0.3)


def test_cps_two_units():
    pop = flat_pop(2)
    assert np.allclose(inclusion_probs(CPS(1, np.array([0.5, 0.25])), pop), [0.75, 0.25], atol=1e-15)


def test_cps_forced_unit():
    pop = flat_pop(4)
    pi = inclusion_probs(CPS(2, np.array([1.0, 0.5, 0.5, 0.5])), pop)
    assert pi[0] == 1.0 and np.allclose(pi[1:], 1 / 3)


def test_stratified_srs_probs():
    pop = flat_pop(10, [1] * 4 + [2] * 6)
    pi = inclusion_probs(StratifiedSRS({1: 1, 2: 3}), pop)
    assert np.allclose(pi, [0.25] * 4 + [0.5] * 6)


@pytest.mark.parametrize(
    "design",
    [
        SRS(7),
        StratifiedSRS({1: 2, 2: 3}),
        Poisson(np.linspace(0.1, 0.9, 12)),
        CPS(5, np.linspace(0.1, 0.8, 12)),
        StratifiedCPS({1: 2, 2: 3}, np.linspace(0.2, 0.7, 12)),
    ],
    ids=["srs", "strat-srs", "poisson", "cps", "strat-cps"],
)
def test_empirical_frequencies_match(design):
    pop = flat_pop(12, [1] * 5 + [2] * 7)
    pi = inclusion_probs(design, pop)
    if not isinstance(design, Poisson):
        assert pi.sum() == pytest.approx(sum(describe(design).get("allocation", describe(design).get(
            "sizes", {"_": describe(design).get("n")})).values()), abs=1e-9)
    R = 100_000
    freq, idx, sizes = frequencies(design, pop, R, seed=3)
    assert np.all(np.abs(freq - pi) <= 4 * np.sqrt(pi * (1 - pi) / R) + 1e-12)
    if not isinstance(design, Poisson):
        assert np.all(sizes == sizes[0])


def test_stratified_cps_strata_independent():
    pop = flat_pop(10, [1] * 5 + [2] * 5)
    design = StratifiedCPS({1: 2, 2: 2}, np.linspace(0.2, 0.7, 10))
    R = 50_000
    _, idx, sizes = frequencies(design, pop, R, seed=8)
    Z = np.zeros((R, 10))
    for j in range(idx.shape[1]):
        Z[np.arange(R), idx[:, j]] = 1
    c = np.corrcoef(Z.T)
    cross = c[:5, 5:]
    assert np.abs(cross).max() < 4 / np.sqrt(R)


def test_srs_full_population():
    pop = flat_pop(6)
    s = draw(SRS(6), pop, 1)
    assert list(s.ids) == [1, 2, 3, 4, 5, 6]


def test_cps_two_units_frequency():
    pop = flat_pop(2)
    R = 100_000
    freq, _, _ = frequencies(CPS(1, np.array([0.5, 0.25])), pop, R, seed=4)
    assert abs(freq[0] - 0.75) <= 3 * np.sqrt(0.75 * 0.25 / R)


def test_jumper_allocation_sizes():
    pop = gen_strata_jumper_population(seed=1)
    design = StratifiedSRS({1: 400, 2: 20}, by="design")
    _, idx, _ = frequencies(design, pop, 200, seed=2)
    sd = pop.strata("design")
    assert np.all((sd[idx] == 1).sum(axis=1) == 400)
    assert np.all((sd[idx] == 2).sum(axis=1) == 20)


def test_draw_deterministic():
    pop = flat_pop(30)
    d = CPS(5, np.linspace(0.05, 0.3, 30))
    assert np.array_equal(draw(d, pop, Stream(1)).ids, draw(d, pop, Stream(1)).ids)


def test_draw_until_contains_full():
    pop = flat_pop(5)
    s = draw_until_contains(SRS(5), pop, 3, Stream(0))
    assert 3 in s


def test_draw_until_contains_attempts():
    # mean number of attempts is 1/pi_k = 5
    pop = flat_pop(100)
    gen = np.random.default_rng(7)
    attempts = []
    lay = layout(SRS(20), pop)
    from condweight.designs import draw_positions

    for _ in range(10_000):
        a = 1
        while 0 not in draw_positions(lay, gen):
            a += 1
        attempts.append(a)
    sd = np.sqrt(0.8 / 0.04)
    assert abs(np.mean(attempts) - 5) < 3 * sd / np.sqrt(10_000)


def test_draw_until_contains_cap():
    pop = flat_pop(100)
    fails = 0
    for r in range(2000):
        try:
            draw_until_contains(SRS(20), pop, 1, Stream(r), cap=1)
        except DrawCapExceeded:
            fails += 1
    assert abs(fails / 2000 - 0.8) < 4 * np.sqrt(0.16 / 2000)


def test_rejection_cap_reports_probability():
    pop = flat_pop(40)
    d = CPS(39, np.full(40, 0.01))
    with pytest.raises(RejectionCapExceeded) as e:
        draw(d, pop, 0, cap=100)
    assert e.value.p_accept == pytest.approx(acceptance_probability(d, pop))


def test_pmf_small_cases():
    assert np.allclose(poisson_binomial_pmf([0.5, 0.5]), [0.25, 0.5, 0.25])
    assert np.allclose(poisson_binomial_pmf([1.0, 0.3]), [0.0, 0.7, 0.3])


# exact pmf of this vector, computed by 2^10 enumeration in 40-digit arithmetic
PB_P = [0.1, 0.5, 0.9, 0.3, 0.77, 0.05, 0.6, 0.42, 0.99, 0.2]
PB_PMF = [
    1.2774384000000008e-5, 0.0014743463079999999, 0.021864712257999999, 0.112120415868, 0.261550835188,
    0.31452380962, 0.204071655192, 0.070901121492, 0.012474089532, 0.00098030671200000005,
    2.5933446000000002e-5,
]


def test_pmf_frozen():
    assert np.allclose(poisson_binomial_pmf(PB_P), PB_PMF, rtol=0, atol=1e-15)


def test_pmf_enumeration(rng):
    p = rng.random(10)
    ref = np.zeros(11)
    for bits in itertools.product([0, 1], repeat=10):
        b = np.array(bits)
        ref[b.sum()] += np.prod(np.where(b, p, 1 - p))
    out = poisson_binomial_pmf(p)
    assert np.abs(out - ref).max() <= 1e-12
    assert abs(out.sum() - 1) <= 1e-12 and (out >= 0).all()


@pytest.mark.parametrize(
    "bad",
    [SRS(0), SRS(11), Poisson(np.full(10, 1.5)), CPS(1, np.array([1.0, 1.0] + [0.5] * 8)),
     StratifiedSRS({1: 6, 2: 1})],
)
def test_invalid_designs(bad):
    pop = flat_pop(10, [1] * 5 + [2] * 5)
    with pytest.raises(DesignError):
        inclusion_probs(bad, pop)


def test_description_roundtrip():
    for d in [SRS(3), StratifiedSRS({1: 2, 2: 1}), CPS(2, np.array([0.1, 0.5, 0.9]))]:
        assert describe(from_description(describe(d))) == describe(d)


def test_random_cps_p():
    p = random_cps_p(500, 100, 0.13, 0.27, Stream(3))
    assert abs(p.sum() - 100) < 1e-9
    assert p.min() >= 0.13 and p.max() <= 0.27
    with pytest.raises(DesignError):
        random_cps_p(10, 9, 0.1, 0.5, 0)
