import numpy as np
import pytest

from condweight.cps_exact import (
    CPSError,
    InversionError,
    cps_inclusion_probs,
    cps_invert,
    cps_joint_inclusion_probs,
    cps_poststrat_conditional_probs,
    cps_recursion,
    enumerate_cps_oracle,
    enumerate_samples,
    rescale,
)

# full enumeration of all C(12, 5) samples in 40-digit arithmetic
P12 = [0.12, 0.35, 0.5, 0.61, 0.07, 0.83, 0.44, 0.29, 0.95, 0.18, 0.66, 0.4]
PI12 = [
    0.087581753935948377, 0.29382520602253423, 0.45627324572021637, 0.58338255262954894,
    0.049574990985021824, 0.83004557630353993, 0.38904620420788915, 0.23480376921942406,
    0.95220780277539119, 0.13625739390924843, 0.64121043715100968, 0.34579106714022782,
]
# conditional law given 2 of the first five units and 3 of the last five
P10 = [0.2, 0.7, 0.45, 0.1, 0.9, 0.33, 0.5, 0.62, 0.15, 0.8]
PI10_COND = [
    0.088376607619509838, 0.68471244843484585, 0.27583110895413737, 0.039723368114535311,
    0.91135646687697163, 0.43084990234493469, 0.68131391554353231, 0.79584329091504615,
    0.17864508146009485, 0.913347809736392,
]


def random_p(rng, N, lo=0.02, hi=0.98):
    return lo + (hi - lo) * rng.random(N)


def test_equal_p_is_srs():
    for n in range(0, 9):
        assert np.allclose(cps_inclusion_probs(np.full(8, 0.3), n), n / 8, atol=1e-15)


def test_two_units():
    assert np.allclose(cps_inclusion_probs([0.5, 0.25], 1), [0.75, 0.25], atol=1e-15)


@pytest.mark.parametrize("method", ["auto", "recursion", "stable"])
def test_frozen_twelve_units(method):
    assert np.abs(cps_inclusion_probs(P12, 5, method=method) - PI12).max() <= 1e-10


def test_random_instances_vs_enumeration(rng):
    for _ in range(50):
        N = int(rng.integers(1, 13))
        n = int(rng.integers(0, N + 1))
        p = random_p(rng, N)
        assert np.abs(cps_inclusion_probs(p, n) - enumerate_cps_oracle(p, n)).max() <= 1e-10


def test_stable_method_matches_enumeration_extreme(rng):
    # near-certain units break the plain recursion; auto falls back
    p = np.concatenate([np.full(4, 0.999), random_p(rng, 8)])
    ref = enumerate_cps_oracle(p, 6)
    assert np.abs(cps_inclusion_probs(p, 6) - ref).max() <= 1e-10
    assert np.abs(cps_inclusion_probs(p, 6, method="stable") - ref).max() <= 1e-12


def test_workspace_invariants(rng):
    p = random_p(rng, 9, 0.1, 0.6)
    ws = cps_recursion(p, 5)
    assert np.all(ws.f_table[0] == 0)
    for m in range(6):
        assert abs(ws.f_table[m].sum() - m) <= 1e-9
    assert np.all(np.diff(ws.f_table, axis=0) > 0)
    assert ws.reliable
    assert np.allclose(ws.pi, cps_inclusion_probs(p, 5))


def test_argument_errors():
    with pytest.raises(CPSError):
        cps_inclusion_probs([0.5, 0.5], 3)
    with pytest.raises(CPSError):
        cps_inclusion_probs([1.0, 0.5], 1)
    assert np.all(cps_inclusion_probs([0.3, 0.6], 0) == 0)


def test_large_population_normalisation(rng):
    p = random_p(rng, 10_000, 0.01, 0.99)
    for n in (1, 500, 5000, 9999):
        assert abs(cps_inclusion_probs(p, n).sum() - n) <= 1e-9


def test_rescale_preserves_law(rng):
    p = random_p(rng, 10)
    q = rescale(p, 4)
    assert abs(q.sum() - 4) < 1e-12
    assert np.allclose(cps_inclusion_probs(q, 4), cps_inclusion_probs(p, 4), atol=1e-13)


def test_joint_probs_vs_enumeration(rng):
    p = random_p(rng, 9)
    members, probs = enumerate_samples(p, 4)
    ref = (members.T * probs) @ members
    J = cps_joint_inclusion_probs(p, 4)
    assert np.abs(J - ref).max() <= 1e-12
    assert np.allclose(J.sum(axis=1), 4 * np.diag(J))


def test_invert_symmetric():
    p = cps_invert(np.full(10, 0.3), 3)
    assert np.allclose(p, 0.3, atol=1e-12)


def test_invert_round_trip(rng):
    for _ in range(10):
        N = int(rng.integers(3, 60))
        n = int(rng.integers(1, N))
        pi = cps_inclusion_probs(random_p(rng, N, 0.05, 0.95), n)
        p = cps_invert(pi, n)
        assert abs(p.sum() - n) < 1e-9
        assert np.abs(cps_inclusion_probs(p, n) - pi).max() <= 1e-8


def test_invert_near_boundary():
    pi = np.array([0.999] + [2.001 / 9] * 9)
    p = cps_invert(pi, 3)
    assert np.abs(cps_inclusion_probs(p, 3) - pi).max() <= 1e-10


def test_invert_failure_carries_residual():
    pi = np.array([0.999] + [2.001 / 9] * 9)
    with pytest.raises(InversionError) as e:
        cps_invert(pi, 3, tol=1e-15, max_iter=2)
    assert e.value.residual > 0 and e.value.iterations == 2


def test_invert_checks_sum():
    with pytest.raises(CPSError):
        cps_invert([0.5, 0.6], 1)


def test_poststrat_single_stratum(rng):
    p = random_p(rng, 8)
    a = cps_poststrat_conditional_probs(p, np.ones(8, int), [3])
    assert np.allclose(a, cps_inclusion_probs(p, 3), atol=0)


def test_poststrat_equal_p_gives_prop1():
    strata = np.array([1] * 4 + [2] * 6)
    pi = cps_poststrat_conditional_probs(np.full(10, 0.4), strata, {1: 1, 2: 3})
    assert np.allclose(pi, [0.25] * 4 + [0.5] * 6, atol=1e-15)


def test_poststrat_frozen():
    strata = np.array([1] * 5 + [2] * 5)
    pi = cps_poststrat_conditional_probs(P10, strata, [2, 3])
    assert np.abs(pi - PI10_COND).max() <= 1e-10


def test_poststrat_vs_enumeration(rng):
    for _ in range(30):
        N = int(rng.integers(2, 13))
        strata = rng.integers(1, 4, N)
        keys = sorted(set(strata.tolist()))
        counts = {h: int(rng.integers(1, (strata == h).sum() + 1)) for h in keys}
        p = random_p(rng, N)
        n = sum(counts.values())
        got = cps_poststrat_conditional_probs(p, strata, counts)
        ref = enumerate_cps_oracle(p, n, (strata, counts))
        assert np.abs(got - ref).max() <= 1e-10


def test_poststrat_errors():
    strata = np.array([1, 1, 2])
    with pytest.raises(CPSError):
        cps_poststrat_conditional_probs([0.5] * 3, strata, [3, 1])
    with pytest.raises(CPSError):
        cps_poststrat_conditional_probs([0.5] * 3, strata, [0, 1])


def test_enumeration_oracle():
    assert np.allclose(enumerate_cps_oracle([0.5, 0.5], 1), [0.5, 0.5])
    p = np.array([0.2, 0.4, 0.7, 0.5])
    assert np.allclose(enumerate_cps_oracle(p, 2, (np.ones(4, int), [2])), enumerate_cps_oracle(p, 2))
    with pytest.raises(CPSError):
        enumerate_cps_oracle(np.full(21, 0.5), 3)
