"""Monte Carlo estimation of conditional inclusion probabilities.

The design is replicated independently; replicates whose conditioning
statistic falls in the event region are tallied. With M_A accepted
replicates and M_k of them containing unit k, M_k / M_A estimates the
conditional inclusion probability of k.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np
from scipy.stats import norm

from condweight import engine, kernels
from condweight.conditioning import ConditioningEvent
from condweight.designs import Design, acceptance_probability, describe, layout
from condweight.population import Population
from condweight.rng import Stream, as_stream

ACCEPTANCE_FLOOR = 1e-6
PROBE_DRAWS = 1 << 17


class MCError(RuntimeError):
    pass


class LowAcceptance(MCError):
    def __init__(self, draws, accepted, floor):
        self.draws = draws
        self.accepted = accepted
        super().__init__(
            f"event accepted {accepted} of {draws} draws (rate {accepted / max(draws, 1):.3g}), "
            f"below the floor {floor:g}; widen the region or check the event"
        )


def _pop_digest(pop: Population) -> str:
    h = hashlib.sha256()
    for a in (pop.ids, pop.x, pop.y, pop.has_x, pop.has_y):
        h.update(np.ascontiguousarray(a).tobytes())
    for which in ("design", "post"):
        try:
            h.update(np.ascontiguousarray(pop.strata(which)).tobytes())
        except Exception:
            h.update(b"-")
    return h.hexdigest()


def identity(design: Design, pop: Population, event: ConditioningEvent, pair_ids, stream: Stream,
             chunk_size: int) -> str:
    """Fingerprint of everything that determines the content of a chunk."""
    w = event.statistic.weights(pop)
    payload = {
        "design": describe(design),
        "pop": _pop_digest(pop),
        "stat": event.statistic.describe(),
        "w": hashlib.sha256(np.ascontiguousarray(w).tobytes()).hexdigest(),
        "lo": [repr(float(v)) for v in event.lo],
        "hi": [repr(float(v)) for v in event.hi],
        "pairs": [int(v) for v in pair_ids],
        "seed": [stream.seed, list(stream.path)],
        "chunk": int(chunk_size),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


@dataclass(eq=False)
class MCAccumulator:
    """Tallies over replicates: draws K, accepted M_A, per-unit M_k, pairwise M_kl.

    ``unit_ids`` give the order of ``M_k``; ``pair_ids`` the rows and columns
    of ``M_kl``. ``chunks`` lists the chunk indices included.
    """

    unit_ids: np.ndarray
    pair_ids: np.ndarray
    K: int = 0
    M_A: int = 0
    M_k: Optional[np.ndarray] = None
    M_kl: Optional[np.ndarray] = None
    identity: str = ""
    seed: object = None
    chunks: tuple = ()
    stopped_early: bool = field(default=False, repr=False)

    def __post_init__(self):
        self.unit_ids = np.asarray(self.unit_ids, dtype=np.int64)
        self.pair_ids = np.asarray(self.pair_ids, dtype=np.int64)
        if self.M_k is None:
            self.M_k = np.zeros(self.unit_ids.shape[0], dtype=np.int64)
        if self.M_kl is None:
            P = self.pair_ids.shape[0]
            self.M_kl = np.zeros((P, P), dtype=np.int64)

    @property
    def N(self) -> int:
        return int(self.unit_ids.shape[0])

    @property
    def acceptance_rate(self) -> float:
        return self.M_A / self.K if self.K else float("nan")

    def count(self, k: int) -> int:
        hits = np.flatnonzero(self.unit_ids == k)
        if not hits.size:
            raise KeyError(f"unit {k} not in accumulator")
        return int(self.M_k[hits[0]])

    def empty_like(self) -> "MCAccumulator":
        return MCAccumulator(self.unit_ids, self.pair_ids, identity=self.identity, seed=self.seed)

    def same_counts(self, other: "MCAccumulator") -> bool:
        return (
            self.K == other.K
            and self.M_A == other.M_A
            and np.array_equal(self.M_k, other.M_k)
            and np.array_equal(self.M_kl, other.M_kl)
            and np.array_equal(self.unit_ids, other.unit_ids)
            and np.array_equal(self.pair_ids, other.pair_ids)
        )

    def check(self) -> None:
        assert 0 <= self.M_A <= self.K
        assert (self.M_k >= 0).all() and (self.M_k <= self.M_A).all()
        if self.M_kl.size:
            assert (self.M_kl == self.M_kl.T).all()


def merge(a: MCAccumulator, b: MCAccumulator) -> MCAccumulator:
    """Component-wise sum of two accumulators over disjoint chunk ranges."""
    if a.identity != b.identity:
        raise MCError("cannot merge accumulators of different runs (identity mismatch)")
    if not (np.array_equal(a.unit_ids, b.unit_ids) and np.array_equal(a.pair_ids, b.pair_ids)):
        raise MCError("cannot merge accumulators over different units")
    overlap = set(a.chunks) & set(b.chunks)
    if overlap:
        raise MCError(f"chunks {sorted(overlap)[:5]} present in both accumulators")
    return MCAccumulator(
        a.unit_ids,
        a.pair_ids,
        a.K + b.K,
        a.M_A + b.M_A,
        a.M_k + b.M_k,
        a.M_kl + b.M_kl,
        a.identity,
        a.seed,
        tuple(sorted(a.chunks + b.chunks)),
    )


class _Runner:
    def __init__(self, design, pop, event, pair_units, stream, chunk_size):
        self.pop = pop
        self.lay = layout(design, pop)
        self.wmat = event.statistic.weights(pop)
        if self.wmat.shape[0] != event.lo.shape[0]:
            raise MCError("event dimension does not match its statistic")
        self.lo = event.lo
        self.hi = event.hi
        self.stream = as_stream(stream)
        self.chunk_size = int(chunk_size)
        pair_ids = np.unique(np.asarray(list(pair_units) if pair_units is not None else [], dtype=np.int64))
        self.pair_pos = np.full(pop.N, -1, dtype=np.int64)
        if pair_ids.size:
            self.pair_pos[pop.positions(pair_ids)] = np.arange(pair_ids.shape[0])
        self.pair_ids = pair_ids
        self._p_accept = lambda: acceptance_probability(design, pop)
        self.template = MCAccumulator(
            pop.ids,
            pair_ids,
            identity=identity(design, pop, event, pair_ids, self.stream, chunk_size),
            seed=[self.stream.seed, list(self.stream.path)],
        )

    def chunk(self, i: int, size: Optional[int] = None) -> MCAccumulator:
        size = self.chunk_size if size is None else size
        gen = self.stream.child(i).generator()
        idx, sizes = engine.chunk_draws(self.lay, gen, size, self._p_accept)
        phi = kernels.linear_stat(idx, sizes, self.wmat)
        accept = np.all((phi >= self.lo[None, :]) & (phi <= self.hi[None, :]), axis=1)
        acc = self.template.empty_like()
        acc.K = size
        acc.M_A = int(kernels.tally(idx, sizes, accept, self.pair_pos, acc.M_k, acc.M_kl))
        acc.chunks = (i,)
        return acc


def run_chunks(design: Design, pop: Population, event: ConditioningEvent, chunk_ids: Iterable[int],
               pair_units=None, rng_stream=0, workers: int = 1,
               chunk_size: int = engine.CHUNK_SIZE) -> MCAccumulator:
    """Accumulator over an explicit set of full-width chunks."""
    r = _Runner(design, pop, event, pair_units, rng_stream, chunk_size)
    acc = r.template.empty_like()
    for part in engine.imap_chunks(r.chunk, sorted(chunk_ids), workers):
        acc = merge(acc, part)
    return acc


def run_mc(
    design: Design,
    pop: Population,
    event: ConditioningEvent,
    target_accepted: Optional[int] = None,
    target_draws: Optional[int] = None,
    pair_units=None,
    rng_stream=0,
    workers: int = 1,
    chunk_size: int = engine.CHUNK_SIZE,
    floor: float = ACCEPTANCE_FLOOR,
    probe_draws: int = PROBE_DRAWS,
    max_draws: Optional[int] = None,
) -> MCAccumulator:
    """Replicate the design until a stop rule is met.

    ``target_draws=K`` runs exactly K replicates (the last chunk may be
    short). ``target_accepted=M`` runs whole chunks in index order until
    at least M replicates fall in the event. Chunk ``i`` always draws from
    ``rng_stream.child(i)``, so the result does not depend on ``workers``.
    """
    if (target_accepted is None) == (target_draws is None):
        raise MCError("give exactly one of target_accepted and target_draws")
    r = _Runner(design, pop, event, pair_units, rng_stream, chunk_size)
    acc = r.template.empty_like()
    if target_draws is not None:
        if target_draws < 1:
            raise MCError("target_draws must be at least 1")
        sizes = engine.chunk_sizes(target_draws, chunk_size)
        parts = engine.imap_chunks(lambda i: r.chunk(i, sizes[i]), range(len(sizes)), workers)
        for part in parts:
            acc = merge(acc, part)
            _check_floor(acc, floor, probe_draws)
        return acc
    if target_accepted < 1:
        raise MCError("target_accepted must be at least 1")
    waves = engine.waves(r.chunk, workers)
    try:
        for part in waves:
            acc = merge(acc, part)
            if acc.M_A >= target_accepted:
                break
            _check_floor(acc, floor, probe_draws)
            if max_draws is not None and acc.K >= max_draws:
                acc.stopped_early = True
                break
    finally:
        waves.close()
    return acc


def _check_floor(acc, floor, probe_draws):
    if acc.K >= probe_draws and acc.M_A < floor * acc.K:
        raise LowAcceptance(acc.K, acc.M_A, floor)


def cond_probs(acc: MCAccumulator) -> np.ndarray:
    """Per-unit estimates M_k / M_A (0 for units never seen)."""
    if acc.M_A < 1:
        raise MCError("no accepted replicates; the event was never hit")
    return acc.M_k / acc.M_A


class JointProbs:
    """Pairwise estimates M_kl / M_A over the tracked units."""

    def __init__(self, ids, matrix):
        self.ids = np.asarray(ids, dtype=np.int64)
        self.matrix = matrix
        self._index = {int(k): i for i, k in enumerate(self.ids)}

    def __getitem__(self, pair) -> float:
        k, l = pair
        try:
            return float(self.matrix[self._index[int(k)], self._index[int(l)]])
        except KeyError:
            raise MCError(f"pair ({k}, {l}) was not tracked") from None

    def submatrix(self, ids) -> np.ndarray:
        try:
            pos = [self._index[int(k)] for k in ids]
        except KeyError as e:
            raise MCError(f"unit {e.args[0]} was not tracked for pairs") from None
        return self.matrix[np.ix_(pos, pos)]


def cond_joint_probs(acc: MCAccumulator) -> JointProbs:
    if acc.M_A < 1:
        raise MCError("no accepted replicates; the event was never hit")
    return JointProbs(acc.pair_ids, acc.M_kl / acc.M_A)


def ci_halfwidth(acc_or_MA, alpha: float) -> float:
    """Normal half-width with the worst-case variance 1/4: z_{1-alpha/2} sqrt(1/(4 M_A))."""
    M = acc_or_MA.M_A if isinstance(acc_or_MA, MCAccumulator) else int(acc_or_MA)
    if M < 1:
        raise MCError("no accepted replicates")
    if not 0 < alpha < 1:
        raise MCError("alpha must lie in (0, 1)")
    return float(norm.ppf(1 - alpha / 2) * math.sqrt(1.0 / (4 * M)))


def _M(acc_or_MA):
    return acc_or_MA.M_A if isinstance(acc_or_MA, MCAccumulator) else int(acc_or_MA)


def relative_bias_bound(acc_or_MA, epsilon: float, pi0: float, n: int) -> float:
    """Closed-form lower bound on P(relative MC error <= epsilon), as printed.

    Uses 1 - F(u) <= exp(-u^2) / (u sqrt(2 pi)) with u = eps sqrt(M pi0) / (1 + eps).
    Note the exponent is u^2, not the usual u^2 / 2.
    """
    return _mills_bound(_M(acc_or_MA), epsilon, pi0, n, 1.0)


def relative_bias_bound_mills(acc_or_MA, epsilon: float, pi0: float, n: int) -> float:
    """Same bound with the standard Mills ratio exp(-u^2 / 2)."""
    return _mills_bound(_M(acc_or_MA), epsilon, pi0, n, 0.5)


def _mills_bound(M, epsilon, pi0, n, c):
    if epsilon <= 0 or not 0 < pi0 <= 1:
        raise MCError("need epsilon > 0 and pi0 in (0, 1]")
    if M <= 0:
        return 0.0
    u = epsilon * math.sqrt(M * pi0) / (1 + epsilon)
    val = 1 - 4 * n * math.exp(-c * u * u) / (u * math.sqrt(2 * math.pi))
    return min(max(val, 0.0), 1.0)


def relative_bias_bound_sum(acc_or_MA, epsilon: float, pi) -> float:
    """The sum form 1 - 4 sum_k [1 - F(eps sqrt(M pi_k) / (1 + eps))], clamped to [0, 1]."""
    M = _M(acc_or_MA)
    pi = np.asarray(pi, dtype=np.float64)
    u = epsilon * np.sqrt(M * pi) / (1 + epsilon)
    val = 1 - 4 * float(norm.sf(u).sum())
    return min(max(val, 0.0), 1.0)


def expected_draws(p_event: float, M_star: int) -> float:
    """Mean of the negative binomial number of draws to collect M_star hits."""
    if not 0 < p_event <= 1:
        raise MCError("p_event must lie in (0, 1]")
    return M_star / p_event
