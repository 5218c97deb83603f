"""Command line interface: ``condweight <command> ...``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from condweight import io
from condweight.rng import Stream

GENERATORS = {"poststrat", "outlier", "jumper"}


def _kv(items):
    out = {}
    for item in items or []:
        key, _, val = item.partition("=")
        if not val:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        try:
            out[key] = json.loads(val)
        except json.JSONDecodeError:
            out[key] = val
    return out


def cmd_gen_pop(a):
    from condweight import population as P

    fn = {
        "poststrat": P.gen_poststrat_population,
        "outlier": P.gen_outlier_population,
        "jumper": P.gen_strata_jumper_population,
    }[a.kind]
    pop = fn(seed=a.seed, **_kv(a.set))
    pop.to_csv(a.out)
    print(f"wrote {pop.N} units to {a.out}", file=sys.stderr)


def cmd_draw(a):
    from condweight.designs import draw, draw_until_contains
    from condweight.population import load_population

    pop = load_population(a.pop)
    design = io.read_design(a.design)
    stream = Stream(a.seed).child("draw")
    if a.require_unit is not None:
        s = draw_until_contains(design, pop, a.require_unit, stream, cap=a.cap)
    else:
        s = draw(design, pop, stream)
    if a.out:
        io.write_sample(s, a.out)
    else:
        sys.stdout.write("".join(f"{k}\n" for k in s.ids))


def cmd_exact_cps(a):
    from condweight.cps_exact import cps_inclusion_probs, cps_poststrat_conditional_probs

    p = io.read_vector(a.p, "p")
    if a.strata:
        if not a.counts:
            raise SystemExit("--strata needs --counts")
        strata = io.read_vector(a.strata, "stratum").astype(np.int64)
        pi = cps_poststrat_conditional_probs(p, strata, io.parse_counts(a.counts))
    else:
        if a.n is None:
            raise SystemExit("--n is required without --strata")
        pi = cps_inclusion_probs(p, a.n)
    io.write_table(a.out, ["unit", "pi"], [(i + 1, float(v)) for i, v in enumerate(pi)])


def cmd_build_event(a):
    from condweight.conditioning import HTMean, build_interval, counts_event, estimate_cdf, evaluate, interval_event
    from condweight.designs import inclusion_probs
    from condweight.population import load_population

    pop = load_population(a.pop)
    s0 = io.read_sample(a.sample)
    if a.stat == "counts":
        ev = counts_event(s0, pop, a.by)
        extra = {}
    else:
        if not a.design:
            raise SystemExit("--stat htmean needs --design")
        design = io.read_design(a.design)
        stat = HTMean(inclusion_probs(design, pop), a.variable, a.domain)
        obs = float(evaluate(stat, s0, pop)[0])
        cdf = estimate_cdf(design, pop, stat, a.cdf_draws, Stream(a.seed).child("cdf"), a.workers)
        lo, hi = build_interval(cdf, obs, a.alpha)
        ev = interval_event(stat, lo, hi)
        extra = {"observed": obs, "alpha": a.alpha, "cdf_draws": a.cdf_draws, "cdf_mass": cdf.mass(lo, hi)}
    if a.out:
        io.write_event(ev, a.out, extra)
    else:
        d = ev.describe()
        d.update(extra)
        print(json.dumps(d, indent=1))


def cmd_mc_probs(a):
    from condweight.designs import inclusion_probs
    from condweight.montecarlo import ci_halfwidth, cond_joint_probs, cond_probs, run_mc
    from condweight.population import load_population

    pop = load_population(a.pop)
    design = io.read_design(a.design)
    pi = inclusion_probs(design, pop)
    event = io.read_event(a.event, pi)
    pairs = io.read_sample(a.pairs_from).ids if a.pairs_from else None
    acc = run_mc(
        design, pop, event,
        target_accepted=a.target_accepted, target_draws=a.target_draws,
        pair_units=pairs, rng_stream=Stream(a.seed).child("mc"),
        workers=a.workers, chunk_size=a.chunk_size,
    )
    pc = cond_probs(acc)
    hw = ci_halfwidth(acc, a.alpha)
    rows = [
        (int(k), float(pi[i]), float(pc[i]), max(pc[i] - hw, 0.0), min(pc[i] + hw, 1.0), int(acc.M_k[i]))
        for i, k in enumerate(pop.ids)
    ]
    io.write_table(a.out, ["unit", "pi_uncond", "pi_cond", "ci_low", "ci_high", "M_k"], rows)
    if a.pairs_out and pairs is not None:
        jp = cond_joint_probs(acc)
        ids = jp.ids
        io.write_table(
            a.pairs_out,
            ["unit_k", "unit_l", "pi_kl"],
            [(int(ids[i]), int(ids[j]), float(jp.matrix[i, j])) for i in range(len(ids)) for j in range(i, len(ids))],
        )
    print(f"K={acc.K} M_A={acc.M_A} rate={acc.acceptance_rate:.5f}", file=sys.stderr)


def cmd_estimate(a):
    from condweight.estimators import EstimateReport, cht_estimate, ht_variance
    from condweight.population import load_population

    pop = load_population(a.pop)
    s = io.read_sample(a.sample)
    w = io.read_weights(a.weights)
    missing = [int(k) for k in s.ids if int(k) not in w]
    if missing:
        raise SystemExit(f"no weight for sampled units {missing[:10]}")
    probs = np.array([w.get(int(k), 0.0) for k in pop.ids])
    est = cht_estimate(s, pop, probs, a.variable, a.scale, a.domain)
    var = None
    if a.pairs:
        pk = io.read_pairs(a.pairs)
        dom = pop.domain_mask(a.domain)
        ids = [int(k) for k in s.ids if dom[pop.position(k)]]
        try:
            M = np.array([[pk[(k, l)] if k != l else w[k] for l in ids] for k in ids])
        except KeyError as e:
            raise SystemExit(f"pair {e.args[0]} missing from {a.pairs}") from None
        z = pop.values(a.variable)[pop.positions(ids)]
        var = ht_variance(z, [w[k] for k in ids], M)
        if a.scale == "mean":
            var /= int(dom.sum()) ** 2
    rep = EstimateReport(est, var, "cht", "weights-file", tuple(int(k) for k in s.ids),
                         negative_variance=var is not None and var < 0)
    d = rep.as_dict()
    d.update(variable=a.variable, scale=a.scale, domain=a.domain)
    if a.format == "json":
        print(json.dumps(d, indent=1))
    else:
        keys = list(d)
        io.write_table(None, keys, [[d[k] for k in keys]])


def cmd_experiment(a):
    from condweight.harness import emit_report, load_config, run_experiment
    from condweight.harness.config import ExperimentConfig

    if a.config:
        cfg = load_config(a.config, a.kind, a.paper_scale)
    else:
        cfg = ExperimentConfig(a.kind, paper_scale=a.paper_scale)
    if a.workers:
        cfg.workers = a.workers
    report = run_experiment(cfg)
    paths = emit_report(report, a.out)
    print(json.dumps(report.summary(), indent=1, default=float))
    print(f"runtime {report.runtime:.1f}s; wrote {len(paths)} files to {a.out}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="condweight", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-pop", help="generate a synthetic population CSV")
    p.add_argument("--kind", choices=sorted(GENERATORS), required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="generator argument, JSON value")
    p.set_defaults(fn=cmd_gen_pop)

    p = sub.add_parser("draw", help="draw one sample")
    p.add_argument("--design", required=True)
    p.add_argument("--pop", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--require-unit", type=int)
    p.add_argument("--cap", type=int, default=100_000)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_draw)

    p = sub.add_parser("exact-cps", help="exact CPS inclusion probabilities")
    p.add_argument("--p", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--strata")
    p.add_argument("--counts", help="h1:n1,h2:n2,...")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_exact_cps)

    p = sub.add_parser("build-event", help="conditioning event from a realised sample")
    p.add_argument("--stat", choices=["htmean", "counts"], default="htmean")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--cdf-draws", type=int, default=100_000)
    p.add_argument("--sample", required=True)
    p.add_argument("--pop", required=True)
    p.add_argument("--design")
    p.add_argument("--variable", default="x")
    p.add_argument("--domain", type=int)
    p.add_argument("--by", default="post")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out")
    p.set_defaults(fn=cmd_build_event)

    p = sub.add_parser("mc-probs", help="Monte Carlo conditional inclusion probabilities")
    p.add_argument("--design", required=True)
    p.add_argument("--pop", required=True)
    p.add_argument("--event", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--target-accepted", type=int)
    g.add_argument("--target-draws", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--chunk-size", type=int, default=1 << 14)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--pairs-from")
    p.add_argument("--pairs-out")
    p.add_argument("--out")
    p.set_defaults(fn=cmd_mc_probs)

    p = sub.add_parser("estimate", help="conditional HT estimate from a weights file")
    p.add_argument("--sample", required=True)
    p.add_argument("--pop", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--pairs")
    p.add_argument("--variable", choices=["x", "y"], default="y")
    p.add_argument("--scale", choices=["total", "mean"], default="total")
    p.add_argument("--domain", type=int)
    p.add_argument("--format", choices=["json", "csv"], default="json")
    p.set_defaults(fn=cmd_estimate)

    p = sub.add_parser("experiment", help="run a simulation study")
    p.add_argument("kind", choices=["poststrat-srs", "poststrat-cps", "outlier", "strata-jumper"])
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--workers", type=int)
    p.set_defaults(fn=cmd_experiment)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"condweight: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
