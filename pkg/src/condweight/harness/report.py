"""Write experiment reports as CSV tables, a JSON summary and SVG figures.

Outputs depend only on the report content (runtime and worker count are
left out), so emitting the same report twice gives byte-identical files.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from condweight.harness.experiments import ExperimentReport, weight_curve
from condweight.harness.svg import Canvas, _lim


class ReportError(OSError):
    pass


def _num(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _write_csv(path: Path, header, rows):
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_num(v) for v in row])
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e.strerror}") from e


def _write_text(path: Path, text: str):
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ReportError(f"cannot write {path}: {e.strerror}") from e


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if np.isfinite(f) else repr(f)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.bool_):
        return bool(o)
    return o


def emit_report(report: ExperimentReport, outdir) -> list:
    """Write all tables and figures for ``report``; returns the paths written."""
    out = Path(outdir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ReportError(f"cannot create {out}: {e.strerror}") from e
    written = []
    # worker count is an execution detail; leaving it out keeps outputs identical across it
    config = {k: v for k, v in report.config.items() if k != "workers"}
    summary = {"summary": report.summary(), "config": config}
    p = out / "summary.json"
    _write_text(p, json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    written.append(p)
    if report.kind.startswith("poststrat"):
        written += _emit_poststrat(report, out)
    else:
        written += _emit_adjustment(report, out)
    return written


def _emit_poststrat(report, out):
    p = out / "estimates.csv"
    tol = report.config.get("tie_tolerance", 0.0)
    rows = [
        (r.index, ";".join(map(str, r.counts)), r.ht, r.cht, int(r.excluded), r.closer(report.truth, tol))
        for r in report.replications
    ]
    _write_csv(p, ["replication", "counts", "ht", "cht", "excluded", "closer"], rows)
    written = [p]
    inc = report.included
    if not inc:
        return written
    ht = [r.ht for r in inc]
    cht = [r.cht for r in inc]
    lim = _lim(ht + cht + [report.truth])
    c = Canvas(lim, lim, "HT vs conditional estimates", "HT estimate", "conditional estimate")
    c.line(list(lim), list(lim), "gray")
    colors = ["red" if r.closer(report.truth, tol) == 1.0 else "black" for r in inc]
    c.points(ht, cht, colors)
    c.vline(report.truth, "blue")
    p = out / "scatter.svg"
    _write_text(p, c.render())
    written.append(p)
    return written


def _emit_adjustment(report, out):
    written = []
    p = out / "runs.csv"
    rows = [
        (r.index, r.focus_id, r.phi_obs, r.interval[0], r.interval[1], r.cdf_mass, r.K, r.M_A,
         r.acceptance_rate if r.K else None, r.pi_focus, r.truth, r.ht, r.mc, r.mc_var,
         None if r.mc_closer is None else int(r.mc_closer))
        for r in report.runs
    ]
    _write_csv(
        p,
        ["run", "focus_unit", "phi_obs", "phi_lo", "phi_hi", "cdf_mass", "K", "M_A", "acceptance_rate",
         "pi_cond_focus", "truth", "ht", "mc", "mc_variance", "mc_closer"],
        rows,
    )
    written.append(p)
    if not report.runs:
        return written
    r = report.runs[0]
    in_s0 = set(int(k) for k in r.sample_ids)
    p = out / "pi_table.csv"
    rows = []
    for i, k in enumerate(r.unit_ids):
        if not r.has_x[i]:
            continue
        pc = None if r.pi_cond is None else r.pi_cond[i]
        mk = None if r.M_k is None else int(r.M_k[i])
        corr = r.pi[i] / pc if pc else None
        rows.append((int(k), r.x[i], int(k) in in_s0, r.pi[i], pc, mk, corr))
    _write_csv(p, ["unit", "x", "in_s0", "pi_uncond", "pi_cond", "M_k", "weight_correction"], rows)
    written.append(p)
    p = out / "phi_histogram.csv"
    e = r.hist_edges
    _write_csv(p, ["bin_lo", "bin_hi", "count"], [(e[j], e[j + 1], int(c)) for j, c in enumerate(r.hist_counts)])
    written.append(p)

    c = Canvas((e[0], e[-1]), (0, max(1, int(r.hist_counts.max())) * 1.05), "Distribution of the statistic",
               "HT mean of x", "count")
    c.bars(e, r.hist_counts)
    c.vline(r.phi_obs, "red")
    if np.isfinite(r.interval[0]):
        c.vline(r.interval[0], "orange")
        c.vline(r.interval[1], "orange")
    p = out / "phi_histogram.svg"
    _write_text(p, c.render())
    written.append(p)

    if r.pi_cond is not None:
        x, ratio, ids = weight_curve(r)
        if x.size:
            c = Canvas(_lim(list(x)), _lim(list(ratio) + [1.0]), "Weight correction", "x", "d_cond / d")
            c.line(list(x), [1.0] * x.size, "gray", dash=True)
            c.line(list(x), list(ratio), "steelblue")
            c.points(list(x), list(ratio), ["red" if int(k) in in_s0 else "black" for k in ids])
            p = out / "weight_correction.svg"
            _write_text(p, c.render())
            written.append(p)
    return written
