"""File formats for samples, designs, events, vectors and probability tables."""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import numpy as np

from condweight.designs import Design, Sample, describe, from_description


class FormatError(ValueError):
    pass


def write_sample(s: Sample, path) -> None:
    Path(path).write_text("".join(f"{int(k)}\n" for k in s.ids), encoding="utf-8")


def read_sample(path, design=None) -> Sample:
    ids = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        try:
            ids.append(int(line))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: not a unit id: {line!r}") from None
    if len(set(ids)) != len(ids):
        raise FormatError(f"{path}: repeated unit ids")
    return Sample(ids, design)


def _read_json(path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: invalid JSON ({e})") from None


def write_design(design: Design, path) -> None:
    Path(path).write_text(json.dumps(describe(design), indent=1) + "\n", encoding="utf-8")


def read_design(path) -> Design:
    return from_description(_read_json(path))


def write_event(event, path, extra=None) -> None:
    d = event.describe()
    if extra:
        d.update(extra)
    Path(path).write_text(json.dumps(d, indent=1) + "\n", encoding="utf-8")


def read_event(path, pi=None):
    from condweight.conditioning import event_from_dict

    return event_from_dict(_read_json(path), pi)


def read_vector(path, column: str = None) -> np.ndarray:
    """Numbers one per line, or a CSV column (``column``, else the last one) when a header is present."""
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines:
        raise FormatError(f"{path}: empty file")
    try:
        float(lines[0].split(",")[-1])
        header = None
    except ValueError:
        header = [h.strip() for h in lines[0].split(",")]
    if header is None:
        rows = [ln.split(",")[-1] for ln in lines]
        start = 1
    else:
        j = header.index(column) if column in header else len(header) - 1
        rows = [ln.split(",")[j] for ln in lines[1:]]
        start = 2
    out = []
    for i, v in enumerate(rows):
        try:
            out.append(float(v))
        except ValueError:
            raise FormatError(f"{path}:{i + start}: not a number: {v!r}") from None
    return np.array(out)


def parse_counts(text: str) -> dict:
    """``"1:2,2:3"`` -> ``{1: 2, 2: 3}``."""
    out = {}
    for part in text.split(","):
        try:
            h, n = part.split(":")
            out[int(h)] = int(n)
        except ValueError:
            raise FormatError(f"bad count spec {part!r}; expected h:n") from None
    return out


def write_table(path, header, rows) -> None:
    fh = open(path, "w", newline="", encoding="utf-8") if path not in (None, "-") else None
    w = csv.writer(fh or sys.stdout, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    if fh:
        fh.close()


def read_weights(path) -> dict:
    """Conditional inclusion probabilities by unit id.

    Accepts a CSV with ``unit`` and either ``pi_cond`` or ``weight`` (1/pi).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        cols = r.fieldnames or []
        if "unit" not in cols or not ({"pi_cond", "weight"} & set(cols)):
            raise FormatError(f"{path}: need columns unit and pi_cond or weight")
        out = {}
        for lineno, row in enumerate(r, 2):
            try:
                k = int(row["unit"])
                if "pi_cond" in cols:
                    out[k] = float(row["pi_cond"])
                else:
                    out[k] = 1.0 / float(row["weight"])
            except (ValueError, ZeroDivisionError):
                raise FormatError(f"{path}:{lineno}: bad row {row}") from None
    return out


def read_pairs(path) -> dict:
    """Pairwise probabilities from a CSV ``unit_k,unit_l,pi_kl``."""
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            k, l = int(row["unit_k"]), int(row["unit_l"])
            out[(k, l)] = out[(l, k)] = float(row["pi_kl"])
    return out
