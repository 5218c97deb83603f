"""Finite populations: storage, CSV ingestion and the synthetic generators."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from condweight.rng import as_generator

COLUMNS = ("id", "stratum_design", "stratum_post", "x", "y")


class PopulationError(ValueError):
    """Raised for malformed population input or invalid aggregate requests."""


@dataclass(frozen=True)
class Unit:
    id: int
    stratum_design: Optional[int]
    stratum_post: Optional[int]
    x: Optional[float]
    y: Optional[float]


@dataclass(frozen=True, eq=False)
class Population:
    """Column-oriented finite population.

    ``x`` and ``y`` are float arrays paired with presence masks; an absent
    value is the mask being ``False`` (the float slot holds 0.0 and is never
    read). Stratum columns are either fully present or ``None``.
    """

    ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    has_x: np.ndarray
    has_y: np.ndarray
    stratum_design: Optional[np.ndarray] = None
    stratum_post: Optional[np.ndarray] = None
    _pos: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        ids = np.array(self.ids, dtype=np.int64)
        n = ids.shape[0]
        for name in ("x", "y", "has_x", "has_y"):
            if np.asarray(getattr(self, name)).shape != (n,):
                raise PopulationError(f"column {name} has wrong length")
        for name in ("stratum_design", "stratum_post"):
            col = getattr(self, name)
            if col is not None:
                col = np.array(col, dtype=np.int64)
                if col.shape != (n,):
                    raise PopulationError(f"column {name} has wrong length")
                if n and col.min() < 1:
                    raise PopulationError(f"{name} labels must be >= 1")
                object.__setattr__(self, name, col)
        uniq, counts = np.unique(ids, return_counts=True)
        if (counts > 1).any():
            raise PopulationError(f"duplicate unit id {int(uniq[counts > 1][0])}")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "x", np.where(self.has_x, self.x, 0.0).astype(np.float64))
        object.__setattr__(self, "y", np.where(self.has_y, self.y, 0.0).astype(np.float64))
        object.__setattr__(self, "has_x", np.array(self.has_x, dtype=bool))
        object.__setattr__(self, "has_y", np.array(self.has_y, dtype=bool))
        object.__setattr__(self, "_pos", {int(k): i for i, k in enumerate(ids)})
        for arr in (self.ids, self.x, self.y, self.has_x, self.has_y):
            arr.setflags(write=False)

    @property
    def N(self) -> int:
        return int(self.ids.shape[0])

    def __len__(self):
        return self.N

    def __eq__(self, other):
        if not isinstance(other, Population):
            return NotImplemented
        same = (
            np.array_equal(self.ids, other.ids)
            and np.array_equal(self.has_x, other.has_x)
            and np.array_equal(self.has_y, other.has_y)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
        )
        for name in ("stratum_design", "stratum_post"):
            a, b = getattr(self, name), getattr(other, name)
            if (a is None) != (b is None) or (a is not None and not np.array_equal(a, b)):
                return False
        return same

    __hash__ = None

    def unit(self, k: int) -> Unit:
        i = self.position(k)
        return Unit(
            id=int(self.ids[i]),
            stratum_design=None if self.stratum_design is None else int(self.stratum_design[i]),
            stratum_post=None if self.stratum_post is None else int(self.stratum_post[i]),
            x=float(self.x[i]) if self.has_x[i] else None,
            y=float(self.y[i]) if self.has_y[i] else None,
        )

    def position(self, k: int) -> int:
        try:
            return self._pos[int(k)]
        except KeyError:
            raise PopulationError(f"unit {k} not in population") from None

    def positions(self, ids) -> np.ndarray:
        return np.array([self.position(k) for k in np.asarray(ids).ravel()], dtype=np.int64)

    def strata(self, which: str = "post") -> np.ndarray:
        col = self.stratum_post if which == "post" else self.stratum_design
        if col is None:
            raise PopulationError(f"population has no {which} strata")
        return col

    @property
    def strata_sizes_post(self) -> dict:
        if self.stratum_post is None:
            return {}
        labels, counts = np.unique(self.stratum_post, return_counts=True)
        return {int(h): int(c) for h, c in zip(labels, counts)}

    def domain_mask(self, domain: Optional[int]) -> np.ndarray:
        if domain is None:
            return np.ones(self.N, dtype=bool)
        return self.strata("post") == int(domain)

    def values(self, variable: str, mask: Optional[np.ndarray] = None) -> np.ndarray:
        """Full-length value vector; raises if any unit under ``mask`` lacks it."""
        if variable not in ("x", "y"):
            raise PopulationError(f"unknown variable {variable!r}")
        have = self.has_x if variable == "x" else self.has_y
        if mask is None:
            mask = np.ones(self.N, dtype=bool)
        missing = mask & ~have
        if missing.any():
            bad = self.ids[missing][:10].tolist()
            raise PopulationError(f"{variable} absent for units {bad}")
        return self.x if variable == "x" else self.y

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(COLUMNS)
            for i in range(self.N):
                w.writerow(
                    [
                        int(self.ids[i]),
                        "" if self.stratum_design is None else int(self.stratum_design[i]),
                        "" if self.stratum_post is None else int(self.stratum_post[i]),
                        repr(float(self.x[i])) if self.has_x[i] else "",
                        repr(float(self.y[i])) if self.has_y[i] else "",
                    ]
                )


def from_arrays(ids, x=None, y=None, stratum_design=None, stratum_post=None) -> Population:
    """Build a population; ``None`` or NaN entries in x/y mark absent values."""
    ids = np.asarray(ids, dtype=np.int64)
    n = ids.shape[0]

    def split(v):
        if v is None:
            return np.zeros(n), np.zeros(n, dtype=bool)
        arr = np.array([np.nan if e is None else e for e in v], dtype=np.float64)
        present = ~np.isnan(arr)
        return np.where(present, arr, 0.0), present

    xv, hx = split(x)
    yv, hy = split(y)
    return Population(ids, xv, yv, hx, hy, stratum_design, stratum_post)


def load_population(path, schema: Optional[dict] = None) -> Population:
    """Read a population CSV.

    ``schema`` maps canonical column names (``id``, ``stratum_design``,
    ``stratum_post``, ``x``, ``y``) to header names in the file. Empty cells
    are absent values.
    """
    schema = {c: c for c in COLUMNS} | dict(schema or {})
    path = Path(path)
    if not path.exists():
        raise PopulationError(f"population file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if schema["id"] not in header:
            raise PopulationError(f"id column {schema['id']!r} not found in {path}")
        cols = {c: schema[c] for c in COLUMNS if schema[c] in header}
        ids, xs, ys, sd, sp = [], [], [], [], []
        seen = set()
        for rowno, row in enumerate(reader, start=2):
            try:
                k = int(row[cols["id"]])
            except (TypeError, ValueError):
                raise PopulationError(f"row {rowno}: bad id {row[cols['id']]!r}") from None
            if k in seen:
                raise PopulationError(f"duplicate unit id {k} (row {rowno})")
            seen.add(k)
            ids.append(k)
            for name, out in (("x", xs), ("y", ys)):
                cell = (row.get(cols[name], "") if name in cols else "").strip()
                if cell == "":
                    out.append(None)
                    continue
                try:
                    out.append(float(cell))
                except ValueError:
                    raise PopulationError(
                        f"row {rowno}: non-numeric {name} value {cell!r}"
                    ) from None
            for name, out in (("stratum_design", sd), ("stratum_post", sp)):
                cell = (row.get(cols[name], "") if name in cols else "").strip()
                out.append(int(cell) if cell else None)

    def strata_column(vals, name):
        if all(v is None for v in vals):
            return None
        if any(v is None for v in vals):
            raise PopulationError(f"{name} must be given for all units or none")
        return np.array(vals, dtype=np.int64)

    return from_arrays(
        ids,
        xs,
        ys,
        stratum_design=strata_column(sd, "stratum_design"),
        stratum_post=strata_column(sp, "stratum_post"),
    )


def gen_poststrat_population(
    N: int = 500,
    y_range: Sequence[float] = (0.0, 4000.0),
    cutpoints: Sequence[float] = (1000.0, 2000.0, 3000.0),
    seed: int = 0,
) -> Population:
    """Uniform y with a posteriori strata read off y itself.

    A unit falls in stratum h when ``cut[h-1] <= y < cut[h]``. The strata
    depend on the study variable, which is unusual for real surveys but is the
    set-up being reproduced.
    """
    if N <= 0:
        raise PopulationError("N must be positive")
    lo, hi = float(y_range[0]), float(y_range[1])
    cuts = np.asarray(cutpoints, dtype=np.float64)
    if (np.diff(cuts) <= 0).any() or (cuts.size and (cuts[0] <= lo or cuts[-1] >= hi)):
        raise PopulationError("cutpoints must be ascending and inside y_range")
    rng = as_generator(seed)
    y = lo + (hi - lo) * rng.random(N)
    strata = np.searchsorted(cuts, y, side="right") + 1
    H = cuts.size + 1
    sizes = np.bincount(strata, minlength=H + 1)[1:]
    if (sizes == 0).any():
        warnings.warn(f"empty post-strata {[int(v) for v in np.flatnonzero(sizes == 0) + 1]}", stacklevel=2)
    ids = np.arange(1, N + 1)
    return Population(ids, np.zeros(N), y, np.zeros(N, bool), np.ones(N, bool), None, strata)


def _linear_model(model):
    a, b, u_sd = model
    if u_sd <= 0:
        raise PopulationError("u_sd must be positive")
    return float(a), float(b), float(u_sd)


def gen_outlier_population(
    N: int = 100,
    x_mean: float = 8000.0,
    x_sd: float = 2000.0,
    outlier_id: int = 1,
    outlier_x: float = 50000.0,
    model=(1000.0, 0.2, 500.0),
    seed: int = 0,
) -> Population:
    """Gaussian x with one fixed outlier, y = a + b*x + u with gaussian u.

    Draw order: N normals for x (the outlier's draw is overwritten), then N
    normals for u.
    """
    if N < 2:
        raise PopulationError("N must be at least 2")
    if x_sd <= 0:
        raise PopulationError("x_sd must be positive")
    if not 1 <= outlier_id <= N:
        raise PopulationError(f"outlier_id {outlier_id} outside 1..{N}")
    a, b, u_sd = _linear_model(model)
    rng = as_generator(seed)
    x = x_mean + x_sd * rng.standard_normal(N)
    x[outlier_id - 1] = outlier_x
    y = a + b * x + u_sd * rng.standard_normal(N)
    ids = np.arange(1, N + 1)
    return Population(ids, x, y, np.ones(N, bool), np.ones(N, bool))


def gen_strata_jumper_population(
    N1: int = 10_000,
    N2: int = 100,
    jumper_id: int = 1,
    x_mean: float = 8000.0,
    x_sd: float = 2000.0,
    model=(1000.0, 0.2, 500.0),
    seed: int = 0,
) -> Population:
    """Two design strata; x and y exist only for design stratum 2 and the jumper.

    Ids ``1..N1`` form design stratum 1 and ``N1+1..N1+N2`` stratum 2. Units
    carrying x form post-stratum 2, everyone else post-stratum 1. Draw order:
    x for the jumper then for stratum 2 in id order, then u in the same order.
    """
    if N1 <= 0 or N2 <= 0:
        raise PopulationError("stratum sizes must be positive")
    if not 1 <= jumper_id <= N1:
        raise PopulationError(f"jumper_id {jumper_id} must lie in design stratum 1")
    if x_sd <= 0:
        raise PopulationError("x_sd must be positive")
    a, b, u_sd = _linear_model(model)
    N = N1 + N2
    rng = as_generator(seed)
    carry = np.concatenate([[jumper_id - 1], np.arange(N1, N)])
    xs = x_mean + x_sd * rng.standard_normal(carry.size)
    ys = a + b * xs + u_sd * rng.standard_normal(carry.size)
    x = np.zeros(N)
    y = np.zeros(N)
    has = np.zeros(N, bool)
    x[carry] = xs
    y[carry] = ys
    has[carry] = True
    sd = np.where(np.arange(N) < N1, 1, 2)
    sp = np.where(has, 2, 1)
    return Population(np.arange(1, N + 1), x, y, has, has.copy(), sd, sp)


def population_stat(pop: Population, which: str, domain: Optional[int] = None) -> float:
    """Exact total or mean of x or y over the population or a post-stratum."""
    try:
        scale, variable = which.split("_")
    except ValueError:
        raise PopulationError(f"unknown statistic {which!r}") from None
    if scale not in ("total", "mean") or variable not in ("x", "y"):
        raise PopulationError(f"unknown statistic {which!r}")
    mask = pop.domain_mask(domain)
    vals = pop.values(variable, mask)[mask]
    total = math.fsum(vals)
    if scale == "total":
        return total
    if vals.size == 0:
        raise PopulationError("empty domain")
    return total / vals.size
