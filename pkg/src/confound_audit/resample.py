"""Simulated general-population test sets by balanced subsampling.

Given a pool of scored/labelled records, draw (without replacement) a test
set with exact class sizes, an exact symptomatic fraction per class, a 1:1
gender ratio within each class, and (optionally) the same age-bin
distribution in both classes.

Age equalization targets the normalized per-bin minimum of the two classes'
pool availability (the feasible common envelope) and apportions counts with
largest-remainder rounding; the symptomatic and gender constraints are then
spread across bins by controlled rounding so that every marginal is hit
exactly. Cell draws use per-cell RNG substreams over id-sorted members, so
results do not depend on pool ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .cohort import Cohort, child_manifest
from .errors import InsufficientPool
from .matching import age_bin
from .rngs import substream


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _apportion(total: int, weights: list[float]) -> list[int]:
    """Largest-remainder apportionment of ``total`` by ``weights``.

    Ties in remainders resolve toward earlier positions.
    """
    s = sum(weights)
    if s <= 0:
        raise ValueError("weights must have positive sum")
    quotas = [total * w / s for w in weights]
    counts = [int(math.floor(q)) for q in quotas]
    left = total - sum(counts)
    order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:left]:
        counts[i] += 1
    return counts


def _controlled_split(cell_sizes: list[int], part_total: int) -> list[int]:
    """Split ``part_total`` across cells of the given sizes, proportionally,
    such that each part is within [0, cell] and parts sum exactly."""
    remaining_part = part_total
    remaining_all = sum(cell_sizes)
    out = []
    for size in cell_sizes:
        if remaining_all == 0:
            out.append(0)
            continue
        ideal = size * remaining_part / remaining_all
        lo = max(0, remaining_part - (remaining_all - size))
        hi = min(size, remaining_part)
        v = min(hi, max(lo, _round_half_up(ideal)))
        out.append(v)
        remaining_part -= v
        remaining_all -= size
    return out


@dataclass(frozen=True)
class PopulationSpec:
    n_pos: int
    n_neg: int
    p_sym_pos: float = 0.65
    p_sym_neg: float = 0.20
    equalize_age: bool = True
    seed: int = 0

    def validate(self) -> None:
        if self.n_pos < 1 or self.n_neg < 1:
            raise ValueError("class sizes must be >= 1")
        if not (0.0 < self.p_sym_pos < 1.0 and 0.0 < self.p_sym_neg < 1.0):
            raise ValueError("symptomatic fractions must lie in (0, 1)")


@dataclass(frozen=True)
class ResampleReport:
    # achieved counts per (label, symptomatic, gender, age_bin)
    achieved: dict[tuple, int]
    shortfalls: tuple[tuple, ...]

    def n_total(self) -> int:
        return sum(self.achieved.values())


def _pool_index(pool: Cohort) -> dict[tuple, list[str]]:
    index: dict[tuple, list[str]] = {}
    for r in pool.records:
        if r.label is None or r.age_years is None:
            continue
        key = (r.label, r.symptoms.any_symptom, r.gender, age_bin(r.age_years))
        index.setdefault(key, []).append(r.id)
    for members in index.values():
        members.sort()
    return index


def resample_general_population(
    pool: Cohort, spec: PopulationSpec, strict: bool = True
) -> tuple[Cohort, ResampleReport]:
    """Draw a general-population style test set from ``pool``.

    With ``strict`` (default) any unsatisfiable cell raises
    ``InsufficientPool``; otherwise the cell takes what is available and is
    flagged in the report.
    """
    spec.validate()
    index = _pool_index(pool)
    genders = ("male", "female")

    # bins present for either class, in a stable order
    bins = sorted({k[3] for k in index})
    avail_by_bin = {
        cls: [sum(len(index.get((cls, s, g, b), [])) for s in (True, False) for g in genders) for b in bins]
        for cls in (1, 0)
    }

    targets: dict[tuple, int] = {}
    for cls, n_cls, p_sym in ((1, spec.n_pos, spec.p_sym_pos), (0, spec.n_neg, spec.p_sym_neg)):
        n_sym = _round_half_up(n_cls * p_sym)
        n_male = n_cls // 2  # odd totals give the extra record to female

        if spec.equalize_age:
            envelope = [min(avail_by_bin[1][i], avail_by_bin[0][i]) for i in range(len(bins))]
            if sum(envelope) == 0:
                raise InsufficientPool("age-envelope", max(spec.n_pos, spec.n_neg), 0)
            per_bin = _apportion(n_cls, [float(e) for e in envelope])
            sym_per_bin = _controlled_split(per_bin, n_sym)
            # males spread over the (bin x symptomatic) cells in fixed order
            cells = []
            for i in range(len(bins)):
                cells.append((bins[i], True, sym_per_bin[i]))
                cells.append((bins[i], False, per_bin[i] - sym_per_bin[i]))
            male_per_cell = _controlled_split([c[2] for c in cells], n_male)
            for (b, sym, size), m in zip(cells, male_per_cell):
                targets[(cls, sym, "male", b)] = m
                targets[(cls, sym, "female", b)] = size - m
        else:
            block_sizes = [n_sym, n_cls - n_sym]
            male_per_block = _controlled_split(block_sizes, n_male)
            for sym, size, m in zip((True, False), block_sizes, male_per_block):
                targets[(cls, sym, "male", None)] = m
                targets[(cls, sym, "female", None)] = size - m

    chosen: set[str] = set()
    achieved: dict[tuple, int] = {}
    shortfalls: list[tuple] = []
    for cell in sorted(targets, key=lambda c: tuple(map(str, c))):
        need = targets[cell]
        if need == 0:
            continue
        cls, sym, gender, b = cell
        if b is None:
            members = sorted(
                m for bb in bins for m in index.get((cls, sym, gender, bb), [])
            )
        else:
            members = index.get((cls, sym, gender, b), [])
        if len(members) < need:
            if strict:
                raise InsufficientPool(str(cell), need, len(members))
            shortfalls.append(cell)
            need = len(members)
        rng = substream(spec.seed, "resample", cell)
        picked = rng.choice(len(members), size=need, replace=False) if need < len(members) else range(need)
        chosen.update(members[i] for i in picked)

    records = tuple(r for r in pool.records if r.id in chosen)
    for r in records:
        key = (r.label, r.symptoms.any_symptom, r.gender, age_bin(r.age_years))
        achieved[key] = achieved.get(key, 0) + 1
    out = Cohort(
        records=records,
        manifest=child_manifest(
            pool.manifest,
            "resample",
            seed=spec.seed,
            n_pos=spec.n_pos,
            n_neg=spec.n_neg,
            p_sym_pos=spec.p_sym_pos,
            p_sym_neg=spec.p_sym_neg,
            equalize_age=spec.equalize_age,
        ),
    )
    return out, ResampleReport(achieved=achieved, shortfalls=tuple(shortfalls))
