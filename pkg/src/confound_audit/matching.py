"""Exact stratified matching.

Within every stratum defined by (recruitment channel) x (10-year age bin) x
(gender) x (a configured list of binary covariates), the output keeps equal
numbers of positive and negative records: min(n_pos, n_neg) of each class,
with the majority class downsampled uniformly without replacement. Strata
where either class is absent are dropped entirely.

Balancing makes every matched covariate exactly independent of the label in
the output: for any function of the stratum key, its empirical distribution
given label=1 equals that given label=0.
"""

from __future__ import annotations

from dataclasses import dataclass

from .cohort import Cohort, ParticipantRecord, child_manifest
from .errors import EmptyResult, MissingCovariate, OverlappingInputs
from .rngs import substream

AGE_BIN_WIDTH = 10
AGE_BIN_START = 18
AGE_OPEN_BIN_START = 78  # 18-27, 28-37, ..., 68-77, 78+

# Covariates matched in held-out test sets: the five acute flags plus the
# derived any-symptom aggregate (new_continuous_cough is captured by the
# aggregate).
TEST_SET = (
    "cough",
    "sore_throat",
    "asthma",
    "shortness_of_breath",
    "runny_blocked_nose",
    "any_symptom",
)

# Covariates matched in training sets: looser on the aggregate, but adds the
# chronic-condition and smoker flags.
TRAIN_SET = (
    "cough",
    "sore_throat",
    "asthma",
    "shortness_of_breath",
    "runny_blocked_nose",
    "copd_emphysema",
    "smoker",
)


def age_bin(age_years: int) -> str:
    """10-year bins anchored at 18 with an open final bin."""
    if age_years >= AGE_OPEN_BIN_START:
        return f"{AGE_OPEN_BIN_START}+"
    lo = AGE_BIN_START + AGE_BIN_WIDTH * ((age_years - AGE_BIN_START) // AGE_BIN_WIDTH)
    return f"{lo}-{lo + AGE_BIN_WIDTH - 1}"


@dataclass(frozen=True)
class MatchSpec:
    covariates: tuple[str, ...] = TEST_SET
    include_channel: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.covariates:
            raise ValueError("covariates must be nonempty")
        object.__setattr__(self, "covariates", tuple(self.covariates))


def stratum_key(record: ParticipantRecord, spec: MatchSpec) -> tuple:
    """Total, deterministic key; every record maps to exactly one stratum."""
    if record.age_years is None:
        raise MissingCovariate("age_years")
    parts: list = []
    if spec.include_channel:
        parts.append(record.channel)
    parts.append(age_bin(record.age_years))
    parts.append(record.gender)
    for name in spec.covariates:
        if name != "any_symptom" and not hasattr(record.symptoms, name):
            raise MissingCovariate(name)
        parts.append(int(record.symptoms.flag(name)))
    return tuple(parts)


@dataclass(frozen=True)
class StratumBalance:
    key: tuple
    n_pos_in: int
    n_neg_in: int
    n_kept_per_class: int


@dataclass(frozen=True)
class BalanceReport:
    strata: tuple[StratumBalance, ...]  # lexicographic key order
    n_kept: int
    n_dropped: int

    def to_dict(self) -> dict:
        return {
            "n_kept": self.n_kept,
            "n_dropped": self.n_dropped,
            "strata": [
                {
                    "key": list(map(str, s.key)),
                    "n_pos_in": s.n_pos_in,
                    "n_neg_in": s.n_neg_in,
                    "n_kept_per_class": s.n_kept_per_class,
                }
                for s in self.strata
            ],
        }


def match_exact(
    cohort: Cohort,
    spec: MatchSpec,
    disjoint_from: Cohort | None = None,
) -> tuple[Cohort, BalanceReport]:
    """Balance class counts exactly within every stratum.

    Majority-class subsampling draws from a per-stratum RNG substream derived
    from (seed, stratum key), over members sorted by id, so the retained id
    set does not depend on the input ordering. ``disjoint_from`` guards
    against reusing participants across matched train/test constructions: any
    overlap is an error rather than a silent exclusion.
    """
    if disjoint_from is not None:
        overlap = set(cohort.ids()) & set(disjoint_from.ids())
        if overlap:
            raise OverlappingInputs(
                f"{len(overlap)} participant(s) appear in both inputs, e.g. {sorted(overlap)[:3]}"
            )

    strata: dict[tuple, dict[int, list[str]]] = {}
    for r in cohort.records:
        if r.label is None:
            raise MissingCovariate("label")
        key = stratum_key(r, spec)
        strata.setdefault(key, {0: [], 1: []})[r.label].append(r.id)

    kept_ids: set[str] = set()
    balances: list[StratumBalance] = []
    for key in sorted(strata, key=lambda k: tuple(map(str, k))):
        pos, neg = strata[key][1], strata[key][0]
        m = min(len(pos), len(neg))
        balances.append(StratumBalance(key, len(pos), len(neg), m))
        if m == 0:
            continue
        rng = substream(spec.seed, "match", key)
        for members in (pos, neg):
            ordered = sorted(members)
            if len(ordered) == m:
                kept_ids.update(ordered)
            else:
                picked = rng.choice(len(ordered), size=m, replace=False)
                kept_ids.update(ordered[i] for i in sorted(picked.tolist()))

    if not kept_ids:
        raise EmptyResult("every stratum lacked one of the classes")

    records = tuple(r for r in cohort.records if r.id in kept_ids)
    n_dropped = len(cohort.records) - len(records)
    out = Cohort(
        records=records,
        manifest=child_manifest(
            cohort.manifest,
            "match_exact",
            seed=spec.seed,
            covariates=list(spec.covariates),
            include_channel=spec.include_channel,
        ),
    )
    return out, BalanceReport(strata=tuple(balances), n_kept=len(records), n_dropped=n_dropped)
