"""End-to-end pipelines and reproducible run manifests.

A pipeline is a pure function of its RunConfig: rerunning from the emitted
manifest reproduces every CSV byte-for-byte. The bundled ``bias-demo``
pipeline generates a synthetic symptom-driven cohort with no true class
signal, trains a feature-based classifier, and walks the full evaluation
chain: randomised-split ROC, exact matching, stratified AUC, expected-utility
curves, and both confounder probes.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .cohort import Cohort, SplitSpec, split_cohort
from .errors import ConfigError
from .forest import build_encoding, encode_cohort, fit_forest
from .matching import MatchSpec, match_exact
from .metrics import (
    ScoredLabels,
    auc_ci,
    calibration_bins,
    roc_curve,
    stratified_auc,
    table_2x2_stats,
)
from .probes import WeakProbeConfig, make_calibration_cohort, nn_substitute, weak_robust_curate
from .report import ReportBundle, emit_figure, _csv_text
from .synth import SynthConfig, generate_cohort
from .utility import UtilityParams, default_pi_grid, max_eu_curve

_SYNTH_DEFAULTS = dict(
    n_population=6000,
    prevalence=0.25,
    enrolment="symptoms_based",
    signal_strength=0.0,
    confounder_strength=5.0,
    feature_dim=12,
)


@dataclass
class RunConfig:
    pipeline: str = "bias-demo"
    seed: int = 0
    threads: int = 1
    out_dir: str = "report"
    n_trees: int = 50
    synth: dict = field(default_factory=dict)
    utility: dict = field(default_factory=dict)  # r_t, epsilon, delta, pi_max
    probe: dict = field(default_factory=dict)  # k_max, calibration_uar_threshold, distance
    metrics: dict = field(default_factory=dict)  # min_per_class, fdr

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(data: dict) -> "RunConfig":
        known = {f.name for f in RunConfig.__dataclass_fields__.values()}
        for key in data:
            if key not in known:
                raise ConfigError(key)
        cfg = RunConfig(**data)
        for key in cfg.synth:
            if key not in SynthConfig.__dataclass_fields__:
                raise ConfigError(f"synth.{key}")
        for key in cfg.utility:
            if key not in ("r_t", "epsilon", "delta", "pi_max"):
                raise ConfigError(f"utility.{key}")
        for key in cfg.probe:
            if key not in WeakProbeConfig.__dataclass_fields__:
                raise ConfigError(f"probe.{key}")
        for key in cfg.metrics:
            if key not in ("min_per_class", "fdr"):
                raise ConfigError(f"metrics.{key}")
        if cfg.pipeline not in PIPELINES:
            raise ConfigError("pipeline", f"unknown pipeline {cfg.pipeline!r}")
        return cfg


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _any_symptom_table(cohort: Cohort) -> list[list[int]]:
    t = [[0, 0], [0, 0]]
    for r in cohort.records:
        t[int(r.symptoms.any_symptom)][int(r.label)] += 1
    return t


def _scores_map(cohort: Cohort, scores: np.ndarray) -> dict[str, float]:
    return {r.id: float(s) for r, s in zip(cohort.records, scores)}


def bias_demo(cfg: RunConfig) -> ReportBundle:
    synth_cfg = SynthConfig(**{**_SYNTH_DEFAULTS, **cfg.synth, "seed": cfg.seed})
    enrolled, _pop = generate_cohort(synth_cfg)
    train, test = split_cohort(enrolled, SplitSpec(train_fraction=0.5, seed=cfg.seed))

    encoding = build_encoding(train, ("features",))
    model = fit_forest(
        encode_cohort(train, encoding), train.labels(),
        n_trees=cfg.n_trees, seed=cfg.seed, threads=cfg.threads,
    )
    test_scores = model.predict_matrix(encode_cohort(test, encoding))
    randomized = ScoredLabels(test_scores, test.labels())

    match_spec = MatchSpec(covariates=("any_symptom",), include_channel=False, seed=cfg.seed)
    matched, balance = match_exact(test, match_spec)
    matched = Cohort(
        records=tuple(
            r.with_score(float(np.clip(s, 0.0, 1.0)))
            for r, s in zip(matched.records, model.predict_matrix(encode_cohort(matched, encoding)))
        ),
        manifest=matched.manifest,
    )
    matched_scored = ScoredLabels(matched.scores(), matched.labels())

    figures: dict[str, str] = {}
    tables: dict[str, str] = {}

    roc_rand = roc_curve(randomized)
    roc_match = roc_curve(matched_scored)
    figures["roc"], tables["roc"] = emit_figure(
        "roc_comparison",
        [
            {"name": "randomised split", "roc": roc_rand, "ci": auc_ci(randomized, "delong")},
            {"name": "matched", "roc": roc_match, "ci": auc_ci(matched_scored, "delong")},
        ],
    )

    up = UtilityParams(
        r_t=cfg.utility.get("r_t", 1.5),
        epsilon=cfg.utility.get("epsilon", 0.2),
        delta=cfg.utility.get("delta", 0.0),
    )
    grid = default_pi_grid(cfg.utility.get("pi_max", 0.1))
    figures["eu"], tables["eu"] = emit_figure(
        "max_eu_vs_prevalence",
        [
            {"name": "randomised split", "points": max_eu_curve(roc_rand, up, grid)},
            {"name": "matched", "points": max_eu_curve(roc_match, up, grid)},
        ],
    )

    strata = stratified_auc(
        matched,
        match_spec,
        min_per_class=cfg.metrics.get("min_per_class", 10),
        q=cfg.metrics.get("fdr", 0.05),
    )
    figures["strata"], tables["strata"] = emit_figure("stratified_forest", strata, reference=0.62)

    probe_cfg = WeakProbeConfig(
        k_max=cfg.probe.get("k_max", 8),
        calibration_uar_threshold=cfg.probe.get("calibration_uar_threshold", 0.8),
        seed=cfg.seed,
        distance=cfg.probe.get("distance", "euclidean"),
    )
    calibration = make_calibration_cohort(synth_cfg.feature_dim, n_per_class=300, seed=cfg.seed)
    weak = weak_robust_curate(matched, calibration, probe_cfg)
    figures["probe"], tables["probe"] = emit_figure("weak_robust_curve", weak)

    nn = nn_substitute(matched, probe_cfg)
    tables["nn_probe"] = _csv_text(
        ["name", "value"],
        [
            ["pre_auc", nn.pre_auc],
            ["post_auc", nn.post_auc],
            ["distinct_neighbours", nn.distinct_neighbours],
            ["attribution_flag", int(bool(nn.attribution_flag))],
        ],
    )

    stats = table_2x2_stats(_any_symptom_table(enrolled))
    figures["two_by_two"], tables["two_by_two"] = emit_figure(
        "two_by_two", _any_symptom_table(enrolled), stats, title="Any symptom vs status (enrolled)"
    )

    bins, ece = calibration_bins(np.clip(test_scores, 0, 1), test.labels())
    figures["calibration"], tables["calibration"] = emit_figure("calibration", bins, ece)

    tables["balance"] = _csv_text(
        ["stratum", "n_pos_in", "n_neg_in", "n_kept_per_class"],
        [["|".join(map(str, s.key)), s.n_pos_in, s.n_neg_in, s.n_kept_per_class] for s in balance.strata],
    )

    manifest = {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "version": __version__,
        "outputs": sorted(figures) + sorted(tables),
    }
    return ReportBundle(figures=figures, tables=tables, manifest=manifest)


PIPELINES = {"bias-demo": bias_demo}


def run_pipeline(cfg: RunConfig) -> ReportBundle:
    """Execute the configured pipeline and stamp the wall time into the
    manifest (the CSV/SVG payloads depend only on the config)."""
    if cfg.pipeline not in PIPELINES:
        raise ConfigError("pipeline", f"unknown pipeline {cfg.pipeline!r}")
    start = time.time()
    bundle = PIPELINES[cfg.pipeline](cfg)
    bundle.manifest["wall_time_s"] = round(time.time() - start, 3)
    return bundle


def run_from_manifest(path: str) -> ReportBundle:
    with open(path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if "config" not in manifest:
        raise ConfigError("config", "manifest lacks a config block")
    return run_pipeline(RunConfig.from_dict(manifest["config"]))
