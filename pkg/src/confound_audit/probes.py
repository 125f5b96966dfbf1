"""Unmeasured-confounder probes and their numerical substrate.

Two complementary probes interrogate whether a classifier's residual accuracy
on a class-balanced test set comes from signal genuinely tied to the positive
class or from variation that also lives among negatives:

* Weak-robust curation: project every record onto the leading principal
  components of the *negative* records only, train an intentionally
  under-capacity linear model in that k-dimensional space, and remove its
  correct classifications from a running curated set. A parallel calibration
  task (an easy two-class problem in the same feature space) determines the
  capacity threshold tau: the smallest k at which the weak model family is
  demonstrably strong enough to solve an easy task. Accuracy the main
  classifier loses on the curated set for k <= tau is attributed to
  confounding rather than to class signal.

* Nearest-neighbour substitution: replace each positive record's features and
  score with those of its nearest negative neighbour. Accuracy that survives
  the substitution lives inside the negative-class feature span and is
  attributed to unmatched or unmeasured confounders, provided the chosen
  neighbours are many distinct records.

PCA is computed by eigendecomposition of the covariance matrix with a fixed
sign convention (the largest-magnitude coordinate of each component is made
positive) so probe outputs are bit-reproducible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import norm

from .cohort import Cohort, ParticipantRecord, SymptomProfile, make_manifest
from .errors import NoNegatives, OneClassOnly, RankDeficientWarning
from .metrics import ScoredLabels, auc, uar
from .rngs import substream

# -- principal components ------------------------------------------------------


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # rows orthonormal, ordered by explained variance
    explained_variances: np.ndarray
    fitted_on: str = "neg_only"

    @property
    def n_components(self) -> int:
        return self.components.shape[0]


def pca_fit(features: np.ndarray, n_components: int, fitted_on: str = "neg_only") -> PcaModel:
    """Centered PCA via covariance eigendecomposition.

    Components whose variance is numerically zero are not returned: if the
    data's rank cannot support ``n_components``, the model is truncated and a
    ``RankDeficientWarning`` is emitted.
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    n, d = x.shape
    if n < n_components + 1:
        raise ValueError(f"need at least n_components+1={n_components + 1} records, have {n}")
    if not (1 <= n_components <= d):
        raise ValueError("n_components must lie in [1, feature_dim]")

    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals, kind="stable")[::-1]
    eigvals = np.maximum(eigvals[order], 0.0)
    eigvecs = eigvecs[:, order]

    tol = max(eigvals[0], 1.0) * 1e-12
    rank = int(np.sum(eigvals > tol))
    k = n_components
    if rank < n_components:
        warnings.warn(
            f"requested {n_components} components but data rank is {rank}; truncating",
            RankDeficientWarning,
        )
        k = max(rank, 1)

    components = eigvecs[:, :k].T.copy()
    for i in range(k):
        j = int(np.argmax(np.abs(components[i])))
        if components[i, j] < 0:
            components[i] = -components[i]
    return PcaModel(
        mean=mean,
        components=components,
        explained_variances=eigvals[:k],
        fitted_on=fitted_on,
    )


def pca_project(model: PcaModel, features: np.ndarray, k: int | None = None) -> np.ndarray:
    k = model.n_components if k is None else k
    return (np.asarray(features, dtype=float) - model.mean) @ model.components[:k].T


def pca_reconstruct(model: PcaModel, projected: np.ndarray) -> np.ndarray:
    k = projected.shape[1]
    return projected @ model.components[:k] + model.mean


# -- weak linear classifier -----------------------------------------------------


@dataclass(frozen=True)
class WeakModel:
    """Linear max-margin classifier on standardized inputs."""

    feature_mean: np.ndarray
    feature_scale: np.ndarray
    weights: np.ndarray
    bias: float

    def decision(self, features: np.ndarray) -> np.ndarray:
        z = (np.asarray(features, dtype=float) - self.feature_mean) / self.feature_scale
        return z @ self.weights + self.bias

    def predict(self, features: np.ndarray) -> np.ndarray:
        return (self.decision(features) >= 0.0).astype(int)


def train_weak_linear(features: np.ndarray, labels: np.ndarray, l2: float = 1.0,
                      n_iter: int = 200) -> WeakModel:
    """Deterministic full-batch subgradient descent on L2-regularized hinge
    loss, after per-column standardization.

    The update is order-independent (a full-batch sum), initialization is
    zero, and the step schedule is fixed, so identical inputs always yield the
    identical model; flipping every label exactly negates the decision
    function.
    """
    x = np.asarray(features, dtype=float)
    y01 = np.asarray(labels, dtype=int)
    if x.ndim != 2 or x.shape[0] != y01.size:
        raise ValueError("features and labels must align")
    if not ((y01 == 1).any() and (y01 == 0).any()):
        raise OneClassOnly("weak model training needs both classes")
    y = 2.0 * y01 - 1.0

    mean = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0.0] = 1.0
    z = (x - mean) / scale

    n = z.shape[0]
    w = np.zeros(z.shape[1])
    b = 0.0
    for t in range(1, n_iter + 1):
        eta = 1.0 / (l2 * t)
        margin = y * (z @ w + b)
        viol = margin < 1.0
        grad_w = l2 * w - (y[viol, None] * z[viol]).sum(axis=0) / n
        grad_b = -y[viol].sum() / n
        w = w - eta * grad_w
        b = b - eta * grad_b
    return WeakModel(feature_mean=mean, feature_scale=scale, weights=w, bias=float(b))


# -- probe configuration and results ---------------------------------------------


@dataclass(frozen=True)
class WeakProbeConfig:
    k_max: int = 10
    calibration_uar_threshold: float = 0.8
    seed: int = 0
    distance: str = "euclidean"  # or "manhattan"
    nn_auc_threshold: float = 0.55
    nn_min_distinct_fraction: float = 0.10

    def __post_init__(self):
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if not (0.5 < self.calibration_uar_threshold < 1.0):
            raise ValueError("calibration threshold must lie in (0.5, 1)")
        if self.distance not in ("euclidean", "manhattan"):
            raise ValueError("distance must be euclidean or manhattan")


@dataclass(frozen=True)
class ProbeResult:
    ks: tuple[int, ...] = ()
    weak_uar_matched: tuple[float, ...] = ()
    weak_uar_calibration: tuple[float, ...] = ()
    tau: int | None = None
    removed_ids_per_k: tuple[tuple[str, ...], ...] = ()
    curated_auc_per_k: tuple[float | None, ...] = ()
    uncurated_auc: float | None = None
    curated_auc_at_tau: float | None = None
    curated_size_per_k: tuple[int, ...] = ()
    # nearest-neighbour probe outputs
    substitution_map: dict[str, str] = field(default_factory=dict)
    distinct_neighbours: int | None = None
    pre_auc: float | None = None
    post_auc: float | None = None
    attribution_flag: bool | None = None

    def to_dict(self) -> dict:
        return {
            "ks": list(self.ks),
            "weak_uar_matched": list(self.weak_uar_matched),
            "weak_uar_calibration": list(self.weak_uar_calibration),
            "tau": self.tau,
            "removed_per_k": [len(r) for r in self.removed_ids_per_k],
            "curated_auc_per_k": list(self.curated_auc_per_k),
            "curated_size_per_k": list(self.curated_size_per_k),
            "uncurated_auc": self.uncurated_auc,
            "curated_auc_at_tau": self.curated_auc_at_tau,
            "distinct_neighbours": self.distinct_neighbours,
            "pre_auc": self.pre_auc,
            "post_auc": self.post_auc,
            "attribution_flag": self.attribution_flag,
        }


def _cohort_scores(cohort: Cohort, scores) -> np.ndarray:
    if scores is None:
        out = cohort.scores()
        if np.isnan(out).any():
            raise ValueError("cohort records lack scores and no score map was given")
        return out
    if isinstance(scores, dict):
        return np.array([scores[r.id] for r in cohort.records], dtype=float)
    arr = np.asarray(scores, dtype=float)
    if arr.size != len(cohort):
        raise ValueError("score sequence does not align with the cohort")
    return arr


def weak_robust_curate(
    matched: Cohort,
    calibration: Cohort,
    cfg: WeakProbeConfig,
    main_scores=None,
) -> ProbeResult:
    """Run the weak-model curation probe.

    For each k = 1..k_max, records are projected onto the first k principal
    components of the negative records only; a weak linear model is fitted
    and its correct classifications are removed from the running curated set.
    The same projection is applied to the calibration cohort to find tau, the
    smallest k whose calibration UAR exceeds the configured threshold. The
    main classifier's AUC is re-evaluated on the curated set after each k.

    A weak model that predicts a single class is degenerate (it discriminates
    nothing) and triggers no removals at that k. If the calibration task
    never passes, tau is None and no attribution region is reported.
    """
    y = matched.labels()
    if (y == -1).any():
        raise ValueError("matched cohort has unlabelled records")
    if not ((y == 1).any() and (y == 0).any()):
        raise OneClassOnly("matched cohort needs both classes")
    x = matched.feature_matrix()
    xc = calibration.feature_matrix()
    yc = calibration.labels()
    scores = _cohort_scores(matched, main_scores)
    ids = matched.ids()

    k_cap = min(cfg.k_max, x.shape[1])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficientWarning)
        pca = pca_fit(x[y == 0], n_components=k_cap, fitted_on="neg_only")
    k_cap = pca.n_components
    z_all = pca_project(pca, x)
    z_cal = pca_project(pca, xc)

    curated = set(ids)
    ks, uar_m, uar_c, removed_per_k, curated_auc, curated_sizes = [], [], [], [], [], []
    tau = None
    uncurated_auc = auc(ScoredLabels(scores, y))
    for k in range(1, k_cap + 1):
        weak = train_weak_linear(z_all[:, :k], y)
        preds = weak.predict(z_all[:, :k])
        uar_matched = uar(preds, y)

        weak_cal = train_weak_linear(z_cal[:, :k], yc)
        uar_calib = uar(weak_cal.predict(z_cal[:, :k]), yc)
        if tau is None and uar_calib > cfg.calibration_uar_threshold:
            tau = k

        if preds.min() == preds.max():
            newly_removed: tuple[str, ...] = ()
        else:
            correct = preds == y
            newly_removed = tuple(ids[i] for i in range(len(ids)) if correct[i] and ids[i] in curated)
            curated.difference_update(newly_removed)

        keep_mask = np.array([rid in curated for rid in ids])
        if keep_mask.any() and (y[keep_mask] == 1).any() and (y[keep_mask] == 0).any():
            cur_auc = auc(ScoredLabels(scores[keep_mask], y[keep_mask]))
        else:
            cur_auc = None

        ks.append(k)
        uar_m.append(float(uar_matched))
        uar_c.append(float(uar_calib))
        removed_per_k.append(newly_removed)
        curated_auc.append(cur_auc)
        curated_sizes.append(int(keep_mask.sum()))

    return ProbeResult(
        ks=tuple(ks),
        weak_uar_matched=tuple(uar_m),
        weak_uar_calibration=tuple(uar_c),
        tau=tau,
        removed_ids_per_k=tuple(removed_per_k),
        curated_auc_per_k=tuple(curated_auc),
        curated_size_per_k=tuple(curated_sizes),
        uncurated_auc=float(uncurated_auc),
        curated_auc_at_tau=(curated_auc[tau - 1] if tau is not None else None),
    )


def nn_substitute(matched: Cohort, cfg: WeakProbeConfig, rescore=None) -> ProbeResult:
    """Replace each positive record's features/score with its nearest
    negative neighbour's, then re-evaluate.

    Distances are computed in feature space with the configured metric; ties
    resolve to the lowest record index. Negative records are untouched. The
    attribution flag is raised when the post-substitution AUC exceeds the
    configured threshold and the chosen neighbours are many distinct records.
    """
    y = matched.labels()
    if not (y == 0).any():
        raise NoNegatives("substitution requires negative records")
    x = matched.feature_matrix()
    ids = matched.ids()

    pos_idx = np.nonzero(y == 1)[0]
    neg_idx = np.nonzero(y == 0)[0]
    metric = "cityblock" if cfg.distance == "manhattan" else "euclidean"
    nearest = np.empty(pos_idx.size, dtype=int)
    chunk = max(1, int(2_000_000 / max(1, neg_idx.size)))
    for start in range(0, pos_idx.size, chunk):
        block = pos_idx[start : start + chunk]
        d = cdist(x[block], x[neg_idx], metric=metric)
        nearest[start : start + chunk] = np.argmin(d, axis=1)

    substituted = x.copy()
    substituted[pos_idx] = x[neg_idx[nearest]]

    if rescore is None:
        pre_scores = _cohort_scores(matched, None)
        post_scores = pre_scores.copy()
        post_scores[pos_idx] = pre_scores[neg_idx[nearest]]
    else:
        pre_scores = np.asarray(rescore(x), dtype=float)
        post_scores = np.asarray(rescore(substituted), dtype=float)

    pre_auc = auc(ScoredLabels(pre_scores, y))
    post_auc = auc(ScoredLabels(post_scores, y))
    distinct = int(np.unique(nearest).size)
    frac = distinct / max(1, pos_idx.size)
    flag = bool(
        post_auc > cfg.nn_auc_threshold
        and distinct >= 2
        and frac >= cfg.nn_min_distinct_fraction
    )
    return ProbeResult(
        substitution_map={ids[i]: ids[neg_idx[nearest[j]]] for j, i in enumerate(pos_idx)},
        distinct_neighbours=distinct,
        pre_auc=float(pre_auc),
        post_auc=float(post_auc),
        attribution_flag=flag,
    )


# -- default calibration task ------------------------------------------------------


def make_calibration_cohort(
    feature_dim: int,
    n_per_class: int = 200,
    seed: int = 0,
    bayes_accuracy: float = 0.99,
) -> Cohort:
    """Synthetic easy two-class task in the given feature space.

    The classes are unit-variance Gaussians separated along one random
    direction by 2 * Phi^{-1}(bayes_accuracy), so an unconstrained linear
    classifier reaches the requested accuracy at full dimension while a
    rank-limited one must recover the direction first.
    """
    rng = substream(seed, "calibration")
    direction = rng.normal(size=feature_dim)
    direction /= np.linalg.norm(direction)
    separation = 2.0 * norm.ppf(bayes_accuracy)
    records = []
    for c in (0, 1):
        centre = (separation / 2.0) * direction * (1.0 if c == 1 else -1.0)
        noise = rng.normal(size=(n_per_class, feature_dim))
        for i in range(n_per_class):
            records.append(
                ParticipantRecord(
                    id=f"cal-{c}-{i:05d}",
                    label=c,
                    symptoms=SymptomProfile(),
                    age_years=40,
                    gender="male" if i % 2 == 0 else "female",
                    channel="synthetic",
                    features=centre + noise[i],
                )
            )
    return Cohort(
        records=tuple(records),
        manifest=make_manifest(f"calibration(seed={seed})", step="calibration", bayes_accuracy=bayes_accuracy),
    )
