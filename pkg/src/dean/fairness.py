"""Group-fairness adaptations: regularized training loss, per-group AUC
report, greedy submodel pruning, and evolutionary weight search.

Rows carry a binary group attribute (0 protected, 1 unprotected).  The
fairness score maps the gap between per-group detection AUCs onto
[0, 1] with ideal value 0.5: score = 0.5 + (auc_group1 - auc_group0) / 2.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import LabeledDataset, apply_standardizer
from .ensemble import Ensemble, base_score_matrix, with_weights
from .metrics import auc_roc
from .rng import generator


@dataclass
class GaConfig:
    population: int = 64
    generations: int = 200
    mutation_sigma: float = 0.05
    elite: int = 4
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.elite < self.population:
            raise ValueError("need 0 < elite < population")
        if self.generations < 1:
            raise ValueError("generations must be >= 1")
        if self.mutation_sigma <= 0:
            raise ValueError("mutation_sigma must be > 0")


@dataclass
class FairnessConfig:
    theta: float = 0.1
    prune_fraction: float = 0.1
    ga: GaConfig = field(default_factory=GaConfig)

    def __post_init__(self):
        if not np.isfinite(self.theta) or self.theta < 0:
            raise ValueError("theta must be finite and >= 0")
        if not 0.0 <= self.prune_fraction < 1.0:
            raise ValueError("prune_fraction must be in [0, 1)")


@dataclass
class FairnessReport:
    auc_group0: float
    auc_group1: float
    fairness_score: float
    overall_auc: float


def _check_groups(labels, groups, n):
    labels = np.asarray(labels, dtype=np.int64)
    groups = np.asarray(groups, dtype=np.int64)
    if labels.shape != (n,) or groups.shape != (n,):
        raise ValueError("scores, labels and groups must have equal length")
    for g in (0, 1):
        sel = labels[groups == g]
        if sel.size == 0:
            raise ValueError(f"group {g} has no rows")
        if sel.min() == sel.max():
            raise ValueError(
                f"group {g} contains a single class; per-group AUC undefined")
    return labels, groups


def fairness_metric(scores, labels, groups) -> FairnessReport:
    """Per-group AUC-ROC and the 0.5-centered gap summary.

    Both groups must contain both classes; a degenerate group raises
    instead of silently reporting the ideal 0.5.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels, groups = _check_groups(labels, groups, scores.shape[0])
    auc0 = auc_roc(scores[groups == 0], labels[groups == 0])
    auc1 = auc_roc(scores[groups == 1], labels[groups == 1])
    fs = min(1.0, max(0.0, 0.5 + (auc1 - auc0) / 2.0))
    return FairnessReport(auc0, auc1, fs, auc_roc(scores, labels))


def fairness_deviation(report: FairnessReport) -> float:
    return abs(report.fairness_score - 0.5)


def fair_loss_terms(outputs, groups, theta):
    """(penalty, L0, L1, Lfair) for a batch of network outputs.

    L1/L0 are the mean outputs of the unprotected/protected rows and
    Lfair = |L1 - L0| / (|L1| + |L0|), taken as 0 when both means are zero.
    A batch missing one group contributes no penalty (means of the absent
    group reported as 0).
    """
    y = np.asarray(outputs, dtype=np.float64)
    g = np.asarray(groups, dtype=np.int64)
    if y.shape != g.shape or y.ndim != 1:
        raise ValueError("outputs and groups must be 1-D and equal length")
    y0, y1 = y[g == 0], y[g == 1]
    if y0.size == 0 or y1.size == 0:
        return 0.0, float(y0.mean()) if y0.size else 0.0, \
            float(y1.mean()) if y1.size else 0.0, 0.0
    l0, l1 = float(y0.mean()), float(y1.mean())
    den = abs(l1) + abs(l0)
    lfair = abs(l1 - l0) / den if den > 0 else 0.0
    return theta * lfair, l0, l1, lfair


def output_gap(e: Ensemble, data, groups) -> float:
    """Mean over members of |L1 - L0| on raw data rows: the quantity the
    regularized loss pushes down."""
    from .submodel import submodel_outputs

    X = apply_standardizer(e.scaler, data.values if hasattr(data, "values")
                           else np.asarray(data, dtype=np.float64))
    g = np.asarray(groups, dtype=np.int64)
    gaps = []
    for s in e.submodels:
        out = submodel_outputs(s, X)
        gaps.append(abs(float(out[g == 1].mean()) - float(out[g == 0].mean())))
    return float(np.mean(gaps))


def _eval_arrays(e: Ensemble, eval_data: LabeledDataset):
    if eval_data.labels is None or eval_data.groups is None:
        raise ValueError("evaluation data needs labels and groups")
    labels, groups = _check_groups(eval_data.labels, eval_data.groups,
                                   eval_data.rows)
    powered = base_score_matrix(e, eval_data) ** e.power
    return powered, labels, groups


def _deviation_of(scores, labels, groups) -> float:
    return fairness_deviation(_metric_fast(scores, labels, groups))


def _metric_fast(scores, labels, groups) -> FairnessReport:
    auc0 = auc_roc(scores[groups == 0], labels[groups == 0])
    auc1 = auc_roc(scores[groups == 1], labels[groups == 1])
    fs = min(1.0, max(0.0, 0.5 + (auc1 - auc0) / 2.0))
    return FairnessReport(auc0, auc1, fs, auc_roc(scores, labels))


def prune_for_fairness(e: Ensemble, eval_data: LabeledDataset,
                       fraction: float) -> Ensemble:
    """Greedily drop floor(fraction * n) members, each step removing the one
    whose removal leaves the smallest |fairness - 0.5| (ties: lowest index).
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError("fraction must be in [0, 1)")
    steps = int(fraction * len(e))
    if steps == 0:
        return with_weights(e, e.weights.copy())
    if steps >= len(e):
        raise ValueError("pruning would empty the ensemble")
    powered, labels, groups = _eval_arrays(e, eval_data)
    keep = list(range(len(e)))
    weights = e.weights.copy()
    for _ in range(steps):
        best_j, best_dev = None, np.inf
        total = powered[:, keep] @ weights[keep]
        for j in keep:
            scores = total - weights[j] * powered[:, j]
            dev = _deviation_of(scores, labels, groups)
            if dev < best_dev:
                best_dev, best_j = dev, j
        keep.remove(best_j)
    pruned = Ensemble([e.submodels[i] for i in keep], e.power,
                      weights[keep], e.scaler, e.config_echo)
    return pruned


def evolve_weights(e: Ensemble, eval_data: LabeledDataset,
                   ga: GaConfig) -> np.ndarray:
    """Evolutionary search for member weights minimizing |fairness - 0.5|.

    mu+lambda style: the all-ones vector seeds generation 0 alongside
    Gaussian perturbations (clamped nonnegative, renormalized to sum n);
    elites survive unchanged, the rest are mutated elites.  Fitness is
    -|fairness - 0.5| with overall AUC as tie-breaker.  Deterministic in
    ga.seed, and never worse than all-ones thanks to elitism.
    """
    powered, labels, groups = _eval_arrays(e, eval_data)
    n = len(e)
    rng = generator(ga.seed)

    def normalize(w):
        w = np.maximum(w, 0.0)
        s = w.sum()
        return np.ones(n) if s <= 0 else w * (n / s)

    def fitness(w):
        scores = powered @ w
        rep = _metric_fast(scores, labels, groups)
        return (-fairness_deviation(rep), rep.overall_auc)

    population = [np.ones(n)]
    population += [normalize(1.0 + rng.normal(0.0, ga.mutation_sigma, n))
                   for _ in range(ga.population - 1)]
    scored = sorted(((fitness(w), i, w) for i, w in enumerate(population)),
                    key=lambda t: (t[0][0], t[0][1]), reverse=True)
    for _ in range(ga.generations):
        elites = [w for _, _, w in scored[:ga.elite]]
        children = []
        for _ in range(ga.population - ga.elite):
            parent = elites[rng.integers(0, ga.elite)]
            children.append(normalize(
                parent + rng.normal(0.0, ga.mutation_sigma, n)))
        population = elites + children
        scored = sorted(((fitness(w), i, w) for i, w in enumerate(population)),
                        key=lambda t: (t[0][0], t[0][1]), reverse=True)
    return scored[0][2].copy()
