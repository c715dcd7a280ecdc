"""Spatially clustered factor analysis.

Maximizes a Potts-penalized log-likelihood over per-group factor models and
a group-membership labeling: per-group ML factor fits alternate with
sequential per-sample label updates until the uniqueness matrices stop
moving and no label changes. The sequential sweep plus a keep-if-better
guard on each refit make the objective trace non-decreasing.
"""

from dataclasses import dataclass, replace

import numpy as np
from sklearn.cluster import KMeans

from .errors import DidNotConverge, InvalidInit, RankDeficientSample
from .factor_model import (
    DataMatrix,
    FactorModel,
    fit_ml_efa_from_moment,
    group_log_likelihood,
    log_densities,
)
from .spatial_weights import LocationTable, WeightMatrix

INIT_METHODS = ("kmeans_on_coords", "random")
SWEEP_ORDERS = ("sequential", "synchronous")


@dataclass(frozen=True)
class Partition:
    """Group labels in 1..num_groups for each of n samples."""

    labels: np.ndarray
    num_groups: int

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        if labels.ndim != 1:
            raise ValueError("labels must be a vector")
        if labels.size and (labels.min() < 1 or labels.max() > self.num_groups):
            raise ValueError(f"labels must lie in 1..{self.num_groups}")
        labels = labels.copy()
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def num_samples(self) -> int:
        return self.labels.shape[0]

    def group_sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_groups + 1)[1:]

    def group_rows(self, group: int) -> np.ndarray:
        """Row indices belonging to 1-based group label ``group``."""
        return np.flatnonzero(self.labels == group)


@dataclass(frozen=True)
class ScfaConfig:
    """Tuning knobs for the clustered fit.

    ``min_group_size`` of None resolves to p + 1 at fit time. ``sweep``
    selects the label-update order; the sequential default is what makes
    the objective provably monotone.
    """

    num_factors: int
    num_groups: int
    phi: float = 1.0
    tolerance: float = 1e-6
    max_outer_iters: int = 100
    min_group_size: int | None = None
    init: str = "kmeans_on_coords"
    seed: int = 0
    sweep: str = "sequential"

    def __post_init__(self):
        if self.num_factors < 1 or self.num_groups < 1:
            raise ValueError("num_factors and num_groups must be >= 1")
        if self.phi < 0:
            raise ValueError("phi must be nonnegative")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.init not in INIT_METHODS:
            raise ValueError(f"init must be one of {INIT_METHODS}")
        if self.sweep not in SWEEP_ORDERS:
            raise ValueError(f"sweep must be one of {SWEEP_ORDERS}")
        if self.min_group_size is not None and self.min_group_size < self.num_factors + 1:
            raise ValueError("min_group_size must be at least num_factors + 1")


@dataclass
class FitReport:
    """Converged (or partial) state of a clustered fit."""

    models: list
    partition: Partition
    objective_trace: list
    d_trace: list
    iterations: int
    converged: bool
    per_sample_loglik: np.ndarray


def penalized_objective(
    data: DataMatrix,
    models,
    partition: Partition,
    weights: WeightMatrix,
    phi: float,
) -> float:
    """Log-likelihood plus phi times the summed weights of same-label pairs.

    The penalty counts each unordered pair exactly once.
    """
    labels = partition.labels
    total = 0.0
    for g in range(1, partition.num_groups + 1):
        model = models[g - 1]
        rows = partition.group_rows(g)
        if model is not None and rows.size:
            total += group_log_likelihood(data, model, rows)
    same = labels[:, None] == labels[None, :]
    penalty = 0.5 * float(np.sum(weights.weights * same))
    return total + phi * penalty


def _density_matrix(data: DataMatrix, models) -> np.ndarray:
    """Per-sample log-density under every group model; -inf for missing models."""
    n = data.num_samples
    out = np.full((n, len(models)), -np.inf)
    for g, model in enumerate(models):
        if model is not None:
            out[:, g] = log_densities(data.values, model)
    return out


def _sweep(log_dens, labels, weights, phi, order):
    """One membership pass; returns (new labels, number of moves).

    ``sequential`` uses the most recent labels as it goes; ``synchronous``
    scores every point against the labels from the start of the pass. Ties
    keep the incumbent, then take the smallest group index.
    """
    n, num_groups = log_dens.shape
    new_labels = labels.copy()
    reference = labels if order == "synchronous" else new_labels
    moves = 0
    for i in range(n):
        contrib = np.bincount(
            reference - 1, weights=weights[i], minlength=num_groups
        )
        scores = log_dens[i] + phi * contrib
        best = np.max(scores)
        incumbent = new_labels[i] - 1
        if scores[incumbent] == best:
            continue
        new_labels[i] = int(np.flatnonzero(scores == best)[0]) + 1
        moves += 1
    return new_labels, moves


def update_membership(
    data: DataMatrix,
    models,
    partition: Partition,
    weights: WeightMatrix,
    phi: float,
    *,
    sweep: str = "sequential",
) -> Partition:
    """One label-update pass over all samples.

    Each sample takes the group maximizing its log-density plus phi times
    the summed weights to same-labeled neighbors. Groups without a model
    are skipped.
    """
    log_dens = _density_matrix(data, models)
    new_labels, _ = _sweep(log_dens, partition.labels, weights.weights, phi, sweep)
    return Partition(new_labels, partition.num_groups)


def convergence_statistic(prev_models, curr_models) -> float:
    """Summed relative trace change of the uniqueness diagonals.

    Groups lacking a model on either side contribute 0.
    """
    total = 0.0
    for prev, curr in zip(prev_models, curr_models):
        if prev is None or curr is None:
            continue
        prev_trace = float(np.sum(prev.uniquenesses))
        total += float(np.sum(np.abs(curr.uniquenesses - prev.uniquenesses))) / prev_trace
    return total


def init_partition(locs: LocationTable, num_groups: int, method: str, seed: int) -> Partition:
    """Initial grouping: uniform random labels or k-means on the coordinates."""
    n = locs.num_locations
    if num_groups > n:
        raise ValueError("more groups than samples")
    if method == "random":
        rng = np.random.default_rng(seed)
        labels = rng.integers(1, num_groups + 1, size=n)
    elif method == "kmeans_on_coords":
        if num_groups == 1:
            labels = np.ones(n, dtype=int)
        else:
            km = KMeans(
                n_clusters=num_groups,
                init="k-means++",
                n_init=10,
                max_iter=300,
                random_state=seed,
            ).fit(locs.coords)
            labels = km.labels_ + 1
    else:
        raise ValueError(f"unknown init method {method!r}")
    return Partition(labels, num_groups)


def _fit_group(data, rows, num_factors, prev_model):
    """ML refit of one group with a keep-if-better guard.

    Warm-starts from the previous uniquenesses and falls back to the
    previous model if the refit fails or scores a lower likelihood on the
    group's current rows; either way the likelihood term cannot decrease.
    """
    x = data.values[rows]
    moment = x.T @ x / rows.size
    start = prev_model.uniquenesses if prev_model is not None else None
    try:
        fitted = fit_ml_efa_from_moment(moment, num_factors, start_uniquenesses=start)
    except (DidNotConverge, RankDeficientSample):
        return prev_model
    if prev_model is not None:
        if group_log_likelihood(data, fitted, rows) < group_log_likelihood(
            data, prev_model, rows
        ):
            return prev_model
    return fitted


def fit_scfa(
    data: DataMatrix,
    locs: LocationTable,
    weights: WeightMatrix,
    config: ScfaConfig,
) -> FitReport:
    """Run the alternating fit until the convergence statistic drops below
    tolerance with a move-free sweep, or the iteration budget runs out.

    Each outer iteration refits every group (groups below the minimum size
    keep their previous model; empty groups are retired) and then performs
    one membership sweep. Raises DidNotConverge with the partial report
    attached if the budget is exhausted, and InvalidInit if the initial
    partition has no group of workable size.
    """
    x = data.values
    n, p = x.shape
    min_size = config.min_group_size if config.min_group_size is not None else p + 1
    if min_size < config.num_factors + 1:
        raise ValueError("min_group_size must be at least num_factors + 1")
    num_groups = config.num_groups

    partition = init_partition(locs, num_groups, config.init, config.seed)
    labels = partition.labels.copy()
    models = [None] * num_groups
    retired = np.zeros(num_groups, dtype=bool)
    fit_masks = [None] * num_groups  # membership at each group's last refit attempt

    objective_trace = []
    d_trace = []
    converged = False
    iterations = 0

    for iteration in range(1, config.max_outer_iters + 1):
        iterations = iteration
        prev_models = models
        sizes = np.bincount(labels, minlength=num_groups + 1)[1:]
        models = list(prev_models)
        for g in range(num_groups):
            if retired[g]:
                continue
            mask = labels == g + 1
            rows = np.flatnonzero(mask)
            if rows.size == 0 and prev_models[g] is not None:
                # became empty after having a model: retire for good
                retired[g] = True
                models[g] = None
                continue
            if fit_masks[g] is not None and np.array_equal(mask, fit_masks[g]):
                # same members as the last attempt: identical subproblem,
                # rerunning the optimizer could only jitter the solution
                continue
            fit_masks[g] = mask
            if sizes[g] < min_size:
                if prev_models[g] is None:
                    retired[g] = True  # undersized from the start, nothing to freeze
                continue
            models[g] = _fit_group(data, rows, config.num_factors, prev_models[g])
        if not any(model is not None for model in models):
            raise InvalidInit(
                f"no initial group reaches the minimum size {min_size}"
            )
        if iteration == 1:
            d_value = np.inf
        else:
            d_value = convergence_statistic(prev_models, models)

        log_dens = _density_matrix(data, models)
        labels, moves = _sweep(log_dens, labels, weights.weights, config.phi, config.sweep)
        partition = Partition(labels, num_groups)

        objective_trace.append(
            penalized_objective(data, models, partition, weights, config.phi)
        )
        d_trace.append(d_value)
        if d_value < config.tolerance and moves == 0:
            converged = True
            break

    log_dens = _density_matrix(data, models)
    per_sample = log_dens[np.arange(n), labels - 1]
    report = FitReport(
        models=models,
        partition=partition,
        objective_trace=objective_trace,
        d_trace=d_trace,
        iterations=iterations,
        converged=converged,
        per_sample_loglik=per_sample,
    )
    if not converged:
        raise DidNotConverge(
            f"no convergence within {config.max_outer_iters} outer iterations",
            report=report,
            max_iters=config.max_outer_iters,
        )
    return report


def fit_efa_report(data: DataMatrix, num_factors: int) -> FitReport:
    """Plain single-group factor fit wrapped in the clustered report shape.

    Used as the non-spatial baseline; the objective trace holds the final
    log-likelihood and the convergence statistic is trivially zero.
    """
    from .factor_model import fit_ml_efa

    model = fit_ml_efa(data, num_factors)
    n = data.num_samples
    partition = Partition(np.ones(n, dtype=int), 1)
    per_sample = log_densities(data.values, model)
    return FitReport(
        models=[model],
        partition=partition,
        objective_trace=[float(np.sum(per_sample))],
        d_trace=[0.0],
        iterations=1,
        converged=True,
        per_sample_loglik=per_sample,
    )
