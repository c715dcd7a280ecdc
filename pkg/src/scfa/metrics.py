"""Distances between true and estimated common-variance structure.

All three distances compare per-sample sequences of p x p matrices AA^T
(the shared-factor part only, no uniquenesses). Frobenius and Wasserstein
average over samples; Chebyshev is the single largest entry difference
across all samples, as its formula states.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Partition
from .errors import MissingPartition, NotSymmetric, ShapeMismatch, SizeMismatch
from .factor_model import FactorModel

SYMMETRY_TOL = 1e-8

CSV_HEADER = ("scenario", "method", "replication", "frobenius", "wasserstein", "chebyshev", "aic")


@dataclass(frozen=True)
class EvaluationResult:
    """One benchmark cell: a method on one replication of one scenario."""

    scenario_label: str
    method_label: str
    replication: int
    frobenius: float
    wasserstein: float
    chebyshev: float
    aic: float

    def to_row(self) -> tuple:
        return (
            self.scenario_label,
            self.method_label,
            self.replication,
            self.frobenius,
            self.wasserstein,
            self.chebyshev,
            self.aic,
        )


def _paired_stacks(true_seq, est_seq):
    true_stack = np.asarray(true_seq, dtype=float)
    est_stack = np.asarray(est_seq, dtype=float)
    if true_stack.shape != est_stack.shape:
        raise ShapeMismatch(
            f"sequences differ in shape: {true_stack.shape} vs {est_stack.shape}"
        )
    if true_stack.ndim != 3 or true_stack.shape[1] != true_stack.shape[2]:
        raise ShapeMismatch("expected a sequence of square matrices")
    if true_stack.shape[0] == 0:
        raise ShapeMismatch("empty matrix sequence")
    return true_stack, est_stack


def frobenius_distance(true_seq, est_seq) -> float:
    """Mean over samples of the entrywise l2 norm of the difference."""
    true_stack, est_stack = _paired_stacks(true_seq, est_seq)
    diff = true_stack - est_stack
    per_sample = np.sqrt(np.sum(diff**2, axis=(1, 2)))
    return float(np.mean(per_sample))


def chebyshev_distance(true_seq, est_seq) -> float:
    """Largest absolute entry difference over all samples and positions."""
    true_stack, est_stack = _paired_stacks(true_seq, est_seq)
    return float(np.max(np.abs(true_stack - est_stack)))


def _psd_sqrt(matrix: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(matrix)
    vals = np.clip(vals, 0.0, None)  # rank-deficient inputs dip slightly negative
    return (vecs * np.sqrt(vals)) @ vecs.T


def _w2_single(sigma1: np.ndarray, sigma2: np.ndarray) -> float:
    root1 = _psd_sqrt(sigma1)
    cross_vals = np.linalg.eigvalsh(root1 @ sigma2 @ root1)
    cross = np.sum(np.sqrt(np.clip(cross_vals, 0.0, None)))
    gap = np.trace(sigma1) + np.trace(sigma2) - 2.0 * cross
    return float(np.sqrt(max(gap, 0.0)))


def gaussian_w2_distance(true_seq, est_seq) -> float:
    """Mean over samples of the 2-Wasserstein distance between zero-mean
    Gaussians with the given covariance matrices (Bures closed form).

    Raises
    ------
    NotSymmetric
        If any matrix deviates from symmetry by more than 1e-8.
    """
    true_stack, est_stack = _paired_stacks(true_seq, est_seq)
    for stack in (true_stack, est_stack):
        skew = np.max(np.abs(stack - np.transpose(stack, (0, 2, 1))))
        if skew > SYMMETRY_TOL:
            raise NotSymmetric(f"matrix asymmetry {skew:.3g} exceeds {SYMMETRY_TOL}")
    total = 0.0
    for k in range(true_stack.shape[0]):
        total += _w2_single(true_stack[k], est_stack[k])
    return total / true_stack.shape[0]


def _common_variance(model) -> np.ndarray:
    loadings = model.loadings if isinstance(model, FactorModel) else np.asarray(model, dtype=float)
    return loadings @ loadings.T


def expand_per_sample(models, partition: Partition | None = None, n: int | None = None):
    """Per-sample stack of AA^T matrices.

    A single model (or bare loading matrix) broadcasts to all n samples; a
    per-group list is indexed through the partition labels.

    Raises
    ------
    MissingPartition
        If a model list is given without a partition.
    """
    if isinstance(models, (list, tuple)):
        if partition is None:
            raise MissingPartition("a per-group model list needs a partition")
        if len(models) != partition.num_groups:
            raise ShapeMismatch("one model per group required")
        mats = {}
        for g in range(1, partition.num_groups + 1):
            if models[g - 1] is not None:
                mats[g] = _common_variance(models[g - 1])
        labels = partition.labels
        missing = sorted(set(labels.tolist()) - set(mats))
        if missing:
            raise ShapeMismatch(f"groups {missing} have samples but no model")
        p = next(iter(mats.values())).shape[0]
        out = np.empty((partition.num_samples, p, p))
        for g, mat in mats.items():
            out[labels == g] = mat
        return out
    if n is None:
        raise ValueError("n is required when broadcasting a single model")
    single = _common_variance(models)
    return np.broadcast_to(single, (n,) + single.shape).copy()


def label_agreement(truth: Partition, est: Partition) -> float:
    """Best-permutation fraction of samples whose labels agree.

    The permutation comes from a maximum-weight assignment on the label
    contingency table, so the score ignores arbitrary label numbering.
    """
    if truth.num_samples != est.num_samples:
        raise SizeMismatch(
            f"partitions cover {truth.num_samples} vs {est.num_samples} samples"
        )
    n = truth.num_samples
    table = np.zeros((truth.num_groups, est.num_groups))
    np.add.at(table, (truth.labels - 1, est.labels - 1), 1.0)
    rows, cols = linear_sum_assignment(-table)
    return float(table[rows, cols].sum() / n)
