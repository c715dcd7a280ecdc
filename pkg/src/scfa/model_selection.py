"""Choosing the number of groups and the number of factors.

The group count G is picked by an information criterion over candidate
clustered fits; the factor count m by Horn's parallel analysis against
eigenvalues of simulated standard-normal data.
"""

from dataclasses import dataclass, replace

import numpy as np

from .core import FitReport, ScfaConfig, fit_scfa
from .errors import ScfaError
from .factor_model import DataMatrix
from .spatial_weights import LocationTable, WeightMatrix


@dataclass(frozen=True)
class ICResult:
    """Information-criterion curve over candidate group counts.

    ``failures`` maps a candidate G to the error message of its failed
    fit; failed candidates carry an infinite criterion value.
    """

    candidate_G: tuple
    ic_values: tuple
    chosen_G: int
    c_n: float
    failures: dict

    def __post_init__(self):
        if len(self.candidate_G) != len(self.ic_values):
            raise ValueError("candidate_G and ic_values must align")


@dataclass(frozen=True)
class ParallelAnalysisResult:
    """Observed vs simulated correlation eigenvalues and the implied m."""

    observed_eigenvalues: np.ndarray
    reference_eigenvalues: np.ndarray
    chosen_m: int
    num_sims: int
    percentile: float | None


def information_criterion(report: FitReport, c_n: float, p: int, m: int) -> float:
    """-2 times the total log-likelihood plus c_n per-parameter penalty.

    The parameter count is G(pm + p): every configured group pays for a
    full loading matrix and uniqueness vector, raw entry counts with no
    rotational-indeterminacy correction.
    """
    num_groups = report.partition.num_groups
    loglik = float(np.sum(report.per_sample_loglik))
    return -2.0 * loglik + c_n * num_groups * (p * m + p)


def select_G(
    data: DataMatrix,
    locs: LocationTable,
    weights: WeightMatrix,
    config_template: ScfaConfig,
    candidates,
    c_n: float,
) -> ICResult:
    """Fit one clustered model per candidate G and keep the criterion argmin.

    Each candidate runs with seed ``template seed + G`` so the curve does
    not depend on candidate order. Ties and all-failed curves resolve to
    the smallest G.
    """
    candidates = sorted(set(int(g) for g in candidates))
    if not candidates:
        raise ValueError("candidates must be nonempty")
    if candidates[0] < 1:
        raise ValueError("candidates must be >= 1")
    p = data.num_vars
    m = config_template.num_factors
    ic_values = []
    failures = {}
    for num_groups in candidates:
        config = replace(
            config_template,
            num_groups=num_groups,
            seed=config_template.seed + num_groups,
        )
        try:
            report = fit_scfa(data, locs, weights, config)
        except ScfaError as exc:
            ic_values.append(np.inf)
            failures[num_groups] = str(exc)
            continue
        ic_values.append(information_criterion(report, c_n, p, m))
    best = min(zip(ic_values, candidates))
    return ICResult(
        candidate_G=tuple(candidates),
        ic_values=tuple(ic_values),
        chosen_G=best[1],
        c_n=c_n,
        failures=failures,
    )


def _correlation_eigenvalues(values: np.ndarray) -> np.ndarray:
    corr = np.atleast_2d(np.corrcoef(values, rowvar=False))
    return np.sort(np.linalg.eigvalsh(corr))[::-1]


def parallel_analysis(
    data: DataMatrix,
    B: int = 100,
    percentile: float | None = 95.0,
    seed: int = 0,
) -> ParallelAnalysisResult:
    """Horn's parallel analysis on the sample correlation matrix.

    Reference eigenvalues come from B seeded standard-normal datasets of
    the same shape, aggregated positionwise at the given percentile (None
    averages instead). The chosen factor count is the length of the
    leading run where observed exceeds reference; the first failure stops
    the count.
    """
    if B < 10:
        raise ValueError("B must be at least 10")
    if percentile is not None and not 50 <= percentile <= 100:
        raise ValueError("percentile must be in [50, 100]")
    values = data.values
    n, p = values.shape
    observed = _correlation_eigenvalues(values)
    rng = np.random.default_rng(seed)
    sims = np.empty((B, p))
    for b in range(B):
        sims[b] = _correlation_eigenvalues(rng.standard_normal((n, p)))
    if percentile is None:
        reference = sims.mean(axis=0)
    else:
        reference = np.percentile(sims, percentile, axis=0)
    exceeds = observed > reference
    chosen_m = int(np.argmin(exceeds)) if not exceeds.all() else p
    return ParallelAnalysisResult(
        observed_eigenvalues=observed,
        reference_eigenvalues=reference,
        chosen_m=chosen_m,
        num_sims=B,
        percentile=percentile,
    )
