"""Maximum-likelihood exploratory factor analysis for a single group.

The model decomposes a p-variable covariance into ``A @ A.T + diag(psi)``
with a p x m loading matrix ``A`` and positive uniquenesses ``psi``.
Fitting profiles the likelihood over the loadings: given uniquenesses, the
optimal loadings come from the leading eigenpairs of the rescaled sample
matrix, so only the p uniquenesses are optimized (L-BFGS-B over their
logs, bounded below to avoid Heywood cases).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from .errors import DidNotConverge, RankDeficientSample, ZeroVarianceColumn

HEYWOOD_FLOOR = 0.005

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class FactorModel:
    """A fitted (or constructed) factor model on the correlation scale.

    Parameters
    ----------
    loadings : ndarray of shape (p, m)
        Factor loadings.
    uniquenesses : ndarray of shape (p,)
        Variable-specific variances, each in ``[HEYWOOD_FLOOR, 1]``-ish;
        strictly positive is enforced, the floor with a tiny slack.
    """

    loadings: np.ndarray
    uniquenesses: np.ndarray

    def __post_init__(self):
        loadings = np.asarray(self.loadings, dtype=float)
        uniquenesses = np.asarray(self.uniquenesses, dtype=float)
        if loadings.ndim != 2:
            raise ValueError("loadings must be a p x m matrix")
        p, m = loadings.shape
        if m > p:
            raise ValueError(f"more factors ({m}) than variables ({p})")
        if uniquenesses.shape != (p,):
            raise ValueError("uniquenesses must have one entry per variable")
        if not np.all(uniquenesses > 0):
            raise ValueError("uniquenesses must be strictly positive")
        if np.min(uniquenesses) < HEYWOOD_FLOOR * (1.0 - 1e-9):
            raise ValueError(
                f"uniquenesses must not fall below the Heywood floor {HEYWOOD_FLOOR}"
            )
        loadings = loadings.copy()
        uniquenesses = uniquenesses.copy()
        loadings.flags.writeable = False
        uniquenesses.flags.writeable = False
        object.__setattr__(self, "loadings", loadings)
        object.__setattr__(self, "uniquenesses", uniquenesses)

    @property
    def num_vars(self) -> int:
        return self.loadings.shape[0]

    @property
    def num_factors(self) -> int:
        return self.loadings.shape[1]


@dataclass(frozen=True)
class DataMatrix:
    """An n x p observation matrix with its preprocessing state.

    ``centered``/``standardized`` are verified at construction (column
    means 0, sample variances 1, both within 1e-10).
    """

    values: np.ndarray
    centered: bool = False
    standardized: bool = False

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("values must be an n x p matrix")
        if self.centered and np.max(np.abs(values.mean(axis=0))) > 1e-10:
            raise ValueError("centered flag set but column means are not 0")
        if self.standardized:
            var = values.var(axis=0, ddof=1)
            if np.max(np.abs(var - 1.0)) > 1e-10:
                raise ValueError("standardized flag set but column variances are not 1")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def num_samples(self) -> int:
        return self.values.shape[0]

    @property
    def num_vars(self) -> int:
        return self.values.shape[1]


def standardize(raw) -> DataMatrix:
    """Column-wise z-score a raw n x p matrix using sample (n-1) scaling.

    Raises
    ------
    ZeroVarianceColumn
        If any column is constant.
    """
    x = np.asarray(raw, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need an n x p matrix with n >= 2")
    sd = x.std(axis=0, ddof=1)
    for j in np.flatnonzero(sd == 0.0):
        raise ZeroVarianceColumn(int(j))
    z = (x - x.mean(axis=0)) / sd
    return DataMatrix(z, centered=True, standardized=True)


def implied_covariance(model: FactorModel) -> np.ndarray:
    """Covariance implied by the model: loadings @ loadings.T + diag(uniquenesses)."""
    a = model.loadings
    sigma = a @ a.T
    sigma[np.diag_indices_from(sigma)] += model.uniquenesses
    return sigma


def max_num_factors(p: int) -> int:
    """Largest factor count with nonnegative model degrees of freedom."""
    return int(np.floor((2 * p + 1 - np.sqrt(8 * p + 1)) / 2))


def ml_discrepancy(uniquenesses, sample_moment, num_factors) -> float:
    """Profile negative log-likelihood of the uniquenesses, up to constants.

    Equals ``sum(lam - log(lam) - 1)`` over the p - m smallest eigenvalues
    of ``diag(psi)^(-1/2) S diag(psi)^(-1/2)``; zero iff the model
    reproduces S exactly in the profiled directions.
    """
    psi = np.asarray(uniquenesses, dtype=float)
    s = np.asarray(sample_moment, dtype=float)
    isqrt = 1.0 / np.sqrt(psi)
    sstar = s * np.outer(isqrt, isqrt)
    vals = np.linalg.eigvalsh(sstar)  # ascending
    tail = vals[: s.shape[0] - num_factors]
    return float(np.sum(tail - np.log(tail) - 1.0))


def profile_loadings(uniquenesses, sample_moment, num_factors) -> np.ndarray:
    """Loadings maximizing the likelihood for fixed uniquenesses.

    Built from the top eigenpairs of the rescaled sample matrix; eigenvalues
    below 1 contribute zero columns.
    """
    psi = np.asarray(uniquenesses, dtype=float)
    s = np.asarray(sample_moment, dtype=float)
    isqrt = 1.0 / np.sqrt(psi)
    sstar = s * np.outer(isqrt, isqrt)
    vals, vecs = np.linalg.eigh(sstar)
    top_vals = vals[::-1][:num_factors]
    top_vecs = vecs[:, ::-1][:, :num_factors]
    scale = np.sqrt(np.maximum(top_vals - 1.0, 0.0))
    return np.sqrt(psi)[:, None] * (top_vecs * scale[None, :])


def _discrepancy_and_grad(log_psi, sample_moment, num_factors):
    psi = np.exp(log_psi)
    isqrt = 1.0 / np.sqrt(psi)
    sstar = sample_moment * np.outer(isqrt, isqrt)
    vals, vecs = np.linalg.eigh(sstar)
    p = sample_moment.shape[0]
    tail = vals[: p - num_factors]
    value = float(np.sum(tail - np.log(tail) - 1.0))
    top_vals = vals[::-1][:num_factors]
    top_vecs = vecs[:, ::-1][:, :num_factors]
    scale = np.sqrt(np.maximum(top_vals - 1.0, 0.0))
    loadings = np.sqrt(psi)[:, None] * (top_vecs * scale[None, :])
    # d/d(psi) of the profiled objective is diag(AA' + Psi - S) / psi^2;
    # the extra psi factor converts to the log scale.
    resid_diag = np.sum(loadings**2, axis=1) + psi - np.diag(sample_moment)
    grad = resid_diag / psi
    return value, grad


def _sign_fix(loadings: np.ndarray) -> np.ndarray:
    """Make each column's largest-magnitude entry nonnegative."""
    out = loadings.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        j = int(np.argmax(np.abs(col)))
        if col[j] < 0:
            out[:, k] = -col
    return out


def fit_ml_efa_from_moment(
    sample_moment,
    num_factors: int,
    *,
    start_uniquenesses=None,
    max_iter: int = 200,
    gtol: float = 1e-7,
) -> FactorModel:
    """ML factor fit given a p x p sample second-moment (correlation) matrix.

    Optimizes the profile objective over log-uniquenesses with L-BFGS-B,
    box-constrained to ``[HEYWOOD_FLOOR, 1]``, then rebuilds the canonical
    loadings (descending ``A' Psi^-1 A`` diagonal, sign-fixed columns).

    Raises
    ------
    RankDeficientSample
        If the sample matrix is singular.
    DidNotConverge
        If the optimizer exhausts its iteration budget.
    """
    s = np.asarray(sample_moment, dtype=float)
    p = s.shape[0]
    if s.shape != (p, p):
        raise ValueError("sample_moment must be square")
    if not 1 <= num_factors <= max_num_factors(p):
        raise ValueError(
            f"num_factors must be in [1, {max_num_factors(p)}] for p={p}"
        )
    eigvals = np.linalg.eigvalsh(s)
    if eigvals[0] <= eigvals[-1] * p * np.finfo(float).eps:
        raise RankDeficientSample("sample matrix is singular")

    if start_uniquenesses is None:
        start = _default_start(s, num_factors, eigvals)
    else:
        start = np.clip(np.asarray(start_uniquenesses, float), HEYWOOD_FLOOR, 1.0)

    bounds = [(np.log(HEYWOOD_FLOOR), 0.0)] * p
    res = minimize(
        _discrepancy_and_grad,
        np.log(start),
        args=(s, num_factors),
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter, "gtol": gtol, "ftol": 1e-12},
    )
    if res.status == 1:
        raise DidNotConverge(
            f"uniqueness optimizer hit its {max_iter}-iteration budget",
            max_iters=max_iter,
        )
    psi = np.clip(np.exp(res.x), HEYWOOD_FLOOR, 1.0)
    loadings = _sign_fix(profile_loadings(psi, s, num_factors))
    return FactorModel(loadings=loadings, uniquenesses=psi)


def _default_start(s, num_factors, eigvals):
    """Starting uniquenesses from the squared-multiple-correlation proxy."""
    p = s.shape[0]
    cond = eigvals[-1] / eigvals[0]
    if cond > 1e8:
        return np.full(p, 0.5)
    smc = 1.0 - 1.0 / np.diag(np.linalg.inv(s))
    start = 1.0 - (num_factors / (2.0 * p)) * smc
    return np.clip(start, HEYWOOD_FLOOR, 1.0)


def fit_ml_efa(data: DataMatrix, num_factors: int, **kwargs) -> FactorModel:
    """ML factor fit of standardized data under the zero-mean model.

    The sample matrix is the uncentered second moment ``X'X / n``, which for
    standardized input equals the sample correlation matrix up to the
    (n-1)/n factor and is the exact ML target for the zero-mean Gaussian.
    """
    if not data.standardized:
        raise ValueError("fit_ml_efa expects standardized data")
    x = data.values
    n, p = x.shape
    if n <= p:
        raise ValueError(f"need more samples ({n}) than variables ({p})")
    s = x.T @ x / n
    return fit_ml_efa_from_moment(s, num_factors, **kwargs)


def log_densities(x, model: FactorModel) -> np.ndarray:
    """Zero-mean Gaussian log-density of each row of ``x`` under the model.

    Dense Cholesky evaluation of ``log N(x; 0, AA' + Psi)``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = model.num_vars
    sigma = implied_covariance(model)
    chol = np.linalg.cholesky(sigma)
    z = solve_triangular(chol, x.T, lower=True)
    maha = np.sum(z**2, axis=0)
    log_det = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (p * _LOG_2PI + log_det + maha)


def log_density(x, model: FactorModel) -> float:
    """Zero-mean Gaussian log-density of a single length-p vector."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.num_vars,):
        raise ValueError("x must have one entry per model variable")
    return float(log_densities(x[None, :], model)[0])


def group_log_likelihood(data: DataMatrix, model: FactorModel, member_rows) -> float:
    """Sum of per-row log-densities over the selected row indices."""
    rows = np.asarray(member_rows, dtype=int)
    if rows.size == 0:
        return 0.0
    return float(np.sum(log_densities(data.values[rows], model)))


def varimax(loadings, *, normalize: bool = True, max_iter: int = 500, tol: float = 1e-10):
    """Varimax-rotate a loading matrix (reporting only; never used in fitting).

    Kaiser row normalization by default; columns are re-ordered by explained
    variance and sign-fixed afterwards for stable output.
    """
    a = np.asarray(loadings, dtype=float).copy()
    p, m = a.shape
    if m < 2:
        return a
    if normalize:
        comm = np.sqrt(np.sum(a**2, axis=1))
        comm[comm == 0] = 1.0
        a /= comm[:, None]
    rotation = np.eye(m)
    total = 0.0
    for _ in range(max_iter):
        previous = total
        basis = a @ rotation
        u, s, vt = np.linalg.svd(
            a.T @ (basis**3 - basis @ np.diag(np.sum(basis**2, axis=0)) / p)
        )
        rotation = u @ vt
        total = np.sum(s)
        if total - previous < tol:
            break
    rotated = a @ rotation
    if normalize:
        rotated *= comm[:, None]
    order = np.argsort(-np.sum(rotated**2, axis=0), kind="stable")
    return _sign_fix(rotated[:, order])
