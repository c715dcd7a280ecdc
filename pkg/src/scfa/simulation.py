"""Seeded synthetic data: six spatial cluster layouts and factor-model draws.

Each dataset couples planar locations split into groups with observations
from a per-group factor model x = A_g f + noise. One generator stream is
consumed in a fixed order (locations, loadings, factors, noise) so every
artifact is reproducible from the ScenarioSpec seed alone.
"""

from dataclasses import dataclass

import numpy as np

from .core import Partition
from .factor_model import DataMatrix
from .serialize import write_csv
from .spatial_weights import LocationTable

SCENARIOS = ("uniform", "radial", "gaussian", "anisotropic", "varied", "uneven")

# column means of the four groups' loading matrices; row g gives the
# per-factor means for group g
DEFAULT_MU_TABLE = (
    (1.0, 1.0, 1.0),
    (-1.0, 0.5, 0.5),
    (0.5, -1.0, 0.5),
    (0.5, 0.5, -1.0),
)

DEFAULT_TRANSFORM = ((0.6, -0.6), (-0.4, 0.8))


@dataclass(frozen=True)
class ScenarioSpec:
    """Everything needed to draw one synthetic dataset.

    ``loading_sd`` is scalar or one value per group. ``mu_table`` defaults
    to the built-in 4x3 table and must be supplied for other shapes.
    ``centers`` pins the gaussian-family cluster centers instead of
    drawing them (debugging aid); ``loading_seed`` draws loadings from a
    separate stream so they can be held fixed across replications.
    """

    scenario: str
    n: int = 200
    p: int = 10
    num_factors: int = 3
    num_groups: int = 4
    noise_sd: float = 1.0
    loading_sd: float | tuple = 0.5
    seed: int = 0
    radii: tuple = (0.25, 0.5, 0.75)
    cluster_sd: float = 0.2
    varied_sds: tuple = (0.2, 0.15, 0.3, 0.06)
    uneven_sizes: tuple = (50, 40, 100, 10)
    transform: tuple = DEFAULT_TRANSFORM
    center_half_width: float = 0.5
    mu_table: tuple | None = None
    centers: tuple | None = None
    loading_seed: int | None = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.n < 1 or self.p < 1 or self.num_factors < 1 or self.num_groups < 1:
            raise ValueError("n, p, num_factors, num_groups must be positive")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be nonnegative")
        if self.scenario == "uniform" and self.num_groups != 4:
            raise ValueError("the quadrant layout defines exactly 4 groups")
        if self.scenario == "radial":
            radii = tuple(self.radii)
            if len(radii) + 1 != self.num_groups:
                raise ValueError("radial needs num_groups = len(radii) + 1")
            if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
                raise ValueError("radii must be positive and increasing")
        if self.scenario == "varied" and len(self.varied_sds) != self.num_groups:
            raise ValueError("varied_sds must have one entry per group")
        if self.scenario == "uneven":
            sizes = tuple(int(c) for c in self.uneven_sizes)
            if len(sizes) != self.num_groups or sum(sizes) != self.n:
                raise ValueError("uneven_sizes must cover all groups and sum to n")
        if self.resolved_loading_sds().min() < 0:
            raise ValueError("loading_sd must be nonnegative")
        if self.centers is not None:
            centers = np.asarray(self.centers, dtype=float)
            if centers.shape != (self.num_groups, 2):
                raise ValueError("centers must be num_groups x 2")
        self.resolved_mu_table()  # shape check

    def resolved_mu_table(self) -> np.ndarray:
        if self.mu_table is None:
            if (self.num_groups, self.num_factors) != (4, 3):
                raise ValueError(
                    "default mu_table is 4x3; supply mu_table for other shapes"
                )
            return np.array(DEFAULT_MU_TABLE)
        table = np.asarray(self.mu_table, dtype=float)
        if table.shape != (self.num_groups, self.num_factors):
            raise ValueError("mu_table must be num_groups x num_factors")
        return table

    def resolved_loading_sds(self) -> np.ndarray:
        tau = np.asarray(self.loading_sd, dtype=float)
        if tau.ndim == 0:
            return np.full(self.num_groups, float(tau))
        if tau.shape != (self.num_groups,):
            raise ValueError("loading_sd must be scalar or one value per group")
        return tau


@dataclass(frozen=True)
class SyntheticDataset:
    """Raw draws plus the ground truth that produced them."""

    data: DataMatrix
    locs: LocationTable
    true_partition: Partition
    true_loadings: list
    true_mu_table: np.ndarray


def _draw_loadings(rng, num_groups, p, num_factors, mu_table, taus):
    out = []
    for g in range(num_groups):
        base = rng.standard_normal((p, num_factors))
        out.append(mu_table[g][None, :] + taus[g] * base)
    return out


def generate_loadings(num_groups, p, num_factors, mu_table, tau, seed) -> list:
    """One p x num_factors loading matrix per group.

    Column k of group g has i.i.d. normal entries with mean mu_table[g, k]
    and standard deviation tau (scalar or per-group).
    """
    mu_table = np.asarray(mu_table, dtype=float)
    if mu_table.shape != (num_groups, num_factors):
        raise ValueError("mu_table must be num_groups x num_factors")
    taus = np.asarray(tau, dtype=float)
    if taus.ndim == 0:
        taus = np.full(num_groups, float(taus))
    rng = np.random.default_rng(seed)
    return _draw_loadings(rng, num_groups, p, num_factors, mu_table, taus)


def quadrant_labels(coords: np.ndarray) -> np.ndarray:
    """Group by coordinate signs: (+,+) -> 1, (-,+) -> 2, (-,-) -> 3, (+,-) -> 4.

    Axis points (coordinate exactly 0) count as nonpositive.
    """
    east = coords[:, 0] > 0
    north = coords[:, 1] > 0
    labels = np.where(north, np.where(east, 1, 2), np.where(east, 4, 3))
    return labels.astype(int)


def band_labels(coords: np.ndarray, radii) -> np.ndarray:
    """Group by distance from the origin; band edges are closed inward (d <= r)."""
    d = np.hypot(coords[:, 0], coords[:, 1])
    labels = np.ones(coords.shape[0], dtype=int)
    for r in radii:
        labels += d > r
    return labels


def _group_sizes(spec: ScenarioSpec) -> np.ndarray:
    if spec.scenario == "uneven":
        return np.asarray(spec.uneven_sizes, dtype=int)
    base, extra = divmod(spec.n, spec.num_groups)
    sizes = np.full(spec.num_groups, base, dtype=int)
    sizes[:extra] += 1
    return sizes


def _draw_locations(rng, spec: ScenarioSpec):
    if spec.scenario == "uniform":
        coords = rng.uniform(-1.0, 1.0, size=(spec.n, 2))
        labels = quadrant_labels(coords)
    elif spec.scenario == "radial":
        coords = rng.uniform(-1.0, 1.0, size=(spec.n, 2))
        labels = band_labels(coords, spec.radii)
    else:
        if spec.centers is not None:
            centers = np.asarray(spec.centers, dtype=float)
            if centers.shape != (spec.num_groups, 2):
                raise ValueError("centers must be num_groups x 2")
        else:
            hw = spec.center_half_width
            centers = rng.uniform(-hw, hw, size=(spec.num_groups, 2))
        if spec.scenario == "varied":
            sds = np.asarray(spec.varied_sds, dtype=float)
        else:
            sds = np.full(spec.num_groups, spec.cluster_sd)
        sizes = _group_sizes(spec)
        blocks = []
        for g in range(spec.num_groups):
            blocks.append(centers[g] + sds[g] * rng.standard_normal((sizes[g], 2)))
        coords = np.vstack(blocks)
        labels = np.repeat(np.arange(1, spec.num_groups + 1), sizes)
        if spec.scenario == "anisotropic":
            coords = coords @ np.asarray(spec.transform, dtype=float)
    return LocationTable(coords), Partition(labels, spec.num_groups)


def generate_locations(spec: ScenarioSpec):
    """Draw the scenario's locations and true grouping.

    Returns (LocationTable, Partition). Identical to the location part of
    generate_dataset for the same spec, since locations are drawn first.
    """
    rng = np.random.default_rng(spec.seed)
    return _draw_locations(rng, spec)


def generate_dataset(spec: ScenarioSpec, *, zero_factors: bool = False) -> SyntheticDataset:
    """Draw locations, loadings, factor scores and noise for one dataset.

    ``zero_factors`` pins every factor score to zero (testing hook; the
    factor draw is skipped entirely).
    """
    rng = np.random.default_rng(spec.seed)
    locs, partition = _draw_locations(rng, spec)
    mu_table = spec.resolved_mu_table()
    taus = spec.resolved_loading_sds()
    loading_rng = rng
    if spec.loading_seed is not None:
        loading_rng = np.random.default_rng(spec.loading_seed)
    loadings = _draw_loadings(
        loading_rng, spec.num_groups, spec.p, spec.num_factors, mu_table, taus
    )
    if zero_factors:
        factors = np.zeros((spec.n, spec.num_factors))
    else:
        factors = rng.standard_normal((spec.n, spec.num_factors))
    noise = spec.noise_sd * rng.standard_normal((spec.n, spec.p))
    x = np.empty((spec.n, spec.p))
    for g in range(1, spec.num_groups + 1):
        rows = partition.group_rows(g)
        x[rows] = factors[rows] @ loadings[g - 1].T + noise[rows]
    data = DataMatrix(x, centered=False, standardized=False)
    return SyntheticDataset(
        data=data,
        locs=locs,
        true_partition=partition,
        true_loadings=loadings,
        true_mu_table=mu_table,
    )


def dataset_to_csv(dataset: SyntheticDataset, path) -> None:
    """Write one row per sample: id, coordinates, true group, raw variables."""
    p = dataset.data.num_vars
    header = ["id", "x", "y", "group"] + [f"X{j + 1}" for j in range(p)]
    coords = dataset.locs.coords
    labels = dataset.true_partition.labels
    values = dataset.data.values
    rows = []
    for i in range(dataset.data.num_samples):
        rows.append(
            [i + 1, coords[i, 0], coords[i, 1], int(labels[i]), *values[i]]
        )
    write_csv(path, header, rows)
