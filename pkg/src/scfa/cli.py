"""Command-line entry point: benchmark sweep, data fitting, simulation.

All data outputs are byte-reproducible for a fixed config: floats print at
17 significant digits, JSON keys are sorted, and timestamps go to a
separate log file only.
"""

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .core import ScfaConfig, fit_efa_report, fit_scfa
from .errors import DidNotConverge, ScfaError
from .factor_model import standardize, varimax
from .metrics import (
    CSV_HEADER,
    chebyshev_distance,
    expand_per_sample,
    frobenius_distance,
    gaussian_w2_distance,
)
from .model_selection import information_criterion, parallel_analysis, select_G
from .serialize import write_csv, write_json
from .simulation import SCENARIOS, ScenarioSpec, dataset_to_csv, generate_dataset
from .spatial_weights import (
    DistanceTransform,
    LocationTable,
    exponential_weights,
    knn_weights,
    load_station_graph,
    topology_weights,
)

# method label -> (init scheme, weight scheme); None marks the baseline
METHODS = {
    "efa": None,
    "scfa-kmeans-n": ("kmeans_on_coords", "knn"),
    "scfa-kmeans-e": ("kmeans_on_coords", "exponential"),
    "scfa-random-n": ("random", "knn"),
    "scfa-random-e": ("random", "exponential"),
}

DETAIL_HEADER = CSV_HEADER + ("error",)
AGGREGATE_HEADER = ("scenario", "method", "frobenius", "wasserstein", "chebyshev", "aic")


@dataclass(frozen=True)
class BenchConfig:
    """Benchmark sweep settings plus scenario overrides.

    ``replications`` defaults to the desk-scale 10; pass 50 to match the
    full study design.
    """

    scenarios: tuple = SCENARIOS
    methods: tuple = tuple(METHODS)
    replications: int = 10
    base_seed: int = 0
    output_dir: str = "bench_out"
    workers: int = 1
    n: int = 200
    p: int = 10
    num_factors: int = 3
    num_groups: int = 4
    noise_sd: float = 1.0
    loading_sd: float = 0.5
    phi: float = 1.0
    knn_k: int = 5
    exp_bandwidth: float = 0.1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not self.methods:
            raise ValueError("method list must be nonempty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods: {unknown}")
        unknown = [s for s in self.scenarios if s not in SCENARIOS]
        if unknown:
            raise ValueError(f"unknown scenarios: {unknown}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class FitJob:
    """One fitting run on a prepared CSV.

    ``num_factors``/``num_groups`` of None mean data-driven choice
    (parallel analysis and the information criterion over ``candidates``).
    """

    data_path: str
    output_dir: str
    graph_path: str | None = None
    weights_scheme: str = "knn"
    num_groups: int | None = None
    candidates: tuple = (1, 2, 3, 4, 5, 6)
    num_factors: int | None = None
    phi: float = 1.0
    seed: int = 0
    loading_threshold: float = 0.4
    knn_k: int = 5
    exp_bandwidth: float = 0.1
    pa_sims: int = 100
    pa_percentile: float | None = 95.0

    def __post_init__(self):
        if self.weights_scheme not in ("knn", "exponential", "topology"):
            raise ValueError("weights_scheme must be knn, exponential or topology")
        if self.weights_scheme == "topology" and not self.graph_path:
            raise ValueError("topology weights need a graph_path")
        if not 0 <= self.loading_threshold <= 1:
            raise ValueError("loading_threshold must be in [0, 1]")


def _fit_seed(base_seed, scenario_idx, method_idx, replication) -> int:
    seq = np.random.SeedSequence((base_seed, scenario_idx, method_idx, replication))
    return int(seq.generate_state(1)[0])


def _build_weights(locs, scheme, knn_k, exp_bandwidth):
    if scheme == "knn":
        return knn_weights(locs, knn_k)
    if scheme == "exponential":
        return exponential_weights(locs, exp_bandwidth)
    raise ValueError(f"unsupported scheme {scheme!r} here")


def _bench_cell(config: BenchConfig, scenario_idx: int, method_idx: int, replication: int):
    """Evaluate one (scenario, method, replication) cell; never raises."""
    scenario = config.scenarios[scenario_idx]
    method = config.methods[method_idx]
    try:
        spec = ScenarioSpec(
            scenario=scenario,
            n=config.n,
            p=config.p,
            num_factors=config.num_factors,
            num_groups=config.num_groups,
            noise_sd=config.noise_sd,
            loading_sd=config.loading_sd,
            seed=config.base_seed + replication,
        )
        dataset = generate_dataset(spec)
        data = standardize(dataset.data.values)
        truth = expand_per_sample(dataset.true_loadings, dataset.true_partition)
        if METHODS[method] is None:
            report = fit_efa_report(data, spec.num_factors)
            estimate = expand_per_sample(report.models[0], n=spec.n)
        else:
            init, weight_scheme = METHODS[method]
            weights = _build_weights(
                dataset.locs, weight_scheme, config.knn_k, config.exp_bandwidth
            )
            fit_config = ScfaConfig(
                num_factors=spec.num_factors,
                num_groups=spec.num_groups,
                phi=config.phi,
                init=init,
                seed=_fit_seed(config.base_seed, scenario_idx, method_idx, replication),
            )
            report = fit_scfa(data, dataset.locs, weights, fit_config)
            estimate = expand_per_sample(report.models, report.partition)
        row = (
            scenario,
            method,
            replication,
            frobenius_distance(truth, estimate),
            gaussian_w2_distance(truth, estimate),
            chebyshev_distance(truth, estimate),
            information_criterion(report, 2.0, spec.p, spec.num_factors),
            "",
        )
    except Exception as exc:  # failed cells become NaN rows, the sweep goes on
        nan = float("nan")
        row = (scenario, method, replication, nan, nan, nan, nan, f"{type(exc).__name__}: {exc}")
    return row


def _bench_cell_entry(packed):
    return _bench_cell(*packed)


def run_benchmark(config: BenchConfig) -> dict:
    """Run the full sweep and write detail/aggregate tables.

    Returns the output paths plus in-memory rows. Cell order in the detail
    table is scenario-major, then method, then replication, regardless of
    worker count.
    """
    os.makedirs(config.output_dir, exist_ok=True)
    started = time.time()
    cells = [
        (config, s, m, r)
        for s in range(len(config.scenarios))
        for m in range(len(config.methods))
        for r in range(config.replications)
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(_bench_cell_entry, cells, chunksize=1))
    else:
        rows = [_bench_cell(*cell) for cell in cells]

    detail_path = os.path.join(config.output_dir, "detail.csv")
    write_csv(detail_path, DETAIL_HEADER, rows)

    reps = config.replications
    aggregate_rows = []
    for s_idx, scenario in enumerate(config.scenarios):
        for m_idx, method in enumerate(config.methods):
            start = (s_idx * len(config.methods) + m_idx) * reps
            block = rows[start : start + reps]
            values = np.array([r[3:7] for r in block], dtype=float)
            ok = ~np.isnan(values[:, 0])
            if ok.any():
                means = values[ok].mean(axis=0)
            else:
                means = np.full(4, np.nan)
            aggregate_rows.append((scenario, method, *(float(v) for v in means)))
    aggregate_path = os.path.join(config.output_dir, "aggregate.csv")
    write_csv(aggregate_path, AGGREGATE_HEADER, aggregate_rows)

    json_path = os.path.join(config.output_dir, "aggregate.json")
    write_json(
        json_path,
        {
            "config": asdict(config),
            "aggregate": [dict(zip(AGGREGATE_HEADER, row)) for row in aggregate_rows],
        },
    )
    log_path = os.path.join(config.output_dir, "run_log.txt")
    with open(log_path, "w", encoding="utf-8") as handle:
        handle.write(f"started_unix: {started:.0f}\n")
        handle.write(f"elapsed_seconds: {time.time() - started:.1f}\n")
        handle.write(f"cells: {len(cells)}\n")
        failed = sum(1 for r in rows if r[7])
        handle.write(f"failed_cells: {failed}\n")
    return {
        "detail": detail_path,
        "aggregate": aggregate_path,
        "json": json_path,
        "rows": rows,
        "aggregate_rows": aggregate_rows,
    }


def _load_fit_csv(path):
    """Read a fitting CSV: id,x,y[,node_id],<variable columns...>.

    Returns (ids, LocationTable, variable names, raw value matrix).
    """
    import csv as _csv

    with open(path, newline="", encoding="utf-8") as handle:
        reader = _csv.reader(handle)
        header = next(reader, None)
        if header is None or len(header) < 4:
            raise ValueError(f"{path}: line 1: expected header id,x,y[,node_id],vars...")
        header = [h.strip() for h in header]
        if header[:3] != ["id", "x", "y"]:
            raise ValueError(f"{path}: line 1: first columns must be id,x,y")
        has_node = len(header) > 3 and header[3] == "node_id"
        var_start = 4 if has_node else 3
        var_names = header[var_start:]
        if not var_names:
            raise ValueError(f"{path}: line 1: no variable columns found")
        ids, coords, node_ids, values = [], [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(rec)}"
                )
            try:
                ids.append(rec[0])
                coords.append((float(rec[1]), float(rec[2])))
                if has_node:
                    node_ids.append(int(rec[3]))
                values.append([float(v) for v in rec[var_start:]])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    locs = LocationTable(
        np.asarray(coords), np.asarray(node_ids) if has_node else None
    )
    return ids, locs, var_names, np.asarray(values)


def emit_plot_data(artifacts: dict, output_dir) -> dict:
    """Write plot-ready CSVs for whichever artifacts are present.

    Recognized keys: ``scatter`` -> (LocationTable, labels), ``scree`` ->
    ParallelAnalysisResult, ``ic_curve`` -> ICResult.
    """
    os.makedirs(output_dir, exist_ok=True)
    paths = {}
    if "scatter" in artifacts:
        locs, labels = artifacts["scatter"]
        rows = [
            (locs.coords[i, 0], locs.coords[i, 1], int(labels[i]))
            for i in range(locs.num_locations)
        ]
        paths["scatter"] = os.path.join(output_dir, "scatter.csv")
        write_csv(paths["scatter"], ("x", "y", "group"), rows)
    if "scree" in artifacts:
        pa = artifacts["scree"]
        rows = [
            (k + 1, float(pa.observed_eigenvalues[k]), float(pa.reference_eigenvalues[k]))
            for k in range(len(pa.observed_eigenvalues))
        ]
        paths["scree"] = os.path.join(output_dir, "scree.csv")
        write_csv(paths["scree"], ("factor_index", "observed", "reference"), rows)
    if "ic_curve" in artifacts:
        ic = artifacts["ic_curve"]
        rows = list(zip(ic.candidate_G, (float(v) for v in ic.ic_values)))
        paths["ic_curve"] = os.path.join(output_dir, "ic_curve.csv")
        write_csv(paths["ic_curve"], ("candidate_G", "ic"), rows)
    return paths


def _structure_graph(var_names, rotated, threshold) -> dict:
    """Node-link dict with variable -> factor edges above the threshold."""
    num_factors = rotated.shape[1]
    factor_names = [f"factor_{k + 1}" for k in range(num_factors)]
    nodes = [{"id": name, "kind": "variable"} for name in var_names]
    nodes += [{"id": name, "kind": "factor"} for name in factor_names]
    links = []
    for j, var in enumerate(var_names):
        for k, factor in enumerate(factor_names):
            if abs(rotated[j, k]) > threshold:
                links.append(
                    {"source": var, "target": factor, "weight": float(rotated[j, k])}
                )
    return {"directed": True, "multigraph": False, "graph": {}, "nodes": nodes, "links": links}


def _write_fit_artifacts(job, ids, locs, var_names, report, summary_extra):
    out = job.output_dir
    os.makedirs(out, exist_ok=True)
    paths = {}
    labels = report.partition.labels
    coords = locs.coords
    rows = [
        (ids[i], coords[i, 0], coords[i, 1], int(labels[i])) for i in range(len(ids))
    ]
    paths["assignments"] = os.path.join(out, "assignments.csv")
    write_csv(paths["assignments"], ("id", "x", "y", "group"), rows)

    num_factors = summary_extra["num_factors"]
    factor_cols = [f"factor_{k + 1}" for k in range(num_factors)]
    for g, model in enumerate(report.models, start=1):
        if model is None:
            continue
        raw_rows = [
            (var_names[j], *model.loadings[j], model.uniquenesses[j])
            for j in range(len(var_names))
        ]
        path = os.path.join(out, f"loadings_group{g}.csv")
        write_csv(path, ("variable", *factor_cols, "uniqueness"), raw_rows)
        paths[f"loadings_group{g}"] = path

        rotated = varimax(model.loadings)
        rot_rows = [
            (var_names[j], *rotated[j]) for j in range(len(var_names))
        ]
        path = os.path.join(out, f"loadings_varimax_group{g}.csv")
        write_csv(path, ("variable", *factor_cols), rot_rows)
        paths[f"loadings_varimax_group{g}"] = path

        path = os.path.join(out, f"structure_group{g}.json")
        write_json(path, _structure_graph(var_names, rotated, job.loading_threshold))
        paths[f"structure_group{g}"] = path

    sizes = report.partition.group_sizes()
    summary = {
        "converged": report.converged,
        "iterations": report.iterations,
        "objective_trace": [float(q) for q in report.objective_trace],
        "d_trace": [None if not math.isfinite(d) else float(d) for d in report.d_trace],
        "group_sizes": [int(c) for c in sizes],
        "num_samples": int(len(ids)),
        "num_vars": int(len(var_names)),
        "phi": job.phi,
        "seed": job.seed,
        "weights_scheme": job.weights_scheme,
    }
    summary.update(summary_extra)
    paths["summary"] = os.path.join(out, "summary.json")
    write_json(paths["summary"], summary)
    return paths


def run_fit(job: FitJob) -> dict:
    """Fit the clustered model to a prepared CSV and write all artifacts.

    Factor and group counts are resolved first when set to auto, with the
    full selection evidence (scree and criterion curves) written next to
    the fit outputs. A non-convergent fit still writes artifacts from the
    partial state before the error propagates.
    """
    ids, locs, var_names, raw = _load_fit_csv(job.data_path)
    data = standardize(raw)
    n, p = raw.shape

    if job.weights_scheme == "topology":
        graph = load_station_graph(job.graph_path)
        weights = topology_weights(graph, locs, DistanceTransform())
    else:
        weights = _build_weights(locs, job.weights_scheme, job.knn_k, job.exp_bandwidth)

    plot_artifacts = {}
    selection = {}
    if job.num_factors is None:
        pa = parallel_analysis(data, B=job.pa_sims, percentile=job.pa_percentile, seed=job.seed)
        num_factors = max(1, pa.chosen_m)
        plot_artifacts["scree"] = pa
        selection["num_factors_rule"] = "parallel_analysis"
        selection["parallel_analysis_m"] = pa.chosen_m
    else:
        num_factors = job.num_factors
        selection["num_factors_rule"] = "fixed"

    if job.num_groups is None:
        template = ScfaConfig(
            num_factors=num_factors,
            num_groups=1,
            phi=job.phi,
            seed=job.seed,
        )
        ic = select_G(data, locs, weights, template, job.candidates, c_n=math.log(n))
        num_groups = ic.chosen_G
        plot_artifacts["ic_curve"] = ic
        selection["num_groups_rule"] = "information_criterion"
        selection["ic_curve"] = {
            "candidate_G": list(ic.candidate_G),
            "ic_values": [None if not math.isfinite(v) else float(v) for v in ic.ic_values],
            "failures": ic.failures,
        }
    else:
        num_groups = job.num_groups
        selection["num_groups_rule"] = "fixed"

    paths = emit_plot_data(plot_artifacts, job.output_dir)

    config = ScfaConfig(
        num_factors=num_factors,
        num_groups=num_groups,
        phi=job.phi,
        seed=job.seed,
    )
    try:
        report = fit_scfa(data, locs, weights, config)
    except DidNotConverge as exc:
        if exc.report is not None:
            extra = {
                "num_factors": num_factors,
                "num_groups": num_groups,
                "aic": None,
                "bic": None,
                "selection": selection,
            }
            paths.update(
                _write_fit_artifacts(job, ids, locs, var_names, exc.report, extra)
            )
        raise

    extra = {
        "num_factors": num_factors,
        "num_groups": num_groups,
        "aic": information_criterion(report, 2.0, p, num_factors),
        "bic": information_criterion(report, math.log(n), p, num_factors),
        "selection": selection,
    }
    paths.update(_write_fit_artifacts(job, ids, locs, var_names, report, extra))
    return paths


def _split_list(text):
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if not isinstance(payload, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return payload


def _pick(args_value, file_config, key, default):
    """Flag value if given, else config-file value, else the default."""
    if args_value is not None:
        return args_value
    return file_config.get(key, default)


def _cmd_bench(args) -> int:
    file_config = _load_config_file(args.config)
    scenarios = _pick(
        _split_list(args.scenarios) if args.scenarios else None,
        file_config, "scenarios", SCENARIOS,
    )
    methods = _pick(
        _split_list(args.methods) if args.methods else None,
        file_config, "methods", tuple(METHODS),
    )
    config = BenchConfig(
        scenarios=tuple(scenarios),
        methods=tuple(methods),
        replications=_pick(args.replications, file_config, "replications", 10),
        base_seed=_pick(args.seed, file_config, "base_seed", 0),
        output_dir=_pick(args.output_dir, file_config, "output_dir", "bench_out"),
        workers=_pick(args.workers, file_config, "workers", 1),
        n=_pick(args.n, file_config, "n", 200),
        p=_pick(args.p, file_config, "p", 10),
        num_factors=_pick(args.num_factors, file_config, "num_factors", 3),
        num_groups=_pick(args.num_groups, file_config, "num_groups", 4),
        noise_sd=_pick(args.noise_sd, file_config, "noise_sd", 1.0),
        loading_sd=_pick(args.loading_sd, file_config, "loading_sd", 0.5),
        phi=_pick(args.phi, file_config, "phi", 1.0),
    )
    result = run_benchmark(config)
    print(f"wrote {result['detail']}")
    print(f"wrote {result['aggregate']}")
    print(f"wrote {result['json']}")
    failed = sum(1 for row in result["rows"] if row[7])
    if failed:
        print(f"{failed} cell(s) failed; see the error column", file=sys.stderr)
    return 0


def _parse_count(value, what):
    """'auto' -> None, otherwise a positive integer."""
    if value is None or value == "auto":
        return None
    try:
        parsed = int(value)
    except ValueError:
        raise ValueError(f"{what} must be an integer or 'auto'") from None
    if parsed < 1:
        raise ValueError(f"{what} must be >= 1")
    return parsed


def _cmd_fit(args) -> int:
    file_config = _load_config_file(args.config)
    data_path = _pick(args.data, file_config, "data_path", None)
    if data_path is None:
        raise ValueError("fit needs --data or data_path in the config file")
    candidates = _pick(
        tuple(int(c) for c in _split_list(args.candidates)) if args.candidates else None,
        file_config, "candidates", (1, 2, 3, 4, 5, 6),
    )
    job = FitJob(
        data_path=data_path,
        output_dir=_pick(args.output_dir, file_config, "output_dir", "fit_out"),
        graph_path=_pick(args.graph, file_config, "graph_path", None),
        weights_scheme=_pick(args.weights, file_config, "weights_scheme", "knn"),
        num_groups=_parse_count(
            _pick(args.num_groups, file_config, "num_groups", "auto"), "groups"
        ),
        candidates=tuple(candidates),
        num_factors=_parse_count(
            _pick(args.num_factors, file_config, "num_factors", "auto"), "factors"
        ),
        phi=_pick(args.phi, file_config, "phi", 1.0),
        seed=_pick(args.seed, file_config, "seed", 0),
        loading_threshold=_pick(args.threshold, file_config, "loading_threshold", 0.4),
    )
    paths = run_fit(job)
    for name in sorted(paths):
        print(f"wrote {paths[name]}")
    return 0


def _cmd_simulate(args) -> int:
    spec = ScenarioSpec(
        scenario=args.scenario,
        n=args.n,
        p=args.p,
        num_factors=args.num_factors,
        num_groups=args.num_groups,
        noise_sd=args.noise_sd,
        loading_sd=args.loading_sd,
        seed=args.seed,
    )
    dataset = generate_dataset(spec)
    os.makedirs(args.output_dir, exist_ok=True)
    data_path = os.path.join(args.output_dir, "dataset.csv")
    dataset_to_csv(dataset, data_path)
    paths = emit_plot_data(
        {"scatter": (dataset.locs, dataset.true_partition.labels)}, args.output_dir
    )
    print(f"wrote {data_path}")
    print(f"wrote {paths['scatter']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scfa",
        description="Spatially clustered factor analysis tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    bench = sub.add_parser("bench", help="run the scenario benchmark sweep")
    bench.add_argument("--config", help="JSON config file; flags override it")
    bench.add_argument("--scenarios", help="comma-separated scenario names")
    bench.add_argument("--methods", help="comma-separated method labels")
    bench.add_argument("--replications", type=int)
    bench.add_argument("--seed", type=int, help="base seed")
    bench.add_argument("--output-dir")
    bench.add_argument("--workers", type=int)
    bench.add_argument("--n", type=int)
    bench.add_argument("--p", type=int)
    bench.add_argument("-m", "--num-factors", type=int)
    bench.add_argument("-G", "--num-groups", type=int)
    bench.add_argument("--noise-sd", type=float)
    bench.add_argument("--loading-sd", type=float)
    bench.add_argument("--phi", type=float)
    bench.set_defaults(func=_cmd_bench)

    fit = sub.add_parser("fit", help="fit the clustered model to a CSV")
    fit.add_argument("--config", help="JSON config file; flags override it")
    fit.add_argument("--data", help="input CSV: id,x,y[,node_id],vars...")
    fit.add_argument("--graph", help="edge-list CSV u,v,length for topology weights")
    fit.add_argument("--weights", choices=("knn", "exponential", "topology"))
    fit.add_argument("-G", "--num-groups", help="group count or 'auto'")
    fit.add_argument("--candidates", help="comma-separated G candidates for auto")
    fit.add_argument("-m", "--num-factors", help="factor count or 'auto'")
    fit.add_argument("--phi", type=float)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--threshold", type=float, help="structure-graph loading cutoff")
    fit.add_argument("--output-dir")
    fit.set_defaults(func=_cmd_fit)

    sim = sub.add_parser("simulate", help="write one synthetic dataset as CSV")
    sim.add_argument("--scenario", required=True, choices=SCENARIOS)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--n", type=int, default=200)
    sim.add_argument("--p", type=int, default=10)
    sim.add_argument("-m", "--num-factors", type=int, default=3)
    sim.add_argument("-G", "--num-groups", type=int, default=4)
    sim.add_argument("--noise-sd", type=float, default=1.0)
    sim.add_argument("--loading-sd", type=float, default=0.5)
    sim.add_argument("--output-dir", default="sim_out")
    sim.set_defaults(func=_cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ScfaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
