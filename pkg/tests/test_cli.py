"""Command-line entry points: benchmark sweep, fitting, simulation."""

import csv
import json
import os

import numpy as np
import pytest

import scfa
from scfa.cli import BenchConfig, FitJob, main, run_benchmark, run_fit


def read_bytes(path):
    with open(path, "rb") as handle:
        return handle.read()


def read_csv_rows(path):
    with open(path, newline="") as handle:
        return list(csv.reader(handle))


def small_bench(output_dir, workers=1, base_seed=0):
    return BenchConfig(
        scenarios=("uniform", "gaussian"),
        methods=("efa", "scfa-kmeans-n"),
        replications=2,
        base_seed=base_seed,
        output_dir=str(output_dir),
        workers=workers,
        n=80,
    )


def write_two_blob_csv(path, n_per_blob=20, p=5, seed=0):
    """Two spatial blobs with sharply different factor structure."""
    rng = np.random.default_rng(seed)
    rows = []
    patterns = {
        1: np.ones(p),
        2: np.array([1.0 if j % 2 == 0 else -1.0 for j in range(p)]),
    }
    centers = {1: (-1.0, -1.0), 2: (1.0, 1.0)}
    idx = 0
    for blob in (1, 2):
        loadings = 2.0 * patterns[blob]
        for _ in range(n_per_blob):
            idx += 1
            f = rng.standard_normal()
            x = f * loadings + 0.4 * rng.standard_normal(p)
            cx = centers[blob][0] + 0.08 * rng.standard_normal()
            cy = centers[blob][1] + 0.08 * rng.standard_normal()
            rows.append([f"s{idx}", cx, cy, *x])
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "x", "y"] + [f"V{j + 1}" for j in range(p)])
        writer.writerows(rows)
    return rows


def test_benchmark_counting_contract(tmp_path):
    result = run_benchmark(small_bench(tmp_path / "out"))
    detail = read_csv_rows(result["detail"])
    assert detail[0] == list(
        ("scenario", "method", "replication", "frobenius", "wasserstein", "chebyshev", "aic", "error")
    )
    assert len(detail) == 1 + 2 * 2 * 2  # scenarios x methods x replications
    aggregate = read_csv_rows(result["aggregate"])
    assert len(aggregate) == 1 + 2 * 2
    assert all(row[7] == "" for row in detail[1:])  # no failures expected

    payload = json.loads(read_bytes(result["json"]))
    assert payload["config"]["replications"] == 2
    assert len(payload["aggregate"]) == 4
    assert os.path.exists(os.path.join(tmp_path / "out", "run_log.txt"))


def test_benchmark_detail_rows_are_scenario_major(tmp_path):
    result = run_benchmark(small_bench(tmp_path / "out"))
    detail = read_csv_rows(result["detail"])[1:]
    keys = [(row[0], row[1], int(row[2])) for row in detail]
    expected = [
        (s, m, r)
        for s in ("uniform", "gaussian")
        for m in ("efa", "scfa-kmeans-n")
        for r in range(2)
    ]
    assert keys == expected


def test_benchmark_output_is_byte_stable(tmp_path):
    first = run_benchmark(small_bench(tmp_path / "a", workers=1))
    second = run_benchmark(small_bench(tmp_path / "b", workers=1))
    parallel = run_benchmark(small_bench(tmp_path / "c", workers=2))
    assert read_bytes(first["detail"]) == read_bytes(second["detail"])
    assert read_bytes(first["detail"]) == read_bytes(parallel["detail"])
    assert read_bytes(first["aggregate"]) == read_bytes(parallel["aggregate"])
    # the json embeds the config (output_dir, workers), so compare content
    first_agg = json.loads(read_bytes(first["json"]))["aggregate"]
    parallel_agg = json.loads(read_bytes(parallel["json"]))["aggregate"]
    assert first_agg == parallel_agg


def test_benchmark_seed_changes_results(tmp_path):
    a = run_benchmark(small_bench(tmp_path / "a", base_seed=0))
    b = run_benchmark(small_bench(tmp_path / "b", base_seed=1))
    assert read_bytes(a["detail"]) != read_bytes(b["detail"])


def test_benchmark_failed_cells_become_nan_rows(tmp_path):
    # 12 points split 4 ways leave every group below the p+1=11 minimum
    config = BenchConfig(
        scenarios=("uniform",),
        methods=("scfa-kmeans-n",),
        replications=1,
        output_dir=str(tmp_path / "out"),
        n=12,
    )
    result = run_benchmark(config)
    row = read_csv_rows(result["detail"])[1]
    assert "InvalidInit" in row[7]
    assert row[3] == "nan"
    aggregate = read_csv_rows(result["aggregate"])[1]
    assert aggregate[2] == "nan"


def test_bench_cli_with_config_file_and_override(tmp_path, capsys):
    config_path = tmp_path / "bench.json"
    config_path.write_text(
        json.dumps(
            {
                "scenarios": ["uniform"],
                "methods": ["efa"],
                "replications": 3,
                "n": 60,
                "output_dir": str(tmp_path / "ignored"),
            }
        )
    )
    out_dir = tmp_path / "out"
    code = main(
        [
            "bench",
            "--config",
            str(config_path),
            "--replications",
            "1",
            "--output-dir",
            str(out_dir),
        ]
    )
    assert code == 0
    payload = json.loads(read_bytes(out_dir / "aggregate.json"))
    assert payload["config"]["replications"] == 1  # flag wins
    assert payload["config"]["n"] == 60  # file value survives
    assert tuple(payload["config"]["scenarios"]) == ("uniform",)
    detail = read_csv_rows(out_dir / "detail.csv")
    assert len(detail) == 2


def test_fit_two_blobs_selects_two_groups(tmp_path):
    data_path = tmp_path / "blobs.csv"
    write_two_blob_csv(data_path)
    out_dir = tmp_path / "fit"
    code = main(
        [
            "fit",
            "--data",
            str(data_path),
            "--output-dir",
            str(out_dir),
            "-m",
            "1",
            "--candidates",
            "1,2,3",
        ]
    )
    assert code == 0

    summary = json.loads(read_bytes(out_dir / "summary.json"))
    assert summary["num_groups"] == 2
    assert summary["converged"] is True
    assert summary["num_factors"] == 1
    assert isinstance(summary["aic"], float)
    assert isinstance(summary["bic"], float)

    assignments = read_csv_rows(out_dir / "assignments.csv")
    assert assignments[0] == ["id", "x", "y", "group"]
    labels = np.array([int(r[3]) for r in assignments[1:]])
    truth = scfa.Partition(np.repeat([1, 2], 20), 2)
    est = scfa.Partition(labels, 2)
    assert scfa.label_agreement(truth, est) >= 0.95

    curve = read_csv_rows(out_dir / "ic_curve.csv")
    assert curve[0] == ["candidate_G", "ic"]
    assert [int(r[0]) for r in curve[1:]] == [1, 2, 3]
    for g in (1, 2):
        assert os.path.exists(out_dir / f"loadings_group{g}.csv")
        assert os.path.exists(out_dir / f"loadings_varimax_group{g}.csv")
        assert os.path.exists(out_dir / f"structure_group{g}.json")


def test_fit_auto_factor_count_writes_scree(tmp_path):
    data_path = tmp_path / "blobs.csv"
    write_two_blob_csv(data_path)
    out_dir = tmp_path / "fit"
    job = FitJob(
        data_path=str(data_path),
        output_dir=str(out_dir),
        num_groups=2,
        num_factors=None,
    )
    run_fit(job)
    scree = read_csv_rows(out_dir / "scree.csv")
    assert scree[0] == ["factor_index", "observed", "reference"]
    assert len(scree) == 6  # p=5 eigenvalues
    summary = json.loads(read_bytes(out_dir / "summary.json"))
    assert summary["selection"]["num_factors_rule"] == "parallel_analysis"
    assert summary["num_factors"] >= 1


def test_fit_threshold_gates_structure_links(tmp_path):
    data_path = tmp_path / "blobs.csv"
    write_two_blob_csv(data_path)

    def links_at(threshold, out_name):
        out_dir = tmp_path / out_name
        job = FitJob(
            data_path=str(data_path),
            output_dir=str(out_dir),
            num_groups=2,
            num_factors=1,
            loading_threshold=threshold,
        )
        run_fit(job)
        graph = json.loads(read_bytes(out_dir / "structure_group1.json"))
        assert graph["directed"] is True
        return graph["links"]

    assert links_at(1.0, "tight") == []
    assert len(links_at(0.0, "loose")) == 5  # every variable loads


def test_fit_is_deterministic(tmp_path):
    data_path = tmp_path / "blobs.csv"
    write_two_blob_csv(data_path)
    for name in ("a", "b"):
        job = FitJob(
            data_path=str(data_path),
            output_dir=str(tmp_path / name),
            num_groups=2,
            num_factors=1,
        )
        run_fit(job)
    for artifact in ("assignments.csv", "summary.json", "loadings_group1.csv"):
        assert read_bytes(tmp_path / "a" / artifact) == read_bytes(
            tmp_path / "b" / artifact
        )


def test_fit_topology_weights(tmp_path):
    rng = np.random.default_rng(3)
    data_path = tmp_path / "stations.csv"
    n, p = 30, 4
    with open(data_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["id", "x", "y", "node_id"] + [f"V{j + 1}" for j in range(p)])
        for i in range(n):
            blob = 1 if i < 15 else 2
            sign = 1.0 if blob == 1 else -1.0
            f = rng.standard_normal()
            x = f * sign * np.array([2.0, 2.0, -2.0, 2.0]) + 0.5 * rng.standard_normal(p)
            writer.writerow([f"s{i}", float(i), 0.0, i, *x])
    graph_path = tmp_path / "graph.csv"
    with open(graph_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["u", "v", "length"])
        for i in range(n - 1):
            writer.writerow([i, i + 1, 1.0])
    out_dir = tmp_path / "fit"
    code = main(
        [
            "fit",
            "--data",
            str(data_path),
            "--graph",
            str(graph_path),
            "--weights",
            "topology",
            "-G",
            "1",
            "-m",
            "1",
            "--output-dir",
            str(out_dir),
        ]
    )
    assert code == 0
    assert os.path.exists(out_dir / "assignments.csv")
    summary = json.loads(read_bytes(out_dir / "summary.json"))
    assert summary["weights_scheme"] == "topology"


def test_simulate_writes_deterministic_csv(tmp_path):
    for name in ("a", "b"):
        code = main(
            [
                "simulate",
                "--scenario",
                "radial",
                "--n",
                "30",
                "--seed",
                "5",
                "--output-dir",
                str(tmp_path / name),
            ]
        )
        assert code == 0
    assert read_bytes(tmp_path / "a" / "dataset.csv") == read_bytes(
        tmp_path / "b" / "dataset.csv"
    )
    rows = read_csv_rows(tmp_path / "a" / "dataset.csv")
    assert len(rows) == 31
    assert rows[0][:4] == ["id", "x", "y", "group"]
    scatter = read_csv_rows(tmp_path / "a" / "scatter.csv")
    assert scatter[0] == ["x", "y", "group"]
    assert len(scatter) == 31


def test_cli_reports_errors_with_exit_code_two(tmp_path, capsys):
    assert main(["bench", "--scenarios", "spiral", "--output-dir", str(tmp_path)]) == 2
    assert "spiral" in capsys.readouterr().err
    assert main(["fit", "--output-dir", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "--data" in err


def test_fit_rejects_malformed_csv(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,x,y,V1\n1,0.0,oops,1.0\n")
    code = main(["fit", "--data", str(bad), "-G", "1", "-m", "1", "--output-dir", str(tmp_path / "o")])
    assert code == 2
