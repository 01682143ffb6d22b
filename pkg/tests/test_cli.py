"""Command line: exit codes, configuration merging and reproducible outputs."""

import json

from app.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, build_parser, load_config, main
from app.models.schemas import GraphModel, KernelChoice, OccTraining


def simulate(tmp_path) -> str:
    out = str(tmp_path / "data")
    code = main(["simulate", "--out", out, "--model", "er", "--m", "8", "--n", "8", "--seed", "1"])
    assert code == EXIT_OK
    return out


SHORT_CHAIN = ["--n-samples", "30", "--burn-in", "10"]


def test_usage_errors_exit_2(tmp_path):
    """Test unknown commands, missing datasets and unknown keys are usage errors."""
    assert main(["bogus"]) == EXIT_USAGE
    assert main(["classify", "--out", str(tmp_path)]) == EXIT_USAGE
    assert main(["classify", "--dataset", str(tmp_path / "missing")]) == EXIT_USAGE
    assert main(["simulate", "--out", str(tmp_path), "--set", "nonsense=1"]) == EXIT_USAGE
    assert main(["simulate", "--out", str(tmp_path), "--set", "novalue"]) == EXIT_USAGE
    assert main(["simulate", "--config", str(tmp_path / "absent.env")]) == EXIT_USAGE


def test_config_merge_order(tmp_path):
    """Test file values are overridden by flags, and flags by --set pairs."""
    config = tmp_path / "run.env"
    config.write_text("MODEL=sbm\nM=6\nN=10\nSEED=3\nKERNEL=gp-f\n")
    args = build_parser().parse_args(
        ["simulate", "--config", str(config), "--m", "8", "--set", "n=12", "--set", "model=er"]
    )
    cfg = load_config(args)
    assert cfg.m == 8
    assert cfg.n == 12
    assert cfg.model is GraphModel.ER
    assert cfg.seed == 3
    assert cfg.kernel is KernelChoice.GP_F


def test_simulate_prints_summary(tmp_path, capsys):
    """Test simulate writes a dataset and prints the task result as JSON."""
    out = simulate(tmp_path)
    result = json.loads(capsys.readouterr().out)
    assert result["task"] == "simulate"
    assert result["summary"] == {"kind": "classification", "m": 8, "n": 8}
    assert (tmp_path / "data" / "manifest.json").exists()
    assert out.endswith("data")


def test_ergm_exits_with_failure(tmp_path):
    """Test the refused graph model is a runtime failure, not a crash."""
    assert main(["simulate", "--out", str(tmp_path), "--model", "ergm", "--m", "4", "--n", "6"]) == EXIT_FAILURE


def test_distances_command(tmp_path, capsys):
    """Test the distances command writes the cache file for the chosen kernel."""
    data = simulate(tmp_path)
    capsys.readouterr()
    assert main(["distances", "--dataset", data, "--kernel", "gp-f"]) == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["summary"]["kind"] == "frobenius"
    assert (tmp_path / "data" / "distances_frobenius.csv").exists()


def test_classify_is_byte_reproducible(tmp_path):
    """Test two runs with one seed write identical CSVs."""
    data = simulate(tmp_path)
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main([
            "classify", "--dataset", data, "--out", str(out), "--seed", "4",
            "--replicates", "2", "--kernel", "gp-lambda", *SHORT_CHAIN,
        ])
        assert code == EXIT_OK
        outputs.append(out)
    for filename in ("classify_replicates.csv", "classify_summary.csv"):
        assert (outputs[0] / filename).read_bytes() == (outputs[1] / filename).read_bytes()


def test_classify_random_walk_kernel(tmp_path):
    """Test the random-walk kernel runs end to end on binary graphs."""
    data = simulate(tmp_path)
    code = main(["classify", "--dataset", data, "--out", str(tmp_path / "rw"),
                 "--kernel", "gp-rw", *SHORT_CHAIN])
    assert code == EXIT_OK
    assert (tmp_path / "rw" / "classify_summary.csv").exists()


def test_classify_without_labels_fails(tmp_path):
    """Test a survival dataset cannot be classified."""
    data = str(tmp_path / "surv")
    assert main(["simulate", "--out", data, "--survival-case", "easy", "--m", "6", "--n", "6"]) == EXIT_OK
    assert main(["classify", "--dataset", data, "--out", str(tmp_path / "c"), *SHORT_CHAIN]) == EXIT_FAILURE


def test_occ_command(tmp_path, capsys):
    """Test one-class scoring writes per-point scores and thresholds."""
    data = str(tmp_path / "occ_data")
    assert main(["simulate", "--out", data, "--model", "er", "--m", "16", "--n", "8", "--seed", "2"]) == EXIT_OK
    capsys.readouterr()
    code = main(["occ", "--dataset", data, "--out", str(tmp_path / "occ"), "--test-fraction", "0.5",
                 *SHORT_CHAIN])
    assert code == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert set(result["summary"]) == {"mu_minority_flagged", "sigma2_minority_flagged",
                                      "pi_minority_flagged", "H_minority_flagged"}
    assert (tmp_path / "occ" / "occ_scores.csv").exists()
    assert (tmp_path / "occ" / "occ_thresholds.csv").exists()


def test_survival_command(tmp_path, capsys):
    """Test survival writes surfaces, Kaplan-Meier curves, the posterior and the truth."""
    data = str(tmp_path / "surv")
    assert main(["simulate", "--out", data, "--survival-case", "easy", "--m", "6", "--n", "6"]) == EXIT_OK
    capsys.readouterr()
    out = tmp_path / "surv_out"
    code = main(["survival", "--dataset", data, "--out", str(out), "--n-samples", "12", "--burn-in", "2"])
    assert code == EXIT_OK
    result = json.loads(capsys.readouterr().out)
    assert result["summary"]["m"] == 6
    assert "sup_error_group_0" in result["summary"]
    for name in ("survival_surfaces.csv", "survival_km.csv", "survival_posterior.csv", "survival_truth.csv"):
        assert (out / name).exists()


def test_survival_refuses_random_walk(tmp_path):
    """Test survival analysis needs a distance kernel."""
    data = str(tmp_path / "surv")
    assert main(["simulate", "--out", data, "--survival-case", "easy", "--m", "6", "--n", "6"]) == EXIT_OK
    assert main(["survival", "--dataset", data, "--kernel", "gp-rw", "--out", str(tmp_path / "s")]) == EXIT_FAILURE


def test_task_specific_flags_reach_the_config(tmp_path):
    """Test lattice radius, OCC training mode and grid size flags map onto config fields."""
    parser = build_parser()
    cfg = load_config(parser.parse_args(["simulate", "--out", str(tmp_path), "--lattice-radius", "5"]))
    assert cfg.lattice_radius == 5

    out = simulate(tmp_path)
    cfg = load_config(parser.parse_args(["occ", "--dataset", out, "--occ-training", "unbalanced"]))
    assert cfg.occ_training is OccTraining.UNBALANCED
    cfg = load_config(parser.parse_args(["survival", "--dataset", out, "--grid-points", "7"]))
    assert cfg.survival_grid_points == 7
