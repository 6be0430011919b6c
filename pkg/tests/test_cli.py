import csv
import math

import pytest

from crowdem.batch_em import mv_posterior, predict
from crowdem.metrics import error_rate
from crowdem.model import load_ground_truth, load_labels
from tools.cli import EXIT_DATA, EXIT_DEGENERATE, EXIT_OK, EXIT_USAGE, main


# Helper function to run the CLI in-process and capture its output
def run_cli(argv, capsys):
    """Runs main(argv) and returns (exit code, stdout, stderr)."""
    code = main([str(a) for a in argv])
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def report(stdout):
    """Parses the key=value lines the commands print."""
    return dict(line.split("=", 1) for line in stdout.splitlines() if "=" in line)


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.reader(f))


@pytest.fixture
def synth_dir(tmp_path, capsys):
    """A synthetic instance written by the synth command."""
    out = tmp_path / "synth"
    code, _, _ = run_cli(["synth", "--m", 10, "--n", 200, "--k", 3, "--seed", 7, "--out-dir", out], capsys)
    assert code == EXIT_OK
    return out


def test_synth_is_reproducible(tmp_path, capsys):
    """Tests that two synth runs with the same seed write identical files."""
    for name in ("one", "two"):
        code, stdout, _ = run_cli(["synth", "--m", 10, "--n", 200, "--k", 3, "--seed", 7,
                                   "--out-dir", tmp_path / name], capsys)
        assert code == EXIT_OK
        assert f"labels={tmp_path / name / 'labels.csv'}" in stdout
    for filename in ("labels.csv", "truth.csv", "true_model.txt"):
        assert (tmp_path / "one" / filename).read_bytes() == (tmp_path / "two" / filename).read_bytes()


def test_mv_with_and_without_truth(synth_dir, tmp_path, capsys):
    """Tests majority voting reports an error rate only when truth is given."""
    code, stdout, _ = run_cli(["mv", "--labels", synth_dir / "labels.csv"], capsys)
    assert code == EXIT_OK
    assert "error_rate" not in stdout

    predictions = tmp_path / "mv.csv"
    code, stdout, _ = run_cli(["mv", "--labels", synth_dir / "labels.csv", "--truth", synth_dir / "truth.csv",
                               "--out", predictions], capsys)
    assert code == EXIT_OK
    rate = float(report(stdout)["error_rate"])
    assert 0 <= rate <= 100
    rows = read_csv(predictions)
    assert rows[0] == ["item", "label"]
    assert len(rows) == 201


def test_em_trace_with_one_iteration(synth_dir, tmp_path, capsys):
    """Tests that --max-iter 1 gives the initial and one EM row."""
    trace = tmp_path / "em_trace.csv"
    code, stdout, _ = run_cli(["em", "--labels", synth_dir / "labels.csv", "--truth", synth_dir / "truth.csv",
                               "--max-iter", 1, "--trace", trace], capsys)
    assert code == EXIT_OK
    rows = read_csv(trace)
    assert rows[0] == ["iter", "loglik", "error_rate"]
    assert [row[0] for row in rows[1:]] == ["0", "1"]
    assert float(report(stdout)["loglik"]) == float(rows[-1][1])


def test_online_trace_starts_at_majority_vote(synth_dir, tmp_path, capsys):
    """Tests the online trace layout and that epoch 0 scores the majority vote."""
    trace = tmp_path / "online_trace.csv"
    code, stdout, _ = run_cli(["online", "--labels", synth_dir / "labels.csv", "--truth", synth_dir / "truth.csv",
                               "--epochs", 3, "--seed", 1, "--trace", trace], capsys)
    assert code == EXIT_OK
    rows = read_csv(trace)
    assert rows[0] == ["epoch", "error_rate", "loglik", "projections"]
    assert [row[0] for row in rows[1:]] == ["0", "1", "2", "3"]

    with open(synth_dir / "labels.csv", newline="", encoding="utf-8") as f:
        labels = load_labels(f)
    with open(synth_dir / "truth.csv", newline="", encoding="utf-8") as f:
        truth = load_ground_truth(f, labels)
    assert float(rows[1][1]) == error_rate(predict(mv_posterior(labels)), truth)
    assert int(report(stdout)["projections"]) == int(rows[-1][3])


def test_online_rejects_bad_schedule(tmp_path, capsys):
    """Tests that an out-of-range exponent is a usage error."""
    code, _, stderr = run_cli(["online", "--labels", tmp_path / "missing.csv",
                               "--schedule", "online2", "--a", 0.4], capsys)
    assert code == EXIT_USAGE
    assert "0.5 < a < 1" in stderr


def test_usage_errors(tmp_path, capsys):
    """Tests argparse failures and invalid thread counts."""
    code, _, _ = run_cli(["em"], capsys)
    assert code == EXIT_USAGE
    code, _, stderr = run_cli(["mv", "--labels", tmp_path / "x.csv", "--threads", 0], capsys)
    assert code == EXIT_USAGE
    assert "--threads" in stderr


def test_bad_input_files(tmp_path, capsys):
    """Tests malformed and missing label files exit with the data error code."""
    bad = tmp_path / "bad.csv"
    bad.write_text("item,worker,label\na,w1,1\na,w1,2\n", encoding="utf-8")
    code, _, stderr = run_cli(["mv", "--labels", bad], capsys)
    assert code == EXIT_DATA
    assert "line 3" in stderr

    code, _, _ = run_cli(["em", "--labels", tmp_path / "missing.csv"], capsys)
    assert code == EXIT_DATA


def test_degenerate_worker(tmp_path, capsys):
    """Tests that unsmoothed EM on a worker who never uses a label exits with code 4."""
    labels = tmp_path / "lazy.csv"
    labels.write_text("item,worker,label\na,lazy,1\nb,lazy,1\n", encoding="utf-8")
    code, _, stderr = run_cli(["em", "--labels", labels, "--k", 2, "--smoothing", 0], capsys)
    assert code == EXIT_DEGENERATE
    assert "lazy" in stderr


def test_eval_reproduces_em_loglik(tmp_path, capsys):
    """Tests evaluating a converged EM model on the labels it was fitted to."""
    data = tmp_path / "dense"
    code, _, _ = run_cli(["synth", "--m", 8, "--n", 200, "--k", 2, "--acc-lo", 0.7, "--acc-hi", 0.9,
                          "--labels-per-item", 8, "--seed", 3, "--out-dir", data], capsys)
    assert code == EXIT_OK
    model = tmp_path / "model.txt"
    code, stdout, _ = run_cli(["em", "--labels", data / "labels.csv", "--max-iter", 1000, "--tol", 1e-15,
                               "--out", model], capsys)
    assert code == EXIT_OK
    em_loglik = report(stdout)["loglik"]

    code, stdout, _ = run_cli(["eval", "--model", model, "--labels", data / "labels.csv",
                               "--truth", data / "truth.csv"], capsys)
    assert code == EXIT_OK
    values = report(stdout)
    assert values["loglik"] == em_loglik
    assert set(values) == {"loglik", "residual", "residual_frobenius", "stationarity_gap", "error_rate"}
    assert float(values["residual"]) < 1e-6
    assert float(values["residual"]) <= float(values["residual_frobenius"])
    assert math.isfinite(float(values["stationarity_gap"]))


def test_eval_uninformative_model(tmp_path, capsys):
    """Tests the log-likelihood of one label under a uniform model."""
    model = tmp_path / "uniform.txt"
    model.write_text("1 2\n0.5 0.5\n0.5 0.5\n", encoding="utf-8")
    labels = tmp_path / "one.csv"
    labels.write_text("item,worker,label\na,w,1\n", encoding="utf-8")
    code, stdout, _ = run_cli(["eval", "--model", model, "--labels", labels], capsys)
    assert code == EXIT_OK
    assert float(report(stdout)["loglik"]) == pytest.approx(math.log(0.5), abs=1e-15)


def test_eval_worker_count_mismatch(synth_dir, tmp_path, capsys):
    """Tests that a model for a different worker count is rejected."""
    model = tmp_path / "uniform.txt"
    model.write_text("1 3\n" + "0.5 0.25 0.25\n" * 3, encoding="utf-8")
    code, _, stderr = run_cli(["eval", "--model", model, "--labels", synth_dir / "labels.csv"], capsys)
    assert code == EXIT_DATA
    assert "workers" in stderr


def test_sweep_writes_one_row_per_seed(synth_dir, tmp_path, capsys):
    """Tests a single-cell sweep over two seeds."""
    out = tmp_path / "sweep.csv"
    code, stdout, _ = run_cli(["sweep", "--labels", synth_dir / "labels.csv", "--truth", synth_dir / "truth.csv",
                               "--a-grid", "2", "--b-grid", "1.5", "--seeds", "0,1", "--epochs", 2,
                               "--out", out], capsys)
    assert code == EXIT_OK
    rows = read_csv(out)
    assert rows[0] == ["schedule", "a", "b", "seed", "final_error", "mean_error"]
    assert [row[3] for row in rows[1:]] == ["0", "1"]
    assert rows[1][5] == rows[2][5]
    assert stdout.startswith("best a=2 b=1.5 mean_error=")


def test_sweep_validates_grid_before_fitting(synth_dir, tmp_path, capsys):
    """Tests that a bad grid cell or a missing truth file is reported up front."""
    out = tmp_path / "sweep.csv"
    code, _, _ = run_cli(["sweep", "--labels", synth_dir / "labels.csv", "--truth", synth_dir / "truth.csv",
                          "--schedule", "online2", "--a-grid", "0.75,1.5", "--b-grid", "0.2", "--out", out], capsys)
    assert code == EXIT_USAGE
    assert not out.exists()
    code, _, _ = run_cli(["sweep", "--labels", synth_dir / "labels.csv",
                          "--a-grid", "2", "--b-grid", "x", "--out", out], capsys)
    assert code == EXIT_USAGE
    code, _, stderr = run_cli(["sweep", "--labels", synth_dir / "labels.csv",
                               "--a-grid", "2", "--b-grid", "1.5", "--out", out], capsys)
    assert code == EXIT_USAGE
    assert "ground truth" in stderr


def test_chance_level_workers_give_chance_error(tmp_path, capsys):
    """Tests that EM cannot beat chance when every worker guesses."""
    out = tmp_path / "chance"
    run_cli(["synth", "--m", 10, "--n", 200, "--k", 2, "--acc-lo", 0.5, "--acc-hi", 0.5, "--labels-per-item", 5,
             "--seed", 3, "--out-dir", out], capsys)
    code, stdout, _ = run_cli(["em", "--labels", out / "labels.csv", "--truth", out / "truth.csv"], capsys)
    assert code == EXIT_OK
    assert 35.0 <= float(report(stdout)["error_rate"]) <= 65.0
