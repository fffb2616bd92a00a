import io
import json

import numpy as np
import pytest

from saddlesgd import cli, data, synthetic


@pytest.fixture
def train_file(tmp_path):
    ds = synthetic.make_sparse_classification(60, 16, 4, seed=1, margin=0.1)
    path = tmp_path / "train.txt"
    with open(path, "w") as fh:
        data.write_libsvm(ds, fh)
    return str(path)


@pytest.fixture
def test_file(tmp_path):
    ds = synthetic.make_sparse_classification(40, 16, 4, seed=2, margin=0.1)
    path = tmp_path / "test.txt"
    with open(path, "w") as fh:
        data.write_libsvm(ds, fh)
    return str(path)


def run(argv):
    return cli.main(argv)


class TestUsage:
    def test_no_command(self):
        assert run([]) == cli.EXIT_USAGE

    def test_unknown_command(self):
        assert run(["frobnicate"]) == cli.EXIT_USAGE

    def test_missing_required_flag(self):
        assert run(["train"]) == cli.EXIT_USAGE

    def test_bad_schedule_choice(self, train_file):
        assert run(["train", "--data", train_file, "--schedule", "cubic"]) == cli.EXIT_USAGE


class TestDataErrors:
    def test_missing_file(self):
        assert run(["train", "--data", "/nonexistent/path.txt"]) == cli.EXIT_DATA

    def test_malformed_file(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text("+1 0:1.0\n")
        assert run(["train", "--data", str(bad)]) == cli.EXIT_DATA


class TestTrain:
    def test_deterministic_model_files(self, tmp_path, train_file):
        m1 = tmp_path / "a.bin"
        m2 = tmp_path / "b.bin"
        argv = ["train", "--data", train_file, "--epochs", "3",
                "--workers", "1", "--seed", "7"]
        assert run(argv + ["--model", str(m1)]) == cli.EXIT_OK
        assert run(argv + ["--model", str(m2)]) == cli.EXIT_OK
        assert m1.read_bytes() == m2.read_bytes()

    def test_trace_is_jsonl(self, tmp_path, train_file, test_file):
        trace = tmp_path / "trace.jsonl"
        argv = ["train", "--data", train_file, "--test", test_file,
                "--epochs", "3", "--trace", str(trace)]
        assert run(argv) == cli.EXIT_OK
        records = [json.loads(line) for line in trace.read_text().splitlines()]
        assert [r["epoch"] for r in records] == [1, 2, 3]
        for r in records:
            assert {"primal", "dual", "gap", "avg_gap", "test_error"} <= set(r)

    def test_schedule_alias(self, tmp_path, train_file):
        model = tmp_path / "m.bin"
        argv = ["train", "--data", train_file, "--epochs", "2",
                "--schedule", "lemma2", "--model", str(model)]
        assert run(argv) == cli.EXIT_OK
        alias_bytes = model.read_bytes()
        argv[argv.index("lemma2")] = "bound_sqrt"
        assert run(argv) == cli.EXIT_OK
        assert model.read_bytes() == alias_bytes

    def test_multiworker_with_greedy_balance(self, tmp_path, train_file):
        argv = ["train", "--data", train_file, "--epochs", "2",
                "--workers", "2", "--balance", "greedy",
                "--model", str(tmp_path / "m.bin")]
        assert run(argv) == cli.EXIT_OK


class TestReplayCommand:
    def make_logged_run(self, tmp_path, train_file, workers="2"):
        model = tmp_path / "model.bin"
        log = tmp_path / "updates.bin"
        argv = ["train", "--data", train_file, "--epochs", "2",
                "--workers", workers, "--seed", "3",
                "--model", str(model), "--log-updates", str(log)]
        assert run(argv) == cli.EXIT_OK
        return model, log

    def test_replay_verifies(self, tmp_path, train_file, capsys):
        model, log = self.make_logged_run(tmp_path, train_file)
        code = run(["replay", "--data", train_file, "--log", str(log),
                    "--model-expected", str(model), "--seed", "3"])
        assert code == cli.EXIT_OK
        assert "replay ok" in capsys.readouterr().out

    def test_replay_detects_mismatch(self, tmp_path, train_file):
        model, log = self.make_logged_run(tmp_path, train_file)
        # re-train with another seed so the checkpoint no longer matches
        other = tmp_path / "other.bin"
        run(["train", "--data", train_file, "--epochs", "2", "--seed", "99",
             "--model", str(other)])
        code = run(["replay", "--data", train_file, "--log", str(log),
                    "--model-expected", str(other), "--seed", "3"])
        assert code == cli.EXIT_VERIFY

    def test_replay_rejects_corrupt_log(self, tmp_path, train_file):
        model, log = self.make_logged_run(tmp_path, train_file)
        log.write_bytes(log.read_bytes()[:-4])
        code = run(["replay", "--data", train_file, "--log", str(log),
                    "--model-expected", str(model), "--seed", "3"])
        assert code == cli.EXIT_DATA


class TestEvalCommand:
    def test_report_fields(self, tmp_path, train_file, test_file, capsys):
        model = tmp_path / "model.bin"
        run(["train", "--data", train_file, "--epochs", "5", "--eta0", "8",
             "--model", str(model)])
        code = run(["eval", "--model", str(model), "--test", test_file,
                    "--data", train_file])
        assert code == cli.EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert {"test_error", "auprc", "primal", "dual", "gap"} <= set(report)
        assert report["gap"] >= 0

    def test_without_train_data(self, tmp_path, train_file, test_file, capsys):
        model = tmp_path / "model.bin"
        run(["train", "--data", train_file, "--epochs", "2", "--model", str(model)])
        assert run(["eval", "--model", str(model), "--test", test_file]) == cli.EXIT_OK
        report = json.loads(capsys.readouterr().out)
        assert "primal" not in report


class TestPsgdTrainCommand:
    def test_produces_model(self, tmp_path, train_file):
        model = tmp_path / "model.bin"
        argv = ["psgd-train", "--data", train_file, "--epochs", "3",
                "--workers", "2", "--model", str(model)]
        assert run(argv) == cli.EXIT_OK
        assert model.exists()

    def test_trace(self, tmp_path, train_file):
        trace = tmp_path / "trace.jsonl"
        argv = ["psgd-train", "--data", train_file, "--epochs", "2",
                "--workers", "2", "--trace", str(trace)]
        assert run(argv) == cli.EXIT_OK
        records = [json.loads(line) for line in trace.read_text().splitlines()]
        assert all("primal" in r for r in records)


class TestScaleCommand:
    def test_reports_fit(self, tmp_path, train_file, capsys):
        code = run(["scale", "--data", train_file, "--workers-list", "1,2",
                    "--warmup", "1", "--epochs", "2"])
        assert code == cli.EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert {"A", "B", "r_squared", "samples", "predicted"} <= set(out)
        assert len(out["samples"]) == 2

    def test_single_worker_count_is_an_error(self, train_file):
        code = run(["scale", "--data", train_file, "--workers-list", "2",
                    "--warmup", "1", "--epochs", "2"])
        assert code == cli.EXIT_USAGE
