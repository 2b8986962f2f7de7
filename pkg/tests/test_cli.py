import json
from pathlib import Path

import numpy as np
import pytest

from operon.checkpoint import load_checkpoint
from operon.cli import EXIT_CONFIG, EXIT_DATA, EXIT_METRIC, EXIT_OK, main
from operon.data import load_with_header
from operon.operator import loss


def write_cfg(path, doc):
    path.write_text(json.dumps(doc, indent=2))
    return str(path)


def gen_config(tmp, count=40, system="pendulum", seed=7, num_sensors=1):
    return write_cfg(tmp / "gen.json", {
        "seed": seed,
        "system": system,
        "count": count,
        "h_range": [0.0, 0.02],
        "num_sensors": num_sensors,
        "dataset": "data.jsonl",
    })


def train_config(tmp, dataset="data.jsonl", kind="deeponet", epochs=4, seed=9, **model):
    model_block = {"basis_per_output": 3, "hidden_width": 10, "hidden_depth": 1}
    model_block.update(model)
    if kind != "deeponet":
        model_block = {"hidden": [8], "members": 2, **model}
    return write_cfg(tmp / f"train_{kind}.json", {
        "seed": seed,
        "dataset": str(tmp / dataset),
        "model_kind": kind,
        "model": model_block,
        "schedule": {"epochs": epochs, "batch_size": 16},
        "checkpoint": f"model_{kind}.json",
        "history": f"history_{kind}.csv",
    })


@pytest.fixture()
def trained(tmp_path):
    assert main(["gen-data", "--config", gen_config(tmp_path), "--out", str(tmp_path)]) == EXIT_OK
    cfg = train_config(tmp_path)
    assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == EXIT_OK
    return tmp_path


class TestGenData:
    def test_writes_dataset(self, tmp_path, capsys):
        code = main(["gen-data", "--config", gen_config(tmp_path), "--out", str(tmp_path)])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "wrote 40 records" in out and "hash" in out
        triplets, header = load_with_header(tmp_path / "data.jsonl")
        assert len(triplets) == 40

    def test_rerun_identical_bytes(self, tmp_path):
        cfg = gen_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["gen-data", "--config", cfg, "--out", str(out_a)]) == EXIT_OK
        assert main(["gen-data", "--config", cfg, "--out", str(out_b)]) == EXIT_OK
        assert (out_a / "data.jsonl").read_bytes() == (out_b / "data.jsonl").read_bytes()

    def test_seed_flag_overrides(self, tmp_path):
        cfg = gen_config(tmp_path)
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        main(["gen-data", "--config", cfg, "--out", str(out_a)])
        main(["gen-data", "--config", cfg, "--seed", "123", "--out", str(out_b)])
        assert (out_a / "data.jsonl").read_bytes() != (out_b / "data.jsonl").read_bytes()

    def test_missing_seed_rejected(self, tmp_path):
        cfg = write_cfg(tmp_path / "bad.json", {"system": "pendulum", "count": 5,
                                                "h_range": [0, 0.01], "dataset": "d.jsonl"})
        assert main(["gen-data", "--config", cfg]) == EXIT_CONFIG

    def test_unknown_system(self, tmp_path):
        cfg = write_cfg(tmp_path / "bad.json", {"seed": 1, "system": "nope", "count": 5,
                                                "h_range": [0, 0.01], "dataset": "d.jsonl"})
        assert main(["gen-data", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG


class TestTrain:
    def test_history_rows_match_epochs(self, trained):
        lines = (trained / "history_deeponet.csv").read_text().splitlines()
        assert lines[0] == "epoch,loss"
        assert len(lines) == 1 + 4

    def test_checkpoint_reload_reproduces_history_loss(self, trained):
        model, info = load_checkpoint(trained / "model_deeponet.json")
        triplets, header = load_with_header(trained / "data.jsonl")
        assert info["dataset_fingerprint"] == header["hash"]
        last = float((trained / "history_deeponet.csv").read_text().splitlines()[-1].split(",")[1])
        assert abs(loss(model, triplets) - last) < 1e-12

    def test_sensor_mismatch_rejected(self, tmp_path):
        main(["gen-data", "--config", gen_config(tmp_path), "--out", str(tmp_path)])
        cfg = train_config(tmp_path, num_sensors=2)
        assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_dataset_is_data_error(self, tmp_path):
        cfg = train_config(tmp_path, dataset="absent.jsonl")
        assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == EXIT_DATA

    def test_fnn_and_ensemble_kinds(self, trained):
        for kind in ("fnn", "ensemble"):
            cfg = train_config(trained, kind=kind, epochs=2)
            assert main(["train", "--config", cfg, "--out", str(trained)]) == EXIT_OK
            model, info = load_checkpoint(trained / f"model_{kind}.json")
            assert info["model_kind"] == kind

    def test_rerun_identical_bytes(self, trained):
        cfg = train_config(trained, epochs=3, seed=31)
        out_a, out_b = trained / "ta", trained / "tb"
        assert main(["train", "--config", cfg, "--out", str(out_a)]) == EXIT_OK
        assert main(["train", "--config", cfg, "--out", str(out_b)]) == EXIT_OK
        for name in ("model_deeponet.json", "history_deeponet.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_does_not_mutate_inputs(self, tmp_path):
        main(["gen-data", "--config", gen_config(tmp_path), "--out", str(tmp_path)])
        before = (tmp_path / "data.jsonl").read_bytes()
        main(["train", "--config", train_config(tmp_path), "--out", str(tmp_path)])
        assert (tmp_path / "data.jsonl").read_bytes() == before


def predict_config(tmp, scheme="recursive", emit_truth=True):
    doc = {
        "seed": 3,
        "checkpoint": str(tmp / "model_deeponet.json"),
        "x0": [0.2, 0.0],
        "partition": {"kind": "uniform", "start": 0.0, "stop": 0.1, "step": 0.01},
        "signal": {"kind": "time_expr", "expr": "sin(t/2)"},
        "scheme": scheme,
        "out_prediction": "pred.csv",
    }
    if emit_truth:
        doc["emit_truth"] = {"substeps": 5, "out": "truth.csv"}
    return write_cfg(tmp / "predict.json", doc)


class TestPredict:
    def test_row_count_and_metadata(self, trained, capsys):
        assert main(["predict", "--config", predict_config(trained),
                     "--out", str(trained)]) == EXIT_OK
        lines = (trained / "pred.csv").read_text().splitlines()
        assert lines[0] == "# scheme: recursive"
        assert lines[1] == "t,x0,x1"
        assert len(lines) == 2 + 11
        truth_lines = (trained / "truth.csv").read_text().splitlines()
        assert truth_lines[0] == "t,x0,x1"  # same schema, diffable columns

    def test_scheme_flag(self, trained):
        assert main(["predict", "--config", predict_config(trained, emit_truth=False),
                     "--scheme", "rk2", "--out", str(trained)]) == EXIT_OK
        assert "# scheme: rk2" in (trained / "pred.csv").read_text()

    def test_rerun_identical_bytes(self, trained):
        cfg = predict_config(trained)
        out_a, out_b = trained / "pa", trained / "pb"
        assert main(["predict", "--config", cfg, "--out", str(out_a)]) == EXIT_OK
        assert main(["predict", "--config", cfg, "--out", str(out_b)]) == EXIT_OK
        for name in ("pred.csv", "truth.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()


def evaluate_config(tmp, ic=None, scheme="recursive"):
    return write_cfg(tmp / "evaluate.json", {
        "seed": 5,
        "checkpoint": str(tmp / "model_deeponet.json"),
        "system": "pendulum",
        "partition": {"kind": "uniform", "start": 0.0, "stop": 0.2, "step": 0.05},
        "signal": {"kind": "linear_feedback", "gain": -0.8, "component": 1},
        "scheme": scheme,
        "substeps": 4,
        "ic": ic or {"kind": "box", "box": [[-1.5, 1.5], [0.0, 0.0]], "count": 3},
        "out_report": "report.json",
        "out_csv": "report.csv",
    })


class TestEvaluate:
    def test_box_protocol(self, trained):
        assert main(["evaluate", "--config", evaluate_config(trained),
                     "--out", str(trained)]) == EXIT_OK
        doc = json.loads((trained / "report.json").read_text())
        assert doc["num_trajectories"] == 3
        assert len(doc["mean"]) == 2
        csv = (trained / "report.csv").read_text().splitlines()
        assert csv[0].startswith("mean_x0")

    def test_single_ic(self, trained):
        cfg = evaluate_config(trained, ic={"kind": "single", "x0": [0.3, 0.0]})
        assert main(["evaluate", "--config", cfg, "--out", str(trained)]) == EXIT_OK
        doc = json.loads((trained / "report.json").read_text())
        assert doc["num_trajectories"] == 1
        assert doc["std"] == [0.0, 0.0]

    def test_rerun_identical_bytes(self, trained):
        cfg = evaluate_config(trained)
        out_a, out_b = trained / "ea", trained / "eb"
        assert main(["evaluate", "--config", cfg, "--out", str(out_a)]) == EXIT_OK
        assert main(["evaluate", "--config", cfg, "--out", str(out_b)]) == EXIT_OK
        for name in ("report.json", "report.csv"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_zero_reference_is_metric_error(self, trained):
        # pendulum starting at the origin under zero input stays there: the
        # relative error is undefined
        cfg = evaluate_config(trained, ic={"kind": "single", "x0": [0.0, 0.0]})
        doc = json.loads(Path(cfg).read_text())
        doc["signal"] = {"kind": "constant", "value": 0.0}
        cfg = write_cfg(trained / "ev0.json", doc)
        assert main(["evaluate", "--config", cfg, "--out", str(trained)]) == EXIT_METRIC


def compare_config(tmp):
    return write_cfg(tmp / "compare.json", {
        "seed": 11,
        "dataset": str(tmp / "data.jsonl"),
        "model": {"basis_per_output": 3, "hidden_width": 10, "hidden_depth": 1},
        "fnn": {"hidden": [8]},
        "ensemble": {"members": 2},
        "schedule": {"epochs": 2, "batch_size": 16},
        "eval": {
            "partition": {"kind": "uniform", "start": 0.0, "stop": 0.2, "step": 0.05},
            "signal": {"kind": "linear_feedback", "gain": -0.8, "component": 1},
            "substeps": 4,
            "ic": {"kind": "box", "box": [[-1.5, 1.5], [0.0, 0.0]], "count": 2},
        },
        "out": "comparison.csv",
    })


class TestCompare:
    def test_table_shape(self, trained):
        assert main(["compare", "--config", compare_config(trained),
                     "--out", str(trained)]) == EXIT_OK
        lines = (trained / "comparison.csv").read_text().splitlines()
        assert lines[0] == "model_kind,metric,x0,x1"
        assert len(lines) == 1 + 6  # mean+std rows for three models
        kinds = [line.split(",")[0] for line in lines[1:]]
        assert kinds == ["deeponet", "deeponet", "fnn", "fnn", "ensemble", "ensemble"]

    def test_rerun_identical_bytes(self, trained):
        cfg = compare_config(trained)
        out_a, out_b = trained / "ca", trained / "cb"
        assert main(["compare", "--config", cfg, "--out", str(out_a)]) == EXIT_OK
        assert main(["compare", "--config", cfg, "--out", str(out_b)]) == EXIT_OK
        assert (out_a / "comparison.csv").read_bytes() == (out_b / "comparison.csv").read_bytes()


class TestErrors:
    def test_missing_config_file(self, tmp_path):
        assert main(["train", "--config", str(tmp_path / "none.json")]) == EXIT_CONFIG

    def test_corrupt_dataset_is_data_error(self, tmp_path):
        main(["gen-data", "--config", gen_config(tmp_path), "--out", str(tmp_path)])
        data_path = tmp_path / "data.jsonl"
        lines = data_path.read_text().splitlines()
        data_path.write_text("\n".join(lines[:-2]) + "\n")
        cfg = train_config(tmp_path)
        assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == EXIT_DATA
