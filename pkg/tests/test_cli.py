"""CLI contract tests: exit codes, file formats, determinism."""

import csv

import numpy as np
import pytest

from treegen.cli import main
from treegen.repro import apply_mcar, iris_path, load_iris, split_dataset
from treegen.schema import load_dataset, write_csv


@pytest.fixture(scope="module")
def iris_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("iris")
    data = load_iris()
    train_ds, test_ds = split_dataset(data, seed=0)
    train_csv = root / "train.csv"
    test_csv = root / "test.csv"
    write_csv(train_csv, train_ds)
    write_csv(test_csv, test_ds)
    masked = apply_mcar(train_ds, 0.2, seed=0)
    masked_csv = root / "masked.csv"
    write_csv(masked_csv, masked)
    return root, train_csv, test_csv, masked_csv


@pytest.fixture(scope="module")
def small_models(iris_files):
    """Fast flow and vp models on the iris train split."""
    root, train_csv, _, masked_csv = iris_files
    flow = root / "flow.tgm"
    vp = root / "vp.tgm"
    common = ["--n-t", "4", "--n-noise", "2", "--trees", "4", "--seed", "1",
              "--threads", "2"]
    assert main(["train", "--input", str(train_csv), "--out", str(flow),
                 "--process", "flow", *common]) == 0
    assert main(["train", "--input", str(masked_csv), "--out", str(vp),
                 "--process", "vp", "--label-conditioning", "off", *common]) == 0
    return flow, vp


def test_train_grid_dimensions(iris_files, tmp_path, capsys):
    _, train_csv, _, _ = iris_files
    out = tmp_path / "m.tgm"
    code = main(["train", "--input", str(train_csv), "--out", str(out),
                 "--process", "flow", "--n-t", "2", "--n-noise", "1",
                 "--trees", "2", "--threads", "2"])
    assert code == 0
    text = capsys.readouterr().out
    # conditioning auto-on for the categorical outcome: 4 columns x 3 labels
    assert "2 levels x 4 columns x 3 labels = 24 forests" in text
    assert "effective n_noise: 1" in text


def test_train_missing_input_exits_2(tmp_path):
    assert main(["train", "--input", str(tmp_path / "nope.csv"),
                 "--out", str(tmp_path / "m.tgm")]) == 2


def test_train_bad_config_exits_3(iris_files, tmp_path):
    _, train_csv, _, _ = iris_files
    assert main(["train", "--input", str(train_csv), "--out",
                 str(tmp_path / "m.tgm"), "--n-noise", "0"]) == 3


def test_unknown_flag_exits_3(capsys):
    assert main(["train", "--no-such-flag"]) == 3


def test_generate_csv_and_determinism(small_models, tmp_path):
    flow, _ = small_models
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["generate", "--model", str(flow), "--n-obs", "17",
                 "--out", str(a), "--seed", "5"]) == 0
    assert main(["generate", "--model", str(flow), "--n-obs", "17",
                 "--out", str(b), "--seed", "5"]) == 0
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.reader(a.open()))
    assert rows[0] == ["sepal_length", "sepal_width", "petal_length",
                       "petal_width", "species"]
    assert len(rows) == 18
    assert all(cell != "NA" for row in rows[1:] for cell in row)


def test_generate_corrupt_model_exits_4(small_models, tmp_path):
    flow, _ = small_models
    bad = tmp_path / "bad.tgm"
    blob = bytearray(flow.read_bytes())
    blob[8] ^= 0xFF
    bad.write_bytes(bytes(blob))
    assert main(["generate", "--model", str(bad), "--n-obs", "3",
                 "--out", str(tmp_path / "x.csv")]) == 4


def test_impute_writes_k_files_with_verbatim_observed(small_models, iris_files, tmp_path):
    _, vp = small_models
    _, _, _, masked_csv = iris_files
    prefix = tmp_path / "imp"
    assert main(["impute", "--model", str(vp), "--input", str(masked_csv),
                 "--out-prefix", str(prefix), "--k", "3",
                 "--repaints", "2", "--jump", "2", "--seed", "2"]) == 0
    in_rows = list(csv.reader(masked_csv.open()))
    for idx in (1, 2, 3):
        out_rows = list(csv.reader(open(f"{prefix}_{idx}.csv")))
        assert len(out_rows) == len(in_rows)
        for r_in, r_out in zip(in_rows[1:], out_rows[1:]):
            for c_in, c_out in zip(r_in, r_out):
                if c_in != "NA":
                    assert c_in == c_out  # byte-identical observed cells
                else:
                    assert c_out != "NA"


def test_impute_flow_model_exits_3(small_models, iris_files, tmp_path, capsys):
    flow, _ = small_models
    _, _, _, masked_csv = iris_files
    code = main(["impute", "--model", str(flow), "--input", str(masked_csv),
                 "--out-prefix", str(tmp_path / "imp"), "--k", "1",
                 "--repaints", "2", "--jump", "2"])
    assert code == 3
    assert "flow" in capsys.readouterr().err


def test_impute_complete_input_single_copy(small_models, iris_files, tmp_path, capsys):
    _, vp = small_models
    _, train_csv, _, _ = iris_files
    prefix = tmp_path / "imp"
    with pytest.warns(RuntimeWarning):
        code = main(["impute", "--model", str(vp), "--input", str(train_csv),
                     "--out-prefix", str(prefix), "--k", "4",
                     "--repaints", "2", "--jump", "2"])
    assert code == 0
    assert (tmp_path / "imp_1.csv").exists()
    assert not (tmp_path / "imp_2.csv").exists()
    assert "single copy" in capsys.readouterr().out


def test_evaluate_generation_report(iris_files, small_models, tmp_path):
    _, train_csv, test_csv, _ = iris_files
    flow, _ = small_models
    fake = tmp_path / "fake.csv"
    assert main(["generate", "--model", str(flow), "--n-obs", "40",
                 "--out", str(fake), "--seed", "3"]) == 0
    report = tmp_path / "report.csv"
    assert main(["evaluate", "--task", "generation", "--train", str(train_csv),
                 "--test", str(test_csv), "--fake", str(fake),
                 "--out", str(report), "--threads", "2"]) == 0
    rows = list(csv.reader(report.open()))
    assert rows[0] == ["set", "w_train", "w_test", "cov_train", "cov_test",
                       "efficiency", "p_bias", "cov_rate"]
    assert rows[-1][0] == "aggregate"
    # iris outcome is categorical: inference stats are blank
    assert rows[1][6] == "" and rows[1][7] == ""
    assert float(rows[1][1]) >= 0.0


def test_evaluate_fake_equals_train(iris_files, tmp_path):
    _, train_csv, test_csv, _ = iris_files
    report = tmp_path / "report.csv"
    assert main(["evaluate", "--task", "generation", "--train", str(train_csv),
                 "--test", str(test_csv), "--fake", str(train_csv),
                 "--out", str(report), "--threads", "2"]) == 0
    rows = list(csv.reader(report.open()))
    header, agg = rows[0], rows[-1]
    vals = dict(zip(header, agg))
    assert float(vals["w_train"]) == pytest.approx(0.0, abs=1e-9)
    assert float(vals["cov_train"]) >= 0.95


def test_evaluate_imputation_report(iris_files, small_models, tmp_path):
    root, train_csv, test_csv, masked_csv = iris_files
    _, vp = small_models
    prefix = tmp_path / "imp"
    assert main(["impute", "--model", str(vp), "--input", str(masked_csv),
                 "--out-prefix", str(prefix), "--k", "2",
                 "--repaints", "2", "--jump", "2"]) == 0
    report = tmp_path / "rep.csv"
    assert main(["evaluate", "--task", "imputation", "--train", str(train_csv),
                 "--test", str(test_csv), "--masked", str(masked_csv),
                 "--imputed", f"{prefix}_1.csv", "--imputed", f"{prefix}_2.csv",
                 "--out", str(report), "--threads", "2"]) == 0
    rows = list(csv.reader(report.open()))
    assert rows[0] == ["set", "min_mae", "avg_mae", "w_train", "w_test", "mad",
                       "efficiency", "p_bias", "cov_rate"]
    vals = dict(zip(rows[0], rows[-1]))
    assert float(vals["mad"]) > 0.0
    assert float(vals["min_mae"]) <= float(vals["avg_mae"]) + 1e-12


def test_evaluate_imputation_k1_omits_mad(iris_files, small_models, tmp_path, capsys):
    _, train_csv, test_csv, masked_csv = iris_files
    _, vp = small_models
    prefix = tmp_path / "imp"
    assert main(["impute", "--model", str(vp), "--input", str(masked_csv),
                 "--out-prefix", str(prefix), "--k", "1",
                 "--repaints", "2", "--jump", "2"]) == 0
    report = tmp_path / "rep.csv"
    assert main(["evaluate", "--task", "imputation", "--train", str(train_csv),
                 "--test", str(test_csv), "--masked", str(masked_csv),
                 "--imputed", f"{prefix}_1.csv", "--out", str(report),
                 "--threads", "2"]) == 0
    assert "MAD omitted" in capsys.readouterr().out
    vals = dict(zip(*[list(csv.reader(report.open()))[i] for i in (0, -1)]))
    assert vals["mad"] == ""


def test_evaluate_schema_mismatch_exits_3(iris_files, tmp_path):
    _, train_csv, test_csv, _ = iris_files
    other = tmp_path / "other.csv"
    other.write_text("a,b\n1,2\n3,4\n")
    assert main(["evaluate", "--task", "generation", "--train", str(train_csv),
                 "--test", str(test_csv), "--fake", str(other),
                 "--out", str(tmp_path / "r.csv")]) == 3


def test_bundled_iris_loads():
    ds = load_dataset(iris_path(), outcome="species")
    assert ds.n_rows == 150
    assert ds.schema.outcome_is_label
    assert ds.is_complete()


def test_evaluate_numeric_outcome_inference(tmp_path):
    rng = np.random.default_rng(0)
    n = 50
    x = rng.uniform(0, 1, n)
    y = 1.0 + 2.0 * x + rng.normal(0, 0.1, n)
    train_csv = tmp_path / "train.csv"
    with train_csv.open("w") as fh:
        fh.write("x,y\n")
        for a, b in zip(x, y):
            fh.write(f"{float(a)!r},{float(b)!r}\n")
    report = tmp_path / "rep.csv"
    assert main(["evaluate", "--task", "generation", "--train", str(train_csv),
                 "--test", str(train_csv), "--fake", str(train_csv),
                 "--out", str(report), "--threads", "2"]) == 0
    rows = list(csv.reader(report.open()))
    vals = dict(zip(rows[0], rows[-1]))
    assert float(vals["p_bias"]) == 0.0
    assert float(vals["cov_rate"]) == 1.0
    assert float(vals["w_train"]) == pytest.approx(0.0, abs=1e-9)


def test_repro_iris_rejects_bad_flags(capsys):
    assert main(["repro-iris", "--seeds", ""]) == 3
    assert main(["repro-iris", "--seeds", "a,b"]) == 3
    assert main(["repro-iris", "--mcar", "1.5"]) == 3
