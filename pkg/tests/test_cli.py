import math
import re

import numpy as np
import pytest

from rulmae.cli import main
from rulmae.evaluate import ComparisonTable, EvalReport, plot_csv, rmse, svg_from_plot_csv

from .oracles import rmse_oracle

TINY_CONF = """\
d = 8
heads = 2
layers = 1
P = 10
K = 3
stride = 5
batch_size = 32
epochs = 1
synth_units = 4
synth_length_min = 40
synth_length_max = 60
"""


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    conf = root / "tiny.conf"
    conf.write_text(TINY_CONF)
    assert main(["synthesize", "--config", str(conf), "--out", str(root / "data")]) == 0
    return root, conf


def test_full_pipeline(workspace):
    root, conf = workspace
    data, c = root / "data", str(conf)
    assert main(["preprocess", "--data", str(data / "train_SYN.txt"), "--out", str(root / "pre"),
                 "--config", c]) == 0
    assert (root / "pre" / "feature_report.csv").exists() and (root / "pre" / "norm_stats").exists()
    assert main(["pretrain", "--data", str(data / "train_SYN.txt"), "--out", str(root / "mae"),
                 "--config", c, "--mask-ratio", "0.5", "--seed", "1"]) == 0
    assert (root / "mae" / "pretrain.ckpt").exists() and (root / "mae" / "trainlog.csv").exists()
    assert main(["finetune", "--data", str(data / "train_SYN.txt"), "--out", str(root / "ft"),
                 "--config", c, "--init", str(root / "mae" / "pretrain.ckpt")]) == 0
    assert (root / "ft" / "finetune.ckpt").exists()
    for run in ("ev1", "ev2"):
        assert main(["evaluate", "--data", str(data / "test_SYN.txt"), "--truth", str(data / "RUL_SYN.txt"),
                     "--checkpoint", str(root / "ft" / "finetune.ckpt"), "--out", str(root / run)]) == 0
    text = (root / "ev1" / "eval_report.csv").read_text()
    assert text == (root / "ev2" / "eval_report.csv").read_text()
    rep = EvalReport.from_csv(text)
    assert rep.count == 4
    stated = float(text.splitlines()[-1].split(",")[1])
    assert abs(stated - rmse_oracle(rep.true_rul.tolist(), rep.pred_rul.tolist())) < 1e-12
    pcsv = (root / "ev1" / "rul_plot.csv").read_text()
    assert (root / "ev1" / "rul_plot.svg").read_text() == svg_from_plot_csv(pcsv)


def test_commands_are_idempotent(workspace, tmp_path):
    root, conf = workspace
    args = ["pretrain", "--data", str(root / "data" / "train_SYN.txt"), "--config", str(conf)]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "pretrain.ckpt").read_bytes() == (tmp_path / "b" / "pretrain.ckpt").read_bytes()
    la = [l.split(",")[1] for l in (tmp_path / "a" / "trainlog.csv").read_text().splitlines()[1:]]
    lb = [l.split(",")[1] for l in (tmp_path / "b" / "trainlog.csv").read_text().splitlines()[1:]]
    assert la == lb


def test_bad_mask_ratio_is_usage_error(workspace, tmp_path):
    root, _ = workspace
    with pytest.raises(SystemExit) as exc:
        main(["pretrain", "--data", str(root / "data" / "train_SYN.txt"), "--out", str(tmp_path),
              "--mask-ratio", "1.5"])
    assert exc.value.code == 2


def test_missing_init_checkpoint(workspace, tmp_path, capsys):
    root, conf = workspace
    code = main(["finetune", "--data", str(root / "data" / "train_SYN.txt"), "--out", str(tmp_path),
                 "--config", str(conf), "--init", str(tmp_path / "nope.ckpt")])
    assert code == 1
    assert "checkpoint not found" in capsys.readouterr().err


def test_lambda_one_selects_nothing(workspace, tmp_path, caplog):
    root, _ = workspace
    with caplog.at_level("WARNING"):
        code = main(["preprocess", "--data", str(root / "data" / "train_SYN.txt"),
                     "--out", str(tmp_path), "--lambda", "1.0"])
    assert code == 0
    rows = (tmp_path / "feature_report.csv").read_text().splitlines()[1:]
    assert all(r.endswith(",0") for r in rows)
    assert any("no feature" in r.message for r in caplog.records)


def test_missing_data_file(tmp_path):
    assert main(["preprocess", "--data", str(tmp_path / "absent.txt"), "--out", str(tmp_path)]) == 1


def test_reproduce_table(workspace, tmp_path):
    _, conf = workspace
    assert main(["reproduce", "--synthetic", "--config", str(conf), "--out", str(tmp_path)]) == 0
    rows = ComparisonTable.parse_csv((tmp_path / "comparison.csv").read_text())
    assert len(rows) == 4
    assert [r["Masking ratio"] for r in rows] == ["20%", "50%", "75%", "--"]
    base = float(rows[-1]["RMSE"])
    for r in rows[:-1]:
        assert abs(float(r["Delta"]) - (base - float(r["RMSE"]))) < 1e-9
    for name in ("baseline", "mask20", "mask50", "mask75"):
        assert (tmp_path / f"eval_report_{name}.csv").exists()


def test_rmse_examples():
    assert rmse([0, 0], [1, 3]) == pytest.approx(math.sqrt(5), abs=1e-15)
    assert rmse([5, 7], [5, 7]) == 0.0
    with pytest.raises(ValueError):
        rmse([], [])


def test_plot_sorted_by_actual_and_svg_points():
    rep = EvalReport(unit_ids=np.array([1, 2, 3]), true_rul=np.array([30.0, 10.0, 20.0]),
                     pred_rul=np.array([25.0, 12.0, 21.0]))
    text = plot_csv(rep, "demo")
    assert text.startswith("# demo sorted by actual RUL ascending")
    body = [l.split(",") for l in text.splitlines()[2:]]
    assert [b[1] for b in body] == ["2", "3", "1"]
    svg = svg_from_plot_csv(text)
    polylines = re.findall(r'points="([^"]*)"', svg)
    assert len(polylines) == 2 and all(len(p.split()) == 3 for p in polylines)


def test_eval_report_csv_round_trip():
    rep = EvalReport(unit_ids=np.array([4, 9]), true_rul=np.array([0.0, 0.0]), pred_rul=np.array([1.0, 3.0]))
    text = rep.to_csv()
    assert text.splitlines()[-1].startswith("RMSE,")
    back = EvalReport.from_csv(text)
    assert back.rmse == rep.rmse == pytest.approx(math.sqrt(5))
