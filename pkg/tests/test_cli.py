import subprocess
import sys

import numpy as np
import pytest

from lanematch import io as lio
from lanematch.cli import main


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    assert main(["gen", "--out", str(root), "--scenes", "12", "--seed", "7"]) == 0
    return root


def test_gen_layout(dataset):
    ids = lio.read_list(dataset / "list.txt")
    assert len(ids) == 12
    assert (dataset / "synth.json").exists()
    assert (dataset / "gt" / f"{ids[0]}.lines.txt").exists()


def test_gen_flags(tmp_path):
    assert main(["gen", "--out", str(tmp_path), "--scenes", "3", "--decoys-max", "0",
                 "--decoys-min", "0", "--preset", "curve"]) == 0
    assert '"curv_max": 0.001' in (tmp_path / "synth.json").read_text()


def test_assign_classical(dataset, capsys):
    assert main(["assign", "--data", str(dataset)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "# assignment method=classical"
    assert all(" k=" in line for line in out[1:])


def test_train_and_matchnet_assign(dataset, tmp_path, capsys):
    weights = tmp_path / "w.txt"
    assert main(["train", "--data", str(dataset), "--out", str(weights), "--hidden", "8,8",
                 "--log", str(tmp_path / "log.txt")]) == 0
    assert lio.load_weights(weights.read_text()).layer_dims == (6, 8, 8, 1)
    assert (tmp_path / "log.txt").read_text().startswith("samples 12")
    capsys.readouterr()
    export = tmp_path / "export"
    assert main(["assign", "--data", str(dataset), "--method", "matchnet", "--weights", str(weights),
                 "--threshold", "0.5", "--export", str(export)]) == 0
    assert capsys.readouterr().out.startswith("# assignment method=matchnet")
    assert (export / "pred").is_dir()


def test_eval_perfect(tmp_path, capsys):
    root = tmp_path / "perfect"
    main(["gen", "--out", str(root), "--scenes", "5", "--noise-sigma", "0", "--decoys-min", "0",
          "--decoys-max", "0", "--preds-min", "1", "--preds-max", "1", "--conf-base", "0", "--conf-coupling", "1", "--conf-noise", "0"])
    capsys.readouterr()
    hist = tmp_path / "hist.csv"
    assert main(["eval", "--data", str(root), "--hist", str(hist)]) == 0
    rows = [line.split() for line in capsys.readouterr().out.splitlines()[1:]]
    assert all(r[-1] == "1.000000" for r in rows)
    assert {r[1] for r in rows} == {"0.50", "0.75"}
    assert hist.read_text().startswith("bin_low,bin_high,count,normalized_count")


def test_eval_filter_and_category(dataset, tmp_path, capsys):
    ids = lio.read_list(dataset / "list.txt")
    sub = tmp_path / "sub.txt"
    sub.write_text("\n".join(ids[:3]) + "\n")
    assert main(["eval", "--data", str(dataset), "--filter-list", str(sub),
                 "--category", f"mine={sub}", "--iou-thresholds", "0.5"]) == 0
    out = capsys.readouterr().out.splitlines()
    rows = {r.split()[0]: r.split() for r in out[1:]}
    assert rows["mine"][2:5] == rows["all"][2:5]


def test_report(dataset, tmp_path):
    out = tmp_path / "cmp.csv"
    assert main(["report", "--pred-a", str(dataset / "pred"), "--pred-b", str(dataset / "pred"),
                 "--label-a", "x", "--label-b", "y", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "bin_low,bin_high,count_x,normalized_x,count_y,normalized_y"
    assert len(lines) == 21
    cols = np.array([line.split(",")[2:] for line in lines[1:]], dtype=float)
    np.testing.assert_array_equal(cols[:, 0], cols[:, 2])


def test_error_exit(tmp_path, capsys):
    bad = tmp_path / "bad"
    (bad / "gt").mkdir(parents=True)
    (bad / "list.txt").write_text("x\n")
    (bad / "gt" / "x.lines.txt").write_text("1 2 3\n")
    assert main(["assign", "--data", str(bad)]) == 1
    err = capsys.readouterr().err
    assert err.startswith("lanematch assign: error:") and err.count("\n") == 1
    assert main(["assign", "--data", str(bad), "--method", "matchnet"]) == 1


def test_usage_errors():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code != 0
    with pytest.raises(SystemExit) as exc:
        main(["gen", "--out", "x", "--bogus"])
    assert exc.value.code != 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "lanematch", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gen" in proc.stdout
