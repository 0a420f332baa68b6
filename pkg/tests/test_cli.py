import json
import subprocess
import sys

import numpy as np
import pytest

from mist.cli import main
from mist.datasets import load_csv, load_labels

FAST = ["--set", "hidden=8,8", "--set", "epochs=1", "--set", "batch_size=50", "--set", "k0=5"]


@pytest.fixture
def moons(tmp_path):
    p = tmp_path / "moons.csv"
    assert main(["gen", "two-moons", "--n", "200", "--seed", "2", "--out", str(p)]) == 0
    return p


def test_gen_writes_a_loadable_csv(moons):
    ds = load_csv(moons)
    assert ds.n == 200 and ds.d == 2 and ds.n_clusters == 2


def test_train_outputs_and_replay(tmp_path, moons, capsys):
    out = tmp_path / "run"
    assert main(["train", "--data", str(moons), "--out", str(out), "--seeds", "0,1"] + FAST) == 0
    assert "ACC mean(std) over 2 seeds" in capsys.readouterr().out
    man = json.loads((out / "run_manifest.json").read_text())
    assert man["seeds"] == [0, 1] and man["config"]["hidden"] == [8, 8]
    for s in (0, 1):
        d = out / f"seed_{s}"
        for f in ("metrics.csv", "labels.csv", "checkpoint.npz", "report.json"):
            assert (d / f).is_file()
        assert load_labels(d / "labels.csv").shape == (200,)
    # replaying the stored config reproduces the metrics bit for bit
    again = tmp_path / "again"
    assert main(["train", "--data", man["data"], "--config", str(out / "config.txt"), "--out", str(again),
                 "--seeds", "0"]) == 0
    assert (again / "seed_0" / "metrics.csv").read_bytes() == (out / "seed_0" / "metrics.csv").read_bytes()


def test_refuses_to_overwrite_without_force(tmp_path, moons):
    out = tmp_path / "run"
    assert main(["train", "--data", str(moons), "--out", str(out)] + FAST) == 0
    assert main(["train", "--data", str(moons), "--out", str(out)] + FAST) == 1
    assert main(["train", "--data", str(moons), "--out", str(out), "--force"] + FAST) == 0


def test_missing_data_leaves_no_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["train", "--data", str(tmp_path / "nope.csv"), "--out", str(out)]) == 2
    assert not out.exists()


def test_config_errors_name_the_key(tmp_path, moons, capsys):
    assert main(["train", "--data", str(moons), "--out", str(tmp_path / "r"), "--set", "beta=2"]) == 1
    assert "beta" in capsys.readouterr().err
    assert not (tmp_path / "r").exists()


def test_usage_errors_exit_1(tmp_path, moons):
    with pytest.raises(SystemExit) as e:
        main(["train", "--data", str(moons)])
    assert e.value.code == 1
    assert main(["gen", "three-spirals", "--out", str(tmp_path / "x.csv")]) == 1
    assert main(["sweep", "--data", str(moons), "--out", str(tmp_path / "s"), "--axis", "lr",
                 "--values", "1"]) == 1
    assert main(["ablate", "--data", str(moons), "--out", str(tmp_path / "a"), "--combo", "AB"]) == 1


def test_eval_labels_and_kmeans(tmp_path, moons, capsys):
    ds = load_csv(moons)
    lab = tmp_path / "l.csv"
    lab.write_text("index,pred_label\n" + "".join(f"{i},{1 - y}\n" for i, y in enumerate(ds.labels)))
    assert main(["eval", "--data", str(moons), "--labels", str(lab)]) == 0
    assert "ACC 100.00" in capsys.readouterr().out
    assert main(["eval", "--data", str(moons), "--kmeans"]) == 0
    assert "K-means ACC" in capsys.readouterr().out
    lab.write_text("index,pred_label\n0,1\n")
    assert main(["eval", "--data", str(moons), "--labels", str(lab)]) == 2


def test_sweep_and_ablate_tables(tmp_path, moons, capsys):
    assert main(["sweep", "--data", str(moons), "--out", str(tmp_path / "s"), "--axis", "k0",
                 "--values", "3,5"] + FAST) == 0
    rows = (tmp_path / "s" / "sweep_k0.csv").read_text().splitlines()
    assert len(rows) == 3
    assert main(["ablate", "--data", str(moons), "--out", str(tmp_path / "a"), "--combo", "BC,ABCD"] + FAST) == 0
    assert len((tmp_path / "a" / "ablation.csv").read_text().splitlines()) == 3


def test_output_root_env(tmp_path, moons, monkeypatch):
    monkeypatch.setenv("MIST_OUTPUT_ROOT", str(tmp_path / "root"))
    assert main(["gen", "two-rings", "--n", "50", "--out", "r.csv"]) == 0
    assert (tmp_path / "root" / "r.csv").is_file()


def test_plot_svg(tmp_path, moons):
    out = tmp_path / "p.svg"
    assert main(["plot", "--data", str(moons), "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("<svg") and text.count("<circle") == 200
    x = tmp_path / "x3.csv"
    x.write_text("f0,f1,f2\n1,2,3\n")
    assert main(["plot", "--data", str(x), "--out", str(tmp_path / "q.svg")]) == 1


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mist.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.1.0"
