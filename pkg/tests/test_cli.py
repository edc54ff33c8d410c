import json
import subprocess
import sys

import numpy as np
import pytest

from specshift.cli import build_parser, main
from specshift.cycles import circuit_rank
from specshift.datasets import load_dataset, write_jsonl
from specshift.nn import load_params
from specshift.spectral import read_distance_csv
from specshift.splits import SplitBundle
from specshift.synthetic import cycle_length_task


@pytest.fixture(scope="module")
def toy(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    path = root / "toy.jsonl"
    write_jsonl(cycle_length_task(count=60, seed=0, small_range=(6, 10), large_range=(12, 18)), path)
    return root, path


def run(*args):
    return main([str(a) for a in args])


def manifest(path):
    return json.loads((path.parent / (path.name + ".manifest.json")).read_text())


def test_distmat_and_summarize(toy, capsys):
    root, data = toy
    out = root / "d.csv"
    assert run("distmat", "--dataset", data, "--source", "eigenvalues", "--out", out, "--seed", 1) == 0
    assert out.exists() and out.with_suffix(".pgm").exists()
    m = manifest(out)
    assert m["subcommand"] == "distmat" and m["seed"] == 1
    assert set(m["inputs"]) == {str(data)} and len(m["extra"]["node_counts"]) == 60
    values, order = read_distance_csv(out)
    assert values.shape == (60, 60)
    capsys.readouterr()
    assert run("summarize", "--matrix", out, "--k", 5, "--manifest", root / "sum.json") == 0
    assert "relative=" in capsys.readouterr().out


def test_distmat_bitwise_reproducible(toy):
    root, data = toy
    a, b = root / "a.csv", root / "b.csv"
    for p, threads in ((a, 1), (b, 3)):
        assert run("distmat", "--dataset", data, "--out", p, "--threads", threads) == 0
    assert a.read_bytes() == b.read_bytes()


def test_perturb_modes(toy):
    root, data = toy
    broken = root / "broken.jsonl"
    assert run("perturb", "--mode", "break", "--dataset", data, "--out", broken) == 0
    d = load_dataset(broken)
    assert all(g.num_edges == g.n - 1 for g in d.graphs)  # task graphs are connected

    aligned = root / "aligned.jsonl"
    assert run("perturb", "--mode", "align", "--n", 2, "--r", 3, "--seed", 0,
               "--dataset", data, "--out", aligned) == 0
    before, after = load_dataset(data), load_dataset(aligned)
    grown = [a.n - b.n for a, b in zip(after.graphs, before.graphs)]
    # each round lengthens every basis cycle by one node
    expected = [2 * circuit_rank(g) if i % 3 == 0 else 0 for i, g in enumerate(before.graphs)]
    assert grown == expected

    padded = root / "padded.jsonl"
    assert run("perturb", "--mode", "random-nodes", "--match", aligned, "--seed", 0,
               "--dataset", data, "--out", padded) == 0
    assert load_dataset(padded).sizes.tolist() == after.sizes.tolist()


def test_stochastic_commands_need_seed(toy, capsys):
    root, data = toy
    assert run("perturb", "--mode", "align", "--n", 1, "--r", 1, "--dataset", data,
               "--out", root / "x.jsonl") == 1
    assert "requires --seed" in capsys.readouterr().err
    assert run("split", "--dataset", data, "--out", root / "s.txt") == 1


def test_exit_codes(toy, tmp_path):
    root, data = toy
    assert run("distmat", "--dataset", data) == 1  # missing --out
    assert run("distmat", "--dataset", data, "--out", "x", "--bogus") == 1
    assert run("distmat", "--dataset", tmp_path / "none.jsonl", "--out", tmp_path / "d.csv") == 2
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"n": 2, "edges": [[0, 5]]}\n')
    assert run("convert", "--dataset", bad, "--out", tmp_path / "o.jsonl") == 2


def test_numeric_failure_exit_code(toy, tmp_path, monkeypatch):
    from specshift import cli
    from specshift.eigen import EigenError

    def fail(*a, **k):
        raise EigenError("no convergence")

    monkeypatch.setattr(cli, "spectrum_distance_matrix", fail)
    _, data = toy
    assert run("distmat", "--dataset", data, "--out", tmp_path / "d.csv") == 3


def test_dry_run_writes_nothing(toy, tmp_path):
    _, data = toy
    out = tmp_path / "d.csv"
    assert run("distmat", "--dataset", data, "--out", out, "--dry-run") == 0
    assert list(tmp_path.iterdir()) == []


def test_split_train_eval(toy, capsys):
    root, data = toy
    splits = root / "splits.txt"
    assert run("split", "--dataset", data, "--seed", 0, "--out", splits) == 0
    bundle = SplitBundle.load(splits)
    assert len(bundle.train) > 0
    out = root / "run"
    assert run("train", "--dataset", data, "--splits", splits, "--seed", 7, "--repeat", 2,
               "--set", "hidden=4", "--set", "max_epochs=2", "--out", out) == 0
    text = capsys.readouterr().out
    assert "seed 7:" in text and "seed 8:" in text and "±" in text
    m = json.loads((root / "run.manifest.json").read_text())
    assert "large_test/macro" in m["extra"]["f1"]
    params = load_params(out / "params-seed7.bin")
    assert params["W0"].shape == (1, 4)
    assert run("eval", "--dataset", data, "--splits", splits, "--params", out / "params-seed7.bin",
               "--config", out / "config.txt", "--split", "large_test", "--manifest", root / "eval.json") == 0
    report = json.loads((out / "report-seed7.json").read_text())
    assert f"{report['f1']['large_test']['macro']:.4f}" in capsys.readouterr().out


def test_cycle_stats(toy, capsys):
    _, data = toy
    assert run("cycle-stats", "--dataset", data, "--manifest", "/dev/null") == 0
    assert capsys.readouterr().out.startswith("mean=")


def test_dpattern_lemma(capsys):
    assert run("dpattern", "--lemma", "3..8", "--d-max", 4, "--manifest", "/dev/null") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["lemma"]["holds"] is True


def test_dpattern_dataset(toy, capsys):
    _, data = toy
    assert run("dpattern", "--dataset", data, "--index", 0, "--d-max", 2, "--manifest", "/dev/null") == 0
    counts = json.loads(capsys.readouterr().out)["class_counts"]["0"]
    assert len(counts) == 3 and counts == sorted(counts)


def test_spectrum_stdout(toy, capsys):
    _, data = toy
    assert run("spectrum", "--dataset", data, "--index", 0, "--manifest", "/dev/null") == 0
    row = capsys.readouterr().out.strip().split(",")
    vals = np.array(row[1:], dtype=float)
    n = load_dataset(data)[0].n
    assert row[0] == "0" and vals.size == n and np.all(np.diff(vals) >= 0)


def test_convert_tudataset(tmp_path):
    from test_datasets import write_toy

    write_toy(tmp_path)
    out = tmp_path / "toy.jsonl"
    assert run("convert", "--dataset", tmp_path, "--name", "TOY", "--out", out) == 0
    assert load_dataset(out).sizes.tolist() == [3, 2]


def test_help_lists_defaults():
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices
    for name, p in sub.items():
        text = p.format_help()
        fmt = p._get_formatter()
        for action in p._actions:
            if action.required or action.dest == "help":
                continue
            assert "default" in fmt._get_help_string(action), (name, action.dest)
        assert "--dry-run" in text


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "specshift", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("specshift ")
