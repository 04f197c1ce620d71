import subprocess
import sys

import pytest

from cdrl_isac import cli

FAST = ["--set", "hidden=8", "--set", "batch_size=8", "--set", "buffer_size=200", "--set", "mc_samples=50"]


def run(*args):
    return subprocess.run([sys.executable, "-m", "cdrl_isac.cli", *args], capture_output=True, text=True)


def test_train_and_eval_byte_identical(tmp_path):
    outs = []
    for tag in "ab":
        ck, tr, ev = (tmp_path / f"{n}_{tag}" for n in ("ck.txt", "train.csv", "eval.csv"))
        assert cli.main(["train", *FAST, "--seed", "12", "--slots", "150", "--set", "spawn_prob=0.05",
                         "--checkpoint", str(ck), "--out", str(tr)]) == 0
        assert cli.main(["eval", *FAST, "--seed", "13", "--slots", "150", "--set", "spawn_prob=0.05",
                         "--checkpoint", str(ck), "--out", str(ev)]) == 0
        outs.append([p.read_bytes() for p in (ck, tr, ev)])
    assert outs[0] == outs[1]
    assert outs[0][1].count(b"\n") == 151


def test_seed_changes_outputs(tmp_path):
    for s in ("1", "2"):
        cli.main(["baseline", "--seed", s, "--fraction", "0.1", "--slots", "100", "--set", "spawn_prob=0.05",
                  "--out", str(tmp_path / f"b{s}.csv")])
    assert (tmp_path / "b1.csv").read_bytes() != (tmp_path / "b2.csv").read_bytes()


def test_config_file_and_script(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("mc_samples = 50\nsigma_w_sq = 0\n")
    script = tmp_path / "one.txt"
    script.write_text("# static target\nspawn 0 500 0 0 0\n")
    out = tmp_path / "b.csv"
    assert cli.main(["baseline", "--config", str(cfg), "--script", str(script), "--fraction", "0.2",
                     "--slots", "5", "--out", str(out)]) == 0
    assert "fixed-0.2" in capsys.readouterr().out
    assert out.read_text().splitlines()[1].startswith("0,1,0.2,0,0,0,2.4,")


def test_compare_and_simulate(tmp_path, capsys):
    assert cli.main(["compare", "--fractions", "0.1,0.2", "--scenarios", "2", "--slots", "50",
                     "--set", "spawn_prob=0.05", "--out", str(tmp_path / "c.csv")]) == 0
    assert cli.main(["simulate", "--runs", "5", "--slots", "5"]) == 0
    text = capsys.readouterr().out
    assert "fixed-0.2" in text and "average NEES" in text
    assert (tmp_path / "c.csv").read_text().startswith("policy,mean_sum_rate,percentage\n")


@pytest.mark.parametrize(
    "args",
    [
        ["eval", "--checkpoint", "/nonexistent/ck.txt", "--out", "x.csv"],
        ["baseline", "--fraction", "2", "--out", "x.csv"],
        ["baseline", "--fraction", "0.1", "--set", "nope=1", "--out", "x.csv"],
        ["baseline", "--fraction", "0.1", "--script", "/nonexistent/s.txt", "--out", "x.csv"],
    ],
)
def test_failures_one_line_nonzero(args, tmp_path):
    r = subprocess.run([sys.executable, "-m", "cdrl_isac.cli", *args], capture_output=True, text=True, cwd=tmp_path)
    assert r.returncode != 0
    assert len(r.stderr.strip().splitlines()) == 1


def test_bad_seed_rejected():
    r = run("simulate", "--seed", str(2**64))
    assert r.returncode != 0
