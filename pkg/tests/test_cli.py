import pytest

from shiftdiff.checkpoint import load_checkpoint
from shiftdiff.cli import main
from shiftdiff.datasets import read_samples

CFG = """
schedule.T = 40
model.hidden = 16
model.time_dim = 8
train.steps = 30
train.batch = 16
data.per_class = 64
output.wall_clock = false
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("SHIFTDIFF_SEED", raising=False)
    (tmp_path / "gmm.cfg").write_text(CFG)
    (tmp_path / "none.cfg").write_text(CFG + "shift.mode = none\n")
    return tmp_path


def test_verify(capsys):
    assert main(["verify", "--trials", "10", "--seed", "7"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7


def test_train_then_sample(workdir):
    assert main(["train", "--config", "gmm.cfg", "--checkpoint", "out.sdpm", "--metrics", "m.csv"]) == 0
    assert main(["sample", "--checkpoint", "out.sdpm", "--condition", "0", "--count", "1000", "--out", "s.txt"]) == 0
    header, rows = read_samples(workdir / "s.txt")
    assert rows.shape == (1000, 2)
    assert header["condition"] == "0" and header["plan"] == "ancestral"
    assert len((workdir / "m.csv").read_text().splitlines()) == 31


def test_runs_byte_identical(workdir):
    for run in ("a", "b"):
        assert main(["train", "--config", "gmm.cfg", "--checkpoint", f"{run}.sdpm", "--metrics", f"{run}.csv"]) == 0
        assert main(["sample", "--checkpoint", f"{run}.sdpm", "--count", "50", "--out", f"{run}.txt",
                     "--seed", "3"]) == 0
    for ext in ("csv", "txt"):
        assert (workdir / f"a.{ext}").read_bytes() == (workdir / f"b.{ext}").read_bytes()
    # checkpoints embed their own output path; the tensors must still match
    ta, tb = load_checkpoint(workdir / "a.sdpm")[1], load_checkpoint(workdir / "b.sdpm")[1]
    assert ta.keys() == tb.keys() and all(ta[k].tobytes() == tb[k].tobytes() for k in ta)


def test_seed_env_override(workdir, monkeypatch):
    monkeypatch.setenv("SHIFTDIFF_SEED", "9")
    main(["train", "--config", "gmm.cfg", "--checkpoint", "nine.sdpm", "--metrics", "nine.csv"])
    monkeypatch.delenv("SHIFTDIFF_SEED")
    main(["train", "--config", "gmm.cfg", "--checkpoint", "zero.sdpm", "--metrics", "zero.csv"])
    assert (workdir / "nine.csv").read_bytes() != (workdir / "zero.csv").read_bytes()


def test_ddim_eval_interpolate_trace(workdir, capsys):
    main(["train", "--config", "gmm.cfg", "--checkpoint", "q.sdpm"])
    assert main(["sample", "--checkpoint", "q.sdpm", "--steps-subseq", "4", "--eta", "0", "--count", "20",
                 "--out", "d.txt"]) == 0
    assert read_samples(workdir / "d.txt")[0]["plan"] == "ddim(S=4,eta=0.0)"
    assert main(["eval", "--checkpoint", "q.sdpm", "--count", "20", "--mc-per-t", "4", "--out", "b.csv"]) == 0
    out = capsys.readouterr().out
    assert "bits_per_dim: " in out and "prior_kl: " in out
    assert (workdir / "b.csv").read_text().startswith("t,gamma,term,stderr\n")
    assert main(["interpolate", "--checkpoint", "q.sdpm", "--lambda", "0.5", "--count", "10", "--out", "i.txt"]) == 0
    assert main(["sample", "--config", "gmm.cfg", "--oracle", "--count", "10", "--trace", "tr.csv"]) == 0
    lines = (workdir / "tr.csv").read_text().splitlines()
    assert lines[0] == "t,chain,x0,x1" and len(lines) == 1 + 41 * 10


def test_mixed_and_grid_window_with_oracles(workdir, capsys):
    assert main(["mixed", "--config", "none.cfg", "--oracle", "--t1", "0", "--t2", "40", "--count", "100",
                 "--condition", "1", "--out", "m.txt"]) == 0
    assert "accuracy: 1.0" in capsys.readouterr().out
    assert main(["grid-window", "--config", "none.cfg", "--oracle", "--threshold", "0", "--count", "20"]) == 0
    assert "window: (0, 0]" in capsys.readouterr().out
    assert main(["grid-window", "--config", "none.cfg", "--oracle", "--threshold", "1.5", "--count", "20"]) == 0
    assert "none found" in capsys.readouterr().out


def test_mixed_rejects_shifted_checkpoints(workdir, capsys):
    main(["train", "--config", "gmm.cfg", "--checkpoint", "q.sdpm"])
    assert main(["mixed", "--checkpoint", "q.sdpm", "--cond-checkpoint", "q.sdpm", "--t1", "0", "--t2", "5"]) == 1
    assert "unshifted" in capsys.readouterr().err


def test_missing_config_exit_1(workdir, capsys):
    assert main(["train", "--config", "missing.cfg"]) == 1
    err = capsys.readouterr().err
    assert "missing.cfg" in err and len(err.strip().splitlines()) == 1


def test_bad_config_key_exit_1(workdir, capsys):
    (workdir / "bad.cfg").write_text("train.speed = 3\n")
    assert main(["train", "--config", "bad.cfg"]) == 1
    assert "train.speed" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["bogus"], ["verify", "--nope"], [], ["sample", "--count", "x"]])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_corrupt_checkpoint_exit_1(workdir, capsys):
    (workdir / "junk.sdpm").write_bytes(b"nope")
    assert main(["sample", "--checkpoint", "junk.sdpm"]) == 1
    assert "magic" in capsys.readouterr().err


def test_sample_needs_checkpoint_or_oracle(workdir, capsys):
    assert main(["sample"]) == 1
    assert "--checkpoint" in capsys.readouterr().err
