from aggrate.harness.cli import check_expectations, main
from aggrate.harness.presets import closed_loop
import pytest


def test_run_writes_digest_named_files(tmp_path, capsys):
    code = main(["run", "--preset", "closed-loop", "--duration", "2", "--out", str(tmp_path),
                 "--controller.k0", "2"])
    assert code == 0
    names = sorted(p.name for p in tmp_path.iterdir())
    digest = names[0].split("-")[2]
    assert all(digest in n for n in names)
    assert any(n.endswith(".frames.csv") for n in names) and any(n.endswith(".controller.csv") for n in names)
    assert "goodput =" in capsys.readouterr().out


def test_run_expectation_failure_exit_1(tmp_path):
    assert main(["run", "--preset", "open-loop", "--duration", "0.3", "--out", str(tmp_path),
                 "--expect", "mean_agg>1000"]) == 1
    assert main(["run", "--preset", "open-loop", "--duration", "0.3", "--out", str(tmp_path),
                 "--expect", "mean_agg>=1"]) == 0


@pytest.mark.parametrize("argv", [
    ["run", "--duration", "0.1", "--station.colour", "red"],
    ["run", "--duration", "0.1", "--controller.k0", "fast"],
    ["run", "--duration", "0.1", "--expect", "nonsense"],
    ["sweep", "--duration", "0.1", "--axis", "station.nothing", "--values", "1"],
    ["train-clf", "--corpus", "/nonexistent.csv", "--out", "/tmp/x.bin"],
])
def test_bad_input_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] in ("run", "sweep") else argv) == 2


def test_sweep_trend(tmp_path, capsys):
    argv = ["sweep", "--preset", "open-loop", "--duration", "0.5", "--axis", "station.rate",
            "--values", "20e6,200e6,500e6", "--seeds", "0", "--out", str(tmp_path)]
    assert main(argv + ["--trend", "mean_agg:inc"]) == 0
    assert main(argv + ["--trend", "mean_agg:dec"]) == 1
    files = list(tmp_path.glob("*station.rate.csv"))
    assert len(files) == 1 and files[0].read_text().count("\n") == 4


def test_print_defaults_round_trip(tmp_path, capsys):
    assert main(["print-defaults", "--preset", "closed-loop", "--controller.k0", "3"]) == 0
    text = capsys.readouterr().out
    cfg = tmp_path / "s.ini"
    cfg.write_text(text)
    assert main(["print-defaults", "--config", str(cfg)]) == 0
    assert capsys.readouterr().out == text


def test_train_and_eval_pipeline(tmp_path, capsys):
    c = tmp_path / "b.csv"
    assert main(["corpus", "boundary", "--rates", "100e6,500e6", "--data-duration", "1.5", "--out", str(c)]) == 0
    logit, thr, rbf = tmp_path / "l.bin", tmp_path / "t.bin", tmp_path / "r.bin"
    assert main(["train-logit", "--corpus", str(c), "--m", "5", "--out", str(logit)]) == 0
    assert main(["train-logit", "--corpus", str(c), "--baseline", "--out", str(thr)]) == 0
    assert main(["train-rbf", "--corpus", str(c), "--logit", str(logit), "--gamma", "0.1", "--lam", "0.1",
                 "--folds", "2", "--out", str(rbf)]) == 0
    assert (tmp_path / "l.bin.json").exists()
    capsys.readouterr()
    code = main(["eval", "--model", str(logit), "--model", str(thr), "--model", str(rbf), "--corpus", str(c),
                 "--expect", "f1>=0.5"])
    out = capsys.readouterr().out
    assert code == 0 and out.startswith("model,corpus,load,metric,value,count")
    assert "rmse_raw" in out
    assert main(["eval", "--model", str(logit), "--corpus", str(c), "--expect", "f1>1.5"]) == 1


def test_eval_schema_mismatch_exit_2(tmp_path):
    c = tmp_path / "clf.csv"
    assert main(["corpus", "bottleneck", "--data-duration", "2", "--n", "2", "--out", str(c)]) == 0
    m = tmp_path / "clf.bin"
    assert main(["train-clf", "--corpus", str(c), "--n", "2", "--out", str(m)]) == 0
    assert main(["train-clf", "--corpus", str(c), "--n", "5", "--out", str(m)]) == 2
    assert main(["eval", "--model", str(m), "--corpus", str(c)]) == 0
    b = tmp_path / "b.csv"
    main(["corpus", "boundary", "--rates", "100e6", "--data-duration", "0.2", "--out", str(b)])
    assert main(["eval", "--model", str(m), "--corpus", str(b)]) == 2


def test_check_expectations():
    assert check_expectations({"a": 1.0}, ["a<2", "a>=1"]) == []
    assert len(check_expectations({"a": 1.0}, ["a>2"])) == 1
    with pytest.raises(ValueError):
        check_expectations({"a": 1.0}, ["b<2"])


def test_preset_digest_stable():
    assert closed_loop(seed=1).digest() == closed_loop(seed=1).digest()
