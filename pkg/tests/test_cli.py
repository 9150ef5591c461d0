import json

import pytest

from lowmode.cli import EXIT_ABORTED, EXIT_INVALID, EXIT_OK, EXIT_VERIFY_FAILED, main


@pytest.fixture
def run_config(tmp_path, synthetic_dir):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({
        "preset": "tiny-cnn", "dataset": "synthetic", "data_dir": str(synthetic_dir),
        "subset_per_class": 20, "val_per_class": 10, "epochs": 2, "batch_size": 40,
        "lr_milestones": [[2, 0.01]], "forced_full_window": 0, "p_low": 0.5, "seed": 1,
    }))
    return path


def test_train_deterministic_is_bitwise_repeatable(tmp_path, run_config, capsys):
    for out in ("a", "b"):
        assert main(["train", "--config", str(run_config), "--out", str(tmp_path / out), "--deterministic"]) == EXIT_OK
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert json.loads((tmp_path / "a" / "config.json").read_text())["deterministic"] is True
    assert "val_accuracy=" in capsys.readouterr().out


def test_eval_checkpoint(tmp_path, run_config, capsys):
    out = tmp_path / "run"
    main(["train", "--config", str(run_config), "--out", str(out), "--deterministic"])
    capsys.readouterr()
    assert main(["eval", "--config", str(run_config), "--checkpoint", str(out / "checkpoint.bin")]) == EXIT_OK
    assert "checkpoint epoch 2" in capsys.readouterr().out
    assert main(["eval", "--config", str(run_config), "--checkpoint", str(tmp_path / "none.bin")]) == EXIT_INVALID


def test_invalid_config_exits_2(run_config, capsys):
    assert main(["train", "--config", str(run_config), "--set", "p_low=1.5"]) == EXIT_INVALID
    assert "[p_low]" in capsys.readouterr().err
    assert main(["analyze", "--set", "preset=vgg16"]) == EXIT_INVALID
    assert "[preset]" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_nan_abort_exits_3(tmp_path, run_config, capsys):
    code = main(["train", "--config", str(run_config), "--out", str(tmp_path / "x"), "--set", "lr_base=1e30",
                 "--set", "p_low=0"])
    assert code == EXIT_ABORTED
    err = capsys.readouterr().err
    assert "non-finite loss" in err and "iteration" in err and "mode" in err


def test_analyze_resnet18(tmp_path, capsys):
    assert main(["analyze", "--json", str(tmp_path / "r.json")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "layer4.1.conv2" in out and "low/full conv MAC ratio" in out
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["network"] == "resnet18-cifar" and 0 < report["conv_ratio"] < 0.45
    # p = 0 everywhere: expected training cost is exactly the all-full cost
    main(["analyze", "--set", "p_low=0", "--iters-per-epoch", "400"])
    assert "ratio 1.0000" in capsys.readouterr().out


def test_analyze_output_is_deterministic(capsys):
    main(["analyze", "--set", "preset=resnet-tiny"])
    first = capsys.readouterr().out
    main(["analyze", "--set", "preset=resnet-tiny"])
    assert capsys.readouterr().out == first


def test_verify_negative_control(capsys):
    code = main(["verify", "--quick", "--seeds", "2", "--inject-fault", "avgpool2d_backward"])
    out = capsys.readouterr().out
    assert code == EXIT_VERIFY_FAILED
    assert "FAILED" in out and "avgpool2d" in out


def test_verify_unknown_fault_op(capsys):
    assert main(["verify", "--inject-fault", "no_such_op"]) == EXIT_INVALID


@pytest.mark.slow
def test_verify_release_gate(capsys):
    assert main(["verify"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "verify: OK" in out
    line = next(ln for ln in out.splitlines() if ln.startswith("max finite-difference rel error"))
    assert float(line.split()[-1]) < 1e-5
