import filecmp
import json
import subprocess
import sys

import pytest

from servoclone import data
from servoclone.cli import main
from servoclone.nn.policy import load_checkpoint

CAM16 = ["--set", "camera.width=16", "--set", "camera.height=16",
         "--set", "camera.fx=12", "--set", "camera.fy=12",
         "--set", "camera.cx=8", "--set", "camera.cy=8"]


def record_tiny(out, seed=3, minutes="0.05"):
    return main([*CAM16, "record", "--minutes", minutes, "--out", str(out),
                 "--seed", str(seed)])


def test_record_writes_loadable_dataset(tmp_path, capsys):
    out = tmp_path / "demos"
    assert record_tiny(out) == 0
    ds = data.load(out)
    assert ds.total_demo_time >= 0.05 * 60.0
    assert ds.width == ds.height == 16
    assert (out / "config.json").exists()
    line = capsys.readouterr().out
    assert "recorded" in line and str(out) in line


def test_record_rejects_bad_minutes(tmp_path, capsys):
    rc = main(["record", "--minutes", "-1", "--out", str(tmp_path / "x")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error: usage:")


def test_record_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert record_tiny(a) == 0 and record_tiny(b) == 0
    files_a = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file())
    assert files_a == files_b
    for rel in files_a:
        assert filecmp.cmp(a / rel, b / rel, shallow=False), rel


def test_record_seed_changes_content(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert record_tiny(a, seed=3) == 0 and record_tiny(b, seed=4) == 0
    assert not filecmp.cmp(a / "ep0000" / "frames.bin",
                           b / "ep0000" / "frames.bin", shallow=False)


def test_train_and_eval_round(tmp_path, capsys):
    demos = tmp_path / "demos"
    assert record_tiny(demos) == 0
    model = tmp_path / "policy.ckpt"
    rc = main([*CAM16, "--set", "train.epochs=1", "train",
               "--data", str(demos), "--out", str(model)])
    assert rc == 0
    policy, manifest = load_checkpoint(model)
    assert policy.net.height == 16
    assert manifest["train_config"]["epochs"] == 1
    capsys.readouterr()

    evout = tmp_path / "eval"
    rc = main([*CAM16, "--set", "ablation.n_near=1", "--set", "ablation.n_far=0",
               "--set", "ablation.trials_per_pose=1",
               "--set", "control.time_limit=1.0", "eval",
               "--model", str(model), "--out", str(evout)])
    assert rc == 0
    csv = (evout / "results.csv").read_text().strip().split("\n")
    assert csv[0] == "checkpoint_minutes,frames,successes,trials,success_rate"
    assert len(csv) == 2
    assert "eval:" in capsys.readouterr().out


def test_eval_oracle_succeeds(tmp_path, capsys):
    evout = tmp_path / "eval"
    rc = main([*CAM16, "--set", "ablation.n_near=1", "--set", "ablation.n_far=1",
               "--set", "ablation.trials_per_pose=1", "eval",
               "--oracle", "--out", str(evout)])
    assert rc == 0
    assert "eval: 2/2" in capsys.readouterr().out
    payload = json.loads((evout / "results.json").read_text())
    assert payload["checkpoints"][0]["successes"] == 2


def test_eval_needs_exactly_one_policy_source(tmp_path, capsys):
    rc = main(["eval", "--out", str(tmp_path / "e")])
    assert rc == 1
    assert "exactly one of" in capsys.readouterr().err
    rc = main(["eval", "--model", "m.ckpt", "--oracle", "--out", str(tmp_path / "e")])
    assert rc == 1


def test_train_missing_data_dir(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "nope"),
               "--out", str(tmp_path / "m.ckpt")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error: data:")


def test_eval_bad_checkpoint(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint")
    rc = main([*CAM16, "eval", "--model", str(bad), "--out", str(tmp_path / "e")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error: model:")


def test_config_error_exit_code(tmp_path, capsys):
    cfgfile = tmp_path / "bad.json"
    cfgfile.write_text('{"train": {"epochz": 1}}')
    rc = main(["--config", str(cfgfile), "record", "--minutes", "1",
               "--out", str(tmp_path / "d")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error: config:")


def test_ablate_end_to_end_tiny(tmp_path, capsys):
    demos = tmp_path / "demos"
    assert record_tiny(demos) == 0
    out = tmp_path / "study"
    rc = main([*CAM16,
               "--set", "ablation.checkpoints=[0.02,0.04]",
               "--set", "ablation.n_near=1", "--set", "ablation.n_far=1",
               "--set", "ablation.trials_per_pose=1",
               "--set", "train.epochs=1",
               "--set", "control.time_limit=1.0",
               "ablate", "--data", str(demos), "--out", str(out)])
    assert rc == 0
    csv = (out / "results.csv").read_text().strip().split("\n")
    assert len(csv) == 3
    assert (out / "results.svg").exists()
    text = capsys.readouterr().out
    assert "checkpoint 0.02 min" in text and "ablation complete" in text


def test_ablate_dataset_too_short(tmp_path, capsys):
    demos = tmp_path / "demos"
    assert record_tiny(demos) == 0
    rc = main([*CAM16, "ablate", "--data", str(demos),
               "--out", str(tmp_path / "study")])
    assert rc == 1
    assert capsys.readouterr().err.startswith("error: config:")


def test_console_script_help():
    for argv in (["servoclone", "--help"],
                 [sys.executable, "-m", "servoclone", "--help"]):
        res = subprocess.run(argv, capture_output=True, text=True, timeout=60)
        assert res.returncode == 0
        assert "record" in res.stdout and "ablate" in res.stdout


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as e:
        main(["frobnicate"])
    assert e.value.code == 2
