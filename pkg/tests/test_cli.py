"""CLI contract: determinism, file outputs, exit codes, HTTP parity."""

import filecmp
import json
from pathlib import Path

import pytest
from click.testing import CliRunner
from fastapi.testclient import TestClient

from healthcam.cli import main
from healthcam.dataset import load_manifest
from healthcam.service import create_app

DATA_DIR = Path(__file__).parent / "data"
CHECKPOINT = DATA_DIR / "tiny_model.ckpt"
CLEAR_PNG = DATA_DIR / "clear.png"


@pytest.fixture
def runner():
    return CliRunner()


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return result


# --- synth ---


def test_synth_deterministic_trees(runner, tmp_path):
    run_ok(runner, ["synth", "--count", "6", "--seed", "1", "--size", "16",
                    "--out", str(tmp_path / "a")])
    run_ok(runner, ["synth", "--count", "6", "--seed", "1", "--size", "16",
                    "--out", str(tmp_path / "b")])
    names = [f"synth_{i:05d}.png" for i in range(6)]
    match, mismatch, errors = filecmp.cmpfiles(
        tmp_path / "a" / "images", tmp_path / "b" / "images", names, shallow=False
    )
    assert not mismatch and not errors
    assert (tmp_path / "a" / "manifest.csv").read_bytes() == (
        tmp_path / "b" / "manifest.csv"
    ).read_bytes()
    assert (tmp_path / "a" / "config.json").exists()


def test_synth_zero_count_is_usage_error(runner, tmp_path):
    result = runner.invoke(main, ["synth", "--count", "0", "--out", str(tmp_path / "x")])
    assert result.exit_code == 2


def test_synth_manifest_row_count(runner, tmp_path):
    run_ok(runner, ["synth", "--count", "9", "--seed", "2", "--size", "16",
                    "--out", str(tmp_path / "d")])
    manifest = load_manifest(tmp_path / "d" / "manifest.csv")
    assert len(manifest) == 9


def test_synth_refuses_nonempty_out_without_force(runner, tmp_path):
    out = tmp_path / "occupied"
    out.mkdir()
    (out / "existing.txt").write_text("data")
    result = runner.invoke(main, ["synth", "--count", "2", "--out", str(out)])
    assert result.exit_code == 1
    assert "--force" in result.output
    run_ok(runner, ["synth", "--count", "2", "--size", "16", "--out", str(out), "--force"])


# --- augment ---


def test_augment_vertical_quadruples_rows(runner, tmp_path):
    run_ok(runner, ["synth", "--count", "10", "--seed", "3", "--size", "16",
                    "--out", str(tmp_path / "base")])
    run_ok(runner, ["augment", "--manifest", str(tmp_path / "base" / "manifest.csv"),
                    "--policy", "vertical", "--seed", "0", "--out", str(tmp_path / "aug")])
    base = load_manifest(tmp_path / "base" / "manifest.csv")
    aug = load_manifest(tmp_path / "aug" / "manifest.csv")
    assert len(aug) == 4 * len(base)

    base_labels = sorted(r.label.pm25 for r in base.records)
    aug_labels = sorted(set(r.label.pm25 for r in aug.records))
    assert aug_labels == base_labels  # labels copied verbatim, 4 copies each
    for rec in aug.records:
        assert rec.path.exists()


def test_augment_unknown_policy_is_usage_error(runner, tmp_path):
    result = runner.invoke(main, ["augment", "--manifest", "x.csv", "--policy", "diagonal"])
    assert result.exit_code == 2


# --- train / eval ---


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("train")
    runner = CliRunner()
    base = tmp / "data"
    run_ok(runner, ["synth", "--count", "14", "--seed", "4", "--size", "24",
                    "--out", str(base)])
    out = tmp / "run"
    run_ok(runner, [
        "train", "--manifest", str(base / "manifest.csv"), "--arch", "branched",
        "--epochs", "2", "--batch-size", "4", "--seed", "5",
        "--input-size", "24", "--filters", "2,2,2", "--hidden", "4",
        "--out", str(out),
    ])
    return out


def test_train_emits_expected_files(trained_run):
    for name in ["model.ckpt", "report.json", "curves.csv", "config.json",
                 "train_manifest.csv", "test_manifest.csv", "scaler.json"]:
        assert (trained_run / name).exists(), name
    report = json.loads((trained_run / "report.json").read_text())
    assert len(report["epochs"]) == 2
    curves = (trained_run / "curves.csv").read_text().splitlines()
    assert curves[0] == "epoch,arm,seed,mae,mse"
    assert len(curves) == 3


def test_train_default_epochs_is_50(runner):
    result = run_ok(runner, ["train", "--help"])
    assert "default: 50" in result.output


def test_train_arch_flag_selects_two_stage(runner, tmp_path):
    base = tmp_path / "data"
    run_ok(runner, ["synth", "--count", "10", "--seed", "6", "--size", "24",
                    "--out", str(base)])
    out = tmp_path / "ts"
    run_ok(runner, [
        "train", "--manifest", str(base / "manifest.csv"), "--arch", "two-stage",
        "--epochs", "1", "--batch-size", "4", "--seed", "6",
        "--input-size", "24", "--filters", "2,2,2", "--hidden", "4",
        "--out", str(out),
    ])
    from healthcam.model import load_checkpoint

    model, _ = load_checkpoint(out / "model.ckpt", expect_architecture="two-stage")
    assert model.params["head2.hidden.weights"].shape == (4, 2)


def test_eval_reproduces_final_train_metrics(runner, trained_run):
    result = run_ok(runner, [
        "eval", "--manifest", str(trained_run / "train_manifest.csv"),
        "--checkpoint", str(trained_run / "model.ckpt"), "--json",
    ])
    metrics = json.loads(result.output)
    report = json.loads((trained_run / "report.json").read_text())
    for key in ("mse", "mae", "head1_mse", "head2_mse"):
        assert metrics[key] == pytest.approx(report["final"]["train"][key], abs=1e-6)


def test_eval_table_layout(runner, trained_run):
    result = run_ok(runner, [
        "eval", "--manifest", str(trained_run / "test_manifest.csv"),
        "--checkpoint", str(trained_run / "model.ckpt"),
    ])
    assert "MAE" in result.output and "MSE" in result.output
    assert "pm25" in result.output


def test_eval_missing_checkpoint_fails(runner, trained_run):
    result = runner.invoke(main, [
        "eval", "--manifest", str(trained_run / "test_manifest.csv"),
        "--checkpoint", str(trained_run / "missing.ckpt"),
    ])
    assert result.exit_code == 1


# --- studies ---


def test_study_augmentation_outputs(runner, tmp_path):
    base = tmp_path / "data"
    run_ok(runner, ["synth", "--count", "10", "--seed", "7", "--size", "24",
                    "--out", str(base)])
    out = tmp_path / "study"
    run_ok(runner, [
        "study", "augmentation", "--manifest", str(base / "manifest.csv"),
        "--seeds", "0,1,2", "--epochs", "2", "--batch-size", "8",
        "--input-size", "24", "--filters", "2,2,2", "--hidden", "4",
        "--out", str(out),
    ])
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["deltas"]) == 3
    for arm in ("none", "vertical", "vertical-horizontal"):
        for seed in (0, 1, 2):
            assert (out / f"curves_{arm}_seed{seed}.csv").exists()


def test_study_validates_arm_list(runner, tmp_path):
    result = runner.invoke(main, [
        "study", "augmentation", "--manifest", "x.csv", "--arms", "none,sideways",
    ])
    assert result.exit_code == 2
    assert "sideways" in result.output


# --- predict / serve ---


def test_cli_predict_matches_http_predict(runner):
    result = run_ok(runner, [
        "predict", "--image", str(CLEAR_PNG), "--checkpoint", str(CHECKPOINT),
    ])
    cli_body = json.loads(result.output)

    app = create_app(checkpoint_path=CHECKPOINT)
    with TestClient(app) as client:
        http_body = client.post(
            "/api/predict", files={"image": ("clear.png", CLEAR_PNG.read_bytes(), "image/png")}
        ).json()

    cli_body.pop("latency_ms")
    http_body.pop("latency_ms")
    assert cli_body == http_body


def test_cli_predict_with_symptoms_matches_http_recommend(runner):
    result = run_ok(runner, [
        "predict", "--image", str(CLEAR_PNG), "--checkpoint", str(CHECKPOINT),
        "--symptoms", "asthma,elderly",
    ])
    cli_body = json.loads(result.output)
    app = create_app(checkpoint_path=CHECKPOINT)
    with TestClient(app) as client:
        http_body = client.post(
            "/api/recommend",
            files={"image": ("clear.png", CLEAR_PNG.read_bytes(), "image/png")},
            data={"symptoms": "asthma,elderly"},
        ).json()
    cli_body.pop("latency_ms")
    http_body.pop("latency_ms")
    assert cli_body == http_body


def test_predict_undecodable_image_exits_nonzero(runner, tmp_path):
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"not a png")
    result = runner.invoke(main, [
        "predict", "--image", str(bad), "--checkpoint", str(CHECKPOINT),
    ])
    assert result.exit_code == 1
    assert "decode" in result.output


def test_serve_refuses_missing_checkpoint_without_allow_degraded(runner):
    result = runner.invoke(main, ["serve"])
    assert result.exit_code == 1
    assert "--allow-degraded" in result.output


def test_serve_allow_degraded_starts(runner, monkeypatch):
    import uvicorn

    calls = {}

    def fake_run(app, host, port, log_level):
        calls["host"] = host
        calls["port"] = port

    monkeypatch.setattr(uvicorn, "run", fake_run)
    run_ok(runner, ["serve", "--allow-degraded", "--addr", "127.0.0.1:9100"])
    assert calls == {"host": "127.0.0.1", "port": 9100}
