"""Single entry point driving every pipeline stage reproducibly.

Exit codes: 0 success, 1 operational error (bad data, unreadable files,
failed runs), 2 usage error (bad flags). Commands that produce files
write them under --out (or a timestamp+seed run directory) together with
a config.json snapshot of the run.
"""

from __future__ import annotations

import datetime as dt
import functools
import json
import logging
from pathlib import Path

import click
import numpy as np
from PIL import Image

from .augmentation import POLICY_NAMES, AugmentationError, augment_dataset, named_policy
from .dataset import (
    DatasetError,
    LabeledSample,
    LabelScaler,
    ManifestRecord,
    generate_synthetic,
    load_image_raw,
    load_manifest,
    load_samples,
    split_train_test,
    write_manifest,
)
from .model import CheckpointError, ModelConfig, ModelGraph, load_checkpoint, save_checkpoint
from .recommendation import RecommendationError
from .service import ServiceError, build_snapshot, run_prediction, run_recommendation
from .tensor_core import ShapeError
from .training import (
    TrainingError,
    comparison_table,
    evaluate,
    run_architecture_comparison,
    run_augmentation_study,
    train,
    write_curves_csv,
)

OPERATIONAL_ERRORS = (
    DatasetError,
    AugmentationError,
    TrainingError,
    CheckpointError,
    RecommendationError,
    ShapeError,
    ServiceError,
    OSError,
)


def operational_errors(fn):
    """Map domain errors to exit code 1 with their message."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except OPERATIONAL_ERRORS as exc:
            raise click.ClickException(str(exc)) from exc

    return wrapper


def resolve_out_dir(out, seed: int) -> Path:
    if out is not None:
        return Path(out)
    stamp = dt.datetime.now().strftime("%Y%m%d-%H%M%S")
    return Path("runs") / f"{stamp}-seed{seed}"


def ensure_writable_dir(path: Path, force: bool) -> Path:
    if path.exists() and any(path.iterdir()) and not force:
        raise click.ClickException(
            f"output directory {path} is not empty; pass --force to overwrite"
        )
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_config_snapshot(out_dir: Path, command: str, params: dict) -> None:
    snapshot = {"command": command, "params": params}
    (out_dir / "config.json").write_text(json.dumps(snapshot, indent=2, sort_keys=True) + "\n")


def parse_filters(text: str) -> tuple:
    try:
        filters = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise click.UsageError(f"--filters must be comma-separated integers, got {text!r}")
    return filters


def model_config_from_flags(input_size, filters, hidden, arch) -> ModelConfig:
    try:
        return ModelConfig(
            input_size=input_size,
            conv_filters=parse_filters(filters),
            hidden_units=hidden,
            architecture=arch,
        )
    except ValueError as exc:
        raise click.UsageError(str(exc))


def parse_seeds(text: str) -> list:
    try:
        return [int(part) for part in text.split(",")]
    except ValueError:
        raise click.UsageError(f"--seeds must be comma-separated integers, got {text!r}")


@click.group()
@click.option("--verbose", is_flag=True, help="Log at DEBUG level.")
def main(verbose):
    """Image-to-air-quality pipeline: data, training, studies, and serving."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


# ---------------------------------------------------------------------------


@main.command()
@click.option("--count", type=int, required=True, help="Number of images to generate.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--size", type=int, default=64, show_default=True, help="Square image size.")
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.option("--force", is_flag=True, help="Allow writing into a non-empty directory.")
@operational_errors
def synth(count, seed, size, out, force):
    """Generate a deterministic synthetic haze dataset with a manifest."""
    if count < 1:
        raise click.UsageError("--count must be >= 1")
    out_dir = ensure_writable_dir(resolve_out_dir(out, seed), force)
    manifest = generate_synthetic(count, seed=seed, image_size=size, out_dir=out_dir)
    write_config_snapshot(out_dir, "synth", {"count": count, "seed": seed, "size": size})
    click.echo(f"wrote {len(manifest)} images + manifest.csv to {out_dir}")


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option(
    "--policy",
    type=click.Choice(sorted(POLICY_NAMES)),
    default="vertical",
    show_default=True,
)
@click.option("--seed", type=int, default=0, show_default=True, help="Shuffle seed.")
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.option("--force", is_flag=True)
@operational_errors
def augment(manifest_path, policy, seed, out, force):
    """Apply split/mirror augmentation to a manifest; labels are copied."""
    out_dir = ensure_writable_dir(resolve_out_dir(out, seed), force)
    manifest = load_manifest(manifest_path)
    samples = [
        LabeledSample(image=load_image_raw(rec.path), label=rec.label, source=str(rec.path))
        for rec in manifest.records
    ]
    derived = augment_dataset(samples, named_policy(policy, shuffle_seed=seed))

    (out_dir / "images").mkdir(exist_ok=True)
    records = []
    for i, sample in enumerate(derived):
        source_path, _, tag = sample.source.rpartition("#")
        name = f"{i:05d}_{Path(source_path).stem}__{tag}.png"
        rel = Path("images") / name
        Image.fromarray(np.asarray(sample.image, dtype=np.uint8), "RGB").save(out_dir / rel)
        records.append(ManifestRecord(path=rel, label=sample.label))
    write_manifest(records, out_dir / "manifest.csv")
    write_config_snapshot(
        out_dir, "augment",
        {"manifest": str(manifest_path), "policy": policy, "seed": seed},
    )
    click.echo(f"wrote {len(records)} augmented images + manifest.csv to {out_dir}")


# ---------------------------------------------------------------------------


def _load_split_samples(manifest_path, input_size, train_fraction, split_seed):
    manifest = load_manifest(manifest_path)
    train_manifest, test_manifest = split_train_test(manifest, train_fraction, split_seed)
    train_samples = load_samples(train_manifest, target_size=input_size)
    test_samples = load_samples(test_manifest, target_size=input_size)
    return train_manifest, test_manifest, train_samples, test_samples


@main.command(name="train")
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--arch", type=click.Choice(["branched", "two-stage", "monolithic"]),
              default="branched", show_default=True)
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--input-size", type=int, default=224, show_default=True)
@click.option("--filters", default="32,64,64", show_default=True)
@click.option("--hidden", type=int, default=64, show_default=True)
@click.option("--train-fraction", type=float, default=0.8, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@operational_errors
def train_command(manifest_path, arch, epochs, batch_size, lr, seed, input_size,
                  filters, hidden, train_fraction, out):
    """Train a model on a manifest; writes checkpoint, report, and curves."""
    config = model_config_from_flags(input_size, filters, hidden, arch)
    out_dir = ensure_writable_dir(resolve_out_dir(out, seed), force=True)

    train_manifest, test_manifest, train_samples, test_samples = _load_split_samples(
        manifest_path, config.input_size, train_fraction, seed
    )
    scaler = LabelScaler.fit([s.label for s in train_samples])
    model = ModelGraph.build(config, seed=seed)
    report = train(model, train_samples, test_samples, scaler,
                   epochs=epochs, batch_size=batch_size, seed=seed, lr=lr)

    save_checkpoint(model, scaler, out_dir / "model.ckpt")
    (out_dir / "report.json").write_text(json.dumps(report.to_json(), indent=2) + "\n")
    (out_dir / "scaler.json").write_text(json.dumps(scaler.to_json(), indent=2) + "\n")
    write_curves_csv(out_dir / "curves.csv", report.curve_rows(arch))
    write_manifest(train_manifest.records, out_dir / "train_manifest.csv")
    write_manifest(test_manifest.records, out_dir / "test_manifest.csv")
    write_config_snapshot(out_dir, "train", {
        "manifest": str(manifest_path), "model": config.to_dict(), "epochs": epochs,
        "batch_size": batch_size, "lr": lr, "seed": seed, "train_fraction": train_fraction,
    })
    final = report.final["test"]
    click.echo(f"final test MSE {final['mse']:.6f}  MAE {final['mae']:.6f}")
    click.echo(f"checkpoint + report written to {out_dir}")


@main.command(name="eval")
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--checkpoint", type=click.Path(path_type=Path), required=True)
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@operational_errors
def eval_command(manifest_path, checkpoint, as_json):
    """MSE/MAE of a checkpoint over a manifest (normalized and native units)."""
    model, scaler = load_checkpoint(checkpoint)
    if scaler is None:
        raise click.ClickException(f"checkpoint {checkpoint} embeds no label scaler")
    manifest = load_manifest(manifest_path)
    samples = load_samples(manifest, target_size=model.config.input_size)
    metrics = evaluate(model, samples, scaler, native=True)

    if as_json:
        click.echo(json.dumps(metrics, indent=2, sort_keys=True))
        return
    click.echo(f"{'metric':<10}{'combined':>12}{'2-output':>12}{'5-output':>12}")
    click.echo(f"{'MAE':<10}{metrics['mae']:>12.6f}{metrics['head1_mae']:>12.6f}{metrics['head2_mae']:>12.6f}")
    click.echo(f"{'MSE':<10}{metrics['mse']:>12.6f}{metrics['head1_mse']:>12.6f}{metrics['head2_mse']:>12.6f}")
    click.echo("\nnative units:")
    click.echo(f"{'pollutant':<12}{'MAE':>14}{'MSE':>16}")
    for name, vals in metrics["native"].items():
        click.echo(f"{name:<12}{vals['mae']:>14.4f}{vals['mse']:>16.4f}")


# ---------------------------------------------------------------------------


@main.group()
def study():
    """Desk-scale reproductions of the augmentation and architecture studies."""


@study.command(name="augmentation")
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--input-size", type=int, default=64, show_default=True)
@click.option("--filters", default="8,16,16", show_default=True)
@click.option("--hidden", type=int, default=32, show_default=True)
@click.option("--arms", default="none,vertical,vertical+horizontal", show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@operational_errors
def study_augmentation(manifest_path, seeds, epochs, batch_size, lr, input_size,
                       filters, hidden, arms, out):
    """Train augmented vs original arms and report plateau deltas."""
    seed_list = parse_seeds(seeds)
    arm_list = [a.strip() for a in arms.split(",")]
    unknown = [a for a in arm_list if a not in POLICY_NAMES]
    if unknown:
        raise click.UsageError(f"unknown arm(s) {unknown}; choose from {sorted(POLICY_NAMES)}")
    config = model_config_from_flags(input_size, filters, hidden, "branched")
    out_dir = ensure_writable_dir(resolve_out_dir(out, seed_list[0]), force=True)

    manifest = load_manifest(manifest_path)
    samples = load_samples(manifest)  # native size; halves resize inside the study
    results = run_augmentation_study(
        samples, seed_list, config, epochs=epochs, batch_size=batch_size, lr=lr, arms=arm_list
    )
    for run in results["runs"]:
        write_curves_csv(
            out_dir / f"curves_{run['arm'].replace('+', '-')}_seed{run['seed']}.csv",
            run["curve"],
        )
    summary = {
        "arms": results["arms"],
        "seeds": results["seeds"],
        "deltas": results["deltas"],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    write_config_snapshot(out_dir, "study augmentation", {
        "manifest": str(manifest_path), "seeds": seed_list, "epochs": epochs,
        "model": config.to_dict(), "arms": arm_list,
    })
    for delta in results["deltas"]:
        click.echo(
            f"seed {delta['seed']}: |none - vertical| = {delta['none_vs_vertical']:.4f}, "
            f"|vertical - vertical+horizontal| = {delta['vertical_vs_horizontal']:.4f}"
        )
    click.echo(f"curves + summary.json written to {out_dir}")


@study.command(name="architecture")
@click.option("--manifest", "manifest_path", type=click.Path(path_type=Path), required=True)
@click.option("--seeds", default="0,1,2,3,4", show_default=True)
@click.option("--epochs", type=int, default=50, show_default=True)
@click.option("--batch-size", type=int, default=32, show_default=True)
@click.option("--lr", type=float, default=1e-3, show_default=True)
@click.option("--input-size", type=int, default=64, show_default=True)
@click.option("--filters", default="8,16,16", show_default=True)
@click.option("--hidden", type=int, default=32, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@operational_errors
def study_architecture(manifest_path, seeds, epochs, batch_size, lr, input_size,
                       filters, hidden, out):
    """Compare branched / two-stage / monolithic under identical conditions."""
    seed_list = parse_seeds(seeds)
    config = model_config_from_flags(input_size, filters, hidden, "branched")
    out_dir = ensure_writable_dir(resolve_out_dir(out, seed_list[0]), force=True)

    manifest = load_manifest(manifest_path)
    samples = load_samples(manifest, target_size=config.input_size)
    results = run_architecture_comparison(
        samples, seed_list, config, epochs=epochs, batch_size=batch_size, lr=lr
    )
    for run in results["runs"]:
        for arch, rows in run["curves"].items():
            write_curves_csv(out_dir / f"curves_{arch}_seed{run['seed']}.csv", rows)
    slim = {
        **results,
        "runs": [{k: v for k, v in r.items() if k != "curves"} for r in results["runs"]],
    }
    (out_dir / "summary.json").write_text(json.dumps(slim, indent=2) + "\n")
    table = comparison_table(results)
    (out_dir / "table.txt").write_text(table + "\n")
    write_config_snapshot(out_dir, "study architecture", {
        "manifest": str(manifest_path), "seeds": seed_list, "epochs": epochs,
        "model": config.to_dict(),
    })
    click.echo(table)
    click.echo(f"summary.json + table.txt written to {out_dir}")


# ---------------------------------------------------------------------------


@main.command()
@click.option("--image", "image_path", type=click.Path(path_type=Path), required=True)
@click.option("--checkpoint", type=click.Path(path_type=Path), required=True,
              envvar="HEALTHCAM_CHECKPOINT")
@click.option("--symptoms", default=None,
              help="Comma-separated symptoms; adds a recommendation to the output.")
@click.option("--rules", "rules_path", type=click.Path(path_type=Path), default=None,
              envvar="HEALTHCAM_RULES")
@operational_errors
def predict(image_path, checkpoint, symptoms, rules_path):
    """Run one image through a checkpoint and print the response JSON."""
    snapshot = build_snapshot(checkpoint, rules_path)
    try:
        data = Path(image_path).read_bytes()
    except OSError as exc:
        raise click.ClickException(f"cannot read image {image_path}: {exc}") from exc
    if symptoms is None:
        response = run_prediction(snapshot, data)
    else:
        response = run_recommendation(snapshot, data, symptoms)
    click.echo(json.dumps(response, indent=2, sort_keys=True))


@main.command()
@click.option("--checkpoint", type=click.Path(path_type=Path), default=None,
              envvar="HEALTHCAM_CHECKPOINT")
@click.option("--rules", "rules_path", type=click.Path(path_type=Path), default=None,
              envvar="HEALTHCAM_RULES")
@click.option("--addr", default="127.0.0.1:8000", show_default=True,
              envvar="HEALTHCAM_ADDR", help="host:port to bind.")
@click.option("--cors-origin", "cors_origins", multiple=True, default=("*",),
              show_default=True)
@click.option("--allow-degraded", is_flag=True,
              help="Start without a checkpoint (predict returns 503).")
@operational_errors
def serve(checkpoint, rules_path, addr, cors_origins, allow_degraded):
    """Run the HTTP inference service."""
    import uvicorn

    from .service import create_app

    if checkpoint is None and not allow_degraded:
        raise click.ClickException(
            "no checkpoint given; pass --checkpoint or start with --allow-degraded"
        )
    host, _, port_text = addr.partition(":")
    try:
        port = int(port_text or "8000")
    except ValueError:
        raise click.UsageError(f"--addr must be host:port, got {addr!r}")
    app = create_app(checkpoint_path=checkpoint, rules_path=rules_path,
                     cors_origins=cors_origins)
    uvicorn.run(app, host=host or "127.0.0.1", port=port, log_level="info")


if __name__ == "__main__":
    main()
