"""Adam training loop, metric reports, and the two comparison experiments.

All losses and reported metrics are on the normalized [0,1] label scale;
native-unit errors are available through evaluate(). Every run is
deterministic given its seed: batch order, weight init, and the optimizer
all draw from seeded generators.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from statistics import median

import numpy as np

from .augmentation import named_policy, augment_dataset
from .dataset import (
    POLLUTANT_NAMES,
    PRIMARY_COUNT,
    LabeledSample,
    LabelScaler,
    resize_nearest,
)
from .model import ModelConfig, ModelGraph
from .tensor_core import mae, mse, mse_grad

# Published benchmark errors (Delhi column) printed next to desk-scale
# results as context anchors; not reproduction targets.
REFERENCE_ANCHORS = {
    "two_pollutants_from_images": {"mae": 0.0559, "mse": 0.0077},
    "five_pollutants_from_images": {"mae": 0.0671, "mse": 0.0112},
    "five_pollutants_from_two_stage": {"mae": 0.2787, "mse": 0.1135},
}

STUDY_ARMS = ("none", "vertical", "vertical+horizontal")
PLATEAU_EPOCHS = 5  # plateau error = mean over the final epochs of a run


class TrainingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Per-parameter first/second moment estimates plus step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """One bias-corrected Adam update, in place on params and state."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name}; aborting step")

    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for name, p in params.items():
        g = grads[name].astype(p.dtype, copy=False)
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


# ---------------------------------------------------------------------------
# data plumbing


def stack_samples(samples, scaler: LabelScaler):
    """Images to one (N,S,S,3) float32 array, labels scaled to [0,1] targets."""
    x = np.stack([np.asarray(s.image, dtype=np.float32) for s in samples])
    labels = np.stack([s.label.as_array() for s in samples])
    t = scaler.scale(labels).astype(np.float32)
    return x, t[:, :PRIMARY_COUNT], t[:, PRIMARY_COUNT:]


def resize_samples(samples, size: int):
    """Nearest-neighbor resize back to the model input (augmented halves shrink)."""
    out = []
    for s in samples:
        img = np.asarray(s.image)
        if img.shape[:2] != (size, size):
            img = resize_nearest(img, size, size)
        out.append(LabeledSample(image=img, label=s.label, source=s.source))
    return out


def _metrics(y1, y2, t1, t2) -> dict:
    both_y = np.concatenate([y1, y2], axis=1)
    both_t = np.concatenate([t1, t2], axis=1)
    return {
        "mse": mse(both_y, both_t),
        "mae": mae(both_y, both_t),
        "head1_mse": mse(y1, t1),
        "head1_mae": mae(y1, t1),
        "head2_mse": mse(y2, t2),
        "head2_mae": mae(y2, t2),
    }


def _forward_in_chunks(model, x, chunk=256):
    outs1, outs2 = [], []
    for i in range(0, len(x), chunk):
        y1, y2, _ = model.forward(x[i : i + chunk])
        outs1.append(y1)
        outs2.append(y2)
    return np.concatenate(outs1), np.concatenate(outs2)


def evaluate(model: ModelGraph, samples, scaler: LabelScaler, native: bool = False) -> dict:
    """Normalized-scale metrics; optionally native-unit errors per pollutant."""
    x, t1, t2 = stack_samples(samples, scaler)
    y1, y2 = _forward_in_chunks(model, x)
    out = _metrics(y1, y2, t1, t2)
    if native:
        pred = scaler.unscale(np.concatenate([y1, y2], axis=1))
        truth = np.stack([s.label.as_array() for s in samples])
        out["native"] = {
            name: {
                "mse": mse(pred[:, i], truth[:, i]),
                "mae": mae(pred[:, i], truth[:, i]),
            }
            for i, name in enumerate(POLLUTANT_NAMES)
        }
    return out


def mean_predictor_baseline(train_samples, test_samples, scaler: LabelScaler) -> dict:
    """Errors of always predicting the train-set mean label (normalized)."""
    _, tr1, tr2 = stack_samples(train_samples, scaler)
    _, te1, te2 = stack_samples(test_samples, scaler)
    p1 = np.tile(tr1.mean(axis=0), (len(te1), 1))
    p2 = np.tile(tr2.mean(axis=0), (len(te2), 1))
    return _metrics(p1, p2, te1, te2)


# ---------------------------------------------------------------------------
# the training loop


@dataclass
class TrainReport:
    seed: int
    config: dict  # model + run hyperparameters
    epochs: list  # one {"epoch", "train": {...}, "test": {...}} per epoch
    final: dict  # {"train": {...}, "test": {...}} for the final model
    wall_time_s: float

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "config": self.config,
            "epochs": self.epochs,
            "final": self.final,
            "wall_time_s": self.wall_time_s,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "TrainReport":
        return cls(
            seed=doc["seed"],
            config=doc["config"],
            epochs=doc["epochs"],
            final=doc["final"],
            wall_time_s=doc["wall_time_s"],
        )

    def curve_rows(self, arm: str) -> list:
        return [
            [entry["epoch"], arm, self.seed, entry["test"]["mae"], entry["test"]["mse"]]
            for entry in self.epochs
        ]

    def plateau(self, metric: str = "mae", last: int = PLATEAU_EPOCHS) -> float:
        tail = self.epochs[-last:]
        if not tail:
            raise TrainingError("plateau undefined for an empty report")
        return float(np.mean([e["test"][metric] for e in tail]))


def train(
    model: ModelGraph,
    train_samples,
    test_samples,
    scaler: LabelScaler,
    epochs: int = 50,
    batch_size: int = 32,
    seed: int = 0,
    lr: float = 1e-3,
) -> TrainReport:
    """Adam-train with per-epoch seeded shuffles; metrics on both splits.

    The scaler must have been fit on the training labels only; train()
    re-derives the training-label extremes and refuses a scaler that has
    seen other bounds.
    """
    if not train_samples or not test_samples:
        raise TrainingError("train and test sets must both be nonempty")
    train_labels = np.stack([s.label.as_array() for s in train_samples])
    if np.any(scaler.mins > train_labels.min(axis=0)) or np.any(
        scaler.maxs < train_labels.max(axis=0)
    ):
        raise TrainingError("scaler bounds do not cover the training labels")

    x_train, t1_train, t2_train = stack_samples(train_samples, scaler)
    x_test, t1_test, t2_test = stack_samples(test_samples, scaler)

    rng = np.random.default_rng(seed)
    state = AdamState(lr=lr)
    report_epochs = []
    started = time.perf_counter()

    for epoch in range(1, epochs + 1):
        order = rng.permutation(len(x_train))
        sq_sum = np.zeros(2)  # per head: sums of squared and absolute error
        ab_sum = np.zeros(2)
        n_elem = np.zeros(2)
        for lo in range(0, len(order), batch_size):
            idx = order[lo : lo + batch_size]
            xb, t1b, t2b = x_train[idx], t1_train[idx], t2_train[idx]
            y1, y2, trace = model.forward(xb)
            grads = model.backward(trace, mse_grad(y1, t1b), mse_grad(y2, t2b))
            adam_step(model.params, grads, state)
            model.mark_updated()

            d1 = y1 - t1b
            d2 = y2 - t2b
            sq_sum += [float((d1 * d1).sum()), float((d2 * d2).sum())]
            ab_sum += [float(np.abs(d1).sum()), float(np.abs(d2).sum())]
            n_elem += [d1.size, d2.size]

        train_metrics = {
            "mse": float(sq_sum.sum() / n_elem.sum()),
            "mae": float(ab_sum.sum() / n_elem.sum()),
            "head1_mse": float(sq_sum[0] / n_elem[0]),
            "head1_mae": float(ab_sum[0] / n_elem[0]),
            "head2_mse": float(sq_sum[1] / n_elem[1]),
            "head2_mae": float(ab_sum[1] / n_elem[1]),
        }
        y1_test, y2_test = _forward_in_chunks(model, x_test)
        test_metrics = _metrics(y1_test, y2_test, t1_test, t2_test)
        if not all(
            np.isfinite(v) for v in list(train_metrics.values()) + list(test_metrics.values())
        ):
            raise TrainingError(f"non-finite metrics at epoch {epoch}; training diverged")
        report_epochs.append({"epoch": epoch, "train": train_metrics, "test": test_metrics})

    y1_tr, y2_tr = _forward_in_chunks(model, x_train)
    y1_te, y2_te = _forward_in_chunks(model, x_test)
    final = {
        "train": _metrics(y1_tr, y2_tr, t1_train, t2_train),
        "test": _metrics(y1_te, y2_te, t1_test, t2_test),
    }

    return TrainReport(
        seed=seed,
        config={
            "model": model.config.to_dict(),
            "epochs": epochs,
            "batch_size": batch_size,
            "lr": lr,
        },
        epochs=report_epochs,
        final=final,
        wall_time_s=time.perf_counter() - started,
    )


def write_curves_csv(path, rows) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "arm", "seed", "mae", "mse"])
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# experiment: augmentation parity


def _split_samples(samples, fraction: float, seed: int):
    order = np.random.default_rng(seed).permutation(len(samples))
    n_train = int(len(samples) * fraction)
    if n_train == 0 or n_train == len(samples):
        raise TrainingError("split leaves an empty side")
    return [samples[i] for i in order[:n_train]], [samples[i] for i in order[n_train:]]


def run_augmentation_study(
    base_samples,
    seeds,
    config: ModelConfig,
    epochs: int = 50,
    batch_size: int = 32,
    lr: float = 1e-3,
    arms=STUDY_ARMS,
    split_fraction: float = 0.8,
) -> dict:
    """Trains each augmentation arm under identical seeds and configs.

    Only the training split is augmented; every arm of a seed shares the
    same split and the same weight init. Returns curves, per-arm plateau
    MAE, and the pairwise plateau deltas the parity claim is about.
    """
    if len(seeds) < 3:
        raise TrainingError("augmentation study needs at least 3 seeds")
    results = {"arms": list(arms), "seeds": list(seeds), "runs": [], "deltas": []}
    for seed in seeds:
        train_base, test_base = _split_samples(base_samples, split_fraction, seed)
        scaler = LabelScaler.fit([s.label for s in train_base])
        plateaus = {}
        for arm in arms:
            policy = named_policy(arm, shuffle_seed=seed)
            augmented = augment_dataset(train_base, policy)
            augmented = resize_samples(augmented, config.input_size)
            model = ModelGraph.build(config, seed=seed)
            report = train(
                model,
                augmented,
                resize_samples(test_base, config.input_size),
                scaler,
                epochs=epochs,
                batch_size=batch_size,
                seed=seed,
                lr=lr,
            )
            plateaus[arm] = report.plateau("mae")
            results["runs"].append(
                {
                    "arm": arm,
                    "seed": seed,
                    "train_size": len(augmented),
                    "plateau_mae": plateaus[arm],
                    "final": report.final,
                    "curve": report.curve_rows(arm),
                }
            )
        results["deltas"].append(
            {
                "seed": seed,
                "none_vs_vertical": abs(plateaus["none"] - plateaus["vertical"]),
                "vertical_vs_horizontal": abs(
                    plateaus["vertical"] - plateaus["vertical+horizontal"]
                )
                if "vertical+horizontal" in plateaus
                else None,
                "plateaus": plateaus,
            }
        )
    return results


def parity_within_tolerance(delta: float, reference: float) -> bool:
    """Parity gate: within 0.01 absolute (normalized MAE) or 20% relative."""
    return delta < max(0.01, 0.2 * abs(reference))


# ---------------------------------------------------------------------------
# experiment: architecture comparison


def run_architecture_comparison(
    samples,
    seeds,
    config: ModelConfig,
    epochs: int = 50,
    batch_size: int = 32,
    lr: float = 1e-3,
    split_fraction: float = 0.8,
) -> dict:
    """Trains branched / two-stage / monolithic under identical conditions.

    Per-run metrics are plateau means (test metrics averaged over the final
    epochs), the same stabilized estimator the augmentation study uses.
    Reports per-head MSE/MAE in the two-row (MAE, MSE) table layout, the
    published context anchors, and the per-seed sign of
    MSE(two-stage, 5-output head) - MSE(branched, 5-output head).
    """
    if len(seeds) < 3:
        raise TrainingError("architecture comparison needs at least 3 seeds")
    architectures = ("branched", "two-stage", "monolithic")
    metric_keys = ("mse", "mae", "head1_mse", "head1_mae", "head2_mse", "head2_mae")
    runs = []
    for seed in seeds:
        train_s, test_s = _split_samples(samples, split_fraction, seed)
        scaler = LabelScaler.fit([s.label for s in train_s])
        per_arch = {}
        curves = {}
        for arch in architectures:
            arch_config = ModelConfig(**{**config.to_dict(), "architecture": arch})
            model = ModelGraph.build(arch_config, seed=seed)
            report = train(
                model, train_s, test_s, scaler,
                epochs=epochs, batch_size=batch_size, seed=seed, lr=lr,
            )
            tail = report.epochs[-PLATEAU_EPOCHS:]
            per_arch[arch] = {
                key: float(np.mean([e["test"][key] for e in tail])) for key in metric_keys
            }
            curves[arch] = report.curve_rows(arch)
        runs.append(
            {
                "seed": seed,
                "results": per_arch,
                "curves": curves,
                "twostage_minus_branched_head2_mse": per_arch["two-stage"]["head2_mse"]
                - per_arch["branched"]["head2_mse"],
            }
        )

    medians = {
        arch: {
            key: float(median(r["results"][arch][key] for r in runs))
            for key in metric_keys
        }
        for arch in architectures
    }
    return {
        "seeds": list(seeds),
        "runs": runs,
        "medians": medians,
        "reference_anchors": REFERENCE_ANCHORS,
        "branched_not_worse_on_head2": medians["branched"]["head2_mse"]
        <= medians["two-stage"]["head2_mse"],
    }


def comparison_table(report: dict) -> str:
    """Two metric rows per head, one column per architecture, plus anchors."""
    archs = list(report["medians"])
    lines = []
    header = f"{'metric':<18}" + "".join(f"{a:>14}" for a in archs)
    lines.append(header)
    for key, label in [
        ("head1_mae", "2-output MAE"),
        ("head1_mse", "2-output MSE"),
        ("head2_mae", "5-output MAE"),
        ("head2_mse", "5-output MSE"),
    ]:
        row = f"{label:<18}" + "".join(f"{report['medians'][a][key]:>14.4f}" for a in archs)
        lines.append(row)
    lines.append("")
    lines.append("published anchors (context, not targets):")
    for name, vals in report["reference_anchors"].items():
        lines.append(f"  {name}: MAE {vals['mae']:.4f}  MSE {vals['mse']:.4f}")
    return "\n".join(lines)
