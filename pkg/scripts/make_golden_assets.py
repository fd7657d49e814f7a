#!/usr/bin/env python3
"""Build the frozen service-contract fixtures under tests/data/.

Produces a small trained checkpoint, two upload images, and the recorded
responses of the predict/recommend endpoints against that checkpoint.
Everything is seeded; rerunning regenerates identical predictions.
Committed outputs are the contract: tests replay the requests and compare.
"""

import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from healthcam.dataset import LabelScaler, render_hazy_scene, synthetic_samples  # noqa: E402
from healthcam.model import ModelConfig, ModelGraph, save_checkpoint  # noqa: E402
from healthcam.service import build_snapshot, run_prediction, run_recommendation  # noqa: E402
from healthcam.training import train  # noqa: E402

DATA_DIR = ROOT / "tests" / "data"
INPUT_SIZE = 32


def strip_latency(doc: dict) -> dict:
    return {k: v for k, v in doc.items() if k != "latency_ms"}


def main() -> None:
    DATA_DIR.mkdir(parents=True, exist_ok=True)

    config = ModelConfig(
        input_size=INPUT_SIZE, conv_filters=(4, 8, 8), hidden_units=16, architecture="branched"
    )
    samples = synthetic_samples(120, seed=100, image_size=INPUT_SIZE)
    train_s, test_s = samples[:96], samples[96:]
    scaler = LabelScaler.fit([s.label for s in train_s])
    model = ModelGraph.build(config, seed=100)
    report = train(model, train_s, test_s, scaler, epochs=40, batch_size=16, seed=100, lr=0.01)
    print(f"tiny model test MSE: {report.final['test']['mse']:.4f}")

    ckpt_path = DATA_DIR / "tiny_model.ckpt"
    save_checkpoint(model, scaler, ckpt_path)

    rng = np.random.default_rng(7)
    clear = render_hazy_scene(rng, INPUT_SIZE, alpha=0.0)
    hazy = render_hazy_scene(rng, INPUT_SIZE, alpha=0.95)
    Image.fromarray(clear, "RGB").save(DATA_DIR / "clear.png")
    Image.fromarray(hazy, "RGB").save(DATA_DIR / "hazy.png")

    snapshot = build_snapshot(ckpt_path)
    clear_bytes = (DATA_DIR / "clear.png").read_bytes()
    hazy_bytes = (DATA_DIR / "hazy.png").read_bytes()

    golden = {
        "predict_clear": strip_latency(run_prediction(snapshot, clear_bytes)),
        "predict_hazy": strip_latency(run_prediction(snapshot, hazy_bytes)),
        "recommend_clear_none": strip_latency(
            run_recommendation(snapshot, clear_bytes, "none")
        ),
        "recommend_hazy_asthma_elderly": strip_latency(
            run_recommendation(snapshot, hazy_bytes, "asthma,elderly")
        ),
    }

    # sanity before freezing: the trained model must separate the two scenes
    clear_pm25 = golden["predict_clear"]["pollutants"]["pm25"]
    hazy_pm25 = golden["predict_hazy"]["pollutants"]["pm25"]
    assert hazy_pm25 > 150, f"hazy pm25 {hazy_pm25} not near the top of the trained range"
    assert clear_pm25 < 60, f"clear pm25 {clear_pm25} unexpectedly high"
    assert golden["recommend_clear_none"]["recommendation"]["verdict"] == "suitable"
    assert golden["recommend_hazy_asthma_elderly"]["recommendation"]["verdict"] == "unsuitable"

    (DATA_DIR / "golden_responses.json").write_text(
        json.dumps(golden, indent=2, sort_keys=True) + "\n"
    )
    print(f"frozen checkpoint + goldens written to {DATA_DIR}")
    print(f"clear pm25 {clear_pm25:.1f}, hazy pm25 {hazy_pm25:.1f}")


if __name__ == "__main__":
    main()
