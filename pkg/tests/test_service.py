"""Service contract: golden request/response suite, error codes, invariants."""

import io
import json
from pathlib import Path

import jsonschema
import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from healthcam.model import load_checkpoint
from healthcam.service import (
    MAX_UPLOAD_BYTES,
    ServiceError,
    build_snapshot,
    create_app,
    decode_upload,
    run_prediction,
)

DATA_DIR = Path(__file__).parent / "data"
CHECKPOINT = DATA_DIR / "tiny_model.ckpt"
CLEAR_PNG = DATA_DIR / "clear.png"
HAZY_PNG = DATA_DIR / "hazy.png"
GOLDEN = json.loads((DATA_DIR / "golden_responses.json").read_text())

API_SCHEMA = json.loads(
    (Path(__file__).parent.parent / "src/healthcam/data/api_schema.json").read_text()
)


def endpoint_schema(key):
    schema = dict(API_SCHEMA["endpoints"][key])
    schema["definitions"] = API_SCHEMA["definitions"]
    return schema


@pytest.fixture(scope="module")
def client():
    app = create_app(checkpoint_path=CHECKPOINT)
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def degraded_client():
    app = create_app(checkpoint_path=None)
    with TestClient(app) as c:
        yield c


def upload(path):
    return {"image": (path.name, path.read_bytes(), "image/png")}


def assert_matches_golden(actual, expected, path=""):
    """Exact match for structure and strings, 1e-6 relative for floats."""
    assert type(actual) is type(expected) or (
        isinstance(actual, (int, float)) and isinstance(expected, (int, float))
    ), f"type mismatch at {path}"
    if isinstance(expected, dict):
        assert set(actual) == set(expected), f"key mismatch at {path}"
        for key in expected:
            assert_matches_golden(actual[key], expected[key], f"{path}/{key}")
    elif isinstance(expected, list):
        assert len(actual) == len(expected), f"length mismatch at {path}"
        for i, (a, e) in enumerate(zip(actual, expected)):
            assert_matches_golden(a, e, f"{path}[{i}]")
    elif isinstance(expected, float):
        assert actual == pytest.approx(expected, rel=1e-6, abs=1e-9), f"value at {path}"
    else:
        assert actual == expected, f"value at {path}"


# --- golden suite ---


@pytest.mark.parametrize(
    "key,endpoint,image,data",
    [
        ("predict_clear", "/api/predict", CLEAR_PNG, None),
        ("predict_hazy", "/api/predict", HAZY_PNG, None),
        ("recommend_clear_none", "/api/recommend", CLEAR_PNG, {"symptoms": "none"}),
        (
            "recommend_hazy_asthma_elderly",
            "/api/recommend",
            HAZY_PNG,
            {"symptoms": "asthma,elderly"},
        ),
    ],
)
def test_golden_responses(client, key, endpoint, image, data):
    resp = client.post(endpoint, files=upload(image), data=data)
    assert resp.status_code == 200
    body = resp.json()
    assert body.pop("latency_ms") >= 0
    assert_matches_golden(body, GOLDEN[key], key)


def test_golden_hazy_pm25_near_top_of_trained_range(client):
    resp = client.post("/api/predict", files=upload(HAZY_PNG)).json()
    model, scaler = load_checkpoint(CHECKPOINT)
    assert resp["pollutants"]["pm25"] > 0.6 * scaler.maxs[0]


def test_golden_clear_none_is_suitable(client):
    resp = client.post(
        "/api/recommend", files=upload(CLEAR_PNG), data={"symptoms": "none"}
    ).json()
    assert resp["recommendation"]["verdict"] == "suitable"


# --- schema conformance ---


def test_predict_response_matches_schema(client):
    body = client.post("/api/predict", files=upload(CLEAR_PNG)).json()
    jsonschema.validate(body, endpoint_schema("POST /api/predict"))


def test_recommend_response_matches_schema(client):
    body = client.post(
        "/api/recommend", files=upload(HAZY_PNG), data={"symptoms": "asthma"}
    ).json()
    jsonschema.validate(body, endpoint_schema("POST /api/recommend"))


def test_health_and_model_match_schema(client):
    jsonschema.validate(client.get("/api/health").json(), endpoint_schema("GET /api/health"))
    jsonschema.validate(client.get("/api/model").json(), endpoint_schema("GET /api/model"))


def test_error_responses_match_envelope_schema(client):
    resp = client.post(
        "/api/predict", files={"image": ("x.txt", b"not an image", "text/plain")}
    )
    jsonschema.validate(resp.json(), endpoint_schema("error"))


def test_missing_upload_field_uses_error_envelope(client):
    resp = client.post("/api/predict")
    assert resp.status_code == 422
    body = resp.json()
    jsonschema.validate(body, endpoint_schema("error"))
    assert body["error"]["code"] == "invalid_request"


# --- endpoint behavior ---


def test_health_degraded_then_ok(degraded_client, client):
    degraded = degraded_client.get("/api/health").json()
    assert degraded == {"status": "degraded", "checkpoint": {"loaded": False}}
    ok = client.get("/api/health").json()
    assert ok["status"] == "ok"
    assert len(ok["checkpoint"]["sha256"]) == 64


def test_predict_503_without_checkpoint(degraded_client):
    resp = degraded_client.post("/api/predict", files=upload(CLEAR_PNG))
    assert resp.status_code == 503
    assert resp.json()["error"]["code"] == "no_checkpoint"


def test_model_endpoint_echoes_input_contract(client):
    body = client.get("/api/model").json()
    assert body["input_size"] == [32, 32, 3]
    assert body["architecture"] == "branched"
    assert "pm25" in body["scaler"]
    assert "asthma" in body["symptom_vocabulary"]


def test_tiny_image_rejected_400(client):
    buf = io.BytesIO()
    Image.fromarray(np.zeros((1, 1, 3), dtype=np.uint8), "RGB").save(buf, format="PNG")
    resp = client.post("/api/predict", files={"image": ("t.png", buf.getvalue(), "image/png")})
    assert resp.status_code == 400
    body = resp.json()["error"]
    assert body["code"] == "image_too_small"
    assert "too small" in body["message"]


def test_text_upload_rejected_400(client):
    resp = client.post("/api/predict", files={"image": ("x.txt", b"hello", "text/plain")})
    assert resp.status_code == 400
    assert resp.json()["error"]["code"] == "undecodable_image"


def test_oversize_upload_rejected_413(client):
    blob = b"\x00" * (MAX_UPLOAD_BYTES + 1)
    resp = client.post("/api/predict", files={"image": ("big.png", blob, "image/png")})
    assert resp.status_code == 413
    assert resp.json()["error"]["code"] == "image_too_large"


def test_unknown_symptom_rejected_422_naming_token(client):
    resp = client.post(
        "/api/recommend", files=upload(CLEAR_PNG), data={"symptoms": "asthma,typo"}
    )
    assert resp.status_code == 422
    err = resp.json()["error"]
    assert err["code"] == "unknown_symptom"
    assert "typo" in err["message"]


def test_identical_requests_identical_modulo_latency(client):
    a = client.post("/api/recommend", files=upload(HAZY_PNG), data={"symptoms": "copd"}).json()
    b = client.post("/api/recommend", files=upload(HAZY_PNG), data={"symptoms": "copd"}).json()
    a.pop("latency_ms")
    b.pop("latency_ms")
    assert a == b


def test_response_values_scale_back_to_raw_head_outputs(client):
    body = client.post("/api/predict", files=upload(CLEAR_PNG)).json()
    model, scaler = load_checkpoint(CHECKPOINT)
    from healthcam.dataset import POLLUTANT_NAMES, load_image

    x = load_image(CLEAR_PNG, target_size=model.config.input_size)
    y1, y2, _ = model.forward(x)
    raw = np.concatenate([y1[0], y2[0]])
    values = np.array([body["pollutants"][n] for n in POLLUTANT_NAMES])
    np.testing.assert_allclose(scaler.scale(values), raw, atol=1e-5)


def test_hot_reload_swaps_snapshot(tmp_path):
    app = create_app(checkpoint_path=None)
    with TestClient(app) as c:
        assert c.post("/api/predict", files=upload(CLEAR_PNG)).status_code == 503
        app.state.reload_checkpoint(CHECKPOINT)
        assert c.post("/api/predict", files=upload(CLEAR_PNG)).status_code == 200


# --- direct helpers ---


def test_decode_upload_roundtrip():
    pixels = decode_upload(CLEAR_PNG.read_bytes())
    assert pixels.shape == (32, 32, 3)
    assert pixels.dtype == np.uint8


def test_decode_upload_errors():
    with pytest.raises(ServiceError) as exc:
        decode_upload(b"junk")
    assert exc.value.status == 400
    with pytest.raises(ServiceError) as exc:
        decode_upload(b"\x00" * (MAX_UPLOAD_BYTES + 1))
    assert exc.value.status == 413


def test_run_prediction_shares_service_code_path():
    snapshot = build_snapshot(CHECKPOINT)
    direct = run_prediction(snapshot, CLEAR_PNG.read_bytes())
    assert direct["pollutants"] == GOLDEN["predict_clear"]["pollutants"]
