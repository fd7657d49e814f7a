"""Dataset ingestion, label scaling, AQI classes, and a synthetic haze generator.

Images are H x W x 3 float arrays in [0,1] (8-bit channels divided by 255).
Labels travel as PollutantVector: PM2.5 and PM10 are the primary targets,
SO2 / O3 / NO2 / CO / AQI the remaining five.
"""

from __future__ import annotations

import csv
import enum
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

POLLUTANT_NAMES = ("pm25", "pm10", "so2", "o3", "no2", "co", "aqi")
POLLUTANT_UNITS = {
    "pm25": "ug/m3",
    "pm10": "ug/m3",
    "so2": "ug/m3",
    "o3": "ug/m3",
    "no2": "ug/m3",
    "co": "mg/m3",
    "aqi": "index",
}
PRIMARY_COUNT = 2  # pm25, pm10
SECONDARY_COUNT = 5  # so2, o3, no2, co, aqi
MANIFEST_HEADER = ["path"] + list(POLLUTANT_NAMES)


class DatasetError(ValueError):
    """Raised for unreadable files, malformed manifests, or degenerate labels."""


@dataclass(frozen=True)
class PollutantVector:
    """Seven named pollutant readings; all values are non-negative."""

    pm25: float
    pm10: float
    so2: float
    o3: float
    no2: float
    co: float
    aqi: float

    def __post_init__(self):
        for name in POLLUTANT_NAMES:
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise DatasetError(f"pollutant {name} must be finite and >= 0, got {value}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in POLLUTANT_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, values) -> "PollutantVector":
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (7,):
            raise DatasetError(f"expected 7 pollutant values, got shape {values.shape}")
        return cls(*(float(v) for v in values))

    def primary(self) -> np.ndarray:
        return self.as_array()[:PRIMARY_COUNT]

    def secondary(self) -> np.ndarray:
        return self.as_array()[PRIMARY_COUNT:]


@dataclass
class LabeledSample:
    """An image tensor paired with its pollutant label."""

    image: np.ndarray
    label: PollutantVector
    source: str = ""


class AqiClass(enum.IntEnum):
    """Six totally ordered air-quality classes keyed on PM2.5."""

    GOOD = 0
    MODERATE = 1
    UNHEALTHY_SENSITIVE = 2
    UNHEALTHY = 3
    VERY_UNHEALTHY = 4
    SEVERE = 5

    @property
    def token(self) -> str:
        return _CLASS_TOKENS[self.value]

    @classmethod
    def from_token(cls, token: str) -> "AqiClass":
        try:
            return cls(_CLASS_TOKENS.index(token))
        except ValueError:
            raise DatasetError(f"unknown AQI class token {token!r}") from None


_CLASS_TOKENS = (
    "good",
    "moderate",
    "unhealthy-sensitive",
    "unhealthy",
    "very-unhealthy",
    "severe",
)


@dataclass(frozen=True)
class AqiBreakpoints:
    """Upper PM2.5 bound and AQI index bound per class, lowest band first."""

    maxima: tuple  # PM2.5 upper bound per class; last entry caps the index scale
    index_maxima: tuple

    def __post_init__(self):
        if len(self.maxima) != len(AqiClass) or len(self.index_maxima) != len(AqiClass):
            raise DatasetError("breakpoint table must define exactly 6 classes")
        if list(self.maxima) != sorted(self.maxima):
            raise DatasetError("breakpoint maxima must be increasing")


def load_breakpoints(path=None) -> AqiBreakpoints:
    """Load a class-band table; defaults to the shipped EPA-style bands."""
    if path is None:
        raw = resources.files("healthcam.data").joinpath("aqi_breakpoints.json").read_text()
    else:
        raw = Path(path).read_text()
    doc = json.loads(raw)
    classes = doc["classes"]
    if [c["name"] for c in classes] != list(_CLASS_TOKENS):
        raise DatasetError("breakpoint table must list the 6 classes in severity order")
    return AqiBreakpoints(
        maxima=tuple(float(c["max"]) for c in classes),
        index_maxima=tuple(float(c["index_max"]) for c in classes),
    )


DEFAULT_BREAKPOINTS = load_breakpoints()


def classify_aqi(pm25: float, table: AqiBreakpoints = DEFAULT_BREAKPOINTS) -> AqiClass:
    """Class for a PM2.5 level; boundary values belong to the lower class."""
    if not np.isfinite(pm25) or pm25 < 0:
        raise DatasetError(f"pm25 must be finite and >= 0, got {pm25}")
    for cls_value, upper in enumerate(table.maxima):
        if pm25 <= upper:
            return AqiClass(cls_value)
    return AqiClass.SEVERE


def aqi_index(pm25: float, table: AqiBreakpoints = DEFAULT_BREAKPOINTS) -> float:
    """Piecewise-linear AQI index for a PM2.5 level (continuous, unrounded)."""
    if not np.isfinite(pm25) or pm25 < 0:
        raise DatasetError(f"pm25 must be finite and >= 0, got {pm25}")
    lo_c, lo_i = 0.0, 0.0
    for upper, index_upper in zip(table.maxima, table.index_maxima):
        if pm25 <= upper:
            return lo_i + (pm25 - lo_c) * (index_upper - lo_i) / (upper - lo_c)
        lo_c, lo_i = upper, index_upper
    return float(table.index_maxima[-1])


# ---------------------------------------------------------------------------
# label scaling


class LabelScaler:
    """Min-max scaler fit on training labels only; exact inverse transform.

    Out-of-range values are deliberately not clamped so that scale/unscale
    stays an exact affine bijection on test data.
    """

    def __init__(self, mins: np.ndarray, maxs: np.ndarray):
        self.mins = np.asarray(mins, dtype=np.float64)
        self.maxs = np.asarray(maxs, dtype=np.float64)
        if self.mins.shape != (7,) or self.maxs.shape != (7,):
            raise DatasetError("scaler needs one (min, max) pair per pollutant")
        for name, lo, hi in zip(POLLUTANT_NAMES, self.mins, self.maxs):
            if not hi > lo:
                raise DatasetError(
                    f"degenerate parameter {name}: max ({hi}) must exceed min ({lo})"
                )

    @classmethod
    def fit(cls, labels) -> "LabelScaler":
        arr = np.stack([lab.as_array() for lab in labels])
        return cls(arr.min(axis=0), arr.max(axis=0))

    def scale(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mins) / (self.maxs - self.mins)

    def unscale(self, values) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * (self.maxs - self.mins) + self.mins

    def unscale_vector(self, values) -> PollutantVector:
        return PollutantVector.from_array(np.maximum(self.unscale(values), 0.0))

    def to_json(self) -> dict:
        return {
            name: {"min": float(lo), "max": float(hi)}
            for name, lo, hi in zip(POLLUTANT_NAMES, self.mins, self.maxs)
        }

    @classmethod
    def from_json(cls, doc: dict) -> "LabelScaler":
        try:
            mins = [doc[name]["min"] for name in POLLUTANT_NAMES]
            maxs = [doc[name]["max"] for name in POLLUTANT_NAMES]
        except KeyError as exc:
            raise DatasetError(f"scaler document missing entry: {exc}") from None
        return cls(np.array(mins), np.array(maxs))


# ---------------------------------------------------------------------------
# image loading


def resize_nearest(image: np.ndarray, height: int, width: int) -> np.ndarray:
    """Deterministic nearest-neighbor resize (floor index mapping)."""
    in_h, in_w = image.shape[:2]
    rows = (np.arange(height) * in_h) // height
    cols = (np.arange(width) * in_w) // width
    return image[rows][:, cols]


def load_image_raw(path) -> np.ndarray:
    """Decode an 8-bit RGB image to an (H, W, 3) uint8 array."""
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode != "RGB":
                img = img.convert("RGB")
            return np.asarray(img, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc


def load_image(path, target_size: int | None = None) -> np.ndarray:
    """Decode an 8-bit RGB image to an (H, W, 3) float32 array in [0, 1].

    target_size resizes (nearest-neighbor) to a square model input.
    """
    pixels = load_image_raw(path)
    if target_size is not None and pixels.shape[:2] != (target_size, target_size):
        pixels = resize_nearest(pixels, target_size, target_size)
    return pixels.astype(np.float32) / 255.0


# ---------------------------------------------------------------------------
# manifests


@dataclass
class ManifestRecord:
    path: Path
    label: PollutantVector


@dataclass
class DatasetManifest:
    records: list
    source: str = "real"  # "real" | "synthetic"

    def __len__(self) -> int:
        return len(self.records)

    def labels(self) -> list:
        return [rec.label for rec in self.records]


def write_manifest(records, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for rec in records:
            rel = rec.path
            if Path(rel).is_absolute():
                try:
                    rel = Path(rel).relative_to(path.parent)
                except ValueError:
                    pass
            writer.writerow(
                [str(rel)] + [f"{getattr(rec.label, n):.6f}" for n in POLLUTANT_NAMES]
            )


def load_manifest(path, source: str = "real") -> DatasetManifest:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"manifest not found: {path}")
    records = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != MANIFEST_HEADER:
            raise DatasetError(
                f"manifest {path} must have header {','.join(MANIFEST_HEADER)}, "
                f"got {reader.fieldnames}"
            )
        for lineno, row in enumerate(reader, start=2):
            try:
                label = PollutantVector(**{n: float(row[n]) for n in POLLUTANT_NAMES})
            except (TypeError, ValueError) as exc:
                raise DatasetError(f"{path}:{lineno}: bad label row: {exc}") from exc
            img_path = Path(row["path"])
            if not img_path.is_absolute():
                img_path = path.parent / img_path
            records.append(ManifestRecord(path=img_path, label=label))
    return DatasetManifest(records=records, source=source)


def load_samples(manifest: DatasetManifest, target_size: int | None = None) -> list:
    return [
        LabeledSample(
            image=load_image(rec.path, target_size=target_size),
            label=rec.label,
            source=str(rec.path),
        )
        for rec in manifest.records
    ]


def split_train_test(manifest: DatasetManifest, fraction: float = 0.8, seed: int = 0):
    """Seeded deterministic partition into (train, test) manifests."""
    if not 0.0 < fraction < 1.0:
        raise DatasetError(f"fraction must be in (0, 1), got {fraction}")
    n = len(manifest.records)
    n_train = int(n * fraction)
    if n_train == 0 or n_train == n:
        raise DatasetError(f"split of {n} records at {fraction} leaves one side empty")
    order = np.random.default_rng(seed).permutation(n)
    train = [manifest.records[i] for i in order[:n_train]]
    test = [manifest.records[i] for i in order[n_train:]]
    return (
        DatasetManifest(records=train, source=manifest.source),
        DatasetManifest(records=test, source=manifest.source),
    )


# ---------------------------------------------------------------------------
# synthetic haze scenes


HAZE_COLOR = np.array([0.72, 0.72, 0.74])


def render_hazy_scene(rng: np.random.Generator, size: int, alpha: float) -> np.ndarray:
    """Procedural outdoor-like scene blended with uniform gray haze.

    A sky gradient meets a textured ground band with a few building
    silhouettes; haze opacity alpha in [0,1] alpha-blends the whole frame
    toward flat gray, so image contrast falls monotonically with alpha.
    The sky-to-ground direction runs along the second array axis, so
    first-axis splits and mirrors (the augmentation ops) keep both scene
    bands in every derived image. Returns a (size, size, 3) uint8 array.
    """
    h = w = size
    scene = np.empty((h, w, 3), dtype=np.float64)

    horizon = int(h * rng.uniform(0.45, 0.65))
    horizon = min(max(horizon, 2), h - 2)
    sky_top = np.clip(np.array([0.30, 0.50, 0.85]) + rng.uniform(-0.05, 0.05, 3), 0, 1)
    sky_bottom = np.clip(np.array([0.70, 0.78, 0.90]) + rng.uniform(-0.05, 0.05, 3), 0, 1)
    t = np.linspace(0.0, 1.0, horizon)[:, None, None]
    scene[:horizon] = (1.0 - t) * sky_top + t * sky_bottom

    ground = np.clip(np.array([0.34, 0.32, 0.22]) + rng.uniform(-0.05, 0.05, 3), 0, 1)
    texture = rng.uniform(-0.08, 0.08, size=(h - horizon, w, 1))
    scene[horizon:] = np.clip(ground + texture, 0, 1)

    for _ in range(int(rng.integers(2, 7))):
        bw = int(rng.integers(max(2, w // 16), max(3, w // 4)))
        bh = int(rng.integers(max(2, h // 12), max(3, h // 3)))
        x0 = int(rng.integers(0, max(1, w - bw)))
        top = max(0, horizon - bh)
        shade = rng.uniform(0.15, 0.45)
        scene[top:horizon, x0 : x0 + bw] = shade + rng.uniform(-0.02, 0.02, 3)

    scene = scene.transpose(1, 0, 2)  # sky band along the second axis
    hazy = (1.0 - alpha) * scene + alpha * HAZE_COLOR
    return np.clip(np.rint(hazy * 255.0), 0, 255).astype(np.uint8)


def synthetic_label(rng: np.random.Generator, alpha: float) -> PollutantVector:
    """Labels derived from haze opacity by fixed monotone maps plus small noise.

    The five secondary parameters are smooth functions of (pm25, pm10), so
    predicting them from the two primaries is possible by construction.
    """
    pm25 = 250.0 * alpha
    pm10 = 400.0 * alpha + rng.uniform(0.0, 20.0)
    so2 = 4.0 + 0.10 * pm25 + 0.02 * pm10 + rng.uniform(0.0, 2.0)
    o3 = 15.0 + 0.12 * pm10 + rng.uniform(0.0, 2.0)
    no2 = 6.0 + 0.15 * pm25 + 0.05 * pm10 + rng.uniform(0.0, 2.0)
    co = 0.3 + 0.004 * pm25 + 0.002 * pm10 + rng.uniform(0.0, 0.1)
    aqi = aqi_index(pm25) + rng.uniform(0.0, 5.0)
    return PollutantVector(pm25=pm25, pm10=pm10, so2=so2, o3=o3, no2=no2, co=co, aqi=aqi)


def generate_synthetic(count: int, seed: int, image_size: int = 64, out_dir=None):
    """Write `count` seeded synthetic images + manifest.csv under out_dir.

    Byte-identical output for identical arguments. Returns the manifest;
    when out_dir is None, nothing touches disk and record paths are tags.
    """
    if count < 1:
        raise DatasetError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    records = []
    images = []
    for i in range(count):
        alpha = float(rng.uniform(0.0, 1.0))
        pixels = render_hazy_scene(rng, image_size, alpha)
        label = synthetic_label(rng, alpha)
        # round to the manifest's 6-decimal precision so in-memory labels
        # and reloaded labels agree exactly
        label = PollutantVector(
            **{n: float(f"{getattr(label, n):.6f}") for n in POLLUTANT_NAMES}
        )
        images.append(pixels)
        records.append(ManifestRecord(path=Path("images") / f"synth_{i:05d}.png", label=label))

    if out_dir is not None:
        out_dir = Path(out_dir)
        (out_dir / "images").mkdir(parents=True, exist_ok=True)
        for rec, pixels in zip(records, images):
            Image.fromarray(pixels, mode="RGB").save(out_dir / rec.path)
        resolved = [ManifestRecord(path=out_dir / rec.path, label=rec.label) for rec in records]
        write_manifest(records, out_dir / "manifest.csv")
        return DatasetManifest(records=resolved, source="synthetic")

    manifest = DatasetManifest(records=records, source="synthetic")
    manifest.images = images  # in-memory variant for tests and desk-scale runs
    return manifest


def synthetic_samples(count: int, seed: int, image_size: int = 64) -> list:
    """In-memory synthetic dataset: list of LabeledSample, no disk I/O."""
    manifest = generate_synthetic(count, seed, image_size=image_size, out_dir=None)
    return [
        LabeledSample(
            image=pixels.astype(np.float32) / 255.0,
            label=rec.label,
            source=str(rec.path),
        )
        for rec, pixels in zip(manifest.records, manifest.images)
    ]
