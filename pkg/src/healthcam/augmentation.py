"""Split/mirror data augmentation with label preservation and seeded shuffling.

Images are indexed (first axis, second axis, channels). Splitting divides
the first axis at its midpoint; mirror flips the first axis; the optional
horizontal variant flips the second axis. Every derived image keeps the
label of its source sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import LabeledSample, classify_aqi


class AugmentationError(ValueError):
    pass


@dataclass(frozen=True)
class SplitPair:
    """The two halves of an image split across its first axis."""

    left: np.ndarray
    right: np.ndarray


@dataclass(frozen=True)
class AugmentationPolicy:
    enable_vertical: bool = True
    enable_horizontal: bool = False
    keep_original: bool = False
    shuffle_seed: int = 0

    def __post_init__(self):
        if not (self.enable_vertical or self.enable_horizontal or self.keep_original):
            raise AugmentationError("policy would produce an empty output set")


# named policies accepted by the CLI and the experiment arms
POLICY_NAMES = {
    "none": AugmentationPolicy(enable_vertical=False, enable_horizontal=False, keep_original=True),
    "vertical": AugmentationPolicy(enable_vertical=True),
    "vertical+horizontal": AugmentationPolicy(enable_vertical=True, enable_horizontal=True),
    "vertical+original": AugmentationPolicy(enable_vertical=True, keep_original=True),
}


def named_policy(name: str, shuffle_seed: int = 0) -> AugmentationPolicy:
    try:
        base = POLICY_NAMES[name]
    except KeyError:
        raise AugmentationError(
            f"unknown policy {name!r}; expected one of {sorted(POLICY_NAMES)}"
        ) from None
    return AugmentationPolicy(
        enable_vertical=base.enable_vertical,
        enable_horizontal=base.enable_horizontal,
        keep_original=base.keep_original,
        shuffle_seed=shuffle_seed,
    )


def split_vertical(image: np.ndarray) -> SplitPair:
    """Divide at the midpoint of the first axis: ceil(x/2) and floor(x/2) rows."""
    image = np.asarray(image)
    x = image.shape[0]
    if x < 2:
        raise AugmentationError(f"cannot split an image with first-axis extent {x}")
    mid = (x + 1) // 2
    return SplitPair(left=image[:mid].copy(), right=image[mid:].copy())


def mirror(image: np.ndarray) -> np.ndarray:
    """Reflect along the first axis: out[i, j] = in[x-1-i, j]. Involution."""
    return np.asarray(image)[::-1].copy()


def reflect_horizontal(image: np.ndarray) -> np.ndarray:
    """Reflect along the second axis: out[i, j] = in[i, y-1-j]. Involution."""
    return np.asarray(image)[:, ::-1].copy()


def _variants(sample: LabeledSample, policy: AugmentationPolicy):
    out = []
    if policy.keep_original:
        out.append(("orig", sample.image))
    if policy.enable_vertical:
        pair = split_vertical(sample.image)
        out.extend(
            [
                ("left", pair.left),
                ("right", pair.right),
                ("left-mirror", mirror(pair.left)),
                ("right-mirror", mirror(pair.right)),
            ]
        )
    if policy.enable_horizontal:
        if out:
            out.extend([(f"{tag}-hflip", reflect_horizontal(img)) for tag, img in out])
        else:
            out.append(("hflip", reflect_horizontal(sample.image)))
    return out


def augment_dataset(samples, policy: AugmentationPolicy) -> list:
    """Expand samples per policy; vertical-only yields exactly 4 per input.

    Each derived image carries its source label verbatim. Outputs are
    grouped by AQI class and then deterministically shuffled by the
    policy seed, so equal seeds give identical order.
    """
    samples = list(samples)
    if not samples:
        raise AugmentationError("augment_dataset needs a nonempty input set")

    derived = []
    for sample in samples:
        for tag, img in _variants(sample, policy):
            derived.append(
                LabeledSample(image=img, label=sample.label, source=f"{sample.source}#{tag}")
            )

    # group images of the same AQI class together before shuffling
    derived.sort(key=lambda s: int(classify_aqi(s.label.pm25)))
    order = np.random.default_rng(policy.shuffle_seed).permutation(len(derived))
    return [derived[i] for i in order]
