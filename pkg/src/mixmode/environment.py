"""Synthetic detection environment with difficulty-tiered observability.

Each sample carries a 9-dim feature vector made of three blocks of three,
one block per difficulty tier (easy -> block 1, medium -> block 2,
hard -> block 3). A block holds ``[tier marker, signal, distractor]``:

* the marker is nonzero exactly when the sample's difficulty matches the
  block, so a linear head can read the tier off the features. The easy
  tier's marker is deliberately faint (``MARKER_SCALES``): complexity cues
  announce themselves, simplicity has to be inferred, so a partially trained
  router errs toward thinking too deeply rather than too shallowly;
* the signal coordinate of the matching block is ``+/-SIGNAL_STRENGTH`` for
  fake/real plus Gaussian feature noise, and pure noise elsewhere;
* the distractor is always standard normal.

Deeper thinking modes observe more blocks (:func:`observe`), so the label is
recoverable only when the chosen mode reaches the sample's tier: that is what
makes mode choice consequential. Labels are flipped with probability
``label_noise`` after the features are built, which caps achievable accuracy
at roughly ``1 - label_noise``.

Generation is pure given (config, seed). Datasets persist as JSON lines: a
metadata header record followed by one record per sample with keys
``id``, ``difficulty``, ``truth``, ``features``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .grammar import Label, ThinkingMode
from ._validation import ensure_rng

BLOCK_SIZE = 3
N_BLOCKS = 3
FEATURE_DIM = BLOCK_SIZE * N_BLOCKS
SIGNAL_STRENGTH = 2.0

DATASET_KIND = "synthetic-detection-dataset"
DATASET_VERSION = 1


class Difficulty(Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"


DIFFICULTIES: tuple[Difficulty, ...] = (
    Difficulty.EASY,
    Difficulty.MEDIUM,
    Difficulty.HARD,
)

# Block index whose signal determines the label for each tier.
SIGNAL_BLOCK = {
    Difficulty.EASY: 0,
    Difficulty.MEDIUM: 1,
    Difficulty.HARD: 2,
}

# Marker magnitude per tier; the faint easy marker keeps simplicity the
# harder routing call (see the module docstring).
MARKER_SCALES = {
    Difficulty.EASY: 0.35,
    Difficulty.MEDIUM: 1.0,
    Difficulty.HARD: 1.0,
}

# How many leading blocks each mode observes.
VISIBLE_BLOCKS = {
    ThinkingMode.QUICK_RESPONSE: 1,
    ThinkingMode.SEMANTIC_ANALYSIS: 2,
    ThinkingMode.PROSPECTIVE_SIMULATION: 3,
}


@dataclass(frozen=True)
class SynthSample:
    """One synthetic image-text stand-in."""

    id: int
    features: np.ndarray
    difficulty: Difficulty
    truth: Label


@dataclass
class EnvConfig:
    """Sampling distribution of the environment."""

    mixture: tuple[float, float, float] = (0.5, 0.3, 0.2)
    label_noise: float = 0.05
    feature_noise: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        weights = np.asarray(self.mixture, dtype=np.float64)
        if weights.shape != (3,) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError(f"mixture must be 3 nonnegative weights summing to 1, got {self.mixture}")
        if not 0.0 <= self.label_noise < 0.5:
            raise ValueError(f"label_noise must lie in [0, 0.5), got {self.label_noise}")
        if self.feature_noise < 0:
            raise ValueError(f"feature_noise must be nonnegative, got {self.feature_noise}")


def cheapest_sufficient_mode(difficulty: Difficulty) -> ThinkingMode:
    """The shallowest mode whose observation still covers the signal block."""
    return {
        Difficulty.EASY: ThinkingMode.QUICK_RESPONSE,
        Difficulty.MEDIUM: ThinkingMode.SEMANTIC_ANALYSIS,
        Difficulty.HARD: ThinkingMode.PROSPECTIVE_SIMULATION,
    }[difficulty]


def observe(sample: SynthSample, mode: ThinkingMode) -> np.ndarray:
    """Feature vector as seen under ``mode``: unseen blocks zeroed out."""
    visible = VISIBLE_BLOCKS[mode]
    masked = np.zeros(FEATURE_DIM)
    masked[: visible * BLOCK_SIZE] = sample.features[: visible * BLOCK_SIZE]
    return masked


def _build_features(
    difficulty: Difficulty,
    signed_label: float,
    feature_noise: float,
    rng: np.random.Generator,
) -> np.ndarray:
    features = rng.standard_normal(FEATURE_DIM)
    block = SIGNAL_BLOCK[difficulty]
    for b in range(N_BLOCKS):
        features[b * BLOCK_SIZE] = MARKER_SCALES[difficulty] if b == block else 0.0
    features[block * BLOCK_SIZE + 1] = (
        signed_label * SIGNAL_STRENGTH + feature_noise * rng.standard_normal()
    )
    return features


def generate(config: EnvConfig, n: int) -> list[SynthSample]:
    """Draw ``n`` i.i.d. samples; deterministic under the config seed."""
    config.validate()
    if n < 1:
        raise ValueError(f"need at least one sample, got n={n}")
    rng = ensure_rng(config.seed)
    tiers = rng.choice(N_BLOCKS, size=n, p=np.asarray(config.mixture, dtype=np.float64))
    samples = []
    for i in range(n):
        difficulty = DIFFICULTIES[tiers[i]]
        clean = Label.FAKE if rng.random() < 0.5 else Label.REAL
        signed = 1.0 if clean is Label.FAKE else -1.0
        features = _build_features(difficulty, signed, config.feature_noise, rng)
        truth = clean
        if rng.random() < config.label_noise:
            truth = Label.REAL if clean is Label.FAKE else Label.FAKE
        features.setflags(write=False)
        samples.append(SynthSample(id=i, features=features, difficulty=difficulty, truth=truth))
    return samples


def write_dataset(path: str | Path, samples: list[SynthSample], metadata: dict | None = None) -> None:
    """Persist samples as JSON lines with a leading metadata record."""
    header = {"kind": DATASET_KIND, "version": DATASET_VERSION, "n": len(samples)}
    if metadata:
        header.update(metadata)
    lines = [json.dumps(header, sort_keys=True)]
    for sample in samples:
        lines.append(
            json.dumps(
                {
                    "id": sample.id,
                    "difficulty": sample.difficulty.value,
                    "truth": sample.truth.value,
                    "features": [float(v) for v in sample.features],
                },
                sort_keys=True,
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_dataset(path: str | Path) -> tuple[list[SynthSample], dict]:
    """Load a dataset written by :func:`write_dataset`."""
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path} is empty")
    header = json.loads(lines[0])
    if header.get("kind") != DATASET_KIND:
        raise ValueError(f"{path} is not a {DATASET_KIND} file")
    samples = []
    for line in lines[1:]:
        record = json.loads(line)
        features = np.asarray(record["features"], dtype=np.float64)
        if features.shape != (FEATURE_DIM,):
            raise ValueError(f"record {record.get('id')} has malformed features")
        features.setflags(write=False)
        samples.append(
            SynthSample(
                id=int(record["id"]),
                features=features,
                difficulty=Difficulty(record["difficulty"]),
                truth=Label(record["truth"]),
            )
        )
    if len(samples) != header.get("n", len(samples)):
        raise ValueError(f"{path} header announces {header.get('n')} records, found {len(samples)}")
    return samples, header
