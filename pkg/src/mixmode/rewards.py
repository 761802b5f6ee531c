"""Scalar rewards for structured detection responses.

Two binary components: a detection accuracy reward (parsed verdict equals the
ground truth) and a format reward (well-formed response in a recognizable
thinking mode). An optional length penalty, off by default, charges
``length_coeff`` per token for studying token-usage behavior; it is an
extension knob, not part of the core reward design.
"""

from __future__ import annotations

from dataclasses import dataclass

from .grammar import Label, ParsedResponse


@dataclass(frozen=True)
class RewardBreakdown:
    """Per-response reward components; ``total`` is their signed sum."""

    accuracy: float
    format: float
    length_penalty: float
    total: float


def score(
    parsed: ParsedResponse,
    truth: Label,
    length_coeff: float = 0.0,
) -> RewardBreakdown:
    """Score one parsed response against the ground-truth label.

    The accuracy reward requires a parseable answer: a correct verdict buried
    in malformed text scores 0. The format reward requires both
    well-formedness and a classifiable mode. Deterministic in its inputs.
    """
    if length_coeff < 0:
        raise ValueError(f"length_coeff must be nonnegative, got {length_coeff}")
    accuracy = 1.0 if parsed.answer is truth else 0.0
    fmt = 1.0 if parsed.well_formed and parsed.mode is not None else 0.0
    penalty = length_coeff * parsed.token_count
    return RewardBreakdown(
        accuracy=accuracy,
        format=fmt,
        length_penalty=penalty,
        total=accuracy + fmt - penalty,
    )
