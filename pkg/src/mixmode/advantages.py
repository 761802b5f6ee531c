"""Group-relative advantages over a group of G responses to one sample.

Three estimators:

* sample-level: each response's reward standardized against its group,
  ``(r_i - mean(r)) / std(r)`` with the population standard deviation;
* mode-level: per-mode average rewards standardized against each other, the
  normalized value broadcast to every response of that mode;
* mixed: the elementwise sum of the two.

Zero-variance groups (std below ``STD_GUARD``) yield all-zero advantages
instead of dividing by a vanishing denominator. All computations are pure;
independent groups may be processed concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .grammar import ParsedResponse, ThinkingMode
from ._validation import check_equal_lengths

if TYPE_CHECKING:
    from .environment import SynthSample
    from .policy import StructuredAction

# Below this population-std threshold a group carries no usable signal.
STD_GUARD = 1e-8


@dataclass
class GroupRollout:
    """G responses drawn from the old policy for a single sample, with
    everything the surrogate objective needs recorded at rollout time."""

    sample: "SynthSample"
    actions: list["StructuredAction"]
    responses: list[ParsedResponse]
    rewards: np.ndarray
    modes: list[ThinkingMode | None]
    old_logprobs: np.ndarray
    ref_logprobs: np.ndarray

    def __post_init__(self) -> None:
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.old_logprobs = np.asarray(self.old_logprobs, dtype=np.float64)
        self.ref_logprobs = np.asarray(self.ref_logprobs, dtype=np.float64)
        size = check_equal_lengths(
            actions=self.actions,
            responses=self.responses,
            rewards=self.rewards,
            modes=self.modes,
            old_logprobs=self.old_logprobs,
            ref_logprobs=self.ref_logprobs,
        )
        if size < 2:
            raise ValueError(f"a rollout group needs at least 2 responses, got {size}")

    @property
    def size(self) -> int:
        return len(self.actions)

    @property
    def sample_id(self) -> int:
        return self.sample.id


@dataclass(frozen=True)
class AdvantageVector:
    """Per-response advantages; ``mixed`` is exactly the elementwise sum of
    the other two."""

    sample_level: np.ndarray
    mode_level: np.ndarray
    mixed: np.ndarray


@dataclass(frozen=True)
class ModeStats:
    """Average reward per thinking mode present in a group.

    Unclassifiable responses are excluded, so ``n`` counts distinct
    recognized modes only.
    """

    averages: dict[ThinkingMode, float] = field(default_factory=dict)

    @property
    def n(self) -> int:
        return len(self.averages)


def sample_advantage(rewards: Sequence[float] | np.ndarray) -> np.ndarray:
    """Standardize rewards within the group (population std).

    Returns all zeros when the group's reward spread is below the guard.
    Shift- and positive-scale-invariant otherwise.
    """
    values = np.asarray(rewards, dtype=np.float64)
    if values.ndim != 1 or values.size < 2:
        raise ValueError(
            f"sample-level normalization needs a flat group of >= 2 rewards, got shape {values.shape}"
        )
    std = values.std()
    if std < STD_GUARD:
        return np.zeros_like(values)
    return (values - values.mean()) / std


def mode_stats(
    rewards: Sequence[float] | np.ndarray,
    modes: Sequence[ThinkingMode | None],
) -> ModeStats:
    """Average reward for each recognized mode present in the group."""
    values = np.asarray(rewards, dtype=np.float64)
    check_equal_lengths(rewards=values, modes=modes)
    totals: dict[ThinkingMode, list[float]] = {}
    for reward, mode in zip(values, modes):
        if mode is None:
            continue
        totals.setdefault(mode, []).append(float(reward))
    return ModeStats({mode: float(np.mean(vals)) for mode, vals in totals.items()})


def mode_advantage(
    rewards: Sequence[float] | np.ndarray,
    modes: Sequence[ThinkingMode | None],
) -> np.ndarray:
    """Standardize the per-mode average rewards and broadcast per response.

    The n mode averages are normalized by their own population mean/std; each
    response receives its mode's normalized value. Groups with a single
    recognized mode (or equal mode averages) yield zeros, and unclassifiable
    responses always receive 0.
    """
    values = np.asarray(rewards, dtype=np.float64)
    size = check_equal_lengths(rewards=values, modes=modes)
    if size < 2:
        raise ValueError(f"mode-level normalization needs >= 2 responses, got {size}")
    stats = mode_stats(values, modes)
    out = np.zeros(size, dtype=np.float64)
    if stats.n < 2:
        return out
    averages = np.array(list(stats.averages.values()))
    std = averages.std()
    if std < STD_GUARD:
        return out
    mean = averages.mean()
    normalized = {mode: (avg - mean) / std for mode, avg in stats.averages.items()}
    for i, mode in enumerate(modes):
        if mode is not None:
            out[i] = normalized[mode]
    return out


def mixed_advantage(group: GroupRollout, vanilla: bool = False) -> AdvantageVector:
    """Mixed advantage for a rollout group: sample-level plus mode-level.

    With ``vanilla=True`` the mode-level term is identically zero, so the
    same code path computes the plain group-relative baseline.
    """
    a_sample = sample_advantage(group.rewards)
    if vanilla:
        a_mode = np.zeros_like(a_sample)
    else:
        a_mode = mode_advantage(group.rewards, group.modes)
    return AdvantageVector(
        sample_level=a_sample,
        mode_level=a_mode,
        mixed=a_sample + a_mode,
    )
