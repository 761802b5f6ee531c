"""Stage-1 supervised tuning: negative log-likelihood on teacher targets.

The teacher labels each sample with the cheapest thinking mode whose
observation still reaches the sample's signal (easy -> quick response,
medium -> semantic analysis, hard -> prospective simulation) and with the
recorded ground-truth verdict. The loss conditions on the features as masked
by the target mode, so each answer head only ever trains on observations of
its own depth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from . import policy
from .agent import greedy_action
from .environment import SynthSample, cheapest_sufficient_mode, observe
from .grammar import Label, ThinkingMode
from .policy import PolicyGradient, PolicyParams, StructuredAction
from ._validation import ensure_rng


@dataclass(frozen=True)
class SftExample:
    """(sample, cheapest sufficient mode, ground-truth verdict) triple."""

    sample: SynthSample
    target_mode: ThinkingMode
    target_answer: Label


@dataclass
class SftConfig:
    """Plain gradient descent schedule for the supervised stage.

    The epoch count and batch size follow the reference training recipe; the
    learning rate is scaled up for this closed-form linear policy.
    """

    epochs: int = 3
    batch_size: int = 8
    learning_rate: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be nonnegative, got {self.learning_rate}")


class TrainingDiverged(RuntimeError):
    """Raised when a training loss stops being finite.

    ``params`` holds the last parameters that produced a finite loss.
    """

    def __init__(self, message: str, params: PolicyParams, history: list):
        super().__init__(message)
        self.params = params
        self.history = history


def make_teacher_dataset(samples: list[SynthSample]) -> list[SftExample]:
    """Teacher-label samples with cheapest sufficient mode and true verdict."""
    return [
        SftExample(
            sample=sample,
            target_mode=cheapest_sufficient_mode(sample.difficulty),
            target_answer=sample.truth,
        )
        for sample in samples
    ]


def sft_loss(
    params: PolicyParams, batch: list[SftExample]
) -> tuple[float, PolicyGradient]:
    """Mean negative log-likelihood of the targets and its exact gradient.

    Each example is scored as ``-log p(target_mode, target_answer | phi)``
    with ``phi`` the features masked by the target mode.
    """
    if not batch:
        raise ValueError("sft_loss needs a nonempty batch")
    loss = 0.0
    dW = np.zeros_like(params.W)
    dU = np.zeros_like(params.U)
    for example in batch:
        phi = observe(example.sample, example.target_mode)
        action = StructuredAction(example.target_mode, example.target_answer)
        loss -= policy.log_prob(params, phi, action)
        grad = policy.grad_log_prob(params, phi, action)
        dW -= grad.W
        dU -= grad.U
    n = len(batch)
    return loss / n, PolicyGradient(W=dW / n, U=dU / n)


def sft_train(
    params: PolicyParams,
    examples: list[SftExample],
    config: SftConfig,
) -> tuple[PolicyParams, list[float]]:
    """Run plain gradient descent over the teacher dataset.

    Returns the trained parameters (the input is left untouched) and the
    per-epoch mean loss curve. Shuffling is seeded, so the run is
    deterministic. Raises :class:`TrainingDiverged` if the loss leaves the
    finite range.
    """
    config.validate()
    if not examples:
        raise ValueError("sft_train needs a nonempty dataset")
    params = params.copy()
    rng = ensure_rng(config.seed)
    curve: list[float] = []
    for _ in range(config.epochs):
        order = rng.permutation(len(examples))
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[start : start + config.batch_size]]
            loss, grad = sft_loss(params, batch)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"supervised loss became non-finite ({loss}) at epoch {len(curve)}",
                    params=params,
                    history=curve,
                )
            last_good = params.copy()
            params.W -= config.learning_rate * grad.W
            params.U -= config.learning_rate * grad.U
            if not (np.all(np.isfinite(params.W)) and np.all(np.isfinite(params.U))):
                raise TrainingDiverged(
                    f"parameters became non-finite at epoch {len(curve)}",
                    params=last_good,
                    history=curve,
                )
            epoch_loss += loss * len(batch)
        curve.append(epoch_loss / len(examples))
    return params, curve


class SupervisedTuner(BaseEstimator):
    """Estimator wrapper around :func:`sft_train`.

    ``fit`` consumes :class:`SftExample` sequences (see
    :func:`make_teacher_dataset`); the fitted policy lands in ``policy_``
    and the per-epoch loss curve in ``loss_curve_``.
    """

    def __init__(
        self,
        epochs: int = 3,
        batch_size: int = 8,
        learning_rate: float = 0.1,
        seed: int = 0,
        feature_dim: int = policy.DEFAULT_FEATURE_DIM,
    ):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.feature_dim = feature_dim

    def _config(self) -> SftConfig:
        return SftConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )

    def fit(self, X: list[SftExample], y=None) -> "SupervisedTuner":
        init = PolicyParams.zeros(self.feature_dim)
        self.policy_, self.loss_curve_ = sft_train(init, list(X), self._config())
        return self

    def predict(self, samples: list[SynthSample]) -> list[Label]:
        """Greedy verdicts for raw samples."""
        return [greedy_action(self.policy_, s).answer for s in samples]

    def predict_mode(self, samples: list[SynthSample]) -> list[ThinkingMode]:
        """Greedy thinking-mode choices for raw samples."""
        return [greedy_action(self.policy_, s).mode for s in samples]
