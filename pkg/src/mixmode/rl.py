"""Stage-2 policy optimization: clipped-surrogate updates over group rollouts.

Per batch the loop snapshots the sampling policy, draws a group of responses
per sample, scores them, computes group-relative advantages, and takes one
plain gradient step on

    L = -(1/G) sum_i [ min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i)
                       - beta (rho_hat_i - ln rho_hat_i - 1) ]

with sequence-level ratios ``rho_i = pi_theta(y_i)/pi_old(y_i)`` and
``rho_hat_i = pi_ref(y_i)/pi_theta(y_i)``. The reference policy stays frozen
at the initial (post-supervised) parameters for the whole run. Two advantage
settings share this code path: ``"grpo"`` uses the sample-level advantage
alone, ``"mmpo"`` adds the mode-level advantage on top (mixed-mode policy
optimization).

There are no inner reuse epochs: advantages are computed once per rollout
buffer and each buffer feeds exactly one update, which keeps the ratios near
one. Runs are deterministic under (config, seed, dataset).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from sklearn.base import BaseEstimator

from . import agent, grammar, policy, rewards
from .advantages import AdvantageVector, GroupRollout, mixed_advantage
from .environment import SynthSample, observe
from .grammar import Label, ThinkingMode
from .policy import PolicyGradient, PolicyParams, StructuredAction, kl_from_log_ratio
from .sft import TrainingDiverged
from ._validation import ensure_rng

ALGORITHMS = ("grpo", "mmpo")


@dataclass
class RlConfig:
    """Group rollout and update schedule.

    ``group_size``, ``epochs``, ``dataset_size``, and ``batch_size`` follow
    the reference recipe; ``clip_range`` and ``kl_coeff`` are this package's
    defaults, and ``length_coeff`` is an off-by-default token-cost knob.
    """

    group_size: int = 8
    clip_range: float = 0.2
    kl_coeff: float = 0.04
    epochs: int = 8
    dataset_size: int = 1000
    batch_size: int = 2
    learning_rate: float = 0.03
    algorithm: str = "mmpo"
    length_coeff: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size}")
        if not 0.0 < self.clip_range < 1.0:
            raise ValueError(f"clip_range must lie in (0, 1), got {self.clip_range}")
        if self.kl_coeff < 0:
            raise ValueError(f"kl_coeff must be nonnegative, got {self.kl_coeff}")
        if self.epochs < 1 or self.batch_size < 1 or self.dataset_size < 1:
            raise ValueError("epochs, batch_size, and dataset_size must be positive")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if self.length_coeff < 0:
            raise ValueError(f"length_coeff must be nonnegative, got {self.length_coeff}")


@dataclass(frozen=True)
class StepStats:
    """One optimization step's diagnostics."""

    step: int
    epoch: int
    loss: float
    reward_mean: float
    adv_abs_mean: float
    kl_mean: float
    clip_fraction: float
    mode_counts: dict[str, int] = field(default_factory=dict)
    avg_tokens: float = 0.0

    def to_record(self) -> dict:
        return {
            "step": self.step,
            "epoch": self.epoch,
            "loss": self.loss,
            "reward_mean": self.reward_mean,
            "adv_abs_mean": self.adv_abs_mean,
            "kl_mean": self.kl_mean,
            "clip_fraction": self.clip_fraction,
            "mode_counts": self.mode_counts,
            "avg_tokens": self.avg_tokens,
        }


# The 6 canonical response texts parse to 6 fixed structures; caching keeps
# regex work out of the rollout loop (grammar.parse is pure).
@lru_cache(maxsize=None)
def _parsed_canonical(mode: ThinkingMode, answer: Label) -> grammar.ParsedResponse:
    return grammar.parse(grammar.canonical_response(mode, answer))


def rollout(
    params_old: PolicyParams,
    ref_params: PolicyParams,
    sample: SynthSample,
    group_size: int,
    rng: np.random.Generator | int | None,
    length_coeff: float = 0.0,
) -> GroupRollout:
    """Draw a group of responses from the old policy and score them.

    Each response is rendered, parsed, and scored against the sample's
    truth; old-policy and reference log-probabilities are recorded for the
    surrogate objective. Byte-for-byte reproducible under a seeded generator
    (one uniform draw per response).
    """
    if group_size < 2:
        raise ValueError(f"group_size must be >= 2, got {group_size}")
    rng = ensure_rng(rng)
    old_table = agent.log_prob_table(params_old, sample)
    ref_table = agent.log_prob_table(ref_params, sample)
    probs = np.exp(old_table).ravel()
    cumulative = np.cumsum(probs / probs.sum())

    actions = []
    responses = []
    reward_totals = []
    old_logprobs = []
    ref_logprobs = []
    for _ in range(group_size):
        flat = int(np.searchsorted(cumulative, rng.random(), side="right"))
        flat = min(flat, old_table.size - 1)
        m, a = divmod(flat, policy.N_ANSWERS)
        action = StructuredAction(policy.MODES[m], policy.ANSWERS[a])
        parsed = _parsed_canonical(action.mode, action.answer)
        actions.append(action)
        responses.append(parsed)
        reward_totals.append(rewards.score(parsed, sample.truth, length_coeff).total)
        old_logprobs.append(old_table[m, a])
        ref_logprobs.append(ref_table[m, a])
    return GroupRollout(
        sample=sample,
        actions=actions,
        responses=responses,
        rewards=np.array(reward_totals),
        modes=[parsed.mode for parsed in responses],
        old_logprobs=np.array(old_logprobs),
        ref_logprobs=np.array(ref_logprobs),
    )


def clipped_surrogate(rho: float, advantage: float, clip_range: float) -> float:
    """Per-response surrogate ``min(rho A, clip(rho, 1-eps, 1+eps) A)``."""
    clipped = min(max(rho, 1.0 - clip_range), 1.0 + clip_range)
    return min(rho * advantage, clipped * advantage)


def surrogate_loss(
    params: PolicyParams,
    group: GroupRollout,
    advantages: np.ndarray,
    config: RlConfig,
) -> tuple[float, PolicyGradient]:
    """Clipped surrogate loss with KL penalty for one group, plus gradient.

    Gradient flow follows the active min branch: a response whose ratio sits
    on the saturated side of the clip contributes no policy-gradient term,
    only its KL-penalty gradient. Because a group shares one sample, the
    per-response gradients collapse into a few outer products.
    """
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.shape != (group.size,):
        raise ValueError(f"advantages shape {adv.shape} does not match group size {group.size}")
    table = agent.log_prob_table(params, group.sample)
    p_mode = np.exp(policy.mode_log_probs(params, group.sample.features))

    loss = 0.0
    # Per-response coefficients aggregated by head: the log-prob gradient is
    # (onehot - softmax) x outer the (shared) head input.
    coeff_mode = np.zeros(policy.N_MODES)
    coeff_answer = np.zeros((policy.N_MODES, policy.N_ANSWERS))
    coeff_total = 0.0
    for i in range(group.size):
        m = policy.MODE_INDEX[group.actions[i].mode]
        a_idx = policy.ANSWER_INDEX[group.actions[i].answer]
        lp = table[m, a_idx]
        with np.errstate(over="ignore"):
            rho = float(np.exp(lp - group.old_logprobs[i]))
        if not np.isfinite(rho):
            raise FloatingPointError(
                f"importance ratio is non-finite for response {i} of sample {group.sample_id}"
            )
        a = adv[i]
        surr = clipped_surrogate(rho, a, config.clip_range)
        # min picked the unclipped branch; otherwise rho is saturated and the
        # clipped branch is constant in the parameters.
        active = rho * a <= surr

        log_rho_hat = group.ref_logprobs[i] - lp
        kl = kl_from_log_ratio(log_rho_hat)
        with np.errstate(over="ignore"):
            rho_hat = float(np.exp(log_rho_hat))

        loss += -(surr - config.kl_coeff * kl)
        coeff = (-rho * a if active else 0.0) + config.kl_coeff * (1.0 - rho_hat)
        coeff_mode[m] += coeff
        coeff_answer[m, a_idx] += coeff
        coeff_total += coeff

    g = group.size
    dW = np.outer(coeff_mode - coeff_total * p_mode, group.sample.features)
    dU = np.zeros_like(params.U)
    for m, mode in enumerate(policy.MODES):
        if not coeff_answer[m].any():
            continue
        row_total = coeff_answer[m].sum()
        phi = observe(group.sample, mode)
        p_answer = np.exp(policy.answer_log_probs(params, mode, phi))
        dU[m] = np.outer(coeff_answer[m] - row_total * p_answer, phi)
    return loss / g, PolicyGradient(W=dW / g, U=dU / g)


def _group_kl(group: GroupRollout, current_logprobs: np.ndarray) -> float:
    ratios = group.ref_logprobs - current_logprobs
    return float(np.mean([kl_from_log_ratio(r) for r in ratios]))


def _clip_fraction(group: GroupRollout, current_logprobs: np.ndarray, clip_range: float) -> float:
    with np.errstate(over="ignore"):
        rho = np.exp(current_logprobs - group.old_logprobs)
    outside = (rho < 1.0 - clip_range) | (rho > 1.0 + clip_range)
    return float(np.mean(outside))


def rl_train(
    params_init: PolicyParams,
    samples: list[SynthSample],
    config: RlConfig,
    on_epoch_end=None,
) -> tuple[PolicyParams, list[StepStats]]:
    """Optimize the policy over the sample set per the configured algorithm.

    The reference policy is frozen at ``params_init``. Per batch: snapshot
    the old policy, roll out one group per sample, compute advantages, take
    one gradient step, and emit a stats row. ``on_epoch_end(epoch, params)``
    runs after each epoch, e.g. to write periodic checkpoints. On a
    non-finite loss or parameter the run aborts with
    :class:`TrainingDiverged` carrying the last finite parameters.
    """
    config.validate()
    if not samples:
        raise ValueError("rl_train needs a nonempty dataset")
    ref = params_init.snapshot()
    params = params_init.copy()
    rng = ensure_rng(config.seed)
    history: list[StepStats] = []
    step = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        for start in range(0, len(order), config.batch_size):
            batch = [samples[i] for i in order[start : start + config.batch_size]]
            old = params.snapshot()
            groups = []
            advantage_vectors: list[AdvantageVector] = []
            for sample in batch:
                group = rollout(old, ref, sample, config.group_size, rng, config.length_coeff)
                groups.append(group)
                advantage_vectors.append(
                    mixed_advantage(group, vanilla=config.algorithm == "grpo")
                )

            loss = 0.0
            dW = np.zeros_like(params.W)
            dU = np.zeros_like(params.U)
            try:
                for group, adv in zip(groups, advantage_vectors):
                    group_loss, grad = surrogate_loss(params, group, adv.mixed, config)
                    loss += group_loss
                    dW += grad.W
                    dU += grad.U
            except FloatingPointError as exc:
                raise TrainingDiverged(str(exc), params=old.copy(), history=history) from exc
            loss /= len(groups)
            dW /= len(groups)
            dU /= len(groups)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"surrogate loss became non-finite ({loss}) at step {step}",
                    params=old.copy(),
                    history=history,
                )

            params.W -= config.learning_rate * dW
            params.U -= config.learning_rate * dU
            if not (np.all(np.isfinite(params.W)) and np.all(np.isfinite(params.U))):
                raise TrainingDiverged(
                    f"parameters became non-finite after step {step}",
                    params=old.copy(),
                    history=history,
                )

            all_rewards = np.concatenate([g.rewards for g in groups])
            all_adv = np.concatenate([a.mixed for a in advantage_vectors])
            mode_counts: dict[str, int] = {}
            tokens = 0
            for group in groups:
                for parsed in group.responses:
                    key = parsed.mode.value if parsed.mode else "unclassifiable"
                    mode_counts[key] = mode_counts.get(key, 0) + 1
                    tokens += parsed.token_count
            n_responses = sum(g.size for g in groups)
            history.append(
                StepStats(
                    step=step,
                    epoch=epoch,
                    loss=float(loss),
                    reward_mean=float(all_rewards.mean()),
                    adv_abs_mean=float(np.abs(all_adv).mean()),
                    kl_mean=float(
                        np.mean([_group_kl(g, g.old_logprobs) for g in groups])
                    ),
                    clip_fraction=float(
                        np.mean(
                            [_clip_fraction(g, g.old_logprobs, config.clip_range) for g in groups]
                        )
                    ),
                    mode_counts=mode_counts,
                    avg_tokens=tokens / n_responses,
                )
            )
            step += 1
        if on_epoch_end is not None:
            on_epoch_end(epoch, params.snapshot())
    return params, history


class GroupPolicyTrainer(BaseEstimator):
    """Estimator wrapper around :func:`rl_train`.

    ``fit`` takes raw samples plus optional initial parameters (typically a
    supervised checkpoint); results land in ``policy_`` and ``history_``.
    """

    def __init__(
        self,
        algorithm: str = "mmpo",
        group_size: int = 8,
        clip_range: float = 0.2,
        kl_coeff: float = 0.04,
        epochs: int = 8,
        batch_size: int = 2,
        learning_rate: float = 0.03,
        length_coeff: float = 0.0,
        seed: int = 0,
    ):
        self.algorithm = algorithm
        self.group_size = group_size
        self.clip_range = clip_range
        self.kl_coeff = kl_coeff
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.length_coeff = length_coeff
        self.seed = seed

    def _config(self, dataset_size: int) -> RlConfig:
        return RlConfig(
            group_size=self.group_size,
            clip_range=self.clip_range,
            kl_coeff=self.kl_coeff,
            epochs=self.epochs,
            dataset_size=dataset_size,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            algorithm=self.algorithm,
            length_coeff=self.length_coeff,
            seed=self.seed,
        )

    def fit(
        self,
        X: list[SynthSample],
        y=None,
        init_params: PolicyParams | None = None,
    ) -> "GroupPolicyTrainer":
        samples = list(X)
        if init_params is None:
            feature_dim = samples[0].features.shape[0] if samples else 9
            init_params = PolicyParams.zeros(feature_dim)
        self.policy_, self.history_ = rl_train(
            init_params, samples, self._config(len(samples))
        )
        return self

    def predict(self, samples: list[SynthSample]):
        """Greedy verdicts for raw samples."""
        return [agent.greedy_action(self.policy_, s).answer for s in samples]
