"""Policy bound to the environment's depth-dependent observation rule.

The mode head routes on the raw sample features (choosing how hard to think
is cheap; the cost sits in the thinking itself), while the answer head of the
chosen mode only sees what that mode's depth reveals:

    p(mode, answer | x) = p(mode | x) * p(answer | observe(x, mode), mode)

This is a normalized distribution over the 6 structured actions, and its
log-probability and gradient are the sums of the head-level closed forms, so
all surrogate-objective quantities stay exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import grammar, policy
from .environment import SynthSample, cheapest_sufficient_mode, observe
from .grammar import parse
from .policy import PolicyGradient, PolicyParams, StructuredAction
from ._validation import ensure_rng


@dataclass(frozen=True)
class ResponseDraw:
    """One response: the action taken, its rendered text, and its
    log-probability under the drawing policy."""

    action: StructuredAction
    text: str
    log_prob: float


def response_log_prob(
    params: PolicyParams, sample: SynthSample, action: StructuredAction
) -> float:
    """Log-probability of ``action`` under the mode-masked composition."""
    lp_mode = policy.mode_log_probs(params, sample.features)[policy.MODE_INDEX[action.mode]]
    phi = observe(sample, action.mode)
    lp_answer = policy.answer_log_probs(params, action.mode, phi)[
        policy.ANSWER_INDEX[action.answer]
    ]
    return float(lp_mode + lp_answer)


def log_prob_table(params: PolicyParams, sample: SynthSample) -> np.ndarray:
    """All 6 response log-probabilities at once, shape (mode, answer).

    ``table[m, a] == response_log_prob(params, sample, action)`` for the
    corresponding action; one pass per sample instead of one per response,
    which is what group rollouts and the surrogate loss iterate over.
    """
    lp_mode = policy.mode_log_probs(params, sample.features)
    table = np.empty((policy.N_MODES, policy.N_ANSWERS))
    for m, mode in enumerate(policy.MODES):
        table[m] = lp_mode[m] + policy.answer_log_probs(params, mode, observe(sample, mode))
    return table


def response_grad_log_prob(
    params: PolicyParams, sample: SynthSample, action: StructuredAction
) -> PolicyGradient:
    """Exact gradient of :func:`response_log_prob` in parameter shape."""
    m = policy.MODE_INDEX[action.mode]
    a = policy.ANSWER_INDEX[action.answer]

    p_mode = np.exp(policy.mode_log_probs(params, sample.features))
    coeff_mode = -p_mode
    coeff_mode[m] += 1.0
    dW = np.outer(coeff_mode, sample.features)

    phi = observe(sample, action.mode)
    p_answer = np.exp(policy.answer_log_probs(params, action.mode, phi))
    coeff_answer = -p_answer
    coeff_answer[a] += 1.0
    dU = np.zeros_like(params.U)
    dU[m] = np.outer(coeff_answer, phi)
    return PolicyGradient(W=dW, U=dU)


def respond(
    params: PolicyParams,
    sample: SynthSample,
    rng: np.random.Generator | int | None,
) -> ResponseDraw:
    """Sample one structured response for ``sample``.

    The mode is drawn from the router over raw features, the answer from the
    chosen mode's head over its masked observation, and the text is rendered
    with canonical think bodies. Reproducible given the generator state.
    """
    rng = ensure_rng(rng)
    lp_modes = policy.mode_log_probs(params, sample.features)
    p_mode = np.exp(lp_modes)
    m = rng.choice(policy.N_MODES, p=p_mode / p_mode.sum())
    mode = policy.MODES[m]

    phi = observe(sample, mode)
    lp_answers = policy.answer_log_probs(params, mode, phi)
    p_answer = np.exp(lp_answers)
    a = rng.choice(policy.N_ANSWERS, p=p_answer / p_answer.sum())
    answer = policy.ANSWERS[a]

    action = StructuredAction(mode, answer)
    return ResponseDraw(
        action=action,
        text=grammar.canonical_response(mode, answer),
        log_prob=float(lp_modes[m] + lp_answers[a]),
    )


def greedy_action(params: PolicyParams, sample: SynthSample) -> StructuredAction:
    """Most likely mode, then most likely answer under that mode."""
    m = int(np.argmax(policy.mode_log_probs(params, sample.features)))
    mode = policy.MODES[m]
    phi = observe(sample, mode)
    a = int(np.argmax(policy.answer_log_probs(params, mode, phi)))
    return StructuredAction(mode, policy.ANSWERS[a])


def greedy_response(params: PolicyParams, sample: SynthSample) -> ResponseDraw:
    """Deterministic response used for evaluation and reports."""
    action = greedy_action(params, sample)
    return ResponseDraw(
        action=action,
        text=grammar.canonical_response(action.mode, action.answer),
        log_prob=response_log_prob(params, sample, action),
    )


@dataclass(frozen=True)
class PolicyEvaluation:
    """Decoding summary over a sample set."""

    answer_accuracy: float
    mode_match_rate: float
    cheapest_rate: dict[str, float]
    avg_tokens: float
    mode_counts: dict[str, int]


def evaluate_policy(
    params: PolicyParams,
    samples: list[SynthSample],
    rng: np.random.Generator | int | None = None,
) -> PolicyEvaluation:
    """Accuracy, mode selection quality, and token usage over ``samples``.

    With ``rng`` unset the decode is greedy; otherwise one response is
    sampled per record, which measures the policy's actual response
    distribution (and is reproducible under a seeded generator).
    ``mode_match_rate`` compares the chosen mode to the cheapest sufficient
    mode for each sample's difficulty; ``cheapest_rate`` breaks that down per
    difficulty tier.
    """
    if not samples:
        raise ValueError("cannot evaluate on an empty sample list")
    if rng is not None:
        rng = ensure_rng(rng)
    correct = 0
    matched = 0
    tokens = 0
    per_tier: dict[str, list[bool]] = {}
    mode_counts: dict[str, int] = {}
    for sample in samples:
        draw = greedy_response(params, sample) if rng is None else respond(params, sample, rng)
        parsed = parse(draw.text)
        target_mode = cheapest_sufficient_mode(sample.difficulty)
        hit = draw.action.mode is target_mode
        matched += hit
        per_tier.setdefault(sample.difficulty.value, []).append(hit)
        correct += draw.action.answer is sample.truth
        tokens += parsed.token_count
        key = draw.action.mode.value
        mode_counts[key] = mode_counts.get(key, 0) + 1
    n = len(samples)
    return PolicyEvaluation(
        answer_accuracy=correct / n,
        mode_match_rate=matched / n,
        cheapest_rate={tier: float(np.mean(hits)) for tier, hits in per_tier.items()},
        avg_tokens=tokens / n,
        mode_counts=mode_counts,
    )


__all__ = [
    "PolicyEvaluation",
    "ResponseDraw",
    "evaluate_policy",
    "greedy_action",
    "greedy_response",
    "respond",
    "response_grad_log_prob",
    "response_log_prob",
]
