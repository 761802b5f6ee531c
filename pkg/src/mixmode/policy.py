"""Analytically differentiable softmax policy over structured responses.

The action space is the 6-way product of thinking mode and verdict. A mode
head ``W`` (3 x d) and per-mode answer heads ``U`` (3 x 2 x d) map a feature
vector to factored categorical distributions:

    log p(mode, answer | phi) = log softmax(W phi)[mode]
                              + log softmax(U[mode] phi)[answer]

Log-probabilities, gradients, and the per-sample KL estimator are all exact
closed forms; no autodiff framework is involved. Functions here are pure;
sampling takes an explicit generator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import grammar
from .grammar import Label, ThinkingMode
from ._validation import check_feature_vector, ensure_rng

N_MODES = 3
N_ANSWERS = 2
DEFAULT_FEATURE_DIM = 9
CHECKPOINT_VERSION = 1

MODES: tuple[ThinkingMode, ...] = (
    ThinkingMode.QUICK_RESPONSE,
    ThinkingMode.SEMANTIC_ANALYSIS,
    ThinkingMode.PROSPECTIVE_SIMULATION,
)
ANSWERS: tuple[Label, ...] = (Label.REAL, Label.FAKE)
MODE_INDEX = {mode: i for i, mode in enumerate(MODES)}
ANSWER_INDEX = {answer: i for i, answer in enumerate(ANSWERS)}


@dataclass(frozen=True)
class StructuredAction:
    """The pair the policy controls; think bodies are filled canonically."""

    mode: ThinkingMode
    answer: Label


# All 6 structured actions in a fixed enumeration order.
ACTIONS: tuple[StructuredAction, ...] = tuple(
    StructuredAction(mode, answer) for mode in MODES for answer in ANSWERS
)


@dataclass
class PolicyParams:
    """Mode head ``W`` (3 x d) and per-mode answer heads ``U`` (3 x 2 x d)."""

    W: np.ndarray
    U: np.ndarray

    def __post_init__(self) -> None:
        self.W = np.asarray(self.W, dtype=np.float64)
        self.U = np.asarray(self.U, dtype=np.float64)
        if self.W.ndim != 2 or self.W.shape[0] != N_MODES:
            raise ValueError(f"W must have shape ({N_MODES}, d), got {self.W.shape}")
        if self.U.shape != (N_MODES, N_ANSWERS, self.W.shape[1]):
            raise ValueError(
                f"U must have shape ({N_MODES}, {N_ANSWERS}, {self.W.shape[1]}), got {self.U.shape}"
            )
        if not (np.all(np.isfinite(self.W)) and np.all(np.isfinite(self.U))):
            raise ValueError("policy parameters must be finite")

    @property
    def d(self) -> int:
        return self.W.shape[1]

    @classmethod
    def zeros(cls, d: int = DEFAULT_FEATURE_DIM) -> "PolicyParams":
        return cls(W=np.zeros((N_MODES, d)), U=np.zeros((N_MODES, N_ANSWERS, d)))

    def copy(self) -> "PolicyParams":
        return PolicyParams(W=self.W.copy(), U=self.U.copy())

    def snapshot(self) -> "PolicyParams":
        """Immutable copy for use as a frozen old/reference policy."""
        frozen = self.copy()
        frozen.W.setflags(write=False)
        frozen.U.setflags(write=False)
        return frozen

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.U.ravel()])

    @classmethod
    def from_vector(cls, vector: np.ndarray) -> "PolicyParams":
        flat = np.asarray(vector, dtype=np.float64).ravel()
        if flat.size % (N_MODES * (1 + N_ANSWERS)) != 0:
            raise ValueError(f"flat parameter vector has invalid length {flat.size}")
        d = flat.size // (N_MODES * (1 + N_ANSWERS))
        split = N_MODES * d
        return cls(
            W=flat[:split].reshape(N_MODES, d),
            U=flat[split:].reshape(N_MODES, N_ANSWERS, d),
        )


# A gradient has the same shape as the parameters it differentiates.
@dataclass(frozen=True)
class PolicyGradient:
    W: np.ndarray
    U: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.W.ravel(), self.U.ravel()])


# PolicyParams plays both roles; a snapshot is simply a frozen copy.
PolicySnapshot = PolicyParams


def save_params(params: PolicyParams, path: str | Path, extra: dict | None = None) -> None:
    """Write a checkpoint: flat parameter vector plus a small header."""
    payload = {
        "kind": "policy-checkpoint",
        "version": CHECKPOINT_VERSION,
        "d": params.d,
        "params": [float(v) for v in params.to_vector()],
    }
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")


def load_params(path: str | Path) -> tuple[PolicyParams, dict]:
    """Read a checkpoint; returns the parameters and the remaining header."""
    payload = json.loads(Path(path).read_text())
    if payload.get("kind") != "policy-checkpoint":
        raise ValueError(f"{path} is not a policy checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    params = PolicyParams.from_vector(np.array(payload["params"]))
    if params.d != payload.get("d"):
        raise ValueError("checkpoint header dimension disagrees with the payload")
    meta = {k: v for k, v in payload.items() if k not in {"kind", "version", "d", "params"}}
    return params, meta


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    # Max-shifted for stability; tiny fixed-size vectors, so done by hand to
    # keep the rollout hot loop free of per-call library overhead.
    shifted = logits - logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def mode_log_probs(params: PolicyParams, features) -> np.ndarray:
    """Log-probabilities of the three modes given ``features``."""
    phi = check_feature_vector(features, params.d)
    return _log_softmax(params.W @ phi)


def answer_log_probs(params: PolicyParams, mode: ThinkingMode, features) -> np.ndarray:
    """Log-probabilities of the two verdicts under ``mode``'s answer head."""
    phi = check_feature_vector(features, params.d)
    return _log_softmax(params.U[MODE_INDEX[mode]] @ phi)


def log_prob(params: PolicyParams, features, action: StructuredAction) -> float:
    """Joint log-probability of a structured action; always <= 0."""
    lp_mode = mode_log_probs(params, features)[MODE_INDEX[action.mode]]
    lp_answer = answer_log_probs(params, action.mode, features)[ANSWER_INDEX[action.answer]]
    return float(lp_mode + lp_answer)


def action_log_probs(params: PolicyParams, features) -> np.ndarray:
    """Log-probabilities of all 6 actions, in ``ACTIONS`` order."""
    lp_mode = mode_log_probs(params, features)
    out = np.empty(len(ACTIONS))
    for i, action in enumerate(ACTIONS):
        lp_answer = answer_log_probs(params, action.mode, features)
        out[i] = lp_mode[MODE_INDEX[action.mode]] + lp_answer[ANSWER_INDEX[action.answer]]
    return out


def sample(
    params: PolicyParams,
    features,
    rng: np.random.Generator | int | None,
) -> tuple[StructuredAction, str]:
    """Draw an action from the factored distribution and render its response.

    Reproducible given the generator state; think bodies are canonical.
    """
    rng = ensure_rng(rng)
    p_mode = np.exp(mode_log_probs(params, features))
    mode = MODES[rng.choice(N_MODES, p=p_mode / p_mode.sum())]
    p_answer = np.exp(answer_log_probs(params, mode, features))
    answer = ANSWERS[rng.choice(N_ANSWERS, p=p_answer / p_answer.sum())]
    action = StructuredAction(mode, answer)
    return action, grammar.canonical_response(mode, answer)


def grad_log_prob(
    params: PolicyParams, features, action: StructuredAction
) -> PolicyGradient:
    """Exact gradient of :func:`log_prob` with the parameters' shape.

    Mode head: ``(onehot(mode) - p_mode) phi^T``. Answer head of the taken
    mode is analogous; the other answer heads are exactly zero.
    """
    phi = check_feature_vector(features, params.d)
    m = MODE_INDEX[action.mode]
    a = ANSWER_INDEX[action.answer]

    p_mode = np.exp(mode_log_probs(params, phi))
    coeff_mode = -p_mode
    coeff_mode[m] += 1.0
    dW = np.outer(coeff_mode, phi)

    dU = np.zeros_like(params.U)
    p_answer = np.exp(answer_log_probs(params, action.mode, phi))
    coeff_answer = -p_answer
    coeff_answer[a] += 1.0
    dU[m] = np.outer(coeff_answer, phi)
    return PolicyGradient(W=dW, U=dU)


def kl_from_log_ratio(log_ratio: float) -> float:
    """Per-sample KL estimate ``rho - ln(rho) - 1`` from ``ln(rho)``.

    Convex with minimum 0 at ``log_ratio == 0``, so the estimate is
    nonnegative for every input.
    """
    return float(np.expm1(log_ratio) - log_ratio)


def kl_estimate(
    params: PolicyParams,
    ref: PolicySnapshot,
    features,
    action: StructuredAction,
) -> float:
    """Unbiased per-sample estimator of KL(pi_params || pi_ref) at ``action``.

    Uses ``rho - ln(rho) - 1`` with ``rho = pi_ref(y) / pi_params(y)``; its
    expectation over actions sampled from ``params`` is the exact KL.
    """
    log_ratio = log_prob(ref, features, action) - log_prob(params, features, action)
    return kl_from_log_ratio(log_ratio)
