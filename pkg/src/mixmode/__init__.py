"""Adaptive thinking-depth policy optimization on a synthetic detection task.

The pieces compose like a small RL lab: a tag-structured response grammar
with three thinking depths, binary accuracy/format rewards, group-relative
advantages (sample-level, mode-level, and their mixture), an exactly
differentiable softmax policy, a difficulty-tiered synthetic environment,
supervised and policy-gradient trainers with an sklearn-style estimator
surface, and a metric/report harness.
"""

from .advantages import (
    AdvantageVector,
    GroupRollout,
    ModeStats,
    mixed_advantage,
    mode_advantage,
    mode_stats,
    sample_advantage,
)
from .agent import (
    PolicyEvaluation,
    ResponseDraw,
    evaluate_policy,
    greedy_action,
    greedy_response,
    respond,
    response_grad_log_prob,
    response_log_prob,
)
from .environment import (
    Difficulty,
    EnvConfig,
    SynthSample,
    cheapest_sufficient_mode,
    generate,
    observe,
    read_dataset,
    write_dataset,
)
from .grammar import (
    ActionKind,
    Label,
    ParsedResponse,
    ThinkingMode,
    canonical_response,
    classify_mode,
    parse,
    render,
)
from .metrics import EvalRecord, MetricReport, compute_metrics, render_report, report_from_json
from .policy import (
    PolicyGradient,
    PolicyParams,
    PolicySnapshot,
    StructuredAction,
    grad_log_prob,
    kl_estimate,
    load_params,
    log_prob,
    sample,
    save_params,
)
from .rewards import RewardBreakdown, score
from .rl import (
    GroupPolicyTrainer,
    RlConfig,
    StepStats,
    clipped_surrogate,
    rl_train,
    rollout,
    surrogate_loss,
)
from .sft import (
    SftConfig,
    SftExample,
    SupervisedTuner,
    TrainingDiverged,
    make_teacher_dataset,
    sft_loss,
    sft_train,
)

__version__ = "0.1.0"
