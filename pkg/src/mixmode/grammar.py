"""Tag-structured response language for the three thinking depths.

A reasoning response looks like::

    <think>[image analysis] ... [text analysis] ... [cross-modal analysis] ...
    [summary] ...</think><answer>fake</answer>

and a quick response is a bare ``<answer>real</answer>``. The think body is a
sequence of bracketed action segments whose labels, in canonical order,
identify the thinking mode. Everything in this module is a pure function over
immutable inputs and safe to call concurrently.

Parsing is total: any byte string yields a :class:`ParsedResponse`, with
malformed structure reported through ``well_formed`` rather than exceptions.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Mapping


class Label(Enum):
    """Binary detection verdict carried in the answer block."""

    REAL = "real"
    FAKE = "fake"


class ActionKind(Enum):
    """Closed set of reasoning actions that may appear in a think body."""

    IMAGE_ANALYSIS = "image analysis"
    TEXT_ANALYSIS = "text analysis"
    CROSS_MODAL_ANALYSIS = "cross-modal analysis"
    SUMMARY = "summary"
    ATTRIBUTION = "attribution"

    @property
    def label(self) -> str:
        """Canonical bracketed label that opens this action's segment."""
        return f"[{self.value}]"


class ThinkingMode(Enum):
    """Response depth: answer-only, four-action analysis, or five-action
    analysis ending in a generated-vs-authentic attribution step."""

    QUICK_RESPONSE = "quick_response"
    SEMANTIC_ANALYSIS = "semantic_analysis"
    PROSPECTIVE_SIMULATION = "prospective_simulation"

    @property
    def actions(self) -> tuple[ActionKind, ...]:
        return MODE_ACTIONS[self]

    @property
    def token_cost(self) -> int:
        return MODE_TOKEN_COSTS[self]


_SEMANTIC_SEQUENCE = (
    ActionKind.IMAGE_ANALYSIS,
    ActionKind.TEXT_ANALYSIS,
    ActionKind.CROSS_MODAL_ANALYSIS,
    ActionKind.SUMMARY,
)

MODE_ACTIONS: dict[ThinkingMode, tuple[ActionKind, ...]] = {
    ThinkingMode.QUICK_RESPONSE: (),
    ThinkingMode.SEMANTIC_ANALYSIS: _SEMANTIC_SEQUENCE,
    ThinkingMode.PROSPECTIVE_SIMULATION: _SEMANTIC_SEQUENCE + (ActionKind.ATTRIBUTION,),
}

# Fixed per-mode token budgets (think body; the final answer adds one token).
# Spread wide enough that the average-token metric separates the modes, and
# held constant so simulated token counts are deterministic.
MODE_TOKEN_COSTS: dict[ThinkingMode, int] = {
    ThinkingMode.QUICK_RESPONSE: 5,
    ThinkingMode.SEMANTIC_ANALYSIS: 120,
    ThinkingMode.PROSPECTIVE_SIMULATION: 180,
}

# Fixed think bodies used whenever the caller only controls (mode, answer).
CANONICAL_THINK_TEXT: dict[ActionKind, str] = {
    ActionKind.IMAGE_ANALYSIS: "the image is inspected for staging and editing artifacts",
    ActionKind.TEXT_ANALYSIS: "the claim wording is checked for exaggeration and sourcing",
    ActionKind.CROSS_MODAL_ANALYSIS: "the image and the claim are checked for consistency",
    ActionKind.SUMMARY: "the combined evidence is weighed before the verdict",
    ActionKind.ATTRIBUTION: "the content is checked for signs of a generative origin",
}

_THINK_OPEN, _THINK_CLOSE = "<think>", "</think>"
_ANSWER_OPEN, _ANSWER_CLOSE = "<answer>", "</answer>"

# Substrings that would change the parsed structure if they appeared inside a
# segment body; render refuses them, parse treats them as ordinary structure.
RESERVED_MARKERS: tuple[str, ...] = (
    _THINK_OPEN,
    _THINK_CLOSE,
    _ANSWER_OPEN,
    _ANSWER_CLOSE,
) + tuple(kind.label for kind in ActionKind)

_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_SEGMENT_LABEL_RE = re.compile(
    "|".join(re.escape(kind.label) for kind in ActionKind)
)
_LABEL_TO_ACTION = {kind.label: kind for kind in ActionKind}


@dataclass(frozen=True)
class ParsedResponse:
    """Structural view of one response string.

    ``mode`` is ``None`` when the think structure matches no mode and
    ``answer`` is ``None`` when no parseable verdict exists. ``token_count``
    is the fixed per-mode budget plus one answer token for format-conforming
    responses, and a plain whitespace word count otherwise.
    """

    mode: ThinkingMode | None
    answer: Label | None
    think_segments: tuple[tuple[ActionKind, str], ...]
    token_count: int
    well_formed: bool
    has_think_block: bool
    has_answer_block: bool


def count_tokens(text: str) -> int:
    """Whitespace-delimited token count used for free-form text."""
    return len(text.split())


def render(
    mode: ThinkingMode,
    actions_text: Mapping[ActionKind, str],
    answer: Label,
) -> str:
    """Render the canonical response for ``mode`` with the given segment texts.

    ``actions_text`` must supply exactly the actions of ``mode`` (an empty
    mapping for quick responses), and no segment text may contain a reserved
    structural marker (tags or bracketed action labels).
    """
    required = MODE_ACTIONS[mode]
    for kind in required:
        if kind not in actions_text:
            raise ValueError(
                f"missing text for action {kind.value!r} required by {mode.value}"
            )
    for kind in actions_text:
        if kind not in required:
            raise ValueError(
                f"unexpected text for action {kind.value!r} under {mode.value}"
            )
    for kind, body in actions_text.items():
        for marker in RESERVED_MARKERS:
            if marker in body:
                raise ValueError(
                    f"segment text for {kind.value!r} contains reserved marker {marker!r}"
                )
    answer_block = f"{_ANSWER_OPEN}{answer.value}{_ANSWER_CLOSE}"
    if mode is ThinkingMode.QUICK_RESPONSE:
        return answer_block
    body = " ".join(f"{kind.label} {actions_text[kind].strip()}" for kind in required)
    return f"{_THINK_OPEN}{body}{_THINK_CLOSE}{answer_block}"


def canonical_response(mode: ThinkingMode, answer: Label) -> str:
    """Render ``mode``/``answer`` with the fixed canonical think bodies."""
    texts = {kind: CANONICAL_THINK_TEXT[kind] for kind in MODE_ACTIONS[mode]}
    return render(mode, texts, answer)


def _split_segments(body: str) -> tuple[tuple[ActionKind, str], ...]:
    """Split a think body into labeled segments.

    Returns an empty tuple when the body has no recognizable segment
    structure (no labels, or text before the first label).
    """
    matches = list(_SEGMENT_LABEL_RE.finditer(body))
    if not matches or body[: matches[0].start()].strip():
        return ()
    segments = []
    for i, match in enumerate(matches):
        end = matches[i + 1].start() if i + 1 < len(matches) else len(body)
        kind = _LABEL_TO_ACTION[match.group(0)]
        segments.append((kind, body[match.end() : end].strip()))
    return tuple(segments)


def _classify(
    has_think: bool,
    has_answer: bool,
    labels: tuple[ActionKind, ...],
) -> ThinkingMode | None:
    if not has_think:
        return ThinkingMode.QUICK_RESPONSE if has_answer else None
    if labels == MODE_ACTIONS[ThinkingMode.SEMANTIC_ANALYSIS]:
        return ThinkingMode.SEMANTIC_ANALYSIS
    if labels == MODE_ACTIONS[ThinkingMode.PROSPECTIVE_SIMULATION]:
        return ThinkingMode.PROSPECTIVE_SIMULATION
    return None


def classify_mode(parsed: ParsedResponse) -> ThinkingMode | None:
    """Mode implied by the response's structure alone.

    No think block with an answer block is a quick response; a think block
    whose segment labels match a canonical action sequence selects that
    reasoning mode; anything else is unclassifiable (``None``). Segment body
    text never influences the result.
    """
    labels = tuple(kind for kind, _ in parsed.think_segments)
    return _classify(parsed.has_think_block, parsed.has_answer_block, labels)


def _parse_answer(bodies: list[str]) -> Label | None:
    if not bodies:
        return None
    verdict = bodies[0].strip().lower()
    try:
        return Label(verdict)
    except ValueError:
        return None


def parse(text: str) -> ParsedResponse:
    """Parse arbitrary text into a :class:`ParsedResponse`; never raises.

    The answer comes from the first well-nested ``<answer>`` block, matched
    case-insensitively against the two verdicts. Any duplicate or unbalanced
    ``<think>``/``<answer>`` tag marks the response malformed; text outside
    the blocks is tolerated. With several think blocks, segments come from
    the first one.
    """
    think_bodies = _THINK_RE.findall(text)
    answer_bodies = _ANSWER_RE.findall(text)

    balanced = (
        text.count(_THINK_OPEN) == text.count(_THINK_CLOSE) == len(think_bodies)
        and text.count(_ANSWER_OPEN)
        == text.count(_ANSWER_CLOSE)
        == len(answer_bodies)
    )
    has_think = bool(think_bodies)
    has_answer = bool(answer_bodies)
    answer = _parse_answer(answer_bodies)
    segments = _split_segments(think_bodies[0]) if has_think else ()
    labels = tuple(kind for kind, _ in segments)
    mode = _classify(has_think, has_answer, labels)

    well_formed = (
        balanced
        and len(answer_bodies) == 1
        and len(think_bodies) <= 1
        and answer is not None
    )
    if well_formed and mode is not None:
        token_count = mode.token_cost + 1
    else:
        token_count = count_tokens(text)

    return ParsedResponse(
        mode=mode,
        answer=answer,
        think_segments=segments,
        token_count=token_count,
        well_formed=well_formed,
        has_think_block=has_think,
        has_answer_block=has_answer,
    )
