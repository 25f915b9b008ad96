"""Prompt templates for fine-tune samples and candidate generation.

Three templates exist: the fine-tune sample prompt (one baseline reference,
paired with an improved-code output), the direct generation prompt (two
references), and the structured chain-of-thought generation prompt with
negative constraints (two references). Their line content is frozen; the
test suite pins each against a golden transcription byte-for-byte, so any
edit here must update the goldens deliberately.

Rendering substitutes placeholder tokens verbatim in a single pass; code
bound into a placeholder is never rescanned for further tokens.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

PLACEHOLDERS = ("accuracy", "transform_code", "addon_accuracy", "addon_transform_code")
_PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    segments: tuple[str, ...]
    placeholders: tuple[str, ...]
    output_segments: tuple[str, ...] = ()


# NOTE: line content below is contractual, including the trailing space at the
# end of the fine-tune prompt's fourth line. Do not "clean up".
FINETUNE_DIRECT = PromptTemplate(
    id="finetune_direct",
    segments=(
        "You are an expert image transformation optimizer.",
        "Baseline transform code (Accuracy: {accuracy}):",
        "<tr>{transform_code}</tr>",
        "Generate an improved Python transform function ('transform') that achieves a "
        "higher accuracy with 1 epoch, batch 64, lr 0.01, and momentum 0.9 for "
        "'cifar-10' dataset and task: 'img-classification' ",
        "Your response MUST contain exactly one set of the XML tags <tr>...</tr>. "
        "DO NOT include any leading or trailing text, markdown fences (```), comments, "
        "or any other XML tags like <path> or <text>.",
    ),
    placeholders=("accuracy", "transform_code"),
    output_segments=("<tr>{addon_transform_code}</tr>",),
)

GENERATE_DIRECT = PromptTemplate(
    id="generate_direct",
    segments=(
        "You are an expert image transformation generator.",
        "Your task is to generate new image transformation code.",
        "Use common patterns and ideas from the following two reference transforms:",
        "Reference 1 (Accuracy: {accuracy}):",
        "<tr>{transform_code}</tr>",
        "Reference 2 (Accuracy: {addon_accuracy}):",
        "<tr>{addon_transform_code}</tr>",
        "Provide a new, high-performance transform for 'cifar-10' "
        "(task: 'img-classification') for training with 1 epoch, batch 64, lr 0.01, "
        "and momentum 0.9",
        "Respond with:",
        "1. A <tr> XML tag containing the complete Python transform code "
        "(function name 'transform').",
        "The code must be wrapped strictly in <tr> and </tr> tags.",
    ),
    placeholders=("accuracy", "transform_code", "addon_accuracy", "addon_transform_code"),
)

GENERATE_COT = PromptTemplate(
    id="generate_cot",
    segments=(
        "You are an expert image transformation generator.",
        "Your task is to synthesize a high-performance augmentation strategy with "
        "common patterns and ideas of two reference transforms.",
        "### Reference 1 (Acc: {accuracy})",
        "<tr>{transform_code}</tr>",
        "### Reference 2 (Acc: {addon_accuracy})",
        "<tr>{addon_transform_code}</tr>",
        "### Task",
        "Create a new 'transform' function for CIFAR-10 that combines the effective "
        "parts of both references.",
        "Target Settings: 1 epoch, batch 64, lr 0.01.",
        "### Instructions",
        "1. Briefly analyze why Ref 1 and 2 worked, and propose a strategy.",
        "2. <tr>: Write the executable Python code.",
        "### Negative Constraints",
        "- DO NOT output SVG, <path>, <g>, or HTML tags.",
        "- DO NOT output markdown fences (```).",
        "Respond strictly in this format:",
        "<tr>... code ...</tr>",
    ),
    placeholders=("accuracy", "transform_code", "addon_accuracy", "addon_transform_code"),
)

TEMPLATES = {t.id: t for t in (FINETUNE_DIRECT, GENERATE_DIRECT, GENERATE_COT)}


def render_lines(lines, bindings: dict[str, str]) -> list[str]:
    """Substitute placeholder tokens in each line, verbatim, single pass."""

    def _sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in bindings:
            raise KeyError(f"missing binding for placeholder {name!r}")
        return bindings[name]

    return [_PLACEHOLDER_RE.sub(_sub, line) for line in lines]


def render_prompt(template_id: str, bindings: dict[str, str]) -> str:
    """Render a template to prompt text: lines joined by newlines.

    Args:
        template_id: one of finetune_direct, generate_direct, generate_cot.
        bindings: placeholder name -> replacement text; must cover every
            placeholder the template declares.

    Raises:
        KeyError: unknown template id, or a required binding is missing.
    """
    template = TEMPLATES.get(template_id)
    if template is None:
        raise KeyError(f"unknown template id {template_id!r}")
    missing = [p for p in template.placeholders if p not in bindings]
    if missing:
        raise KeyError(f"missing bindings for {template_id}: {missing}")
    return "\n".join(render_lines(template.segments, bindings))


def format_accuracy(value: float) -> str:
    """Canonical accuracy formatting for prompt bindings (4 decimals)."""
    return f"{value:.4f}"
