"""Candidate code extraction, structural validation, and canonicalization.

LLM responses are required to wrap transform code in exactly one pair of
``<tr>...</tr>`` tags. This module pulls the code out of raw completions,
checks the structural contract every candidate must satisfy (a function
literally named ``transform``, no markdown fences, no forbidden markup tags),
and normalizes code for deduplication so that copies differing only by
formatting, comments, or RNG seed values share one digest.

All checks are lexical. Executing the candidate and reporting
interpreter-level errors is the evaluation worker's job.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

# Largest input (in bytes of UTF-8) the extractor/validator accept; guards
# against pathological completions.
MAX_CANDIDATE_BYTES = 2 * 1024 * 1024

# Stable violation identifiers (used verbatim in logs and reports).
MISSING_TR_TAG = "missing_tr_tag"
MULTIPLE_TR_TAGS = "multiple_tr_tags"
MARKDOWN_FENCE = "markdown_fence"
FORBIDDEN_TAG = "forbidden_tag"
MISSING_TRANSFORM_FUNCTION = "missing_transform_function"
EMPTY_BODY = "empty_body"

# Markup tags that must never appear in candidate code. Matching is
# case-sensitive and looks only at opening tags.
FORBIDDEN_TAGS = ("<path>", "<g>", "<text>", "<svg>", "<html>")

_TR_BLOCK_RE = re.compile(r"<tr>(.*?)</tr>", re.DOTALL)
_FENCE_RE = re.compile(r"```")
_TRANSFORM_DEF_RE = re.compile(r"(?m)^[ \t]*def[ \t]+transform[ \t]*\(")
# Forbidden tags are matched with optional attributes: "<path d=..." counts.
_FORBIDDEN_RE = re.compile(r"<(?:path|g|text|svg|html)[\s>/]")

_COMMENT_RE = re.compile(r"(?m)(?:^|(?<=\s))#[^\n]*")
_WS_RUN_RE = re.compile(r"\s+")
# Seed-setting calls whose single integer argument carries no transform
# semantics. Matches dotted callees ending in one of the documented names
# (seed, manual_seed, manual_seed_all), e.g. random.seed(7),
# torch.manual_seed(42), torch.cuda.manual_seed_all(0), np.random.seed(1).
_SEED_CALL_RE = re.compile(
    r"\b((?:[A-Za-z_][A-Za-z0-9_]*\.)*(?:manual_seed_all|manual_seed|seed))"
    r"(\s*\(\s*)(\d+)(\s*\))"
)
_SEED_MASK = "<seed>"


@dataclass
class ValidityReport:
    """Outcome of a structural check on raw LLM output or extracted code.

    ``status`` is "valid" iff ``violations`` is empty. ``extracted_code`` is
    present iff exactly one ``<tr>...</tr>`` pair was found (independently of
    whether other violations apply).
    """

    status: str
    violations: list[str] = field(default_factory=list)
    extracted_code: str | None = None

    @property
    def is_valid(self) -> bool:
        return self.status == "valid"


@dataclass(frozen=True)
class CanonicalForm:
    """Normalized candidate text and its content digest (SHA-256 hex)."""

    canonical_text: str
    digest: str


def _check_size(text: str) -> None:
    if len(text.encode("utf-8", errors="surrogatepass")) > MAX_CANDIDATE_BYTES:
        raise ValueError(
            f"input exceeds the {MAX_CANDIDATE_BYTES}-byte candidate size limit"
        )


def extract_transform_block(raw: str) -> ValidityReport:
    """Extract the single ``<tr>...</tr>`` code block from a raw completion.

    Tag matching is case-sensitive and non-nesting; a ``<tr>`` appearing
    inside a code string still counts as a pair boundary (documented
    limitation, the prompts demand flat exclusive tags). All failures are
    reported through the returned ValidityReport, never raised.

    Args:
        raw: Arbitrary completion text, possibly empty.

    Returns:
        ValidityReport with ``extracted_code`` set iff exactly one tag pair
        was found. Surrounding whitespace of the enclosed code is trimmed.
    """
    _check_size(raw)
    violations: list[str] = []
    extracted: str | None = None

    blocks = _TR_BLOCK_RE.findall(raw)
    if len(blocks) == 0:
        violations.append(MISSING_TR_TAG)
    elif len(blocks) > 1:
        violations.append(MULTIPLE_TR_TAGS)
    else:
        extracted = blocks[0].strip()
        if not extracted:
            violations.append(EMPTY_BODY)

    if _FENCE_RE.search(raw):
        violations.append(MARKDOWN_FENCE)

    status = "valid" if not violations else "invalid"
    return ValidityReport(status=status, violations=violations, extracted_code=extracted)


def validate_candidate(code: str) -> ValidityReport:
    """Check extracted candidate code against the structural contract.

    Valid code defines a function literally named ``transform``, contains no
    markdown fences, and contains none of the forbidden markup tags. This is
    a lexical check only; whether the code actually parses and runs is
    reported by the evaluation worker as a separate error class.
    """
    _check_size(code)
    violations: list[str] = []

    if not code.strip():
        violations.append(EMPTY_BODY)
    if not _TRANSFORM_DEF_RE.search(code):
        violations.append(MISSING_TRANSFORM_FUNCTION)
    if _FENCE_RE.search(code):
        violations.append(MARKDOWN_FENCE)
    if _FORBIDDEN_RE.search(code):
        violations.append(FORBIDDEN_TAG)

    status = "valid" if not violations else "invalid"
    return ValidityReport(status=status, violations=violations, extracted_code=code)


def canonicalize(code: str) -> CanonicalForm:
    """Normalize candidate code for deduplication.

    Strips ``#`` comments and blank lines, collapses every whitespace run to
    a single space, and masks the integer argument of recognized seed-setting
    calls (random.seed, *.manual_seed, *.manual_seed_all) so that copies
    differing only by RNG seed share a digest. General numeric literals are
    transform magnitudes and survive untouched. Comment stripping is lexical:
    a ``#`` introduces a comment whenever it starts a line or follows
    whitespace, which is adequate for transform code that carries no ``#``
    inside string literals.

    Canonicalization is idempotent; the digest is SHA-256 over the canonical
    text.

    Raises:
        ValueError: when no code remains once comments and whitespace go.
    """
    _check_size(code)

    text = _COMMENT_RE.sub("", code)
    text = _SEED_CALL_RE.sub(rf"\1\2{_SEED_MASK}\4", text)
    text = _WS_RUN_RE.sub(" ", text).strip()
    if not text:
        raise ValueError("cannot canonicalize empty candidate code")

    digest = hashlib.sha256(text.encode("utf-8", errors="surrogatepass")).hexdigest()
    return CanonicalForm(canonical_text=text, digest=digest)
