"""Preference-pair construction for the fine-tune dataset.

Each pair couples a baseline candidate A with a strictly better candidate B
drawn from the same record set; the emitted sample asks the model to improve
on A and supplies B as the target completion. Over N records with distinct
accuracies every record except the unique maximum becomes a baseline exactly
once, yielding N-1 pairs.

A pair's partner is chosen per policy: uniform_better draws uniformly from
the strictly-better set (seeded per baseline record, so the dataset is
reproducible and insensitive to record order), nearest_better takes the
smallest accuracy gap. A second stage clones a fraction of the pairs with
the target's resize stage rewritten to 256, teaching the upscaling move that
strong candidates share.
"""

from __future__ import annotations

import dataclasses
import json
import math
import random
import re
from dataclasses import dataclass
from pathlib import Path

from .codec import canonicalize, validate_candidate
from .prompts import FINETUNE_DIRECT, format_accuracy, render_lines
from .repository import CandidateRecord

POLICY_UNIFORM_BETTER = "uniform_better"
POLICY_NEAREST_BETTER = "nearest_better"
POLICIES = (POLICY_UNIFORM_BETTER, POLICY_NEAREST_BETTER)

PROVENANCE_ORIGINAL = "original"
PROVENANCE_RESIZE256 = "resize256_augmented"

RESIZE_AUGMENT_TARGET = 256

# Per-baseline stream derivation; a large odd multiplier keeps streams for
# neighboring record ids uncorrelated.
_SEED_STRIDE = 1000003


@dataclass(frozen=True)
class PreferencePair:
    """Baseline record A and strictly better record B, with their code."""

    base_id: int
    addon_id: int
    base_accuracy: float
    addon_accuracy: float
    base_code: str
    addon_code: str
    provenance: str = PROVENANCE_ORIGINAL

    def __post_init__(self):
        if not self.addon_accuracy > self.base_accuracy:
            raise ValueError(
                f"pair requires strictly better addon: base {self.base_accuracy} "
                f"vs addon {self.addon_accuracy}"
            )
        if self.provenance not in (PROVENANCE_ORIGINAL, PROVENANCE_RESIZE256):
            raise ValueError(f"unknown provenance {self.provenance!r}")


def curate(records: list[CandidateRecord], mode: str = "curated") -> list[CandidateRecord]:
    """Prepare a record list for pair building.

    Curated mode drops error-bearing records and digest duplicates (keeping
    the earliest record_id). Unfiltered mode keeps everything and pins
    error-bearing records to accuracy 0.0. Both are idempotent.
    """
    if mode == "curated":
        seen: set[str] = set()
        out = []
        for record in sorted(records, key=lambda r: r.record_id):
            if record.is_error or record.digest in seen:
                continue
            seen.add(record.digest)
            out.append(record)
        return out
    if mode == "unfiltered":
        return [
            dataclasses.replace(r, accuracy=0.0) if r.is_error and r.accuracy != 0.0 else r
            for r in records
        ]
    raise ValueError(f"unknown curation mode {mode!r}")


def build_pairs(
    records: list[CandidateRecord],
    policy: str = POLICY_UNIFORM_BETTER,
    seed: int = 0,
) -> list[PreferencePair]:
    """Build one pair per record that has a strictly better partner.

    Records whose accuracy equals the maximum produce no pair (nothing is
    strictly better), so distinct accuracies yield exactly len(records) - 1
    pairs. Pairs come back ordered by baseline record_id.

    Raises:
        ValueError: empty input, unknown policy, or a record without an
            accuracy (evaluate before pairing).
    """
    if not records:
        raise ValueError("cannot build pairs from an empty record set")
    if policy not in POLICIES:
        raise ValueError(f"unknown pairing policy {policy!r}")
    for record in records:
        if record.accuracy is None:
            raise ValueError(f"record {record.record_id} has no accuracy; evaluate it first")

    ordered = sorted(records, key=lambda r: r.record_id)
    pairs = []
    for base in ordered:
        better = [r for r in ordered if r.accuracy > base.accuracy]
        if not better:
            continue
        if policy == POLICY_UNIFORM_BETTER:
            rng = random.Random(seed * _SEED_STRIDE + base.record_id)
            addon = better[rng.randrange(len(better))]
        else:
            addon = min(better, key=lambda r: (r.accuracy - base.accuracy, r.record_id))
        pairs.append(
            PreferencePair(
                base_id=base.record_id,
                addon_id=addon.record_id,
                base_accuracy=base.accuracy,
                addon_accuracy=addon.accuracy,
                base_code=base.code,
                addon_code=addon.code,
            )
        )
    return pairs


_RESIZE_PAIR_RE = re.compile(r"(?<![A-Za-z])Resize\(\s*(size\s*=\s*)?\(\s*\d+\s*,\s*\d+\s*\)")
_RESIZE_SCALAR_RE = re.compile(r"(?<![A-Za-z])Resize\(\s*(size\s*=\s*)?(\d+)")


def rewrite_resize(code: str, size: int = RESIZE_AUGMENT_TARGET) -> str:
    """Rewrite every Resize target in candidate code to the given size.

    Handles the tuple form ``Resize((h, w))``, the scalar form
    ``Resize(n)``, and the keyword variants of both. Other size-bearing ops
    (RandomCrop, RandomResizedCrop) are left alone.
    """

    def _pair(match: re.Match) -> str:
        return f"Resize({match.group(1) or ''}({size}, {size})"

    def _scalar(match: re.Match) -> str:
        return f"Resize({match.group(1) or ''}{size}"

    return _RESIZE_SCALAR_RE.sub(_scalar, _RESIZE_PAIR_RE.sub(_pair, code))


def augment_resize256(
    pairs: list[PreferencePair],
    fraction: float,
    seed: int = 0,
) -> list[PreferencePair]:
    """Clone floor(fraction * len(pairs)) pairs with resize-256 targets.

    The subset is a seeded uniform draw without replacement. Only the
    target (addon) code is rewritten; the baseline side stays as observed.
    A rewrite that breaks structural validity or collapses the clone onto
    its own baseline code is skipped, so the returned list can be shorter
    than the draw. Returns only the clones; callers concatenate.

    Raises:
        ValueError: fraction outside [0, 1].
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    if not pairs:
        return []
    take = math.floor(fraction * len(pairs))
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(len(pairs)), take))

    clones = []
    for i in chosen:
        pair = pairs[i]
        rewritten = rewrite_resize(pair.addon_code)
        if not validate_candidate(rewritten).is_valid:
            continue
        if canonicalize(rewritten).digest == canonicalize(pair.base_code).digest:
            continue
        clones.append(
            dataclasses.replace(pair, addon_code=rewritten, provenance=PROVENANCE_RESIZE256)
        )
    return clones


def emit_dataset(pairs: list[PreferencePair], path: str | Path) -> int:
    """Write pairs as fine-tune samples, one JSON object per line.

    Each sample holds the rendered prompt lines (baseline accuracy and code
    bound into the fine-tune template) and the target output lines (addon
    code inside a single tag pair). Emission is byte-stable for identical
    input.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for pair in pairs:
            prompt = render_lines(
                FINETUNE_DIRECT.segments,
                {
                    "accuracy": format_accuracy(pair.base_accuracy),
                    "transform_code": pair.base_code,
                },
            )
            output = render_lines(
                FINETUNE_DIRECT.output_segments,
                {"addon_transform_code": pair.addon_code},
            )
            sample = {"prompt": prompt, "output": output, "provenance": pair.provenance}
            fh.write(json.dumps(sample) + "\n")
    return len(pairs)
