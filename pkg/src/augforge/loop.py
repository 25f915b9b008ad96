"""Campaign and loop orchestration.

Two entry points. ``run_brute_campaign`` enumerates pipelines, renders them
to candidate files, optionally evaluates each one, and stores the records.
``run_loop`` drives the iterative generation loop: every epoch draws
reference candidates from the store, prompts the model for new candidates,
validates and evaluates them, admits those above the filter threshold, and
emits the epoch's fine-tune dataset plus a training job description for the
adapter trainer.

Determinism contract: given the same store content, seeds, configuration,
and a deterministic endpoint/evaluator, a rerun reproduces the stats table
byte for byte. Every random draw derives its seed from named parts (purpose,
configured seed, epoch, slot), never from global state.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .codec import extract_transform_block, validate_candidate
from .gateway import EndpointConfig, SamplingParams, generate_candidates, select_references
from .prompts import format_accuracy, render_prompt
from .repository import (
    MODE_CURATED,
    MODE_UNFILTERED,
    Repository,
    Source,
    new_record,
)
from .scheduler import (
    CANONICAL_EVAL_CONFIG,
    WORKER_UNREACHABLE,
    EvalConfig,
    EvalJob,
    EvalResult,
    submit,
    surrogate_evaluate,
)
from .stats import accuracy_density, trend_correlation
from .transform_space import enumerate_pipelines, render_pipeline

DEFAULT_N_EPOCHS = 28
DEFAULT_CANDIDATES_PER_EPOCH = 10
DEFAULT_FILTER_THRESHOLD = 0.55
DEFAULT_AUGMENT_FRACTION = 0.5

PROMPT_MODES = {"direct": "generate_direct", "cot": "generate_cot"}

# Adapter-training hyperparameters emitted verbatim into every fine-tune job
# description. The trainer consumes these as-is.
LORA_HYPERPARAMETERS = {
    "r": 32,
    "lora_alpha": 32,
    "lora_dropout": 0.05,
    "bias": "none",
    "target_modules": ["q_proj", "k_proj", "v_proj", "o_proj"],
}
TRAINING_HYPERPARAMETERS = {
    "optimizer": "paged_adamw_8bit",
    "learning_rate": 1.5e-4,
    "lr_scheduler_type": "cosine",
    "warmup_ratio": 0.05,
    "num_train_epochs": 3,
    "per_device_train_batch_size": 1,
    "gradient_accumulation_steps": 8,
    "effective_batch_size": 8,
}

STATS_HEADER = ("epoch_index", "n_generated", "n_valid", "n_admitted", "mean_accuracy", "max_accuracy")


class EpochAbort(RuntimeError):
    """An epoch could not make progress; store state is unchanged for it."""


def _derive_seed(*parts) -> int:
    """Stable 64-bit seed from named parts (platform-independent)."""
    text = ":".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def make_worker_evaluator(endpoint: str, job_timeout_s: float = 900.0):
    """Adapt the HTTP worker protocol to the evaluator callable shape."""

    def _evaluate(code: str, config: EvalConfig) -> EvalResult:
        job = EvalJob(job_id="loop", code=code, config=config)
        return submit([job], endpoint, job_timeout_s=job_timeout_s)[0]

    return _evaluate


# ---------------------------------------------------------------------------
# Brute-force campaign
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CampaignReport:
    total: int
    per_arity: dict
    validated: int
    evaluated: int
    errors: int


def run_brute_campaign(
    workdir: str | Path,
    arities: tuple[int, ...],
    count: int,
    seed: int,
    repo: Repository,
    evaluate: str = "none",
    worker_url: str | None = None,
) -> CampaignReport:
    """Enumerate, render, validate, optionally evaluate, and store pipelines.

    Every rendered candidate is written to ``transforms/bf_<arity>_<index>.txt``
    under the workdir and inserted as a brute-source record. Storage uses the
    unfiltered mode: a campaign is a census of the search space, so parameter
    collisions (two draws binding identical values) still count as records.

    evaluate: "none" stores records without accuracies, "surrogate" scores
    in-process, "worker" sends each candidate to worker_url.

    Raises:
        ValueError: bad arity/count/evaluate arguments, or a rendered
            candidate failing structural validation (catalog corruption).
    """
    if evaluate not in ("none", "surrogate", "worker"):
        raise ValueError(f"evaluate must be none|surrogate|worker, got {evaluate!r}")
    if evaluate == "worker" and not worker_url:
        raise ValueError("evaluate=worker requires worker_url")

    workdir = Path(workdir)
    tx_dir = workdir / "transforms"
    tx_dir.mkdir(parents=True, exist_ok=True)

    evaluator = None
    if evaluate == "surrogate":
        evaluator = surrogate_evaluate
    elif evaluate == "worker":
        evaluator = make_worker_evaluator(worker_url)

    per_arity: dict[int, int] = {}
    validated = evaluated = errors = 0
    for arity in arities:
        pipelines = enumerate_pipelines(arity, count, seed)
        for index, pipeline in enumerate(pipelines):
            code = render_pipeline(pipeline)
            report = validate_candidate(code)
            if not report.is_valid:
                raise ValueError(
                    f"rendered pipeline bf_{arity}_{index} failed validation: "
                    f"{report.violations}"
                )
            validated += 1
            (tx_dir / f"bf_{arity}_{index:05d}.txt").write_text(code, encoding="utf-8")

            accuracy = error_class = None
            if evaluator is not None:
                result = evaluator(code, CANONICAL_EVAL_CONFIG)
                if result.ok:
                    accuracy = result.accuracy
                    evaluated += 1
                else:
                    error_class = result.error_class
                    errors += 1
            record = new_record(
                code,
                Source(kind="brute", arity=arity),
                accuracy=accuracy,
                error_class=error_class,
            )
            repo.insert(record, mode=MODE_UNFILTERED)
        per_arity[arity] = count

    report = CampaignReport(
        total=sum(per_arity.values()),
        per_arity=per_arity,
        validated=validated,
        evaluated=evaluated,
        errors=errors,
    )
    manifest = {
        "kind": "brute_campaign",
        "seed": seed,
        "count_per_arity": count,
        "arities": list(arities),
        "total_records": report.total,
        "validated": report.validated,
        "evaluate": evaluate,
        "evaluated": report.evaluated,
        "errors": report.errors,
        "file_pattern": "transforms/bf_<arity>_<index>.txt",
    }
    (workdir / "brute_manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )
    return report


# ---------------------------------------------------------------------------
# Iterative loop
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LoopConfig:
    """Complete, serializable description of one loop run."""

    n_epochs: int = DEFAULT_N_EPOCHS
    candidates_per_epoch: int = DEFAULT_CANDIDATES_PER_EPOCH
    filter_threshold: float = DEFAULT_FILTER_THRESHOLD
    prompt_mode: str = "direct"
    curation_mode: str = MODE_CURATED
    pairing_policy: str = "uniform_better"
    augment_fraction: float = DEFAULT_AUGMENT_FRACTION
    reference_mode: str = "fresh"  # "fresh": new references per slot; "shared": per epoch
    reference_seed: int = 0
    pairing_seed: int = 0
    sampling: SamplingParams = field(default_factory=SamplingParams)
    eval_config: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.n_epochs < 1:
            raise ValueError("n_epochs must be >= 1")
        if self.candidates_per_epoch < 1:
            raise ValueError("candidates_per_epoch must be >= 1")
        if not 0.0 <= self.filter_threshold <= 1.0:
            raise ValueError("filter_threshold must lie in [0, 1]")
        if self.prompt_mode not in PROMPT_MODES:
            raise ValueError(f"prompt_mode must be direct|cot, got {self.prompt_mode!r}")
        if self.curation_mode not in (MODE_CURATED, MODE_UNFILTERED):
            raise ValueError(f"unknown curation mode {self.curation_mode!r}")
        if self.reference_mode not in ("fresh", "shared"):
            raise ValueError(f"reference_mode must be fresh|shared, got {self.reference_mode!r}")
        if not 0.0 <= self.augment_fraction <= 1.0:
            raise ValueError("augment_fraction must lie in [0, 1]")

    def to_json(self) -> dict:
        return {
            "n_epochs": self.n_epochs,
            "candidates_per_epoch": self.candidates_per_epoch,
            "filter_threshold": self.filter_threshold,
            "prompt_mode": self.prompt_mode,
            "curation_mode": self.curation_mode,
            "pairing_policy": self.pairing_policy,
            "augment_fraction": self.augment_fraction,
            "reference_mode": self.reference_mode,
            "reference_seed": self.reference_seed,
            "pairing_seed": self.pairing_seed,
            "sampling": {
                "temperature": self.sampling.temperature,
                "top_p": self.sampling.top_p,
                "top_k": self.sampling.top_k,
                "max_new_tokens": self.sampling.max_new_tokens,
            },
            "eval_config": self.eval_config.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "LoopConfig":
        sampling = data.get("sampling", {})
        eval_config = data.get("eval_config")
        return cls(
            n_epochs=data.get("n_epochs", DEFAULT_N_EPOCHS),
            candidates_per_epoch=data.get("candidates_per_epoch", DEFAULT_CANDIDATES_PER_EPOCH),
            filter_threshold=data.get("filter_threshold", DEFAULT_FILTER_THRESHOLD),
            prompt_mode=data.get("prompt_mode", "direct"),
            curation_mode=data.get("curation_mode", MODE_CURATED),
            pairing_policy=data.get("pairing_policy", "uniform_better"),
            augment_fraction=data.get("augment_fraction", DEFAULT_AUGMENT_FRACTION),
            reference_mode=data.get("reference_mode", "fresh"),
            reference_seed=data.get("reference_seed", 0),
            pairing_seed=data.get("pairing_seed", 0),
            sampling=SamplingParams(**sampling) if sampling else SamplingParams(),
            eval_config=EvalConfig.from_json(eval_config) if eval_config else EvalConfig(),
        )


@dataclass
class EpochStats:
    """Per-epoch outcome counts for the stats table.

    n_generated counts generation attempts (slots), n_valid counts
    candidates that evaluated to an accuracy, n_admitted counts stored
    records strictly above the filter threshold. mean/max cover the
    evaluated accuracies and are None when nothing evaluated.
    """

    epoch_index: int
    n_generated: int
    n_valid: int
    n_admitted: int
    mean_accuracy: float | None
    max_accuracy: float | None
    accuracies: list = field(default_factory=list)

    def csv_row(self) -> list[str]:
        fmt = lambda v: "" if v is None else f"{v:.6f}"
        return [
            str(self.epoch_index),
            str(self.n_generated),
            str(self.n_valid),
            str(self.n_admitted),
            fmt(self.mean_accuracy),
            fmt(self.max_accuracy),
        ]


@dataclass
class LoopResult:
    epochs_completed: int
    stats: list
    aborted: bool = False
    abort_reason: str = ""


def run_epoch(
    repo: Repository,
    epoch_index: int,
    config: LoopConfig,
    llm_endpoint: EndpointConfig,
    evaluator,
) -> EpochStats:
    """Run one generation epoch against the store.

    Each slot draws its own pair of reference candidates (reference_mode
    "fresh") or shares one epoch-wide draw ("shared"), renders the prompt,
    requests one completion, extracts and validates the candidate, and
    evaluates valid extractions. All records land in the store together
    after the whole epoch is evaluated, so an abort leaves no partial epoch.

    Raises:
        EpochAbort: every slot failed at transport, or every evaluation
            came back worker_unreachable. The store is not modified.
    """
    template_id = PROMPT_MODES[config.prompt_mode]
    shared_refs = None
    if config.reference_mode == "shared":
        shared_refs = select_references(
            repo, _derive_seed("refs", config.reference_seed, epoch_index)
        )

    # Generation phase: one completion per slot.
    completions = []
    transport_failures = 0
    for slot in range(config.candidates_per_epoch):
        refs = shared_refs
        if refs is None:
            refs = select_references(
                repo, _derive_seed("refs", config.reference_seed, epoch_index, slot)
            )
        prompt = render_prompt(
            template_id,
            {
                "accuracy": format_accuracy(refs[0].accuracy),
                "transform_code": refs[0].code,
                "addon_accuracy": format_accuracy(refs[1].accuracy),
                "addon_transform_code": refs[1].code,
            },
        )
        result = generate_candidates(prompt, 1, llm_endpoint, config.sampling)[0]
        if not result.ok:
            transport_failures += 1
            completions.append(None)
        else:
            completions.append(result.text)

    if transport_failures == config.candidates_per_epoch:
        raise EpochAbort(f"epoch {epoch_index}: every generation attempt failed at transport")

    # Extraction and evaluation phase.
    pending = []  # (record, eval_result | None)
    eval_attempts = 0
    unreachable = 0
    for text in completions:
        if text is None:
            continue
        extraction = extract_transform_block(text)
        code = extraction.extracted_code
        if code is not None and extraction.is_valid:
            structural = validate_candidate(code)
        else:
            structural = extraction
        if code is None or not code.strip():
            # Nothing extractable; keep the raw completion as the record body
            # so the unfiltered mode retains the failure.
            body = text.strip() or "<empty completion>"
            source = Source(
                kind="llm", epoch_index=epoch_index, prompt_mode=config.prompt_mode
            )
            try:
                record = new_record(body, source, validity="invalid")
            except ValueError:
                # comment-only completions canonicalize to nothing
                record = new_record("<empty completion>", source, validity="invalid")
            pending.append(record)
            continue
        if not structural.is_valid:
            record = new_record(
                code,
                Source(kind="llm", epoch_index=epoch_index, prompt_mode=config.prompt_mode),
                validity="invalid",
            )
            pending.append(record)
            continue

        eval_attempts += 1
        result = evaluator(code, config.eval_config)
        if result.error_class == WORKER_UNREACHABLE:
            unreachable += 1
        record = new_record(
            code,
            Source(kind="llm", epoch_index=epoch_index, prompt_mode=config.prompt_mode),
            accuracy=result.accuracy,
            error_class=result.error_class,
            eval_config=config.eval_config,
        )
        pending.append(record)

    if eval_attempts > 0 and unreachable == eval_attempts:
        raise EpochAbort(f"epoch {epoch_index}: evaluation backend unreachable")

    insert_results = repo.insert_batch(pending, mode=config.curation_mode)

    accuracies = [r.accuracy for r in pending if r.accuracy is not None and r.error_class is None]
    n_admitted = sum(
        1
        for record, ins in zip(pending, insert_results)
        if ins.stored and record.accuracy is not None and record.accuracy > config.filter_threshold
    )
    return EpochStats(
        epoch_index=epoch_index,
        n_generated=config.candidates_per_epoch,
        n_valid=len(accuracies),
        n_admitted=n_admitted,
        mean_accuracy=sum(accuracies) / len(accuracies) if accuracies else None,
        max_accuracy=max(accuracies) if accuracies else None,
        accuracies=accuracies,
    )


def _candidate_pool(repo: Repository, config: LoopConfig):
    """Records eligible for pair building under the configured curation."""
    if config.curation_mode == MODE_CURATED:
        return repo.query(min_accuracy=config.filter_threshold, valid_only=True)
    return [r for r in repo.records() if r.accuracy is not None]


def _emit_epoch_dataset(workdir: Path, repo: Repository, config: LoopConfig, epoch_index: int) -> dict:
    """Write the epoch's fine-tune dataset and training job description."""
    from .pairs import augment_resize256, build_pairs, emit_dataset

    pool = _candidate_pool(repo, config)
    pairs = []
    if pool:
        pairs = build_pairs(
            pool,
            policy=config.pairing_policy,
            seed=_derive_seed("pairing", config.pairing_seed, epoch_index),
        )
    clones = augment_resize256(
        pairs,
        config.augment_fraction,
        seed=_derive_seed("augment", config.pairing_seed, epoch_index),
    )
    dataset_path = workdir / "datasets" / f"epoch_{epoch_index:03d}.jsonl"
    emit_dataset(pairs + clones, dataset_path)

    job = {
        "kind": "finetune_job",
        "epoch_index": epoch_index,
        "dataset": str(dataset_path.relative_to(workdir)),
        "n_pairs": len(pairs),
        "n_augmented": len(clones),
        "lora": LORA_HYPERPARAMETERS,
        "training": TRAINING_HYPERPARAMETERS,
    }
    job_path = workdir / "finetune" / f"epoch_{epoch_index:03d}.json"
    job_path.parent.mkdir(parents=True, exist_ok=True)
    job_path.write_text(json.dumps(job, indent=2) + "\n", encoding="utf-8")
    return job


def _write_stats(path: Path, stats: list) -> None:
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(STATS_HEADER)
        for row in stats:
            writer.writerow(row.csv_row())


def _density_summary(stats: list, workdir: Path) -> dict:
    """Estimate early- vs late-phase accuracy densities and the trend.

    Early pools the first third of epochs, late the last third (at least one
    epoch each). Sides with fewer than two samples are skipped.
    """
    out = {"early": None, "late": None, "trend_correlation": None}
    if not stats:
        return out
    third = max(1, len(stats) // 3)
    early = [a for s in stats[:third] for a in s.accuracies]
    late = [a for s in stats[-third:] for a in s.accuracies]
    density_dir = workdir / "density"
    for name, samples in (("early", early), ("late", late)):
        if len(samples) < 2:
            continue
        curve = accuracy_density(samples)
        density_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "phase": name,
            "n_samples": len(samples),
            "bandwidth": curve.bandwidth,
            "grid": [round(x, 10) for x in curve.grid.tolist()],
            "density": [round(y, 10) for y in curve.density.tolist()],
        }
        (density_dir / f"{name}.json").write_text(
            json.dumps(payload) + "\n", encoding="utf-8"
        )
        out[name] = f"density/{name}.json"

    points = [
        (float(s.epoch_index), s.mean_accuracy) for s in stats if s.mean_accuracy is not None
    ]
    if len(points) >= 2:
        try:
            out["trend_correlation"] = trend_correlation(points)
        except ValueError:
            pass
    return out


def run_loop(
    workdir: str | Path,
    config: LoopConfig,
    repo: Repository,
    llm_endpoint: EndpointConfig,
    evaluator,
    evaluator_label: str = "surrogate",
    on_epoch=None,
) -> LoopResult:
    """Run the full iterative loop and persist its artifacts.

    Writes under workdir: manifest.json (resolved configuration, usable as a
    replay config), stats.csv (one row per completed epoch, appended as the
    loop advances), datasets/epoch_*.jsonl and finetune/epoch_*.json per
    epoch, density/{early,late}.json and summary.json at the end.

    An EpochAbort stops the run; completed epochs stay persisted and the
    result carries the abort reason.
    """
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)

    manifest = {
        "kind": "loop_manifest",
        "config": config.to_json(),
        "endpoint": {"url": llm_endpoint.url, "model": llm_endpoint.model},
        "evaluator": evaluator_label,
        "store": repo.path.name if repo.path else None,
    }
    (workdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8"
    )

    stats_path = workdir / "stats.csv"
    stats: list[EpochStats] = []
    aborted = False
    abort_reason = ""
    for epoch_index in range(config.n_epochs):
        try:
            epoch_stats = run_epoch(repo, epoch_index, config, llm_endpoint, evaluator)
        except EpochAbort as abort:
            aborted = True
            abort_reason = str(abort)
            break
        stats.append(epoch_stats)
        _write_stats(stats_path, stats)
        _emit_epoch_dataset(workdir, repo, config, epoch_index)
        if on_epoch is not None:
            on_epoch(epoch_stats)

    _write_stats(stats_path, stats)
    summary = {
        "kind": "loop_summary",
        "epochs_completed": len(stats),
        "epochs_requested": config.n_epochs,
        "total_generation_attempts": sum(s.n_generated for s in stats),
        "total_valid": sum(s.n_valid for s in stats),
        "total_admitted": sum(s.n_admitted for s in stats),
        "aborted": aborted,
        "abort_reason": abort_reason,
    }
    summary.update(_density_summary(stats, workdir))
    (workdir / "summary.json").write_text(
        json.dumps(summary, indent=2) + "\n", encoding="utf-8"
    )
    return LoopResult(
        epochs_completed=len(stats), stats=stats, aborted=aborted, abort_reason=abort_reason
    )
