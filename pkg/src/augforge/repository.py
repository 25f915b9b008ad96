"""Append-only store of evaluated candidates.

Every candidate that reaches evaluation lands here together with its score
or error class, its provenance (brute-force campaign or model generation),
and the training configuration it was scored under. The on-disk format is
line-delimited JSON behind a one-line header, so a crash can damage at most
the final line and history is never rewritten in place.

Two insertion modes exist. The curated mode deduplicates by canonical digest
and rejects error-bearing records; the unfiltered mode keeps everything and
pins error records to accuracy 0.0. Both are first-class: the unfiltered
store feeds the ablation that trains on unfiltered data.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .codec import canonicalize
from .scheduler import CANONICAL_EVAL_CONFIG, ERROR_CLASSES, EvalConfig

STORE_FORMAT = "augforge-store"
STORE_VERSION = 1

MODE_CURATED = "curated"
MODE_UNFILTERED = "unfiltered"

SOURCE_BRUTE = "brute"
SOURCE_LLM = "llm"

VALIDITY_VALID = "valid"
VALIDITY_INVALID = "invalid"


class MalformedStoreError(ValueError):
    """A store or export file failed structural checks; nothing was loaded."""


@dataclass(frozen=True)
class Source:
    """Provenance of a candidate.

    kind "brute" carries the pipeline arity; kind "llm" carries the loop
    epoch the candidate was generated in and the prompt mode used.
    """

    kind: str
    arity: int | None = None
    epoch_index: int | None = None
    prompt_mode: str | None = None

    def __post_init__(self):
        if self.kind == SOURCE_BRUTE:
            if self.arity is None or not 1 <= self.arity <= 3:
                raise ValueError(f"brute source needs arity in 1..3, got {self.arity}")
            if self.epoch_index is not None or self.prompt_mode is not None:
                raise ValueError("brute source carries no epoch fields")
        elif self.kind == SOURCE_LLM:
            if self.epoch_index is None or self.epoch_index < 0:
                raise ValueError("llm source needs epoch_index >= 0")
            if self.prompt_mode not in ("direct", "cot"):
                raise ValueError(f"llm source needs prompt_mode direct|cot, got {self.prompt_mode}")
            if self.arity is not None:
                raise ValueError("llm source carries no arity")
        else:
            raise ValueError(f"unknown source kind {self.kind!r}")

    def to_json(self) -> dict:
        data = {"kind": self.kind}
        if self.kind == SOURCE_BRUTE:
            data["arity"] = self.arity
        else:
            data["epoch_index"] = self.epoch_index
            data["prompt_mode"] = self.prompt_mode
        return data

    @classmethod
    def from_json(cls, data: dict) -> "Source":
        return cls(
            kind=data["kind"],
            arity=data.get("arity"),
            epoch_index=data.get("epoch_index"),
            prompt_mode=data.get("prompt_mode"),
        )


@dataclass(frozen=True)
class CandidateRecord:
    """One evaluated candidate: code, provenance, and outcome."""

    code: str
    digest: str
    source: Source
    validity: str
    accuracy: float | None
    error_class: str | None
    eval_config: EvalConfig
    created_at: str
    record_id: int | None = None

    def __post_init__(self):
        if not self.code:
            raise ValueError("record code must be non-empty")
        if self.validity not in (VALIDITY_VALID, VALIDITY_INVALID):
            raise ValueError(f"validity must be valid|invalid, got {self.validity!r}")
        if self.accuracy is not None and not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy must lie in [0, 1], got {self.accuracy}")
        if self.error_class is not None and self.error_class not in ERROR_CLASSES:
            raise ValueError(f"unknown error class {self.error_class!r}")

    @property
    def is_error(self) -> bool:
        return self.error_class is not None or self.validity != VALIDITY_VALID

    def to_json(self) -> dict:
        return {
            "record_id": self.record_id,
            "code": self.code,
            "digest": self.digest,
            "source": self.source.to_json(),
            "validity": self.validity,
            "accuracy": self.accuracy,
            "error_class": self.error_class,
            "eval_config": self.eval_config.to_json(),
            "created_at": self.created_at,
        }

    @classmethod
    def from_json(cls, data: dict) -> "CandidateRecord":
        return cls(
            record_id=data["record_id"],
            code=data["code"],
            digest=data["digest"],
            source=Source.from_json(data["source"]),
            validity=data["validity"],
            accuracy=data["accuracy"],
            error_class=data["error_class"],
            eval_config=EvalConfig.from_json(data["eval_config"]),
            created_at=data["created_at"],
        )


def new_record(
    code: str,
    source: Source,
    accuracy: float | None = None,
    error_class: str | None = None,
    validity: str = VALIDITY_VALID,
    eval_config: EvalConfig = CANONICAL_EVAL_CONFIG,
    created_at: str | None = None,
) -> CandidateRecord:
    """Build an unstored record, deriving the canonical digest from the code."""
    digest = canonicalize(code).digest
    return CandidateRecord(
        code=code,
        digest=digest,
        source=source,
        validity=validity,
        accuracy=accuracy,
        error_class=error_class,
        eval_config=eval_config,
        created_at=created_at or datetime.now(timezone.utc).isoformat(),
    )


@dataclass(frozen=True)
class InsertResult:
    """Outcome of one insert: stored, duplicate of an earlier record, or rejected."""

    status: str  # "stored" | "duplicate" | "rejected"
    record_id: int | None = None
    existing_id: int | None = None
    reason: str = ""

    @property
    def stored(self) -> bool:
        return self.status == "stored"


@dataclass
class Repository:
    """Append-only candidate store, optionally file-backed.

    With a path, every stored record is appended as one JSON line; reopening
    the same path rebuilds the in-memory index from the file. Without a path
    the store is purely in-memory (tests, dry runs).
    """

    path: Path | None = None
    _records: list[CandidateRecord] = field(default_factory=list, repr=False)
    _digest_index: dict[str, int] = field(default_factory=dict, repr=False)
    _next_id: int = 1

    def __post_init__(self):
        if self.path is not None:
            self.path = Path(self.path)
            if self.path.exists():
                self._load()
            else:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                header = {"format": STORE_FORMAT, "version": STORE_VERSION}
                self.path.write_text(json.dumps(header) + "\n", encoding="utf-8")

    # -- loading ------------------------------------------------------------

    def _load(self):
        text = self.path.read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise MalformedStoreError(f"{self.path}: empty store file")
        self._check_header(lines[0], str(self.path))
        # A crash can truncate only the final line of an append-only file;
        # tolerate exactly that and nothing else.
        body = lines[1:]
        if body and not text.endswith("\n"):
            try:
                json.loads(body[-1])
            except json.JSONDecodeError:
                body = body[:-1]
        for i, line in enumerate(body, start=2):
            try:
                record = CandidateRecord.from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedStoreError(f"{self.path}: bad record on line {i}: {exc}") from exc
            self._index(record)

    @staticmethod
    def _check_header(line: str, origin: str):
        try:
            header = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedStoreError(f"{origin}: unreadable header line") from exc
        if not isinstance(header, dict) or header.get("format") != STORE_FORMAT:
            raise MalformedStoreError(f"{origin}: not a {STORE_FORMAT} file")
        if header.get("version") != STORE_VERSION:
            raise MalformedStoreError(
                f"{origin}: unsupported store version {header.get('version')!r}"
            )

    def _index(self, record: CandidateRecord):
        if record.record_id is None:
            raise MalformedStoreError("stored record lacks a record_id")
        self._records.append(record)
        self._digest_index.setdefault(record.digest, record.record_id)
        self._next_id = max(self._next_id, record.record_id + 1)

    # -- writing ------------------------------------------------------------

    def _append_line(self, record: CandidateRecord):
        if self.path is None:
            return
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.to_json()) + "\n")

    def insert(self, record: CandidateRecord, mode: str = MODE_CURATED) -> InsertResult:
        """Insert one record under the given curation mode.

        Curated mode: digests already present come back as duplicates (with
        the id of the earlier record), error-bearing records are rejected.
        Unfiltered mode: everything is stored; error-bearing records keep
        their error class but are pinned to accuracy 0.0.
        """
        if mode not in (MODE_CURATED, MODE_UNFILTERED):
            raise ValueError(f"unknown mode {mode!r}")
        if record.record_id is not None:
            raise ValueError("record already carries a record_id; records are insert-once")

        if mode == MODE_CURATED:
            if record.is_error:
                reason = record.error_class or record.validity
                return InsertResult(status="rejected", reason=reason)
            existing = self._digest_index.get(record.digest)
            if existing is not None:
                return InsertResult(status="duplicate", existing_id=existing)
        elif record.is_error:
            record = dataclasses.replace(record, accuracy=0.0)

        record = dataclasses.replace(record, record_id=self._next_id)
        self._next_id += 1
        self._records.append(record)
        self._digest_index.setdefault(record.digest, record.record_id)
        self._append_line(record)
        return InsertResult(status="stored", record_id=record.record_id)

    def insert_batch(self, records: list[CandidateRecord], mode: str = MODE_CURATED) -> list[InsertResult]:
        """Insert records in order; invariant violations abort before any write."""
        for record in records:
            if record.record_id is not None:
                raise ValueError("batch contains an already-stored record")
        return [self.insert(record, mode) for record in records]

    # -- reading ------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._records)

    def records(self) -> list[CandidateRecord]:
        return list(self._records)

    def get(self, record_id: int) -> CandidateRecord:
        for record in self._records:
            if record.record_id == record_id:
                return record
        raise KeyError(record_id)

    def query(
        self,
        min_accuracy: float | None = None,
        source_kind: str | None = None,
        top_k: int | None = None,
        valid_only: bool = False,
    ) -> list[CandidateRecord]:
        """Filter and rank records.

        min_accuracy is a strict bound: records at exactly the threshold are
        excluded. Ranking is accuracy descending; ties and unevaluated
        records order by ascending record_id (unevaluated records sort last).
        """
        found = self._records
        if valid_only:
            found = [r for r in found if r.validity == VALIDITY_VALID and r.error_class is None]
        if source_kind is not None:
            found = [r for r in found if r.source.kind == source_kind]
        if min_accuracy is not None:
            found = [r for r in found if r.accuracy is not None and r.accuracy > min_accuracy]
        ranked = sorted(
            found,
            key=lambda r: (-(r.accuracy if r.accuracy is not None else float("-inf")), r.record_id),
        )
        if top_k is not None:
            if top_k < 0:
                raise ValueError("top_k must be >= 0")
            ranked = ranked[:top_k]
        return ranked

    # -- export / import ----------------------------------------------------

    def export(self, path: str | Path) -> int:
        """Write the full store (header plus records) to path; returns record count."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        lines = [json.dumps({"format": STORE_FORMAT, "version": STORE_VERSION})]
        lines.extend(json.dumps(r.to_json()) for r in self._records)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return len(self._records)

    def import_file(self, path: str | Path) -> int:
        """Load an exported file into this (empty) store; returns record count.

        The file is parsed completely before anything is admitted, so a
        malformed or truncated export leaves the store untouched.
        """
        if self._records:
            raise ValueError("import target must be an empty store")
        path = Path(path)
        lines = path.read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise MalformedStoreError(f"{path}: empty export file")
        self._check_header(lines[0], str(path))
        parsed = []
        seen_ids = set()
        for i, line in enumerate(lines[1:], start=2):
            try:
                record = CandidateRecord.from_json(json.loads(line))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise MalformedStoreError(f"{path}: bad record on line {i}: {exc}") from exc
            if record.record_id is None or record.record_id in seen_ids:
                raise MalformedStoreError(f"{path}: missing or duplicate record_id on line {i}")
            seen_ids.add(record.record_id)
            parsed.append(record)
        for record in parsed:
            self._index(record)
            self._append_line(record)
        return len(parsed)
