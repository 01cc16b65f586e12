"""Core domain types shared across the toolkit: sectioned reports, condition
label vectors, error-count reports, rater panels, and JSONL manifests.

Construction is strict where a wire format demands it (the ``from_dict``
constructors raise on structurally broken input) and permissive elsewhere.
Semantic invariants are reported as data by :func:`validate_record` and
:func:`validate_manifest` so a whole manifest can be triaged in one pass
instead of dying on the first bad row.  All types are frozen dataclasses and
safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

__all__ = [
    "CONDITIONS",
    "TOP_5_CONDITIONS",
    "ERROR_CATEGORIES",
    "SIGNIFICANCE_LEVELS",
    "SECTION_NAMES",
    "Status",
    "Source",
    "Report",
    "LabelVector",
    "ErrorReport",
    "RaterPanel",
    "MalformedResponse",
    "canonical_condition",
    "validate_record",
    "validate_manifest",
    "read_jsonl",
    "write_jsonl",
]


class MalformedResponse(ValueError):
    """An LLM response that fails strict parsing; callers may retry."""

# Canonical condition ontology, in the fixed storage/report order used by every
# vector-shaped API in the package.
CONDITIONS: tuple[str, ...] = (
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Enlarged Cardiomediastinum",
    "Fracture",
    "Lung Lesion",
    "Lung Opacity",
    "No Finding",
    "Pleural Effusion",
    "Pleural Other",
    "Pneumonia",
    "Pneumothorax",
    "Support Devices",
)

# The five high-prevalence conditions commonly reported as a restricted view.
TOP_5_CONDITIONS: tuple[str, ...] = (
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Pleural Effusion",
)

_CANONICAL_BY_LOWER = {name.lower(): name for name in CONDITIONS}

# Fixed order of the six error categories counted by the structured judge.
ERROR_CATEGORIES: tuple[str, ...] = (
    "FalseFinding",
    "OmittedFinding",
    "WrongLocation",
    "WrongSeverity",
    "SpuriousComparison",
    "OmittedComparison",
)

SIGNIFICANCE_LEVELS: tuple[str, ...] = ("significant", "insignificant")

SECTION_NAMES: tuple[str, ...] = ("examination", "indication", "findings", "impression")


class Status(Enum):
    """Per-condition label status.  Blank means unmentioned, not negative."""

    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    UNCERTAIN = "Uncertain"
    BLANK = "Blank"


class Source(Enum):
    """How a report's sections were produced."""

    RULE_EXTRACTED = "RuleExtracted"
    GPT_STRUCTURED = "GptStructured"
    SYNTHETIC = "Synthetic"
    UNKNOWN = "Unknown"


def canonical_condition(name: str) -> str:
    """Resolve a condition name case-insensitively to its canonical form."""
    try:
        return _CANONICAL_BY_LOWER[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown condition name: {name!r}") from None


def _parse_status(value: Any) -> Status:
    if isinstance(value, Status):
        return value
    if isinstance(value, str):
        for status in Status:
            if status.value.lower() == value.strip().lower():
                return status
    raise ValueError(f"invalid status value: {value!r}")


# ---------------------------------------------------------------------------
# Report


@dataclass(frozen=True)
class Report:
    """A radiology report with up to four recognized sections.

    Absent sections are None.  Construction is permissive; use
    :func:`validate_record` to surface invariant violations (empty id, empty
    present section, literal "nan" body) as data.
    """

    id: str
    raw_text: str
    examination: str | None = None
    indication: str | None = None
    findings: str | None = None
    impression: str | None = None
    source: Source = Source.UNKNOWN

    def sections(self) -> dict[str, str | None]:
        """All four section slots by name, absent ones as None."""
        return {
            "examination": self.examination,
            "indication": self.indication,
            "findings": self.findings,
            "impression": self.impression,
        }

    def present_sections(self) -> dict[str, str]:
        return {k: v for k, v in self.sections().items() if v is not None}

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"report_id": self.id, "raw_text": self.raw_text}
        d.update(self.sections())
        d["source"] = self.source.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Report":
        source = d.get("source", Source.UNKNOWN.value)
        rid = d.get("report_id", d.get("id"))
        if rid is None:
            raise ValueError("record has no report_id")
        return cls(
            id=str(rid),
            raw_text=str(d.get("raw_text", "")),
            examination=d.get("examination"),
            indication=d.get("indication"),
            findings=d.get("findings"),
            impression=d.get("impression"),
            source=Source(source) if not isinstance(source, Source) else source,
        )


# ---------------------------------------------------------------------------
# LabelVector


@dataclass(frozen=True)
class LabelVector:
    """Status of every condition in the canonical ontology, exactly 14 entries."""

    statuses: Mapping[str, Status]

    def __post_init__(self):
        # Normalize to canonical insertion order so serialization is stable.
        ordered = {name: self.statuses[name] for name in CONDITIONS if name in self.statuses}
        if len(ordered) != len(self.statuses) or len(ordered) != len(CONDITIONS):
            missing = [n for n in CONDITIONS if n not in self.statuses]
            extra = [n for n in self.statuses if n not in _CANONICAL_BY_LOWER.values()]
            raise ValueError(
                f"label vector must cover the 14 conditions exactly; "
                f"missing={missing!r} unknown={extra!r}"
            )
        object.__setattr__(self, "statuses", ordered)

    def __getitem__(self, name: str) -> Status:
        return self.statuses[canonical_condition(name)]

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "LabelVector":
        """Strict parse: unknown names, missing names, bad statuses all raise."""
        statuses: dict[str, Status] = {}
        for name, value in raw.items():
            canonical = canonical_condition(str(name))
            if canonical in statuses:
                raise ValueError(f"duplicate condition name: {name!r}")
            statuses[canonical] = _parse_status(value)
        return cls(statuses)

    @classmethod
    def from_partial(cls, raw: Mapping[str, Any] | None = None) -> "LabelVector":
        """Build from a partial mapping, filling unmentioned conditions as Blank."""
        statuses = {name: Status.BLANK for name in CONDITIONS}
        for name, value in (raw or {}).items():
            statuses[canonical_condition(str(name))] = _parse_status(value)
        return cls(statuses)

    def to_dict(self) -> dict[str, str]:
        return {name: status.value for name, status in self.statuses.items()}

    def positives(self) -> tuple[str, ...]:
        return tuple(n for n, s in self.statuses.items() if s is Status.POSITIVE)


# ---------------------------------------------------------------------------
# ErrorReport


@dataclass(frozen=True)
class ErrorReport:
    """Counts of judged errors: six categories, each split by clinical significance."""

    counts: Mapping[str, Mapping[str, int]]

    def __post_init__(self):
        try:
            ordered = {
                cat: {lvl: self.counts[cat][lvl] for lvl in SIGNIFICANCE_LEVELS}
                for cat in ERROR_CATEGORIES
            }
        except (KeyError, TypeError) as exc:
            raise ValueError(f"incomplete error counts: {exc}") from None
        object.__setattr__(self, "counts", ordered)

    @classmethod
    def from_dict(cls, raw: Any) -> "ErrorReport":
        """Strict wire parse: exactly the six categories, integer counts >= 0."""
        if not isinstance(raw, Mapping):
            raise ValueError("error report must be a JSON object")
        if set(raw.keys()) != set(ERROR_CATEGORIES):
            raise ValueError(
                f"error report must have exactly the six category keys, got {sorted(raw)!r}"
            )
        counts: dict[str, dict[str, int]] = {}
        for cat in ERROR_CATEGORIES:
            cell = raw[cat]
            if not isinstance(cell, Mapping) or set(cell.keys()) != set(SIGNIFICANCE_LEVELS):
                raise ValueError(f"category {cat!r} must map significant/insignificant counts")
            parsed: dict[str, int] = {}
            for lvl in SIGNIFICANCE_LEVELS:
                v = cell[lvl]
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ValueError(f"{cat}.{lvl} must be an integer, got {v!r}")
                if v < 0:
                    raise ValueError(f"{cat}.{lvl} must be >= 0, got {v}")
                parsed[lvl] = v
            counts[cat] = parsed
        return cls(counts)

    @classmethod
    def from_counts(cls, partial: Mapping[str, tuple[int, int]] | None = None) -> "ErrorReport":
        """Lenient builder: partial maps category -> (significant, insignificant)."""
        counts = {cat: {"significant": 0, "insignificant": 0} for cat in ERROR_CATEGORIES}
        for cat, (sig, insig) in (partial or {}).items():
            if cat not in counts:
                raise ValueError(f"unknown error category: {cat!r}")
            counts[cat] = {"significant": int(sig), "insignificant": int(insig)}
        return cls(counts)

    @classmethod
    def zeros(cls) -> "ErrorReport":
        return cls.from_counts()

    def to_dict(self) -> dict[str, dict[str, int]]:
        return {cat: dict(cell) for cat, cell in self.counts.items()}

    @property
    def total(self) -> int:
        return sum(sum(cell.values()) for cell in self.counts.values())

    @property
    def significant_total(self) -> int:
        return sum(cell["significant"] for cell in self.counts.values())

    @property
    def error_free(self) -> bool:
        return self.total == 0


# ---------------------------------------------------------------------------
# RaterPanel


@dataclass(frozen=True)
class RaterPanel:
    """A rectangular grid of error reports: every rater scored every report."""

    report_ids: tuple[str, ...]
    rater_ids: tuple[str, ...]
    annotations: Mapping[tuple[str, str], ErrorReport]

    def __post_init__(self):
        if len(set(self.report_ids)) != len(self.report_ids):
            raise ValueError("duplicate report ids in panel")
        if len(set(self.rater_ids)) != len(self.rater_ids):
            raise ValueError("duplicate rater ids in panel")
        expected = {(rep, rat) for rep in self.report_ids for rat in self.rater_ids}
        got = set(self.annotations.keys())
        if got != expected:
            missing = sorted(expected - got)[:3]
            extra = sorted(got - expected)[:3]
            raise ValueError(
                f"panel must be rectangular; missing cells {missing!r}, stray cells {extra!r}"
            )

    def get(self, report_id: str, rater_id: str) -> ErrorReport:
        return self.annotations[(report_id, rater_id)]

    @classmethod
    def from_records(cls, records: Iterable[Mapping[str, Any]]) -> "RaterPanel":
        """Build from rows of {report_id, rater_id, errors}; order of first appearance."""
        report_ids: list[str] = []
        rater_ids: list[str] = []
        annotations: dict[tuple[str, str], ErrorReport] = {}
        for rec in records:
            rep = str(rec["report_id"])
            rat = str(rec["rater_id"])
            if rep not in report_ids:
                report_ids.append(rep)
            if rat not in rater_ids:
                rater_ids.append(rat)
            key = (rep, rat)
            if key in annotations:
                raise ValueError(f"duplicate panel cell for {key!r}")
            annotations[key] = ErrorReport.from_dict(rec["errors"])
        return cls(tuple(report_ids), tuple(rater_ids), annotations)

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {"report_id": rep, "rater_id": rat, "errors": self.get(rep, rat).to_dict()}
            for rat in self.rater_ids
            for rep in self.report_ids
        ]

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "RaterPanel":
        return cls.from_records(read_jsonl(path))

    def write_jsonl(self, path: str | Path) -> None:
        write_jsonl(path, self.to_records())


# ---------------------------------------------------------------------------
# Manifests: JSONL files of per-report records


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    """Read a JSONL file into a list of dicts; bad lines raise with their number."""
    records: list[dict[str, Any]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise ValueError(f"{path}: line {lineno}: expected a JSON object")
            records.append(record)
    return records


def write_jsonl(path: str | Path, records: Iterable[Mapping[str, Any]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def _validate_section_value(name: str, value: Any, out: list[str]) -> None:
    if value is None:
        return
    if not isinstance(value, str):
        out.append(f"section {name} must be a string or null")
        return
    if not value.strip():
        out.append(f"section {name} is present but empty")
    if name in ("findings", "impression") and value.strip() == "nan":
        out.append(f"section {name} contains the literal placeholder 'nan'")


def _validate_labels_value(raw: Any, out: list[str], key: str = "labels") -> None:
    if not isinstance(raw, Mapping):
        out.append(f"{key} must be an object mapping condition -> status")
        return
    seen: dict[str, Status] = {}
    for name, value in raw.items():
        try:
            canonical = canonical_condition(str(name))
        except ValueError:
            out.append(f"{key}: unknown condition {name!r}")
            continue
        try:
            seen[canonical] = _parse_status(value)
        except ValueError:
            out.append(f"{key}: invalid status {value!r} for {name}")
    for name in CONDITIONS:
        if name not in seen:
            out.append(f"{key}: missing condition {name}")
    if seen.get("No Finding") is Status.POSITIVE:
        others = [n for n, s in seen.items() if s is Status.POSITIVE and n != "No Finding"]
        if others:
            out.append(f"{key}: No Finding is Positive alongside positive {others!r}")


def validate_record(record: Mapping[str, Any]) -> list[str]:
    """Check one manifest record; returns human-readable violations (empty = valid)."""
    out: list[str] = []
    rid = record.get("report_id")
    if rid is None:
        out.append("missing report_id")
    elif not isinstance(rid, str) or not rid.strip():
        out.append("report_id must be a nonempty string")
    raw = record.get("raw_text")
    if raw is not None and not isinstance(raw, str):
        out.append("raw_text must be a string")
    for name in SECTION_NAMES:
        if name in record:
            _validate_section_value(name, record[name], out)
    for key in ("labels", "pred_labels", "ref_labels"):
        if key in record and record[key] is not None:
            _validate_labels_value(record[key], out, key=key)
    for key in ("candidate", "reference"):
        if key in record and record[key] is not None and not isinstance(record[key], str):
            out.append(f"{key} must be a string")
    if "image_path" in record and record["image_path"] is not None:
        if not isinstance(record["image_path"], str):
            out.append("image_path must be a string")
    return out


def validate_manifest(records: Sequence[Mapping[str, Any]]) -> list[str]:
    """Validate every record and cross-record invariants (duplicate ids)."""
    out: list[str] = []
    seen_ids: set[str] = set()
    for i, record in enumerate(records):
        prefix = f"record {i}"
        rid = record.get("report_id")
        if isinstance(rid, str) and rid.strip():
            prefix = f"record {i} ({rid})"
            if rid in seen_ids:
                out.append(f"{prefix}: duplicate id")
            seen_ids.add(rid)
        out.extend(f"{prefix}: {v}" for v in validate_record(record))
    return out
