"""Report sectioning: whitespace normalization, rule-based header extraction,
and the prompt/response pair for LLM-based restructuring of messy reports.

The rule-based path is deliberately conservative: it only relocates text that
sits under a recognized header, never rewrites it.  The LLM path exists for
reports whose prose ignores headers entirely; its exchange is a strict JSON
contract so responses can be validated mechanically.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

from .core import MalformedResponse, Report, Source

__all__ = [
    "HeaderMap",
    "DEFAULT_HEADER_MAP",
    "NoSectionsFound",
    "PromptPayload",
    "normalize",
    "extract_sections",
    "reassemble",
    "build_structuring_prompt",
    "parse_structuring_response",
    "STRUCTURING_SYSTEM",
    "STRUCTURING_INSTRUCTIONS",
    "DEFAULT_STRUCTURING_EXAMPLES",
]


class NoSectionsFound(ValueError):
    """Raised when no recognized section header occurs in a report."""


_CANONICAL_SECTIONS = ("examination", "indication", "findings", "impression")


@dataclass(frozen=True)
class HeaderMap:
    """Maps each canonical section to the uppercase header aliases that open it.

    Aliases must be disjoint across sections; matching is case-insensitive and
    requires a trailing colon, so prose mentions of the words do not trigger.
    """

    aliases: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        unknown = set(self.aliases) - set(_CANONICAL_SECTIONS)
        if unknown:
            raise ValueError(f"unknown canonical sections: {sorted(unknown)!r}")
        missing = set(_CANONICAL_SECTIONS) - set(self.aliases)
        if missing:
            raise ValueError(f"missing canonical sections: {sorted(missing)!r}")
        seen: dict[str, str] = {}
        for section, names in self.aliases.items():
            if not names:
                raise ValueError(f"section {section} has no aliases")
            for name in names:
                if name != name.upper():
                    raise ValueError(f"alias {name!r} must be uppercase")
                if name in seen:
                    raise ValueError(f"alias {name!r} assigned to both {seen[name]} and {section}")
                seen[name] = section
        # Longest-first alternation so e.g. REASON FOR EXAMINATION wins over
        # REASON FOR EXAM.
        ordered = sorted(seen, key=len, reverse=True)
        pattern = re.compile(
            r"\b(" + "|".join(re.escape(a) for a in ordered) + r")\s*:",
            re.IGNORECASE,
        )
        object.__setattr__(self, "_section_by_alias", {a: seen[a] for a in ordered})
        object.__setattr__(self, "_pattern", pattern)

    def pattern(self) -> re.Pattern:
        return self._pattern

    def section_for(self, alias: str) -> str:
        return self._section_by_alias[alias.upper()]

    def primary_alias(self, section: str) -> str:
        return self.aliases[section][0]

    def starts_with_header(self, line: str) -> bool:
        m = self._pattern.match(line)
        return m is not None and m.start() == 0

    @classmethod
    def from_json(cls, path: str | Path) -> "HeaderMap":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError("header map file must be a JSON object")
        return cls({str(k): tuple(str(a) for a in v) for k, v in raw.items()})


DEFAULT_HEADER_MAP = HeaderMap(
    {
        "examination": ("EXAMINATION", "EXAM", "TYPE OF EXAMINATION", "STUDY"),
        "indication": (
            "INDICATION",
            "HISTORY",
            "REASON FOR STUDY",
            "REASON FOR EXAM",
            "REASON FOR EXAMINATION",
            "CLINICAL HISTORY",
            "CLINICAL INDICATION",
        ),
        "findings": ("FINDINGS", "FINDING"),
        "impression": ("IMPRESSION", "IMPRESSIONS", "CONCLUSION", "CONCLUSIONS"),
    }
)


def normalize(raw_text: str, headers: HeaderMap | None = None) -> str:
    """Normalize report whitespace into one line per section.

    CRLF becomes LF, runs of spaces and tabs collapse to one space within a
    line, and hard-wrapped lines are joined with a space unless the next line
    opens with a recognized header alias, in which case a line break survives.
    Content is never altered: banner lines and underscore runs pass through.
    """
    headers = headers or DEFAULT_HEADER_MAP
    text = raw_text.replace("\r\n", "\n").replace("\r", "\n")
    lines = [re.sub(r"[ \t]+", " ", line).strip() for line in text.split("\n")]
    out: list[str] = []
    for line in lines:
        if not line:
            continue
        if out and headers.starts_with_header(line):
            out.append("\n")
        elif out:
            out.append(" ")
        out.append(line)
    return "".join(out).strip()


_LIST_PREFIX = re.compile(r"^(?:\d{1,3}[.)]|[-*•]+)\s+")


def _clean_body(body: str) -> str | None:
    """Trim a raw body, strip leading list markers, map empty/'nan' to absent."""
    body = body.strip()
    while True:
        m = _LIST_PREFIX.match(body)
        if not m:
            break
        body = body[m.end():]
    if not body or body == "nan":
        return None
    return body


def extract_sections(
    raw_text: str,
    headers: HeaderMap | None = None,
    report_id: str = "report",
) -> Report:
    """Split normalized report text into its recognized sections.

    Each section body runs from its header alias to the next recognized header
    or end of text.  The first occurrence of a section wins; text under a
    repeated header is dropped rather than merged.  Raises
    :class:`NoSectionsFound` when no alias matches at all.
    """
    headers = headers or DEFAULT_HEADER_MAP
    matches = list(headers.pattern().finditer(raw_text))
    if not matches:
        raise NoSectionsFound("no recognized section header in report text")
    bodies: dict[str, str | None] = {}
    for i, m in enumerate(matches):
        section = headers.section_for(m.group(1))
        if section in bodies:
            continue
        end = matches[i + 1].start() if i + 1 < len(matches) else len(raw_text)
        bodies[section] = _clean_body(raw_text[m.end():end])
    return Report(
        id=report_id,
        raw_text=raw_text,
        examination=bodies.get("examination"),
        indication=bodies.get("indication"),
        findings=bodies.get("findings"),
        impression=bodies.get("impression"),
        source=Source.RULE_EXTRACTED,
    )


def reassemble(report: Report, headers: HeaderMap | None = None) -> str:
    """Render present sections back to header-prefixed text, one per line."""
    headers = headers or DEFAULT_HEADER_MAP
    lines = []
    for section, body in report.present_sections().items():
        lines.append(f"{headers.primary_alias(section)}: {body}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# LLM structuring exchange


@dataclass(frozen=True)
class PromptPayload:
    """A ready-to-send chat exchange plus the JSON shape the reply must take."""

    system: str
    user: str
    expected_schema: Mapping[str, Any]


STRUCTURING_SYSTEM = (
    "You are an expert medical assistant AI capable of modifying clinical documents "
    "to user specifications. You make minimal changes to the original document to "
    "satisfy user requests. You never add information that is not already directly "
    "stated in the original document."
)

STRUCTURING_INSTRUCTIONS = (
    "Extract four sections from the input radiology report: 'Examination', "
    "'Indication', 'Findings' and 'Impression'. Leave an extracted section as null "
    "if it does not exist in the original report. The output should be in JSON "
    "format. An Indication section can refer to the History, Indication or Reason "
    "for Study sections in the original report. Remove any information not directly "
    "observable from the current imaging study. For instance, remove any patient "
    "demographic data, past medical history, or comparison to prior images or "
    "studies. The generated 'Findings' and 'Impression' sections should not "
    "reference any changes based on prior images, studies, or external knowledge "
    "about the patient. Rewrite such comparisons as a status observation based only "
    "on the current image or study. Remember to remove any numbering or bullets."
)

_EXAMPLE_INPUT = (
    "EXAMINATION: XR CHEST AP PORTABLE\n"
    "INDICATION: Small right apical pneumothorax after lung biopsy.\n"
    "FINDINGS: Single portable view of the chest was obtained. Copared with 10:42 "
    "AM. The small right apical pneumothorax has decreased slightly in size, the "
    "improvement best appreciated laterally where it now measures 10 mm compared to "
    "14 mm before. At the lung apex it now measures 1.6 and compared to 2.1 cm "
    "previously. A subtle right apical pulmonary contusion is grossly stable. Minor "
    "chest wall emphysema along the right exilla has not changed significant delay. "
    "There is no metastatic shift. No pleural effusion is evident."
)

_EXAMPLE_OUTPUT = (
    '{"EXAMINATION": "XR CHEST AP PORTABLE.",\n'
    '"INDICATION": "Small right apical pneumothorax after lung biopsy.",\n'
    '"FINDINGS": "Single portable view of the chest was obtained. The small right '
    "apical pneumothorax measures 10mm. At the lung apex it measures 1.6cm. A "
    "subtle right apical pulmonary contusion is grossly stable. Minor chest wall "
    "emphysema is noted along the right exilla. There is no metastatic shift. No "
    'pleural effusion is evident.",\n'
    '"IMPRESSION": null}'
)

# (input report, expected JSON reply) pairs embedded in the prompt.
DEFAULT_STRUCTURING_EXAMPLES: tuple[tuple[str, str], ...] = ((_EXAMPLE_INPUT, _EXAMPLE_OUTPUT),)

_SECTION_KEYS = ("EXAMINATION", "INDICATION", "FINDINGS", "IMPRESSION")

STRUCTURING_SCHEMA: Mapping[str, str] = {key: "string or null" for key in _SECTION_KEYS}


def build_structuring_prompt(
    raw_text: str,
    examples: Sequence[tuple[str, str]] | None = None,
) -> PromptPayload:
    """Assemble the restructuring exchange for one raw report.

    ``examples`` are (input report, expected JSON output) pairs shown to the
    model before the real input; the bundled default contains one worked pair.
    """
    if examples is None:
        examples = DEFAULT_STRUCTURING_EXAMPLES
    if not examples:
        raise ValueError("at least one worked example is required")
    if not raw_text.strip():
        raise ValueError("raw_text must be nonempty")
    parts = [STRUCTURING_INSTRUCTIONS, "", "Examples of inputs and expected outputs:"]
    for inp, out in examples:
        parts += ["", "INPUT:", inp, "", "OUTPUT:", out]
    parts += ["", "INPUT:", raw_text, "", "OUTPUT:"]
    return PromptPayload(
        system=STRUCTURING_SYSTEM,
        user="\n".join(parts),
        expected_schema=dict(STRUCTURING_SCHEMA),
    )


_FENCE = re.compile(r"^```[a-zA-Z0-9_-]*\n(.*)\n```$", re.DOTALL)


def strip_code_fence(text: str) -> str:
    """Remove a single surrounding markdown code fence, if present."""
    text = text.strip()
    m = _FENCE.match(text)
    return m.group(1).strip() if m else text


def parse_structuring_response(text: str, report_id: str = "report") -> Report:
    """Parse the model's JSON reply into a Report.

    Tolerates one fenced code block around the JSON; anything else malformed
    (bad JSON, missing keys, wrong value types) raises
    :class:`~radeval.core.MalformedResponse` so the driver can retry.
    """
    body = strip_code_fence(text)
    try:
        obj = json.loads(body)
    except json.JSONDecodeError as exc:
        raise MalformedResponse(f"response is not valid JSON: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise MalformedResponse("response must be a JSON object")
    missing = [k for k in _SECTION_KEYS if k not in obj]
    if missing:
        raise MalformedResponse(f"response missing keys: {missing!r}")
    sections: dict[str, str | None] = {}
    for key in _SECTION_KEYS:
        value = obj[key]
        if value is None:
            sections[key] = None
        elif isinstance(value, str):
            cleaned = value.strip()
            sections[key] = cleaned if cleaned and cleaned != "nan" else None
        else:
            raise MalformedResponse(f"key {key} must be a string or null, got {type(value).__name__}")
    return Report(
        id=report_id,
        raw_text=text,
        examination=sections["EXAMINATION"],
        indication=sections["INDICATION"],
        findings=sections["FINDINGS"],
        impression=sections["IMPRESSION"],
        source=Source.GPT_STRUCTURED,
    )
