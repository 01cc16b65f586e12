"""Deterministic synthesis of findings text from condition label vectors.

Every non-Blank condition renders one template sentence; the template picked
for a condition depends only on (seed, condition), so adding or removing other
conditions never perturbs the choice.  Three conditions route to dedicated
template banks instead of the generic ones: global normality ("No Finding"
Positive), absent support devices, and the catch-all pleural abnormalities.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from .core import CONDITIONS, LabelVector, Report, Source, Status

__all__ = [
    "TemplateBank",
    "DEFAULT_TEMPLATE_BANK",
    "render_finding",
    "synthesize_report",
    "template_index",
]

_SLOT = "<condition>"

# Generic banks keyed by status; one <condition> slot each.
_POSITIVE = (
    "The radiograph reveals evidence of <condition>.",
    "The radiograph demonstrates areas consistent with <condition>.",
    "There are findings suggestive of <condition>.",
    "There is presence of <condition>.",
    "There is a positive finding of <condition>.",
    "The radiographic examination of the chest reveals the presence of <condition>.",
    "There is evidence of <condition>.",
    "<condition> is present.",
)

_NEGATIVE = (
    "No evidence of <condition> is observed.",
    "<condition> is not identified.",
    "The radiograph does not show any signs of <condition>.",
    "There is no indications of <condition> in the radiograph.",
    "No <condition> is identified in the examined region.",
    "No signs of <condition> is observed.",
    "The image does not conclusively indicate <condition>.",
)

_UNCERTAIN = (
    "There is uncertainty regarding <condition>.",
    "The presence of <condition> is uncertain based on the current examination.",
    "The image shows uncertainty in <condition>.",
)

# Special banks; fixed sentences with no slot.
_NO_FINDINGS = (
    "The radiographic examination of the chest reveals no significant abnormalities "
    "or pathologies.",
    "The radiographic examination of the patient does not reveal any significant "
    "abnormal findings.",
)

_NO_SUPPORT_DEVICES = (
    "There is no evidence of any support devices in the chest area.",
    "There are no support devices seen in the current study.",
    "There are no support devices in place.",
)

_PLEURAL_OTHER_POSITIVE = (
    "There are some pleural abnormalities that do not fit into the common categories "
    "of pleural diseases.",
    "Other pleural abnormalities are also observed.",
)

_PLEURAL_OTHER_NEGATIVE = (
    "No other pleural abnormalities were detected in the radiograph.",
    "There are no findings related to other pleural abnormalities.",
)

_PLEURAL_OTHER_UNCERTAIN = (
    "There are ambiguous findings related to the pleura.",
    "There is no visible pleural abnormality, although the image does not completely "
    "exclude all potential pleural conditions.",
)


@dataclass(frozen=True)
class TemplateBank:
    """Template sentences grouped by status plus the three special banks.

    Generic templates must contain exactly one ``<condition>`` slot; special
    bank sentences must contain none.  ``support_devices_uncertain`` is an
    optional override; when empty, uncertain support devices reuse the generic
    Uncertain bank.
    """

    positive: tuple[str, ...] = _POSITIVE
    negative: tuple[str, ...] = _NEGATIVE
    uncertain: tuple[str, ...] = _UNCERTAIN
    no_findings: tuple[str, ...] = _NO_FINDINGS
    no_support_devices: tuple[str, ...] = _NO_SUPPORT_DEVICES
    pleural_other_positive: tuple[str, ...] = _PLEURAL_OTHER_POSITIVE
    pleural_other_negative: tuple[str, ...] = _PLEURAL_OTHER_NEGATIVE
    pleural_other_uncertain: tuple[str, ...] = _PLEURAL_OTHER_UNCERTAIN
    support_devices_uncertain: tuple[str, ...] = ()

    def __post_init__(self):
        for name in ("positive", "negative", "uncertain"):
            bank = getattr(self, name)
            if not bank:
                raise ValueError(f"bank {name} must be nonempty")
            for t in bank:
                if t.count(_SLOT) != 1:
                    raise ValueError(f"generic template needs exactly one slot: {t!r}")
        for name in (
            "no_findings",
            "no_support_devices",
            "pleural_other_positive",
            "pleural_other_negative",
            "pleural_other_uncertain",
        ):
            bank = getattr(self, name)
            if not bank:
                raise ValueError(f"bank {name} must be nonempty")
            for t in bank:
                if _SLOT in t:
                    raise ValueError(f"special template must not have a slot: {t!r}")
        for t in self.support_devices_uncertain:
            if _SLOT in t:
                raise ValueError(f"special template must not have a slot: {t!r}")

    def generic(self, status: Status) -> tuple[str, ...]:
        if status is Status.POSITIVE:
            return self.positive
        if status is Status.NEGATIVE:
            return self.negative
        if status is Status.UNCERTAIN:
            return self.uncertain
        raise ValueError(f"no templates for status {status.value}")

    @classmethod
    def from_json(cls, path: str | Path) -> "TemplateBank":
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValueError("template bank file must be a JSON object")
        kwargs = {k: tuple(str(t) for t in v) for k, v in raw.items()}
        return cls(**kwargs)

    def to_dict(self) -> dict[str, list[str]]:
        return {
            "positive": list(self.positive),
            "negative": list(self.negative),
            "uncertain": list(self.uncertain),
            "no_findings": list(self.no_findings),
            "no_support_devices": list(self.no_support_devices),
            "pleural_other_positive": list(self.pleural_other_positive),
            "pleural_other_negative": list(self.pleural_other_negative),
            "pleural_other_uncertain": list(self.pleural_other_uncertain),
            "support_devices_uncertain": list(self.support_devices_uncertain),
        }


DEFAULT_TEMPLATE_BANK = TemplateBank()


def _substitute(template: str, condition: str) -> str:
    pos = template.index(_SLOT)
    text = template.replace(_SLOT, condition)
    if pos == 0:
        text = text[0].upper() + text[1:]
    return text


def render_finding(
    condition: str,
    status: Status,
    template_index: int,
    bank: TemplateBank | None = None,
) -> str:
    """Render one generic-bank sentence for a condition.

    The condition name is substituted as given, with sentence-initial
    capitalization applied when the slot opens the template.
    """
    bank = bank or DEFAULT_TEMPLATE_BANK
    templates = bank.generic(status)
    if not 0 <= template_index < len(templates):
        raise IndexError(
            f"template index {template_index} out of range for {status.value} "
            f"bank of size {len(templates)}"
        )
    return _substitute(templates[template_index], condition)


def template_index(seed: int, condition: str, bank_size: int) -> int:
    """Deterministic template choice; a pure function of (seed, condition)."""
    if bank_size < 1:
        raise ValueError("bank_size must be >= 1")
    rng = random.Random(f"{seed}:{condition}")
    return rng.randrange(bank_size)


def _routed_bank(condition: str, status: Status, bank: TemplateBank) -> tuple[str, ...] | None:
    """Pick the template list for a condition/status; None means render nothing."""
    if condition == "No Finding":
        if status is Status.POSITIVE:
            return bank.no_findings
        return None
    if condition == "Support Devices":
        if status is Status.NEGATIVE:
            return bank.no_support_devices
        if status is Status.UNCERTAIN and bank.support_devices_uncertain:
            return bank.support_devices_uncertain
        return bank.generic(status)
    if condition == "Pleural Other":
        if status is Status.POSITIVE:
            return bank.pleural_other_positive
        if status is Status.NEGATIVE:
            return bank.pleural_other_negative
        return bank.pleural_other_uncertain
    return bank.generic(status)


def synthesize_report(
    labels: LabelVector,
    seed: int,
    bank: TemplateBank | None = None,
    report_id: str | None = None,
) -> Report:
    """Render a label vector to synthetic findings text.

    Conditions render in canonical ontology order, one sentence per non-Blank
    status.  An all-Blank vector yields an empty findings string, which fails
    downstream validation; callers should treat that as "no report".
    """
    bank = bank or DEFAULT_TEMPLATE_BANK
    sentences: list[str] = []
    for condition in CONDITIONS:
        status = labels[condition]
        if status is Status.BLANK:
            continue
        templates = _routed_bank(condition, status, bank)
        if templates is None:
            continue
        idx = template_index(seed, condition, len(templates))
        template = templates[idx]
        if _SLOT in template:
            sentences.append(_substitute(template, condition.lower()))
        else:
            sentences.append(template)
    findings = " ".join(sentences)
    return Report(
        id=report_id or f"synthetic-{seed}",
        raw_text=findings,
        findings=findings,
        source=Source.SYNTHETIC,
    )
